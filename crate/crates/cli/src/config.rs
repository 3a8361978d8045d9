//! Run configuration: a JSON object of optional keys, overridden by flags.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use slab_core::encoders::CnnConfig;
use slab_core::inject::InjectionConfig;
use slab_core::lexical::Bm25Params;
use slab_core::rankers::{CnnQuery, RankerKind};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Encoder sizes of the published configuration.
    Paper,
    /// Small sizes that train in seconds on one core.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridWord {
    Grid,
}

/// A fixed mixing weight, or `"grid"` to search it on validation queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha {
    Value(f64),
    Grid(GridWord),
}

/// Every key is optional; commands fill in their own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Lexical candidates per query during training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Lexical candidates per query at prediction time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_predict: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Alpha>,
    /// Negatives per training step.
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub portions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<RankerKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cnn_query: Option<CnnQuery>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neg_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    /// Rows of a projection export.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    /// Ranking cut-off for macro-F2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(src)
            .map_err(|e| invalid(format!("config is not valid JSON: {e}")))?;
        if !value.is_object() {
            return Err(invalid("config must be a JSON object"));
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flags take precedence over file keys.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        preset: Option<Preset>,
    ) -> Result<Self, CliError> {
        if seed.is_some() {
            self.seed = seed;
        }
        if preset.is_some() {
            self.preset = preset;
        }
        self.validate()?;
        Ok(self)
    }

    /// Range checks that need no input data.
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(invalid(format!("`{name}` must be positive, got {x}")))
            }
            _ => Ok(()),
        };
        let at_least_one = |name: &str, v: Option<usize>| match v {
            Some(0) => Err(invalid(format!("`{name}` must be at least 1"))),
            _ => Ok(()),
        };
        positive("k1", self.k1)?;
        positive("lr", self.lr)?;
        if let Some(b) = self.b {
            if !(0.0..=1.0).contains(&b) {
                return Err(invalid(format!("`b` must lie in [0, 1], got {b}")));
            }
        }
        if let Some(Alpha::Value(a)) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(invalid(format!(
                    "`alpha` must lie in [0, 1] or be \"grid\", got {a}"
                )));
            }
        }
        if let Some(r) = self.neg_ratio {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid(format!(
                    "`neg_ratio` must be non-negative, got {r}"
                )));
            }
        }
        at_least_one("n_train", self.n_train)?;
        at_least_one("n_predict", self.n_predict)?;
        at_least_one("epochs", self.epochs)?;
        at_least_one("steps", self.steps)?;
        at_least_one("d", self.d)?;
        at_least_one("heads", self.heads)?;
        at_least_one("top_k", self.top_k)?;
        at_least_one("cutoff", self.cutoff)?;
        if let (Some(p), Some(w)) = (&self.positions, &self.portions) {
            if p.len() != w.len() {
                return Err(invalid(format!(
                    "{} positions but {} portions",
                    p.len(),
                    w.len()
                )));
            }
        }
        if self.portions.is_some() && self.positions.is_none() {
            return Err(invalid("`portions` needs `positions`"));
        }
        Ok(())
    }

    /// Seed of a randomized command; absent seeds are an error.
    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| {
            invalid("this command is randomized: pass --seed or set `seed` in the config")
        })
    }

    pub fn cnn(&self) -> CnnConfig {
        match self.preset.unwrap_or(Preset::Desk) {
            Preset::Paper => CnnConfig::paper(),
            Preset::Desk => CnnConfig::desk(),
        }
    }

    pub fn bm25(&self) -> Bm25Params {
        let d = Bm25Params::default();
        Bm25Params {
            k1: self.k1.unwrap_or(d.k1),
            b: self.b.unwrap_or(d.b),
        }
    }

    /// Needle layout, defaulting to one needle per level on the last
    /// `min(3, depth)` layers.
    pub fn injection(&self, depth: usize) -> InjectionConfig {
        let positions = self
            .positions
            .clone()
            .unwrap_or_else(|| (depth.saturating_sub(2).max(1)..=depth).collect());
        match &self.portions {
            Some(w) => InjectionConfig {
                positions,
                portions: w.clone(),
            },
            None => InjectionConfig::uniform(positions),
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let src = fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg = RunConfig::parse("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.cnn(), CnnConfig::desk());
        assert_eq!(cfg.bm25(), Bm25Params::default());
    }

    #[test]
    fn paper_preset_sizes() {
        let cfg = RunConfig::parse(r#"{"preset":"paper"}"#).unwrap();
        let c = cfg.cnn();
        assert_eq!(
            (c.embedding, c.filters, c.attn_query, c.dropout),
            (512, 512, 200, 0.2)
        );
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse(r#"{"epohcs":3}"#).unwrap_err();
        assert!(err.to_string().contains("epohcs"), "{err}");
        assert!(RunConfig::parse("[1]").is_err());
    }

    #[test]
    fn alpha_forms() {
        assert_eq!(
            RunConfig::parse(r#"{"alpha":"grid"}"#).unwrap().alpha,
            Some(Alpha::Grid(GridWord::Grid))
        );
        assert_eq!(
            RunConfig::parse(r#"{"alpha":0.3}"#).unwrap().alpha,
            Some(Alpha::Value(0.3))
        );
        assert!(RunConfig::parse(r#"{"alpha":1.5}"#).is_err());
        assert!(RunConfig::parse(r#"{"alpha":"best"}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let cfg = RunConfig::parse(r#"{"seed":1,"preset":"paper"}"#)
            .unwrap()
            .with_overrides(Some(9), Some(Preset::Desk))
            .unwrap();
        assert_eq!((cfg.seed, cfg.preset), (Some(9), Some(Preset::Desk)));
        let kept = RunConfig::parse(r#"{"seed":1}"#)
            .unwrap()
            .with_overrides(None, None)
            .unwrap();
        assert_eq!(kept.seed, Some(1));
    }

    #[test]
    fn range_checks() {
        for bad in [
            r#"{"b":2}"#,
            r#"{"lr":0}"#,
            r#"{"n_predict":0}"#,
            r#"{"portions":[1]}"#,
            r#"{"positions":[1,2],"portions":[1]}"#,
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let src = r#"{"seed":3,"K":2,"alpha":"grid","positions":[2,3,4]}"#;
        let cfg = RunConfig::parse(src).unwrap();
        let echoed = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&echoed).unwrap(), cfg);
        assert!(echoed.contains("\"K\":2"));
    }

    #[test]
    fn default_needles_sit_on_the_last_layers() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.injection(4).positions, vec![2, 3, 4]);
        assert_eq!(cfg.injection(1).positions, vec![1]);
    }
}
