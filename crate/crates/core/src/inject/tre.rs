use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::Vocab;
use crate::error::{Error, Result};
use crate::tensorcore::{Bound, ParamId, Params, Tape, Tensor, Var};

use super::bioe::{segments, BioeSample, Tag, LEVELS};
use super::model::{TokenModel, TokenModelConfig};

/// Layers (1-based) that carry injection needles and the weight of each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    pub positions: Vec<usize>,
    pub portions: Vec<f64>,
}

impl InjectionConfig {
    /// Equal portions over `positions`.
    pub fn uniform(positions: Vec<usize>) -> Self {
        let w = 1.0 / positions.len().max(1) as f64;
        let portions = vec![w; positions.len()];
        Self {
            positions,
            portions,
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let n = self.positions.len();
        if n == 0 || n > LEVELS {
            return Err(Error::invalid(format!(
                "need 1 to {LEVELS} needle positions, got {n}"
            )));
        }
        if self.portions.len() != n {
            return Err(Error::invalid(format!(
                "{n} positions but {} portions",
                self.portions.len()
            )));
        }
        if self.positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("positions must be strictly increasing"));
        }
        if let Some(&p) = self.positions.iter().find(|&&p| p == 0 || p > depth) {
            return Err(Error::invalid(format!(
                "position {p} outside layers 1..={depth}"
            )));
        }
        if self.portions.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("portions must be non-negative"));
        }
        let sum: f64 = self.portions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("portions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Index into `positions` serving annotation level `level`.
    pub fn slot_of(&self, level: usize) -> usize {
        level % self.positions.len()
    }

    /// Levels assigned to position slot `j`.
    pub fn levels_at(&self, j: usize) -> Vec<usize> {
        (0..LEVELS).filter(|&l| self.slot_of(l) == j).collect()
    }
}

/// Mean token cross-entropy of `softmax(Z W + b)` against `gold`.
pub fn tre_needle_loss(
    z: &Tensor<f64>,
    gold: &[Tag],
    w: &Tensor<f64>,
    b: &Tensor<f64>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let wv = tape.constant(w.clone());
    let bv = tape.constant(b.clone());
    let l = needle_loss_var(&mut tape, zv, gold, wv, bv)?;
    Ok(tape.value(l).item())
}

pub(crate) fn needle_loss_var(
    tape: &mut Tape<f64>,
    z: Var,
    gold: &[Tag],
    w: Var,
    b: Var,
) -> Result<Var> {
    if tape.shape(w).get(1) != Some(&Tag::COUNT) {
        return Err(Error::shape(format!(
            "needle weight {:?}, expected d x {}",
            tape.shape(w),
            Tag::COUNT
        )));
    }
    if tape.shape(z)[0] != gold.len() {
        return Err(Error::shape(format!(
            "{} states for {} tags",
            tape.shape(z)[0],
            gold.len()
        )));
    }
    let logits = tape.matmul(z, w)?;
    let logits = tape.add_bias(logits, b)?;
    let targets: Vec<usize> = gold.iter().map(|t| t.index()).collect();
    tape.ce_rows(logits, &targets)
}

/// Per-level classifier heads; never part of a model checkpoint.
#[derive(Debug, Clone)]
pub struct Needles {
    pub params: Params<f64>,
    pub w: [ParamId; LEVELS],
    pub b: [ParamId; LEVELS],
}

impl Needles {
    pub fn new(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = Params::new();
        let std = 1.0 / (d as f64).sqrt();
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..LEVELS {
            w.push(params.add(
                format!("needle{l}.W"),
                Tensor::randn(&[d, Tag::COUNT], std, rng),
            ));
            b.push(params.add(format!("needle{l}.b"), Tensor::zeros(&[Tag::COUNT])));
        }
        Self {
            params,
            w: w.try_into().expect("LEVELS entries"),
            b: b.try_into().expect("LEVELS entries"),
        }
    }
}

/// Total and per-level needle losses of one forward pass.
pub struct TreLosses {
    pub total: Var,
    pub per_level: [Var; LEVELS],
}

fn forward(
    model: &TokenModel,
    mp: &Bound,
    needles: &Needles,
    np: &Bound,
    cfg: &InjectionConfig,
    tape: &mut Tape<f64>,
    sample: &BioeSample,
) -> Result<TreLosses> {
    if sample.len() > model.encoder.max_len {
        return Err(Error::invalid(format!(
            "sample of {} tokens exceeds max_len {}",
            sample.len(),
            model.encoder.max_len
        )));
    }
    let traces = model.encoder.traces(tape, mp, &sample.tokens)?;
    let mut per_level = Vec::with_capacity(LEVELS);
    for l in 0..LEVELS {
        let z = traces[cfg.positions[cfg.slot_of(l)] - 1].output;
        per_level.push(needle_loss_var(
            tape,
            z,
            &sample.tags[l],
            np.var(needles.w[l]),
            np.var(needles.b[l]),
        )?);
    }
    let mut slot_losses = Vec::with_capacity(cfg.positions.len());
    for (j, &w) in cfg.portions.iter().enumerate() {
        let lv: Vec<Var> = cfg.levels_at(j).iter().map(|&l| per_level[l]).collect();
        let s = tape.concat_scalars(&lv)?;
        let s = tape.sum(s);
        slot_losses.push(tape.scale(s, w / lv.len() as f64));
    }
    let all = tape.concat_scalars(&slot_losses)?;
    let total = tape.sum(all);
    Ok(TreLosses {
        total,
        per_level: per_level
            .try_into()
            .map_err(|_| Error::invalid("level count"))?,
    })
}

/// `(total, per-level)` needle losses for one sample.
pub fn tre_losses(
    model: &TokenModel,
    needles: &Needles,
    cfg: &InjectionConfig,
    sample: &BioeSample,
) -> Result<(f64, [f64; LEVELS])> {
    cfg.validate(model.depth())?;
    let mut tape = Tape::new();
    let mp = model.params.bind_frozen(&mut tape);
    let np = needles.params.bind_frozen(&mut tape);
    let l = forward(model, &mp, needles, &np, cfg, &mut tape, sample)?;
    Ok((
        tape.value(l.total).item(),
        l.per_level.map(|v| tape.value(v).item()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TreTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.05,
            seed: 0,
        }
    }
}

/// Trained needles plus the mean total loss per epoch.
#[derive(Debug, Clone)]
pub struct TreOutcome {
    pub needles: Needles,
    pub loss_trace: Vec<f64>,
}

/// Vocabulary over BIOE sample tokens.
pub fn bioe_vocab(data: &[BioeSample]) -> Vocab {
    Vocab::build(
        data.iter()
            .flat_map(|s| s.tokens.iter().map(String::as_str)),
        1,
    )
}

/// Fresh token model sized for `data`.
pub fn tre_model(data: &[BioeSample], cfg: &TokenModelConfig, seed: u64) -> Result<TokenModel> {
    TokenModel::new(bioe_vocab(data), cfg, seed)
}

/// Per-sample gradient descent on the portion-weighted needle loss; every
/// model weight and needle is updated.
pub fn tre_train(
    model: &mut TokenModel,
    cfg: &InjectionConfig,
    data: &[BioeSample],
    tc: &TreTrainConfig,
) -> Result<TreOutcome> {
    cfg.validate(model.depth())?;
    if data.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut needles = Needles::new(model.d(), &mut rng);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(tc.epochs);
    for _ in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let mut tape = Tape::new();
            let mp = model.params.bind(&mut tape);
            let np = needles.params.bind(&mut tape);
            let l = forward(model, &mp, &needles, &np, cfg, &mut tape, &data[i])?;
            total += tape.value(l.total).item();
            let grads = tape.backward(l.total)?;
            model.params.sgd_step(&grads, &mp, tc.lr, None);
            needles.params.sgd_step(&grads, &np, tc.lr, None);
        }
        if !model.params.all_finite() || !needles.params.all_finite() {
            return Err(Error::invalid("injection training diverged"));
        }
        trace.push(total / data.len() as f64);
    }
    Ok(TreOutcome {
        needles,
        loss_trace: trace,
    })
}

/// Arg-max tags per level.
pub fn tre_predict(
    model: &TokenModel,
    needles: &Needles,
    cfg: &InjectionConfig,
    tokens: &[String],
) -> Result<[Vec<Tag>; LEVELS]> {
    cfg.validate(model.depth())?;
    let mut tape = Tape::new();
    let mp = model.params.bind_frozen(&mut tape);
    let np = needles.params.bind_frozen(&mut tape);
    let traces = model.encoder.traces(&mut tape, &mp, tokens)?;
    let mut out: [Vec<Tag>; LEVELS] = Default::default();
    for (l, slot) in out.iter_mut().enumerate() {
        let z = traces[cfg.positions[cfg.slot_of(l)] - 1].output;
        let logits = tape.matmul(z, np.var(needles.w[l]))?;
        let logits = tape.add_bias(logits, np.var(needles.b[l]))?;
        let lv = tape.value(logits);
        *slot = (0..lv.rows())
            .map(|r| {
                let row = lv.row(r);
                let best = (0..row.len()).fold(0, |b, k| if row[k] > row[b] { k } else { b });
                Tag::from_index(best)
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf1 {
    fn from_counts(hit: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 {
            0.0
        } else {
            hit as f64 / predicted as f64
        };
        let recall = if gold == 0 {
            0.0
        } else {
            hit as f64 / gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreMetrics {
    pub token_accuracy: f64,
    /// Exact-span segment scores per level, micro-averaged over samples.
    pub levels: Vec<Prf1>,
    pub overall: Prf1,
}

pub fn tre_evaluate(
    model: &TokenModel,
    needles: &Needles,
    cfg: &InjectionConfig,
    data: &[BioeSample],
) -> Result<TreMetrics> {
    if data.is_empty() {
        return Err(Error::invalid("no evaluation samples"));
    }
    let mut correct = 0usize;
    let mut tokens = 0usize;
    let mut counts = [(0usize, 0usize, 0usize); LEVELS];
    for s in data {
        let pred = tre_predict(model, needles, cfg, &s.tokens)?;
        for l in 0..LEVELS {
            correct += pred[l]
                .iter()
                .zip(&s.tags[l])
                .filter(|(a, b)| a == b)
                .count();
            tokens += s.len();
            let p = segments(&pred[l]);
            let g = s.segments(l);
            counts[l].0 += p.intersection(&g).count();
            counts[l].1 += p.len();
            counts[l].2 += g.len();
        }
    }
    let levels = counts
        .iter()
        .map(|&(h, p, g)| Prf1::from_counts(h, p, g))
        .collect();
    let (h, p, g) = counts
        .iter()
        .fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(TreMetrics {
        token_accuracy: correct as f64 / tokens as f64,
        levels,
        overall: Prf1::from_counts(h, p, g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inject::bioe::{parse_bioe, ANNOTATION_SAMPLE_TSV};
    use crate::tensorcore::grad_check;

    fn sample() -> BioeSample {
        parse_bioe(ANNOTATION_SAMPLE_TSV).unwrap().remove(0)
    }

    #[test]
    fn config_validation() {
        assert!(InjectionConfig::uniform(vec![2, 3, 4]).validate(4).is_ok());
        assert!(InjectionConfig::uniform(vec![3, 2]).validate(4).is_err());
        assert!(InjectionConfig::uniform(vec![0]).validate(4).is_err());
        assert!(InjectionConfig::uniform(vec![5]).validate(4).is_err());
        assert!(InjectionConfig::uniform(vec![1, 2, 3, 4])
            .validate(4)
            .is_err());
        let bad = InjectionConfig {
            positions: vec![1, 2],
            portions: vec![0.5, 0.6],
        };
        assert!(bad.validate(4).is_err());
        let c = InjectionConfig::uniform(vec![3, 4]);
        assert_eq!((c.levels_at(0), c.levels_at(1)), (vec![0, 2], vec![1]));
    }

    #[test]
    fn needle_loss_cases() {
        let n = 3;
        let gold = [Tag::O, Tag::B(super::super::Part::R), Tag::O];
        let z = Tensor::full(&[n, 4], 1.0);
        let w = Tensor::zeros(&[4, Tag::COUNT]);
        let b = Tensor::zeros(&[Tag::COUNT]);
        let l = tre_needle_loss(&z, &gold, &w, &b).unwrap();
        assert!((l - (Tag::COUNT as f64).ln()).abs() < 1e-12);
        // identity states make W rows per-token logits
        let z = Tensor::identity(3);
        let mut wd = vec![0.0; 3 * Tag::COUNT];
        for (i, t) in gold.iter().enumerate() {
            wd[i * Tag::COUNT + t.index()] = 50.0;
        }
        let w = Tensor::matrix(3, Tag::COUNT, wd).unwrap();
        assert!(tre_needle_loss(&z, &gold, &w, &b).unwrap() < 1e-15);
        assert!(tre_needle_loss(&z, &gold[..2], &w, &b).is_err());
    }

    #[test]
    fn needle_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = Tensor::randn(&[5, 4], 1.0, &mut rng);
        let gold: Vec<Tag> = (0..5)
            .map(|i| Tag::from_index((i * 3) % Tag::COUNT))
            .collect();
        let w0 = Tensor::randn(&[4, Tag::COUNT], 0.5, &mut rng);
        let b = Tensor::randn(&[Tag::COUNT], 0.5, &mut rng);
        let err = grad_check(
            |tape, w| {
                let zv = tape.constant(z.clone());
                let bv = tape.constant(b.clone());
                needle_loss_var(tape, zv, &gold, w, bv)
            },
            &w0,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn total_is_portion_weighted() {
        let data = vec![sample()];
        let cfg_m = TokenModelConfig {
            d: 8,
            layers: 4,
            heads: 2,
            max_len: 64,
            positions: true,
        };
        let model = tre_model(&data, &cfg_m, 1).unwrap();
        let needles = Needles::new(8, &mut ChaCha8Rng::seed_from_u64(2));
        let single = InjectionConfig {
            positions: vec![4],
            portions: vec![1.0],
        };
        let (t, lv) = tre_losses(&model, &needles, &single, &data[0]).unwrap();
        assert!((t - lv.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        for portions in [vec![0.5, 0.5], vec![1.0, 0.0]] {
            let cfg = InjectionConfig {
                positions: vec![2, 4],
                portions: portions.clone(),
            };
            let (t, lv) = tre_losses(&model, &needles, &cfg, &data[0]).unwrap();
            let want = portions[0] * (lv[0] + lv[2]) / 2.0 + portions[1] * lv[1];
            assert!((t - want).abs() < 1e-12);
        }
    }

    #[test]
    fn training_runs_and_is_deterministic() {
        let data = vec![sample()];
        let cfg_m = TokenModelConfig {
            d: 8,
            layers: 2,
            heads: 2,
            max_len: 64,
            positions: true,
        };
        let cfg = InjectionConfig::uniform(vec![1, 2]);
        let tc = TreTrainConfig {
            epochs: 5,
            lr: 0.05,
            seed: 4,
        };
        let run = || {
            let mut m = tre_model(&data, &cfg_m, 1).unwrap();
            let out = tre_train(&mut m, &cfg, &data, &tc).unwrap();
            (m.to_bytes(), out.loss_trace)
        };
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!((a, ta.clone()), (b, tb));
        assert!(ta[4] < ta[0]);
        let mut m = tre_model(&data, &cfg_m, 1).unwrap();
        assert!(tre_train(&mut m, &cfg, &[], &tc).is_err());
    }
}
