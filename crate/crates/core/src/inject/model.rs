use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{EmbeddingTable, OovPolicy, ParaformerLite, Vocab};
use crate::error::{Error, Result};
use crate::rankers::{read_header, CHECKPOINT_MAGIC};
use crate::tensorcore::{Params, Tape, Tensor};

/// Kind byte of token-model checkpoints.
pub const TOKEN_MODEL_KIND: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenModelConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub positions: bool,
}

impl Default for TokenModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            layers: 4,
            heads: 2,
            max_len: 64,
            positions: true,
        }
    }
}

/// A stack of self-attention layers over token embeddings.
#[derive(Debug, Clone)]
pub struct TokenModel {
    pub params: Params<f64>,
    pub encoder: ParaformerLite,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TokenModelSpec {
    config: TokenModelConfig,
    /// Layers attached after construction, as head counts.
    attached: Vec<usize>,
    vocab: Vocab,
}

impl TokenModel {
    pub fn new(vocab: Vocab, cfg: &TokenModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut table = EmbeddingTable::random(vocab, cfg.d, 1.0, &mut rng)?;
        table.oov_policy = OovPolicy::ZeroVector;
        let encoder = ParaformerLite::new(
            &mut params,
            "body",
            table,
            cfg.layers,
            cfg.heads,
            cfg.max_len,
            cfg.positions,
            &mut rng,
        )?;
        Ok(Self { params, encoder })
    }

    pub fn d(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn depth(&self) -> usize {
        self.encoder.layers.len()
    }

    /// Final-layer states (`M x d`).
    pub fn hidden<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Tensor<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let h = self.encoder.hidden(&mut tape, &p, tokens)?;
        Ok(tape.value(h).clone())
    }

    /// Row-stochastic attention matrices, `[layer][head]`.
    pub fn attention_report<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Vec<Tensor<f64>>>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let traces = self.encoder.traces(&mut tape, &p, tokens)?;
        Ok(traces
            .iter()
            .map(|t| t.attention.iter().map(|&a| tape.value(a).clone()).collect())
            .collect())
    }

    fn config(&self, base_layers: usize) -> TokenModelConfig {
        TokenModelConfig {
            d: self.d(),
            layers: base_layers,
            heads: self.encoder.layers.first().map_or(1, |l| l.n_heads),
            max_len: self.encoder.max_len,
            positions: self.encoder.positions.is_some(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        out.push(TOKEN_MODEL_KIND);
        self.params.write_to(&mut out).expect("in-memory write");
        out
    }

    /// Writes `model.bin` and `model.json`; `base_layers` of the layers are
    /// regular, the rest are attached heads.
    pub fn save(&self, dir: impl AsRef<Path>, base_layers: usize) -> Result<()> {
        if base_layers > self.depth() {
            return Err(Error::invalid("more base layers than layers"));
        }
        let spec = TokenModelSpec {
            config: self.config(base_layers),
            attached: self.encoder.layers[base_layers..]
                .iter()
                .map(|l| l.n_heads)
                .collect(),
            vocab: self.encoder.embedder.vocab.clone(),
        };
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.bin"), self.to_bytes())?;
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&spec)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let spec: TokenModelSpec =
            serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let mut model = Self::new(spec.vocab, &spec.config, 0)?;
        for &h in &spec.attached {
            let name = format!("hydra{}", model.depth());
            model.attach_zero_layer(&name, h)?;
        }
        let bytes = fs::read(dir.join("model.bin"))?;
        let mut r = bytes.as_slice();
        read_header(&mut r, TOKEN_MODEL_KIND)?;
        model.params.read_into(&mut r)?;
        Ok(model)
    }

    /// Appends a layer with all-zero weights.
    pub(crate) fn attach_zero_layer(&mut self, name: &str, n_heads: usize) -> Result<()> {
        let d = self.d();
        let z = || Tensor::zeros(&[d, d]);
        let layer = crate::encoders::SelfAttentionLayer::from_tensors(
            &mut self.params,
            name,
            n_heads,
            [z(), z(), z(), z()],
        )?;
        self.encoder.layers.push(layer);
        Ok(())
    }
}
