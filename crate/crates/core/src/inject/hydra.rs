use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::SelfAttentionLayer;
use crate::error::{Error, Result};
use crate::tensorcore::{Tape, Tensor, Var};

use super::model::TokenModel;

/// Binary `n x n` dependency-of-interest matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SdoiMatrix {
    entries: Tensor<f64>,
}

impl SdoiMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape("SDOI matrix must be square and non-empty"));
        }
        if rows.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("SDOI entries must be 0 or 1"));
        }
        Ok(Self {
            entries: Tensor::from_rows(rows)?,
        })
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn tensor(&self) -> &Tensor<f64> {
        &self.entries
    }
}

/// One SDOI record: tokens and their target matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SdoiRecord {
    pub tokens: Vec<String>,
    pub matrix: SdoiMatrix,
}

#[derive(Deserialize)]
struct RawRecord {
    tokens: Vec<String>,
    matrix: Vec<Vec<f64>>,
}

/// JSONL `{"tokens":[...],"matrix":[[0,1,...],...]}`.
pub fn parse_sdoi(src: &str) -> Result<Vec<SdoiRecord>> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: i + 1, msg };
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| perr(e.to_string()))?;
        let matrix = SdoiMatrix::new(&raw.matrix).map_err(|e| perr(e.to_string()))?;
        if matrix.n() != raw.tokens.len() {
            return Err(perr(format!(
                "{} tokens but a {}x{} matrix",
                raw.tokens.len(),
                matrix.n(),
                matrix.n()
            )));
        }
        out.push(SdoiRecord {
            tokens: raw.tokens,
            matrix,
        });
    }
    Ok(out)
}

pub fn load_sdoi(path: impl AsRef<Path>) -> Result<Vec<SdoiRecord>> {
    parse_sdoi(&fs::read_to_string(path)?)
}

/// Query and key projections of one pretraining head (`d x d_head`).
#[derive(Debug, Clone, PartialEq)]
pub struct HydraHead {
    pub wq: Tensor<f64>,
    pub wk: Tensor<f64>,
}

impl HydraHead {
    pub fn new(wq: Tensor<f64>, wk: Tensor<f64>) -> Result<Self> {
        if wq.rank() != 2 || wq.shape() != wk.shape() {
            return Err(Error::shape(format!(
                "head shapes {:?} and {:?}",
                wq.shape(),
                wk.shape()
            )));
        }
        Ok(Self { wq, wk })
    }

    /// `n_heads` heads splitting `d` evenly.
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, rng: &mut R) -> Result<Vec<Self>> {
        if n_heads == 0 || !d.is_multiple_of(n_heads) {
            return Err(Error::invalid(format!(
                "{d} is not divisible by {n_heads} heads"
            )));
        }
        let dh = d / n_heads;
        let std = 1.0 / (d as f64).sqrt();
        Ok((0..n_heads)
            .map(|_| Self {
                wq: Tensor::randn(&[d, dh], std, rng),
                wk: Tensor::randn(&[d, dh], std, rng),
            })
            .collect())
    }

    pub fn d(&self) -> usize {
        self.wq.rows()
    }

    pub fn d_head(&self) -> usize {
        self.wq.cols()
    }

    /// `(H W_q)(H W_k)^T / sqrt(d_head)`, with no softmax.
    pub fn scores(&self, h: &Tensor<f64>) -> Result<Tensor<f64>> {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone());
        let wq = tape.constant(self.wq.clone());
        let wk = tape.constant(self.wk.clone());
        let m = head_scores(&mut tape, hv, wq, wk)?;
        Ok(tape.value(m).clone())
    }
}

/// Pre-softmax head score matrix on the tape.
pub fn head_scores(tape: &mut Tape<f64>, h: Var, wq: Var, wk: Var) -> Result<Var> {
    let dh = tape.shape(wq)[1];
    let q = tape.matmul(h, wq)?;
    let k = tape.matmul(h, wk)?;
    let kt = tape.transpose(k)?;
    let m = tape.matmul(q, kt)?;
    Ok(tape.scale(m, 1.0 / (dh as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydraConfig {
    pub steps: usize,
    pub lr: f64,
}

impl Default for HydraConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.8,
        }
    }
}

/// Full-batch gradient descent on the mean (over samples and heads)
/// element-wise MSE between each head's score matrix and its target.
/// Only the head projections change. Returns the loss before every step
/// followed by the final loss.
pub fn hydra_pretrain(
    states: &[Tensor<f64>],
    targets: &[SdoiMatrix],
    heads: &mut [HydraHead],
    cfg: &HydraConfig,
) -> Result<Vec<f64>> {
    if states.len() != targets.len() || states.is_empty() {
        return Err(Error::shape(format!(
            "{} hidden-state samples for {} targets",
            states.len(),
            targets.len()
        )));
    }
    if heads.is_empty() {
        return Err(Error::invalid("no heads to pretrain"));
    }
    for (h, t) in states.iter().zip(targets) {
        if h.rank() != 2 || h.rows() != t.n() {
            return Err(Error::shape(format!(
                "states {:?} for a {}x{} target",
                h.shape(),
                t.n(),
                t.n()
            )));
        }
        for head in heads.iter() {
            if head.d() != h.cols() {
                return Err(Error::shape(format!(
                    "head input dim {} vs states {:?}",
                    head.d(),
                    h.shape()
                )));
            }
        }
    }
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let scale = 1.0 / (states.len() * heads.len()) as f64;
    for step in 0..=cfg.steps {
        let mut tape = Tape::new();
        let vars: Vec<(Var, Var)> = heads
            .iter()
            .map(|h| (tape.leaf(h.wq.clone()), tape.leaf(h.wk.clone())))
            .collect();
        let mut terms = Vec::new();
        for (h, t) in states.iter().zip(targets) {
            let hv = tape.constant(h.clone());
            let tv = tape.constant(t.tensor().clone());
            for &(wq, wk) in &vars {
                let m = head_scores(&mut tape, hv, wq, wk)?;
                terms.push(tape.mse(m, tv)?);
            }
        }
        let sum = tape.concat_scalars(&terms)?;
        let sum = tape.sum(sum);
        let loss = tape.scale(sum, scale);
        trace.push(tape.value(loss).item());
        if step == cfg.steps {
            break;
        }
        let grads = tape.backward(loss)?;
        for (head, &(wq, wk)) in heads.iter_mut().zip(&vars) {
            head.wq.sgd_update(&grads.get(wq), cfg.lr);
            head.wk.sgd_update(&grads.get(wk), cfg.lr);
        }
    }
    if heads
        .iter()
        .any(|h| !h.wq.is_all_finite() || !h.wk.is_all_finite())
    {
        return Err(Error::invalid("head pretraining diverged"));
    }
    Ok(trace)
}

fn concat_cols(parts: &[&Tensor<f64>]) -> Result<Tensor<f64>> {
    let rows = parts[0].rows();
    let mut data = Vec::new();
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row(r));
        }
    }
    Tensor::matrix(rows, parts.iter().map(|p| p.cols()).sum(), data)
}

/// Appends one layer carrying the pretrained query/key heads, with zero
/// value and output projections so the residual path reproduces the body.
pub fn hydra_attach(body: &TokenModel, heads: &[HydraHead]) -> Result<TokenModel> {
    let d = body.d();
    if heads.is_empty() {
        return Err(Error::invalid("no heads to attach"));
    }
    let dh = heads[0].d_head();
    if heads.iter().any(|h| h.d() != d || h.d_head() != dh) || dh * heads.len() != d {
        return Err(Error::shape(format!(
            "{} heads of width {dh} do not tile hidden size {d}",
            heads.len()
        )));
    }
    let wq = concat_cols(&heads.iter().map(|h| &h.wq).collect::<Vec<_>>())?;
    let wk = concat_cols(&heads.iter().map(|h| &h.wk).collect::<Vec<_>>())?;
    let mut out = body.clone();
    let name = format!("hydra{}", out.depth());
    let layer = SelfAttentionLayer::from_tensors(
        &mut out.params,
        &name,
        heads.len(),
        [wq, wk, Tensor::zeros(&[d, d]), Tensor::zeros(&[d, d])],
    )?;
    out.encoder.layers.push(layer);
    Ok(out)
}

/// Removes the last layer.
pub fn hydra_detach(model: &TokenModel) -> Result<TokenModel> {
    let mut out = model.clone();
    let last = out
        .encoder
        .layers
        .pop()
        .ok_or_else(|| Error::invalid("model has no layer to detach"))?;
    out.params.truncate(last.wq);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::Vocab;
    use crate::inject::TokenModelConfig;
    use crate::tensorcore::kernels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn body() -> TokenModel {
        let vocab =
            Vocab::new(["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect()).unwrap();
        let cfg = TokenModelConfig {
            d: 8,
            layers: 2,
            heads: 2,
            max_len: 8,
            positions: true,
        };
        TokenModel::new(vocab, &cfg, 3).unwrap()
    }

    #[test]
    fn attached_model_round_trips_through_disk() {
        let body = body();
        let heads = HydraHead::init(8, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let model = hydra_attach(&body, &heads).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path(), body.depth()).unwrap();
        let back = TokenModel::load(dir.path()).unwrap();
        assert_eq!(back.to_bytes(), model.to_bytes());
        let names = |m: &TokenModel| {
            m.params
                .ids()
                .map(|id| m.params.name(id).to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(names(&back), names(&model));
        assert_eq!(
            back.hidden(&["a", "c", "b"]).unwrap(),
            model.hidden(&["a", "c", "b"]).unwrap()
        );
        assert_eq!(hydra_detach(&back).unwrap().to_bytes(), body.to_bytes());
    }

    #[test]
    fn sdoi_parsing() {
        let recs = parse_sdoi("{\"tokens\":[\"a\",\"b\"],\"matrix\":[[0,1],[1,0]]}\n").unwrap();
        assert_eq!(recs[0].matrix.n(), 2);
        assert!(parse_sdoi("{\"tokens\":[\"a\"],\"matrix\":[[0,1],[1,0]]}").is_err());
        assert!(parse_sdoi("{\"tokens\":[\"a\",\"b\"],\"matrix\":[[0,2],[1,0]]}").is_err());
        assert!(parse_sdoi("{\"tokens\":[\"a\",\"b\"],\"matrix\":[[0],[1,0]]}").is_err());
    }

    #[test]
    fn exact_target_has_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let mut heads = HydraHead::init(4, 2, &mut rng).unwrap();
        // zero heads score 0 everywhere, matching an all-zero target
        for hd in &mut heads {
            hd.wq = Tensor::zeros(&[4, 2]);
            hd.wk = Tensor::zeros(&[4, 2]);
        }
        let target = SdoiMatrix::new(&vec![vec![0.0; 3]; 3]).unwrap();
        let before = heads.clone();
        let trace = hydra_pretrain(
            &[h],
            &[target],
            &mut heads,
            &HydraConfig { steps: 3, lr: 1.0 },
        )
        .unwrap();
        assert!(trace.iter().all(|&l| l == 0.0));
        assert_eq!(heads, before);
    }

    #[test]
    fn attach_preserves_outputs_and_detach_restores() {
        let b = body();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let heads = HydraHead::init(8, 2, &mut rng).unwrap();
        let m = hydra_attach(&b, &heads).unwrap();
        assert_eq!(m.depth(), 3);
        let toks = ["a", "c", "b", "zz"];
        assert_eq!(m.hidden(&toks).unwrap(), b.hidden(&toks).unwrap());
        assert_eq!(
            m.params.count() - b.params.count(),
            2 * 8 * 4 * 2 + 2 * 8 * 8
        );
        let back = hydra_detach(&m).unwrap();
        assert_eq!(back.to_bytes(), b.to_bytes());
        assert!(hydra_attach(&b, &HydraHead::init(8, 4, &mut rng).unwrap()[..2]).is_err());
    }

    #[test]
    fn attached_heads_score_like_pretraining() {
        let b = body();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let heads = HydraHead::init(8, 2, &mut rng).unwrap();
        let m = hydra_attach(&b, &heads).unwrap();
        let toks = ["a", "b", "c"];
        let h = b.hidden(&toks).unwrap();
        let report = m.attention_report(&toks).unwrap();
        for (k, head) in heads.iter().enumerate() {
            let want = kernels::rowwise(&head.scores(&h).unwrap(), kernels::softmax);
            assert!(report[2][k].max_abs_diff(&want) < 1e-12);
        }
    }
}
