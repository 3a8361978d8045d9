//! Attention primitives and the two hierarchical encoders: an attentive CNN
//! and a self-attention ("Paraformer-lite") sentence encoder, both pooled
//! over statements by additive attention.

mod attention;
mod embedding;

pub use attention::{
    attend, dot_score, GeneralAttention, LayerTrace, SelfAttentionLayer, WeightFn,
};
pub use embedding::{EmbeddingTable, OovPolicy, Vocab};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorcore::{Bound, ParamId, Params, Tape, Tensor, Var};

/// Token lookup into a trainable embedding matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedder {
    pub vocab: Vocab,
    pub table: ParamId,
    pub oov_policy: OovPolicy,
    pub dim: usize,
}

impl Embedder {
    pub fn new<T: Scalar>(params: &mut Params<T>, name: &str, table: EmbeddingTable<T>) -> Self {
        let dim = table.dim();
        let id = params.add(format!("{name}.E"), table.matrix);
        Self {
            vocab: table.vocab,
            table: id,
            oov_policy: table.oov_policy,
            dim,
        }
    }

    pub fn indices<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Option<usize>>> {
        let idx = self.vocab.lookup(tokens, self.oov_policy);
        if idx.is_empty() {
            return Err(Error::invalid("no in-vocabulary tokens to encode"));
        }
        Ok(idx)
    }

    /// `M x d` embeddings of `tokens`.
    pub fn embed<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
    ) -> Result<Var> {
        let idx = self.indices(tokens)?;
        tape.gather(p.var(self.table), &idx)
    }
}

/// Sizes for the attentive CNN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub embedding: usize,
    pub filters: usize,
    pub width: usize,
    pub attn_query: usize,
    pub dropout: f64,
}

impl CnnConfig {
    pub fn paper() -> Self {
        Self {
            embedding: 512,
            filters: 512,
            width: 3,
            attn_query: 200,
            dropout: 0.2,
        }
    }

    pub fn desk() -> Self {
        Self {
            embedding: 64,
            filters: 64,
            width: 3,
            attn_query: 32,
            dropout: 0.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::invalid(format!("unknown preset `{other}`"))),
        }
    }
}

/// Inverted dropout; identity when `rng` is `None` or `p == 0`.
pub fn dropout<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    p: f64,
    rng: Option<&mut dyn RngCore>,
) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = T::of(1.0 / (1.0 - p));
    let shape = tape.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let mask: Vec<T> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let m = tape.constant(Tensor::new(shape, mask)?);
    tape.mul(x, m)
}

/// Attentive CNN sentence encoder: embed, convolve, tanh, then additive
/// attention pooling under a learned query `u`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceEncoderCnn {
    pub embedder: Embedder,
    pub filters: ParamId,
    pub conv_bias: ParamId,
    pub width: usize,
    pub n_filters: usize,
    pub attn: GeneralAttention,
    pub query: ParamId,
    pub dropout: f64,
}

impl SentenceEncoderCnn {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut Params<T>,
        name: &str,
        table: EmbeddingTable<T>,
        cfg: &CnnConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if table.dim() != cfg.embedding {
            return Err(Error::shape(format!(
                "embedding dim {} does not match filter depth {}",
                table.dim(),
                cfg.embedding
            )));
        }
        if cfg.width == 0
            || cfg.filters == 0
            || cfg.attn_query == 0
            || !(0.0..1.0).contains(&cfg.dropout)
        {
            return Err(Error::invalid(format!("bad encoder config {cfg:?}")));
        }
        let embedder = Embedder::new(params, name, table);
        let fan_in = (cfg.width * cfg.embedding) as f64;
        let filters = params.add(
            format!("{name}.conv"),
            Tensor::randn(
                &[cfg.width * cfg.embedding, cfg.filters],
                1.0 / fan_in.sqrt(),
                rng,
            ),
        );
        let conv_bias = params.add(format!("{name}.conv_b"), Tensor::zeros(&[cfg.filters]));
        let attn = GeneralAttention::new(
            params,
            &format!("{name}.attn"),
            cfg.attn_query,
            cfg.filters,
            WeightFn::Softmax,
            rng,
        );
        let query = params.add(
            format!("{name}.u"),
            Tensor::randn(&[cfg.attn_query], 1.0 / (cfg.attn_query as f64).sqrt(), rng),
        );
        Ok(Self {
            embedder,
            filters,
            conv_bias,
            width: cfg.width,
            n_filters: cfg.filters,
            attn,
            query,
            dropout: cfg.dropout,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.n_filters
    }

    /// Per-token conv features (`M x F`).
    pub fn features<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let x = self.embedder.embed(tape, p, tokens)?;
        let h = tape.conv1d(x, p.var(self.filters), self.width)?;
        let h = tape.add_bias(h, p.var(self.conv_bias))?;
        let h = tape.tanh(h);
        dropout(tape, h, self.dropout, rng)
    }

    /// Sentence vector; `query` replaces the learned `u` when given.
    pub fn encode<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
        query: Option<Var>,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let h = self.features(tape, p, tokens, rng)?;
        let q = query.unwrap_or_else(|| p.var(self.query));
        Ok(self.attn.pool(tape, p, q, h)?.0)
    }
}

/// Inference-time attentive CNN encoding.
pub fn encode_sentence_cnn<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    enc: &SentenceEncoderCnn,
    params: &Params<T>,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let p = params.bind_frozen(&mut tape);
    let v = enc.encode(&mut tape, &p, tokens, None, None)?;
    Ok(tape.value(v).data().to_vec())
}

/// Self-attention sentence encoder with optional learned positions and
/// average pooling of the final layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParaformerLite {
    pub embedder: Embedder,
    pub positions: Option<ParamId>,
    pub max_len: usize,
    pub layers: Vec<SelfAttentionLayer>,
}

impl ParaformerLite {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut Params<T>,
        name: &str,
        table: EmbeddingTable<T>,
        n_layers: usize,
        n_heads: usize,
        max_len: usize,
        use_positions: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let d = table.dim();
        if max_len == 0 {
            return Err(Error::invalid("max_len must be >= 1"));
        }
        let embedder = Embedder::new(params, name, table);
        let positions = use_positions.then(|| {
            params.add(
                format!("{name}.pos"),
                Tensor::randn(&[max_len, d], 0.1, rng),
            )
        });
        let layers = (0..n_layers)
            .map(|l| SelfAttentionLayer::new(params, &format!("{name}.layer{l}"), d, n_heads, rng))
            .collect::<Result<_>>()?;
        Ok(Self {
            embedder,
            positions,
            max_len,
            layers,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.embedder.dim
    }

    /// Token embeddings plus positions (`M x d`); tokens past `max_len`
    /// are dropped.
    pub fn input<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
    ) -> Result<Var> {
        let mut idx = self.embedder.indices(tokens)?;
        idx.truncate(self.max_len);
        let x = tape.gather(p.var(self.embedder.table), &idx)?;
        match self.positions {
            Some(pos) => {
                let rows: Vec<Option<usize>> = (0..idx.len()).map(Some).collect();
                let pe = tape.gather(p.var(pos), &rows)?;
                tape.add(x, pe)
            }
            None => Ok(x),
        }
    }

    /// Output and attention of every layer, bottom first.
    pub fn traces<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
    ) -> Result<Vec<LayerTrace>> {
        let mut x = self.input(tape, p, tokens)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let t = layer.trace(tape, p, x)?;
            x = t.output;
            out.push(t);
        }
        Ok(out)
    }

    /// Final-layer token states (`M x d`).
    pub fn hidden<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
    ) -> Result<Var> {
        let mut x = self.input(tape, p, tokens)?;
        for layer in &self.layers {
            x = layer.forward(tape, p, x)?;
        }
        Ok(x)
    }

    pub fn encode<T: Scalar, S: AsRef<str>>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        tokens: &[S],
    ) -> Result<Var> {
        let h = self.hidden(tape, p, tokens)?;
        tape.avg_pool(h)
    }
}

/// Inference-time Paraformer-lite encoding.
pub fn encode_sentence_avg<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    enc: &ParaformerLite,
    params: &Params<T>,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let p = params.bind_frozen(&mut tape);
    let v = enc.encode(&mut tape, &p, tokens)?;
    Ok(tape.value(v).data().to_vec())
}

/// Pools sentence representations into a paragraph vector; returns
/// `(r_a, weights)`.
pub fn encode_paragraph<T: Scalar>(
    q: &[T],
    sent_reps: &[Vec<T>],
    attn: &GeneralAttention,
    params: &Params<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    if sent_reps.is_empty() {
        return Err(Error::invalid("paragraph without sentences"));
    }
    let mut tape = Tape::new();
    let p = params.bind_frozen(&mut tape);
    let qv = tape.constant(Tensor::vector(q.to_vec())?);
    let reps = tape.constant(Tensor::from_rows(sent_reps)?);
    let (r, w) = attn.pool(&mut tape, &p, qv, reps)?;
    Ok((tape.value(r).data().to_vec(), tape.value(w).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorcore::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(words: &[&str], dim: usize, seed: u64) -> EmbeddingTable<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocab::new(words.iter().map(|w| w.to_string()).collect()).unwrap();
        EmbeddingTable::random(vocab, dim, 1.0, &mut rng).unwrap()
    }

    fn small_cnn(params: &mut Params<f64>) -> SentenceEncoderCnn {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = CnnConfig {
            embedding: 4,
            filters: 3,
            width: 3,
            attn_query: 2,
            dropout: 0.0,
        };
        SentenceEncoderCnn::new(params, "cnn", table(&["a", "b", "c"], 4, 1), &cfg, &mut rng)
            .unwrap()
    }

    #[test]
    fn cnn_single_token_and_zero_filters() {
        let mut params = Params::new();
        let enc = small_cnn(&mut params);
        let one = encode_sentence_cnn(&["b"], &enc, &params).unwrap();
        let mut tape = Tape::new();
        let p = params.bind_frozen(&mut tape);
        let h = enc.features(&mut tape, &p, &["b"], None).unwrap();
        assert_eq!(tape.value(h).data(), &one[..]);

        *params.get_mut(enc.filters) = Tensor::zeros(&[12, 3]);
        let z = encode_sentence_cnn(&["a", "c", "b"], &enc, &params).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oov_policy() {
        let mut params = Params::new();
        let mut enc = small_cnn(&mut params);
        assert!(encode_sentence_cnn(&["zz"], &enc, &params).is_ok());
        enc.embedder.oov_policy = OovPolicy::Skip;
        assert!(encode_sentence_cnn(&["zz"], &enc, &params).is_err());
        assert!(encode_sentence_cnn(&["zz", "a"], &enc, &params).is_ok());
    }

    #[test]
    fn config_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = Params::new();
        let cfg = CnnConfig::desk();
        assert!(
            SentenceEncoderCnn::new(&mut params, "x", table(&["a"], 8, 0), &cfg, &mut rng).is_err()
        );
        assert_eq!(CnnConfig::preset("paper").unwrap().attn_query, 200);
        assert!(CnnConfig::preset("big").is_err());
    }

    #[test]
    fn cnn_gradients() {
        let mut params = Params::new();
        let enc = small_cnn(&mut params);
        let base = params.clone();
        let x0 = base.get(enc.filters).clone();
        let err = grad_check(
            |tape, x| {
                let mut b = base.bind_frozen(tape);
                b = b.with(enc.filters, x);
                let v = enc.encode(tape, &b, &["a", "b", "c", "a"], None, None)?;
                let w = tape.constant(Tensor::vector(vec![0.3, -0.7, 1.1])?);
                tape.dot(v, w)
            },
            &x0,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn small_para(params: &mut Params<f64>, positions: bool) -> ParaformerLite {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        ParaformerLite::new(
            params,
            "pf",
            table(&["a", "b", "c", "d"], 4, 2),
            2,
            2,
            8,
            positions,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn paraformer_residual_only_path() {
        let mut params = Params::new();
        let enc = small_para(&mut params, true);
        for l in &enc.layers {
            *params.get_mut(l.wv) = Tensor::zeros(&[4, 4]);
            *params.get_mut(l.wo) = Tensor::zeros(&[4, 4]);
        }
        let out = encode_sentence_avg(&["a", "c"], &enc, &params).unwrap();
        let e = params.get(enc.embedder.table);
        let pe = params.get(enc.positions.unwrap());
        assert_eq!(out.len(), 4);
        for (j, &got) in out.iter().enumerate() {
            let want = (e.at(0, j) + pe.at(0, j) + e.at(2, j) + pe.at(1, j)) / 2.0;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn paraformer_single_token_is_hidden_row() {
        let mut params = Params::new();
        let enc = small_para(&mut params, true);
        let out = encode_sentence_avg(&["d"], &enc, &params).unwrap();
        let mut tape = Tape::new();
        let p = params.bind_frozen(&mut tape);
        let h = enc.hidden(&mut tape, &p, &["d"]).unwrap();
        assert_eq!(tape.value(h).data(), &out[..]);
        assert_eq!(out, encode_sentence_avg(&["d"], &enc, &params).unwrap());
    }

    #[test]
    fn permutation_equivariance_without_positions() {
        let mut params = Params::new();
        let enc = small_para(&mut params, false);
        let hidden = |toks: &[&str]| {
            let mut tape = Tape::new();
            let p = params.bind_frozen(&mut tape);
            let h = enc.hidden(&mut tape, &p, toks).unwrap();
            tape.value(h).clone()
        };
        let a = hidden(&["a", "b", "c"]);
        let b = hidden(&["c", "a", "b"]);
        for (ra, rb) in [(0, 1), (1, 2), (2, 0)] {
            for j in 0..4 {
                assert!((a.at(ra, j) - b.at(rb, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paraformer_gradients() {
        let mut params = Params::new();
        let enc = small_para(&mut params, true);
        let base = params.clone();
        let wq = enc.layers[0].wq;
        let err = grad_check(
            |tape, x| {
                let b = base.bind_frozen(tape).with(wq, x);
                let v = enc.encode(tape, &b, &["a", "b", "d"])?;
                let w = tape.constant(Tensor::vector(vec![0.5, -1.0, 0.25, 2.0])?);
                tape.dot(v, w)
            },
            base.get(wq),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    fn paragraph_attn(params: &mut Params<f64>, weight_fn: WeightFn) -> GeneralAttention {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        GeneralAttention::new(params, "p", 2, 2, weight_fn, &mut rng)
    }

    #[test]
    fn paragraph_cases() {
        let mut params = Params::new();
        let attn = paragraph_attn(&mut params, WeightFn::Softmax);
        let (r, w) = encode_paragraph(&[0.4, -0.2], &[vec![1.0, 2.0]], &attn, &params).unwrap();
        assert_eq!((r, w), (vec![1.0, 2.0], vec![1.0]));
        let (_, w) =
            encode_paragraph(&[0.4, -0.2], &vec![vec![1.0, 2.0]; 3], &attn, &params).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(encode_paragraph(&[0.4, -0.2], &[], &attn, &params).is_err());
    }

    #[test]
    fn paragraph_sparsemax_scores() {
        // identity projection, zero bias: a_i = q . tanh(r_i)
        let mut params = Params::new();
        let attn = paragraph_attn(&mut params, WeightFn::Sparsemax);
        *params.get_mut(attn.proj) = Tensor::identity(2);
        let t = |s: f64| s.atanh();
        let reps = vec![vec![t(0.5), 0.0], vec![0.0, 0.0], vec![t(-0.5), 0.0]];
        let (r, w) = encode_paragraph(&[2.0, 0.0], &reps, &attn, &params).unwrap();
        // scores sit on the sparsemax support boundary, so allow rounding
        for (a, b) in w.iter().zip([1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in r.iter().zip(&reps[0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full(&[2, 3], 1.0));
        assert_eq!(dropout(&mut tape, x, 0.5, None).unwrap(), x);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = dropout(&mut tape, x, 0.5, Some(&mut rng)).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
