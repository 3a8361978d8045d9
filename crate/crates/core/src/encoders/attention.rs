use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensorcore::{kernels, Bound, ParamId, Params, Tape, Tensor, Var};

/// Attention over candidate `(key, value)` pairs: weights are the softmax of
/// `score(q, k_i)`, output is `sum_i w_i v_i`.
pub fn attend<T: Scalar>(
    q: &[T],
    keys: &[Vec<T>],
    values: &[Vec<T>],
    score: impl Fn(&[T], &[T]) -> T,
) -> Result<Vec<T>> {
    if keys.len() != values.len() || keys.is_empty() {
        return Err(Error::shape(format!(
            "attend needs equal, non-zero key/value counts, got {} and {}",
            keys.len(),
            values.len()
        )));
    }
    let dim = values[0].len();
    if values.iter().any(|v| v.len() != dim) {
        return Err(Error::shape("values differ in length"));
    }
    let scores: Vec<T> = keys.iter().map(|k| score(q, k)).collect();
    let w = kernels::softmax(&scores);
    let mut out = vec![T::zero(); dim];
    for (wi, v) in w.iter().zip(values) {
        for (o, &x) in out.iter_mut().zip(v) {
            *o = *o + *wi * x;
        }
    }
    Ok(out)
}

pub fn dot_score<T: Scalar>(q: &[T], k: &[T]) -> T {
    q.iter().zip(k).map(|(&a, &b)| a * b).sum()
}

/// How attention scores become weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFn {
    Softmax,
    Sparsemax,
}

impl WeightFn {
    fn apply<T: Scalar>(self, tape: &mut Tape<T>, scores: Var) -> Var {
        match self {
            WeightFn::Softmax => tape.softmax(scores),
            WeightFn::Sparsemax => tape.sparsemax(scores),
        }
    }
}

/// Additive ("general") attention: `a_i = q^T tanh(A r_i + b)`.
///
/// `A` is stored transposed (`d_r x d_q`) so a whole stack of
/// representations is projected with one row-major product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralAttention {
    pub proj: ParamId,
    pub bias: ParamId,
    pub weight_fn: WeightFn,
    pub d_q: usize,
    pub d_r: usize,
}

impl GeneralAttention {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut Params<T>,
        name: &str,
        d_q: usize,
        d_r: usize,
        weight_fn: WeightFn,
        rng: &mut R,
    ) -> Self {
        let std = 1.0 / (d_r as f64).sqrt();
        let proj = params.add(format!("{name}.A"), Tensor::randn(&[d_r, d_q], std, rng));
        let bias = params.add(format!("{name}.b"), Tensor::zeros(&[d_q]));
        Self {
            proj,
            bias,
            weight_fn,
            d_q,
            d_r,
        }
    }

    /// Scores of every row of `reps` (`M x d_r`) against `q` (`d_q`).
    pub fn scores<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        q: Var,
        reps: Var,
    ) -> Result<Var> {
        if tape.value(q).len() != self.d_q {
            return Err(Error::shape(format!(
                "attention query has {} dims, expected {}",
                tape.value(q).len(),
                self.d_q
            )));
        }
        let h = tape.matmul(reps, p.var(self.proj))?;
        let h = tape.add_bias(h, p.var(self.bias))?;
        let h = tape.tanh(h);
        tape.matvec(h, q)
    }

    /// Returns `(sum_i alpha_i r_i, alpha)`.
    pub fn pool<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        q: Var,
        reps: Var,
    ) -> Result<(Var, Var)> {
        let s = self.scores(tape, p, q, reps)?;
        let w = self.weight_fn.apply(tape, s);
        let out = tape.vecmat(w, reps)?;
        Ok((out, w))
    }
}

/// Multi-head scaled dot-product self-attention with output projection and
/// a residual connection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfAttentionLayer {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub n_heads: usize,
    pub d: usize,
}

/// Output of one layer plus its per-head attention matrices.
pub struct LayerTrace {
    pub output: Var,
    pub attention: Vec<Var>,
}

impl SelfAttentionLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut Params<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_heads == 0 || !d.is_multiple_of(n_heads) {
            return Err(Error::invalid(format!(
                "model dim {d} is not divisible by {n_heads} heads"
            )));
        }
        let std = 1.0 / (d as f64).sqrt();
        let mut mk =
            |tag: &str| params.add(format!("{name}.{tag}"), Tensor::randn(&[d, d], std, rng));
        Ok(Self {
            wq: mk("Wq"),
            wk: mk("Wk"),
            wv: mk("Wv"),
            wo: mk("Wo"),
            n_heads,
            d,
        })
    }

    /// A layer from explicit tensors (all `d x d`).
    pub fn from_tensors<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        n_heads: usize,
        [wq, wk, wv, wo]: [Tensor<T>; 4],
    ) -> Result<Self> {
        let d = wq.rows();
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::invalid(format!(
                "model dim {d} is not divisible by {n_heads} heads"
            )));
        }
        for t in [&wq, &wk, &wv, &wo] {
            if t.shape() != [d, d] {
                return Err(Error::shape(format!(
                    "layer weight {:?}, expected [{d}, {d}]",
                    t.shape()
                )));
            }
        }
        Ok(Self {
            wq: params.add(format!("{name}.Wq"), wq),
            wk: params.add(format!("{name}.Wk"), wk),
            wv: params.add(format!("{name}.Wv"), wv),
            wo: params.add(format!("{name}.Wo"), wo),
            n_heads,
            d,
        })
    }

    pub fn d_head(&self) -> usize {
        self.d / self.n_heads
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<Var> {
        Ok(self.trace(tape, p, x)?.output)
    }

    pub fn trace<T: Scalar>(&self, tape: &mut Tape<T>, p: &Bound, x: Var) -> Result<LayerTrace> {
        if tape.value(x).rank() != 2 || tape.value(x).cols() != self.d {
            return Err(Error::shape(format!(
                "layer input {:?}, expected M x {}",
                tape.shape(x),
                self.d
            )));
        }
        let q = tape.matmul(x, p.var(self.wq))?;
        let k = tape.matmul(x, p.var(self.wk))?;
        let v = tape.matmul(x, p.var(self.wv))?;
        let dh = self.d_head();
        let scale = T::one() / T::of_usize(dh).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        let mut attention = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (s, e) = (h * dh, (h + 1) * dh);
            let (qh, kh, vh) = if self.n_heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_cols(q, s, e)?,
                    tape.slice_cols(k, s, e)?,
                    tape.slice_cols(v, s, e)?,
                )
            };
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let a = tape.softmax(scores);
            heads.push(tape.matmul(a, vh)?);
            attention.push(a);
        }
        let z = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let o = tape.matmul(z, p.var(self.wo))?;
        let output = tape.add(o, x)?;
        Ok(LayerTrace { output, attention })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn attend_cases() {
        let one = attend(&[1.0f64], &[vec![3.0]], &[vec![4.0, 5.0]], dot_score).unwrap();
        assert_eq!(one, vec![4.0, 5.0]);
        let mean = attend(
            &[1.0f64],
            &[vec![2.0], vec![2.0]],
            &[vec![0.0], vec![10.0]],
            dot_score,
        )
        .unwrap();
        assert!((mean[0] - 5.0).abs() < 1e-12);
        let out = attend(
            &[1.0f64],
            &[vec![1.0], vec![2.0]],
            &[vec![0.0], vec![10.0]],
            dot_score,
        )
        .unwrap();
        let w = 1.0 / (1.0 + (-1f64).exp());
        assert!((out[0] - 10.0 * w).abs() < 1e-12);
        assert!((out[0] - 7.311).abs() < 1e-3);
        assert!(attend(&[1.0f64], &[vec![1.0]], &[], dot_score).is_err());
    }

    #[test]
    fn zero_value_path_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut params = Params::<f64>::new();
        let layer = SelfAttentionLayer::new(&mut params, "l", 4, 2, &mut rng).unwrap();
        *params.get_mut(layer.wv) = Tensor::zeros(&[4, 4]);
        *params.get_mut(layer.wo) = Tensor::zeros(&[4, 4]);
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let x = tape.constant(Tensor::randn(&[3, 4], 1.0, &mut rng));
        let y = layer.forward(&mut tape, &b, x).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn single_row_attends_to_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = Params::<f64>::new();
        let layer = SelfAttentionLayer::new(&mut params, "l", 4, 2, &mut rng).unwrap();
        let mut tape = Tape::new();
        let b = params.bind_frozen(&mut tape);
        let xt = Tensor::randn(&[1, 4], 1.0, &mut rng);
        let x = tape.constant(xt.clone());
        let tr = layer.trace(&mut tape, &b, x).unwrap();
        for a in &tr.attention {
            assert_eq!(tape.value(*a).data(), &[1.0]);
        }
        let expect = kernels::matmul(
            &kernels::matmul(&xt, params.get(layer.wv)).unwrap(),
            params.get(layer.wo),
        )
        .unwrap();
        let got = tape.value(tr.output);
        for i in 0..4 {
            assert!((got.data()[i] - expect.data()[i] - xt.data()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(SelfAttentionLayer::new(&mut Params::<f64>::new(), "l", 5, 2, &mut rng).is_err());
    }
}
