//! Built-in checks shared by the command line and the test suite: a
//! gradient suite over every differentiable tape operation and both
//! encoders, and a set of cheap algebraic properties.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::augment::{negate, Language};
use crate::encoders::{
    CnnConfig, EmbeddingTable, GeneralAttention, ParaformerLite, SelfAttentionLayer,
    SentenceEncoderCnn, Vocab, WeightFn,
};
use crate::error::Result;
use crate::lexical::{tokenize, Bm25Params, InvertedIndex};
use crate::tensorcore::{grad_check, kernels, Params, Tape, Tensor, Var};

const EPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub name: String,
    pub instances: usize,
    /// Worst relative error over all instances and inputs.
    pub max_rel_err: f64,
}

impl GradReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

type Check = fn(&mut ChaCha8Rng) -> Result<f64>;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// Contracts `y` with a fixed random tensor so any output becomes a scalar.
fn project(t: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let c = t.constant(r.clone());
    t.dot(y, c)
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    )
}

/// Checks a binary op with respect to each operand in turn.
fn binary(
    a: &Tensor<f64>,
    b: &Tensor<f64>,
    r: &Tensor<f64>,
    op: impl Fn(&mut Tape<f64>, Var, Var) -> Result<Var>,
) -> Result<f64> {
    let ea = grad_check(
        |t, v| {
            let c = t.constant(b.clone());
            let y = op(t, v, c)?;
            project(t, y, r)
        },
        a,
        EPS,
    )?;
    let eb = grad_check(
        |t, v| {
            let c = t.constant(a.clone());
            let y = op(t, c, v)?;
            project(t, y, r)
        },
        b,
        EPS,
    )?;
    Ok(ea.max(eb))
}

fn unary(
    x: &Tensor<f64>,
    r: &Tensor<f64>,
    op: impl Fn(&mut Tape<f64>, Var) -> Result<Var>,
) -> Result<f64> {
    grad_check(
        |t, v| {
            let y = op(t, v)?;
            project(t, y, r)
        },
        x,
        EPS,
    )
}

fn scalar_loss(x: &Tensor<f64>, op: impl Fn(&mut Tape<f64>, Var) -> Result<Var>) -> Result<f64> {
    grad_check(op, x, EPS)
}

fn check_matmul(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, n) = dims(rng);
    binary(
        &randn(&[m, k], rng),
        &randn(&[k, n], rng),
        &randn(&[m, n], rng),
        |t, a, b| t.matmul(a, b),
    )
}

fn check_matvec(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, _) = dims(rng);
    binary(
        &randn(&[m, k], rng),
        &randn(&[k], rng),
        &randn(&[m], rng),
        |t, a, b| t.matvec(a, b),
    )
}

fn check_vecmat(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, k, _) = dims(rng);
    binary(
        &randn(&[m], rng),
        &randn(&[m, k], rng),
        &randn(&[k], rng),
        |t, a, b| t.vecmat(a, b),
    )
}

fn check_add(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    binary(
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        |t, a, b| t.add(a, b),
    )
}

fn check_sub(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    binary(
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        |t, a, b| t.sub(a, b),
    )
}

fn check_mul(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    binary(
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        &randn(&[m, n], rng),
        |t, a, b| t.mul(a, b),
    )
}

fn check_scale(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let c: f64 = rng.random_range(-2.0..2.0);
    unary(&randn(&[m, n], rng), &randn(&[m, n], rng), |t, v| {
        Ok(t.scale(v, c))
    })
}

fn check_add_bias(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    binary(
        &randn(&[m, n], rng),
        &randn(&[n], rng),
        &randn(&[m, n], rng),
        |t, a, b| t.add_bias(a, b),
    )
}

fn check_tanh(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(&randn(&[m, n], rng), &randn(&[m, n], rng), |t, v| {
        Ok(t.tanh(v))
    })
}

fn check_softmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(
        &randn(&[m, n + 1], rng),
        &randn(&[m, n + 1], rng),
        |t, v| Ok(t.softmax(v)),
    )
}

fn check_sparsemax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(
        &randn(&[m, n + 1], rng),
        &randn(&[m, n + 1], rng),
        |t, v| Ok(t.sparsemax(v)),
    )
}

fn check_transpose(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(&randn(&[m, n], rng), &randn(&[n, m], rng), |t, v| {
        t.transpose(v)
    })
}

fn check_reshape(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(&randn(&[m, n], rng), &randn(&[m * n], rng), |t, v| {
        t.reshape(v, &[m * n])
    })
}

fn check_conv1d(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (len, d, f) = dims(rng);
    let w = if rng.random_bool(0.5) { 1 } else { 3 };
    let x = randn(&[len, d], rng);
    let filters = randn(&[w * d, f], rng);
    let out = kernels::conv1d(&x, &filters, w)?;
    let r = randn(out.shape(), rng);
    binary(&x, &filters, &r, |t, a, b| t.conv1d(a, b, w))
}

fn check_avg_pool(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    unary(&randn(&[m, n], rng), &randn(&[n], rng), |t, v| {
        t.avg_pool(v)
    })
}

fn check_sum(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    scalar_loss(&randn(&[m, n], rng), |t, v| Ok(t.sum(v)))
}

fn check_dot(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, _, _) = dims(rng);
    binary(
        &randn(&[n], rng),
        &randn(&[n], rng),
        &randn(&[1], rng),
        |t, a, b| t.dot(a, b),
    )
}

fn check_slice_cols(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let n = n + 1;
    let start = rng.random_range(0..n - 1);
    let end = rng.random_range(start + 1..=n);
    unary(
        &randn(&[m, n], rng),
        &randn(&[m, end - start], rng),
        |t, v| t.slice_cols(v, start, end),
    )
}

fn check_concat_cols(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, a, b) = dims(rng);
    binary(
        &randn(&[m, a], rng),
        &randn(&[m, b], rng),
        &randn(&[m, a + b], rng),
        |t, x, y| t.concat_cols(&[x, y]),
    )
}

fn check_stack(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, _, _) = dims(rng);
    binary(
        &randn(&[n], rng),
        &randn(&[n], rng),
        &randn(&[2, n], rng),
        |t, x, y| {
            t.stack(&[x, y, x])
                .and_then(|s| t.slice_cols(s, 0, n))
                .and_then(|s| {
                    let a = t.row(s, 0)?;
                    let b = t.row(s, 1)?;
                    t.stack(&[a, b])
                })
        },
    )
}

fn check_row(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let r = rng.random_range(0..m);
    unary(&randn(&[m, n], rng), &randn(&[n], rng), |t, v| t.row(v, r))
}

fn check_gather(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (v, d, len) = dims(rng);
    let idx: Vec<Option<usize>> = (0..len + 1)
        .map(|_| {
            if rng.random_bool(0.2) {
                None
            } else {
                Some(rng.random_range(0..v))
            }
        })
        .collect();
    unary(&randn(&[v, d], rng), &randn(&[len + 1, d], rng), |t, x| {
        t.gather(x, &idx)
    })
}

fn check_mse(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let target = randn(&[m, n], rng);
    scalar_loss(&randn(&[m, n], rng), |t, v| {
        let c = t.constant(target.clone());
        t.mse(v, c)
    })
}

fn check_ce_first(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, _, _) = dims(rng);
    scalar_loss(&randn(&[n + 1], rng), |t, v| t.ce_first(v))
}

fn check_ce_negsample(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (k, _, _) = dims(rng);
    let negs: Vec<Tensor<f64>> = (0..k).map(|_| randn(&[], rng)).collect();
    let pos = randn(&[], rng);
    let ep = scalar_loss(&pos, |t, v| {
        let n: Vec<Var> = negs.iter().map(|x| t.constant(x.clone())).collect();
        t.ce_negsample(v, &n)
    })?;
    let en = scalar_loss(&negs[0], |t, v| {
        let p = t.constant(pos.clone());
        let mut n = vec![v];
        n.extend(negs[1..].iter().map(|x| t.constant(x.clone())));
        t.ce_negsample(p, &n)
    })?;
    Ok(ep.max(en))
}

fn check_ce_rows(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (m, n, _) = dims(rng);
    let targets: Vec<usize> = (0..m).map(|_| rng.random_range(0..=n)).collect();
    scalar_loss(&randn(&[m, n + 1], rng), |t, v| t.ce_rows(v, &targets))
}

fn check_bce_logit(rng: &mut ChaCha8Rng) -> Result<f64> {
    let target = rng.random_bool(0.5);
    scalar_loss(&randn(&[], rng), |t, v| t.bce_logit(v, target))
}

fn check_softargmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (n, _, _) = dims(rng);
    let beta = rng.random_range(1.0..4.0);
    scalar_loss(&randn(&[n + 1], rng), |t, v| t.softargmax(v, beta))
}

/// Every parameter of `params` in turn as the leaf, the rest constant.
fn params_check(
    params: &Params<f64>,
    loss: impl Fn(&mut Tape<f64>, &crate::tensorcore::Bound) -> Result<Var>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for id in params.ids() {
        let e = grad_check(
            |t, v| {
                let p = params.bind_frozen(t).with(id, v);
                loss(t, &p)
            },
            params.get(id),
            EPS,
        )?;
        worst = worst.max(e);
    }
    Ok(worst)
}

fn attention_check(rng: &mut ChaCha8Rng, wf: WeightFn) -> Result<f64> {
    let (m, dr, dq) = dims(rng);
    let mut params = Params::new();
    let attn = GeneralAttention::new(&mut params, "attn", dq, dr, wf, rng);
    let q = randn(&[dq], rng);
    let reps = randn(&[m + 1, dr], rng);
    let r = randn(&[dr], rng);
    let by_params = params_check(&params, |t, p| {
        let qv = t.constant(q.clone());
        let rv = t.constant(reps.clone());
        let (out, _) = attn.pool(t, p, qv, rv)?;
        project(t, out, &r)
    })?;
    let by_inputs = binary(&q, &reps, &r, |t, qv, rv| {
        let p = params.bind_frozen(t);
        Ok(attn.pool(t, &p, qv, rv)?.0)
    })?;
    Ok(by_params.max(by_inputs))
}

fn check_attention_softmax(rng: &mut ChaCha8Rng) -> Result<f64> {
    attention_check(rng, WeightFn::Softmax)
}

fn check_attention_sparsemax(rng: &mut ChaCha8Rng) -> Result<f64> {
    attention_check(rng, WeightFn::Sparsemax)
}

fn check_self_attention(rng: &mut ChaCha8Rng) -> Result<f64> {
    let heads = rng.random_range(1..=2);
    let d = heads * rng.random_range(1..=3);
    let len = rng.random_range(1..=4);
    let mut params = Params::new();
    let layer = SelfAttentionLayer::new(&mut params, "sa", d, heads, rng)?;
    let x = randn(&[len, d], rng);
    let r = randn(&[len, d], rng);
    let by_params = params_check(&params, |t, p| {
        let xv = t.constant(x.clone());
        let y = layer.forward(t, p, xv)?;
        project(t, y, &r)
    })?;
    let by_input = unary(&x, &r, |t, v| {
        let p = params.bind_frozen(t);
        layer.forward(t, &p, v)
    })?;
    Ok(by_params.max(by_input))
}

fn toy_table(rng: &mut ChaCha8Rng, dim: usize) -> Result<(EmbeddingTable<f64>, Vec<String>)> {
    let words: Vec<String> = (0..5).map(|i| format!("w{i}")).collect();
    let table = EmbeddingTable::random(Vocab::new(words.clone())?, dim, 1.0, rng)?;
    let len = rng.random_range(1..=5);
    let mut tokens: Vec<String> = (0..len)
        .map(|_| words[rng.random_range(0..words.len())].clone())
        .collect();
    tokens.push("unseen".into());
    Ok((table, tokens))
}

fn check_cnn_encoder(rng: &mut ChaCha8Rng) -> Result<f64> {
    let dim = rng.random_range(2..=4);
    let cfg = CnnConfig {
        embedding: dim,
        filters: rng.random_range(2..=4),
        width: if rng.random_bool(0.5) { 1 } else { 3 },
        attn_query: rng.random_range(2..=3),
        dropout: 0.0,
    };
    let (table, tokens) = toy_table(rng, dim)?;
    let mut params = Params::new();
    let enc = SentenceEncoderCnn::new(&mut params, "cnn", table, &cfg, rng)?;
    let r = randn(&[cfg.filters], rng);
    params_check(&params, |t, p| {
        let y = enc.encode(t, p, &tokens, None, None)?;
        project(t, y, &r)
    })
}

fn check_paraformer_encoder(rng: &mut ChaCha8Rng) -> Result<f64> {
    let heads = rng.random_range(1..=2);
    let dim = heads * rng.random_range(1..=2);
    let (table, tokens) = toy_table(rng, dim)?;
    let mut params = Params::new();
    let layers = rng.random_range(1..=2);
    let enc = ParaformerLite::new(&mut params, "pf", table, layers, heads, 8, true, rng)?;
    let r = randn(&[dim], rng);
    params_check(&params, |t, p| {
        let y = enc.encode(t, p, &tokens)?;
        project(t, y, &r)
    })
}

const CHECKS: &[(&str, Check)] = &[
    ("matmul", check_matmul),
    ("matvec", check_matvec),
    ("vecmat", check_vecmat),
    ("add", check_add),
    ("sub", check_sub),
    ("mul", check_mul),
    ("scale", check_scale),
    ("add_bias", check_add_bias),
    ("tanh", check_tanh),
    ("softmax", check_softmax),
    ("sparsemax", check_sparsemax),
    ("transpose", check_transpose),
    ("reshape", check_reshape),
    ("conv1d", check_conv1d),
    ("avg_pool", check_avg_pool),
    ("sum", check_sum),
    ("dot", check_dot),
    ("slice_cols", check_slice_cols),
    ("concat_cols", check_concat_cols),
    ("stack_row", check_stack),
    ("row", check_row),
    ("gather", check_gather),
    ("mse", check_mse),
    ("ce_first", check_ce_first),
    ("ce_negsample", check_ce_negsample),
    ("ce_rows", check_ce_rows),
    ("bce_logit", check_bce_logit),
    ("softargmax", check_softargmax),
    ("general_attention_softmax", check_attention_softmax),
    ("general_attention_sparsemax", check_attention_sparsemax),
    ("self_attention", check_self_attention),
    ("attentive_cnn_encoder", check_cnn_encoder),
    ("paraformer_lite_encoder", check_paraformer_encoder),
];

/// Runs every check on `instances` seeded random instances.
pub fn grad_suite(instances: usize, seed: u64) -> Result<Vec<GradReport>> {
    CHECKS
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64 * 1_000_003));
            let mut worst = 0.0f64;
            for _ in 0..instances {
                worst = worst.max(check(&mut rng)?);
            }
            Ok(GradReport {
                name: name.to_string(),
                instances,
                max_rel_err: worst,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
}

/// Quick algebraic properties: simplex membership and shift invariance of
/// sparsemax, the hand BM25 value, top-n prefix consistency, and the
/// can/cannot involution.
pub fn properties(cases: usize, seed: u64) -> Vec<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut simplex = true;
    let mut shift = true;
    for _ in 0..cases {
        let n = rng.random_range(2..=16);
        // dyadic values keep integer shifts exact
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-3072..=3072) as f64 / 1024.0)
            .collect();
        let p = kernels::sparsemax(&x);
        let total: f64 = p.iter().sum();
        simplex &= (total - 1.0).abs() <= 1e-12 && p.iter().all(|&v| v >= 0.0);
        let c = rng.random_range(-4i32..=4) as f64;
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        shift &= kernels::sparsemax(&shifted) == p;
    }
    let docs = [
        ("d0".to_string(), "a b".to_string()),
        ("d1".to_string(), "b c".to_string()),
    ];
    let hand = InvertedIndex::from_texts(&docs)
        .and_then(|idx| idx.bm25_score(&tokenize("a"), "d0", Bm25Params::default()))
        .map(|s| (s - std::f64::consts::LN_2).abs() <= 1e-12)
        .unwrap_or(false);
    let mut prefix = true;
    for _ in 0..cases.min(50) {
        let docs: Vec<(String, String)> = (0..rng.random_range(1..12))
            .map(|i| {
                let len = rng.random_range(1..6);
                let text: Vec<String> = (0..len)
                    .map(|_| format!("t{}", rng.random_range(0..5)))
                    .collect();
                (format!("d{i:02}"), text.join(" "))
            })
            .collect();
        let Ok(idx) = InvertedIndex::from_texts(&docs) else {
            prefix = false;
            continue;
        };
        let q = vec![format!("t{}", rng.random_range(0..5))];
        let n = rng.random_range(1..=docs.len());
        let short = idx.top_n(&q, n, Bm25Params::default());
        let long = idx.top_n(&q, n + 1, Bm25Params::default());
        prefix &= long.starts_with(&short);
    }
    let involution = negate("X can Y", Language::En)
        .and_then(|(neg, _)| negate(&neg, Language::En))
        .is_some_and(|(back, _)| back == "X can Y");
    [
        ("sparsemax_on_simplex", simplex),
        ("sparsemax_shift_invariant", shift),
        ("bm25_hand_example", hand),
        ("top_n_prefix", prefix),
        ("can_cannot_involution", involution),
    ]
    .into_iter()
    .map(|(name, passed)| PropertyReport {
        name: name.to_string(),
        passed,
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_instances() {
        for r in grad_suite(3, 9).unwrap() {
            assert!(r.passed(1e-4), "{} {}", r.name, r.max_rel_err);
        }
    }

    #[test]
    fn properties_hold() {
        assert!(properties(50, 1).iter().all(|p| p.passed));
    }
}
