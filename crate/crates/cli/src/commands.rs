use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use slab_core::augment::{
    augment_negation, derive_lawfulness, gen_nfsp, gen_nmsp, load_bilingual, LabeledStatement,
    PairExample, RuleSet,
};
use slab_core::corpus::{
    chunk_corpus, corpus_stats, load_corpus, load_queries, resolve_queries, Article, Corpus, Query,
};
use slab_core::embedmetrics::{
    covered_terms, export_projection, legal_labels, load_terms, lvc, report,
};
use slab_core::encoders::{EmbeddingTable, OovPolicy, Vocab};
use slab_core::evalkit::{accuracy, aggregate_human_eval, load_judgments, macro_f2, prf2, Prf2};
use slab_core::inject::{
    attention_weights_report, hydra_attach, hydra_pretrain, load_bioe, load_sdoi, tag_stats,
    tre_evaluate, tre_model, tre_train, HydraConfig, HydraHead, TokenModel, TokenModelConfig,
    TreTrainConfig,
};
use slab_core::lexical::{tokenize, InvertedIndex, DEFAULT_N_PREDICT};
use slab_core::rankers::{
    build_vocab, f2_at, grid_search_alpha, train_lawfulness, train_ranker, Candidates, CnnQuery,
    LawfulnessClassifier, ModelConfig, RankerModel, Retriever, TrainConfig,
};
use slab_core::selftest::{grad_suite, properties};
use slab_core::tensorcore::Tensor;

use crate::args::{
    AugmentCmd, ClassifyCmd, Command, CorpusCmd, EmbedCmd, EvalCmd, IndexCmd, InjectCmd, RankCmd,
    SelftestCmd,
};
use crate::config::{Alpha, RunConfig};
use crate::heads::{decode_heads, encode_heads};
use crate::output::Run;
use crate::CliError;

/// Seed of the self-test instances when none is given.
const SELFTEST_SEED: u64 = 0;
const GRAD_TOLERANCE: f64 = 1e-4;
const ALPHA_STEP: f64 = 0.01;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("serializable record"));
        out.push('\n');
    }
    out
}

fn chunked_corpus(run: &mut Run, path: &Path) -> Result<Corpus, CliError> {
    run.input(path)?;
    Ok(chunk_corpus(&load_corpus(path)?))
}

fn queries(run: &mut Run, path: &Path) -> Result<Vec<Query>, CliError> {
    run.input(path)?;
    Ok(load_queries(path)?)
}

/// Prints a JSON report and, with `--out`, stores it as `name`.
fn emit(run: &mut Run, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serializable report")
    );
    if run.require_out().is_ok() {
        run.write_json(name, value)?;
    }
    Ok(())
}

/// Rounded to four places, printed in shortest form (`1.0`, `0.5556`).
fn short4(x: f64) -> String {
    format!("{:?}", (x * 1e4).round() / 1e4)
}

fn rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn dispatch(
    name: &str,
    command: &Command,
    cfg: &RunConfig,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut run = Run::new(name, out);
    match command {
        Command::Corpus(c) => corpus(c, &mut run)?,
        Command::Augment(c) => augment(c, cfg, &mut run)?,
        Command::Index(c) => index(c, &mut run)?,
        Command::Rank(c) => rank(c, cfg, &mut run)?,
        Command::Classify(c) => classify(c, cfg, &mut run)?,
        Command::Inject(c) => inject(c, cfg, &mut run)?,
        Command::Embed(c) => embed(c, cfg, &mut run)?,
        Command::Eval(c) => eval(c, cfg, &mut run)?,
        Command::Selftest(c) => selftest(c, cfg, &mut run)?,
    }
    run.finish(cfg)
}

fn corpus(cmd: &CorpusCmd, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        CorpusCmd::Stats { corpus } => {
            let articles = chunked_corpus(run, corpus)?;
            let texts: Vec<&str> = articles.iter().map(|a| a.text.as_str()).collect();
            let statements: Vec<&str> = articles.iter().flat_map(|a| a.segments()).collect();
            let report = json!({
                "articles": corpus_stats(&texts),
                "statements": corpus_stats(&statements),
            });
            emit(run, "stats.json", &report)
        }
        CorpusCmd::Chunk { corpus } => {
            run.require_out()?;
            let articles = chunked_corpus(run, corpus)?;
            run.write("chunks.jsonl", to_jsonl(&articles))?;
            let n: usize = articles.iter().map(|a| a.statements.len()).sum();
            println!("{} articles, {n} statements", articles.len());
            Ok(())
        }
    }
}

fn augment(cmd: &AugmentCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    run.require_out()?;
    match cmd {
        AugmentCmd::Lawfulness {
            corpus,
            queries: qpath,
        } => {
            let articles = chunked_corpus(run, corpus)?;
            let qs = queries(run, qpath)?;
            let records = derive_lawfulness(&articles, &qs);
            run.write("lawfulness.jsonl", to_jsonl(&records))?;
            let lawful = records.iter().filter(|r| r.lawful).count();
            println!(
                "{} records ({lawful} lawful, {} unlawful)",
                records.len(),
                records.len() - lawful
            );
            Ok(())
        }
        AugmentCmd::Negate { input, lang, rules } => {
            let rules = match rules {
                Some(path) => {
                    run.input(path)?;
                    RuleSet::from_tsv(
                        &fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
                    )?
                }
                None => RuleSet::default(),
            };
            run.input(input)?;
            let records: Vec<LabeledStatement> = read_jsonl(input)?;
            for (i, r) in records.iter().enumerate() {
                r.validate()
                    .map_err(|e| invalid(format!("{}:{}: {e}", input.display(), i + 1)))?;
            }
            let out = augment_negation(&records, &rules, *lang);
            run.effective("language", lang);
            run.write("augmented.jsonl", to_jsonl(&out))?;
            println!(
                "{} records -> {} ({} negations)",
                records.len(),
                out.len(),
                out.len() - records.len()
            );
            Ok(())
        }
        AugmentCmd::Nfsp { input } | AugmentCmd::Nmsp { input } => {
            let seed = cfg.require_seed()?;
            let ratio = cfg.neg_ratio.unwrap_or(1.0);
            run.input(input)?;
            let docs = load_bilingual(input)?;
            let nfsp = matches!(cmd, AugmentCmd::Nfsp { .. });
            let mut pairs: Vec<PairExample> = Vec::new();
            for (i, doc) in docs.iter().enumerate() {
                // one stream per document, so adding documents leaves earlier ones unchanged
                let doc_seed = seed.wrapping_add(i as u64);
                let generated = if nfsp {
                    gen_nfsp(doc, doc_seed, ratio)
                } else {
                    gen_nmsp(doc, doc_seed, ratio)
                };
                pairs.extend(generated.map_err(|e| invalid(format!("document {}: {e}", i + 1)))?);
            }
            run.effective("neg_ratio", ratio);
            run.write("pairs.jsonl", to_jsonl(&pairs))?;
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for p in &pairs {
                *counts.entry(format!("{:?}", p.label)).or_default() += 1;
            }
            println!(
                "{} pairs from {} documents: {counts:?}",
                pairs.len(),
                docs.len()
            );
            Ok(())
        }
    }
}

fn index(cmd: &IndexCmd, run: &mut Run) -> Result<(), CliError> {
    let IndexCmd::Build { corpus } = cmd;
    run.require_out()?;
    run.input(corpus)?;
    let idx = InvertedIndex::build(&load_corpus(corpus)?)?;
    let mut bytes = Vec::new();
    idx.write_to(&mut bytes)?;
    run.write("index.bin", bytes)?;
    println!(
        "{} documents, {} terms, avgdl {:.4}",
        idx.n_docs(),
        idx.terms().count(),
        idx.avgdl()
    );
    Ok(())
}

fn load_index(
    run: &mut Run,
    path: Option<&PathBuf>,
    corpus: &[Article],
) -> Result<InvertedIndex, CliError> {
    match path {
        Some(p) => {
            run.input(p)?;
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            let idx = InvertedIndex::read_from(&mut bytes.as_slice())?;
            if idx.n_docs() != corpus.len() || corpus.iter().any(|a| idx.doc_index(&a.id).is_none())
            {
                return Err(invalid("the index was built over a different corpus"));
            }
            Ok(idx)
        }
        None => Ok(InvertedIndex::build(corpus)?),
    }
}

fn retriever<'a>(
    model: &'a RankerModel,
    idx: &'a InvertedIndex,
    corpus: &'a [Article],
    cfg: &RunConfig,
    run: &mut Run,
) -> Retriever<'a> {
    let mut r = Retriever::new(
        model,
        idx,
        corpus,
        cfg.n_predict.unwrap_or(DEFAULT_N_PREDICT),
    );
    r.bm25 = cfg.bm25();
    run.effective("bm25", r.bm25);
    run.effective("n_predict", r.n_predict);
    r
}

fn labelled(qs: &[Query]) -> bool {
    !qs.is_empty() && qs.iter().all(|q| !q.relevant_ids.is_empty())
}

fn rank(cmd: &RankCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let cutoff = cfg.cutoff.unwrap_or(1);
    match cmd {
        RankCmd::Train {
            corpus,
            queries: qpath,
        } => {
            run.require_out()?;
            let seed = cfg.require_seed()?;
            let defaults = ModelConfig::default();
            let cnn_query = cfg.cnn_query.unwrap_or(defaults.cnn_query);
            let mut cnn = cfg.cnn();
            if cnn_query == CnnQuery::FromQuery {
                // the query sentence vector is the attention query, so widths must match
                cnn.attn_query = cnn.filters;
            }
            let model_cfg = ModelConfig {
                kind: cfg.kind.unwrap_or(defaults.kind),
                cnn_query,
                cnn,
                layers: cfg.layers.unwrap_or(defaults.layers),
                heads: cfg.heads.unwrap_or(defaults.heads),
                ..defaults
            };
            let d = TrainConfig::default();
            let train_cfg = TrainConfig {
                lr: cfg.lr.unwrap_or(d.lr),
                epochs: cfg.epochs.unwrap_or(d.epochs),
                negatives: cfg.k.unwrap_or(d.negatives),
                seed,
                n_train: cfg.n_train.or(d.n_train),
            };
            let min_count = cfg.min_count.unwrap_or(1);
            let articles = chunked_corpus(run, corpus)?;
            let qs = queries(run, qpath)?;
            resolve_queries(&articles, &qs)?;
            let vocab = build_vocab(&qs, &articles, min_count);
            let mut model = RankerModel::new(&model_cfg, vocab, seed)?;
            let trace = train_ranker(&mut model, &articles, &qs, &train_cfg)?;
            run.effective("model", &model_cfg);
            run.effective("train", train_cfg);
            run.effective("min_count", min_count);
            model.save(run.require_out()?.join("model"))?;
            run.wrote_dir("model")?;
            run.write_json("loss.json", &trace)?;
            println!(
                "{} steps/epoch, loss {:.6} -> {:.6}",
                qs.iter().map(|q| q.relevant_ids.len()).sum::<usize>(),
                trace.epochs.first().copied().unwrap_or(f64::NAN),
                trace.epochs.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        RankCmd::Run {
            model,
            corpus,
            queries: qpath,
            index: index_path,
            val,
        } => {
            run.require_out()?;
            let grid = match (cfg.alpha, val) {
                (Some(Alpha::Value(_)), _) => false,
                (Some(Alpha::Grid(_)), Some(_)) | (None, Some(_)) => true,
                (Some(Alpha::Grid(_)), None) => {
                    return Err(invalid("`alpha: \"grid\"` needs --val queries"))
                }
                (None, None) => {
                    return Err(invalid(
                        "set `alpha` in the config or pass --val to grid-search it",
                    ))
                }
            };
            run.input(model)?;
            let m = RankerModel::load(model)?;
            let articles = chunked_corpus(run, corpus)?;
            let qs = queries(run, qpath)?;
            let idx = load_index(run, index_path.as_ref(), &articles)?;
            let r = retriever(&m, &idx, &articles, cfg, run);
            let alpha = match (cfg.alpha, val) {
                (Some(Alpha::Value(a)), _) => a,
                (_, Some(vpath)) if grid => {
                    let vq = queries(run, vpath)?;
                    let (a, f2) =
                        grid_search_alpha(&r.candidates_all(&vq)?, &vq, ALPHA_STEP, cutoff)?;
                    println!("alpha* {a} (validation macro-F2@{cutoff} {f2:.4})");
                    a
                }
                _ => unreachable!("alpha source checked above"),
            };
            let cands = r.candidates_all(&qs)?;
            let mut lines = Vec::with_capacity(qs.len());
            for (q, c) in qs.iter().zip(&cands) {
                lines.push(json!({ "qid": q.id, "ranked": c.ranked(alpha)? }));
            }
            run.write("run.jsonl", to_jsonl(&lines))?;
            run.effective("alpha", alpha);
            let mut summary = json!({ "alpha": alpha, "queries": qs.len(), "cutoff": cutoff });
            if labelled(&qs) {
                summary["macro_f2"] = json!(f2_at(&cands, &qs, alpha, cutoff)?);
            }
            emit(run, "report.json", &summary)
        }
        RankCmd::GridAlpha {
            model,
            corpus,
            queries: qpath,
        } => {
            run.input(model)?;
            let m = RankerModel::load(model)?;
            let articles = chunked_corpus(run, corpus)?;
            let qs = queries(run, qpath)?;
            let idx = InvertedIndex::build(&articles)?;
            let r = retriever(&m, &idx, &articles, cfg, run);
            let cands: Vec<Candidates> = r.candidates_all(&qs)?;
            let (alpha, f2) = grid_search_alpha(&cands, &qs, ALPHA_STEP, cutoff)?;
            let lexical = f2_at(&cands, &qs, 1.0, cutoff)?;
            let semantic = f2_at(&cands, &qs, 0.0, cutoff)?;
            emit(
                run,
                "alpha.json",
                &json!({
                    "alpha": alpha,
                    "macro_f2": f2,
                    "lexical_only_f2": lexical,
                    "semantic_only_f2": semantic,
                    "step": ALPHA_STEP,
                    "cutoff": cutoff,
                }),
            )
        }
    }
}

/// A statement to classify; `lawful` is the gold label when present.
#[derive(Deserialize)]
struct StatementLine {
    text: String,
    #[serde(default)]
    lawful: Option<bool>,
}

fn classify(cmd: &ClassifyCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        ClassifyCmd::Train { input } => {
            run.require_out()?;
            let seed = cfg.require_seed()?;
            let d = TrainConfig::default();
            let tc = TrainConfig {
                lr: cfg.lr.unwrap_or(d.lr),
                epochs: cfg.epochs.unwrap_or(d.epochs),
                seed,
                ..d
            };
            let cnn = cfg.cnn();
            run.input(input)?;
            let records: Vec<LabeledStatement> = read_jsonl(input)?;
            let (model, trace) = train_lawfulness(&records, &cnn, &tc)?;
            run.effective("cnn", cnn);
            run.effective("train", tc);
            model.save(run.require_out()?.join("model"))?;
            run.wrote_dir("model")?;
            run.write_json("loss.json", &trace)?;
            println!(
                "{} records, loss {:.6} -> {:.6}",
                records.len(),
                trace.epochs.first().copied().unwrap_or(f64::NAN),
                trace.epochs.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        ClassifyCmd::Run { model, input } => {
            run.input(model)?;
            let m = LawfulnessClassifier::load(model)?;
            run.input(input)?;
            let lines: Vec<StatementLine> = read_jsonl(input)?;
            let mut preds = Vec::with_capacity(lines.len());
            let mut out = Vec::with_capacity(lines.len());
            for l in &lines {
                let p = m.probability(&l.text)?;
                preds.push(p > 0.5);
                out.push(json!({ "text": l.text, "probability": p, "lawful": p > 0.5 }));
            }
            if run.require_out().is_ok() {
                run.write("predictions.jsonl", to_jsonl(&out))?;
            } else {
                print!("{}", to_jsonl(&out));
            }
            let golds: Option<Vec<bool>> = lines.iter().map(|l| l.lawful).collect();
            if let Some(golds) = golds.filter(|g| !g.is_empty()) {
                println!("accuracy {:.4}", accuracy(&preds, &golds)?);
            }
            Ok(())
        }
    }
}

fn token_model_config(cfg: &RunConfig, longest: usize) -> TokenModelConfig {
    let d = TokenModelConfig::default();
    TokenModelConfig {
        d: cfg.d.unwrap_or(d.d),
        layers: cfg.layers.unwrap_or(d.layers),
        heads: cfg.heads.unwrap_or(d.heads),
        max_len: d.max_len.max(longest),
        positions: d.positions,
    }
}

fn inject(cmd: &InjectCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        InjectCmd::HydraPretrain { sdoi, model } => {
            let out = run.require_out()?.to_path_buf();
            let seed = cfg.require_seed()?;
            let d = HydraConfig::default();
            let hc = HydraConfig {
                steps: cfg.steps.unwrap_or(d.steps),
                lr: cfg.lr.unwrap_or(d.lr),
            };
            run.input(sdoi)?;
            let records = load_sdoi(sdoi)?;
            if records.is_empty() {
                return Err(invalid(format!("{}: no SDOI records", sdoi.display())));
            }
            let (body, fresh) = match model {
                Some(dir) => {
                    run.input(dir)?;
                    (TokenModel::load(dir)?, false)
                }
                None => {
                    let vocab = Vocab::build(
                        records
                            .iter()
                            .flat_map(|r| r.tokens.iter().map(String::as_str)),
                        1,
                    );
                    let longest = records.iter().map(|r| r.tokens.len()).max().unwrap_or(0);
                    let tc = token_model_config(cfg, longest);
                    run.effective("body", tc);
                    (TokenModel::new(vocab, &tc, seed)?, true)
                }
            };
            let states = records
                .iter()
                .map(|r| body.hidden(&r.tokens))
                .collect::<slab_core::Result<Vec<_>>>()?;
            let targets: Vec<_> = records.iter().map(|r| r.matrix.clone()).collect();
            let n_heads = cfg.heads.unwrap_or(2);
            let mut heads =
                HydraHead::init(body.d(), n_heads, &mut ChaCha8Rng::seed_from_u64(seed))?;
            let trace = hydra_pretrain(&states, &targets, &mut heads, &hc)?;
            run.effective("hydra", hc);
            run.effective("hydra_heads", n_heads);
            run.write("heads.bin", encode_heads(&heads))?;
            run.write_json("trace.json", &json!({ "loss": trace }))?;
            if fresh {
                body.save(out.join("body"), body.depth())?;
                run.wrote_dir("body")?;
            }
            hydra_attach(&body, &heads)?.save(out.join("model"), body.depth())?;
            run.wrote_dir("model")?;
            println!(
                "{} records, MSE {:.6e} -> {:.6e} over {} steps",
                records.len(),
                trace[0],
                trace[trace.len() - 1],
                hc.steps
            );
            Ok(())
        }
        InjectCmd::HydraAttach { model, heads } => {
            let out = run.require_out()?.to_path_buf();
            run.input(model)?;
            run.input(heads)?;
            let body = TokenModel::load(model)?;
            let hs = decode_heads(&fs::read(heads).map_err(|e| CliError::io(heads, e))?)?;
            let attached = hydra_attach(&body, &hs)?;
            attached.save(out.join("model"), body.depth())?;
            run.wrote_dir("model")?;
            println!("{} layers -> {} layers", body.depth(), attached.depth());
            Ok(())
        }
        InjectCmd::TreTrain { data, val } => {
            let out = run.require_out()?.to_path_buf();
            let seed = cfg.require_seed()?;
            run.input(data)?;
            let train = load_bioe(data)?;
            let held_out = match val {
                Some(p) => {
                    run.input(p)?;
                    Some(load_bioe(p)?)
                }
                None => None,
            };
            let longest = train
                .iter()
                .chain(held_out.iter().flatten())
                .map(|s| s.len())
                .max()
                .unwrap_or(0);
            let tc = token_model_config(cfg, longest);
            let inj = cfg.injection(tc.layers);
            inj.validate(tc.layers)?;
            let d = TreTrainConfig::default();
            let budget = TreTrainConfig {
                epochs: cfg.epochs.unwrap_or(d.epochs),
                lr: cfg.lr.unwrap_or(d.lr),
                seed,
            };
            let mut model = tre_model(&train, &tc, seed)?;
            let outcome = tre_train(&mut model, &inj, &train, &budget)?;
            let (split, eval_data) = match &held_out {
                Some(v) => ("val", v.as_slice()),
                None => ("train", train.as_slice()),
            };
            let metrics = tre_evaluate(&model, &outcome.needles, &inj, eval_data)?;
            run.effective("model", tc);
            run.effective("injection", &inj);
            run.effective("train", budget);
            model.save(out.join("model"), model.depth())?;
            run.wrote_dir("model")?;
            run.write("needles.bin", outcome.needles.params.to_bytes())?;
            run.write_json("loss.json", &json!({ "epochs": outcome.loss_trace }))?;
            emit(
                run,
                "metrics.json",
                &json!({ "split": split, "metrics": metrics }),
            )
        }
        InjectCmd::TagStats { data } => {
            run.input(data)?;
            let samples = load_bioe(data)?;
            emit(
                run,
                "tag_stats.json",
                &json!({ "samples": samples.len(), "tags": tag_stats(&samples) }),
            )
        }
        InjectCmd::AttnReport { model, text } => {
            run.input(model)?;
            let m = TokenModel::load(model)?;
            let tokens: Vec<&str> = text.split_whitespace().collect();
            if tokens.is_empty() {
                return Err(invalid("--text has no tokens"));
            }
            let layers: Vec<Vec<Vec<Vec<f64>>>> = attention_weights_report(&m, &tokens)?
                .iter()
                .map(|heads| heads.iter().map(rows).collect())
                .collect();
            emit(
                run,
                "attention.json",
                &json!({ "tokens": tokens, "layers": layers }),
            )
        }
    }
}

fn sentences(articles: &[Article]) -> Vec<Vec<String>> {
    articles
        .iter()
        .flat_map(|a| a.segments())
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect()
}

fn embed(cmd: &EmbedCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let (embeddings, terms) = match cmd {
        EmbedCmd::Lvc { embeddings, terms }
        | EmbedCmd::Leca {
            embeddings, terms, ..
        }
        | EmbedCmd::Project { embeddings, terms } => (embeddings, terms),
    };
    if matches!(cmd, EmbedCmd::Project { .. }) {
        run.require_out()?;
    }
    run.input(embeddings)?;
    run.input(terms)?;
    let table: EmbeddingTable<f64> = EmbeddingTable::load_text(embeddings, OovPolicy::Skip)?;
    let legal: BTreeSet<String> = load_terms(terms)?;
    match cmd {
        EmbedCmd::Lvc { .. } => {
            let value = lvc(&table, &legal)?;
            emit(
                run,
                "lvc.json",
                &json!({ "lvc": value, "covered_terms": covered_terms(&table, &legal), "legal_terms": legal.len() }),
            )
        }
        EmbedCmd::Leca { corpus, .. } => {
            let articles = chunked_corpus(run, corpus)?;
            emit(
                run,
                "metrics.json",
                &report(&table, &legal, &sentences(&articles))?,
            )
        }
        EmbedCmd::Project { .. } => {
            let top_k = cfg.top_k.unwrap_or(table.len());
            run.effective("top_k", top_k);
            let tsv = export_projection(&table, &legal_labels(&legal), top_k);
            run.write("projection.tsv", &tsv)?;
            println!("{} rows of dimension {}", tsv.lines().count(), table.dim());
            Ok(())
        }
    }
}

fn parse_labels(path: &Path) -> Result<Vec<bool>, CliError> {
    let src = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(invalid(format!(
                "{}:{}: expected a boolean label, got `{other}`",
                path.display(),
                i + 1
            ))),
        })
        .collect()
}

fn print_prf2(s: &Prf2) {
    println!(
        "{} {} {}",
        short4(s.precision),
        short4(s.recall),
        short4(s.f2)
    );
}

fn eval(cmd: &EvalCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    match cmd {
        EvalCmd::Prf2 {
            gold,
            retrieved,
            judgments,
        } => {
            let s = match (gold, retrieved, judgments) {
                (Some(g), Some(r), _) => {
                    let k = cfg.cutoff.unwrap_or(r.len());
                    let g: BTreeSet<&str> = g.iter().map(String::as_str).collect();
                    let r: BTreeSet<&str> = r.iter().take(k).map(String::as_str).collect();
                    prf2(&g, &r)
                }
                (_, _, Some(path)) => {
                    run.input(path)?;
                    macro_f2(&load_judgments(path)?, cfg.cutoff.unwrap_or(usize::MAX))?
                }
                _ => return Err(invalid("pass --gold and --retrieved, or --judgments")),
            };
            print_prf2(&s);
            if run.require_out().is_ok() {
                run.write_json("prf2.json", &s)?;
            }
            Ok(())
        }
        EvalCmd::Accuracy { pred, gold } => {
            run.input(pred)?;
            run.input(gold)?;
            let acc = accuracy(&parse_labels(pred)?, &parse_labels(gold)?)?;
            println!("{acc:.4}");
            if run.require_out().is_ok() {
                run.write_json("accuracy.json", &json!({ "accuracy": acc }))?;
            }
            Ok(())
        }
        EvalCmd::Human { positives, samples } => {
            let score = aggregate_human_eval(positives, *samples)?;
            println!("{score:.4}");
            if run.require_out().is_ok() {
                run.write_json("human.json", &json!({ "score": score }))?;
            }
            Ok(())
        }
    }
}

fn selftest(cmd: &SelftestCmd, cfg: &RunConfig, run: &mut Run) -> Result<(), CliError> {
    let seed = cfg.seed.unwrap_or(SELFTEST_SEED);
    run.effective("seed", seed);
    match cmd {
        SelftestCmd::Gradcheck { instances } => {
            if *instances == 0 {
                return Err(invalid("--instances must be at least 1"));
            }
            let reports = grad_suite(*instances, seed)?;
            let mut failed = 0;
            for r in &reports {
                let ok = r.passed(GRAD_TOLERANCE);
                failed += usize::from(!ok);
                println!(
                    "{:<32} {:.3e} {}",
                    r.name,
                    r.max_rel_err,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if run.require_out().is_ok() {
                let rows: Vec<Value> = reports
                    .iter()
                    .map(|r| json!({ "name": r.name, "instances": r.instances, "max_rel_err": r.max_rel_err }))
                    .collect();
                run.write_json(
                    "gradcheck.json",
                    &json!({ "tolerance": GRAD_TOLERANCE, "checks": rows }),
                )?;
            }
            if failed > 0 {
                return Err(CliError::Runtime(format!(
                    "{failed} of {} gradient checks exceed {GRAD_TOLERANCE:e}",
                    reports.len()
                )));
            }
            Ok(())
        }
        SelftestCmd::Properties { cases } => {
            let reports = properties(*cases, seed);
            for r in &reports {
                println!("{:<32} {}", r.name, if r.passed { "ok" } else { "FAIL" });
            }
            if run.require_out().is_ok() {
                let rows: BTreeMap<&str, bool> = reports
                    .iter()
                    .map(|r| (r.name.as_str(), r.passed))
                    .collect();
                run.write_json("properties.json", &rows)?;
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if failed > 0 {
                return Err(CliError::Runtime(format!("{failed} properties failed")));
            }
            Ok(())
        }
    }
}
