//! Rule-based data generation: negation augmentation, lawfulness labels
//! derived from articles and past queries, and NFSP / NMSP sentence-pair
//! construction over aligned bilingual documents.

mod negation;
mod pairs;

pub use negation::{negate, Language, NegationRule, RuleSet, DEFAULT_RULES_TSV};
pub use pairs::{
    gen_nfsp, gen_nmsp, load_bilingual, BilingualDoc, PairExample, PairLabel, PairTask,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Query};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ArticleChunk,
    EntailedQuery,
    NonEntailedQuery,
    Negated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledStatement {
    pub text: String,
    pub lawful: bool,
    pub provenance: Provenance,
    /// Rank of the negation rule that produced this record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_rank: Option<u32>,
}

impl LabeledStatement {
    pub fn new(text: impl Into<String>, lawful: bool, provenance: Provenance) -> Self {
        Self {
            text: text.into(),
            lawful,
            provenance,
            rule_rank: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if (self.provenance == Provenance::Negated) != self.rule_rank.is_some() {
            return Err(Error::invalid(
                "negated records must carry a rule rank, and only they may",
            ));
        }
        Ok(())
    }
}

/// Turns chunked articles and labelled past queries into lawfulness
/// records: every article statement is lawful, entailed queries are lawful,
/// non-entailed queries are not, unlabelled queries are skipped.
pub fn derive_lawfulness(articles: &[Article], queries: &[Query]) -> Vec<LabeledStatement> {
    let mut out = Vec::new();
    for a in articles {
        for s in a.segments() {
            out.push(LabeledStatement::new(s, true, Provenance::ArticleChunk));
        }
    }
    for q in queries {
        match q.entailment_label {
            Some(true) => out.push(LabeledStatement::new(
                &q.text,
                true,
                Provenance::EntailedQuery,
            )),
            Some(false) => out.push(LabeledStatement::new(
                &q.text,
                false,
                Provenance::NonEntailedQuery,
            )),
            None => {}
        }
    }
    out
}

/// Appends a label-flipped negation for every record a rule fires on.
pub fn augment_negation(
    dataset: &[LabeledStatement],
    rules: &RuleSet,
    language: Language,
) -> Vec<LabeledStatement> {
    let mut out = dataset.to_vec();
    for rec in dataset {
        if let Some((text, rank)) = rules.negate(&rec.text, language) {
            out.push(LabeledStatement {
                text,
                lawful: !rec.lawful,
                provenance: Provenance::Negated,
                rule_rank: Some(rank),
            });
        }
    }
    out
}
