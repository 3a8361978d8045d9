use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The shipped rule table (English and Japanese).
pub const DEFAULT_RULES_TSV: &str = include_str!("../../data/negation_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Ja,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Language::En),
            "ja" => Ok(Language::Ja),
            other => Err(Error::invalid(format!("unknown language `{other}`"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::En => "en",
            Language::Ja => "ja",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationRule {
    pub language: Language,
    pub trigger: String,
    /// Empty means "delete the trigger".
    pub replacement: String,
    pub rank: u32,
}

#[derive(Debug, Clone)]
struct Compiled {
    rule: NegationRule,
    // English triggers match on word boundaries
    pattern: Option<Regex>,
}

/// Ordered negation rules; the lowest-ranked matching rule wins.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Compiled>,
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::from_tsv(DEFAULT_RULES_TSV).expect("shipped rule table is valid")
    }
}

impl RuleSet {
    pub fn new(mut rules: Vec<NegationRule>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rules {
            if r.trigger.is_empty() || r.trigger == r.replacement {
                return Err(Error::invalid(format!(
                    "rule {} ({}) must change a non-empty trigger",
                    r.rank, r.language
                )));
            }
            if !seen.insert((r.language, r.rank)) {
                return Err(Error::invalid(format!(
                    "duplicate rank {} for language {}",
                    r.rank, r.language
                )));
            }
        }
        rules.sort_by_key(|r| (r.language == Language::Ja, r.rank));
        let rules = rules
            .into_iter()
            .map(|rule| {
                let pattern = match rule.language {
                    Language::En => Some(
                        Regex::new(&format!(r"\b{}\b", regex::escape(&rule.trigger)))
                            .expect("escaped pattern"),
                    ),
                    Language::Ja => None,
                };
                Compiled { rule, pattern }
            })
            .collect();
        Ok(Self { rules })
    }

    /// Parses `language<TAB>trigger<TAB>replacement<TAB>rank`, with an
    /// optional header line.
    pub fn from_tsv(src: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() || (i == 0 && line.starts_with("language\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 4 tab-separated columns, got {}", cols.len()),
                });
            }
            let rank = cols[3].trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad rank `{}`", cols[3]),
            })?;
            rules.push(NegationRule {
                language: cols[0].trim().parse()?,
                trigger: cols[1].to_string(),
                replacement: cols[2].to_string(),
                rank,
            });
        }
        Self::new(rules)
    }

    pub fn rules(&self, language: Language) -> impl Iterator<Item = &NegationRule> {
        self.rules
            .iter()
            .map(|c| &c.rule)
            .filter(move |r| r.language == language)
    }

    /// Applies the first matching rule once. English replaces the first
    /// word-bounded occurrence; Japanese replaces the last substring
    /// occurrence.
    pub fn negate(&self, text: &str, language: Language) -> Option<(String, u32)> {
        for c in self.rules.iter().filter(|c| c.rule.language == language) {
            let span = match &c.pattern {
                Some(re) => re.find(text).map(|m| (m.start(), m.end())),
                None => text
                    .rfind(&c.rule.trigger)
                    .map(|s| (s, s + c.rule.trigger.len())),
            };
            if let Some((s, e)) = span {
                return Some((splice(text, s, e, &c.rule.replacement), c.rule.rank));
            }
        }
        None
    }
}

/// Replaces `text[s..e]`; a deletion also drops one adjacent space.
fn splice(text: &str, s: usize, e: usize, replacement: &str) -> String {
    let (mut s, mut e) = (s, e);
    if replacement.is_empty() {
        if text[e..].starts_with(' ') {
            e += 1;
        } else if text[..s].ends_with(' ') {
            s -= 1;
        }
    }
    let mut out = String::with_capacity(text.len() + replacement.len());
    out.push_str(&text[..s]);
    out.push_str(replacement);
    out.push_str(&text[e..]);
    out
}

/// Negates with the shipped rule table.
pub fn negate(text: &str, language: Language) -> Option<(String, u32)> {
    use std::sync::OnceLock;
    static RULES: OnceLock<RuleSet> = OnceLock::new();
    RULES.get_or_init(RuleSet::default).negate(text, language)
}
