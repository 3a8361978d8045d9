use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation sample of the requisite / effectuation / unless layers.
pub const ANNOTATION_SAMPLE_TSV: &str = include_str!("../../data/annotation_sample.tsv");

/// Number of annotation levels.
pub const LEVELS: usize = 3;

/// Logical-structure part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Part {
    R,
    E,
    U,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::R, Part::E, Part::U];

    fn letter(self) -> char {
        match self {
            Part::R => 'R',
            Part::E => 'E',
            Part::U => 'U',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    B(Part),
    I(Part),
    E(Part),
    O,
}

impl Tag {
    /// Tag-set size.
    pub const COUNT: usize = 10;

    /// `B-R, I-R, E-R, B-E, I-E, E-E, B-U, I-U, E-U, O`.
    pub fn all() -> [Tag; Tag::COUNT] {
        let mut out = [Tag::O; Tag::COUNT];
        for (k, p) in Part::ALL.into_iter().enumerate() {
            out[3 * k] = Tag::B(p);
            out[3 * k + 1] = Tag::I(p);
            out[3 * k + 2] = Tag::E(p);
        }
        out
    }

    pub fn index(self) -> usize {
        let part = |p: Part| Part::ALL.iter().position(|&q| q == p).expect("known part");
        match self {
            Tag::B(p) => 3 * part(p),
            Tag::I(p) => 3 * part(p) + 1,
            Tag::E(p) => 3 * part(p) + 2,
            Tag::O => 9,
        }
    }

    pub fn from_index(i: usize) -> Tag {
        Tag::all()[i]
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::B(p) => write!(f, "B-{}", p.letter()),
            Tag::I(p) => write!(f, "I-{}", p.letter()),
            Tag::E(p) => write!(f, "E-{}", p.letter()),
            Tag::O => f.write_str("O"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    /// `-` reads as `O`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "-" || s == "O" {
            return Ok(Tag::O);
        }
        Tag::all()
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| Error::UnknownTag(s.to_string()))
    }
}

/// Tokens with one tag sequence per level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioeSample {
    pub tokens: Vec<String>,
    pub tags: [Vec<Tag>; LEVELS],
}

/// A labelled span `[start, end]` (inclusive).
pub type Segment = (Part, usize, usize);

impl BioeSample {
    pub fn new(tokens: Vec<String>, tags: [Vec<Tag>; LEVELS]) -> Result<Self> {
        let s = Self { tokens, tags };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Equal lengths and `B ... E` bracketing on every level. `O` may sit
    /// inside an open segment.
    pub fn validate(&self) -> Result<()> {
        for (l, level) in self.tags.iter().enumerate() {
            if level.len() != self.tokens.len() {
                return Err(Error::shape(format!(
                    "level L{} has {} tags for {} tokens",
                    l + 1,
                    level.len(),
                    self.tokens.len()
                )));
            }
            let mut open: Option<Part> = None;
            for (i, &t) in level.iter().enumerate() {
                let bad = |msg: &str| {
                    Error::invalid(format!(
                        "L{} token {} (`{}`): {msg}",
                        l + 1,
                        i + 1,
                        self.tokens[i]
                    ))
                };
                match t {
                    Tag::B(p) => {
                        if open.is_some() {
                            return Err(bad(&format!("{t} inside an open segment")));
                        }
                        open = Some(p);
                    }
                    Tag::I(p) if open != Some(p) => {
                        return Err(bad(&format!("{t} without an open segment")))
                    }
                    Tag::E(p) if open != Some(p) => {
                        return Err(bad(&format!("{t} without an open segment")))
                    }
                    Tag::E(_) => open = None,
                    Tag::I(_) | Tag::O => {}
                }
            }
            if let Some(p) = open {
                return Err(Error::invalid(format!(
                    "L{} leaves a {} segment open",
                    l + 1,
                    p.letter()
                )));
            }
        }
        Ok(())
    }

    pub fn segments(&self, level: usize) -> BTreeSet<Segment> {
        segments(&self.tags[level])
    }
}

/// Spans from a `B-x` to the next `E-x`. Lenient: stray tags are ignored
/// and a new `B` restarts the open span, so malformed predictions still
/// yield their well-bracketed parts.
pub fn segments(tags: &[Tag]) -> BTreeSet<Segment> {
    let mut out = BTreeSet::new();
    let mut open: Option<(Part, usize)> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Tag::B(p) => open = Some((p, i)),
            Tag::E(p) => {
                if let Some((q, s)) = open {
                    if q == p {
                        out.insert((p, s, i));
                        open = None;
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// TSV `token<TAB>L1<TAB>L2<TAB>L3`, blank line between samples.
pub fn parse_bioe(src: &str) -> Result<Vec<BioeSample>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags: [Vec<Tag>; LEVELS] = Default::default();
    let mut start = 1;
    let mut flush =
        |tokens: &mut Vec<String>, tags: &mut [Vec<Tag>; LEVELS], start: usize| -> Result<()> {
            if tokens.is_empty() {
                return Ok(());
            }
            let s = BioeSample::new(std::mem::take(tokens), std::mem::take(tags)).map_err(|e| {
                Error::Parse {
                    line: start,
                    msg: e.to_string(),
                }
            })?;
            out.push(s);
            Ok(())
        };
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, start)?;
            start = i + 2;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 1 + LEVELS {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 tab-separated columns, got {}", cols.len()),
            });
        }
        tokens.push(cols[0].to_string());
        for l in 0..LEVELS {
            tags[l].push(cols[l + 1].trim().parse()?);
        }
    }
    flush(&mut tokens, &mut tags, start)?;
    Ok(out)
}

pub fn load_bioe(path: impl AsRef<Path>) -> Result<Vec<BioeSample>> {
    parse_bioe(&fs::read_to_string(path)?)
}

/// Writes samples in the TSV layout, `O` as `-`.
pub fn to_tsv(data: &[BioeSample]) -> String {
    let mut out = String::new();
    for (k, s) in data.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for i in 0..s.len() {
            out.push_str(&s.tokens[i]);
            for level in &s.tags {
                out.push('\t');
                match level[i] {
                    Tag::O => out.push('-'),
                    t => out.push_str(&t.to_string()),
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Counts of every tag over all levels; absent tags count 0.
pub fn tag_stats(data: &[BioeSample]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> =
        Tag::all().iter().map(|t| (t.to_string(), 0)).collect();
    for s in data {
        for level in &s.tags {
            for t in level {
                *counts.get_mut(&t.to_string()).expect("all tags present") += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annotation_sample_loads() {
        let data = parse_bioe(ANNOTATION_SAMPLE_TSV).unwrap();
        assert_eq!(data.len(), 1);
        let s = &data[0];
        assert_eq!(s.tokens[0], "Gifts");
        assert_eq!(
            [s.tags[0][0], s.tags[1][0], s.tags[2][0]],
            [Tag::B(Part::R), Tag::B(Part::E), Tag::O]
        );
        let stats = tag_stats(&data);
        assert_eq!(stats.values().sum::<usize>(), 3 * s.len());
        assert_eq!(stats["B-R"], 2);
        assert_eq!(stats["B-U"], 1);
        assert_eq!(s.segments(1).len(), 2);
        assert_eq!(parse_bioe(&to_tsv(&data)).unwrap(), data);
    }

    #[test]
    fn empty_stats() {
        let stats = tag_stats(&[]);
        assert_eq!(stats.len(), 10);
        assert!(stats.values().all(|&c| c == 0));
    }

    #[test]
    fn tag_codes() {
        for (i, t) in Tag::all().into_iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), t);
        }
        assert_eq!("-".parse::<Tag>().unwrap(), Tag::O);
        let err = "B-X".parse::<Tag>().unwrap_err();
        assert!(err.to_string().contains("B-X"));
    }

    #[test]
    fn bracketing() {
        let t = |s: &str| -> Vec<Tag> { s.split(' ').map(|x| x.parse().unwrap()).collect() };
        let toks = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
        let ok = |l1: &str| BioeSample::new(toks(3), [t(l1), t("O O O"), t("O O O")]);
        assert!(ok("B-R I-R E-R").is_ok());
        assert!(ok("B-R O E-R").is_ok());
        assert!(ok("E-R O O").is_err());
        assert!(ok("B-R B-R E-R").is_err());
        assert!(ok("B-R I-E E-R").is_err());
        assert!(ok("B-R I-R O").is_err());
        assert!(BioeSample::new(toks(2), [t("O O O"), t("O O"), t("O O")]).is_err());
        assert!(parse_bioe("a\tB-R\tO\n").is_err());
    }

    #[test]
    fn lenient_segments() {
        let t = |s: &str| -> Vec<Tag> { s.split(' ').map(|x| x.parse().unwrap()).collect() };
        let segs = segments(&t("B-R E-E B-R I-R E-R E-R O"));
        assert_eq!(segs.into_iter().collect::<Vec<_>>(), vec![(Part::R, 2, 4)]);
    }
}
