//! Reading and writing the 9-column DiMSUM corpus format, and conversion
//! between per-token MWE tags and [`SemanticUnit`] groupings.
//!
//! Columns: index, surface, lemma, POS, MWE tag, MWE parent, strength,
//! supersense, sentence id. Sentences are separated by blank lines.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::features::DependencyParse;

/// Sense label used for units without a supersense.
pub const UNKNOWN_SENSE: &str = "unknown";

const N_FIELDS: usize = 9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected {N_FIELDS} tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: {field} is not a non-negative integer: {value:?}")]
    BadInteger {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: MWE tag {tag:?} is not one of O o B b I i")]
    BadTag { line: usize, tag: String },
    #[error("line {line}: expected token index {expected}, found {found}")]
    BadIndex {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: parent {parent} of token {index} does not precede it")]
    ForwardParent {
        line: usize,
        index: usize,
        parent: usize,
    },
    #[error("line {line}: tag {tag} is inconsistent with parent {parent}")]
    TagParentMismatch {
        line: usize,
        tag: MweTag,
        parent: usize,
    },
    #[error("sentence {sent_id:?}, token {index}: {reason}")]
    Structure {
        sent_id: String,
        index: usize,
        reason: String,
    },
    #[error("invalid units: {0}")]
    Units(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// DiMSUM MWE tag. Lowercase variants mark tokens inside the gap of an
/// uppercase-tagged unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MweTag {
    Outside,
    Begin,
    Inside,
    GapOutside,
    GapBegin,
    GapInside,
}

impl MweTag {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "O" => MweTag::Outside,
            "B" => MweTag::Begin,
            "I" => MweTag::Inside,
            "o" => MweTag::GapOutside,
            "b" => MweTag::GapBegin,
            "i" => MweTag::GapInside,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MweTag::Outside => "O",
            MweTag::Begin => "B",
            MweTag::Inside => "I",
            MweTag::GapOutside => "o",
            MweTag::GapBegin => "b",
            MweTag::GapInside => "i",
        }
    }

    /// `I` or `i`: the token continues a unit and must have a parent.
    pub fn is_continuation(self) -> bool {
        matches!(self, MweTag::Inside | MweTag::GapInside)
    }
}

impl fmt::Display for MweTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus row.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    pub lemma: String,
    pub pos: String,
    pub mwe_tag: MweTag,
    pub mwe_parent: usize,
    /// Weak/strong MWE marker, carried through verbatim and never modeled.
    pub strength: String,
    pub supersense: String,
    pub sent_id: String,
}

impl Token {
    /// A plain standalone token, handy for building sentences in code.
    pub fn new(index: usize, surface: &str, lemma: &str, pos: &str, sent_id: &str) -> Self {
        Token {
            index,
            surface: surface.to_string(),
            lemma: lemma.to_string(),
            pos: pos.to_string(),
            mwe_tag: MweTag::Outside,
            mwe_parent: 0,
            strength: String::new(),
            supersense: String::new(),
            sent_id: sent_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub sent_id: String,
    pub tokens: Vec<Token>,
    pub parse: Option<DependencyParse>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at 1-based position `index`.
    pub fn token(&self, index: usize) -> &Token {
        &self.tokens[index - 1]
    }

    /// Replaces the MWE and sense columns with the given units.
    pub fn set_units(&mut self, units: &[SemanticUnit]) -> Result<(), CorpusError> {
        let tags = tags_from_units(units, self.tokens.len())?;
        for (tok, t) in self.tokens.iter_mut().zip(tags) {
            tok.mwe_tag = t.tag;
            tok.mwe_parent = t.parent;
            tok.supersense = t.supersense;
        }
        Ok(())
    }
}

/// A group of token positions (gaps allowed) with one sense label.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemanticUnit {
    pub positions: Vec<usize>,
    pub sense: String,
}

impl SemanticUnit {
    pub fn new(positions: Vec<usize>, sense: impl Into<String>) -> Self {
        SemanticUnit {
            positions,
            sense: sense.into(),
        }
    }

    pub fn singleton(position: usize, sense: impl Into<String>) -> Self {
        Self::new(vec![position], sense)
    }

    pub fn first(&self) -> usize {
        self.positions[0]
    }

    pub fn last(&self) -> usize {
        *self.positions.last().expect("unit has at least one member")
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_multiword(&self) -> bool {
        self.positions.len() > 1
    }

    /// True if `pos` lies strictly inside this unit's span without being a member.
    pub fn gap_contains(&self, pos: usize) -> bool {
        pos > self.first() && pos < self.last() && self.positions.binary_search(&pos).is_err()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    /// Distinct sense labels, `unknown` first, then in order of first appearance.
    pub sense_inventory: Vec<String>,
}

impl Corpus {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let sense_inventory = collect_inventory(&sentences);
        Corpus {
            sentences,
            sense_inventory,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sense_index(&self, sense: &str) -> Option<usize> {
        self.sense_inventory.iter().position(|s| s == sense)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Attaches one parse per sentence, in order.
    pub fn attach_parses(&mut self, parses: Vec<DependencyParse>) -> Result<(), CorpusError> {
        if parses.len() != self.sentences.len() {
            return Err(CorpusError::Units(format!(
                "{} parses for {} sentences",
                parses.len(),
                self.sentences.len()
            )));
        }
        for (s, p) in self.sentences.iter_mut().zip(parses) {
            if p.len() != s.len() {
                return Err(CorpusError::Structure {
                    sent_id: s.sent_id.clone(),
                    index: 0,
                    reason: format!("parse has {} tokens, sentence has {}", p.len(), s.len()),
                });
            }
            s.parse = Some(p);
        }
        Ok(())
    }
}

fn collect_inventory(sentences: &[Sentence]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut inv = vec![UNKNOWN_SENSE.to_string()];
    seen.insert(UNKNOWN_SENSE.to_string());
    for tok in sentences.iter().flat_map(|s| &s.tokens) {
        if !tok.supersense.is_empty() && seen.insert(tok.supersense.clone()) {
            inv.push(tok.supersense.clone());
        }
    }
    inv
}

fn parse_uint(line: usize, field: &'static str, value: &str) -> Result<usize, CorpusError> {
    value.parse().map_err(|_| CorpusError::BadInteger {
        line,
        field,
        value: value.to_string(),
    })
}

/// Reads a corpus. Field-level problems are reported with their 1-based
/// line number; unit structure is checked by [`units_from_tags`].
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();

    let flush = |current: &mut Vec<Token>, sentences: &mut Vec<Sentence>| {
        if !current.is_empty() {
            let tokens = std::mem::take(current);
            sentences.push(Sentence {
                sent_id: tokens[0].sent_id.clone(),
                tokens,
                parse: None,
            });
        }
    };

    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            flush(&mut current, &mut sentences);
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != N_FIELDS {
            return Err(CorpusError::FieldCount {
                line: lineno,
                found: fields.len(),
            });
        }
        let index = parse_uint(lineno, "index", fields[0])?;
        let expected = current.len() + 1;
        if index != expected {
            return Err(CorpusError::BadIndex {
                line: lineno,
                expected,
                found: index,
            });
        }
        let mwe_tag = MweTag::parse(fields[4]).ok_or_else(|| CorpusError::BadTag {
            line: lineno,
            tag: fields[4].to_string(),
        })?;
        let mwe_parent = parse_uint(lineno, "parent", fields[5])?;
        if mwe_parent >= index {
            return Err(CorpusError::ForwardParent {
                line: lineno,
                index,
                parent: mwe_parent,
            });
        }
        if mwe_tag.is_continuation() != (mwe_parent != 0) {
            return Err(CorpusError::TagParentMismatch {
                line: lineno,
                tag: mwe_tag,
                parent: mwe_parent,
            });
        }
        current.push(Token {
            index,
            surface: fields[1].to_string(),
            lemma: fields[2].to_string(),
            pos: fields[3].to_string(),
            mwe_tag,
            mwe_parent,
            strength: fields[6].to_string(),
            supersense: fields[7].to_string(),
            sent_id: fields[8].to_string(),
        });
    }
    flush(&mut current, &mut sentences);
    Ok(Corpus::new(sentences))
}

pub fn read_corpus_str(text: &str) -> Result<Corpus, CorpusError> {
    read_corpus(text.as_bytes())
}

/// Writes a corpus, one blank line after every sentence. Each sentence's
/// tag structure is validated first.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for sentence in &corpus.sentences {
        units_from_tags(sentence)?;
        for t in &sentence.tokens {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index,
                t.surface,
                t.lemma,
                t.pos,
                t.mwe_tag,
                t.mwe_parent,
                t.strength,
                t.supersense,
                t.sent_id
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_corpus_string(corpus: &Corpus) -> Result<String, CorpusError> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf)?;
    Ok(String::from_utf8(buf).expect("corpus fields are UTF-8"))
}

/// Groups a sentence's tokens into units. Standalone words become 1-token
/// units; a unit's sense is the supersense of its first token, or
/// `unknown` when empty.
pub fn units_from_tags(sentence: &Sentence) -> Result<Vec<SemanticUnit>, CorpusError> {
    let n = sentence.tokens.len();
    let structure = |index: usize, reason: String| CorpusError::Structure {
        sent_id: sentence.sent_id.clone(),
        index,
        reason,
    };

    let mut unit_of: Vec<Option<usize>> = vec![None; n + 1];
    let mut units: Vec<SemanticUnit> = Vec::new();
    for (k, tok) in sentence.tokens.iter().enumerate() {
        let index = k + 1;
        if tok.index != index {
            return Err(structure(
                index,
                format!("token index {} out of order", tok.index),
            ));
        }
        if tok.mwe_parent == 0 {
            let sense = if tok.supersense.is_empty() {
                UNKNOWN_SENSE.to_string()
            } else {
                tok.supersense.clone()
            };
            unit_of[index] = Some(units.len());
            units.push(SemanticUnit::singleton(index, sense));
        } else {
            let parent = tok.mwe_parent;
            let u = match unit_of.get(parent).copied().flatten() {
                Some(u) if parent < index => u,
                _ => return Err(structure(index, format!("dangling parent {parent}"))),
            };
            if units[u].last() != parent {
                return Err(structure(
                    index,
                    format!("parent {parent} is not the latest member of its unit"),
                ));
            }
            if !tok.supersense.is_empty() {
                return Err(structure(
                    index,
                    "supersense on a non-initial unit member".to_string(),
                ));
            }
            units[u].positions.push(index);
            unit_of[index] = Some(u);
        }
    }

    let canonical = tags_from_units(&units, n).map_err(|e| structure(0, e.to_string()))?;
    for (tok, t) in sentence.tokens.iter().zip(&canonical) {
        if tok.mwe_tag != t.tag {
            return Err(structure(
                tok.index,
                format!(
                    "tag {} where the unit structure requires {}",
                    tok.mwe_tag, t.tag
                ),
            ));
        }
    }
    Ok(units)
}

/// Per-token columns regenerated from units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenTags {
    pub tag: MweTag,
    pub parent: usize,
    pub supersense: String,
}

/// Inverse of [`units_from_tags`]. Tokens not covered by any unit are
/// written as standalone `O` words.
///
/// A multiword unit may start inside the gap of at most one other
/// multiword unit and must then end inside that gap too.
pub fn tags_from_units(
    units: &[SemanticUnit],
    n_tokens: usize,
) -> Result<Vec<TokenTags>, CorpusError> {
    let mut owner: Vec<Option<usize>> = vec![None; n_tokens + 1];
    for (u, unit) in units.iter().enumerate() {
        if unit.positions.is_empty() {
            return Err(CorpusError::Units(format!("unit {u} has no members")));
        }
        for (k, &p) in unit.positions.iter().enumerate() {
            if p == 0 || p > n_tokens {
                return Err(CorpusError::Units(format!(
                    "position {p} outside 1..={n_tokens}"
                )));
            }
            if k > 0 && unit.positions[k - 1] >= p {
                return Err(CorpusError::Units(format!(
                    "positions of unit {u} are not strictly increasing"
                )));
            }
            if owner[p].replace(u).is_some() {
                return Err(CorpusError::Units(format!(
                    "token {p} belongs to two units"
                )));
            }
        }
    }

    let implicit: Vec<SemanticUnit> = (1..=n_tokens)
        .filter(|&p| owner[p].is_none())
        .map(|p| SemanticUnit::singleton(p, UNKNOWN_SENSE))
        .collect();
    let multi: Vec<&SemanticUnit> = units.iter().filter(|u| u.is_multiword()).collect();
    let mut tags: Vec<TokenTags> = (1..=n_tokens)
        .map(|_| TokenTags {
            tag: MweTag::Outside,
            parent: 0,
            supersense: String::new(),
        })
        .collect();

    for unit in units.iter().chain(&implicit) {
        let mut enclosing = 0;
        for other in &multi {
            if std::ptr::eq(*other, unit) || !other.gap_contains(unit.first()) {
                continue;
            }
            if unit.last() > other.last() {
                return Err(CorpusError::Units(format!(
                    "unit starting at {} crosses the unit spanning {}..{}",
                    unit.first(),
                    other.first(),
                    other.last()
                )));
            }
            enclosing += 1;
        }
        if unit.is_multiword() && enclosing > 1 {
            return Err(CorpusError::Units(format!(
                "unit starting at {} is nested deeper than two levels",
                unit.first()
            )));
        }
        let in_gap = enclosing > 0;
        for (k, &p) in unit.positions.iter().enumerate() {
            let tag = match (k, unit.is_multiword(), in_gap) {
                (0, false, false) => MweTag::Outside,
                (0, false, true) => MweTag::GapOutside,
                (0, true, false) => MweTag::Begin,
                (0, true, true) => MweTag::GapBegin,
                (_, _, false) => MweTag::Inside,
                (_, _, true) => MweTag::GapInside,
            };
            let t = &mut tags[p - 1];
            t.tag = tag;
            t.parent = if k == 0 { 0 } else { unit.positions[k - 1] };
            if k == 0 && unit.sense != UNKNOWN_SENSE {
                t.supersense = unit.sense.clone();
            }
        }
    }
    Ok(tags)
}
