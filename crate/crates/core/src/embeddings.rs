//! Pretrained word2vec tables and the word lookup cascade.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use thiserror::Error;

use crate::corpus::{Corpus, Sentence};

/// Upper bound of the Log-Range feature.
pub const LOG_RANGE_MAX: f64 = 12.0;

const NUM_TOKEN: &str = "NUM";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("byte {offset}: malformed header: {reason}")]
    Header { offset: usize, reason: String },
    #[error("byte {offset}: record {record}: {reason}")]
    Record {
        offset: usize,
        record: usize,
        reason: String,
    },
    #[error("byte {offset}: file truncated inside record {record}")]
    Truncated { offset: usize, record: usize },
    #[error("header announces {expected} records, file holds {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    Binary,
    Text,
    /// Binary unless the first record after the header parses as a text line.
    Auto,
}

/// Word vectors with their frequency rank (0-based position in the file).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f32>,
    ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupResult {
    pub vector: Vec<f32>,
    pub found: bool,
    pub rank: Option<usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    /// Builds a table from `(word, vector)` pairs; ranks follow iteration order.
    pub fn from_entries<'a, I>(dim: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec<f32>)>,
    {
        let mut table = EmbeddingTable::new(dim);
        for (rank, (word, v)) in entries.into_iter().enumerate() {
            table.insert(word.to_string(), &v, rank);
        }
        table
    }

    fn insert(&mut self, word: String, v: &[f32], rank: usize) {
        assert_eq!(v.len(), self.dim, "vector length must equal table dim");
        if self.index.contains_key(&word) {
            return;
        }
        self.index.insert(word, self.ranks.len());
        self.vectors.extend_from_slice(v);
        self.ranks.push(rank);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    /// All entries as `(word, vector, rank)`, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32], usize)> + '_ {
        self.index.iter().map(|(w, &i)| {
            (
                w.as_str(),
                &self.vectors[i * self.dim..(i + 1) * self.dim],
                self.ranks[i],
            )
        })
    }

    /// Exact (case-sensitive) entry: vector and rank.
    pub fn get(&self, word: &str) -> Option<(&[f32], usize)> {
        self.index.get(word).map(|&i| {
            (
                &self.vectors[i * self.dim..(i + 1) * self.dim],
                self.ranks[i],
            )
        })
    }

    /// Runs the lookup cascade, returning on the first hit:
    /// leading `#`/`@` stripped, `NUM` for numbers, lowercased,
    /// the lemma (when enabled), lowercased with non-letters removed.
    /// Misses yield a zero vector.
    pub fn lookup(&self, surface: &str, lemma: &str, lemmatize: bool) -> LookupResult {
        for candidate in lookup_candidates(surface, lemma, lemmatize) {
            if let Some((v, rank)) = self.get(&candidate) {
                return LookupResult {
                    vector: v.to_vec(),
                    found: true,
                    rank: Some(rank),
                };
            }
        }
        LookupResult {
            vector: vec![0.0; self.dim],
            found: false,
            rank: None,
        }
    }

    /// Mean of the lookup vectors of all tokens; misses count as zeros.
    pub fn sentence_mean(&self, sentence: &Sentence, lemmatize: bool) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for tok in &sentence.tokens {
            let r = self.lookup(&tok.surface, &tok.lemma, lemmatize);
            for (a, x) in acc.iter_mut().zip(&r.vector) {
                *a += *x as f64;
            }
        }
        let n = sentence.tokens.len().max(1) as f64;
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }
}

/// Every string the lookup cascade may try for the tokens of `corpus`.
/// Passing this to [`load_embeddings`] keeps only the rows a run can use.
pub fn lookup_vocabulary(corpus: &Corpus, lemmatize: bool) -> HashSet<String> {
    corpus
        .sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .flat_map(|t| lookup_candidates(&t.surface, &t.lemma, lemmatize))
        .collect()
}

fn lookup_candidates(surface: &str, lemma: &str, lemmatize: bool) -> Vec<String> {
    let stripped = surface.trim_start_matches(['#', '@']);
    let stripped = if stripped.is_empty() {
        surface
    } else {
        stripped
    };
    let mut out = vec![stripped.to_string()];
    if is_number(stripped) {
        out.push(NUM_TOKEN.to_string());
    }
    let lower = stripped.to_lowercase();
    out.push(lower.clone());
    if lemmatize && !lemma.is_empty() {
        out.push(lemma.to_string());
    }
    let alpha: String = lower.chars().filter(|c| c.is_alphabetic()).collect();
    if !alpha.is_empty() {
        out.push(alpha);
    }
    out
}

/// Optional sign, digits (optionally grouped by thousands commas), at most
/// one decimal point.
pub fn is_number(word: &str) -> bool {
    let body = word.strip_prefix(['+', '-']).unwrap_or(word);
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let int_ok = if int_part.is_empty() {
        frac_part.is_some()
    } else if int_part.contains(',') {
        let mut groups = int_part.split(',');
        let head = groups.next().unwrap_or("");
        all_digits(head) && head.len() <= 3 && groups.all(|g| g.len() == 3 && all_digits(g))
    } else {
        all_digits(int_part)
    };
    let frac_ok = match frac_part {
        None => true,
        Some(f) => all_digits(f) || (f.is_empty() && !int_part.is_empty()),
    };
    int_ok && frac_ok
}

/// `ln(0.1 * rank + 1)` clamped to 12; absent words sit at the top end.
pub fn log_range(rank: Option<usize>) -> f64 {
    match rank {
        Some(r) => (0.1 * r as f64 + 1.0).ln().min(LOG_RANGE_MAX),
        None => LOG_RANGE_MAX,
    }
}

pub fn load_embeddings(
    path: &Path,
    format: EmbeddingFormat,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_embeddings(&bytes, format, vocab_filter)
}

/// Parses word2vec data held in memory.
pub fn parse_embeddings(
    bytes: &[u8],
    format: EmbeddingFormat,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let header = read_header(bytes)?;
    let format = match format {
        EmbeddingFormat::Auto => detect_format(bytes, &header),
        f => f,
    };
    match format {
        EmbeddingFormat::Text => parse_text(bytes, header, vocab_filter),
        _ => {
            let h = header.ok_or_else(|| EmbeddingError::Header {
                offset: 0,
                reason: "binary files need a \"<count> <dim>\" header".into(),
            })?;
            parse_binary(bytes, h, vocab_filter)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Header {
    count: usize,
    dim: usize,
    /// Offset of the first record.
    body: usize,
}

fn read_header(bytes: &[u8]) -> Result<Option<Header>, EmbeddingError> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .unwrap_or(bytes.len());
    let line = std::str::from_utf8(&bytes[..end]).unwrap_or("");
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 2 {
        return Ok(None);
    }
    let (Ok(count), Ok(dim)) = (parts[0].parse::<usize>(), parts[1].parse::<i64>()) else {
        return Ok(None);
    };
    if dim <= 0 {
        return Err(EmbeddingError::Header {
            offset: 0,
            reason: format!("dimension must be positive, got {dim}"),
        });
    }
    Ok(Some(Header {
        count,
        dim: dim as usize,
        body: (end + 1).min(bytes.len()),
    }))
}

fn detect_format(bytes: &[u8], header: &Option<Header>) -> EmbeddingFormat {
    let Some(h) = header else {
        return EmbeddingFormat::Text;
    };
    let rest = &bytes[h.body..];
    let end = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
    let looks_text = std::str::from_utf8(&rest[..end])
        .map(|line| {
            let fields: Vec<&str> = line.split_whitespace().collect();
            fields.len() == h.dim + 1 && fields[1..].iter().all(|f| f.parse::<f32>().is_ok())
        })
        .unwrap_or(false);
    if looks_text || rest.is_empty() {
        EmbeddingFormat::Text
    } else {
        EmbeddingFormat::Binary
    }
}

fn keep(word: &str, filter: Option<&HashSet<String>>) -> bool {
    filter.is_none_or(|f| f.contains(word))
}

fn parse_binary(
    bytes: &[u8],
    h: Header,
    filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table = EmbeddingTable::new(h.dim);
    let mut pos = h.body;
    let mut vec = vec![0.0f32; h.dim];
    for record in 0..h.count {
        while pos < bytes.len() && (bytes[pos] == b'\n' || bytes[pos] == b'\r') {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b' ' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(EmbeddingError::Truncated {
                offset: start,
                record,
            });
        }
        let word = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        if word.is_empty() {
            return Err(EmbeddingError::Record {
                offset: start,
                record,
                reason: "empty word".into(),
            });
        }
        pos += 1;
        let need = h.dim * 4;
        if pos + need > bytes.len() {
            return Err(EmbeddingError::Truncated {
                offset: pos,
                record,
            });
        }
        for (k, chunk) in bytes[pos..pos + need].chunks_exact(4).enumerate() {
            vec[k] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        pos += need;
        if keep(&word, filter) {
            table.insert(word, &vec, record);
        }
    }
    Ok(table)
}

fn parse_text(
    bytes: &[u8],
    header: Option<Header>,
    filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let body = header.map_or(0, |h| h.body);
    let mut dim = header.map(|h| h.dim);
    let mut table: Option<EmbeddingTable> = dim.map(EmbeddingTable::new);
    let mut offset = body;
    let mut record = 0;
    let mut vec = Vec::new();
    for raw in bytes[body..].split(|&b| b == b'\n') {
        let line_offset = offset;
        offset += raw.len() + 1;
        let line = std::str::from_utf8(raw).map_err(|_| EmbeddingError::Record {
            offset: line_offset,
            record,
            reason: "invalid UTF-8".into(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            continue;
        };
        vec.clear();
        for f in fields {
            vec.push(f.parse::<f32>().map_err(|_| EmbeddingError::Record {
                offset: line_offset,
                record,
                reason: format!("not a number: {f:?}"),
            })?);
        }
        let d = *dim.get_or_insert(vec.len());
        if d == 0 || vec.len() != d {
            return Err(EmbeddingError::Record {
                offset: line_offset,
                record,
                reason: format!("expected {d} values, found {}", vec.len()),
            });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(d));
        if keep(word, filter) {
            t.insert(word.to_string(), &vec, record);
        }
        record += 1;
    }
    if let Some(h) = header {
        if h.count != record {
            return Err(EmbeddingError::CountMismatch {
                expected: h.count,
                found: record,
            });
        }
    }
    table.ok_or_else(|| EmbeddingError::Header {
        offset: 0,
        reason: "empty embedding file".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_fixture() -> Vec<u8> {
        let mut b = b"3 4\n".to_vec();
        let rows: [(&str, [f32; 4]); 3] = [
            ("the", [0.5, -1.25, 3.0, 1e-3]),
            ("cat", [1.0, 2.0, -0.0, f32::MIN_POSITIVE]),
            ("sat", [-7.5, 0.1, 0.2, 0.3]),
        ];
        for (w, v) in rows {
            b.extend_from_slice(w.as_bytes());
            b.push(b' ');
            for x in v {
                b.extend_from_slice(&x.to_le_bytes());
            }
            b.push(b'\n');
        }
        b
    }

    #[test]
    fn text_two_records() {
        let t =
            parse_embeddings(b"2 3\nfoo 1 2 3\nbar 4 5 6\n", EmbeddingFormat::Auto, None).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("foo").unwrap(), (&[1.0f32, 2.0, 3.0][..], 0));
        assert_eq!(t.get("bar").unwrap().1, 1);
    }

    #[test]
    fn text_without_header() {
        let t = parse_embeddings(b"foo 1 2\nbar 3 4\n", EmbeddingFormat::Text, None).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("bar").unwrap().1, 1);
    }

    #[test]
    fn binary_bit_exact() {
        let t = parse_embeddings(&binary_fixture(), EmbeddingFormat::Auto, None).unwrap();
        assert_eq!(t.dim(), 4);
        assert_eq!(t.len(), 3);
        let (v, r) = t.get("cat").unwrap();
        assert_eq!(r, 1);
        let bits: Vec<u32> = v.iter().map(|x| x.to_bits()).collect();
        assert_eq!(
            bits,
            [1.0f32, 2.0, -0.0, f32::MIN_POSITIVE].map(f32::to_bits)
        );
        let (v, _) = t.get("the").unwrap();
        assert_eq!(v[3].to_bits(), 1e-3f32.to_bits());
    }

    #[test]
    fn vocab_filter_keeps_rank() {
        let filter: HashSet<String> = ["cat".to_string()].into();
        let t =
            parse_embeddings(&binary_fixture(), EmbeddingFormat::Binary, Some(&filter)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("cat").unwrap().1, 1);
        assert!(t.get("the").is_none());
    }

    #[test]
    fn truncated_binary_reports_offset() {
        let mut b = binary_fixture();
        b.truncate(b.len() - 5);
        match parse_embeddings(&b, EmbeddingFormat::Binary, None) {
            Err(EmbeddingError::Truncated { record: 2, offset }) => assert!(offset > 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            parse_embeddings(b"2 0\n", EmbeddingFormat::Auto, None),
            Err(EmbeddingError::Header { .. })
        ));
        assert!(matches!(
            parse_embeddings(b"3 2\na 1 2\nb 3 4\n", EmbeddingFormat::Text, None),
            Err(EmbeddingError::CountMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            parse_embeddings(b"2 2\na 1 2\nb 3\n", EmbeddingFormat::Text, None),
            Err(EmbeddingError::Record { record: 1, .. })
        ));
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            [
                ("winning", vec![1.0, 0.0]),
                ("NUM", vec![0.0, 1.0]),
                ("cat", vec![2.0, 2.0]),
                ("dont", vec![3.0, 3.0]),
                ("don't", vec![4.0, 4.0]),
                ("go", vec![5.0, 5.0]),
            ],
        )
    }

    #[test]
    fn cascade_examples() {
        let t = table();
        let r = t.lookup("#Winning", "winning", false);
        assert!(r.found);
        assert_eq!(r.vector, [1.0, 0.0]);
        assert_eq!(r.rank, Some(0));

        assert_eq!(t.lookup("3.14", "3.14", false).vector, [0.0, 1.0]);
        assert_eq!(t.lookup("-1,000", "", false).rank, Some(1));

        let miss = t.lookup("qzxv@@", "qzxv@@", false);
        assert!(!miss.found);
        assert_eq!(miss.vector, [0.0, 0.0]);
        assert_eq!(miss.rank, None);
    }

    #[test]
    fn lowercase_beats_alpha_strip() {
        let t = table();
        assert_eq!(t.lookup("DON'T", "do", false).vector, [4.0, 4.0]);
        assert_eq!(t.lookup("Do-nt", "do", false).vector, [3.0, 3.0]);
    }

    #[test]
    fn lemma_step_is_optional() {
        let t = table();
        assert!(!t.lookup("went", "go", false).found);
        assert_eq!(t.lookup("went", "go", true).vector, [5.0, 5.0]);
    }

    #[test]
    fn number_detection() {
        for n in [
            "0",
            "42",
            "-3",
            "+3.5",
            "3.14",
            ".5",
            "1,000",
            "12,345,678.9",
            "7.",
        ] {
            assert!(is_number(n), "{n}");
        }
        for n in [
            "", "-", ".", "1.2.3", "1,00", "12a", "abc", "1,0000", ",100",
        ] {
            assert!(!is_number(n), "{n}");
        }
    }

    #[test]
    fn log_range_values() {
        assert_eq!(log_range(Some(0)), 0.0);
        assert!((log_range(Some(10)) - 2f64.ln()).abs() < 1e-12);
        assert_eq!(log_range(Some(3_000_000)), 12.0);
        assert!(((0.1 * 3_000_000f64 + 1.0).ln() - 12.61).abs() < 0.01);
        assert_eq!(log_range(None), 12.0);
    }

    #[test]
    fn sentence_mean_cases() {
        use crate::corpus::Token;
        let t = table();
        let sent = |words: &[&str]| Sentence {
            sent_id: "s".into(),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::new(i + 1, w, w, "X", "s"))
                .collect(),
            parse: None,
        };
        assert_eq!(t.sentence_mean(&sent(&["zz", "yy"]), false), [0.0, 0.0]);
        assert_eq!(
            t.sentence_mean(&sent(&["zz", "cat", "yy", "xx"]), false),
            [0.5, 0.5]
        );
        // winning (1,0) + cat (2,2) + go (5,5) -> (8/3, 7/3)
        let m = t.sentence_mean(&sent(&["winning", "cat", "go"]), false);
        assert!((m[0] - 8.0 / 3.0).abs() < 1e-6 && (m[1] - 7.0 / 3.0).abs() < 1e-6);
    }
}
