//! Per-word and per-pair input features: character hash vectors,
//! heuristic word features and inter-word distance features.

mod bundle;
mod parse;

pub use bundle::{Ablation, FeatureConfig, PreparedSentence, TokenFeatures};
pub use parse::{read_conll, DependencyParse, ParseError};

use std::fmt;
use std::str::FromStr;

use crate::corpus::Sentence;
use crate::embeddings::{is_number, log_range, LookupResult};

/// Length of [`WordFeatures`].
pub const WORD_FEATURE_DIM: usize = 15;
/// Length of [`DistanceFeatures`].
pub const DISTANCE_FEATURE_DIM: usize = 4;

/// Names of the word features, in vector order.
pub const WORD_FEATURE_NAMES: [&str; WORD_FEATURE_DIM] = [
    "Cap-First",
    "Cap-Norm",
    "Cap-Ratio",
    "Has-NAlpha",
    "Has-Num",
    "Has-Prime",
    "Is-At",
    "Is-Hash",
    "Is-Num",
    "Is-Punct",
    "Is-Unk",
    "Is-Url",
    "Log-Range",
    "Quot-Pre",
    "Quot-Post",
];

pub const DISTANCE_FEATURE_NAMES: [&str; DISTANCE_FEATURE_DIM] =
    ["Gap", "Par-Dist", "Par-Parent", "Inter-Qt"];

const PUNCT_CHARS: &[char] = &[
    '!', '?', '.', ',', ';', ':', '{', '}', '[', ']', '(', ')', '/',
];
const QUOTE_CHARS: &[char] = &['"', '\u{201c}', '\u{201d}'];

/// Which words receive a character hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashMode {
    /// Out-of-vocabulary words only; found words get a zero vector.
    UnknownOnly,
    AllWords,
}

impl FromStr for HashMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "unknown_only" | "unknown-only" => Ok(HashMode::UnknownOnly),
            "all_words" | "all-words" => Ok(HashMode::AllWords),
            _ => Err(format!(
                "hash mode must be unknown_only or all_words, got {s:?}"
            )),
        }
    }
}

impl fmt::Display for HashMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HashMode::UnknownOnly => "unknown_only",
            HashMode::AllWords => "all_words",
        })
    }
}

/// How the Gap feature counts the distance between positions `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMode {
    /// `j - i - 1`: adjacent words have gap 0.
    Intervening,
    /// `j - i`.
    Offset,
}

impl FromStr for GapMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "intervening" => Ok(GapMode::Intervening),
            "offset" => Ok(GapMode::Offset),
            _ => Err(format!("gap mode must be intervening or offset, got {s:?}")),
        }
    }
}

impl fmt::Display for GapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapMode::Intervening => "intervening",
            GapMode::Offset => "offset",
        })
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// splitmix64 finalizer.
fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ±1 vector from the bits of a 64-bit character hash of `word`.
///
/// `dim` must be a power of two no larger than 64.
pub fn char_hash(word: &str, dim: usize, alpha_only: bool) -> Vec<f32> {
    assert!(
        dim.is_power_of_two() && dim <= 64,
        "hash dim must be a power of two <= 64, got {dim}"
    );
    let kept: String = if alpha_only {
        word.chars().filter(|c| c.is_alphabetic()).collect()
    } else {
        word.to_string()
    };
    if kept.is_empty() {
        return vec![-1.0; dim];
    }
    let h = avalanche(fnv1a64(kept.as_bytes()));
    (0..dim)
        .map(|d| if (h >> d) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

pub fn word_hash_feature(
    word: &str,
    found: bool,
    mode: HashMode,
    dim: usize,
    alpha_only: bool,
) -> Vec<f32> {
    match mode {
        HashMode::UnknownOnly if found => vec![0.0; dim],
        _ => char_hash(word, dim, alpha_only),
    }
}

/// A token that stands for a double quote.
pub fn is_quote_token(word: &str) -> bool {
    matches!(word, "``" | "''")
        || (!word.is_empty() && word.chars().all(|c| QUOTE_CHARS.contains(&c)))
}

fn sign(b: bool) -> f64 {
    if b {
        1.0
    } else {
        -1.0
    }
}

/// The 15 heuristic features of the token at 1-based position `i`.
pub type WordFeatures = [f64; WORD_FEATURE_DIM];

pub fn word_features(sentence: &Sentence, i: usize, lookup: &LookupResult) -> WordFeatures {
    let n = sentence.len();
    assert!(i >= 1 && i <= n, "token {i} outside 1..={n}");
    let w = sentence.token(i).surface.as_str();
    let chars: Vec<char> = w.chars().collect();
    let cap_first = chars.first().is_some_and(|c| c.is_uppercase());
    let upper = chars.iter().filter(|c| c.is_uppercase()).count();
    let cap_ratio = if chars.is_empty() {
        0.0
    } else {
        upper as f64 / chars.len() as f64
    };
    let quote_at = |k: usize| k >= 1 && k <= n && is_quote_token(&sentence.token(k).surface);
    [
        sign(cap_first),
        if cap_first { 1.0 / n as f64 } else { 0.0 },
        cap_ratio,
        sign(chars.iter().any(|c| !c.is_alphabetic())),
        sign(chars.iter().any(|c| c.is_ascii_digit())),
        sign(chars.iter().any(|&c| c == '\'' || c == '\u{2019}')),
        sign(w.starts_with('@')),
        sign(w.starts_with('#')),
        sign(w == "NUM" || is_number(w)),
        sign(
            chars
                .iter()
                .any(|c| PUNCT_CHARS.contains(c) || QUOTE_CHARS.contains(c))
                || is_quote_token(w),
        ),
        sign(!lookup.found),
        sign(w == "URL"),
        log_range(lookup.rank),
        sign(quote_at(i - 1)),
        sign(quote_at(i + 1)),
    ]
}

/// Gap, Par-Dist, Par-Parent, Inter-Qt for positions `i < j`.
pub type DistanceFeatures = [f64; DISTANCE_FEATURE_DIM];

#[derive(Debug, thiserror::Error)]
pub enum DistanceError {
    #[error("distance features need i < j, got i={i} j={j}")]
    Order { i: usize, j: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Maps a hierarchical distance onto its three gradations.
pub fn par_dist_grade(distance: usize) -> f64 {
    match distance {
        1 => 2.0,
        2 => 0.0,
        _ => -1.5,
    }
}

pub fn distance_features(
    sentence: &Sentence,
    parse: Option<&DependencyParse>,
    i: usize,
    j: usize,
    gap_mode: GapMode,
) -> Result<DistanceFeatures, DistanceError> {
    if i >= j || j > sentence.len() || i == 0 {
        return Err(DistanceError::Order { i, j });
    }
    let gap = match gap_mode {
        GapMode::Intervening => j - i - 1,
        GapMode::Offset => j - i,
    } as f64
        / 8.0;
    let (par_dist, par_parent) = match parse {
        Some(p) => (
            par_dist_grade(p.hierarchical_distance(i, j)?),
            sign(p.is_head_child(i, j)),
        ),
        None => (-1.5, -1.0),
    };
    let inter_qt = sign((i + 1..j).any(|k| is_quote_token(&sentence.token(k).surface)));
    Ok([gap, par_dist, par_parent, inter_qt])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use crate::embeddings::EmbeddingTable;

    fn sentence(words: &[&str]) -> Sentence {
        Sentence {
            sent_id: "s".into(),
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::new(i + 1, w, w, "X", "s"))
                .collect(),
            parse: None,
        }
    }

    #[test]
    fn hash_is_deterministic_and_signed() {
        let a = char_hash("bucket", 64, false);
        assert_eq!(a, char_hash("bucket", 64, false));
        assert!(a.iter().all(|&x| x == 1.0 || x == -1.0));
        assert_eq!(char_hash("ab1c", 64, true), char_hash("abc", 64, true));
        assert_ne!(char_hash("ab1c", 64, false), char_hash("abc", 64, false));
        assert_eq!(char_hash("123", 16, true), vec![-1.0; 16]);
    }

    #[test]
    fn hash_prefix_consistent_across_dims() {
        let long = char_hash("kick", 64, false);
        assert_eq!(&long[..16], &char_hash("kick", 16, false)[..]);
    }

    #[test]
    fn abc_abd_differ() {
        let a = char_hash("abc", 64, true);
        let b = char_hash("abd", 64, true);
        assert!(a.iter().zip(&b).filter(|(x, y)| x != y).count() >= 1);
    }

    #[test]
    fn known_hash_value() {
        // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(avalanche(0), 0);
    }

    #[test]
    fn hash_bit_agreement_near_half() {
        use rand::{distributions::Alphanumeric, Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut agree = 0usize;
        let pairs = 10_000;
        for _ in 0..pairs {
            let mut word = || -> String {
                let len = rng.gen_range(3..10);
                (&mut rng)
                    .sample_iter(&Alphanumeric)
                    .take(len)
                    .map(char::from)
                    .collect()
            };
            let (a, b) = (word(), word());
            let (ha, hb) = (char_hash(&a, 64, false), char_hash(&b, 64, false));
            agree += ha.iter().zip(&hb).filter(|(x, y)| x == y).count();
        }
        let rate = agree as f64 / (pairs * 64) as f64;
        assert!((rate - 0.5).abs() <= 0.05, "agreement {rate}");
    }

    #[test]
    fn hash_modes() {
        let h = char_hash("word", 16, false);
        assert_eq!(
            word_hash_feature("word", true, HashMode::UnknownOnly, 16, false),
            vec![0.0; 16]
        );
        assert_eq!(
            word_hash_feature("word", true, HashMode::AllWords, 16, false),
            h
        );
        assert_eq!(
            word_hash_feature("word", false, HashMode::UnknownOnly, 16, false),
            h
        );
        assert_eq!(
            word_hash_feature("word", false, HashMode::AllWords, 16, false),
            h
        );
    }

    #[test]
    fn hello_features() {
        let s = sentence(&["Hello", "a", "b", "c", "d", "e", "f", "g", "h", "i"]);
        let table = EmbeddingTable::from_entries(1, [("Hello", vec![1.0])]);
        let look = table.lookup("Hello", "hello", false);
        let f = word_features(&s, 1, &look);
        assert_eq!(f[0], 1.0);
        assert!((f[1] - 0.1).abs() < 1e-12);
        assert!((f[2] - 0.2).abs() < 1e-12);
        assert_eq!(f[3], -1.0);
        assert_eq!(f[10], -1.0);
        assert_eq!(f[12], 0.0);
        assert_eq!(f[13], -1.0);
    }

    #[test]
    fn marker_word_features() {
        let s = sentence(&[
            "\"", "@user", "URL", "#tag", "3,000", "don't", "x/y", "\u{201d}",
        ]);
        let miss = LookupResult {
            vector: vec![],
            found: false,
            rank: None,
        };
        let at = word_features(&s, 2, &miss);
        assert_eq!((at[6], at[3]), (1.0, 1.0));
        assert_eq!(at[13], 1.0, "quote before @user");
        assert_eq!(at[10], 1.0);
        assert_eq!(at[12], 12.0);
        assert_eq!(word_features(&s, 3, &miss)[11], 1.0);
        assert_eq!(word_features(&s, 4, &miss)[7], 1.0);
        let num = word_features(&s, 5, &miss);
        assert_eq!((num[8], num[4], num[9]), (1.0, 1.0, 1.0));
        assert_eq!(word_features(&s, 6, &miss)[5], 1.0);
        let slash = word_features(&s, 7, &miss);
        assert_eq!((slash[9], slash[14]), (1.0, 1.0));
        let last = word_features(&s, 8, &miss);
        assert_eq!((last[9], last[14]), (1.0, -1.0));
        let first = word_features(&s, 1, &miss);
        assert_eq!(first[13], -1.0);
        assert_eq!(first[1], 0.0);
    }

    #[test]
    fn word_feature_ranges() {
        let s = sentence(&["MiXeD", "UPPER", "lower", "", "ÉCOLE"]);
        let miss = LookupResult {
            vector: vec![],
            found: false,
            rank: None,
        };
        for i in 1..=s.len() {
            let f = word_features(&s, i, &miss);
            for (k, v) in f.iter().enumerate() {
                match k {
                    1 | 2 => assert!((0.0..=1.0).contains(v)),
                    12 => assert!((0.0..=12.0).contains(v)),
                    _ => assert!(*v == 1.0 || *v == -1.0, "{k} {v}"),
                }
            }
        }
    }

    #[test]
    fn distance_mapping() {
        assert_eq!(par_dist_grade(1), 2.0);
        assert_eq!(par_dist_grade(2), 0.0);
        for d in 3..10 {
            assert_eq!(par_dist_grade(d), -1.5);
        }
    }

    #[test]
    fn distance_examples() {
        let s = sentence(&["a", "b", "\"", "c", "d", "e", "f", "g", "h", "i", "j"]);
        // 2 heads 1; chain 2 -> 4 -> 5 -> ... for a deep pair
        let heads = vec![2, 0, 2, 2, 4, 5, 6, 7, 8, 9, 10];
        let p = DependencyParse::new(heads).unwrap();
        let f = distance_features(&s, Some(&p), 1, 2, GapMode::Intervening).unwrap();
        assert_eq!(f, [0.0, 2.0, 1.0, -1.0]);

        // 1 and 10: path 10-9-8-7-6-5-4-2 vs 1-2 -> distance 7
        let f = distance_features(&s, Some(&p), 1, 10, GapMode::Intervening).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], -1.5);
        assert_eq!(f[2], -1.0);
        assert_eq!(f[3], 1.0);

        let f = distance_features(&s, None, 4, 5, GapMode::Offset).unwrap();
        assert_eq!(f, [0.125, -1.5, -1.0, -1.0]);

        assert!(distance_features(&s, None, 5, 5, GapMode::Intervening).is_err());
        assert!(distance_features(&s, None, 6, 5, GapMode::Intervening).is_err());
    }

    #[test]
    fn quote_tokens() {
        for q in ["\"", "``", "''", "\u{201c}", "\u{201d}"] {
            assert!(is_quote_token(q));
        }
        for q in ["'", "a\"", "", "`"] {
            assert!(!is_quote_token(q));
        }
    }
}
