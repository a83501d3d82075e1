use std::fmt;
use std::str::FromStr;

use super::{
    distance_features, word_features, word_hash_feature, DistanceError, GapMode, HashMode,
    DISTANCE_FEATURE_DIM,
};
use crate::corpus::Sentence;
use crate::embeddings::EmbeddingTable;
use crate::network::PosTagSet;
use crate::scalar::Scalar;

/// Feature family switched off for an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// Composition restarts from the seed at every step.
    Recurrency,
    Heuristic,
    Distance,
    WordHash,
    Word2vec,
}

impl Ablation {
    /// Row order of the ablation table.
    pub const ALL: [Ablation; 5] = [
        Ablation::Recurrency,
        Ablation::Heuristic,
        Ablation::Distance,
        Ablation::WordHash,
        Ablation::Word2vec,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Recurrency => "-Recurrency",
            Ablation::Heuristic => "-Heuristic",
            Ablation::Distance => "-Distance",
            Ablation::WordHash => "-Word hash",
            Ablation::Word2vec => "-word2vec",
        }
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "recurrency" => Ablation::Recurrency,
            "heuristic" => Ablation::Heuristic,
            "distance" => Ablation::Distance,
            "word_hash" | "hash" => Ablation::WordHash,
            "word2vec" | "embeddings" => Ablation::Word2vec,
            _ => return Err(format!("unknown feature family {s:?}")),
        })
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Recurrency => "recurrency",
            Ablation::Heuristic => "heuristic",
            Ablation::Distance => "distance",
            Ablation::WordHash => "word_hash",
            Ablation::Word2vec => "word2vec",
        })
    }
}

/// Settings for turning sentences into network inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub hash_dim: usize,
    pub hash_mode: HashMode,
    /// Hash only the alphabetic characters of a word.
    pub hash_alpha_only: bool,
    pub lemmatize: bool,
    pub gap_mode: GapMode,
    pub ablation: Option<Ablation>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            hash_dim: 16,
            hash_mode: HashMode::AllWords,
            hash_alpha_only: false,
            lemmatize: false,
            gap_mode: GapMode::Intervening,
            ablation: None,
        }
    }
}

impl FeatureConfig {
    fn ablated(&self, family: Ablation) -> bool {
        self.ablation == Some(family)
    }
}

/// Network inputs for one token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatures<T> {
    pub wordvec: Vec<T>,
    pub hash: Vec<T>,
    pub wordfeat: Vec<T>,
    pub pos: usize,
}

/// A sentence with all per-token features computed up front. Distance
/// features are computed on demand per pair. Gold MWE and sense columns
/// are never read.
#[derive(Debug, Clone)]
pub struct PreparedSentence<T> {
    pub sentence: Sentence,
    pub tokens: Vec<TokenFeatures<T>>,
    /// Mean word vector over the sentence.
    pub mean: Vec<T>,
    gap_mode: GapMode,
    zero_distance: bool,
}

impl<T: Scalar> PreparedSentence<T> {
    pub fn new(
        sentence: &Sentence,
        table: &EmbeddingTable,
        cfg: &FeatureConfig,
        pos_tags: &PosTagSet,
    ) -> Self {
        let conv = |v: &[f32]| v.iter().map(|&x| T::of_f32(x)).collect::<Vec<T>>();
        let tokens = (1..=sentence.len())
            .map(|i| {
                let tok = sentence.token(i);
                let look = table.lookup(&tok.surface, &tok.lemma, cfg.lemmatize);
                let feat = word_features(sentence, i, &look);
                let hash = word_hash_feature(
                    &tok.surface,
                    look.found,
                    cfg.hash_mode,
                    cfg.hash_dim,
                    cfg.hash_alpha_only,
                );
                let mut t = TokenFeatures {
                    wordvec: conv(&look.vector),
                    hash: conv(&hash),
                    wordfeat: feat.iter().map(|&x| T::of(x)).collect(),
                    pos: pos_tags.index(&tok.pos),
                };
                if cfg.ablated(Ablation::Word2vec) {
                    t.wordvec.iter_mut().for_each(|x| *x = T::zero());
                }
                if cfg.ablated(Ablation::WordHash) {
                    t.hash.iter_mut().for_each(|x| *x = T::zero());
                }
                if cfg.ablated(Ablation::Heuristic) {
                    t.wordfeat.iter_mut().for_each(|x| *x = T::zero());
                }
                t
            })
            .collect();
        let mean = if cfg.ablated(Ablation::Word2vec) {
            vec![T::zero(); table.dim()]
        } else {
            conv(&table.sentence_mean(sentence, cfg.lemmatize))
        };
        PreparedSentence {
            sentence: sentence.clone(),
            tokens,
            mean,
            gap_mode: cfg.gap_mode,
            zero_distance: cfg.ablated(Ablation::Distance),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Features of the token at 1-based position `i`.
    pub fn token(&self, i: usize) -> &TokenFeatures<T> {
        &self.tokens[i - 1]
    }

    pub fn distance(&self, i: usize, j: usize) -> Result<Vec<T>, DistanceError> {
        if self.zero_distance {
            if i >= j || j > self.len() || i == 0 {
                return Err(DistanceError::Order { i, j });
            }
            return Ok(vec![T::zero(); DISTANCE_FEATURE_DIM]);
        }
        let d = distance_features(
            &self.sentence,
            self.sentence.parse.as_ref(),
            i,
            j,
            self.gap_mode,
        )?;
        Ok(d.iter().map(|&x| T::of(x)).collect())
    }
}
