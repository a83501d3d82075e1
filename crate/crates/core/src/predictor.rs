//! Greedy unit decoding.
//!
//! Each token not yet consumed heads a new unit composed from the seed.
//! Later unconsumed tokens within `lookahead` positions of the unit's last
//! member are tried in order; a candidate whose MWE score clears the
//! threshold joins the unit and the window moves on from it. Rejected
//! tokens stay free and may later head units of their own.

use std::thread;

use thiserror::Error;

use crate::compose::{aux, boundary_score, extend, ComposeError};
use crate::corpus::{Corpus, CorpusError, SemanticUnit};
use crate::embeddings::EmbeddingTable;
use crate::features::PreparedSentence;
use crate::network::{sense_forward, CompositionState, ModelFile, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error("model has {model} senses but its inventory lists {inventory}")]
    Inventory { model: usize, inventory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Score a second member must exceed.
    pub theta_start: f64,
    /// Score every later member must exceed.
    pub theta_extend: f64,
    pub lookahead: usize,
    /// 1 forbids multiword units inside gaps, 2 allows one nested level.
    pub max_depth: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            theta_start: -0.15,
            theta_extend: 0.0,
            lookahead: 9,
            max_depth: 2,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), PredictError> {
        if self.lookahead < 1 {
            return Err(PredictError::Config("lookahead must be at least 1".into()));
        }
        if !(1..=2).contains(&self.max_depth) {
            return Err(PredictError::Config(format!(
                "max_depth must be 1 or 2, got {}",
                self.max_depth
            )));
        }
        if !self.theta_start.is_finite() || !self.theta_extend.is_finite() {
            return Err(PredictError::Config("thresholds must be finite".into()));
        }
        Ok(())
    }
}

/// Index of the largest score; the first one wins ties.
pub fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Member positions of a decoded unit with its final composition state.
pub type DecodedUnit<T> = (Vec<usize>, CompositionState<T>);

/// Boundary decoding only: the member positions of every unit, in head order.
pub fn decode_units<T: Scalar>(
    params: &ModelParams<T>,
    sent: &PreparedSentence<T>,
    cfg: &DecodeConfig,
) -> Result<Vec<DecodedUnit<T>>, PredictError> {
    let n = sent.len();
    let mut consumed = vec![false; n + 1];
    let mut units: Vec<DecodedUnit<T>> = Vec::new();

    for head in 1..=n {
        if consumed[head] {
            continue;
        }
        consumed[head] = true;
        let enclosing: Vec<&Vec<usize>> = units
            .iter()
            .map(|(p, _)| p)
            .filter(|p| p.len() > 1 && p[0] < head && head < *p.last().unwrap())
            .collect();
        // members must stay inside the innermost enclosing gap
        let limit = enclosing
            .iter()
            .map(|p| *p.last().unwrap())
            .min()
            .unwrap_or(n + 1);
        let may_grow = enclosing.len() < cfg.max_depth;

        let start = CompositionState::start_untaped(params);
        let mut state = extend(params, sent, &start, None, head)?;
        let mut members = vec![head];
        if may_grow {
            let mut c = head + 1;
            loop {
                let last = *members.last().unwrap();
                if c > last + cfg.lookahead || c >= limit || c > n {
                    break;
                }
                if consumed[c] {
                    c += 1;
                    continue;
                }
                let next = extend(params, sent, &state, Some(last), c)?;
                let (score, _) = boundary_score(params, sent, &next, last, c)?;
                let theta = if members.len() == 1 {
                    cfg.theta_start
                } else {
                    cfg.theta_extend
                };
                if score.as_f64() > theta {
                    consumed[c] = true;
                    members.push(c);
                    state = next;
                }
                c += 1;
            }
        }
        units.push((members, state));
    }
    Ok(units)
}

/// Units of one sentence, each labelled with the model's best sense.
pub fn predict_sentence<T: Scalar>(
    params: &ModelParams<T>,
    sent: &PreparedSentence<T>,
    inventory: &[String],
    cfg: &DecodeConfig,
) -> Result<Vec<SemanticUnit>, PredictError> {
    decode_units(params, sent, cfg)?
        .into_iter()
        .map(|(positions, state)| {
            let (scores, _) =
                sense_forward(params, &state.v, aux(params, sent)).map_err(ComposeError::from)?;
            Ok(SemanticUnit::new(
                positions,
                inventory[argmax(&scores)].clone(),
            ))
        })
        .collect()
}

/// Tags every sentence of `corpus` with predicted units. Gold MWE and
/// sense columns are ignored and overwritten; strength is cleared.
pub fn predict_corpus<T: Scalar>(
    model: &ModelFile<T>,
    corpus: &Corpus,
    table: &EmbeddingTable,
    cfg: &DecodeConfig,
) -> Result<Corpus, PredictError> {
    cfg.validate()?;
    let params = &model.params;
    if params.config.n_senses != model.sense_inventory.len() {
        return Err(PredictError::Inventory {
            model: params.config.n_senses,
            inventory: model.sense_inventory.len(),
        });
    }
    let one = |s: &crate::corpus::Sentence| -> Result<crate::corpus::Sentence, PredictError> {
        let prepared =
            PreparedSentence::<T>::new(s, table, &model.features, &params.config.pos_tags);
        let units = predict_sentence(params, &prepared, &model.sense_inventory, cfg)?;
        let mut out = s.clone();
        for tok in &mut out.tokens {
            tok.strength.clear();
        }
        out.set_units(&units)?;
        Ok(out)
    };

    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(corpus.sentences.len().max(1));
    let chunk = corpus.sentences.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<_>, PredictError>> = thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .sentences
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(one).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut sentences = Vec::with_capacity(corpus.sentences.len());
    for part in parts {
        sentences.extend(part?);
    }
    Ok(Corpus {
        sentences,
        sense_inventory: model.sense_inventory.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Token};
    use crate::features::FeatureConfig;
    use crate::network::{NetworkConfig, PosTagSet};

    fn sentence(n: usize) -> Sentence {
        Sentence {
            sent_id: "s1".into(),
            tokens: (1..=n)
                .map(|i| Token::new(i, &format!("w{i}"), "", "NOUN", "s1"))
                .collect(),
            parse: None,
        }
    }

    fn zero_model(n_senses: usize) -> ModelParams<f64> {
        let config = NetworkConfig {
            unit_dim: 3,
            embedding_dim: 2,
            hash_dim: 4,
            mwe_hidden: 3,
            sense_hidden: 2,
            n_senses,
            pos_tags: PosTagSet::new(["NOUN"]),
            ..NetworkConfig::default()
        };
        ModelParams::zeros(&config)
    }

    fn prepare(s: &Sentence) -> PreparedSentence<f64> {
        let table = EmbeddingTable::new(2);
        let features = FeatureConfig {
            hash_dim: 4,
            ..FeatureConfig::default()
        };
        PreparedSentence::new(s, &table, &features, &PosTagSet::new(["NOUN"]))
    }

    fn positions(units: &[SemanticUnit]) -> Vec<Vec<usize>> {
        units.iter().map(|u| u.positions.clone()).collect()
    }

    #[test]
    fn zero_model_threshold_pair() {
        let params = zero_model(2);
        let inv = vec!["unknown".to_string(), "n.act".to_string()];
        let s = prepare(&sentence(4));
        let low = predict_sentence(&params, &s, &inv, &DecodeConfig::default()).unwrap();
        // all scores are 0: 0 > -0.15 starts a unit but 0 > 0 never extends it
        assert_eq!(positions(&low), vec![vec![1, 2], vec![3, 4]]);
        let chain = DecodeConfig {
            theta_extend: -0.15,
            ..Default::default()
        };
        assert_eq!(
            positions(&predict_sentence(&params, &s, &inv, &chain).unwrap()),
            vec![vec![1, 2, 3, 4]]
        );
        let high = DecodeConfig {
            theta_start: 0.5,
            ..Default::default()
        };
        let units = predict_sentence(&params, &s, &inv, &high).unwrap();
        assert_eq!(positions(&units), vec![vec![1], vec![2], vec![3], vec![4]]);
        // tied sense scores resolve to the first label
        assert!(units.iter().all(|u| u.sense == "unknown"));
    }

    #[test]
    fn window_counts_positions() {
        let params = zero_model(1);
        let inv = vec!["unknown".to_string()];
        let s = prepare(&sentence(5));
        let cfg = DecodeConfig {
            theta_extend: -1.0,
            lookahead: 1,
            ..Default::default()
        };
        assert_eq!(
            positions(&predict_sentence(&params, &s, &inv, &cfg).unwrap()),
            vec![vec![1, 2, 3, 4, 5]]
        );
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1f64, 0.3, 0.3, -1.0]), 1);
        assert_eq!(argmax(&[0.0f64; 3]), 0);
    }

    #[test]
    fn rejects_bad_config() {
        for cfg in [
            DecodeConfig {
                lookahead: 0,
                ..Default::default()
            },
            DecodeConfig {
                max_depth: 3,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
