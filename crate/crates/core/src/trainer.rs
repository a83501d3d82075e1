//! Sample generation, losses, and the online SGD training loop.
//!
//! Boundary learning: every extension of a gold unit prefix by its next
//! member is a +1 sample, and every word gets one -1 sample pairing it
//! with a random word from the next `L` positions outside its own unit.
//! Sense learning: one sample per complete unit, single words included.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::compose::{aux, boundary_score, compose_unit, ComposeError};
use crate::corpus::{units_from_tags, Corpus, CorpusError, SemanticUnit, UNKNOWN_SENSE};
use crate::embeddings::EmbeddingTable;
use crate::features::{Ablation, FeatureConfig, PreparedSentence};
use crate::network::{
    backward, init_params, sense_forward, sgd_update, Gradients, ModelFile, ModelParams,
    NetworkConfig, NetworkError, PosTagSet,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("sense {0:?} is not in the sense inventory")]
    UnknownSense(String),
    #[error("non-finite {what} loss in epoch {epoch}, sentence {sent_id:?}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        sent_id: String,
    },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid training config: {0}")]
    Config(String),
}

/// How the negative-sample probability cap is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Downweight {
    /// Skip the sample with probability `1 - |E| * cap`.
    Accept,
    /// Always keep the sample, scaling its loss by `|E| * cap`.
    Loss,
}

impl FromStr for Downweight {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "accept" => Ok(Downweight::Accept),
            "loss" => Ok(Downweight::Loss),
            _ => Err(format!("downweight must be accept or loss, got {s:?}")),
        }
    }
}

impl fmt::Display for Downweight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Downweight::Accept => "accept",
            Downweight::Loss => "loss",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Window for negative candidates (L).
    pub lookahead: usize,
    /// Maximum selection probability of any single negative candidate.
    pub neg_prob_cap: f64,
    pub downweight: Downweight,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            lookahead: 9,
            neg_prob_cap: 0.25,
            downweight: Downweight::Accept,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub sampling: SamplingConfig,
    /// Divisor of the sense error; `None` uses the number of senses.
    pub sense_error_divisor: Option<f64>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 0.01,
            seed: 1,
            sampling: SamplingConfig::default(),
            sense_error_divisor: None,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.sampling.lookahead < 1 {
            return Err(TrainError::Config("lookahead must be at least 1".into()));
        }
        let cap = self.sampling.neg_prob_cap;
        if !(cap > 0.0 && cap <= 1.0) {
            return Err(TrainError::Config(format!(
                "neg_prob_cap must be in (0, 1], got {cap}"
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    /// Unit members composed before the candidate.
    pub prefix: Vec<usize>,
    pub candidate: usize,
    /// +1 for a true extension, -1 for a negative sample.
    pub target: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SenseSample {
    pub unit: SemanticUnit,
    pub target_index: usize,
}

/// Boundary samples for one sentence of `n_tokens` tokens. Tokens not
/// covered by `units` count as standalone words.
pub fn generate_boundary_samples<R: Rng>(
    units: &[SemanticUnit],
    n_tokens: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Vec<BoundarySample> {
    let mut unit_of: Vec<usize> = (0..=n_tokens).map(|p| units.len() + p).collect();
    for (u, unit) in units.iter().enumerate() {
        for &p in &unit.positions {
            unit_of[p] = u;
        }
    }
    let mut out = Vec::new();
    for unit in units {
        for k in 1..unit.len() {
            out.push(BoundarySample {
                prefix: unit.positions[..k].to_vec(),
                candidate: unit.positions[k],
                target: 1.0,
                weight: 1.0,
            });
        }
    }
    for w in 1..=n_tokens {
        let eligible: Vec<usize> = (w + 1..=(w + cfg.lookahead).min(n_tokens))
            .filter(|&c| unit_of[c] != unit_of[w])
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let candidate = eligible[rng.gen_range(0..eligible.len())];
        let accept = (eligible.len() as f64 * cfg.neg_prob_cap).min(1.0);
        let weight = match cfg.downweight {
            Downweight::Accept => {
                if accept < 1.0 && rng.gen::<f64>() >= accept {
                    continue;
                }
                1.0
            }
            Downweight::Loss => accept,
        };
        let prefix = match units.get(unit_of[w]) {
            Some(unit) => unit
                .positions
                .iter()
                .copied()
                .take_while(|&p| p <= w)
                .collect(),
            None => vec![w],
        };
        out.push(BoundarySample {
            prefix,
            candidate,
            target: -1.0,
            weight,
        });
    }
    out
}

pub fn generate_sense_samples(
    units: &[SemanticUnit],
    inventory: &[String],
) -> Result<Vec<SenseSample>, TrainError> {
    units
        .iter()
        .map(|u| {
            let sense = if u.sense.is_empty() {
                UNKNOWN_SENSE
            } else {
                u.sense.as_str()
            };
            let target_index = inventory
                .iter()
                .position(|s| s == sense)
                .ok_or_else(|| TrainError::UnknownSense(sense.to_string()))?;
            Ok(SenseSample {
                unit: u.clone(),
                target_index,
            })
        })
        .collect()
}

/// `weight * (score - target)^2 / 2` and its derivative.
pub fn mwe_loss<T: Scalar>(score: T, target: T, weight: T) -> (T, T) {
    let diff = score - target;
    (weight * diff * diff / T::of(2.0), weight * diff)
}

/// Squared error against a +1/-1 one-hot target, divided by the number of senses.
pub fn sense_loss<T: Scalar>(scores: &[T], target_index: usize) -> (T, Vec<T>) {
    sense_loss_with_divisor(scores, target_index, scores.len() as f64)
}

pub fn sense_loss_with_divisor<T: Scalar>(
    scores: &[T],
    target_index: usize,
    divisor: f64,
) -> (T, Vec<T>) {
    let div = T::of(divisor);
    let mut loss = T::zero();
    let grad = scores
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let t = if k == target_index {
                T::one()
            } else {
                -T::one()
            };
            let d = s - t;
            loss += d * d;
            d / div
        })
        .collect();
    (loss / (T::of(2.0) * div), grad)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mwe_loss: f64,
    pub sense_loss: f64,
    pub positives: usize,
    pub negatives: usize,
    pub sense_samples: usize,
}

impl fmt::Display for EpochStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} mwe_loss {:.6} sense_loss {:.6} positives {} negatives {} sense_samples {}",
            self.epoch,
            self.mwe_loss,
            self.sense_loss,
            self.positives,
            self.negatives,
            self.sense_samples
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ModelFile<T>,
    pub history: Vec<EpochStats>,
}

/// Network config with data-derived sizes filled in: embedding and hash
/// dims, sense count, and (when the template lists none) the corpus POS tags.
pub fn resolve_network_config(
    template: &NetworkConfig,
    corpus: &Corpus,
    table: &EmbeddingTable,
    features: &FeatureConfig,
) -> NetworkConfig {
    let pos_tags = if template.pos_tags.tags().is_empty() {
        PosTagSet::new(
            corpus
                .sentences
                .iter()
                .flat_map(|s| s.tokens.iter().map(|t| t.pos.clone())),
        )
    } else {
        template.pos_tags.clone()
    };
    NetworkConfig {
        embedding_dim: table.dim(),
        hash_dim: features.hash_dim,
        n_senses: corpus.sense_inventory.len(),
        pos_tags,
        recurrency: template.recurrency && features.ablation != Some(Ablation::Recurrency),
        ..template.clone()
    }
}

pub fn prepare_corpus<T: Scalar>(
    corpus: &Corpus,
    table: &EmbeddingTable,
    features: &FeatureConfig,
    pos_tags: &PosTagSet,
) -> Vec<PreparedSentence<T>> {
    corpus
        .sentences
        .iter()
        .map(|s| PreparedSentence::new(s, table, features, pos_tags))
        .collect()
}

struct Step<'a, T> {
    params: &'a mut ModelParams<T>,
    grads: &'a mut Gradients<T>,
    lr: f64,
    sense_divisor: Option<f64>,
}

impl<T: Scalar> Step<'_, T> {
    fn boundary(
        &mut self,
        sent: &PreparedSentence<T>,
        s: &BoundarySample,
    ) -> Result<f64, TrainError> {
        let mut members = s.prefix.clone();
        members.push(s.candidate);
        let state = compose_unit(self.params, sent, &members, true)?;
        let last = *s.prefix.last().expect("prefix is never empty");
        let (score, tape) = boundary_score(self.params, sent, &state, last, s.candidate)?;
        let (loss, d) = mwe_loss(score, T::of(s.target), T::of(s.weight));
        self.grads.clear();
        backward(self.params, &state, Some((&tape, d)), None, self.grads)?;
        sgd_update(self.params, self.grads, self.lr)?;
        Ok(loss.as_f64())
    }

    fn sense(&mut self, sent: &PreparedSentence<T>, s: &SenseSample) -> Result<f64, TrainError> {
        let state = compose_unit(self.params, sent, &s.unit.positions, true)?;
        let (scores, tape) = sense_forward(self.params, &state.v, aux(self.params, sent))?;
        let divisor = self.sense_divisor.unwrap_or(scores.len() as f64);
        let (loss, d) = sense_loss_with_divisor(&scores, s.target_index, divisor);
        self.grads.clear();
        backward(self.params, &state, None, Some((&tape, &d)), self.grads)?;
        sgd_update(self.params, self.grads, self.lr)?;
        Ok(loss.as_f64())
    }
}

enum Sample {
    Boundary(BoundarySample),
    Sense(SenseSample),
}

impl Sample {
    /// Position the sample is processed at: samples run in corpus order.
    fn anchor(&self) -> usize {
        match self {
            Sample::Boundary(b) => *b.prefix.last().expect("prefix is never empty"),
            Sample::Sense(s) => s.unit.last(),
        }
    }
}

/// Trains a model on `corpus` (parses, when used, attached to its
/// sentences). Calls `on_epoch` after every epoch.
pub fn train<T: Scalar>(
    corpus: &Corpus,
    table: &EmbeddingTable,
    network: &NetworkConfig,
    features: &FeatureConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    cfg.validate()?;
    let net = resolve_network_config(network, corpus, table, features);
    net.validate()?;
    let inventory = corpus.sense_inventory.clone();
    let prepared: Vec<PreparedSentence<T>> = prepare_corpus(corpus, table, features, &net.pos_tags);
    let gold: Vec<Vec<SemanticUnit>> = corpus
        .sentences
        .iter()
        .map(units_from_tags)
        .collect::<Result<_, _>>()?;
    let sense_samples: Vec<Vec<SenseSample>> = gold
        .iter()
        .map(|u| generate_sense_samples(u, &inventory))
        .collect::<Result<_, _>>()?;

    let mut params: ModelParams<T> = init_params(&net, cfg.seed);
    let mut grads = Gradients::new(&net);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.sentences.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut stats = EpochStats {
            epoch,
            ..Default::default()
        };
        let (mut mwe_total, mut sense_total) = (0.0, 0.0);
        for &si in &order {
            let sent = &prepared[si];
            let mut samples: Vec<Sample> =
                generate_boundary_samples(&gold[si], sent.len(), &cfg.sampling, &mut rng)
                    .into_iter()
                    .map(Sample::Boundary)
                    .chain(sense_samples[si].iter().cloned().map(Sample::Sense))
                    .collect();
            samples.sort_by_key(Sample::anchor);

            let mut step = Step {
                params: &mut params,
                grads: &mut grads,
                lr: cfg.lr,
                sense_divisor: cfg.sense_error_divisor,
            };
            let non_finite = |what| TrainError::NonFinite {
                what,
                epoch,
                sent_id: sent.sentence.sent_id.clone(),
            };
            for sample in &samples {
                match sample {
                    Sample::Boundary(b) => {
                        let loss = step.boundary(sent, b)?;
                        if !loss.is_finite() {
                            return Err(non_finite("MWE"));
                        }
                        mwe_total += loss;
                        if b.target > 0.0 {
                            stats.positives += 1;
                        } else {
                            stats.negatives += 1;
                        }
                    }
                    Sample::Sense(s) => {
                        let loss = step.sense(sent, s)?;
                        if !loss.is_finite() {
                            return Err(non_finite("sense"));
                        }
                        sense_total += loss;
                        stats.sense_samples += 1;
                    }
                }
            }
        }
        let boundary = stats.positives + stats.negatives;
        stats.mwe_loss = if boundary > 0 {
            mwe_total / boundary as f64
        } else {
            0.0
        };
        stats.sense_loss = if stats.sense_samples > 0 {
            sense_total / stats.sense_samples as f64
        } else {
            0.0
        };
        on_epoch(&stats);
        history.push(stats);
    }

    Ok(TrainOutcome {
        model: ModelFile {
            params,
            features: features.clone(),
            sense_inventory: inventory,
        },
        history,
    })
}
