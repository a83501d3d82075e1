//! Central finite-difference verification of [`backward`](super::backward).
//!
//! Each trial draws a tiny random network and one random sample (a chain
//! of one to four words scored by both perceptrons), then compares every
//! analytic gradient entry with `(L(p + eps) - L(p - eps)) / (2 eps)`.
//! The finite-difference side only ever runs the forward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    backward, init_params, mwe_forward, sense_forward, CompositionState, Gradients, ModelParams,
};
use super::{NetworkConfig, NetworkError, PosTagSet, WordInput};
use crate::features::{DISTANCE_FEATURE_DIM, WORD_FEATURE_DIM};
use crate::trainer::{mwe_loss, sense_loss};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Largest unit vector size drawn.
    pub max_unit_dim: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 100,
            seed: 0,
            eps: 1e-4,
            tolerance: 1e-4,
            floor: 1e-4,
            max_unit_dim: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialReport {
    pub distance_into_composer: bool,
    pub mean_vector_feature: bool,
    pub chain_len: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
    /// Largest absolute gradient seen on the seed vector.
    pub seed_grad: f64,
    /// Non-zero analytic gradient found on a POS block the sample never used.
    pub unused_pos_nonzero: bool,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub trials: Vec<TrialReport>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.trials
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.trials
            .iter()
            .all(|t| t.max_rel_error <= self.tolerance && !t.unused_pos_nonzero)
    }
}

/// Embedding, hash and feature vectors plus the POS index.
type WordVectors = (Vec<f64>, Vec<f64>, Vec<f64>, usize);

struct Sample {
    words: Vec<WordVectors>,
    dists: Vec<Vec<f64>>,
    aux: Option<Vec<f64>>,
    mwe_target: f64,
    mwe_weight: f64,
    sense_target: usize,
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-r..r)).collect()
}

fn random_config(rng: &mut ChaCha8Rng, trial: usize, max_m: usize) -> NetworkConfig {
    let n_pos = rng.gen_range(1..=3);
    NetworkConfig {
        unit_dim: rng.gen_range(1..=max_m.max(1)),
        embedding_dim: rng.gen_range(1..=5),
        hash_dim: *[1usize, 2, 4, 8].choose(rng).unwrap(),
        mwe_hidden: rng.gen_range(1..=6),
        sense_hidden: rng.gen_range(1..=6),
        n_senses: rng.gen_range(2..=6),
        pos_tags: PosTagSet::new((0..n_pos).map(|k| format!("P{k}"))),
        distance_into_composer: trial.is_multiple_of(2),
        mean_vector_feature: (trial / 2).is_multiple_of(2),
        bias: rng.gen_bool(0.8),
        recurrency: rng.gen_bool(0.8),
    }
}

fn random_sample(rng: &mut ChaCha8Rng, c: &NetworkConfig) -> Sample {
    let len = rng.gen_range(1..=4);
    let words = (0..len)
        .map(|_| {
            let hash = (0..c.hash_dim)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            (
                uniform_vec(rng, c.embedding_dim, 1.0),
                hash,
                uniform_vec(rng, WORD_FEATURE_DIM, 1.0),
                rng.gen_range(0..c.pos_tags.slots()),
            )
        })
        .collect();
    let dists = (0..len)
        .map(|_| uniform_vec(rng, DISTANCE_FEATURE_DIM, 2.0))
        .collect();
    Sample {
        words,
        dists,
        aux: c
            .mean_vector_feature
            .then(|| uniform_vec(rng, c.embedding_dim, 1.0)),
        mwe_target: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        mwe_weight: rng.gen_range(0.1..=1.0),
        sense_target: rng.gen_range(0..c.n_senses),
    }
}

fn compose_chain(p: &ModelParams<f64>, s: &Sample) -> Result<CompositionState<f64>, NetworkError> {
    let mut state = CompositionState::start(p);
    for (k, (x, h, f, pos)) in s.words.iter().enumerate() {
        let dist = (p.config.distance_into_composer && k > 0).then(|| s.dists[k].as_slice());
        state = state.compose(
            p,
            WordInput {
                wordvec: x,
                hash: h,
                wordfeat: f,
                pos: *pos,
            },
            dist,
        )?;
    }
    Ok(state)
}

fn mwe_dist<'a>(p: &ModelParams<f64>, s: &'a Sample) -> Option<&'a [f64]> {
    (!p.config.distance_into_composer).then(|| s.dists[0].as_slice())
}

fn loss(p: &ModelParams<f64>, s: &Sample) -> Result<f64, NetworkError> {
    let state = compose_chain(p, s)?;
    let (score, _) = mwe_forward(p, &state.v, mwe_dist(p, s), s.aux.as_deref())?;
    let (scores, _) = sense_forward(p, &state.v, s.aux.as_deref())?;
    Ok(mwe_loss(score, s.mwe_target, s.mwe_weight).0 + sense_loss(&scores, s.sense_target).0)
}

fn analytic(p: &ModelParams<f64>, s: &Sample) -> Result<Gradients<f64>, NetworkError> {
    let state = compose_chain(p, s)?;
    let (score, mt) = mwe_forward(p, &state.v, mwe_dist(p, s), s.aux.as_deref())?;
    let (scores, st) = sense_forward(p, &state.v, s.aux.as_deref())?;
    let (_, dm) = mwe_loss(score, s.mwe_target, s.mwe_weight);
    let (_, ds) = sense_loss(&scores, s.sense_target);
    let mut g = Gradients::new(&p.config);
    backward(p, &state, Some((&mt, dm)), Some((&st, &ds)), &mut g)?;
    Ok(g)
}

pub fn run_trial(
    rng: &mut ChaCha8Rng,
    trial: usize,
    cfg: &GradcheckConfig,
) -> Result<TrialReport, NetworkError> {
    let config = random_config(rng, trial, cfg.max_unit_dim);
    let mut params: ModelParams<f64> = init_params(&config, rng.gen());
    // non-zero seed and biases so every path carries signal
    params.seed = uniform_vec(rng, config.unit_dim, 1.0);
    for b in &mut params.pos {
        b.bias = uniform_vec(rng, config.unit_dim, 0.5);
    }
    params.mwe.hidden_bias = uniform_vec(rng, config.mwe_hidden, 0.5);
    params.sense.output_bias = uniform_vec(rng, config.n_senses, 0.5);
    let sample = random_sample(rng, &config);

    let grads = analytic(&params, &sample)?;
    let used: Vec<bool> = (0..config.pos_tags.slots())
        .map(|p| sample.words.iter().any(|w| w.3 == p))
        .collect();

    let mut report = TrialReport {
        distance_into_composer: config.distance_into_composer,
        mean_vector_feature: config.mean_vector_feature,
        chain_len: sample.words.len(),
        checked: 0,
        max_rel_error: 0.0,
        worst: String::new(),
        seed_grad: grads.grad.seed.iter().fold(0.0, |a, x| a.max(x.abs())),
        unused_pos_nonzero: false,
    };

    let analytic_tensors: Vec<(String, Vec<f64>)> = grads
        .grad
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();
    for (ti, (name, agrad)) in analytic_tensors.iter().enumerate() {
        let slot = name
            .strip_prefix("pos")
            .and_then(|r| r.split('.').next())
            .and_then(|p| p.parse::<usize>().ok());
        if let Some(p) = slot {
            if !used[p] {
                report.unused_pos_nonzero |= agrad.iter().any(|&x| x != 0.0);
                continue;
            }
        }
        for (k, &a) in agrad.iter().enumerate() {
            let orig = params.tensors_mut()[ti].data[k];
            params.tensors_mut()[ti].data[k] = orig + cfg.eps;
            let up = loss(&params, &sample)?;
            params.tensors_mut()[ti].data[k] = orig - cfg.eps;
            let down = loss(&params, &sample)?;
            params.tensors_mut()[ti].data[k] = orig;
            let numeric = (up - down) / (2.0 * cfg.eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = format!("{name}[{k}]: analytic {a:e} numeric {numeric:e}");
            }
        }
    }
    Ok(report)
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport, NetworkError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trials = (0..cfg.trials)
        .map(|t| run_trial(&mut rng, t, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_trials_pass() {
        let report = run_gradcheck(&GradcheckConfig {
            trials: 8,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error());
        assert!(report.trials.iter().any(|t| t.distance_into_composer));
        assert!(report.trials.iter().any(|t| !t.distance_into_composer));
        assert!(report.trials.iter().all(|t| t.checked > 0));
    }

    #[test]
    fn detects_a_broken_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let config = random_config(&mut rng, 0, 4);
        let params: ModelParams<f64> = init_params(&config, 3);
        let sample = random_sample(&mut rng, &config);
        let mut g = analytic(&params, &sample).unwrap();
        let h = params.mwe.hidden.data().len();
        assert!(h > 0);
        // corrupt one analytic entry and compare against the finite difference
        g.grad.mwe.output_bias[0] += 0.1;
        let mut p = params.clone();
        let eps = 1e-4;
        p.mwe.output_bias[0] += eps;
        let up = loss(&p, &sample).unwrap();
        p.mwe.output_bias[0] -= 2.0 * eps;
        let down = loss(&p, &sample).unwrap();
        let numeric = (up - down) / (2.0 * eps);
        assert!((g.grad.mwe.output_bias[0] - numeric).abs() > 0.05);
    }
}
