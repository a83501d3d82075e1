//! The incremental unit-vector composer and the two two-layer perceptrons
//! (MWE boundary and supersense), with hand-written backpropagation.
//!
//! A candidate unit `w_1 .. w_n` is composed one member at a time:
//!
//! ```text
//! v_n = tanh(W_word[p] x_n + W_hash[p] h_n + W_feat f_n + W_recur[p] v_{n-1} (+ W_dist d_n) + b[p])
//! ```
//!
//! where `p` is the POS of `w_n`, and `v_0` is a learned seed vector. Both
//! perceptrons read the final `v_n`.

mod forward;
pub mod gradcheck;
mod io;

pub use forward::{
    backward, mwe_forward, sense_forward, CompositionState, MlpTape, StepRecord, WordInput,
};
pub use io::{load_model, read_model, save_model, write_model, ModelFile, ModelFileError};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{DISTANCE_FEATURE_DIM, WORD_FEATURE_DIM};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{what}: expected length {expected}, found {found}")]
    Dim {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Input(String),
    #[error("tape mismatch: {0}")]
    Tape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("learning rate must be finite and non-negative, got {0}")]
    LearningRate(f64),
}

pub(crate) fn check_len(
    what: &'static str,
    expected: usize,
    found: usize,
) -> Result<(), NetworkError> {
    if expected != found {
        return Err(NetworkError::Dim {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Label of the fallback POS slot.
pub const OTHER_POS: &str = "OTHER";

/// POS tags with their own composition matrices; anything else maps to
/// the trailing `OTHER` slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PosTagSet {
    tags: Vec<String>,
}

impl PosTagSet {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for t in tags {
            let t = t.into();
            if t != OTHER_POS && !out.contains(&t) {
                out.push(t);
            }
        }
        PosTagSet { tags: out }
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    /// Number of matrix slots, `OTHER` included.
    pub fn slots(&self) -> usize {
        self.tags.len() + 1
    }

    pub fn index(&self, tag: &str) -> usize {
        self.tags
            .iter()
            .position(|t| t == tag)
            .unwrap_or(self.tags.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Size of the composed unit vector (M).
    pub unit_dim: usize,
    pub embedding_dim: usize,
    pub hash_dim: usize,
    pub mwe_hidden: usize,
    pub sense_hidden: usize,
    pub n_senses: usize,
    pub pos_tags: PosTagSet,
    /// Feed distance features into the composer instead of the MWE perceptron.
    pub distance_into_composer: bool,
    /// Feed the sentence-mean word vector to both perceptrons.
    pub mean_vector_feature: bool,
    /// Per-POS bias inside the composer.
    pub bias: bool,
    /// When off, every step composes against the seed instead of `v_{n-1}`.
    pub recurrency: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            unit_dim: 300,
            embedding_dim: 300,
            hash_dim: 16,
            mwe_hidden: 1024,
            sense_hidden: 256,
            n_senses: 42,
            pos_tags: PosTagSet::default(),
            distance_into_composer: true,
            mean_vector_feature: true,
            bias: true,
            recurrency: true,
        }
    }
}

impl NetworkConfig {
    pub fn mwe_input_dim(&self) -> usize {
        self.unit_dim
            + if self.distance_into_composer {
                0
            } else {
                DISTANCE_FEATURE_DIM
            }
            + if self.mean_vector_feature {
                self.embedding_dim
            } else {
                0
            }
    }

    pub fn sense_input_dim(&self) -> usize {
        self.unit_dim
            + if self.mean_vector_feature {
                self.embedding_dim
            } else {
                0
            }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let sizes = [
            ("unit_dim", self.unit_dim),
            ("embedding_dim", self.embedding_dim),
            ("hash_dim", self.hash_dim),
            ("mwe_hidden", self.mwe_hidden),
            ("sense_hidden", self.sense_hidden),
            ("n_senses", self.n_senses),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(NetworkError::Input(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    /// `out += self * x`
    pub fn mul_acc(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(&w, &xi)| w * xi).sum::<T>();
        }
    }

    /// `out += self^T * y`
    pub fn tmul_acc(&self, y: &[T], out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `self += y x^T`
    pub fn add_outer(&mut self, y: &[T], x: &[T]) {
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if yi == T::zero() {
                continue;
            }
            for (w, &xj) in row.iter_mut().zip(x) {
                *w += yi * xj;
            }
        }
    }
}

/// Composer matrices owned by one POS slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PosBlock<T> {
    pub word: Matrix<T>,
    pub hash: Matrix<T>,
    pub recur: Matrix<T>,
    pub bias: Vec<T>,
}

/// `out = tanh(output * tanh(hidden * x + hidden_bias) + output_bias)`
#[derive(Debug, Clone, PartialEq)]
pub struct Perceptron<T> {
    pub hidden: Matrix<T>,
    pub hidden_bias: Vec<T>,
    pub output: Matrix<T>,
    pub output_bias: Vec<T>,
}

impl<T: Scalar> Perceptron<T> {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Perceptron {
            hidden: Matrix::zeros(hidden, input),
            hidden_bias: vec![T::zero(); hidden],
            output: Matrix::zeros(output, hidden),
            output_bias: vec![T::zero(); output],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: NetworkConfig,
    pub pos: Vec<PosBlock<T>>,
    /// Shared word-feature matrix.
    pub feat: Matrix<T>,
    /// Shared distance matrix, present when distances feed the composer.
    pub dist: Option<Matrix<T>>,
    pub seed: Vec<T>,
    pub mwe: Perceptron<T>,
    pub sense: Perceptron<T>,
}

/// A named view of one parameter tensor.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub data: &'a mut [T],
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters with shapes taken from `config`.
    pub fn zeros(config: &NetworkConfig) -> Self {
        let m = config.unit_dim;
        let block = || PosBlock {
            word: Matrix::zeros(m, config.embedding_dim),
            hash: Matrix::zeros(m, config.hash_dim),
            recur: Matrix::zeros(m, m),
            bias: vec![T::zero(); m],
        };
        ModelParams {
            config: config.clone(),
            pos: (0..config.pos_tags.slots()).map(|_| block()).collect(),
            feat: Matrix::zeros(m, WORD_FEATURE_DIM),
            dist: config
                .distance_into_composer
                .then(|| Matrix::zeros(m, DISTANCE_FEATURE_DIM)),
            seed: vec![T::zero(); m],
            mwe: Perceptron::zeros(config.mwe_input_dim(), config.mwe_hidden, 1),
            sense: Perceptron::zeros(
                config.sense_input_dim(),
                config.sense_hidden,
                config.n_senses,
            ),
        }
    }

    /// Every tensor in serialization order; vectors are `len x 1`.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        let mut out = Vec::new();
        for (p, b) in self.pos.iter().enumerate() {
            out.push(mat(format!("pos{p}.word"), &b.word));
            out.push(mat(format!("pos{p}.hash"), &b.hash));
            out.push(mat(format!("pos{p}.recur"), &b.recur));
            out.push(vect(format!("pos{p}.bias"), &b.bias));
        }
        out.push(mat("feat".into(), &self.feat));
        if let Some(d) = &self.dist {
            out.push(mat("dist".into(), d));
        }
        out.push(vect("seed".into(), &self.seed));
        for (name, mlp) in [("mwe", &self.mwe), ("sense", &self.sense)] {
            out.push(mat(format!("{name}.hidden"), &mlp.hidden));
            out.push(vect(format!("{name}.hidden_bias"), &mlp.hidden_bias));
            out.push(mat(format!("{name}.output"), &mlp.output));
            out.push(vect(format!("{name}.output_bias"), &mlp.output_bias));
        }
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let mut out = Vec::new();
        for (p, b) in self.pos.iter_mut().enumerate() {
            out.push(TensorMut {
                name: format!("pos{p}.word"),
                data: &mut b.word.data,
            });
            out.push(TensorMut {
                name: format!("pos{p}.hash"),
                data: &mut b.hash.data,
            });
            out.push(TensorMut {
                name: format!("pos{p}.recur"),
                data: &mut b.recur.data,
            });
            out.push(TensorMut {
                name: format!("pos{p}.bias"),
                data: &mut b.bias,
            });
        }
        out.push(TensorMut {
            name: "feat".into(),
            data: &mut self.feat.data,
        });
        if let Some(d) = &mut self.dist {
            out.push(TensorMut {
                name: "dist".into(),
                data: &mut d.data,
            });
        }
        out.push(TensorMut {
            name: "seed".into(),
            data: &mut self.seed,
        });
        for (name, mlp) in [("mwe", &mut self.mwe), ("sense", &mut self.sense)] {
            out.push(TensorMut {
                name: format!("{name}.hidden"),
                data: &mut mlp.hidden.data,
            });
            out.push(TensorMut {
                name: format!("{name}.hidden_bias"),
                data: &mut mlp.hidden_bias,
            });
            out.push(TensorMut {
                name: format!("{name}.output"),
                data: &mut mlp.output.data,
            });
            out.push(TensorMut {
                name: format!("{name}.output_bias"),
                data: &mut mlp.output_bias,
            });
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Shapes must agree with `self.config`.
    pub fn check_shapes(&self) -> Result<(), NetworkError> {
        let expected = ModelParams::<T>::zeros(&self.config);
        let (a, b) = (self.tensors(), expected.tensors());
        check_len("tensor count", b.len(), a.len())?;
        for (x, y) in a.iter().zip(&b) {
            if (x.rows, x.cols) != (y.rows, y.cols) || x.name != y.name {
                return Err(NetworkError::Input(format!(
                    "tensor {} has shape {}x{}, expected {} {}x{}",
                    x.name, x.rows, x.cols, y.name, y.rows, y.cols
                )));
            }
        }
        Ok(())
    }
}

fn mat<T>(name: String, m: &Matrix<T>) -> TensorRef<'_, T> {
    TensorRef {
        name,
        rows: m.rows,
        cols: m.cols,
        data: &m.data,
    }
}

fn vect<T>(name: String, v: &[T]) -> TensorRef<'_, T> {
    TensorRef {
        name,
        rows: v.len(),
        cols: 1,
        data: v,
    }
}

/// Glorot-uniform weights, zero biases and seed.
pub fn init_params<T: Scalar>(config: &NetworkConfig, rng_seed: u64) -> ModelParams<T> {
    let mut params = ModelParams::zeros(config);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut fill = |m: &mut Matrix<T>| {
        let r = (6.0 / (m.rows + m.cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-r, r);
        for x in m.data.iter_mut() {
            *x = T::of(dist.sample(&mut rng));
        }
    };
    for b in &mut params.pos {
        fill(&mut b.word);
        fill(&mut b.hash);
        fill(&mut b.recur);
    }
    fill(&mut params.feat);
    if let Some(d) = &mut params.dist {
        fill(d);
    }
    fill(&mut params.mwe.hidden);
    fill(&mut params.mwe.output);
    fill(&mut params.sense.hidden);
    fill(&mut params.sense.output);
    params
}

/// Gradient buffer congruent to [`ModelParams`], tracking which POS blocks
/// received any gradient so clearing and updating skip the rest.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub grad: ModelParams<T>,
    touched: Vec<bool>,
}

impl<T: Scalar> Gradients<T> {
    pub fn new(config: &NetworkConfig) -> Self {
        Gradients {
            grad: ModelParams::zeros(config),
            touched: vec![false; config.pos_tags.slots()],
        }
    }

    pub(crate) fn touch(&mut self, pos: usize) {
        self.touched[pos] = true;
    }

    pub fn is_touched(&self, pos: usize) -> bool {
        self.touched[pos]
    }

    pub fn clear(&mut self) {
        for (p, t) in self.touched.iter_mut().enumerate() {
            if std::mem::take(t) {
                let b = &mut self.grad.pos[p];
                for m in [&mut b.word, &mut b.hash, &mut b.recur] {
                    m.data.iter_mut().for_each(|x| *x = T::zero());
                }
                b.bias.iter_mut().for_each(|x| *x = T::zero());
            }
        }
        let g = &mut self.grad;
        let shared: Vec<&mut [T]> = {
            let mut v: Vec<&mut [T]> = vec![&mut g.feat.data, &mut g.seed];
            if let Some(d) = &mut g.dist {
                v.push(&mut d.data);
            }
            for mlp in [&mut g.mwe, &mut g.sense] {
                v.push(&mut mlp.hidden.data);
                v.push(&mut mlp.hidden_bias);
                v.push(&mut mlp.output.data);
                v.push(&mut mlp.output_bias);
            }
            v
        };
        for s in shared {
            s.iter_mut().for_each(|x| *x = T::zero());
        }
    }
}

/// `p <- p - lr * g` over every parameter. Rejects non-finite gradients
/// before touching anything.
pub fn sgd_update<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    lr: f64,
) -> Result<(), NetworkError> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(NetworkError::LearningRate(lr));
    }
    let skip = |name: &str| -> bool {
        name.strip_prefix("pos")
            .and_then(|rest| rest.split('.').next())
            .and_then(|p| p.parse::<usize>().ok())
            .is_some_and(|p| !grads.touched[p])
    };
    let g = grads.grad.tensors();
    for t in &g {
        if !skip(&t.name) && t.data.iter().any(|x| !x.is_finite()) {
            return Err(NetworkError::NonFinite(format!("gradient of {}", t.name)));
        }
    }
    let lr = T::of(lr);
    for (p, gt) in params.tensors_mut().into_iter().zip(&g) {
        if skip(&gt.name) {
            continue;
        }
        for (w, &d) in p.data.iter_mut().zip(gt.data) {
            *w -= lr * d;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            unit_dim: 4,
            embedding_dim: 3,
            hash_dim: 2,
            mwe_hidden: 5,
            sense_hidden: 3,
            n_senses: 4,
            pos_tags: PosTagSet::new(["NOUN", "VERB"]),
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let c = tiny_config();
        let a: ModelParams<f64> = init_params(&c, 7);
        let b: ModelParams<f64> = init_params(&c, 7);
        assert_eq!(a, b);
        let d: ModelParams<f64> = init_params(&c, 8);
        assert_ne!(a, d);
    }

    #[test]
    fn init_shapes() {
        let c = tiny_config();
        let p: ModelParams<f32> = init_params(&c, 1);
        assert_eq!(p.pos.len(), 3);
        assert_eq!((p.pos[0].word.rows(), p.pos[0].word.cols()), (4, 3));
        assert_eq!((p.pos[0].recur.rows(), p.pos[0].recur.cols()), (4, 4));
        assert_eq!((p.feat.rows(), p.feat.cols()), (4, 15));
        assert_eq!(p.dist.as_ref().map(|d| (d.rows(), d.cols())), Some((4, 4)));
        assert_eq!(p.mwe.hidden.cols(), 4 + 3);
        assert_eq!(p.sense.output.rows(), 4);
        assert!(p.seed.iter().all(|&x| x == 0.0));
        p.check_shapes().unwrap();
    }

    #[test]
    fn init_within_glorot_bound() {
        let c = NetworkConfig {
            unit_dim: 20,
            embedding_dim: 50,
            ..tiny_config()
        };
        let p: ModelParams<f64> = init_params(&c, 3);
        let r = (6.0f64 / 70.0).sqrt();
        let w = p.pos[1].word.data();
        assert!(w.len() >= 1000);
        assert!(w.iter().take(1000).all(|x| x.abs() <= r));
        assert!(w.iter().any(|x| x.abs() > r / 2.0));
    }

    #[test]
    fn pos_fallback() {
        let tags = PosTagSet::new(["NOUN", "VERB", "NOUN", "OTHER"]);
        assert_eq!(tags.tags(), ["NOUN", "VERB"]);
        assert_eq!(tags.index("VERB"), 1);
        assert_eq!(tags.index("ADJ"), 2);
        assert_eq!(tags.index(OTHER_POS), 2);
    }

    #[test]
    fn sgd_basics() {
        let c = tiny_config();
        let mut p: ModelParams<f64> = init_params(&c, 1);
        let orig = p.clone();
        let mut g = Gradients::new(&c);
        g.grad.seed[0] = 2.0;
        g.grad.pos[1].bias[2] = 1.0;
        g.touch(1);
        sgd_update(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, orig);
        sgd_update(&mut p, &g, 0.5).unwrap();
        assert_eq!(p.seed[0], orig.seed[0] - 1.0);
        assert_eq!(p.pos[1].bias[2], orig.pos[1].bias[2] - 0.5);

        g.grad.feat.set(0, 0, f64::NAN);
        let before = p.clone();
        assert!(matches!(
            sgd_update(&mut p, &g, 0.1),
            Err(NetworkError::NonFinite(_))
        ));
        assert_eq!(p, before);
        assert!(sgd_update(&mut p, &g, -1.0).is_err());
    }

    #[test]
    fn clear_zeroes_everything() {
        let c = tiny_config();
        let mut g: Gradients<f64> = Gradients::new(&c);
        g.grad.pos[0].word.set(1, 1, 3.0);
        g.touch(0);
        g.grad.mwe.output_bias[0] = 1.0;
        g.grad.seed[3] = 1.0;
        g.clear();
        assert_eq!(g.grad, ModelParams::zeros(&c));
        assert!(!g.is_touched(0));
    }

    #[test]
    fn matrix_ops() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut out = vec![1.0, 1.0];
        m.mul_acc(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, [-1.0, -1.0]);
        let mut back = vec![0.0; 3];
        m.tmul_acc(&[1.0, 2.0], &mut back);
        assert_eq!(back, [9.0, 12.0, 15.0]);
        let mut z = Matrix::<f64>::zeros(2, 2);
        z.add_outer(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(z.data(), &[3.0, 4.0, 6.0, 8.0]);
    }
}
