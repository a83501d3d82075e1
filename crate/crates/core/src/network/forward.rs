use super::{check_len, Gradients, ModelParams, NetworkError, Perceptron};
use crate::features::{DISTANCE_FEATURE_DIM, WORD_FEATURE_DIM};
use crate::scalar::Scalar;

/// Inputs of one composition step.
#[derive(Debug, Clone, Copy)]
pub struct WordInput<'a, T> {
    pub wordvec: &'a [T],
    pub hash: &'a [T],
    pub wordfeat: &'a [T],
    /// POS slot, see [`PosTagSet::index`](super::PosTagSet::index).
    pub pos: usize,
}

/// Activations of one composition step, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub pos: usize,
    pub wordvec: Vec<T>,
    pub hash: Vec<T>,
    pub wordfeat: Vec<T>,
    pub dist: Option<Vec<T>>,
    /// Vector fed through the recurrent matrix.
    pub prev: Vec<T>,
    /// `prev` was the seed rather than an earlier step's output.
    pub from_seed: bool,
    pub out: Vec<T>,
}

/// The current composed vector of a candidate unit prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionState<T> {
    pub v: Vec<T>,
    pub n: usize,
    tape: Vec<StepRecord<T>>,
    record: bool,
}

impl<T: Scalar> CompositionState<T> {
    /// Empty prefix: `v` is the seed. Steps are recorded for backprop.
    pub fn start(params: &ModelParams<T>) -> Self {
        CompositionState {
            v: params.seed.clone(),
            n: 0,
            tape: Vec::new(),
            record: true,
        }
    }

    /// Like [`start`](Self::start) without recording, for prediction.
    pub fn start_untaped(params: &ModelParams<T>) -> Self {
        CompositionState {
            record: false,
            ..Self::start(params)
        }
    }

    pub fn tape(&self) -> &[StepRecord<T>] {
        &self.tape
    }

    /// Composes one more word onto the prefix.
    ///
    /// `dist` holds the distance features between the previous member and
    /// this word; it is required exactly when the network feeds distances
    /// to the composer and the prefix is non-empty.
    pub fn compose(
        &self,
        params: &ModelParams<T>,
        input: WordInput<'_, T>,
        dist: Option<&[T]>,
    ) -> Result<CompositionState<T>, NetworkError> {
        let cfg = &params.config;
        check_len("word vector", cfg.embedding_dim, input.wordvec.len())?;
        check_len("hash vector", cfg.hash_dim, input.hash.len())?;
        check_len("word features", WORD_FEATURE_DIM, input.wordfeat.len())?;
        if input.pos >= params.pos.len() {
            return Err(NetworkError::Input(format!(
                "POS slot {} out of range",
                input.pos
            )));
        }
        let wants_dist = cfg.distance_into_composer && self.n >= 1;
        match (wants_dist, dist) {
            (true, Some(d)) => check_len("distance features", DISTANCE_FEATURE_DIM, d.len())?,
            (true, None) => {
                return Err(NetworkError::Input(
                    "composer needs distance features".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(NetworkError::Input(
                    "distance features are only composed after the first word".into(),
                ))
            }
            (false, None) => {}
        }

        let from_seed = self.n == 0 || !cfg.recurrency;
        let prev: &[T] = if from_seed { &params.seed } else { &self.v };
        let block = &params.pos[input.pos];
        let mut z = if cfg.bias {
            block.bias.clone()
        } else {
            vec![T::zero(); cfg.unit_dim]
        };
        block.word.mul_acc(input.wordvec, &mut z);
        block.hash.mul_acc(input.hash, &mut z);
        params.feat.mul_acc(input.wordfeat, &mut z);
        block.recur.mul_acc(prev, &mut z);
        if let (Some(w), Some(d)) = (&params.dist, dist) {
            w.mul_acc(d, &mut z);
        }
        let out: Vec<T> = z.into_iter().map(T::tanh).collect();

        let mut tape = Vec::new();
        if self.record {
            tape.reserve(self.tape.len() + 1);
            tape.extend_from_slice(&self.tape);
            tape.push(StepRecord {
                pos: input.pos,
                wordvec: input.wordvec.to_vec(),
                hash: input.hash.to_vec(),
                wordfeat: input.wordfeat.to_vec(),
                dist: dist.map(<[T]>::to_vec),
                prev: prev.to_vec(),
                from_seed,
                out: out.clone(),
            });
        }
        Ok(CompositionState {
            v: out,
            n: self.n + 1,
            tape,
            record: self.record,
        })
    }
}

/// Activations of one perceptron evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpTape<T> {
    pub input: Vec<T>,
    pub hidden: Vec<T>,
    pub output: Vec<T>,
}

impl<T: Scalar> Perceptron<T> {
    pub fn forward(&self, input: Vec<T>) -> MlpTape<T> {
        let mut hidden = self.hidden_bias.clone();
        self.hidden.mul_acc(&input, &mut hidden);
        hidden.iter_mut().for_each(|h| *h = h.tanh());
        let mut output = self.output_bias.clone();
        self.output.mul_acc(&hidden, &mut output);
        output.iter_mut().for_each(|o| *o = o.tanh());
        MlpTape {
            input,
            hidden,
            output,
        }
    }

    /// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
    fn backward(&self, tape: &MlpTape<T>, d_output: &[T], grad: &mut Perceptron<T>) -> Vec<T> {
        let one = T::one();
        let dz2: Vec<T> = d_output
            .iter()
            .zip(&tape.output)
            .map(|(&g, &o)| g * (one - o * o))
            .collect();
        grad.output.add_outer(&dz2, &tape.hidden);
        for (b, &d) in grad.output_bias.iter_mut().zip(&dz2) {
            *b += d;
        }
        let mut dh = vec![T::zero(); tape.hidden.len()];
        self.output.tmul_acc(&dz2, &mut dh);
        let dz1: Vec<T> = dh
            .iter()
            .zip(&tape.hidden)
            .map(|(&g, &h)| g * (one - h * h))
            .collect();
        grad.hidden.add_outer(&dz1, &tape.input);
        for (b, &d) in grad.hidden_bias.iter_mut().zip(&dz1) {
            *b += d;
        }
        let mut dx = vec![T::zero(); tape.input.len()];
        self.hidden.tmul_acc(&dz1, &mut dx);
        dx
    }
}

fn concat<T: Scalar>(parts: &[Option<&[T]>]) -> Vec<T> {
    parts
        .iter()
        .flatten()
        .flat_map(|p| p.iter().copied())
        .collect()
}

/// MWE boundary score in (-1, 1) for the composed vector `v`.
///
/// `dist` is required unless distances feed the composer; `aux` (the
/// sentence-mean vector) is required when the mean-vector feature is on.
pub fn mwe_forward<T: Scalar>(
    params: &ModelParams<T>,
    v: &[T],
    dist: Option<&[T]>,
    aux: Option<&[T]>,
) -> Result<(T, MlpTape<T>), NetworkError> {
    let cfg = &params.config;
    check_len("unit vector", cfg.unit_dim, v.len())?;
    match (cfg.distance_into_composer, dist) {
        (false, Some(d)) => check_len("distance features", DISTANCE_FEATURE_DIM, d.len())?,
        (false, None) => {
            return Err(NetworkError::Input(
                "MWE perceptron needs distance features".into(),
            ))
        }
        (true, Some(_)) => {
            return Err(NetworkError::Input(
                "distance features already enter the composer".into(),
            ))
        }
        (true, None) => {}
    }
    check_aux(cfg.mean_vector_feature, cfg.embedding_dim, aux)?;
    let tape = params.mwe.forward(concat(&[Some(v), dist, aux]));
    Ok((tape.output[0], tape))
}

/// One tanh score per sense.
pub fn sense_forward<T: Scalar>(
    params: &ModelParams<T>,
    v: &[T],
    aux: Option<&[T]>,
) -> Result<(Vec<T>, MlpTape<T>), NetworkError> {
    let cfg = &params.config;
    check_len("unit vector", cfg.unit_dim, v.len())?;
    check_aux(cfg.mean_vector_feature, cfg.embedding_dim, aux)?;
    let tape = params.sense.forward(concat(&[Some(v), aux]));
    Ok((tape.output.clone(), tape))
}

fn check_aux<T>(enabled: bool, dim: usize, aux: Option<&[T]>) -> Result<(), NetworkError> {
    match (enabled, aux) {
        (true, Some(a)) => check_len("sentence mean", dim, a.len()),
        (true, None) => Err(NetworkError::Input("sentence-mean feature missing".into())),
        (false, Some(_)) => Err(NetworkError::Input(
            "sentence-mean feature is disabled".into(),
        )),
        (false, None) => Ok(()),
    }
}

/// Backpropagates loss gradients of one sample through the perceptron(s)
/// and the composition chain, accumulating into `grads`.
///
/// `mwe` and `sense` pair each perceptron tape with d(loss)/d(output).
/// Both tapes must come from the final vector of `state`.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    state: &CompositionState<T>,
    mwe: Option<(&MlpTape<T>, T)>,
    sense: Option<(&MlpTape<T>, &[T])>,
    grads: &mut Gradients<T>,
) -> Result<(), NetworkError> {
    let cfg = &params.config;
    let m = cfg.unit_dim;
    if !state.record || state.tape.len() != state.n || state.n == 0 {
        return Err(NetworkError::Tape("composition was not recorded".into()));
    }
    let check_tape = |tape: &MlpTape<T>, input_dim: usize| -> Result<(), NetworkError> {
        if tape.input.len() != input_dim || tape.input[..m] != state.v[..] {
            return Err(NetworkError::Tape(
                "perceptron input does not match the composed vector".into(),
            ));
        }
        Ok(())
    };

    let mut dv = vec![T::zero(); m];
    if let Some((tape, d)) = mwe {
        check_tape(tape, cfg.mwe_input_dim())?;
        let dx = params.mwe.backward(tape, &[d], &mut grads.grad.mwe);
        dv.iter_mut().zip(&dx[..m]).for_each(|(a, &b)| *a += b);
    }
    if let Some((tape, d)) = sense {
        check_tape(tape, cfg.sense_input_dim())?;
        check_len("sense loss gradient", cfg.n_senses, d.len())?;
        let dx = params.sense.backward(tape, d, &mut grads.grad.sense);
        dv.iter_mut().zip(&dx[..m]).for_each(|(a, &b)| *a += b);
    }

    let one = T::one();
    for step in state.tape.iter().rev() {
        let dz: Vec<T> = dv
            .iter()
            .zip(&step.out)
            .map(|(&g, &o)| g * (one - o * o))
            .collect();
        grads.touch(step.pos);
        let g = &mut grads.grad;
        let block = &mut g.pos[step.pos];
        block.word.add_outer(&dz, &step.wordvec);
        block.hash.add_outer(&dz, &step.hash);
        block.recur.add_outer(&dz, &step.prev);
        if cfg.bias {
            block.bias.iter_mut().zip(&dz).for_each(|(b, &d)| *b += d);
        }
        g.feat.add_outer(&dz, &step.wordfeat);
        if let (Some(gd), Some(d)) = (&mut g.dist, &step.dist) {
            gd.add_outer(&dz, d);
        }
        let mut dprev = vec![T::zero(); m];
        params.pos[step.pos].recur.tmul_acc(&dz, &mut dprev);
        if step.from_seed {
            g.seed.iter_mut().zip(&dprev).for_each(|(s, &d)| *s += d);
            dv = vec![T::zero(); m];
        } else {
            dv = dprev;
        }
    }
    Ok(())
}
