//! Glue between prepared sentences and the network: composing candidate
//! units member by member and scoring them.

use thiserror::Error;

use crate::features::{DistanceError, PreparedSentence};
use crate::network::{
    mwe_forward, CompositionState, MlpTape, ModelParams, NetworkError, WordInput,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

/// Composes token `next` onto `state`, whose last member is `last`.
pub fn extend<T: Scalar>(
    params: &ModelParams<T>,
    sent: &PreparedSentence<T>,
    state: &CompositionState<T>,
    last: Option<usize>,
    next: usize,
) -> Result<CompositionState<T>, ComposeError> {
    let tok = sent.token(next);
    let dist = match last {
        Some(l) if params.config.distance_into_composer => Some(sent.distance(l, next)?),
        _ => None,
    };
    let input = WordInput {
        wordvec: &tok.wordvec,
        hash: &tok.hash,
        wordfeat: &tok.wordfeat,
        pos: tok.pos,
    };
    Ok(state.compose(params, input, dist.as_deref())?)
}

/// Composes all `positions` from the seed.
pub fn compose_unit<T: Scalar>(
    params: &ModelParams<T>,
    sent: &PreparedSentence<T>,
    positions: &[usize],
    record: bool,
) -> Result<CompositionState<T>, ComposeError> {
    let mut state = if record {
        CompositionState::start(params)
    } else {
        CompositionState::start_untaped(params)
    };
    let mut last = None;
    for &p in positions {
        state = extend(params, sent, &state, last, p)?;
        last = Some(p);
    }
    Ok(state)
}

/// The sentence-mean input, when the network uses it.
pub fn aux<'a, T: Scalar>(
    params: &ModelParams<T>,
    sent: &'a PreparedSentence<T>,
) -> Option<&'a [T]> {
    params
        .config
        .mean_vector_feature
        .then_some(sent.mean.as_slice())
}

/// MWE score of a state whose last two members are `last` and `candidate`.
pub fn boundary_score<T: Scalar>(
    params: &ModelParams<T>,
    sent: &PreparedSentence<T>,
    state: &CompositionState<T>,
    last: usize,
    candidate: usize,
) -> Result<(T, MlpTape<T>), ComposeError> {
    let dist = if params.config.distance_into_composer {
        None
    } else {
        Some(sent.distance(last, candidate)?)
    };
    Ok(mwe_forward(
        params,
        &state.v,
        dist.as_deref(),
        aux(params, sent),
    )?)
}
