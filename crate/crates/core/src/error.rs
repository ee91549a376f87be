use thiserror::Error;

use crate::{beamsearch, evalmetrics, midi, music, seqmodel, tension, tiv, tokens, voiceleading};

pub type Result<T> = std::result::Result<T, Error>;

/// Umbrella error for callers that drive the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Music(#[from] music::MusicError),
    #[error(transparent)]
    Tiv(#[from] tiv::TivError),
    #[error(transparent)]
    VoiceLeading(#[from] voiceleading::VoiceLeadingError),
    #[error(transparent)]
    Tension(#[from] tension::TensionError),
    #[error(transparent)]
    Midi(#[from] midi::MidiError),
    #[error(transparent)]
    Token(#[from] tokens::TokenError),
    #[error(transparent)]
    Model(#[from] seqmodel::ModelError),
    #[error(transparent)]
    Search(#[from] beamsearch::SearchError),
    #[error(transparent)]
    Eval(#[from] evalmetrics::EvalError),
}
