//! Tonal-interval-vector tension analysis and tension-guided symbolic music
//! generation.
//!
//! The numeric core ([`tiv`], [`voiceleading`], [`tension`]) is generic over
//! the floating-point scalar; the aliases below fix it to `f64` (and `f32`
//! where that is useful). The generation pipeline ([`tokens`], [`seqmodel`],
//! [`beamsearch`], [`evalmetrics`]) works in `f64`.

// `!(x > 0.0)` is how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamsearch;
pub mod evalmetrics;
pub mod midi;
pub mod music;
pub mod scalar;
pub mod seqmodel;
pub mod tension;
pub mod tiv;
pub mod tokens;
pub mod voiceleading;

mod error;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Twelve pitch-class weights in double precision.
pub type Chroma = tiv::ChromaVector<f64>;
/// Single-precision chroma.
pub type Chroma32 = tiv::ChromaVector<f32>;
/// Tonal interval vector in double precision.
pub type Tiv = tiv::TonalIntervalVector<f64>;
/// Tonal interval vector in single precision.
pub type Tiv32 = tiv::TonalIntervalVector<f32>;
/// DFT weight profile in double precision.
pub type Weights = tiv::WeightProfile<f64>;
/// Per-chord tension breakdown in double precision.
pub type Components = tension::TensionComponents<f64>;
/// Per-bar tension curve in double precision.
pub type Curve = tension::TensionCurve<f64>;
/// Tension model configuration in double precision.
pub type TensionConfig = tension::TensionConfig<f64>;
/// Tension model in double precision.
pub type TensionModel = tension::TensionModel<f64>;
/// Tension model in single precision.
pub type TensionModel32 = tension::TensionModel<f32>;
