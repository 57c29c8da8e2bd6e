//! Two-qubit dynamical-decoupling simulator.
//!
//! The physics kernel ([`spin`], [`sequence`], [`noise`], [`filter`]) is
//! generic over the real scalar; [`experiments`] drives it in `f64`.

pub mod error;
pub mod experiments;
pub mod filter;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod sequence;
pub mod spin;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SequenceF64 = sequence::Sequence<f64>;
pub type SequenceF32 = sequence::Sequence<f32>;
pub type PulseEventF64 = spin::PulseEvent<f64>;
pub type PulseEventF32 = spin::PulseEvent<f32>;
pub type SystemParamsF64 = spin::SystemParams<f64>;
pub type SystemParamsF32 = spin::SystemParams<f32>;
pub type StateF64 = spin::TwoQubitState<f64>;
pub type StateF32 = spin::TwoQubitState<f32>;
pub type Unitary4F64 = spin::Unitary4<f64>;
pub type Unitary4F32 = spin::Unitary4<f32>;
pub type NoiseTraceF64 = noise::NoiseTrace<f64>;
pub type NoiseTraceF32 = noise::NoiseTrace<f32>;
pub type ToggleF64 = filter::ToggleFunction<f64>;
