//! Average gate infidelity of single-qudit gates under Lindblad noise.
//!
//! The crate evaluates the noisy channel `exp(𝒮 + γt𝓛)` exactly, expands its
//! infidelity perturbatively in `γt`, and analyses the strong-coupling regime
//! (plateaus, saturation points, Haar ensembles).
//!
//! ```
//! use qudit_agi::{channel, GateKind, GateSpec, NoiseKind, NoiseSpec};
//!
//! let gate = GateSpec::new(GateKind::Identity, 2).unwrap();
//! let noise = NoiseSpec::new(NoiseKind::DephasingJz, 2).unwrap();
//! let ch = channel::propagate(&gate, &noise, 1.0).unwrap();
//! let agi = 1.0 - channel::agf_exact(&ch);
//! assert!((agi - (1.0 - (-0.5f64).exp()) / 3.0).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod channel;
pub mod cli;
pub mod densemath;
mod error;
pub mod haar_stats;
pub mod perturbation;
pub mod qudit;

pub use densemath::{ComplexMatrix, C64};
pub use error::{Error, Result};
pub use qudit::{GateKind, GateSpec, NoiseKind, NoiseSpec};

