//! Desk-scale simulation of chemical-reaction microfluidic circuits for
//! molecular communication.
//!
//! The crate is organised bottom-up:
//!
//! * [`hydraulics`]: Poiseuille flow, hydraulic resistance and junction
//!   mixing in rectangular channels (the electrical-circuit analogy).
//! * [`signal`]: uniformly sampled concentration time series.
//! * [`transfer`]: the convection-diffusion impulse response, obtained by
//!   numerically inverting its frequency-domain solution.
//! * [`reactions`]: bimolecular consumption kinetics and the thresholding /
//!   amplifying reaction channels built on operator splitting.
//! * [`operators`]: the five elementary microfluidic blocks (transport,
//!   product, residual, amplify, threshold-then-amplify).
//! * [`circuits`]: the AND gate, its threshold feasibility window and
//!   steady-state helpers.
//! * [`qcsk`]: the four-level concentration shift keying transmitter
//!   (a 2:4 decoder of AND gates) and receiver.
//! * [`oracle`]: an independent finite-difference solver used to validate
//!   the analytical path.
//! * [`scenario`]: serialisable scenario configurations and the runner
//!   behind the `mfmc` command-line tool.

pub mod circuits;
pub mod error;
pub mod hydraulics;
pub mod operators;
pub mod oracle;
pub mod qcsk;
mod quadrature;
pub mod reactions;
pub mod scenario;
pub mod signal;
pub mod transfer;

pub use error::{Error, Result};
pub use signal::{ConcentrationSignal, PulseSpec, TimeGrid};
pub use transfer::{DispersionParams, TransferKernel};

/// Micrometres to metres.
pub const UM: f64 = 1e-6;
