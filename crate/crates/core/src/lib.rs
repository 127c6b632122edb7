//! Waveform-level simulation of coupled-core multicore fiber (CC-MCF) links.
//!
//! The crate is organised along the signal path:
//!
//! * [`units`], [`seed`], [`waveform`]: shared value types, FFT-grid
//!   bookkeeping and hierarchical seeded randomness.
//! * [`channel`]: multi-section random-coupling link realizations with
//!   spatial-mode dispersion, per-span mode-dependent loss, loss, chromatic
//!   dispersion and amplifier noise.
//! * [`tx`]: probabilistically shaped 36QAM, pilot framing, root-raised-cosine
//!   pulse shaping, core-multiplexing emulation and WDM assembly.
//! * [`rx`]: chromatic dispersion compensation, the frequency-domain adaptive
//!   MIMO equalizer, frame synchronization and pilot-aided phase recovery.
//! * [`metrics`]: memory length, rms MDL, GMI/NGMI, rate accounting and fits.
//! * [`harness`]: configuration, distance/WDM/stability sweeps and report
//!   output.
//!
//! Channel ordering everywhere is `c = 2 * core + pol` with `pol` X = 0, Y = 1.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod harness;
mod linalg;
pub mod metrics;
pub mod rx;
pub mod seed;
pub mod tx;
pub mod units;
pub mod waveform;

pub use error::{Error, Result};
pub use linalg::haar_unitary;
pub use num_complex::Complex64;
pub use seed::Seed;
pub use waveform::{MultiChannelWaveform, SpectralTransfer};
