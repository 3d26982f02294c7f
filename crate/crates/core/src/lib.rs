//! Blind deconvolution toolkit for ultrasonic RF traces.
//!
//! The processing chain estimates the propagating pulse statistically from
//! each trace (kurtosis maximization over constant-phase rotations plus an
//! autocorrelation magnitude spectrum), removes it by regularized Wiener
//! inverse filtering, and restores bandwidth by autoregressive spectral
//! extrapolation of the trusted band. A synthetic bench generates
//! calibrated test scans and a scan-level pipeline applies the chain with
//! per-trace, global, or zoned wavelet scopes.

pub mod ase;
pub mod error;
pub mod fft;
pub mod metrics;
pub mod pipeline;
pub mod scan;
pub mod signal;
pub mod synth;
pub mod wavelet;
pub mod wiener;

pub use error::{Error, Result};
