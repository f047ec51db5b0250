//! Single-photon spectroscopy of a vibrationally coupled two-level emitter.
//!
//! This crate simulates the scattering of a single-photon pulse off a
//! two-level emitter whose electronic transition couples to vibrational
//! modes, and quantifies how much information about the emitter the
//! scattered light carries:
//!
//! * [`scatter`] builds the temporal density matrix (TDM) of the scattered
//!   pulse on a uniform time grid, together with its parametric
//!   derivatives, the excitation dynamics and the loss probability.
//! * [`spectral`] maps the TDM to the spectral density matrix (SDM) via a
//!   Hermitian 2D Fourier transform, and provides analytic frequency-domain
//!   series for single-mode baths, including the emission spectrum split
//!   into input/absorption/emission parts.
//! * [`fisher`] computes the quantum Fisher information of the scattered
//!   state, the classical Fisher information of time- and
//!   frequency-resolved photon counting, and analytic upper bounds.
//! * [`vibration`], [`pulse`], [`units`] supply the vibrational propagators
//!   Λ₁/Λ₂ with their Franck–Condon series, the incident pulse shapes, and
//!   the unit conventions shared by everything above.
//! * [`config`] and [`sweep`] drive parameter sweeps from flat key-value
//!   configuration files, producing CSV tables, SVG plots and a binary TDM
//!   cache (the `vibroqfi` binary is a thin wrapper around them).
//!
//! # Conventions
//!
//! Time is in ps, rates in ps⁻¹, angular frequencies in rad/ps (see
//! [`units`]). Fourier transforms use the e^{−iωτ} kernel with symmetric
//! 1/√(2π) normalization throughout. Density matrices are stored as plain
//! complex matrices of the *densities* ϱ(τᵢ, τⱼ); sums over entries must be
//! weighted by the grid measure Δτ (or Δω in the frequency domain).

pub mod cache;
pub mod config;
pub mod error;
pub mod fft;
pub mod fisher;
pub mod guide;
pub mod plot;
pub mod pulse;
pub mod quad;
pub mod scatter;
pub mod spectral;
pub mod sweep;
pub mod units;
pub mod vibration;

pub use error::{Error, Result};
