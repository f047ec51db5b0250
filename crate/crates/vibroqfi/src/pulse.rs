//! Incident single-photon temporal envelopes ξ(t) and their frequency
//! transforms ξ̃(ω).
//!
//! The frequency transform uses the crate-wide convention
//! ξ̃(ω) = (1/√(2π)) ∫ dτ e^{−iωτ} ξ(τ); every module that mixes time- and
//! frequency-domain quantities relies on this sign and normalization.
//!
//! Envelopes are normalized to a single photon, ∫|ξ(t)|² dt = 1, and the
//! duration T_σ is the standard deviation of |ξ(t)|².
//!
//! At a jump discontinuity (the onset of the decaying exponential) the
//! envelope evaluates to the midpoint of the two one-sided limits. That is
//! the value the Fourier series of the envelope converges to, and it is
//! exactly the half-weight the trapezoid rule wants when the jump falls on
//! a grid point, so sampled kernels inherit second-order accuracy for free.

use num_complex::Complex64;
use std::path::Path;

use crate::error::{Error, Result};

/// An incident single-photon envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    /// ξ(t) = Θ(t−t₀) e^{−(t−t₀)/(2T_σ)} / √T_σ — the paper's default.
    DecayingExponential {
        /// Duration (standard deviation of |ξ|²) in ps.
        t_sigma: f64,
        /// Onset time t₀ in ps (the jump).
        onset: f64,
    },
    /// ξ(t) = (2πT_σ²)^{−1/4} e^{−(t−t₀)²/(4T_σ²)} — not used by the paper,
    /// provided as sweep plumbing.
    Gaussian {
        /// Duration in ps.
        t_sigma: f64,
        /// Center t₀ in ps.
        center: f64,
    },
    /// Amplitudes sampled on a uniform time grid, linearly interpolated.
    Sampled {
        /// First sample time in ps.
        t0: f64,
        /// Sample spacing in ps.
        dt: f64,
        /// Complex amplitudes, rescaled to unit norm on construction.
        amplitudes: Vec<Complex64>,
    },
}

impl PulseShape {
    /// Decaying exponential with onset at t = 0.
    pub fn decaying_exponential(t_sigma: f64) -> Result<Self> {
        if !(t_sigma > 0.0) {
            return Err(Error::Domain(format!("pulse duration must be positive, got {t_sigma}")));
        }
        Ok(Self::DecayingExponential { t_sigma, onset: 0.0 })
    }

    /// Decaying exponential with an explicit onset time.
    pub fn decaying_exponential_at(t_sigma: f64, onset: f64) -> Result<Self> {
        if !(t_sigma > 0.0) {
            return Err(Error::Domain(format!("pulse duration must be positive, got {t_sigma}")));
        }
        Ok(Self::DecayingExponential { t_sigma, onset })
    }

    /// Gaussian with the given duration and center.
    pub fn gaussian(t_sigma: f64, center: f64) -> Result<Self> {
        if !(t_sigma > 0.0) {
            return Err(Error::Domain(format!("pulse duration must be positive, got {t_sigma}")));
        }
        Ok(Self::Gaussian { t_sigma, center })
    }

    /// Build a sampled pulse from a uniform grid, renormalizing to unit L²
    /// norm (trapezoid rule).
    pub fn sampled(t0: f64, dt: f64, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        if !(dt > 0.0) || amplitudes.len() < 2 {
            return Err(Error::Domain("sampled pulse needs dt > 0 and at least two samples".into()));
        }
        let mut norm2 = 0.0;
        for (i, a) in amplitudes.iter().enumerate() {
            let w = if i == 0 || i + 1 == amplitudes.len() { 0.5 } else { 1.0 };
            norm2 += w * a.norm_sqr();
        }
        norm2 *= dt;
        if norm2 <= 0.0 {
            return Err(Error::Domain("sampled pulse has zero norm".into()));
        }
        let scale = 1.0 / norm2.sqrt();
        for a in &mut amplitudes {
            *a *= scale;
        }
        Ok(Self::Sampled { t0, dt, amplitudes })
    }

    /// Load a sampled pulse from two- or three-column text:
    /// `t[ps]  Re ξ  [Im ξ]`, `#` comments allowed. The time column must be
    /// uniformly spaced.
    pub fn from_samples_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut ts = Vec::new();
        let mut amps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 && cols.len() != 3 {
                return Err(Error::Config(format!(
                    "{}:{}: expected 2 or 3 columns, got {}",
                    path.display(),
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| {
                    Error::Config(format!("{}:{}: bad number {s:?}", path.display(), lineno + 1))
                })
            };
            ts.push(parse(cols[0])?);
            let re = parse(cols[1])?;
            let im = if cols.len() == 3 { parse(cols[2])? } else { 0.0 };
            amps.push(Complex64::new(re, im));
        }
        if ts.len() < 2 {
            return Err(Error::Config(format!(
                "{}: need at least two samples",
                path.display()
            )));
        }
        let dt = ts[1] - ts[0];
        for w in ts.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-12) {
                return Err(Error::Config(format!(
                    "{}: time column must be uniformly spaced",
                    path.display()
                )));
            }
        }
        Self::sampled(ts[0], dt, amps)
    }

    /// Pulse duration T_σ in ps (standard deviation of |ξ|²; computed by
    /// quadrature for sampled pulses).
    pub fn t_sigma(&self) -> f64 {
        match self {
            Self::DecayingExponential { t_sigma, .. } | Self::Gaussian { t_sigma, .. } => *t_sigma,
            Self::Sampled { t0, dt, amplitudes } => {
                let mut m0 = 0.0;
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for (i, a) in amplitudes.iter().enumerate() {
                    let w = if i == 0 || i + 1 == amplitudes.len() { 0.5 } else { 1.0 };
                    let t = t0 + i as f64 * dt;
                    let p = w * a.norm_sqr();
                    m0 += p;
                    m1 += p * t;
                    m2 += p * t * t;
                }
                let mean = m1 / m0;
                (m2 / m0 - mean * mean).max(0.0).sqrt()
            }
        }
    }

    /// Earliest time with nonzero amplitude (−∞ replaced by an 8σ margin
    /// for the Gaussian). Grid-coverage checks use this.
    pub fn onset(&self) -> f64 {
        match self {
            Self::DecayingExponential { onset, .. } => *onset,
            Self::Gaussian { t_sigma, center } => center - 8.0 * t_sigma,
            Self::Sampled { t0, .. } => *t0,
        }
    }

    /// Time of the jump discontinuity, if the shape has one.
    pub fn jump_time(&self) -> Option<f64> {
        match self {
            Self::DecayingExponential { onset, .. } => Some(*onset),
            _ => None,
        }
    }

    /// Envelope ξ(t) in ps^{−1/2}; midpoint value at a jump.
    ///
    /// ```
    /// use vibroqfi::pulse::PulseShape;
    /// let p = PulseShape::decaying_exponential(2.0).unwrap();
    /// assert!((p.amplitude(1e-12).re - 1.0 / 2.0_f64.sqrt()).abs() < 1e-9);
    /// assert_eq!(p.amplitude(-1.0).re, 0.0);
    /// ```
    pub fn amplitude(&self, t: f64) -> Complex64 {
        match self {
            Self::DecayingExponential { t_sigma, onset } => {
                let s = t - onset;
                if s < 0.0 {
                    Complex64::default()
                } else {
                    let v = (-s / (2.0 * t_sigma)).exp() / t_sigma.sqrt();
                    Complex64::new(if s == 0.0 { 0.5 * v } else { v }, 0.0)
                }
            }
            Self::Gaussian { t_sigma, center } => {
                let s = t - center;
                let norm = (2.0 * std::f64::consts::PI * t_sigma * t_sigma).powf(-0.25);
                Complex64::new(norm * (-s * s / (4.0 * t_sigma * t_sigma)).exp(), 0.0)
            }
            Self::Sampled { t0, dt, amplitudes } => {
                let x = (t - t0) / dt;
                if x < 0.0 || x > (amplitudes.len() - 1) as f64 {
                    return Complex64::default();
                }
                let i = (x.floor() as usize).min(amplitudes.len() - 2);
                let frac = x - i as f64;
                amplitudes[i] * (1.0 - frac) + amplitudes[i + 1] * frac
            }
        }
    }

    /// Frequency-domain amplitude ξ̃(ω) = (1/√(2π)) ∫ dτ e^{−iωτ} ξ(τ).
    ///
    /// Analytic for the analytic shapes; trapezoid sum over the samples for
    /// `Sampled`.
    ///
    /// ```
    /// use vibroqfi::pulse::PulseShape;
    /// let t_sigma = 2.0;
    /// let p = PulseShape::decaying_exponential(t_sigma).unwrap();
    /// // |ξ̃(0)|² = 2T_σ/π
    /// let v = p.freq_amplitude(0.0).norm_sqr();
    /// assert!((v - 2.0 * t_sigma / std::f64::consts::PI).abs() < 1e-12);
    /// ```
    pub fn freq_amplitude(&self, omega: f64) -> Complex64 {
        match self {
            Self::DecayingExponential { t_sigma, onset } => {
                let denom = Complex64::new(1.0 / (2.0 * t_sigma), omega);
                let phase = Complex64::from_polar(1.0, -omega * onset);
                phase / ((2.0 * std::f64::consts::PI * t_sigma).sqrt() * denom)
            }
            Self::Gaussian { t_sigma, center } => {
                let mag = (2.0 * t_sigma * t_sigma / std::f64::consts::PI).powf(0.25)
                    * (-omega * omega * t_sigma * t_sigma).exp();
                Complex64::from_polar(mag, -omega * center)
            }
            Self::Sampled { t0, dt, amplitudes } => {
                let mut acc = Complex64::default();
                for (i, a) in amplitudes.iter().enumerate() {
                    let w = if i == 0 || i + 1 == amplitudes.len() { 0.5 } else { 1.0 };
                    let t = t0 + i as f64 * dt;
                    acc += a * w * Complex64::from_polar(1.0, -omega * t);
                }
                acc * dt / (2.0 * std::f64::consts::PI).sqrt()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn time_domain_normalization() {
        let shapes = [
            PulseShape::decaying_exponential(1.7).unwrap(),
            PulseShape::gaussian(0.8, 3.0).unwrap(),
        ];
        for p in &shapes {
            let norm = quad::integrate_real_line(|t| p.amplitude(t).norm_sqr(), 1e-12, 1e-10)
                .unwrap();
            assert!((norm - 1.0).abs() < 1e-8, "{p:?}: {norm}");
        }
    }

    #[test]
    fn parseval() {
        let shapes = [
            PulseShape::decaying_exponential(1.7).unwrap(),
            PulseShape::gaussian(0.8, 3.0).unwrap(),
        ];
        for p in &shapes {
            let norm =
                quad::integrate_real_line(|w| p.freq_amplitude(w).norm_sqr(), 1e-12, 1e-10)
                    .unwrap();
            assert!((norm - 1.0).abs() < 1e-8, "{p:?}: {norm}");
        }
    }

    #[test]
    fn duration_is_std_dev() {
        for p in [
            PulseShape::decaying_exponential(1.7).unwrap(),
            PulseShape::gaussian(0.8, 3.0).unwrap(),
        ] {
            let t_sigma = p.t_sigma();
            let m1 = quad::integrate_real_line(|t| t * p.amplitude(t).norm_sqr(), 1e-12, 1e-10)
                .unwrap();
            let m2 =
                quad::integrate_real_line(|t| t * t * p.amplitude(t).norm_sqr(), 1e-12, 1e-10)
                    .unwrap();
            let sd = (m2 - m1 * m1).sqrt();
            assert!((sd - t_sigma).abs() < 1e-6 * t_sigma, "{p:?}: {sd} vs {t_sigma}");
        }
    }

    #[test]
    fn gaussian_time_bandwidth() {
        let p = PulseShape::gaussian(0.8, 0.0).unwrap();
        let m2 = quad::integrate_real_line(|w| w * w * p.freq_amplitude(w).norm_sqr(), 1e-12, 1e-10)
            .unwrap();
        let sigma_w = m2.sqrt();
        assert!((sigma_w * p.t_sigma() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn gaussian_symmetry() {
        let p = PulseShape::gaussian(0.8, 3.0).unwrap();
        for s in [0.1, 0.5, 2.0] {
            assert_eq!(p.amplitude(3.0 + s), p.amplitude(3.0 - s));
        }
    }

    #[test]
    fn sampled_copy_matches_analytic_transform() {
        let t_sigma = 1.0;
        let exact = PulseShape::decaying_exponential(t_sigma).unwrap();
        let n = 8192;
        let dt = 40.0 * t_sigma / n as f64;
        // Raw one-sided values, as an instrument would record them; the
        // trapezoid weights in the transform handle the onset sample.
        let amps: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                Complex64::new((-t / (2.0 * t_sigma)).exp() / t_sigma.sqrt(), 0.0)
            })
            .collect();
        let sampled = PulseShape::sampled(0.0, dt, amps).unwrap();
        let mut worst: f64 = 0.0;
        let mut w = -20.0 / t_sigma;
        while w <= 20.0 / t_sigma {
            let d = (sampled.freq_amplitude(w) - exact.freq_amplitude(w)).norm();
            worst = worst.max(d);
            w += 0.37 / t_sigma;
        }
        assert!(worst < 1e-4, "max deviation {worst}");
    }

    #[test]
    fn sampled_loader_round_trip() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pulse.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# t re im").unwrap();
        for i in 0..64 {
            let t = i as f64 * 0.25;
            writeln!(f, "{t} {} {}", (-t / 2.0f64).exp(), 0.01 * t).unwrap();
        }
        drop(f);
        let p = PulseShape::from_samples_file(&path).unwrap();
        match &p {
            PulseShape::Sampled { t0, dt, amplitudes } => {
                assert_eq!(*t0, 0.0);
                assert!((dt - 0.25).abs() < 1e-12);
                assert_eq!(amplitudes.len(), 64);
            }
            _ => panic!("expected sampled pulse"),
        }
        // Normalized on load.
        let mut norm = 0.0;
        let mut t = -1.0;
        while t < 20.0 {
            norm += p.amplitude(t).norm_sqr() * 0.01;
            t += 0.01;
        }
        assert!((norm - 1.0).abs() < 0.01, "{norm}");
    }
}
