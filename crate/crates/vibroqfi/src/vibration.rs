//! Vibrational baths, the dephasing propagators Λ₁ and Λ₂, and the
//! modified Franck–Condon coefficient series.
//!
//! The emitter couples to vibrations described by a spectral density J(Ω).
//! All the vibrational physics that the scattering kernels need is carried
//! by the propagator
//!
//! ```text
//! Λ₁(t) = ∫₀^∞ dΩ J(Ω)/Ω² [ coth(βΩ/2)(cos Ωt − 1) + i sin Ωt ],
//! ```
//!
//! evaluated here in closed form for the single-mode, Drude–Lorentz and
//! Brownian spectral densities and by adaptive quadrature for tabulated
//! ones. The quadrature route ([`lambda1_quadrature`]) doubles as the
//! oracle against which every closed form is validated.
//!
//! The closed forms for the continuum baths come from contour integration.
//! Besides the pole pair of the spectral density itself, the contour
//! encloses the poles of coth(βz/2) at the Matsubara frequencies
//! ν_n = 2πn/β; their residue series converges quickly and is summed
//! explicitly with an Euler–Maclaurin tail correction. Both continuum
//! closed forms therefore require T > 0; at T = 0 the Matsubara spacing
//! collapses and the evaluation falls back to quadrature with coth → 1.
//!
//! For a single mode, e^{Λ₁(t)} is a periodic function of Ω₀t and expands
//! in the modified Franck–Condon series e^{Λ₁(t)} = Σ_k f_k e^{ikΩ₀t},
//! with e^{−Λ₁(t)} = Σ_k d_k e^{ikΩ₀t} as its reciprocal. [`FcSeries`]
//! computes both coefficient families and the triple-sum coefficients
//! C^l_{mn} entering the analytic spectral formulas.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad;
use crate::units;

/// Relative threshold on n̄ − 1 below which the zero-temperature limits of
/// the Bessel-function formulas are used (they are 0·∞ forms at n̄ = 1).
const NBAR_ZERO_TEMP_THRESHOLD: f64 = 1e-9;

/// Franck–Condon truncation: smallest K with Poisson tail below this.
const FC_TAIL_BOUND: f64 = 1e-12;

/// Franck–Condon truncation floor.
const FC_MIN_ORDER: usize = 8;

/// Vibrational spectral density families.
#[derive(Debug, Clone, PartialEq)]
pub enum BathKind {
    /// No vibrational coupling at all: Λ₁ ≡ 0.
    None,
    /// One sharp mode, J(Ω) = λ₀Ω₀²δ(Ω−Ω₀).
    ///
    /// `lambda0` is the dimensionless Huang–Rhys factor |g₀|²/Ω₀²; the
    /// reorganization energy is λ = λ₀·Ω₀.
    SingleMode {
        /// Huang–Rhys factor (dimensionless).
        lambda0: f64,
        /// Mode frequency Ω₀ in rad/ps.
        omega0: f64,
    },
    /// Over-damped continuum, J(Ω) = 2λγΩ / (π(Ω²+γ²)).
    DrudeLorentz {
        /// Reorganization energy λ in rad/ps.
        lambda: f64,
        /// Cutoff γ in rad/ps.
        gamma: f64,
    },
    /// Damped-mode continuum, J(Ω) = 2λγΩ₀²Ω / (π((Ω²−Ω₀²)² + γ²Ω²)).
    ///
    /// Only the under-damped regime Ω₀ > γ/2 is supported.
    Brownian {
        /// Reorganization energy λ in rad/ps.
        lambda: f64,
        /// Mode frequency Ω₀ in rad/ps.
        omega0: f64,
        /// Damping γ in rad/ps.
        gamma: f64,
    },
    /// Spectral density sampled on an Ω grid, linearly interpolated.
    Tabulated {
        /// Sample positions in rad/ps, strictly increasing, all > 0.
        omega: Vec<f64>,
        /// J(Ω) samples in rad/ps.
        j: Vec<f64>,
    },
}

/// A vibrational environment: spectral density plus temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    /// Spectral density family.
    pub kind: BathKind,
    /// Temperature in kelvin.
    pub temperature_k: f64,
}

impl BathSpec {
    /// Validate parameters and build the spec.
    pub fn new(kind: BathKind, temperature_k: f64) -> Result<Self> {
        if !(temperature_k >= 0.0) {
            return Err(Error::Domain(format!(
                "temperature must be nonnegative, got {temperature_k}"
            )));
        }
        match &kind {
            BathKind::None => {}
            BathKind::SingleMode { lambda0, omega0 } => {
                if !(*lambda0 >= 0.0) {
                    return Err(Error::Domain(format!(
                        "Huang-Rhys factor must be nonnegative, got {lambda0}"
                    )));
                }
                if !(*omega0 > 0.0) {
                    return Err(Error::Domain(format!(
                        "mode frequency must be positive, got {omega0}"
                    )));
                }
            }
            BathKind::DrudeLorentz { lambda, gamma } => {
                if !(*lambda > 0.0) || !(*gamma > 0.0) {
                    return Err(Error::Domain(format!(
                        "Drude-Lorentz parameters must be positive, got lambda={lambda}, gamma={gamma}"
                    )));
                }
            }
            BathKind::Brownian { lambda, omega0, gamma } => {
                if !(*lambda > 0.0) || !(*omega0 > 0.0) || !(*gamma > 0.0) {
                    return Err(Error::Domain(format!(
                        "Brownian parameters must be positive, got lambda={lambda}, omega0={omega0}, gamma={gamma}"
                    )));
                }
                if *omega0 <= *gamma / 2.0 {
                    return Err(Error::UnsupportedRegime(format!(
                        "Brownian bath requires the under-damped condition omega0 > gamma/2 \
                         (got omega0={omega0}, gamma={gamma}); the over-damped closed form \
                         is not available"
                    )));
                }
            }
            BathKind::Tabulated { omega, j } => {
                if omega.len() != j.len() || omega.len() < 2 {
                    return Err(Error::Domain(
                        "tabulated spectral density needs at least two (omega, J) samples".into(),
                    ));
                }
                if !omega.windows(2).all(|w| w[1] > w[0]) || omega[0] <= 0.0 {
                    return Err(Error::Domain(
                        "tabulated omega grid must be strictly increasing and positive".into(),
                    ));
                }
                if j.iter().any(|&v| !(v >= 0.0)) {
                    return Err(Error::Domain("tabulated J values must be nonnegative".into()));
                }
            }
        }
        Ok(Self { kind, temperature_k })
    }

    /// A bath with no coupling (placeholder for the λ₀ = 0 limit).
    pub fn none() -> Self {
        Self { kind: BathKind::None, temperature_k: 0.0 }
    }

    /// Inverse temperature β in ps; infinite at T = 0.
    pub fn beta_ps(&self) -> f64 {
        units::inverse_temperature_ps(self.temperature_k).expect("validated on construction")
    }

    /// Thermal occupation n̄ = coth(βΩ₀/2) of the single mode.
    ///
    /// # Errors
    /// Domain error if the bath is not single-mode.
    pub fn nbar(&self) -> Result<f64> {
        match &self.kind {
            BathKind::SingleMode { omega0, .. } => {
                units::thermal_occupation(*omega0, self.temperature_k)
            }
            _ => Err(Error::Domain("nbar is defined only for a single-mode bath".into())),
        }
    }

    /// Reorganization energy λ = ∫dΩ J(Ω)/Ω in rad/ps.
    pub fn reorganization_energy(&self) -> f64 {
        match &self.kind {
            BathKind::None => 0.0,
            BathKind::SingleMode { lambda0, omega0 } => lambda0 * omega0,
            BathKind::DrudeLorentz { lambda, .. } | BathKind::Brownian { lambda, .. } => *lambda,
            BathKind::Tabulated { omega, j } => {
                // Trapezoid over the samples of J(Ω)/Ω.
                omega
                    .windows(2)
                    .zip(j.windows(2))
                    .map(|(w, s)| 0.5 * (s[0] / w[0] + s[1] / w[1]) * (w[1] - w[0]))
                    .sum()
            }
        }
    }

    /// Spectral density J(Ω) for continuum kinds (zero for `None`).
    ///
    /// # Panics
    /// Never; single-mode returns its delta weight as 0 except exactly at
    /// Ω₀, which is only meaningful under an integral and therefore not
    /// exposed — callers that need the single-mode physics use the series.
    pub fn j_continuum(&self, omega: f64) -> f64 {
        match &self.kind {
            BathKind::None | BathKind::SingleMode { .. } => 0.0,
            BathKind::DrudeLorentz { lambda, gamma } => {
                2.0 * lambda * gamma * omega / (std::f64::consts::PI * (omega * omega + gamma * gamma))
            }
            BathKind::Brownian { lambda, omega0, gamma } => {
                let o2 = omega * omega;
                let d = o2 - omega0 * omega0;
                2.0 * lambda * gamma * omega0 * omega0 * omega
                    / (std::f64::consts::PI * (d * d + gamma * gamma * o2))
            }
            BathKind::Tabulated { omega: xs, j } => {
                if omega <= xs[0] {
                    // Linear ramp to zero below the first sample keeps J/Ω² integrable.
                    return j[0] * (omega / xs[0]).max(0.0);
                }
                if omega >= *xs.last().unwrap() {
                    return 0.0;
                }
                let idx = xs.partition_point(|&x| x <= omega) - 1;
                let t = (omega - xs[idx]) / (xs[idx + 1] - xs[idx]);
                j[idx] + t * (j[idx + 1] - j[idx])
            }
        }
    }

    /// Upper integration limit that safely covers the support of J.
    pub fn omega_support(&self) -> f64 {
        match &self.kind {
            BathKind::None | BathKind::SingleMode { .. } => 0.0,
            BathKind::DrudeLorentz { gamma, .. } => 2e3 * gamma,
            BathKind::Brownian { omega0, gamma, .. } => 30.0 * omega0 + 200.0 * gamma,
            BathKind::Tabulated { omega, .. } => *omega.last().unwrap(),
        }
    }
}

/// The vibrational dephasing propagator Λ₁(t) (dimensionless).
///
/// Closed forms per bath kind; `Tabulated` integrates numerically.
/// Satisfies Λ₁(0) = 0 and Λ₁(−t) = Λ₁(t)* exactly.
///
/// ```
/// use vibroqfi::vibration::{lambda1, BathKind, BathSpec};
/// let bath = BathSpec::new(BathKind::SingleMode { lambda0: 0.5, omega0: 10.0 }, 0.0).unwrap();
/// let v = lambda1(&bath, std::f64::consts::PI / 10.0).unwrap();
/// assert!((v.re - (-1.0)).abs() < 1e-12); // λ₀(cos π − 1) = −2λ₀ = −1
/// assert!(v.im.abs() < 1e-12);
/// ```
pub fn lambda1(bath: &BathSpec, t: f64) -> Result<Complex64> {
    match &bath.kind {
        BathKind::None => Ok(Complex64::new(0.0, 0.0)),
        BathKind::SingleMode { lambda0, omega0 } => {
            let nbar = bath.nbar()?;
            let x = omega0 * t;
            // cos x − 1 written as −2 sin²(x/2) to avoid cancellation.
            let cm1 = -2.0 * (0.5 * x).sin().powi(2);
            Ok(Complex64::new(lambda0 * nbar * cm1, lambda0 * x.sin()))
        }
        BathKind::DrudeLorentz { lambda, gamma } => lambda1_drude_lorentz(bath, *lambda, *gamma, t),
        BathKind::Brownian { lambda, omega0, gamma } => {
            lambda1_brownian(bath, *lambda, *omega0, *gamma, t)
        }
        BathKind::Tabulated { .. } => {
            let b = bath.clone();
            lambda1_quadrature(move |w| b.j_continuum(w), bath.temperature_k, t, bath.omega_support())
        }
    }
}

/// Drude–Lorentz closed form (contour integration, T > 0):
///
/// ```text
/// Re Λ₁ = −2λ|t|/(γβ) + (λ/γ)·cot(βγ/2)·(1 − e^{−γ|t|})
///         + (4λγ/β) Σ_{n≥1} (e^{−ν_n|t|} − 1) / (ν_n (γ² − ν_n²)),
/// Im Λ₁ = sign(t)·(λ/γ)·(1 − e^{−γ|t|}),            ν_n = 2πn/β.
/// ```
///
/// Falls back to quadrature at T = 0 and when βγ/2 sits on a pole of the
/// cotangent (where the n-th Matsubara term and the cotangent individually
/// diverge and only their sum is finite).
fn lambda1_drude_lorentz(bath: &BathSpec, lambda: f64, gamma: f64, t: f64) -> Result<Complex64> {
    let beta = bath.beta_ps();
    let half_bg = 0.5 * beta * gamma;
    if !beta.is_finite() || half_bg.sin().abs() < 1e-6 {
        let b = bath.clone();
        return lambda1_quadrature(
            move |w| b.j_continuum(w),
            bath.temperature_k,
            t,
            bath.omega_support(),
        );
    }
    let at = t.abs();
    let decay = 1.0 - (-gamma * at).exp();
    let mut re = -2.0 * lambda * at / (gamma * beta) + lambda / gamma / half_bg.tan() * decay;
    re += 4.0 * lambda * gamma / beta
        * matsubara_sum(beta, at, |nu| nu * (gamma * gamma - nu * nu), 3);
    let im = t.signum() * lambda / gamma * decay;
    Ok(Complex64::new(re, im))
}

/// Under-damped Brownian closed form (contour integration, T > 0), with
/// Ω_c = √(Ω₀² − γ²/4):
///
/// ```text
/// Re Λ₁ = −2λγ|t|/(βΩ₀²)
///   − λ/(Ω₀²Ω_c(cosh βΩ_c − cos βγ/2)) ·
///     [ sinh(βΩ_c)·((Ω₀²−γ²/2)(1−e^{−γ|t|/2}cos Ω_c t) − γΩ_c·sgn(t)·e^{−γ|t|/2} sin Ω_c t)
///     − sin(βγ/2)·(γΩ_c(1−e^{−γ|t|/2}cos Ω_c t) + (Ω₀²−γ²/2)·sgn(t)·e^{−γ|t|/2} sin Ω_c t) ]
///   + (4λγΩ₀²/β) Σ_{n≥1} (e^{−ν_n|t|} − 1) / (ν_n ((ν_n²+Ω₀²)² − γ²ν_n²)),
/// Im Λ₁ = λγ·sgn(t)/Ω₀² + (λ/(Ω₀²Ω_c))·e^{−γ|t|/2}·
///         ((Ω₀²−γ²/2) sin Ω_c t − sgn(t)·γΩ_c cos Ω_c t).
/// ```
///
/// In the under-damped regime the Matsubara denominator has no real zeros,
/// so no pole guard is needed; T = 0 falls back to quadrature.
fn lambda1_brownian(
    bath: &BathSpec,
    lambda: f64,
    omega0: f64,
    gamma: f64,
    t: f64,
) -> Result<Complex64> {
    let beta = bath.beta_ps();
    if !beta.is_finite() {
        let b = bath.clone();
        return lambda1_quadrature(
            move |w| b.j_continuum(w),
            bath.temperature_k,
            t,
            bath.omega_support(),
        );
    }
    let o2 = omega0 * omega0;
    let oc = (o2 - 0.25 * gamma * gamma).sqrt();
    let at = t.abs();
    let s = t.signum();
    let e = (-0.5 * gamma * at).exp();
    let (sin_oct, cos_oct) = (oc * t).sin_cos();
    let ch = (beta * oc).cosh();
    let sh = (beta * oc).sinh();
    let (si, co) = (0.5 * beta * gamma).sin_cos();
    let a_term = o2 - 0.5 * gamma * gamma;
    let one_m = 1.0 - e * cos_oct;
    let mut re = -2.0 * lambda * gamma * at / (beta * o2)
        - lambda / (o2 * oc * (ch - co))
            * (sh * (a_term * one_m - gamma * oc * s * e * sin_oct)
                - si * (gamma * oc * one_m + a_term * s * e * sin_oct));
    re += 4.0 * lambda * gamma * o2 / beta
        * matsubara_sum(beta, at, |nu| {
            let d = nu * nu + o2;
            nu * (d * d - gamma * gamma * nu * nu)
        }, 5);
    let im = lambda * gamma * s / o2 + lambda * e / (o2 * oc) * (a_term * sin_oct - s * gamma * oc * cos_oct);
    Ok(Complex64::new(re, im))
}

/// Σ_{n≥1} (e^{−ν_n·at} − 1)/den(ν_n) over Matsubara frequencies
/// ν_n = 2πn/β, with an Euler–Maclaurin tail correction for the −1 part
/// (the exponential part decays too fast to need one). `decay_power` is
/// the large-ν power of `den` (3 for Drude–Lorentz, 5 for Brownian).
fn matsubara_sum(beta: f64, at: f64, den: impl Fn(f64) -> f64, decay_power: i32) -> f64 {
    let step = 2.0 * std::f64::consts::PI / beta;
    let mut acc = 0.0;
    let mut n = 1usize;
    const N_MAX: usize = 200_000;
    loop {
        let nu = step * n as f64;
        let term = ((-nu * at).exp() - 1.0) / den(nu);
        acc += term;
        // Once the exponential has died, the remaining tail is −Σ 1/den(ν)
        // ≈ ±Σ ν^{-p}; stop when its bound is negligible.
        let tail_bound = (n as f64).powi(1 - decay_power) / ((decay_power - 1) as f64)
            / step.powi(decay_power);
        if (nu * at > 40.0 || term.abs() < 1e-18 * acc.abs().max(1e-300))
            && tail_bound < 1e-16 * acc.abs().max(1e-300)
        {
            // Euler–Maclaurin correction for the −1/den tail from n+1 on:
            // ∫_{n+1/2}^∞ dm / den(step·m), leading order.
            let m0 = n as f64 + 0.5;
            let p = decay_power;
            acc += (m0 * step).powi(1 - p) / (step * (p - 1) as f64);
            break;
        }
        n += 1;
        if n > N_MAX {
            break;
        }
    }
    acc
}

/// Quadrature oracle for Λ₁: integrates the defining Ω integral directly
/// for any callable spectral density.
///
/// This is the reference against which the closed forms are verified.
///
/// # Errors
/// Numerical failure if the adaptive integration does not converge.
pub fn lambda1_quadrature(
    j: impl Fn(f64) -> f64,
    temperature_k: f64,
    t: f64,
    omega_max: f64,
) -> Result<Complex64> {
    let beta = units::inverse_temperature_ps(temperature_k)?;
    if omega_max <= 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let re = quad::integrate(
        |w| {
            if w <= 0.0 {
                return 0.0;
            }
            let coth = if beta.is_finite() { 1.0 / (0.5 * beta * w).tanh() } else { 1.0 };
            // cos(wt) − 1 = −2 sin²(wt/2), cancellation-free.
            j(w) / (w * w) * coth * (-2.0 * (0.5 * w * t).sin().powi(2))
        },
        0.0,
        omega_max,
        1e-9,
        1e-10,
    )?;
    let im = quad::integrate(
        |w| {
            if w <= 0.0 {
                return 0.0;
            }
            j(w) / (w * w) * (w * t).sin()
        },
        0.0,
        omega_max,
        1e-9,
        1e-10,
    )?;
    Ok(Complex64::new(re, im))
}

/// The four-time dephasing exponent Λ₂ entering the double-integral term
/// of the scattered-pulse density matrix:
///
/// Λ₂(t′,t″,τ,τ′) = Λ₁(t′−τ) + Λ₁(t″−τ′)* − Λ₁(t′−τ′) − Λ₁(t″−τ)*
///                 + Λ₁(t′−t″) + Λ₁(τ−τ′).
pub fn lambda2(bath: &BathSpec, t1: f64, t2: f64, tau: f64, tau_p: f64) -> Result<Complex64> {
    Ok(lambda1(bath, t1 - tau)? + lambda1(bath, t2 - tau_p)?.conj()
        - lambda1(bath, t1 - tau_p)?
        - lambda1(bath, t2 - tau)?.conj()
        + lambda1(bath, t1 - t2)?
        + lambda1(bath, tau - tau_p)?)
}

/// Modified Bessel function of the first kind, integer order, by its
/// ascending power series Σ_m (x/2)^{2m+|k|} / (m!(m+|k|)!).
///
/// All terms share one sign for x ≥ 0, so the series is cancellation-free;
/// the arguments arising here (λ₀√(n̄²−1) for λ₀ ≤ a few and moderate n̄)
/// keep it short. Negative arguments use I_k(−x) = (−1)^k I_k(x).
pub fn bessel_i(k: i64, x: f64) -> f64 {
    let ka = k.unsigned_abs() as u32;
    let sign = if x < 0.0 && k % 2 != 0 { -1.0 } else { 1.0 };
    let ax = x.abs();
    let half = 0.5 * ax;
    // First term: (x/2)^|k| / |k|!
    let mut term = 1.0;
    for m in 1..=ka {
        term *= half / m as f64;
    }
    let mut sum = term;
    let q = half * half;
    let mut m = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) {
        term *= q / (m * (m + ka as f64));
        sum += term;
        m += 1.0;
        if m > 1e4 {
            break;
        }
    }
    sign * sum
}

/// Modified Franck–Condon factor f_k = e^{−λ₀n̄} I_k(λ₀√(n̄²−1)) ((n̄+1)/(n̄−1))^{k/2}.
///
/// At n̄ = 1 (within threshold) the zero-temperature limit e^{−λ₀}λ₀^k/k!
/// is used for k ≥ 0, and 0 for k < 0.
///
/// ```
/// use vibroqfi::vibration::franck_condon_f;
/// assert!((franck_condon_f(0, 1.0, 1.0) - (-1.0f64).exp()).abs() < 1e-12);
/// assert_eq!(franck_condon_f(0, 0.0, 1.0), 1.0);
/// assert_eq!(franck_condon_f(3, 0.0, 1.0), 0.0);
/// ```
pub fn franck_condon_f(k: i64, lambda0: f64, nbar: f64) -> f64 {
    fc_coefficient(k, lambda0, nbar, false)
}

/// Reciprocal-series coefficient d_k with e^{−Λ₁(t)} = Σ_k d_k e^{ikΩ₀t}:
/// d_k = e^{+λ₀n̄} I_k(−λ₀√(n̄²−1)) ((n̄+1)/(n̄−1))^{k/2}; zero-temperature
/// limit e^{+λ₀}(−λ₀)^k/k! for k ≥ 0.
pub fn franck_condon_d(k: i64, lambda0: f64, nbar: f64) -> f64 {
    fc_coefficient(k, lambda0, nbar, true)
}

fn fc_coefficient(k: i64, lambda0: f64, nbar: f64, reciprocal: bool) -> f64 {
    debug_assert!(lambda0 >= 0.0 && nbar >= 1.0);
    if lambda0 == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if nbar - 1.0 < NBAR_ZERO_TEMP_THRESHOLD {
        if k < 0 {
            return 0.0;
        }
        let mut v = if reciprocal { lambda0.exp() } else { (-lambda0).exp() };
        for m in 1..=k {
            v *= (if reciprocal { -lambda0 } else { lambda0 }) / m as f64;
        }
        return v;
    }
    let z = lambda0 * (nbar * nbar - 1.0).sqrt();
    let ratio_half_k = ((nbar + 1.0) / (nbar - 1.0)).powf(0.5 * k as f64);
    if reciprocal {
        (lambda0 * nbar).exp() * bessel_i(k, -z) * ratio_half_k
    } else {
        (-lambda0 * nbar).exp() * bessel_i(k, z) * ratio_half_k
    }
}

/// Truncated modified Franck–Condon series for one single-mode bath.
///
/// Stores f_k and d_k for k ∈ [−K, K], with K chosen as the smallest order
/// whose Poisson tail bound e^{−λ₀n̄}(λ₀n̄)^K/K! drops below 1e-12
/// (floor K = 8).
#[derive(Debug, Clone)]
pub struct FcSeries {
    /// Huang–Rhys factor.
    pub lambda0: f64,
    /// Thermal occupation of the mode.
    pub nbar: f64,
    /// Truncation order: coefficients are retained for |k| ≤ kmax.
    pub kmax: i64,
    f: Vec<f64>,
    d: Vec<f64>,
}

impl FcSeries {
    /// Build the series for the given coupling and occupation.
    pub fn new(lambda0: f64, nbar: f64) -> Result<Self> {
        if !(lambda0 >= 0.0) {
            return Err(Error::Domain(format!(
                "Huang-Rhys factor must be nonnegative, got {lambda0}"
            )));
        }
        if !(nbar >= 1.0) {
            return Err(Error::Domain(format!("nbar must be at least 1, got {nbar}")));
        }
        let kmax = Self::truncation_order(lambda0, nbar);
        let f: Vec<f64> =
            (-kmax..=kmax).map(|k| franck_condon_f(k, lambda0, nbar)).collect();
        let d: Vec<f64> =
            (-kmax..=kmax).map(|k| franck_condon_d(k, lambda0, nbar)).collect();
        Ok(Self { lambda0, nbar, kmax, f, d })
    }

    /// Series for a bath, which must be single-mode (or `None`, treated as
    /// λ₀ = 0).
    pub fn for_bath(bath: &BathSpec) -> Result<Self> {
        match &bath.kind {
            BathKind::None => Self::new(0.0, 1.0),
            BathKind::SingleMode { lambda0, .. } => Self::new(*lambda0, bath.nbar()?),
            _ => Err(Error::Domain(
                "Franck-Condon series requires a single-mode (or empty) bath".into(),
            )),
        }
    }

    /// Smallest K with e^{−λ₀n̄}(λ₀n̄)^K/K! < 1e-12, floored at 8.
    fn truncation_order(lambda0: f64, nbar: f64) -> i64 {
        let mu = lambda0 * nbar;
        let mut k: i64 = FC_MIN_ORDER as i64;
        let mut tail = (-mu).exp();
        for m in 1..=k {
            tail *= mu / m as f64;
        }
        while tail >= FC_TAIL_BOUND && k < 512 {
            k += 1;
            tail *= mu / k as f64;
        }
        k
    }

    /// f_k, zero outside the retained range.
    pub fn f(&self, k: i64) -> f64 {
        if k.abs() > self.kmax {
            0.0
        } else {
            self.f[(k + self.kmax) as usize]
        }
    }

    /// d_k, zero outside the retained range.
    pub fn d(&self, k: i64) -> f64 {
        if k.abs() > self.kmax {
            0.0
        } else {
            self.d[(k + self.kmax) as usize]
        }
    }

    /// Triple-sum coefficient
    /// C^l_{mn} = Σ_{k₃,k₄,k₆} f_{m+k₄+k₆} f_{n+k₃+k₆} d_{k₃} d_{k₄} f_{l−k₃−k₄−k₆} f_{k₆}.
    pub fn coefficient_c(&self, l: i64, m: i64, n: i64) -> f64 {
        let mut acc = 0.0;
        for k3 in -self.kmax..=self.kmax {
            let d3 = self.d(k3);
            if d3 == 0.0 {
                continue;
            }
            for k4 in -self.kmax..=self.kmax {
                let d34 = d3 * self.d(k4);
                if d34 == 0.0 {
                    continue;
                }
                for k6 in -self.kmax..=self.kmax {
                    let f6 = self.f(k6);
                    if f6 == 0.0 {
                        continue;
                    }
                    acc += self.f(m + k4 + k6)
                        * self.f(n + k3 + k6)
                        * d34
                        * self.f(l - k3 - k4 - k6)
                        * f6;
                }
            }
        }
        acc
    }
}
