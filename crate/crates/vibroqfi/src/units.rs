//! Unit conventions and physical-constant conversions.
//!
//! Every module in this crate works in one internal unit system:
//!
//! | quantity            | unit   |
//! |---------------------|--------|
//! | time                | ps     |
//! | rates (Γ, Γ⊥)       | ps⁻¹   |
//! | angular frequencies | rad/ps |
//! | temperature         | K      |
//! | wavenumber inputs   | cm⁻¹   |
//!
//! Wavenumbers are accepted only at the boundary (configuration files and
//! constructors) and converted once via [`wavenumber_to_angular`]. Inverse
//! temperatures β are kept in ps so that products like βΩ are dimensionless.
//!
//! Linewidths quoted in THz (e.g. `Γ = 0.15 THz`) are interpreted as rates
//! in ps⁻¹ (0.15 ps⁻¹), not angular frequencies: Γ multiplies time directly
//! in every exponent in which it appears.

use crate::error::{Error, Result};

/// Speed of light in cm/ps.
pub const SPEED_OF_LIGHT_CM_PER_PS: f64 = 0.029_979_245_8;

/// Boltzmann constant in cm⁻¹/K, for wavenumber-paired inverse temperatures.
pub const BOLTZMANN_CM_PER_K: f64 = 0.695_034_8;

/// Convert a wavenumber in cm⁻¹ to an angular frequency in rad/ps.
///
/// Ω[rad/ps] = 2π · c[cm/ps] · ν̃[cm⁻¹].
///
/// # Errors
/// Returns a domain error for negative input.
///
/// ```
/// use vibroqfi::units::wavenumber_to_angular;
/// assert_eq!(wavenumber_to_angular(0.0).unwrap(), 0.0);
/// let w = wavenumber_to_angular(100.0).unwrap();
/// assert!((w - 18.836_515_673_088_532).abs() < 1e-9);
/// let w10 = wavenumber_to_angular(1000.0).unwrap();
/// assert!((w10 - 10.0 * w).abs() < 1e-12 * w10);
/// ```
pub fn wavenumber_to_angular(wavenumber_cm: f64) -> Result<f64> {
    if !(wavenumber_cm >= 0.0) {
        return Err(Error::Domain(format!(
            "wavenumber must be nonnegative, got {wavenumber_cm}"
        )));
    }
    Ok(2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_PS * wavenumber_cm)
}

/// Convert an angular frequency in rad/ps back to a wavenumber in cm⁻¹.
///
/// Inverse of [`wavenumber_to_angular`]; round trips are exact to a few ulps.
pub fn angular_to_wavenumber(omega_radps: f64) -> f64 {
    omega_radps / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_CM_PER_PS)
}

/// Inverse temperature β in ps for a temperature in kelvin.
///
/// β = 1/(k_B T) with k_B T expressed as an angular frequency, so that βΩ is
/// dimensionless for Ω in rad/ps. Returns `f64::INFINITY` at T = 0.
pub fn inverse_temperature_ps(temperature_k: f64) -> Result<f64> {
    if !(temperature_k >= 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be nonnegative, got {temperature_k}"
        )));
    }
    if temperature_k == 0.0 {
        return Ok(f64::INFINITY);
    }
    let kbt = wavenumber_to_angular(BOLTZMANN_CM_PER_K * temperature_k)?;
    Ok(1.0 / kbt)
}

/// Thermal occupation factor n̄ = coth(βΩ/2) of a mode at Ω (rad/ps) and
/// temperature T (kelvin). Returns exactly 1 at T = 0.
///
/// # Errors
/// Returns a domain error for Ω ≤ 0 or T < 0.
///
/// ```
/// use vibroqfi::units::{thermal_occupation, wavenumber_to_angular};
/// let w100 = wavenumber_to_angular(100.0).unwrap();
/// let w1000 = wavenumber_to_angular(1000.0).unwrap();
/// assert_eq!(thermal_occupation(w100, 0.0).unwrap(), 1.0);
/// assert!((thermal_occupation(w100, 300.0).unwrap() - 4.25).abs() < 0.01);
/// assert!((thermal_occupation(w1000, 300.0).unwrap() - 1.02).abs() < 0.01);
/// ```
pub fn thermal_occupation(omega_radps: f64, temperature_k: f64) -> Result<f64> {
    if !(omega_radps > 0.0) {
        return Err(Error::Domain(format!(
            "mode frequency must be positive, got {omega_radps}"
        )));
    }
    let beta = inverse_temperature_ps(temperature_k)?;
    if beta.is_infinite() {
        return Ok(1.0);
    }
    let x = beta * omega_radps / 2.0;
    Ok(1.0 / x.tanh())
}
