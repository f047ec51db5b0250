//! Adaptive Gauss–Kronrod quadrature.
//!
//! A small self-contained integrator used for the spectral-density integrals
//! behind the vibrational propagator oracle and the frequency integrals of
//! the Fisher-information bounds. It is a plain globally adaptive bisection
//! scheme over the 21-point Gauss–Kronrod rule (QUADPACK's QK21 nodes):
//! the interval with the largest error estimate is split until the global
//! estimate meets the tolerance.
//!
//! Semi-infinite integrals are handled by the standard `x = a + t/(1-t)`
//! map onto (0, 1).

use crate::error::{Error, Result};

/// 21-point Kronrod abscissae on [0, 1] (symmetric about 0).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// 10-point Gauss weights embedded in the 21-point rule.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// 21-point Kronrod weights.
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One GK21 panel: returns (integral, error estimate).
fn gk21_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut result_gauss = 0.0;
    let mut result_kronrod = WGK[10] * fc;
    let mut resabs = WGK[10] * fc.abs();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let sum = f1 + f2;
        result_kronrod += WGK[j] * sum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * sum;
        }
    }
    // Scaled difference between the embedded rules, per QUADPACK's
    // conservative error model.
    let mean = result_kronrod * 0.5;
    let mut resasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        let dx = half * XGK[j];
        resasc += WGK[j] * ((f(center - dx) - mean).abs() + (f(center + dx) - mean).abs());
    }
    resasc *= half.abs();
    let err_raw = ((result_kronrod - result_gauss) * half).abs();
    let err = if resasc != 0.0 && err_raw != 0.0 {
        resasc * 1.0_f64.min((200.0 * err_raw / resasc).powf(1.5))
    } else {
        err_raw
    };
    (result_kronrod * half, err.max(resabs * half.abs() * f64::EPSILON * 50.0))
}

/// Integrate `f` over the finite interval [a, b] until the absolute plus
/// relative tolerance is met.
///
/// # Errors
/// Returns a numerical failure if the error estimate cannot be brought
/// below the tolerance within the subdivision budget.
///
/// ```
/// let v = vibroqfi::quad::integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 1e-12).unwrap();
/// assert!((v - 2.0).abs() < 1e-10);
/// ```
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, epsabs: f64, epsrel: f64) -> Result<f64> {
    const MAX_PANELS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk21_panel(&f, a, b);
    panels.push((a, b, v, e));
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        // The last term is the roundoff floor: once the estimate is at the
        // level of accumulated machine noise, subdividing cannot help.
        if err <= epsabs.max(epsrel * total.abs()).max(1e-13 * total.abs()) {
            return Ok(total);
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "quadrature did not converge on [{a}, {b}]: {} panels, error {err:.3e} > tol",
                panels.len()
            )));
        }
        // Split the worst panel.
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::Numerical(format!(
                "quadrature interval [{pa}, {pb}] collapsed below machine resolution"
            )));
        }
        let (v1, e1) = gk21_panel(&f, pa, mid);
        let (v2, e2) = gk21_panel(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// Integrate `f` over [a, ∞) by mapping the tail onto a finite interval.
///
/// ```
/// let v = vibroqfi::quad::integrate_to_inf(|x| (-x).exp(), 0.0, 1e-12, 1e-12).unwrap();
/// assert!((v - 1.0).abs() < 1e-10);
/// ```
pub fn integrate_to_inf<F: Fn(f64) -> f64>(f: F, a: f64, epsabs: f64, epsrel: f64) -> Result<f64> {
    // x = a + t/(1-t), dx = dt/(1-t)^2; t in (0, 1).
    integrate(
        move |t| {
            let om = 1.0 - t;
            let x = a + t / om;
            f(x) / (om * om)
        },
        0.0,
        1.0,
        epsabs,
        epsrel,
    )
}

/// Integrate `f` over the whole real line.
pub fn integrate_real_line<F: Fn(f64) -> f64 + Copy>(f: F, epsabs: f64, epsrel: f64) -> Result<f64> {
    let neg = integrate_to_inf(move |x| f(-x), 0.0, epsabs / 2.0, epsrel)?;
    let pos = integrate_to_inf(f, 0.0, epsabs / 2.0, epsrel)?;
    Ok(neg + pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-14, 1e-14).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_finite() {
        // ∫_0^10 cos(25 x) dx = sin(250)/25
        let v = integrate(|x| (25.0 * x).cos(), 0.0, 10.0, 1e-12, 1e-12).unwrap();
        assert!((v - (250.0_f64).sin() / 25.0).abs() < 1e-10);
    }

    #[test]
    fn lorentzian_tail() {
        // ∫_0^∞ dx/(1+x²) = π/2
        let v = integrate_to_inf(|x| 1.0 / (1.0 + x * x), 0.0, 1e-12, 1e-12).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn gaussian_real_line() {
        let v = integrate_real_line(|x| (-x * x).exp(), 1e-12, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }
}
