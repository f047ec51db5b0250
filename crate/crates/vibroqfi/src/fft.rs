//! Thin FFT helpers shared by the convolution kernels and the
//! time↔frequency transforms.
//!
//! All transforms are unnormalized (forward: Σ x_j e^{−2πi jk/N}); callers
//! apply whatever measure factors their convention requires.

use num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place forward DFT.
pub fn fft_inplace(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(data.len()).process(data);
}

/// In-place inverse DFT **without** the 1/N normalization.
pub fn ifft_inplace_unnormalized(data: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(data.len()).process(data);
}

/// In-place inverse DFT with the 1/N normalization.
pub fn ifft_inplace(data: &mut [Complex64]) {
    let n = data.len();
    ifft_inplace_unnormalized(data);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Linear (zero-padded) convolution of `a` and `b`, truncated to `keep`
/// leading entries. Pads to at least `a.len() + b.len() - 1` rounded up to
/// a power of two.
pub fn linear_convolution(a: &[Complex64], b: &[Complex64], keep: usize) -> Vec<Complex64> {
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let mut fa = vec![Complex64::default(); size];
    let mut fb = vec![Complex64::default(); size];
    fa[..a.len()].copy_from_slice(a);
    fb[..b.len()].copy_from_slice(b);
    fft_inplace(&mut fa);
    fft_inplace(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= *y;
    }
    ifft_inplace(&mut fa);
    fa.truncate(keep);
    fa
}

/// In-place forward 2D DFT of a row-major `rows`×`cols` matrix.
pub fn fft2_inplace(data: &mut [Complex64], rows: usize, cols: usize) {
    assert_eq!(data.len(), rows * cols);
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(cols);
    for r in 0..rows {
        row_fft.process(&mut data[r * cols..(r + 1) * cols]);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut col = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col[r] = data[r * cols + c];
        }
        col_fft.process(&mut col);
        for r in 0..rows {
            data[r * cols + c] = col[r];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convolution_matches_direct_sum() {
        let a: Vec<Complex64> =
            (0..7).map(|i| Complex64::new(i as f64, (i * i) as f64 * 0.1)).collect();
        let b: Vec<Complex64> =
            (0..5).map(|i| Complex64::new(1.0 - i as f64 * 0.3, 0.2 * i as f64)).collect();
        let got = linear_convolution(&a, &b, a.len() + b.len() - 1);
        for k in 0..got.len() {
            let mut direct = Complex64::default();
            for i in 0..a.len() {
                if k >= i && k - i < b.len() {
                    direct += a[i] * b[k - i];
                }
            }
            assert!((got[k] - direct).norm() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn round_trip() {
        let mut x: Vec<Complex64> =
            (0..16).map(|i| Complex64::new((i as f64).sin(), (i as f64).cos())).collect();
        let orig = x.clone();
        fft_inplace(&mut x);
        ifft_inplace(&mut x);
        for (a, b) in x.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fft2_matches_direct_sum() {
        let rows = 4;
        let cols = 8;
        let m: Vec<Complex64> = (0..rows * cols)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut got = m.clone();
        fft2_inplace(&mut got, rows, cols);
        for p in 0..rows {
            for q in 0..cols {
                let mut direct = Complex64::default();
                for r in 0..rows {
                    for c in 0..cols {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((p * r) as f64 / rows as f64 + (q * c) as f64 / cols as f64);
                        direct += m[r * cols + c] * Complex64::from_polar(1.0, phase);
                    }
                }
                assert!((got[p * cols + q] - direct).norm() < 1e-9, "p={p} q={q}");
            }
        }
    }
}
