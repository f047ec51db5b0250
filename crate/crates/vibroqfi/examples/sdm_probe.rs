use vibroqfi::scatter::{build_tdm, default_pulse, EmitterParams, TimeGrid};
use vibroqfi::spectral::tdm_to_sdm;
use vibroqfi::vibration::BathSpec;

fn main() {
    let gamma = 0.15;
    let em = EmitterParams::new(gamma, 0.0).unwrap();
    for n in [2048usize, 4096, 8192] {
        let grid = TimeGrid::symmetric(10.0 / gamma, n).unwrap();
        let pulse = default_pulse(1.0 / gamma, &grid).unwrap();
        let tdm = build_tdm(&pulse, &em, &BathSpec::none(), &grid).unwrap();
        let sdm = tdm_to_sdm(&tdm);
        let mut worst = 0.0f64;
        let mut at = 0.0f64;
        for (k, &w) in sdm.omegas().iter().enumerate() {
            if w.abs() > 10.0 * gamma { continue; }
            let want = pulse.freq_amplitude(w).norm_sqr();
            let err = (sdm.diagonal()[k] - want).abs() / want;
            if err > worst { worst = err; at = w; }
        }
        println!("n={n}: worst rel err {worst:.3e} at omega={at:.3}");
    }
}
