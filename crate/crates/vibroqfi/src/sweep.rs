//! Sweep orchestration: configuration in, CSV (and optional SVG) out.
//!
//! A sweep evaluates the full scattering-and-estimation pipeline — TDM,
//! derivative, SDM, Fisher report — at each value of the swept variable,
//! writing one CSV row per point in sweep order. Points are independent
//! and run on a worker pool; finished TDMs and rows are cached on disk
//! (see [`crate::cache`]) so a repeated run with the same configuration
//! reproduces its CSV byte for byte without recomputing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::cache::{self, Lookup};
use crate::config::SweepConfig;
use crate::error::{Error, Result};
use crate::fisher::{fisher_report_for, FisherReport, DEFAULT_EPS_RANK};
use crate::plot::{LineChart, Series};
use crate::scatter::{build_tdm, params_fingerprint, tdm_derivative, ParamTag, TimeGrid};
use crate::spectral::{spectrum, write_spectrum_csv};
use crate::units::wavenumber_to_angular;
use crate::vibration::{BathKind, BathSpec, FcSeries};

/// CSV header written at the top of every sweep table.
pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,qfi,qfi_bound,cfi_time,cfi_freq,p_loss,n,window,elapsed_ms";

/// Execution knobs that do not live in the config file.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; 1 runs points sequentially.
    pub jobs: usize,
    /// Whether to read/write the disk cache.
    pub use_cache: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { jobs: 1, use_cache: true }
    }
}

/// What a sweep produced, for callers that want to inspect it.
#[derive(Debug)]
pub struct SweepOutcome {
    /// The CSV rows, in sweep order, without trailing newlines.
    pub rows: Vec<String>,
    /// Where the CSV went.
    pub csv_path: PathBuf,
    /// Where the plot went, if one was requested.
    pub svg_path: Option<PathBuf>,
    /// How many points were served from the row cache.
    pub cached_points: usize,
    /// Warnings accumulated across points (cache staleness, regime flags).
    pub warnings: Vec<String>,
}

/// Format a float with 12 significant digits.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn format_row(var: &str, value: f64, report: &FisherReport, elapsed_ms: u128) -> String {
    let window = report.grid.tau_end - report.grid.tau0;
    format!(
        "{var},{},{},{},{},{},{},{},{},{elapsed_ms}",
        sig12(value),
        sig12(report.qfi),
        report.qfi_bound.map_or_else(|| "nan".to_string(), sig12),
        sig12(report.cfi_time),
        sig12(report.cfi_frequency),
        sig12(report.p_loss),
        report.grid.n,
        sig12(window),
    )
}

fn param_name(tag: ParamTag) -> &'static str {
    match tag {
        ParamTag::Gamma => "gamma",
        ParamTag::Lambda0 => "huang_rhys",
    }
}

struct PointResult {
    row: String,
    from_cache: bool,
    warnings: Vec<String>,
}

fn sweep_point(
    cfg: &SweepConfig,
    grid: &TimeGrid,
    value: f64,
    cache_dir: Option<&Path>,
) -> Result<PointResult> {
    let emitter = cfg.emitter_at(value)?;
    let bath = cfg.bath_at(value)?;
    let pulse = cfg.pulse_shape(grid)?;
    let fp = params_fingerprint(&pulse, &emitter, &bath, grid);
    let pname = param_name(cfg.estimate);

    if let Some(dir) = cache_dir {
        if let Some(row) = cache::load_row(dir, &fp, pname) {
            let row = row.trim_end().to_string();
            return Ok(PointResult { row, from_cache: true, warnings: Vec::new() });
        }
    }

    let started = Instant::now();
    let mut warnings = Vec::new();
    let tdm = match cache_dir {
        Some(dir) => match cache::load_tdm(dir, &fp)? {
            Lookup::Hit(tdm) => tdm,
            Lookup::Miss => {
                let tdm = build_tdm(&pulse, &emitter, &bath, grid)?;
                cache::store_tdm(dir, &tdm)?;
                tdm
            }
            Lookup::Stale(msg) => {
                warnings.push(format!("cache: {msg}; recomputing"));
                let tdm = build_tdm(&pulse, &emitter, &bath, grid)?;
                cache::store_tdm(dir, &tdm)?;
                tdm
            }
        },
        None => build_tdm(&pulse, &emitter, &bath, grid)?,
    };
    let deriv = tdm_derivative(&pulse, &emitter, &bath, grid, cfg.estimate)?;
    let report =
        fisher_report_for(tdm, &deriv, &pulse, &emitter, &bath, cfg.estimate, DEFAULT_EPS_RANK)?;
    warnings.extend(report.warnings.iter().cloned());

    let row = format_row(
        cfg.sweep_variable.name(),
        value,
        &report,
        started.elapsed().as_millis(),
    );
    if let Some(dir) = cache_dir {
        cache::store_row(dir, &fp, pname, &row)?;
    }
    Ok(PointResult { row, from_cache: false, warnings })
}

/// Run a sweep: one Fisher report per sweep value, rows written to the
/// configured CSV in sweep order, optionally plotted as SVG.
pub fn run_sweep(cfg: &SweepConfig, opts: &SweepOptions) -> Result<SweepOutcome> {
    let grid = cfg.grid()?;
    let cache_dir = opts
        .use_cache
        .then(|| cache::resolve_cache_dir(cfg.cache_dir.as_deref()));

    let jobs = opts.jobs.max(1);
    let results: Vec<Result<PointResult>> = if jobs == 1 {
        cfg.sweep_values
            .iter()
            .map(|&v| sweep_point(cfg, &grid, v, cache_dir.as_deref()))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
        pool.install(|| {
            cfg.sweep_values
                .par_iter()
                .map(|&v| sweep_point(cfg, &grid, v, cache_dir.as_deref()))
                .collect()
        })
    };

    let mut rows = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    let mut cached_points = 0;
    for r in results {
        let point = r?;
        if point.from_cache {
            cached_points += 1;
        }
        warnings.extend(point.warnings);
        rows.push(point.row);
    }

    let mut csv = String::with_capacity(64 * (rows.len() + 1));
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    if let Some(parent) = cfg.csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&cfg.csv_path, &csv)?;

    if let Some(svg) = &cfg.svg_path {
        render_sweep_plot(cfg, &rows)?.write_svg(svg)?;
    }

    Ok(SweepOutcome {
        rows,
        csv_path: cfg.csv_path.clone(),
        svg_path: cfg.svg_path.clone(),
        cached_points,
        warnings,
    })
}

/// Build the QFI/CFI-vs-sweep chart from finished CSV rows.
fn render_sweep_plot(cfg: &SweepConfig, rows: &[String]) -> Result<LineChart> {
    let mut qfi = Vec::new();
    let mut bound = Vec::new();
    let mut ct = Vec::new();
    let mut cf = Vec::new();
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() < 10 {
            return Err(Error::Numerical(format!("malformed sweep row `{row}`")));
        }
        let get = |i: usize| -> f64 { cols[i].parse().unwrap_or(f64::NAN) };
        let x = get(1);
        qfi.push((x, get(2)));
        bound.push((x, get(3)));
        ct.push((x, get(4)));
        cf.push((x, get(5)));
    }
    let mut series = vec![
        Series { label: "qfi".into(), points: qfi },
        Series { label: "cfi_time".into(), points: ct },
        Series { label: "cfi_freq".into(), points: cf },
    ];
    if bound.iter().any(|(_, y)| y.is_finite()) {
        series.insert(1, Series { label: "qfi_bound".into(), points: bound });
    }
    Ok(LineChart {
        title: format!(
            "Fisher information for {} vs {}",
            param_name(cfg.estimate),
            cfg.sweep_variable.name()
        ),
        x_label: cfg.sweep_variable.name().to_string(),
        y_label: "information (ps^2 per unit^2)".into(),
        series,
    })
}

/// Compute the spectrum decomposition for the configured (unswept) system
/// and write it as CSV to `out`.
pub fn run_spectrum(cfg: &SweepConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid()?;
    let emitter = cfg.emitter_base()?;
    let bath = cfg.bath_base()?;
    let pulse = cfg.pulse_shape(&grid)?;
    let series = FcSeries::for_bath(&bath)?;

    // Detunings may be negative (red side of the transition).
    let to_angular = |cm: f64| -> Result<f64> {
        if cm >= 0.0 {
            wavenumber_to_angular(cm)
        } else {
            Ok(-wavenumber_to_angular(-cm)?)
        }
    };
    let lo = to_angular(cfg.spectrum_omega_min_cm)?;
    let hi = to_angular(cfg.spectrum_omega_max_cm)?;
    let n = cfg.spectrum_points;
    let omegas: Vec<f64> = (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect();

    let decomposition = spectrum(&pulse, &emitter, &bath, &series, &omegas)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file = fs::File::create(out)?;
    write_spectrum_csv(std::io::BufWriter::new(file), &decomposition)?;
    Ok(())
}

/// Oracle-equivalence self-test at N=128: the FFT-based TDM builder must
/// match direct nested quadrature on four representative baths.
pub fn run_selftest(mut log: impl std::io::Write) -> Result<()> {
    use crate::scatter::{default_pulse, tdm_oracle, EmitterParams};

    let gamma = 0.15;
    let emitter = EmitterParams::new(gamma, 0.0)?;
    // 12 lifetimes at N=128 keeps the step below the resolution limit.
    let grid = TimeGrid::new(0.0, 80.0, 128)?;
    let pulse = default_pulse(1.0 / gamma, &grid)?;
    let omega0 = wavenumber_to_angular(100.0)?;
    let cases: Vec<(&str, BathSpec)> = vec![
        ("no coupling", BathSpec::none()),
        (
            "single mode, T=0",
            BathSpec::new(BathKind::SingleMode { lambda0: 0.5, omega0 }, 0.0)?,
        ),
        (
            "single mode, T=300K",
            BathSpec::new(BathKind::SingleMode { lambda0: 0.5, omega0 }, 300.0)?,
        ),
        (
            "Drude-Lorentz, T=300K",
            BathSpec::new(
                BathKind::DrudeLorentz {
                    lambda: 0.5 * omega0,
                    gamma: wavenumber_to_angular(53.0)?,
                },
                300.0,
            )?,
        ),
    ];

    let mut worst = 0.0f64;
    for (name, bath) in &cases {
        let fast = build_tdm(&pulse, &emitter, bath, &grid)?;
        let slow = tdm_oracle(&pulse, &emitter, bath, &grid)?;
        let scale = slow
            .rho
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let err = fast
            .rho
            .iter()
            .zip(slow.rho.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max)
            / scale;
        worst = worst.max(err);
        let verdict = if err <= 1e-6 { "ok" } else { "FAIL" };
        writeln!(log, "selftest {name}: max relative error {err:.3e} [{verdict}]")?;
        if err > 1e-6 {
            return Err(Error::Numerical(format!(
                "selftest `{name}`: max relative error {err:.3e} exceeds 1e-6"
            )));
        }
    }
    writeln!(log, "selftest passed (worst case {worst:.3e})")?;
    Ok(())
}
