//! Flat key-value sweep configuration.
//!
//! Configuration files are plain text, one `key = value` pair per line,
//! with dotted keys grouping related settings and `#` starting a comment:
//!
//! ```text
//! emitter.gamma_psinv = 0.15
//! emitter.gamma_perp_ratio = 0.0
//!
//! bath.kind = single_mode
//! bath.lambda0 = 0.5
//! bath.omega0_cm = 1000
//! temperature_kelvin = 0
//!
//! pulse.kind = decaying_exponential
//! pulse.tsigma_over_invgamma = 1.0
//!
//! grid.n = 2048
//! grid.window_over_invgamma = 20
//!
//! estimate.parameter = gamma
//! sweep.variable = lambda0
//! sweep.values = 0, 0.2, 0.4, 0.6, 0.8, 1.0
//!
//! output.csv = sweep.csv
//! output.svg = sweep.svg
//! ```
//!
//! Rates are given in ps⁻¹ and vibrational frequencies in cm⁻¹; pulse and
//! grid scales are expressed in units of the emitter lifetime 1/Γ so a
//! config stays meaningful when Γ changes. Unknown keys, missing required
//! keys and malformed values are reported with the offending line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pulse::PulseShape;
use crate::scatter::{default_pulse, EmitterParams, ParamTag, TimeGrid};
use crate::units::wavenumber_to_angular;
use crate::vibration::{BathKind, BathSpec};

/// What the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Huang–Rhys factor λ₀ of a single-mode bath (dimensionless).
    Lambda0,
    /// Reorganization energy λ of a continuum bath (cm⁻¹).
    LambdaCm,
    /// Bath temperature (kelvin).
    TemperatureKelvin,
    /// Pure-dephasing ratio Γ⊥/Γ (dimensionless).
    GammaPerpRatio,
}

impl SweepVariable {
    /// Name used in config files and the CSV `sweep_var` column.
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Lambda0 => "lambda0",
            SweepVariable::LambdaCm => "lambda_cm",
            SweepVariable::TemperatureKelvin => "temperature_kelvin",
            SweepVariable::GammaPerpRatio => "gamma_perp_ratio",
        }
    }
}

/// Incident pulse family selected in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseKind {
    /// One-sided decaying exponential (the emitter-matched shape).
    DecayingExponential,
    /// Gaussian envelope (not a shape studied in the underlying model;
    /// provided for sweep plumbing).
    Gaussian,
    /// Samples loaded from a two-column text file.
    Sampled(PathBuf),
}

/// Bath family selected in the config, with dimensionful parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum BathConfig {
    /// No vibrational coupling.
    None,
    /// One sharp mode: Huang–Rhys factor and frequency in cm⁻¹.
    SingleMode { lambda0: f64, omega0_cm: f64 },
    /// Over-damped continuum: reorganization energy and cutoff in cm⁻¹.
    DrudeLorentz { lambda_cm: f64, gamma_cm: f64 },
    /// Damped mode: reorganization energy, frequency, damping in cm⁻¹.
    Brownian { lambda_cm: f64, omega0_cm: f64, gamma_cm: f64 },
    /// Spectral density loaded from a two-column text file
    /// (Ω in cm⁻¹, J(Ω) in cm⁻¹, `#` comments).
    Tabulated(PathBuf),
}

/// A fully validated sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Radiative decay rate Γ in ps⁻¹.
    pub gamma_psinv: f64,
    /// Pure-dephasing ratio Γ⊥/Γ.
    pub gamma_perp_ratio: f64,
    /// Bath family and parameters.
    pub bath: BathConfig,
    /// Bath temperature in kelvin.
    pub temperature_kelvin: f64,
    /// Pulse family.
    pub pulse: PulseKind,
    /// Pulse duration T_σ in units of 1/Γ.
    pub tsigma_over_invgamma: f64,
    /// Grid size N (power of two).
    pub grid_n: usize,
    /// Total window length in units of 1/Γ (centred on the origin).
    pub window_over_invgamma: f64,
    /// Parameter being estimated.
    pub estimate: ParamTag,
    /// Swept variable.
    pub sweep_variable: SweepVariable,
    /// Sweep values (units per [`SweepVariable`]).
    pub sweep_values: Vec<f64>,
    /// CSV output path.
    pub csv_path: PathBuf,
    /// Optional SVG plot path.
    pub svg_path: Option<PathBuf>,
    /// Optional cache directory (the environment variable still wins).
    pub cache_dir: Option<PathBuf>,
    /// Spectrum export range (cm⁻¹ around the transition) and samples.
    pub spectrum_omega_min_cm: f64,
    /// Upper edge of the spectrum export range in cm⁻¹.
    pub spectrum_omega_max_cm: f64,
    /// Number of spectrum samples.
    pub spectrum_points: usize,
}

/// Raw parsed key-value pairs with line numbers for diagnostics.
struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line_no}: expected `key = value`, got `{line}`"))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {line_no}: empty key or value in `{line}`"
                )));
            }
            if let Some((first, _)) = entries.insert(key.clone(), (line_no, value)) {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key `{key}` (first set on line {first})"
                )));
            }
        }
        Ok(RawConfig { entries })
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key `{key}`")));
        }
        Ok(())
    }
}

fn parse_f64(key: &str, line: usize, value: &str) -> Result<f64> {
    value.parse::<f64>().map_err(|_| {
        Error::Config(format!("line {line}: `{key}` expects a number, got `{value}`"))
    })
}

fn parse_usize(key: &str, line: usize, value: &str) -> Result<usize> {
    value.parse::<usize>().map_err(|_| {
        Error::Config(format!("line {line}: `{key}` expects an integer, got `{value}`"))
    })
}

impl SweepConfig {
    /// Parse and validate a configuration from text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;

        let (l, v) = raw.required("emitter.gamma_psinv")?;
        let gamma_psinv = parse_f64("emitter.gamma_psinv", l, &v)?;
        if !(gamma_psinv > 0.0) {
            return Err(Error::Config(format!(
                "line {l}: emitter.gamma_psinv must be positive"
            )));
        }
        let gamma_perp_ratio = match raw.take("emitter.gamma_perp_ratio") {
            Some((l, v)) => {
                let r = parse_f64("emitter.gamma_perp_ratio", l, &v)?;
                if r < 0.0 {
                    return Err(Error::Config(format!(
                        "line {l}: emitter.gamma_perp_ratio must be >= 0"
                    )));
                }
                r
            }
            None => 0.0,
        };

        let (bath_line, bath_kind) = raw.required("bath.kind")?;
        let bath = match bath_kind.as_str() {
            "none" => BathConfig::None,
            "single_mode" => {
                let (l, v) = raw.required("bath.lambda0")?;
                let lambda0 = parse_f64("bath.lambda0", l, &v)?;
                let (l, v) = raw.required("bath.omega0_cm")?;
                let omega0_cm = parse_f64("bath.omega0_cm", l, &v)?;
                BathConfig::SingleMode { lambda0, omega0_cm }
            }
            "drude_lorentz" => {
                let (l, v) = raw.required("bath.lambda_cm")?;
                let lambda_cm = parse_f64("bath.lambda_cm", l, &v)?;
                let (l, v) = raw.required("bath.gamma_cm")?;
                let gamma_cm = parse_f64("bath.gamma_cm", l, &v)?;
                BathConfig::DrudeLorentz { lambda_cm, gamma_cm }
            }
            "brownian" => {
                let (l, v) = raw.required("bath.lambda_cm")?;
                let lambda_cm = parse_f64("bath.lambda_cm", l, &v)?;
                let (l, v) = raw.required("bath.omega0_cm")?;
                let omega0_cm = parse_f64("bath.omega0_cm", l, &v)?;
                let (l, v) = raw.required("bath.gamma_cm")?;
                let gamma_cm = parse_f64("bath.gamma_cm", l, &v)?;
                BathConfig::Brownian { lambda_cm, omega0_cm, gamma_cm }
            }
            "tabulated" => {
                let (_, v) = raw.required("bath.table")?;
                BathConfig::Tabulated(PathBuf::from(v))
            }
            other => {
                return Err(Error::Config(format!(
                    "line {bath_line}: unknown bath.kind `{other}` \
                     (expected none, single_mode, drude_lorentz, brownian, tabulated)"
                )))
            }
        };

        let temperature_kelvin = match raw.take("temperature_kelvin") {
            Some((l, v)) => {
                let t = parse_f64("temperature_kelvin", l, &v)?;
                if t < 0.0 {
                    return Err(Error::Config(format!(
                        "line {l}: temperature_kelvin must be >= 0"
                    )));
                }
                t
            }
            None => 0.0,
        };

        let pulse = match raw.take("pulse.kind") {
            None => PulseKind::DecayingExponential,
            Some((l, v)) => match v.as_str() {
                "decaying_exponential" => PulseKind::DecayingExponential,
                "gaussian" => PulseKind::Gaussian,
                "sampled" => {
                    let (_, p) = raw.required("pulse.samples")?;
                    PulseKind::Sampled(PathBuf::from(p))
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {l}: unknown pulse.kind `{other}` \
                         (expected decaying_exponential, gaussian, sampled)"
                    )))
                }
            },
        };
        let tsigma_over_invgamma = match raw.take("pulse.tsigma_over_invgamma") {
            Some((l, v)) => {
                let t = parse_f64("pulse.tsigma_over_invgamma", l, &v)?;
                if !(t > 0.0) {
                    return Err(Error::Config(format!(
                        "line {l}: pulse.tsigma_over_invgamma must be positive"
                    )));
                }
                t
            }
            None => 1.0,
        };

        let grid_n = match raw.take("grid.n") {
            Some((l, v)) => {
                let n = parse_usize("grid.n", l, &v)?;
                if !n.is_power_of_two() || n < 2 {
                    return Err(Error::Config(format!(
                        "line {l}: grid.n must be a power of two >= 2, got {n}"
                    )));
                }
                n
            }
            None => 2048,
        };
        let window_over_invgamma = match raw.take("grid.window_over_invgamma") {
            Some((l, v)) => {
                let w = parse_f64("grid.window_over_invgamma", l, &v)?;
                if !(w > 0.0) {
                    return Err(Error::Config(format!(
                        "line {l}: grid.window_over_invgamma must be positive"
                    )));
                }
                w
            }
            None => 20.0,
        };

        let estimate = match raw.take("estimate.parameter") {
            None => ParamTag::Gamma,
            Some((l, v)) => match v.as_str() {
                "gamma" => ParamTag::Gamma,
                "huang_rhys" => ParamTag::Lambda0,
                other => {
                    return Err(Error::Config(format!(
                        "line {l}: unknown estimate.parameter `{other}` \
                         (expected gamma, huang_rhys)"
                    )))
                }
            },
        };

        let (sv_line, sv) = raw.required("sweep.variable")?;
        let sweep_variable = match sv.as_str() {
            "lambda0" => SweepVariable::Lambda0,
            "lambda_cm" => SweepVariable::LambdaCm,
            "temperature_kelvin" => SweepVariable::TemperatureKelvin,
            "gamma_perp_ratio" => SweepVariable::GammaPerpRatio,
            other => {
                return Err(Error::Config(format!(
                    "line {sv_line}: unknown sweep.variable `{other}` (expected \
                     lambda0, lambda_cm, temperature_kelvin, gamma_perp_ratio)"
                )))
            }
        };
        let (vals_line, vals) = raw.required("sweep.values")?;
        let sweep_values = vals
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| parse_f64("sweep.values", vals_line, s))
            .collect::<Result<Vec<f64>>>()?;
        if sweep_values.is_empty() {
            return Err(Error::Config(format!(
                "line {vals_line}: sweep.values must list at least one value"
            )));
        }

        let (_, csv) = raw.required("output.csv")?;
        let csv_path = PathBuf::from(csv);
        let svg_path = raw.take("output.svg").map(|(_, v)| PathBuf::from(v));
        let cache_dir = raw.take("cache.dir").map(|(_, v)| PathBuf::from(v));

        let spectrum_omega_min_cm = match raw.take("spectrum.omega_min_cm") {
            Some((l, v)) => parse_f64("spectrum.omega_min_cm", l, &v)?,
            None => -4000.0,
        };
        let spectrum_omega_max_cm = match raw.take("spectrum.omega_max_cm") {
            Some((l, v)) => parse_f64("spectrum.omega_max_cm", l, &v)?,
            None => 1000.0,
        };
        if spectrum_omega_max_cm <= spectrum_omega_min_cm {
            return Err(Error::Config(
                "spectrum.omega_max_cm must exceed spectrum.omega_min_cm".into(),
            ));
        }
        let spectrum_points = match raw.take("spectrum.points") {
            Some((l, v)) => {
                let n = parse_usize("spectrum.points", l, &v)?;
                if n < 2 {
                    return Err(Error::Config(format!(
                        "line {l}: spectrum.points must be >= 2"
                    )));
                }
                n
            }
            None => 2001,
        };

        raw.finish()?;

        // Cross-field checks that do not depend on the sweep value.
        let cfg = SweepConfig {
            gamma_psinv,
            gamma_perp_ratio,
            bath,
            temperature_kelvin,
            pulse,
            tsigma_over_invgamma,
            grid_n,
            window_over_invgamma,
            estimate,
            sweep_variable,
            sweep_values,
            csv_path,
            svg_path,
            cache_dir,
            spectrum_omega_min_cm,
            spectrum_omega_max_cm,
            spectrum_points,
        };
        cfg.check_consistency()?;
        Ok(cfg)
    }

    /// Read and parse a configuration file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn check_consistency(&self) -> Result<()> {
        match self.sweep_variable {
            SweepVariable::Lambda0 => {
                if !matches!(self.bath, BathConfig::SingleMode { .. }) {
                    return Err(Error::Config(
                        "sweep.variable = lambda0 requires bath.kind = single_mode".into(),
                    ));
                }
            }
            SweepVariable::LambdaCm => {
                if !matches!(
                    self.bath,
                    BathConfig::DrudeLorentz { .. } | BathConfig::Brownian { .. }
                ) {
                    return Err(Error::Config(
                        "sweep.variable = lambda_cm requires a continuum bath \
                         (drude_lorentz or brownian)"
                            .into(),
                    ));
                }
            }
            SweepVariable::TemperatureKelvin | SweepVariable::GammaPerpRatio => {}
        }
        if self.estimate == ParamTag::Lambda0
            && !matches!(self.bath, BathConfig::SingleMode { .. })
        {
            return Err(Error::Config(
                "estimate.parameter = huang_rhys requires bath.kind = single_mode".into(),
            ));
        }
        Ok(())
    }

    /// Emitter as configured, before any sweep substitution.
    pub fn emitter_base(&self) -> Result<EmitterParams> {
        EmitterParams::new(self.gamma_psinv, self.gamma_perp_ratio * self.gamma_psinv)
    }

    /// Bath as configured, before any sweep substitution.
    pub fn bath_base(&self) -> Result<BathSpec> {
        let kind = match &self.bath {
            BathConfig::None => BathKind::None,
            BathConfig::SingleMode { lambda0, omega0_cm } => {
                if *lambda0 == 0.0 {
                    BathKind::None
                } else {
                    BathKind::SingleMode {
                        lambda0: *lambda0,
                        omega0: wavenumber_to_angular(*omega0_cm)?,
                    }
                }
            }
            BathConfig::DrudeLorentz { lambda_cm, gamma_cm } => BathKind::DrudeLorentz {
                lambda: wavenumber_to_angular(*lambda_cm)?,
                gamma: wavenumber_to_angular(*gamma_cm)?,
            },
            BathConfig::Brownian { lambda_cm, omega0_cm, gamma_cm } => BathKind::Brownian {
                lambda: wavenumber_to_angular(*lambda_cm)?,
                omega0: wavenumber_to_angular(*omega0_cm)?,
                gamma: wavenumber_to_angular(*gamma_cm)?,
            },
            BathConfig::Tabulated(path) => tabulated_from_file(path)?,
        };
        BathSpec::new(kind, self.temperature_kelvin)
    }

    /// Emitter for a given sweep value.
    pub fn emitter_at(&self, value: f64) -> Result<EmitterParams> {
        let ratio = match self.sweep_variable {
            SweepVariable::GammaPerpRatio => value,
            _ => self.gamma_perp_ratio,
        };
        if ratio < 0.0 {
            return Err(Error::Config(format!(
                "negative gamma_perp_ratio {ratio} in sweep values"
            )));
        }
        EmitterParams::new(self.gamma_psinv, ratio * self.gamma_psinv)
    }

    /// Bath for a given sweep value.
    pub fn bath_at(&self, value: f64) -> Result<BathSpec> {
        let temperature = match self.sweep_variable {
            SweepVariable::TemperatureKelvin => value,
            _ => self.temperature_kelvin,
        };
        let kind = match &self.bath {
            BathConfig::None => BathKind::None,
            BathConfig::SingleMode { lambda0, omega0_cm } => {
                let l0 = match self.sweep_variable {
                    SweepVariable::Lambda0 => value,
                    _ => *lambda0,
                };
                if l0 == 0.0 {
                    BathKind::None
                } else {
                    BathKind::SingleMode {
                        lambda0: l0,
                        omega0: wavenumber_to_angular(*omega0_cm)?,
                    }
                }
            }
            BathConfig::DrudeLorentz { lambda_cm, gamma_cm } => {
                let lam = match self.sweep_variable {
                    SweepVariable::LambdaCm => value,
                    _ => *lambda_cm,
                };
                BathKind::DrudeLorentz {
                    lambda: wavenumber_to_angular(lam)?,
                    gamma: wavenumber_to_angular(*gamma_cm)?,
                }
            }
            BathConfig::Brownian { lambda_cm, omega0_cm, gamma_cm } => {
                let lam = match self.sweep_variable {
                    SweepVariable::LambdaCm => value,
                    _ => *lambda_cm,
                };
                BathKind::Brownian {
                    lambda: wavenumber_to_angular(lam)?,
                    omega0: wavenumber_to_angular(*omega0_cm)?,
                    gamma: wavenumber_to_angular(*gamma_cm)?,
                }
            }
            BathConfig::Tabulated(path) => tabulated_from_file(path)?,
        };
        BathSpec::new(kind, temperature)
    }

    /// Time grid implied by the config: a window of `window_over_invgamma`
    /// lifetimes centred on the origin.
    pub fn grid(&self) -> Result<TimeGrid> {
        let half = 0.5 * self.window_over_invgamma / self.gamma_psinv;
        TimeGrid::symmetric(half, self.grid_n)
    }

    /// Incident pulse implied by the config.
    pub fn pulse_shape(&self, grid: &TimeGrid) -> Result<PulseShape> {
        let tsigma = self.tsigma_over_invgamma / self.gamma_psinv;
        match &self.pulse {
            PulseKind::DecayingExponential => default_pulse(tsigma, grid),
            PulseKind::Gaussian => PulseShape::gaussian(tsigma, 0.0),
            PulseKind::Sampled(path) => PulseShape::from_samples_file(path),
        }
    }
}

/// Load a tabulated spectral density from two-column text: Ω in cm⁻¹,
/// J(Ω) in cm⁻¹, one sample per line, `#` starting comments. Both columns
/// are converted to rad/ps.
pub fn tabulated_from_file(path: &Path) -> Result<BathKind> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read spectral density {}: {e}", path.display()))
    })?;
    let mut omega = Vec::new();
    let mut j = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Config(format!(
                "{}:{line_no}: expected two columns, got `{line}`",
                path.display()
            )));
        };
        let parse = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::Config(format!(
                    "{}:{line_no}: not a number: `{s}`",
                    path.display()
                ))
            })
        };
        omega.push(wavenumber_to_angular(parse(a)?)?);
        j.push(wavenumber_to_angular(parse(b)?)?);
    }
    Ok(BathKind::Tabulated { omega, j })
}
