//! Run configuration: a TOML document with unit-suffixed keys.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! [`RunConfig::normalized`] fills in derived quantities so that writing a
//! parsed config back out and parsing it again is a fixed point.

use crate::error::{CliError, Result};
use ddsim_core::experiments::{DdTargets, ExperimentConfig, NoiseConfig, PhaseModeSpec, Readout, SequenceSpec};
use ddsim_core::noise::{
    calibrate_fast_noise, CalibrationOptions, CoherentFieldModel, DriftMode, DriftModel, FastNoiseModel,
    DEFAULT_CORRELATION_TIME, DEFAULT_NOISE_STEP,
};
use ddsim_core::spin::{CouplingParams, QubitParams, SystemParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[default]
    Ramsey,
    Conditional,
    ContrastVsDelay,
    DriftEnsemble,
    ShiftVsTime,
    Cnot,
    PulseScan,
    Lockin,
    SpectrumProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Empty,
    CpmgYy,
    CpmgXy,
    Pdd,
    Ccpmg,
}

impl Family {
    pub fn spec(self, pulses: usize, level: u32) -> SequenceSpec {
        match self {
            Self::Empty => SequenceSpec::Empty,
            Self::CpmgYy => SequenceSpec::Cpmg { pulses, mode: PhaseModeSpec::Yy },
            Self::CpmgXy => SequenceSpec::Cpmg { pulses, mode: PhaseModeSpec::Xy },
            Self::Pdd => SequenceSpec::Pdd { pulses },
            Self::Ccpmg => SequenceSpec::Ccpmg { level },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Empty => "empty",
            Self::CpmgYy => "cpmg_yy",
            Self::CpmgXy => "cpmg_xy",
            Self::Pdd => "pdd",
            Self::Ccpmg => "ccpmg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceSection {
    pub family: Family,
    pub pulses: usize,
    /// Concatenation level, used by `ccpmg` only.
    pub level: u32,
    pub total_time_s: f64,
    pub dd_targets: DdTargets,
}

impl Default for SequenceSection {
    fn default() -> Self {
        Self { family: Family::CpmgXy, pulses: 24, level: 3, total_time_s: 5e-3, dd_targets: DdTargets::Both }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    /// Ω/2π.
    pub rabi_frequency_hz: f64,
    /// Defaults to a π rotation, `1/(2·rabi_frequency_hz)`.
    pub pulse_duration_s: Option<f64>,
    /// J/2π.
    pub coupling_hz: Option<f64>,
    /// Window over which `J·T_g = π`.
    pub gate_time_s: Option<f64>,
    pub finite_pulses: bool,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self { rabi_frequency_hz: 60e3, pulse_duration_s: None, coupling_hz: None, gate_time_s: None, finite_pulses: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub drift_sigma_hz: f64,
    pub drift_correlation: f64,
    pub drift_mode: DriftMode,
    /// Target 1/e time for calibrating the fast noise; excludes
    /// `fast_sigma_rad_per_s`.
    pub fast_t2_s: Option<f64>,
    pub fast_sigma_rad_per_s: Option<f64>,
    pub correlation_time_s: f64,
    pub noise_step_s: f64,
    pub fast_correlated: bool,
    pub calibration_shots: usize,
    pub field_amplitude_rad_per_s: Option<f64>,
    pub field_frequency_hz: f64,
    pub field_phase_rad: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            drift_sigma_hz: 20e3,
            drift_correlation: 0.0,
            drift_mode: DriftMode::PerRun,
            fast_t2_s: None,
            fast_sigma_rad_per_s: None,
            correlation_time_s: DEFAULT_CORRELATION_TIME,
            noise_step_s: DEFAULT_NOISE_STEP,
            fast_correlated: true,
            calibration_shots: CalibrationOptions::default().shots,
            field_amplitude_rad_per_s: None,
            field_frequency_hz: 0.0,
            field_phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementSection {
    pub shots: usize,
    pub phase_points: usize,
    pub readout: Readout,
    /// Independent drift/noise runs.
    pub runs: u64,
    pub control: u8,
    pub target: u8,
}

impl Default for MeasurementSection {
    fn default() -> Self {
        Self { shots: 100, phase_points: 25, readout: Readout::Binomial, runs: 1, control: 0, target: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// Delays for `contrast_vs_delay`, windows for `shift_vs_time`.
    pub times_s: Vec<f64>,
    pub families: Vec<Family>,
    pub pulse_counts: Vec<usize>,
    pub ccpmg_levels: Vec<u32>,
    pub probe_pulses: Vec<usize>,
    pub probe_times_s: Vec<f64>,
    pub band_hz: [f64; 2],
    pub lockin_pulses: usize,
    pub lockin_target_rad: f64,
    pub lockin_counts: Vec<usize>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            times_s: Vec::new(),
            families: Vec::new(),
            pulse_counts: Vec::new(),
            ccpmg_levels: Vec::new(),
            probe_pulses: Vec::new(),
            probe_times_s: Vec::new(),
            band_hz: [1e3, 50e3],
            lockin_pulses: 49,
            lockin_target_rad: 0.8,
            lockin_counts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output_dir: Option<String>,
    pub sequence: SequenceSection,
    pub physics: PhysicsSection,
    pub noise: NoiseSection,
    pub measurement: MeasurementSection,
    pub scan: ScanSection,
}

const TOP_KEYS: &[&str] = &["experiment", "seed", "output_dir", "sequence", "physics", "noise", "measurement", "scan"];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    Some(match section {
        "sequence" => &["family", "pulses", "level", "total_time_s", "dd_targets"],
        "physics" => &["rabi_frequency_hz", "pulse_duration_s", "coupling_hz", "gate_time_s", "finite_pulses"],
        "noise" => &[
            "drift_sigma_hz",
            "drift_correlation",
            "drift_mode",
            "fast_t2_s",
            "fast_sigma_rad_per_s",
            "correlation_time_s",
            "noise_step_s",
            "fast_correlated",
            "calibration_shots",
            "field_amplitude_rad_per_s",
            "field_frequency_hz",
            "field_phase_rad",
        ],
        "measurement" => &["shots", "phase_points", "readout", "runs", "control", "target"],
        "scan" => &[
            "times_s",
            "families",
            "pulse_counts",
            "ccpmg_levels",
            "probe_pulses",
            "probe_times_s",
            "band_hz",
            "lockin_pulses",
            "lockin_target_rad",
            "lockin_counts",
        ],
        _ => return None,
    })
}

fn unknown_key(path: &str, key: &str, known: &[&str]) -> CliError {
    let full = if path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    let prefix = format!("{key}_");
    match known.iter().find(|k| k.starts_with(&prefix)) {
        Some(k) => CliError::Config(format!("{full}: missing unit suffix (did you mean `{k}`?)")),
        None => CliError::Config(format!("{full}: unknown key")),
    }
}

/// Rejects unknown keys with their full path before typed parsing, so the
/// message can suggest the unit-suffixed spelling.
fn check_keys(doc: &toml::Table) -> Result<()> {
    for (key, value) in doc {
        if !TOP_KEYS.contains(&key.as_str()) {
            return Err(unknown_key("", key, TOP_KEYS));
        }
        if let Some(known) = section_keys(key) {
            let table = value.as_table().ok_or_else(|| CliError::Config(format!("{key}: expected a table")))?;
            for inner in table.keys() {
                if !known.contains(&inner.as_str()) {
                    return Err(unknown_key(key, inner, known));
                }
            }
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    check_keys(&doc)?;
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim().to_string()))?;
    cfg.normalized()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text)
}

fn bad<T>(key: &str, msg: impl std::fmt::Display) -> Result<T> {
    Err(CliError::Config(format!("{key}: {msg}")))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bad(key, format!("must be positive and finite, got {v}"))
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validates and fills derived fields: coupling and gate time are
    /// completed from each other and the pulse duration from Ω.
    pub fn normalized(mut self) -> Result<Self> {
        let p = &mut self.physics;
        positive("physics.rabi_frequency_hz", p.rabi_frequency_hz)?;
        match (p.coupling_hz, p.gate_time_s) {
            (None, None) => {
                p.gate_time_s = Some(5e-3);
                p.coupling_hz = Some(0.5 / 5e-3);
            }
            (Some(j), None) => {
                positive("physics.coupling_hz", j)?;
                p.gate_time_s = Some(0.5 / j);
            }
            (None, Some(t)) => {
                positive("physics.gate_time_s", t)?;
                p.coupling_hz = Some(0.5 / t);
            }
            (Some(j), Some(t)) => {
                positive("physics.coupling_hz", j)?;
                positive("physics.gate_time_s", t)?;
                let phase = TAU * j * t;
                if (phase / PI - 1.0).abs() > 1e-6 {
                    return bad(
                        "physics.coupling_hz",
                        format!("inconsistent with physics.gate_time_s: J·T_g = {phase} rad, expected π"),
                    );
                }
            }
        }
        let t_pi = *p.pulse_duration_s.get_or_insert(0.5 / p.rabi_frequency_hz);
        positive("physics.pulse_duration_s", t_pi)?;

        let s = &self.sequence;
        if !(s.total_time_s >= 0.0 && s.total_time_s.is_finite()) {
            return bad("sequence.total_time_s", "must be finite and non-negative");
        }
        let n = &self.noise;
        if n.fast_t2_s.is_some() && n.fast_sigma_rad_per_s.is_some() {
            return bad("noise.fast_t2_s", "give either fast_t2_s or fast_sigma_rad_per_s, not both");
        }
        if let Some(t2) = n.fast_t2_s {
            positive("noise.fast_t2_s", t2)?;
        }
        if n.fast_sigma_rad_per_s.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return bad("noise.fast_sigma_rad_per_s", "must be finite and non-negative");
        }
        positive("noise.correlation_time_s", n.correlation_time_s)?;
        positive("noise.noise_step_s", n.noise_step_s)?;
        if n.calibration_shots == 0 {
            return bad("noise.calibration_shots", "must be at least 1");
        }
        let m = &self.measurement;
        if m.shots == 0 {
            return bad("measurement.shots", "must be at least 1");
        }
        if m.phase_points < 8 {
            return bad("measurement.phase_points", "a fringe fit needs at least 8 points");
        }
        if m.runs == 0 {
            return bad("measurement.runs", "must be at least 1");
        }
        if m.control > 1 || m.target > 1 {
            return bad("measurement.control", "basis bits must be 0 or 1");
        }
        self.check_scan()?;
        Ok(self)
    }

    fn check_scan(&self) -> Result<()> {
        let sc = &self.scan;
        match self.experiment {
            ExperimentKind::ContrastVsDelay | ExperimentKind::ShiftVsTime => {
                if sc.times_s.is_empty() {
                    return bad("scan.times_s", "this experiment needs at least one time");
                }
                if sc.times_s.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return bad("scan.times_s", "times must be finite and non-negative");
                }
            }
            ExperimentKind::PulseScan => {
                if sc.families.is_empty() {
                    return bad("scan.families", "a pulse scan needs at least one family");
                }
                for f in &sc.families {
                    let empty = if *f == Family::Ccpmg { sc.ccpmg_levels.is_empty() } else { sc.pulse_counts.is_empty() };
                    if empty {
                        return bad("scan.pulse_counts", format!("no counts given for family {}", f.name()));
                    }
                }
            }
            ExperimentKind::SpectrumProbe => {
                if sc.probe_pulses.is_empty() || sc.probe_pulses.len() != sc.probe_times_s.len() {
                    return bad("scan.probe_pulses", "needs a non-empty list matching scan.probe_times_s");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn j(&self) -> f64 {
        TAU * self.physics.coupling_hz.expect("normalized")
    }

    pub fn system(&self) -> Result<SystemParams<f64>> {
        let p = &self.physics;
        let omega = TAU * p.rabi_frequency_hz;
        Ok(SystemParams {
            qubits: QubitParams::with_pulse_duration(omega, p.pulse_duration_s.unwrap_or(PI / omega))?,
            coupling: CouplingParams::new(self.j()),
        })
    }

    pub fn sequence_spec(&self) -> SequenceSpec {
        self.sequence.family.spec(self.sequence.pulses, self.sequence.level)
    }

    /// Fast-noise strength in rad/s, calibrated when a target time is
    /// given. `None` when fast noise is off.
    pub fn fast_sigma(&self) -> Result<Option<f64>> {
        let n = &self.noise;
        if let Some(t2) = n.fast_t2_s {
            let opts = CalibrationOptions { shots: n.calibration_shots, seed: self.seed, dt: n.noise_step_s };
            return Ok(Some(calibrate_fast_noise(t2, n.correlation_time_s, &opts)?));
        }
        Ok(n.fast_sigma_rad_per_s)
    }

    pub fn noise_config(&self, fast_sigma: Option<f64>) -> NoiseConfig {
        let n = &self.noise;
        NoiseConfig {
            drift: (n.drift_sigma_hz > 0.0).then_some(DriftModel {
                sigma_hz: n.drift_sigma_hz,
                correlation: n.drift_correlation,
                mode: n.drift_mode,
            }),
            fast: fast_sigma.filter(|&s| s > 0.0).map(|sigma| FastNoiseModel {
                sigma,
                correlation_time: n.correlation_time_s,
                dt: n.noise_step_s,
                correlated: n.fast_correlated,
            }),
            field: n.field_amplitude_rad_per_s.map(|amplitude| CoherentFieldModel {
                amplitude,
                frequency_hz: n.field_frequency_hz,
                phase: n.field_phase_rad,
            }),
        }
    }

    pub fn experiment_config(&self, fast_sigma: Option<f64>) -> Result<ExperimentConfig> {
        let m = &self.measurement;
        let cfg = ExperimentConfig {
            preparation: (m.control, m.target),
            sequence: self.sequence_spec(),
            total_time: self.sequence.total_time_s,
            dd_targets: self.sequence.dd_targets,
            phases: ddsim_core::experiments::phase_grid(m.phase_points),
            shots: m.shots,
            noise: self.noise_config(fast_sigma),
            system: self.system()?,
            finite_pulses: self.physics.finite_pulses,
            readout: m.readout,
            seed: self.seed,
            run: 0,
        };
        cfg.noise.validate()?;
        Ok(cfg)
    }
}
