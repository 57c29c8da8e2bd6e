//! Monte-Carlo experiments: Ramsey fringes on the target qubit around a
//! decoupled window, conditional fringe shifts, CNOT truth tables,
//! robustness scans, spectrum probes and the PDD lock-in study.
//!
//! A shot draws one noise realization, evolves the prepared basis state
//! through `R_x(−π/2)` on the target, the decoupled window and a `−π/2`
//! detection rotation about the axis at azimuth φ, and is projected. All
//! phase points of a shot share its realization. Shots run in parallel and
//! are reduced in shot order, so results depend only on the configuration.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::error::{arg, Error, Result};
use crate::filter::{probe_spectrum, ProbeInput, ProbePoint};
use crate::noise::{
    coherent_field_trace, drift_for, sample_fast_trace, CoherentFieldModel, DriftMode, DriftModel,
    FastNoiseModel, NoiseTrace, DEFAULT_NOISE_STEP,
};
use crate::rng::{derive_seed, purpose, stream};
use crate::scalar::{wrap_positive, wrap_signed};
use crate::sequence::{build_cpmg, build_pdd, ccpmg_level_for_count, schedule_ccpmg, PhaseMode, Sequence};
use crate::spin::{
    pulse_propagator, schedule_propagator, CouplingParams, PulseEvent, Qubit, QubitParams, SystemParams,
    Targets, TwoQubitState, Unitary4,
};
use crate::stats;

/// Detection phase of the CNOT construction.
pub const CNOT_PHASE: f64 = 3.0 * FRAC_PI_2;

/// Fits below this contrast do not locate the fringe minimum.
pub const MIN_RELIABLE_CONTRAST: f64 = 0.05;

/// Which decoupling schedule fills the Ramsey window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SequenceSpec {
    Empty,
    Cpmg { pulses: usize, mode: PhaseModeSpec },
    Pdd { pulses: usize },
    Ccpmg { level: u32 },
}

/// Serializable mirror of [`PhaseMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseModeSpec {
    Yy,
    Xy,
}

impl From<PhaseModeSpec> for PhaseMode {
    fn from(m: PhaseModeSpec) -> Self {
        match m {
            PhaseModeSpec::Yy => PhaseMode::Yy,
            PhaseModeSpec::Xy => PhaseMode::Xy,
        }
    }
}

impl SequenceSpec {
    pub fn cpmg_yy(pulses: usize) -> Self {
        Self::Cpmg { pulses, mode: PhaseModeSpec::Yy }
    }

    pub fn cpmg_xy(pulses: usize) -> Self {
        Self::Cpmg { pulses, mode: PhaseModeSpec::Xy }
    }

    pub fn build(&self, total_time: f64, t_pi: f64, targets: Targets) -> Result<Sequence<f64>> {
        match *self {
            Self::Empty => Ok(Sequence::empty(total_time)),
            Self::Cpmg { pulses, mode } => build_cpmg(pulses, total_time, t_pi, mode.into(), targets),
            Self::Pdd { pulses } => build_pdd(pulses, total_time, t_pi, targets),
            Self::Ccpmg { level } => schedule_ccpmg(level, total_time, t_pi, targets),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Empty => "EMPTY".into(),
            Self::Cpmg { pulses, mode: PhaseModeSpec::Yy } => format!("CPMG_YY({pulses})"),
            Self::Cpmg { pulses, mode: PhaseModeSpec::Xy } => format!("CPMG_XY({pulses})"),
            Self::Pdd { pulses } => format!("PDD({pulses})"),
            Self::Ccpmg { level } => format!("C-CPMG_{level}"),
        }
    }
}

/// Sequence family for pulse-number scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseFamily {
    CpmgYy,
    CpmgXy,
    Pdd,
    Ccpmg,
}

impl PulseFamily {
    /// Spec with `n` pulses; concatenated sequences need a level's count.
    pub fn with_count(self, n: usize) -> Result<SequenceSpec> {
        Ok(match self {
            Self::CpmgYy => SequenceSpec::cpmg_yy(n),
            Self::CpmgXy => SequenceSpec::cpmg_xy(n),
            Self::Pdd => SequenceSpec::Pdd { pulses: n },
            Self::Ccpmg => match ccpmg_level_for_count(n as u64) {
                Some(level) => SequenceSpec::Ccpmg { level },
                None => return arg(format!("{n} is not a concatenated CPMG pulse count")),
            },
        })
    }
}

/// Qubits receiving the decoupling pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DdTargets {
    #[default]
    Both,
    TargetOnly,
}

impl DdTargets {
    pub fn targets(self) -> Targets {
        match self {
            Self::Both => Targets::BOTH,
            Self::TargetOnly => Targets::TARGET,
        }
    }
}

/// Projective readout model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// One Bernoulli outcome per shot and phase point.
    #[default]
    Binomial,
    /// Shot-averaged probabilities without projection noise.
    Exact,
}

/// Noise sources switched on for a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    pub drift: Option<DriftModel>,
    pub fast: Option<FastNoiseModel>,
    pub field: Option<CoherentFieldModel>,
}

impl NoiseConfig {
    pub fn silent() -> Self {
        Self::default()
    }

    /// Grid step shared by every trace component.
    pub fn step(&self) -> f64 {
        self.fast.map_or(DEFAULT_NOISE_STEP, |m| m.dt)
    }

    /// True when every shot of a run sees the same detunings.
    pub fn is_shot_invariant(&self) -> bool {
        let fast_quiet = self.fast.is_none_or(|m| m.sigma == 0.0);
        let drift_fixed = self.drift.is_none_or(|d| d.mode == DriftMode::PerRun || d.sigma_hz == 0.0);
        fast_quiet && drift_fixed
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.drift {
            d.validate()?;
        }
        if let Some(f) = &self.fast {
            f.validate()?;
        }
        Ok(())
    }
}

/// One Ramsey-type gate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Prepared computational basis state `(control, target)`.
    pub preparation: (u8, u8),
    pub sequence: SequenceSpec,
    /// Decoupled window length in seconds.
    pub total_time: f64,
    pub dd_targets: DdTargets,
    /// Detection phases in radians.
    pub phases: Vec<f64>,
    pub shots: usize,
    pub noise: NoiseConfig,
    pub system: SystemParams<f64>,
    /// Rectangular pulses of length `t_π` instead of instantaneous ones.
    pub finite_pulses: bool,
    pub readout: Readout,
    pub seed: u64,
    /// Run index; keys the per-run drift and noise streams.
    pub run: u64,
}

/// `n` equally spaced phases over `[0, 2π)`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

/// Ω = 2π·60 kHz with `J·T_g = π` at `gate_time`.
pub fn default_system(gate_time: f64) -> SystemParams<f64> {
    SystemParams {
        qubits: QubitParams::default(),
        coupling: CouplingParams::from_gate_time(gate_time).expect("positive gate time"),
    }
}

impl ExperimentConfig {
    /// Noiseless, instantaneous-pulse configuration with 25 phases × 100
    /// shots and `J·T_g = π` at 5 ms.
    pub fn new(sequence: SequenceSpec, total_time: f64) -> Self {
        Self {
            preparation: (0, 0),
            sequence,
            total_time,
            dd_targets: DdTargets::Both,
            phases: phase_grid(25),
            shots: 100,
            noise: NoiseConfig::silent(),
            system: default_system(5e-3),
            finite_pulses: false,
            readout: Readout::Binomial,
            seed: 0,
            run: 0,
        }
    }

    pub fn t_pi(&self) -> f64 {
        if self.finite_pulses {
            self.system.qubits.pulse_duration
        } else {
            0.0
        }
    }

    pub fn schedule(&self) -> Result<Sequence<f64>> {
        self.sequence.build(self.total_time, self.t_pi(), self.dd_targets.targets())
    }

    fn validate_common(&self) -> Result<()> {
        if self.shots == 0 {
            return arg("shots must be at least 1");
        }
        if self.preparation.0 > 1 || self.preparation.1 > 1 {
            return arg("preparation bits must be 0 or 1");
        }
        if !(self.total_time >= 0.0) || !self.total_time.is_finite() {
            return arg("window length must be finite and non-negative");
        }
        if self.phases.iter().any(|p| !p.is_finite()) {
            return arg("phases must be finite");
        }
        self.noise.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common()?;
        if self.phases.len() < 8 {
            return arg("a fringe fit needs at least 8 phase points");
        }
        Ok(())
    }

    /// Noise trace of `shot` covering the window (at least one step).
    pub fn noise_trace(&self, shot: u64) -> Result<NoiseTrace<f64>> {
        let dt = self.noise.step();
        let span = self.total_time.max(dt);
        let mut trace = match &self.noise.fast {
            Some(m) if m.sigma > 0.0 => {
                sample_fast_trace(m, span, derive_seed(self.seed, &[self.run]), shot)?
            }
            _ => NoiseTrace::zeros(span, dt),
        };
        if let Some(field) = &self.noise.field {
            trace = trace.plus(&coherent_field_trace(field, span, dt)?)?;
        }
        if let Some(d) = &self.noise.drift {
            trace = trace.with_offset(drift_for(d, self.seed, self.run, shot));
        }
        trace.seed = self.seed;
        trace.shot = shot;
        Ok(trace)
    }
}

/// Ramsey rotation of angle `−π/2` about azimuth `phase` on the target,
/// finite or instantaneous, with the detunings `(d1, d2)`.
fn ramsey_pulse(cfg: &ExperimentConfig, phase: f64, d1: f64, d2: f64) -> Result<Unitary4<f64>> {
    let duration = cfg.t_pi() / 2.0;
    let p = PulseEvent::new(duration / 2.0, duration, phase, -FRAC_PI_2, Targets::TARGET);
    pulse_propagator(&p, d1, d2, cfg.system.coupling.j, cfg.system.qubits.rabi_frequency)
}

/// State after opening pulse and window, before detection, plus the edge
/// detunings the detection pulse sees.
struct Window {
    state: TwoQubitState<f64>,
    edge: (f64, f64),
}

fn run_window(cfg: &ExperimentConfig, seq: &Sequence<f64>, shot: u64) -> Result<Window> {
    let trace = cfg.noise_trace(shot)?;
    let (c, t) = cfg.preparation;
    let open = ramsey_pulse(cfg, 0.0, trace.value_at(0, 0.0), trace.value_at(1, 0.0))?;
    let u = schedule_propagator(seq, &trace, &cfg.system)?;
    let state = TwoQubitState::basis(c, t).apply(&open).apply(&u);
    let end = cfg.total_time;
    Ok(Window { state, edge: (trace.value_at(0, end), trace.value_at(1, end)) })
}

fn detect(cfg: &ExperimentConfig, w: &Window, phase: f64) -> Result<TwoQubitState<f64>> {
    Ok(w.state.apply(&ramsey_pulse(cfg, phase, w.edge.0, w.edge.1)?))
}

/// Per-shot results evaluated in parallel and returned in shot order.
/// Shot-invariant noise is simulated once and reused.
fn per_shot<R, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<R>>
where
    R: Send + Sync + Clone,
    F: Fn(u64, Option<&R>) -> Result<R> + Sync,
{
    if cfg.noise.is_shot_invariant() {
        let first = f(0, None)?;
        let rest = (1..cfg.shots as u64)
            .into_par_iter()
            .map(|s| f(s, Some(&first)))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(cfg.shots);
        out.push(first);
        out.extend(rest);
        return Ok(out);
    }
    (0..cfg.shots as u64).into_par_iter().map(|s| f(s, None)).collect()
}

/// Excitation probability of the target at each phase for one shot, and
/// the projected outcomes.
#[derive(Debug, Clone)]
struct ShotFringe {
    p1: Vec<f64>,
    clicks: Vec<bool>,
}

fn readout_rng(cfg: &ExperimentConfig, shot: u64) -> rand_chacha::ChaCha8Rng {
    stream(cfg.seed, &[purpose::READOUT, cfg.run, shot])
}

fn simulate_fringe(cfg: &ExperimentConfig, phases: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate_common()?;
    let seq = cfg.schedule()?;
    let shots = per_shot(cfg, |shot, reuse: Option<&ShotFringe>| {
        let p1 = match reuse {
            Some(r) => r.p1.clone(),
            None => {
                let w = run_window(cfg, &seq, shot)?;
                phases
                    .iter()
                    .map(|&ph| Ok(detect(cfg, &w, ph)?.excited(Qubit::Target).clamp(0.0, 1.0)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let clicks = match cfg.readout {
            Readout::Exact => Vec::new(),
            Readout::Binomial => {
                let mut rng = readout_rng(cfg, shot);
                p1.iter().map(|&p| rng.random::<f64>() < p).collect()
            }
        };
        Ok(ShotFringe { p1, clicks })
    })?;
    let n = shots.len() as f64;
    let mut exact = vec![0.0; phases.len()];
    let mut counts = vec![0usize; phases.len()];
    for s in &shots {
        for (k, p) in s.p1.iter().enumerate() {
            exact[k] += p / n;
        }
        for (k, &c) in s.clicks.iter().enumerate() {
            counts[k] += c as usize;
        }
    }
    let measured = match cfg.readout {
        Readout::Exact => exact.clone(),
        Readout::Binomial => counts.iter().map(|&c| c as f64 / n).collect(),
    };
    Ok((measured, exact))
}

/// Single-harmonic least-squares fit of `P₁(φ) = ½(1 − C cos(φ − φ_min))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeFit {
    pub contrast: f64,
    pub contrast_err: f64,
    /// In `[0, 2π)`.
    pub phi_min: f64,
    pub offset: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub reliable: bool,
}

/// Fits `a + b cos φ + c sin φ`; then `C = 2√(b² + c²)` and
/// `φ_min = atan2(−c, −b)`.
pub fn fit_fringe(phases: &[f64], p1: &[f64]) -> Result<FringeFit> {
    if phases.len() != p1.len() || phases.len() < 3 {
        return arg("fringe fit needs at least 3 matching points");
    }
    let rows = phases.len();
    let x = nalgebra::DMatrix::from_fn(rows, 3, |i, j| match j {
        0 => 1.0,
        1 => phases[i].cos(),
        _ => phases[i].sin(),
    });
    let y = nalgebra::DVector::from_column_slice(p1);
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or_else(|| Error::Argument("degenerate phase grid".into()))?;
    let beta = &inv * x.transpose() * &y;
    let (a, b, c) = (beta[0], beta[1], beta[2]);
    let res = &y - &x * &beta;
    let rss = res.norm_squared();
    let dof = rows.saturating_sub(3).max(1) as f64;
    let s2 = rss / dof;
    let amp = (b * b + c * c).sqrt();
    let contrast = 2.0 * amp;
    let contrast_err = if amp > 0.0 {
        2.0 * ((b * b * inv[(1, 1)] + c * c * inv[(2, 2)] + 2.0 * b * c * inv[(1, 2)]) * s2).sqrt() / amp
    } else {
        2.0 * (s2 * inv[(1, 1)].max(inv[(2, 2)])).sqrt()
    };
    Ok(FringeFit {
        contrast,
        contrast_err,
        phi_min: wrap_positive((-c).atan2(-b)),
        offset: a,
        residual: (rss / rows as f64).sqrt(),
        reliable: contrast >= MIN_RELIABLE_CONTRAST,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FringeResult {
    pub phases: Vec<f64>,
    /// Measured excitation probability of the target.
    pub p1: Vec<f64>,
    /// Binomial standard error of `p1`.
    pub stderr: Vec<f64>,
    /// Shot-averaged probabilities without projection noise.
    pub p1_exact: Vec<f64>,
    pub fit: FringeFit,
}

impl FringeResult {
    pub fn contrast(&self) -> f64 {
        self.fit.contrast
    }

    /// Fitted minimum, `None` when the fit is unreliable.
    pub fn phi_min(&self) -> Option<f64> {
        self.fit.reliable.then_some(self.fit.phi_min)
    }

    /// Columnar export: `phase_rad P1 stderr`.
    pub fn to_columns(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("# phase_rad P1 stderr P1_exact\n");
        for k in 0..self.phases.len() {
            let _ = writeln!(s, "{} {} {} {}", self.phases[k], self.p1[k], self.stderr[k], self.p1_exact[k]);
        }
        s
    }
}

/// Ramsey fringe of the target around the configured window.
pub fn run_ramsey(cfg: &ExperimentConfig) -> Result<FringeResult> {
    cfg.validate()?;
    let (p1, p1_exact) = simulate_fringe(cfg, &cfg.phases)?;
    let n = cfg.shots as f64;
    let stderr = match cfg.readout {
        Readout::Exact => vec![0.0; p1.len()],
        Readout::Binomial => p1.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect(),
    };
    let fit = fit_fringe(&cfg.phases, &p1)?;
    Ok(FringeResult { phases: cfg.phases.clone(), p1, stderr, p1_exact, fit })
}

/// `2P₁(φ) − 1` at a single detection phase, with its standard error.
pub fn probe_contrast(cfg: &ExperimentConfig, phase: f64) -> Result<(f64, f64)> {
    let (p1, _) = simulate_fringe(cfg, &[phase])?;
    let p = p1[0];
    let err = match cfg.readout {
        Readout::Exact => 0.0,
        Readout::Binomial => 2.0 * (p * (1.0 - p) / cfg.shots as f64).sqrt(),
    };
    Ok((2.0 * p - 1.0, err))
}

fn with_control(cfg: &ExperimentConfig, control: u8) -> ExperimentConfig {
    ExperimentConfig { preparation: (control, cfg.preparation.1), ..cfg.clone() }
}

/// Fringe minima for control `|0⟩` and `|1⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalFringes {
    pub control0: FringeResult,
    pub control1: FringeResult,
}

impl ConditionalFringes {
    /// `φ_min(control 0) − φ_min(control 1)` wrapped into `(−π, π]`.
    pub fn relative_shift(&self) -> Option<f64> {
        Some(wrap_signed(self.control0.phi_min()? - self.control1.phi_min()?))
    }
}

pub fn run_conditional(cfg: &ExperimentConfig) -> Result<ConditionalFringes> {
    Ok(ConditionalFringes {
        control0: run_ramsey(&with_control(cfg, 0))?,
        control1: run_ramsey(&with_control(cfg, 1))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftPoint {
    pub total_time: f64,
    /// Unwrapped minima for control `|0⟩` and `|1⟩`; `None` marks a gap.
    pub phi_min: [Option<f64>; 2],
    pub contrast: [f64; 2],
}

/// Branch of `phi` nearest to `reference`.
pub fn nearest_branch(phi: f64, reference: f64) -> f64 {
    reference + wrap_signed(phi - reference)
}

/// Fringe minima per control state over `times`, unwrapped by
/// nearest-branch continuation starting from π.
pub fn fringe_shift_vs_time(cfg: &ExperimentConfig, times: &[f64]) -> Result<Vec<ShiftPoint>> {
    let mut last = [PI, PI];
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let at = ExperimentConfig { total_time: t, ..cfg.clone() };
        let mut point = ShiftPoint { total_time: t, phi_min: [None, None], contrast: [0.0; 2] };
        for c in 0..2u8 {
            let r = run_ramsey(&with_control(&at, c))?;
            point.contrast[c as usize] = r.contrast();
            if let Some(phi) = r.phi_min() {
                let v = nearest_branch(phi, last[c as usize]);
                last[c as usize] = v;
                point.phi_min[c as usize] = Some(v);
            }
        }
        out.push(point);
    }
    Ok(out)
}

/// Output populations per input basis state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthTableResult {
    /// `matrix[input][output]`, basis index `2c + t`.
    pub matrix: [[f64; 4]; 4],
    /// Mean population of the correct CNOT output.
    pub fidelity: f64,
}

/// Basis index the ideal CNOT maps `input` to.
pub fn cnot_output(input: usize) -> usize {
    let (c, t) = (input >> 1, input & 1);
    (c << 1) | (t ^ c)
}

/// The gate at detection phase 3π/2 for all four inputs.
pub fn run_cnot(cfg: &ExperimentConfig) -> Result<TruthTableResult> {
    cfg.validate_common()?;
    let seq = cfg.schedule()?;
    let mut matrix = [[0.0; 4]; 4];
    for (input, row) in matrix.iter_mut().enumerate() {
        let at = ExperimentConfig { preparation: ((input >> 1) as u8, (input & 1) as u8), ..cfg.clone() };
        let shots = per_shot(&at, |shot, reuse: Option<&([f64; 4], usize)>| {
            let pops = match reuse {
                Some(r) => r.0,
                None => {
                    let w = run_window(&at, &seq, shot)?;
                    detect(&at, &w, CNOT_PHASE)?.populations()
                }
            };
            let mut rng = stream(at.seed, &[purpose::READOUT, at.run, shot, input as u64]);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut outcome = 3;
            for (k, p) in pops.iter().enumerate() {
                acc += p;
                if u < acc {
                    outcome = k;
                    break;
                }
            }
            Ok((pops, outcome))
        })?;
        let n = shots.len() as f64;
        for (pops, outcome) in &shots {
            match cfg.readout {
                Readout::Exact => {
                    let norm: f64 = pops.iter().sum();
                    for k in 0..4 {
                        row[k] += pops[k] / norm / n;
                    }
                }
                Readout::Binomial => row[*outcome] += 1.0 / n,
            }
        }
    }
    let fidelity = (0..4).map(|i| matrix[i][cnot_output(i)]).sum::<f64>() / 4.0;
    Ok(TruthTableResult { matrix, fidelity })
}

/// Contrast of one configuration at one sequence length.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseNumberPoint {
    pub pulses: usize,
    /// `2P₁(0) − 1`.
    pub probe_contrast: Option<f64>,
    pub fitted_contrast: Option<f64>,
    /// Why the point could not be run.
    pub error: Option<String>,
}

/// Probe and fitted contrast versus pulse count with target-only DD.
pub fn contrast_vs_pulse_number(
    cfg: &ExperimentConfig,
    family: PulseFamily,
    counts: &[usize],
) -> Result<Vec<PulseNumberPoint>> {
    let mut out = Vec::with_capacity(counts.len());
    for &n in counts {
        let spec = family.with_count(n)?;
        let at = ExperimentConfig { sequence: spec, dd_targets: DdTargets::TargetOnly, ..cfg.clone() };
        let run = || -> Result<(f64, f64)> {
            let probe = probe_contrast(&at, 0.0)?.0;
            Ok((probe, run_ramsey(&at)?.contrast()))
        };
        out.push(match run() {
            Ok((p, c)) => PulseNumberPoint { pulses: n, probe_contrast: Some(p), fitted_contrast: Some(c), error: None },
            Err(e @ (Error::Timing(_) | Error::Schedule(_))) => {
                PulseNumberPoint { pulses: n, probe_contrast: None, fitted_contrast: None, error: Some(e.to_string()) }
            }
            Err(e) => return Err(e),
        });
    }
    Ok(out)
}

/// Probe contrast `2P₁(0) − 1` for each run index in `runs`.
pub fn probe_contrast_over_runs(cfg: &ExperimentConfig, runs: std::ops::Range<u64>) -> Result<Vec<f64>> {
    runs.map(|run| Ok(probe_contrast(&ExperimentConfig { run, ..cfg.clone() }, 0.0)?.0)).collect()
}

/// Relative conditional shift for each run index in `runs`; unreliable
/// fits are skipped.
pub fn conditional_shift_over_runs(cfg: &ExperimentConfig, runs: std::ops::Range<u64>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for run in runs {
        if let Some(s) = run_conditional(&ExperimentConfig { run, ..cfg.clone() })?.relative_shift() {
            out.push(s);
        }
    }
    Ok(out)
}

/// Mean target coherence `|⟨2ρ₀₁⟩|` after the window and its standard
/// error, projected onto the mean direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceEstimate {
    pub contrast: f64,
    pub stderr: f64,
}

pub fn monte_carlo_coherence(cfg: &ExperimentConfig) -> Result<CoherenceEstimate> {
    cfg.validate_common()?;
    let seq = cfg.schedule()?;
    let samples = per_shot(cfg, |shot, reuse: Option<&Complex64>| match reuse {
        Some(&z) => Ok(z),
        None => Ok(run_window(cfg, &seq, shot)?.state.target_coherence() * 2.0),
    })?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Complex64>() / n;
    let contrast = mean.norm();
    let dir = if contrast > 0.0 { mean / contrast } else { Complex64::new(1.0, 0.0) };
    let proj: Vec<f64> = samples.iter().map(|z| (z * dir.conj()).re).collect();
    Ok(CoherenceEstimate { contrast, stderr: stats::std_err(&proj) })
}

/// `T_coh = −T / ln C` for a single-point exponential decay.
pub fn coherence_time(total_time: f64, contrast: f64) -> Option<f64> {
    (contrast > 0.0 && contrast < 1.0).then(|| -total_time / contrast.ln())
}

/// First delay where `points` cross `level`, by log-linear interpolation.
pub fn crossing_time(points: &[(f64, f64)], level: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if c0 >= level && c1 < level && c0 > 0.0 && c1 > 0.0 {
            let f = (level.ln() - c0.ln()) / (c1.ln() - c0.ln());
            Some(t0 + f * (t1 - t0))
        } else {
            None
        }
    })
}

/// Fitted Ramsey contrast versus window length.
pub fn contrast_vs_delay(cfg: &ExperimentConfig, delays: &[f64]) -> Result<Vec<(f64, f64)>> {
    delays
        .iter()
        .map(|&t| Ok((t, run_ramsey(&ExperimentConfig { total_time: t, ..cfg.clone() })?.contrast())))
        .collect()
}

/// CPMG probes `(N, T)`, their Monte-Carlo contrasts and the spectrum
/// estimates inverted from them.
pub fn spectrum_probe(cfg: &ExperimentConfig, probes: &[(usize, f64)]) -> Result<Vec<(ProbeInput, ProbePoint)>> {
    let inputs = probes
        .iter()
        .map(|&(n, t)| {
            let at = ExperimentConfig { sequence: SequenceSpec::cpmg_yy(n), total_time: t, ..cfg.clone() };
            let c = monte_carlo_coherence(&at)?;
            Ok(ProbeInput { n_pulses: n, total_time: t, contrast: c.contrast.min(1.0) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(inputs.iter().cloned().zip(probe_spectrum(&inputs)).collect())
}

/// Field `b·sin(2πf(t − t₁))` flipping sign at every pulse center of
/// PDD(`n`) over `total_time`.
pub fn pdd_synchronized_field(n: usize, total_time: f64, t_pi: f64, amplitude: f64) -> Result<CoherentFieldModel> {
    let seq = build_pdd(n, total_time, t_pi, Targets::BOTH)?;
    let spacing = seq.base_interval + t_pi;
    let frequency_hz = 1.0 / (2.0 * spacing);
    let t1 = seq.pulses[0].center_time - spacing;
    Ok(CoherentFieldModel { amplitude, frequency_hz, phase: -TAU * frequency_hz * t1 })
}

/// Global fringe displacement caused by `field`, relative to the same
/// configuration without it, in `(−π, π]`.
pub fn lockin_phase(cfg: &ExperimentConfig, field: &CoherentFieldModel) -> Result<f64> {
    let without = ExperimentConfig { noise: NoiseConfig { field: None, ..cfg.noise }, ..cfg.clone() };
    let with = ExperimentConfig { noise: NoiseConfig { field: Some(*field), ..cfg.noise }, ..cfg.clone() };
    let a = run_ramsey(&without)?;
    let b = run_ramsey(&with)?;
    match (a.phi_min(), b.phi_min()) {
        (Some(x), Some(y)) => Ok(wrap_signed(y - x)),
        _ => Err(Error::Argument("fringe too faint to locate".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LockinPoint {
    pub pulses: usize,
    pub extra_phase: f64,
}

/// Extra phase under PDD(N) for each count with a fixed `field`.
pub fn pdd_lockin_study(cfg: &ExperimentConfig, field: &CoherentFieldModel, counts: &[usize]) -> Result<Vec<LockinPoint>> {
    counts
        .iter()
        .map(|&n| {
            let at = ExperimentConfig { sequence: SequenceSpec::Pdd { pulses: n }, ..cfg.clone() };
            Ok(LockinPoint { pulses: n, extra_phase: lockin_phase(&at, field)? })
        })
        .collect()
}

/// Amplitude of the field synchronized with PDD(`n`) that displaces the
/// fringe by `target` radians, by secant iteration.
pub fn fit_lockin_amplitude(cfg: &ExperimentConfig, n: usize, target: f64) -> Result<CoherentFieldModel> {
    let at = ExperimentConfig { sequence: SequenceSpec::Pdd { pulses: n }, ..cfg.clone() };
    let field = |b: f64| pdd_synchronized_field(n, at.total_time, at.t_pi(), b);
    let residual = |b: f64| -> Result<f64> { Ok(lockin_phase(&at, &field(b)?)?.abs() - target) };
    // toggling-frame estimate: ∫|b sin| over the window = 2bT/π
    let mut b0 = target * PI / (2.0 * at.total_time);
    let mut r0 = residual(b0)?;
    let mut b1 = b0 * 1.1;
    let mut r1 = residual(b1)?;
    for _ in 0..30 {
        if r1.abs() < 1e-6 * target.max(1e-3) || r1 == r0 {
            break;
        }
        let next = b1 - r1 * (b1 - b0) / (r1 - r0);
        (b0, r0) = (b1, r1);
        b1 = next.max(0.0);
        r1 = residual(b1)?;
    }
    if (r1.abs()) > 1e-3 * target.max(1e-3) {
        return Err(Error::Calibration(format!("lock-in amplitude fit stalled at residual {r1}")));
    }
    field(b1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(sequence: SequenceSpec, t: f64) -> ExperimentConfig {
        ExperimentConfig { readout: Readout::Exact, shots: 1, ..ExperimentConfig::new(sequence, t) }
    }

    #[test]
    fn fit_recovers_synthetic_fringe() {
        let phases = phase_grid(25);
        let p1: Vec<f64> = phases.iter().map(|p| 0.5 * (1.0 - 0.7 * (p - 2.0).cos())).collect();
        let f = fit_fringe(&phases, &p1).unwrap();
        assert!((f.contrast - 0.7).abs() < 1e-12);
        assert!((f.phi_min - 2.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let flat = fit_fringe(&phases, &vec![0.5; 25]).unwrap();
        assert!(!flat.reliable);
    }

    #[test]
    fn zero_window_minimum_at_pi() {
        let r = run_ramsey(&ideal(SequenceSpec::Empty, 0.0)).unwrap();
        assert!((r.fit.phi_min - PI).abs() < 1e-9, "{}", r.fit.phi_min);
        assert!((r.contrast() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gate_time_minima() {
        let c = run_conditional(&ideal(SequenceSpec::cpmg_xy(24), 5e-3)).unwrap();
        assert!((c.control0.fit.phi_min - 1.5 * PI).abs() < 1e-6);
        assert!((c.control1.fit.phi_min - FRAC_PI_2).abs() < 1e-6);
    }

    #[test]
    fn ideal_truth_table() {
        let t = run_cnot(&ideal(SequenceSpec::cpmg_yy(24), 5e-3)).unwrap();
        assert!(t.fidelity > 0.999_999, "{:?}", t.matrix);
    }

    #[test]
    fn too_few_phases_rejected() {
        let cfg = ExperimentConfig { phases: phase_grid(4), ..ideal(SequenceSpec::Empty, 1e-3) };
        assert!(run_ramsey(&cfg).is_err());
        let cfg = ExperimentConfig { shots: 0, ..ideal(SequenceSpec::Empty, 1e-3) };
        assert!(run_ramsey(&cfg).is_err());
    }

    #[test]
    fn nearest_branch_continues() {
        assert!((nearest_branch(0.1, TAU - 0.1) - (TAU + 0.1)).abs() < 1e-12);
        assert!((nearest_branch(3.0, 3.2) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn crossing_interpolates() {
        let pts = [(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)];
        let t = crossing_time(&pts, 0.5f64.powf(1.5)).unwrap();
        assert!((t - 1.5).abs() < 1e-12);
        assert!(coherence_time(1.0, 1.0).is_none());
    }

    #[test]
    fn cnot_mapping() {
        assert_eq!([0, 1, 2, 3].map(cnot_output), [0, 1, 3, 2]);
    }
}
