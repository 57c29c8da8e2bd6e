//! Detuning noise: quasi-static drift, an Ornstein–Uhlenbeck process with
//! an `f⁻²` tail, and a deterministic sinusoidal field.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::error::{arg, Error, Result};
use crate::rng::{purpose, stream};
use crate::scalar::Real;

/// When a new drift offset is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// One draw per run, shared by all its shots and phase points.
    #[default]
    PerRun,
    /// A fresh draw for every shot.
    PerShot,
}

/// Gaussian run-to-run offset of the qubit resonances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftModel {
    /// Standard deviation in Hz.
    pub sigma_hz: f64,
    /// Correlation between the two qubits' offsets, in `[−1, 1]`.
    pub correlation: f64,
    pub mode: DriftMode,
}

impl Default for DriftModel {
    fn default() -> Self {
        Self { sigma_hz: 20e3, correlation: 0.0, mode: DriftMode::PerRun }
    }
}

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_hz >= 0.0) || !self.sigma_hz.is_finite() {
            return arg("drift width must be finite and non-negative");
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return arg("drift correlation must lie in [-1, 1]");
        }
        Ok(())
    }
}

/// Per-qubit offsets in rad/s drawn from `N(0, (2π σ)²)` with the
/// configured correlation.
pub fn sample_drift<R: Rng + ?Sized>(model: &DriftModel, rng: &mut R) -> [f64; 2] {
    let sigma = TAU * model.sigma_hz;
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let rho = model.correlation.clamp(-1.0, 1.0);
    let second = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
    [sigma * z1, sigma * second]
}

/// Drift offsets for the `(seed, run, shot)` key honoring [`DriftMode`].
pub fn drift_for(model: &DriftModel, seed: u64, run: u64, shot: u64) -> [f64; 2] {
    let mut rng = match model.mode {
        DriftMode::PerRun => stream(seed, &[purpose::DRIFT, run]),
        DriftMode::PerShot => stream(seed, &[purpose::DRIFT, run, shot]),
    };
    sample_drift(model, &mut rng)
}

/// Stationary Ornstein–Uhlenbeck detuning noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FastNoiseModel {
    /// Stationary standard deviation in rad/s.
    pub sigma: f64,
    /// Correlation time τ_c in seconds.
    pub correlation_time: f64,
    /// Grid step in seconds.
    pub dt: f64,
    /// Both qubits see the same realization.
    pub correlated: bool,
}

/// Default correlation time: 2 ms, a Lorentzian corner near 80 Hz.
pub const DEFAULT_CORRELATION_TIME: f64 = 2e-3;
/// Default grid step.
pub const DEFAULT_NOISE_STEP: f64 = 1e-6;

impl FastNoiseModel {
    pub fn new(sigma: f64, correlation_time: f64) -> Self {
        Self { sigma, correlation_time, dt: DEFAULT_NOISE_STEP, correlated: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return arg("noise amplitude must be finite and non-negative");
        }
        if !(self.dt > 0.0) || !(self.correlation_time > 0.0) {
            return arg("noise step and correlation time must be positive");
        }
        if self.dt >= self.correlation_time {
            return arg("noise step must be shorter than the correlation time");
        }
        Ok(())
    }

    /// One-sided angular spectrum `S(ω) = 2σ²τ_c / (1 + ω²τ_c²)`, the Fourier
    /// transform of the autocovariance; see [`crate::filter`].
    pub fn spectrum(&self, omega: f64) -> f64 {
        ou_spectrum(self.sigma, self.correlation_time, omega)
    }
}

pub fn ou_spectrum(sigma: f64, correlation_time: f64, omega: f64) -> f64 {
    let x = omega * correlation_time;
    2.0 * sigma * sigma * correlation_time / (1.0 + x * x)
}

/// Deterministic sinusoidal detuning `b·sin(2π f t + φ)` on both qubits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentFieldModel {
    /// Modulation depth b in rad/s.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase: f64,
}

/// Per-qubit detunings on a uniform grid, held constant over each step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace<T> {
    dt: T,
    values: [Vec<T>; 2],
    prefix: [Vec<T>; 2],
    /// Constant offset included in `values` (rad/s).
    pub drift: [T; 2],
    pub seed: u64,
    pub shot: u64,
}

/// Number of grid steps needed to cover `total`.
pub fn steps_for(total: f64, dt: f64) -> usize {
    let n = total / dt;
    let r = n.round();
    if (n - r).abs() <= 1e-9 * r.max(1.0) {
        (r as usize).max(1)
    } else {
        (n.ceil() as usize).max(1)
    }
}

fn prefix_sums<T: Real>(dt: T, v: &[T]) -> Vec<T> {
    let mut p = Vec::with_capacity(v.len() + 1);
    let mut acc = T::zero();
    p.push(acc);
    for &x in v {
        acc += x * dt;
        p.push(acc);
    }
    p
}

impl<T: Real> NoiseTrace<T> {
    pub fn new(dt: T, first: Vec<T>, second: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) {
            return arg("trace step must be positive");
        }
        if first.len() != second.len() || first.is_empty() {
            return arg("per-qubit traces must be non-empty and equally long");
        }
        if first.iter().chain(&second).any(|x| !x.is_finite()) {
            return arg("trace values must be finite");
        }
        let prefix = [prefix_sums(dt, &first), prefix_sums(dt, &second)];
        Ok(Self { dt, values: [first, second], prefix, drift: [T::zero(); 2], seed: 0, shot: 0 })
    }

    /// All-zero trace covering `total`.
    pub fn zeros(total: T, dt: T) -> Self {
        let n = steps_for(total.to_f64_lossy(), dt.to_f64_lossy());
        Self::new(dt, vec![T::zero(); n], vec![T::zero(); n]).expect("valid zero trace")
    }

    /// Constant detunings over `total`.
    pub fn constant(total: T, dt: T, offsets: [T; 2]) -> Self {
        Self::zeros(total, dt).with_offset(offsets)
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.values[0].is_empty()
    }

    pub fn duration(&self) -> T {
        self.dt * T::lit(self.len() as f64)
    }

    pub fn values(&self, qubit: usize) -> &[T] {
        &self.values[qubit]
    }

    #[inline]
    pub fn value(&self, qubit: usize, step: usize) -> T {
        self.values[qubit][step]
    }

    /// Step containing `t`, clamped to the grid.
    #[inline]
    pub fn step_index(&self, t: T) -> usize {
        if t <= T::zero() {
            return 0;
        }
        let k = (t / self.dt).floor().to_f64_lossy() as usize;
        k.min(self.len() - 1)
    }

    #[inline]
    pub fn step_end(&self, k: usize) -> T {
        if k + 1 >= self.len() {
            // the last step extends to cover rounding past the grid end
            return T::lit(f64::INFINITY);
        }
        self.dt * T::lit((k + 1) as f64)
    }

    pub fn value_at(&self, qubit: usize, t: T) -> T {
        self.value(qubit, self.step_index(t))
    }

    #[inline]
    fn antiderivative(&self, qubit: usize, t: T) -> T {
        let k = self.step_index(t);
        let t0 = self.dt * T::lit(k as f64);
        self.prefix[qubit][k] + self.values[qubit][k] * (t - t0)
    }

    /// `∫_a^b δ_q(t) dt` for `0 ≤ a ≤ b`.
    #[inline]
    pub fn integral(&self, qubit: usize, a: T, b: T) -> T {
        self.antiderivative(qubit, b) - self.antiderivative(qubit, a)
    }

    /// Sample-wise sum of two traces on the same grid.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() || self.dt != other.dt {
            return arg("traces live on different grids");
        }
        let add = |q: usize| -> Vec<T> {
            self.values[q].iter().zip(&other.values[q]).map(|(&a, &b)| a + b).collect()
        };
        let mut out = Self::new(self.dt, add(0), add(1))?;
        out.drift = [self.drift[0] + other.drift[0], self.drift[1] + other.drift[1]];
        out.seed = self.seed;
        out.shot = self.shot;
        Ok(out)
    }

    /// Adds a constant offset per qubit and records it as drift.
    pub fn with_offset(&self, offsets: [T; 2]) -> Self {
        let shift = |q: usize| -> Vec<T> { self.values[q].iter().map(|&a| a + offsets[q]).collect() };
        let mut out = Self::new(self.dt, shift(0), shift(1)).expect("finite offsets");
        out.drift = [self.drift[0] + offsets[0], self.drift[1] + offsets[1]];
        out.seed = self.seed;
        out.shot = self.shot;
        out
    }

    /// Scales every sample by `k`.
    pub fn scaled(&self, k: T) -> Self {
        let s = |q: usize| -> Vec<T> { self.values[q].iter().map(|&a| a * k).collect() };
        let mut out = Self::new(self.dt, s(0), s(1)).expect("finite scale");
        out.drift = [self.drift[0] * k, self.drift[1] * k];
        out.seed = self.seed;
        out.shot = self.shot;
        out
    }

    /// Columnar dump: `time_s δ1_rad_s δ2_rad_s`.
    pub fn to_columns(&self) -> String {
        let mut s = String::from("# time_s delta1_rad_s delta2_rad_s\n");
        for k in 0..self.len() {
            let t = self.dt * T::lit(k as f64);
            let _ = writeln!(s, "{} {} {}", t, self.values[0][k], self.values[1][k]);
        }
        s
    }
}

/// Unit-variance OU samples on the grid, stationary start.
pub(crate) fn ou_unit<R: Rng + ?Sized>(n: usize, dt: f64, correlation_time: f64, rng: &mut R) -> Vec<f64> {
    let a = (-dt / correlation_time).exp();
    let kick = (1.0 - a * a).sqrt();
    let mut x: f64 = rng.sample(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        let z: f64 = rng.sample(StandardNormal);
        x = a * x + kick * z;
    }
    out
}

/// One OU realization over `[0, total]` keyed by `(seed, shot, qubit)`.
///
/// Uses the exact discrete recursion `x_{k+1} = a x_k + σ√(1−a²) ξ_k`,
/// `a = e^{−dt/τ_c}`, with `x_0 ~ N(0, σ²)`.
pub fn sample_fast_trace<T: Real>(
    model: &FastNoiseModel,
    total: f64,
    seed: u64,
    shot: u64,
) -> Result<NoiseTrace<T>> {
    model.validate()?;
    if !(total > 0.0) {
        return arg("trace duration must be positive");
    }
    let n = steps_for(total, model.dt);
    let draw = |qubit: u64| -> Vec<T> {
        if model.sigma == 0.0 {
            return vec![T::zero(); n];
        }
        let mut rng = stream(seed, &[purpose::FAST_NOISE, shot, qubit]);
        ou_unit(n, model.dt, model.correlation_time, &mut rng)
            .into_iter()
            .map(|x| T::lit(model.sigma * x))
            .collect()
    };
    let first = draw(0);
    let second = if model.correlated { first.clone() } else { draw(1) };
    let mut trace = NoiseTrace::new(T::lit(model.dt), first, second)?;
    trace.seed = seed;
    trace.shot = shot;
    Ok(trace)
}

/// Step-averaged `b·sin(2π f t + φ)` on both qubits over `[0, total]`.
pub fn coherent_field_trace<T: Real>(model: &CoherentFieldModel, total: f64, dt: f64) -> Result<NoiseTrace<T>> {
    if !(dt > 0.0) || !(total > 0.0) {
        return arg("field grid needs positive step and duration");
    }
    let n = steps_for(total, dt);
    let w = TAU * model.frequency_hz;
    let v: Vec<T> = (0..n)
        .map(|k| {
            let (a, b) = (k as f64 * dt, (k + 1) as f64 * dt);
            let avg = if w == 0.0 {
                model.amplitude * model.phase.sin()
            } else {
                model.amplitude * ((w * a + model.phase).cos() - (w * b + model.phase).cos()) / (w * dt)
            };
            T::lit(avg)
        })
        .collect();
    NoiseTrace::new(T::lit(dt), v.clone(), v)
}

/// Averaged one-sided power spectral density in Hz units.
///
/// Normalized so that `Σ psd · df` equals the mean (population) variance
/// of the mean-removed traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spectrum {
    pub freq_hz: Vec<f64>,
    pub psd: Vec<f64>,
    pub df: f64,
}

impl Spectrum {
    pub fn integrated_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.df
    }

    /// Least-squares slope of `log psd` against `log f` over `[lo, hi]`.
    pub fn loglog_slope(&self, lo_hz: f64, hi_hz: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .freq_hz
            .iter()
            .zip(&self.psd)
            .filter(|(&f, &p)| f >= lo_hz && f <= hi_hz && p > 0.0)
            .map(|(&f, &p)| (f.ln(), p.ln()))
            .collect();
        crate::stats::linear_fit(&pts).map(|(slope, _)| slope)
    }

    /// Index of the largest bin.
    pub fn peak_bin(&self) -> usize {
        self.psd
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Periodogram of each trace's `qubit` channel, averaged.
pub fn estimate_spectrum<T: Real>(traces: &[NoiseTrace<T>], qubit: usize) -> Result<Spectrum> {
    if traces.len() < 2 {
        return arg("spectrum estimate needs at least two traces");
    }
    let n = traces[0].len();
    let dt = traces[0].dt();
    if traces.iter().any(|t| t.len() != n || t.dt() != dt) {
        return Err(Error::Argument("traces live on different grids".into()));
    }
    let dt = dt.to_f64_lossy();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let half = n / 2;
    let mut psd = vec![0.0; half + 1];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for tr in traces {
        let v = tr.values(qubit);
        let mean = v.iter().map(|x| x.to_f64_lossy()).sum::<f64>() / n as f64;
        for (b, x) in buf.iter_mut().zip(v) {
            *b = Complex64::new(x.to_f64_lossy() - mean, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in psd.iter_mut().enumerate() {
            let two_sided = dt / n as f64 * buf[k].norm_sqr();
            let fold = if k == 0 || (n % 2 == 0 && k == half) { 1.0 } else { 2.0 };
            *p += fold * two_sided;
        }
    }
    let m = traces.len() as f64;
    psd.iter_mut().for_each(|p| *p /= m);
    let df = 1.0 / (n as f64 * dt);
    Ok(Spectrum { freq_hz: (0..=half).map(|k| k as f64 * df).collect(), psd, df })
}

/// Monte-Carlo settings for [`calibrate_fast_noise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub shots: usize,
    pub seed: u64,
    pub dt: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { shots: 4000, seed: 0x5eed, dt: DEFAULT_NOISE_STEP }
    }
}

/// Mean no-DD Ramsey coherence `|⟨2ρ₀₁⟩|` of the target after `delay`,
/// simulated with the full propagator over fixed unit-variance traces
/// scaled by `sigma`.
fn free_induction_contrast(unit: &[NoiseTrace<f64>], sigma: f64, delay: f64) -> Result<f64> {
    use crate::sequence::Sequence;
    use crate::spin::{evolve, instantaneous_pulse, PulseEvent, SystemParams, Targets, TwoQubitState};
    let params = SystemParams {
        qubits: crate::spin::QubitParams::default(),
        coupling: crate::spin::CouplingParams::new(0.0),
    };
    let open = instantaneous_pulse(&PulseEvent::new(0.0, 0.0, 0.0, -std::f64::consts::FRAC_PI_2, Targets::TARGET))?;
    let start = TwoQubitState::basis(0, 0).apply(&open);
    let schedule = Sequence::empty(delay);
    let mut acc = num_complex::Complex64::new(0.0, 0.0);
    for tr in unit {
        let psi = evolve(&start, &schedule, &tr.scaled(sigma), &params)?;
        acc += psi.target_coherence() * 2.0;
    }
    Ok(acc.norm() / unit.len() as f64)
}

/// Finds the OU amplitude σ for which the simulated no-DD Ramsey contrast
/// falls to `1/e` after `target_t2`, by bisection over Monte-Carlo
/// estimates on a fixed set of realizations.
pub fn calibrate_fast_noise(target_t2: f64, correlation_time: f64, opts: &CalibrationOptions) -> Result<f64> {
    if target_t2.is_infinite() && target_t2 > 0.0 {
        return Ok(0.0);
    }
    if !(target_t2 > 0.0) {
        return arg("target dephasing time must be positive");
    }
    if opts.shots == 0 {
        return arg("calibration needs at least one shot");
    }
    FastNoiseModel { sigma: 1.0, correlation_time, dt: opts.dt, correlated: true }.validate()?;
    let n = steps_for(target_t2, opts.dt);
    let unit: Vec<NoiseTrace<f64>> = (0..opts.shots as u64)
        .map(|shot| {
            let mut rng = stream(opts.seed, &[purpose::CALIBRATION, shot]);
            let v = ou_unit(n, opts.dt, correlation_time, &mut rng);
            NoiseTrace::new(opts.dt, v.clone(), v)
        })
        .collect::<Result<_>>()?;
    let goal = (-1.0f64).exp();
    let contrast = |s: f64| free_induction_contrast(&unit, s, target_t2);

    let mut lo = 0.0;
    let mut hi = std::f64::consts::SQRT_2 / target_t2;
    let mut found = false;
    for _ in 0..64 {
        if contrast(hi)? < goal {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::Calibration(format!(
            "contrast never fell below 1/e at {target_t2} s"
        )));
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if contrast(mid)? > goal {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
