//! Exact evolution of two σz⊗σz-coupled qubits in the rotating frame.
//!
//! Basis ordering is `|00⟩, |01⟩, |10⟩, |11⟩` (control ⊗ target), index
//! `2·c + t`. `|1⟩` is the upper level, so `σz|0⟩ = −|0⟩` and
//! `σz|1⟩ = +|1⟩`; the Pauli matrices below are written in that basis so
//! Bloch-sphere rotations keep their geometric sense.
//!
//! The rotating-frame Hamiltonian between pulses is
//!
//! ```text
//! H_free = (δ1/2) σz⊗I + (δ2/2) I⊗σz − J Sz⊗Sz,   Sz = σz/2
//! ```
//!
//! so the target precesses at `±J/2` depending on the control and the
//! conditional phase after time `t` is `J·t`. A drive on qubit `q` adds
//! `sgn(θ)·(Ω/2)(cos φ σx + sin φ σy)` on that qubit while the coupling
//! and the detunings stay on.

use nalgebra::{Matrix2, Matrix4, Vector4};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Mul;

use crate::error::{arg, Error, Result};
use crate::noise::NoiseTrace;
use crate::scalar::{argument, cis, modulus, Cplx, Real};
use crate::sequence::Sequence;

/// Qubit role in the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Qubit {
    Control,
    Target,
}

impl Qubit {
    pub fn index(self) -> usize {
        match self {
            Qubit::Control => 0,
            Qubit::Target => 1,
        }
    }
}

/// Set of qubits a pulse addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Targets {
    pub control: bool,
    pub target: bool,
}

impl Targets {
    pub const NONE: Targets = Targets { control: false, target: false };
    pub const CONTROL: Targets = Targets { control: true, target: false };
    pub const TARGET: Targets = Targets { control: false, target: true };
    pub const BOTH: Targets = Targets { control: true, target: true };

    pub fn contains(self, q: Qubit) -> bool {
        match q {
            Qubit::Control => self.control,
            Qubit::Target => self.target,
        }
    }

    pub fn is_empty(self) -> bool {
        !self.control && !self.target
    }

    pub fn label(self) -> &'static str {
        match (self.control, self.target) {
            (false, false) => "none",
            (true, false) => "control",
            (false, true) => "target",
            (true, true) => "both",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Targets::NONE),
            "control" => Ok(Targets::CONTROL),
            "target" => Ok(Targets::TARGET),
            "both" => Ok(Targets::BOTH),
            other => Err(Error::Parse(format!("unknown qubit set `{other}`"))),
        }
    }
}

impl fmt::Display for Targets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Targets {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Targets {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Targets::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Drive parameters shared by both qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams<T> {
    /// Rabi frequency Ω in rad/s.
    pub rabi_frequency: T,
    /// π-pulse duration in seconds.
    pub pulse_duration: T,
}

impl<T: Real> QubitParams<T> {
    /// Parameters with `t_π = π/Ω`.
    pub fn new(rabi_frequency: T) -> Result<Self> {
        if !(rabi_frequency > T::zero()) {
            return arg("Rabi frequency must be positive");
        }
        Ok(Self { rabi_frequency, pulse_duration: T::pi() / rabi_frequency })
    }

    pub fn with_pulse_duration(rabi_frequency: T, pulse_duration: T) -> Result<Self> {
        if !(rabi_frequency > T::zero()) || !(pulse_duration > T::zero()) {
            return arg("Rabi frequency and pulse duration must be positive");
        }
        Ok(Self { rabi_frequency, pulse_duration })
    }
}

impl<T: Real> Default for QubitParams<T> {
    /// Ω = 2π × 60 kHz.
    fn default() -> Self {
        Self::new(T::two_pi() * T::lit(60.0e3)).expect("positive default")
    }
}

/// Ising coupling strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingParams<T> {
    /// J in rad/s.
    pub j: T,
}

impl<T: Real> CouplingParams<T> {
    pub fn new(j: T) -> Self {
        Self { j }
    }

    /// Coupling whose conditional phase reaches π after `gate_time`.
    pub fn from_gate_time(gate_time: T) -> Result<Self> {
        if !(gate_time > T::zero()) {
            return arg("gate time must be positive");
        }
        Ok(Self { j: T::pi() / gate_time })
    }

    pub fn gate_time(&self) -> T {
        T::pi() / self.j
    }
}

/// Everything [`evolve`] needs besides the schedule and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams<T> {
    pub qubits: QubitParams<T>,
    pub coupling: CouplingParams<T>,
}

/// One rectangular microwave pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEvent<T> {
    pub center_time: T,
    /// Zero encodes an instantaneous pulse.
    pub duration: T,
    /// Azimuth φ of the rotation axis `(cos φ, sin φ, 0)`.
    pub phase: T,
    /// Signed rotation angle; positive is anticlockwise about the axis.
    pub angle: T,
    pub targets: Targets,
}

impl<T: Real> PulseEvent<T> {
    pub fn new(center_time: T, duration: T, phase: T, angle: T, targets: Targets) -> Self {
        Self { center_time, duration, phase, angle, targets }
    }

    /// Anticlockwise π about y.
    pub fn y(center_time: T, duration: T, targets: Targets) -> Self {
        Self::new(center_time, duration, T::frac_pi_2(), T::pi(), targets)
    }

    /// Clockwise π about x.
    pub fn x_bar(center_time: T, duration: T, targets: Targets) -> Self {
        Self::new(center_time, duration, T::zero(), -T::pi(), targets)
    }

    pub fn start(&self) -> T {
        self.center_time - self.duration / T::lit(2.0)
    }

    pub fn end(&self) -> T {
        self.center_time + self.duration / T::lit(2.0)
    }

    pub fn is_instantaneous(&self) -> bool {
        self.duration == T::zero()
    }
}

/// Pure state of the two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoQubitState<T: Real>(pub Vector4<Cplx<T>>);

impl<T: Real> TwoQubitState<T> {
    /// Computational basis state `|control, target⟩`.
    pub fn basis(control: u8, target: u8) -> Self {
        let mut v = Vector4::zeros();
        v[basis_index(control, target)] = Complex::new(T::one(), T::zero());
        Self(v)
    }

    pub fn amplitudes(&self) -> &Vector4<Cplx<T>> {
        &self.0
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn apply(&self, u: &Unitary4<T>) -> Self {
        Self(u.0 * self.0)
    }

    /// Populations of `|00⟩, |01⟩, |10⟩, |11⟩`.
    pub fn populations(&self) -> [T; 4] {
        [0, 1, 2, 3].map(|i| self.0[i].norm_sqr())
    }

    /// Probability of finding `qubit` in `|1⟩`.
    pub fn excited(&self, qubit: Qubit) -> T {
        let p = self.populations();
        match qubit {
            Qubit::Control => p[2] + p[3],
            Qubit::Target => p[1] + p[3],
        }
    }

    /// Off-diagonal element `⟨0|ρ_target|1⟩` of the reduced target state.
    pub fn target_coherence(&self) -> Cplx<T> {
        let a = &self.0;
        a[0] * a[1].conj() + a[2] * a[3].conj()
    }
}

pub fn basis_index(control: u8, target: u8) -> usize {
    assert!(control < 2 && target < 2, "basis labels are bits");
    2 * control as usize + target as usize
}

/// Level sign `z = ⟨σz⟩` of bit `b`.
#[inline]
fn z_of<T: Real>(bit: usize) -> T {
    if bit == 0 {
        -T::one()
    } else {
        T::one()
    }
}

/// 4×4 unitary acting on the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unitary4<T: Real>(pub Matrix4<Cplx<T>>);

impl<T: Real> Unitary4<T> {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    pub fn from_diagonal(d: [Cplx<T>; 4]) -> Self {
        Self(Matrix4::from_diagonal(&Vector4::from(d)))
    }

    /// `a ⊗ b` with `a` on the control.
    pub fn kron(a: &Matrix2<Cplx<T>>, b: &Matrix2<Cplx<T>>) -> Self {
        Self(a.kronecker(b).fixed_view::<4, 4>(0, 0).into_owned())
    }

    pub fn matrix(&self) -> &Matrix4<Cplx<T>> {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `max |(U†U − I)_ij|`.
    pub fn unitarity_error(&self) -> T {
        let d = self.0.adjoint() * self.0 - Matrix4::identity();
        d.iter().fold(T::zero(), |m, z| m.max(modulus(*z)))
    }

    /// Element-wise max distance.
    pub fn max_diff(&self, other: &Self) -> T {
        (self.0 - other.0).iter().fold(T::zero(), |m, z| m.max(modulus(*z)))
    }

    /// Max distance after removing a global phase.
    pub fn max_diff_up_to_phase(&self, other: &Self) -> T {
        let overlap = (other.0.adjoint() * self.0).trace();
        if modulus(overlap) == T::zero() {
            return self.max_diff(other);
        }
        let phase = overlap / Complex::new(modulus(overlap), T::zero());
        (self.0 - other.0 * phase).iter().fold(T::zero(), |m, z| m.max(modulus(*z)))
    }

    /// Relative target phase in the control-|1⟩ sector minus the one in the
    /// control-|0⟩ sector, for a diagonal unitary. Wrapped into `(−π, π]`.
    pub fn conditional_phase(&self) -> T {
        let m = &self.0;
        let rel0 = argument(m[(1, 1)] * m[(0, 0)].conj());
        let rel1 = argument(m[(3, 3)] * m[(2, 2)].conj());
        crate::scalar::wrap_signed(rel1 - rel0)
    }
}

impl<T: Real> Mul for Unitary4<T> {
    type Output = Unitary4<T>;
    fn mul(self, rhs: Self) -> Self {
        Unitary4(self.0 * rhs.0)
    }
}

impl<'a, T: Real> Mul<&'a Unitary4<T>> for &'a Unitary4<T> {
    type Output = Unitary4<T>;
    fn mul(self, rhs: &'a Unitary4<T>) -> Unitary4<T> {
        Unitary4(self.0 * rhs.0)
    }
}

/// Single-qubit Pauli matrices in the `|0⟩, |1⟩` ordering.
pub mod pauli {
    use super::*;

    pub fn identity<T: Real>() -> Matrix2<Cplx<T>> {
        Matrix2::identity()
    }

    pub fn x<T: Real>() -> Matrix2<Cplx<T>> {
        let (o, l) = (Complex::new(T::zero(), T::zero()), Complex::new(T::one(), T::zero()));
        Matrix2::new(o, l, l, o)
    }

    pub fn y<T: Real>() -> Matrix2<Cplx<T>> {
        let o = Complex::new(T::zero(), T::zero());
        let i = Complex::new(T::zero(), T::one());
        Matrix2::new(o, i, -i, o)
    }

    pub fn z<T: Real>() -> Matrix2<Cplx<T>> {
        let o = Complex::new(T::zero(), T::zero());
        let l = Complex::new(T::one(), T::zero());
        Matrix2::new(-l, o, o, l)
    }
}

/// `exp(−i θ/2 (cos φ σx + sin φ σy))`.
pub fn rotation<T: Real>(phase: T, angle: T) -> Matrix2<Cplx<T>> {
    let half = angle / T::lit(2.0);
    let c = Complex::new(half.cos(), T::zero());
    let s = half.sin();
    let minus_i_s = Complex::new(T::zero(), -s);
    Matrix2::new(c, minus_i_s * cis(phase), minus_i_s * cis(-phase), c)
}

/// Diagonal energies of `H_free`, indexed like the basis.
fn free_energies<T: Real>(d1: T, d2: T, j: T) -> [T; 4] {
    let half = T::lit(0.5);
    let quarter = T::lit(0.25);
    let mut e = [T::zero(); 4];
    for (i, ei) in e.iter_mut().enumerate() {
        let z1: T = z_of(i >> 1);
        let z2: T = z_of(i & 1);
        *ei = half * d1 * z1 + half * d2 * z2 - quarter * j * z1 * z2;
    }
    e
}

/// Diagonal propagator from accumulated detuning phases `∫δ1`, `∫δ2` and
/// coupling phase `J·t`.
fn free_from_integrals<T: Real>(phi1: T, phi2: T, jt: T) -> Unitary4<T> {
    let e = free_energies(phi1, phi2, jt);
    Unitary4::from_diagonal(e.map(|x| cis(-x)))
}

/// `exp(−i H_free · duration)` in closed form.
pub fn free_propagator<T: Real>(duration: T, d1: T, d2: T, j: T) -> Result<Unitary4<T>> {
    if duration < T::zero() || !duration.is_finite() {
        return arg("free evolution duration must be finite and non-negative");
    }
    Ok(free_from_integrals(d1 * duration, d2 * duration, j * duration))
}

/// Instantaneous rotation of the addressed qubits, identity elsewhere.
pub fn instantaneous_pulse<T: Real>(pulse: &PulseEvent<T>) -> Result<Unitary4<T>> {
    if pulse.duration != T::zero() {
        return arg("instantaneous pulse must have zero duration");
    }
    let r = rotation(pulse.phase, pulse.angle);
    let id = pauli::identity();
    let a = if pulse.targets.control { r } else { id };
    let b = if pulse.targets.target { r } else { id };
    Ok(Unitary4::kron(&a, &b))
}

/// Driven propagator `exp(−i (H_free + H_drive) · duration)`.
///
/// With a single addressed qubit the generator is block diagonal in the
/// other qubit's σz basis and each block is exponentiated in closed form.
/// Driving both qubits goes through a Hermitian eigendecomposition.
pub fn pulse_propagator<T: Real>(
    pulse: &PulseEvent<T>,
    d1: T,
    d2: T,
    j: T,
    omega: T,
) -> Result<Unitary4<T>> {
    if !(omega > T::zero()) {
        return arg("Rabi frequency must be positive");
    }
    if pulse.duration < T::zero() {
        return arg("pulse duration must be non-negative");
    }
    if pulse.duration == T::zero() {
        return instantaneous_pulse(pulse);
    }
    Ok(driven_step(pulse, d1, d2, j, omega, pulse.duration))
}

fn drive_sign<T: Real>(angle: T) -> T {
    if angle < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

/// Driven propagator over `dt` with constant detunings.
pub(crate) fn driven_step<T: Real>(
    pulse: &PulseEvent<T>,
    d1: T,
    d2: T,
    j: T,
    omega: T,
    dt: T,
) -> Unitary4<T> {
    let amp = drive_sign(pulse.angle) * omega / T::lit(2.0);
    let (hx, hy) = (amp * pulse.phase.cos(), amp * pulse.phase.sin());
    match (pulse.targets.control, pulse.targets.target) {
        (false, false) => free_from_integrals(d1 * dt, d2 * dt, j * dt),
        (true, true) => {
            let h = driven_hamiltonian(d1, d2, j, hx, hy, Targets::BOTH);
            hermitian_expm(&h, dt)
        }
        (false, true) => {
            // blocks labelled by the control level
            let mut u = Matrix4::zeros();
            for c in 0..2 {
                let z1: T = z_of(c);
                let offset = T::lit(0.5) * d1 * z1;
                let hz = T::lit(0.5) * d2 - T::lit(0.25) * j * z1;
                let b = su2_exp(offset, hx, hy, hz, dt);
                for r in 0..2 {
                    for s in 0..2 {
                        u[(2 * c + r, 2 * c + s)] = b[(r, s)];
                    }
                }
            }
            Unitary4(u)
        }
        (true, false) => {
            let mut u = Matrix4::zeros();
            for t in 0..2 {
                let z2: T = z_of(t);
                let offset = T::lit(0.5) * d2 * z2;
                let hz = T::lit(0.5) * d1 - T::lit(0.25) * j * z2;
                let b = su2_exp(offset, hx, hy, hz, dt);
                for r in 0..2 {
                    for s in 0..2 {
                        u[(2 * r + t, 2 * s + t)] = b[(r, s)];
                    }
                }
            }
            Unitary4(u)
        }
    }
}

/// `exp(−i t (a0 I + hx σx + hy σy + hz σz))`.
fn su2_exp<T: Real>(a0: T, hx: T, hy: T, hz: T, t: T) -> Matrix2<Cplx<T>> {
    let norm = (hx * hx + hy * hy + hz * hz).sqrt();
    let global = cis(-a0 * t);
    if norm == T::zero() {
        return Matrix2::identity() * global;
    }
    let angle = norm * t;
    let (c, s) = (angle.cos(), angle.sin());
    let (nx, ny, nz) = (hx / norm, hy / norm, hz / norm);
    // n·σ in the |0⟩,|1⟩ ordering: σz = diag(−1, 1), σy = [[0, i], [−i, 0]]
    let i = Complex::new(T::zero(), T::one());
    let one = Complex::new(T::one(), T::zero());
    let n00 = one * (-nz);
    let n11 = one * nz;
    let n01 = one * nx + i * ny;
    let n10 = one * nx - i * ny;
    let cc = Complex::new(c, T::zero());
    let mis = Complex::new(T::zero(), -s);
    Matrix2::new(cc + mis * n00, mis * n01, mis * n10, cc + mis * n11) * global
}

/// Full 4×4 generator `H_free + H_drive` for the given drive components.
pub fn driven_hamiltonian<T: Real>(
    d1: T,
    d2: T,
    j: T,
    hx: T,
    hy: T,
    targets: Targets,
) -> Matrix4<Cplx<T>> {
    let e = free_energies(d1, d2, j);
    let mut h = Matrix4::from_diagonal(&Vector4::from(e.map(|x| Complex::new(x, T::zero()))));
    let drive = pauli::x::<T>() * Complex::new(hx, T::zero()) + pauli::y::<T>() * Complex::new(hy, T::zero());
    let id = pauli::identity::<T>();
    let zero = Matrix2::zeros();
    let on_control = if targets.control { drive } else { zero };
    let on_target = if targets.target { drive } else { zero };
    h += on_control.kronecker(&id).fixed_view::<4, 4>(0, 0).into_owned();
    h += id.kronecker(&on_target).fixed_view::<4, 4>(0, 0).into_owned();
    h
}

/// `exp(−i H t)` for Hermitian `H` by eigendecomposition.
pub fn hermitian_expm<T: Real>(h: &Matrix4<Cplx<T>>, t: T) -> Unitary4<T> {
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let phases = Vector4::from_iterator(eig.eigenvalues.iter().map(|&l| cis(-l * t)));
    let scaled = Matrix4::from_fn(|r, c| v[(r, c)] * phases[c]);
    Unitary4(scaled * v.adjoint())
}

/// Time-ordered propagation of `state` through `schedule` under one noise
/// realization.
///
/// Free stretches use the exact integral of the piecewise-constant trace;
/// finite pulses are split at the trace's step boundaries so each piece
/// sees constant detunings.
pub fn evolve<T: Real>(
    state: &TwoQubitState<T>,
    schedule: &Sequence<T>,
    trace: &NoiseTrace<T>,
    params: &SystemParams<T>,
) -> Result<TwoQubitState<T>> {
    Ok(state.apply(&schedule_propagator(schedule, trace, params)?))
}

/// Full propagator of `schedule` under `trace`; see [`evolve`].
pub fn schedule_propagator<T: Real>(
    schedule: &Sequence<T>,
    trace: &NoiseTrace<T>,
    params: &SystemParams<T>,
) -> Result<Unitary4<T>> {
    let total = schedule.total_time;
    let tol = T::lit(1e-9) * (T::one() + total.abs());
    if trace.duration() + tol < total {
        return arg(format!(
            "noise trace covers {} s but the schedule lasts {} s",
            trace.duration().to_f64_lossy(),
            total.to_f64_lossy()
        ));
    }
    check_overlap(schedule)?;

    let j = params.coupling.j;
    let omega = params.qubits.rabi_frequency;
    let mut u = Unitary4::identity();
    let mut t = T::zero();
    let free = |a: T, b: T| -> Unitary4<T> {
        if b <= a {
            return Unitary4::identity();
        }
        free_from_integrals(trace.integral(0, a, b), trace.integral(1, a, b), j * (b - a))
    };

    for p in &schedule.pulses {
        if p.is_instantaneous() {
            u = free(t, p.center_time) * u;
            u = instantaneous_pulse(p)? * u;
            t = t.max(p.center_time);
            continue;
        }
        let (start, end) = (p.start(), p.end());
        u = free(t, start) * u;
        let mut a = start;
        let mut k = trace.step_index(a);
        while a < end {
            let b = end.min(trace.step_end(k));
            if b > a {
                let (d1, d2) = (trace.value(0, k), trace.value(1, k));
                u = driven_step(p, d1, d2, j, omega, b - a) * u;
                a = b;
            }
            k += 1;
        }
        t = end;
    }
    u = free(t, total) * u;
    Ok(u)
}

fn check_overlap<T: Real>(schedule: &Sequence<T>) -> Result<()> {
    let mut prev_end: Option<T> = None;
    for (i, p) in schedule.pulses.iter().enumerate() {
        if p.duration < T::zero() {
            return Err(Error::Schedule(format!("pulse {i} has negative duration")));
        }
        if let Some(e) = prev_end {
            if p.start() < e {
                return Err(Error::Schedule(format!("pulse {i} overlaps its predecessor")));
            }
        }
        let tol = T::lit(1e-12) * (T::one() + schedule.total_time);
        if p.start() < -tol || p.end() > schedule.total_time + tol {
            return Err(Error::Schedule(format!("pulse {i} lies outside [0, T]")));
        }
        prev_end = Some(p.end());
    }
    Ok(())
}
