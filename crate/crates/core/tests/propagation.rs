use ddsim_core::noise::NoiseTrace;
use ddsim_core::sequence::{build_cpmg, build_pdd, schedule_ccpmg, PhaseMode, Sequence};
use ddsim_core::spin::{
    free_propagator, instantaneous_pulse, pulse_propagator, schedule_propagator, CouplingParams, PulseEvent,
    QubitParams, SystemParams, Targets, TwoQubitState, Unitary4,
};
use nalgebra::Matrix4;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

type M4 = Matrix4<C>;

// Independent reference: Hamiltonian assembled entry by entry and
// exponentiated with scaling-and-squaring Taylor series.

fn zval(bit: usize) -> f64 {
    if bit == 0 {
        -1.0
    } else {
        1.0
    }
}

/// H = δ1/2 σz⊗I + δ2/2 I⊗σz − J/4 σz⊗σz + Σ_addressed sgn·Ω/2 (cos φ σx + sin φ σy).
fn reference_h(d1: f64, d2: f64, j: f64, drive: Option<(f64, f64, Targets)>) -> M4 {
    let mut h = M4::zeros();
    for i in 0..4 {
        let (z1, z2) = (zval(i >> 1), zval(i & 1));
        h[(i, i)] = C::new(0.5 * d1 * z1 + 0.5 * d2 * z2 - 0.25 * j * z1 * z2, 0.0);
    }
    if let Some((amp, phase, targets)) = drive {
        // ⟨0|σ·n|1⟩ = e^{iφ}, flipping the addressed bit
        for i in 0..4 {
            for (on, mask) in [(targets.control, 2usize), (targets.target, 1usize)] {
                if !on {
                    continue;
                }
                let k = i ^ mask;
                let lower = i & mask == 0;
                let e = if lower { C::from_polar(1.0, phase) } else { C::from_polar(1.0, -phase) };
                h[(i, k)] += e * amp;
            }
        }
    }
    h
}

fn taylor_expm(h: &M4, t: f64) -> M4 {
    let a = h * C::new(0.0, -t);
    let norm: f64 = a.iter().map(|z| z.norm()).sum();
    let s = (norm.log2().ceil().max(0.0) as i32) + 4;
    let scaled = a / C::new(2f64.powi(s), 0.0);
    let mut term = M4::identity();
    let mut sum = M4::identity();
    for k in 1..30 {
        term = term * scaled / C::new(k as f64, 0.0);
        sum += term;
    }
    for _ in 0..s {
        sum = sum * sum;
    }
    sum
}

fn max_diff(a: &M4, b: &M4) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn reference_pulse(p: &PulseEvent<f64>, d1: f64, d2: f64, j: f64, omega: f64, dt: f64) -> M4 {
    let amp = p.angle.signum() * omega / 2.0;
    taylor_expm(&reference_h(d1, d2, j, Some((amp, p.phase, p.targets))), dt)
}

/// Piecewise product of reference exponentials over ≤ `max_step` slices
/// for constant detunings.
fn reference_schedule(seq: &Sequence<f64>, d1: f64, d2: f64, params: &SystemParams<f64>, max_step: f64) -> M4 {
    let j = params.coupling.j;
    let omega = params.qubits.rabi_frequency;
    let mut u = M4::identity();
    let step = |u: &mut M4, a: f64, b: f64, p: Option<&PulseEvent<f64>>| {
        if b <= a {
            return;
        }
        let n = ((b - a) / max_step).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        let piece = match p {
            Some(p) => reference_pulse(p, d1, d2, j, omega, dt),
            None => taylor_expm(&reference_h(d1, d2, j, None), dt),
        };
        for _ in 0..n {
            *u = piece * *u;
        }
    };
    let mut t = 0.0;
    for p in &seq.pulses {
        step(&mut u, t, p.start(), None);
        step(&mut u, p.start(), p.end(), Some(p));
        t = p.end();
    }
    step(&mut u, t, seq.total_time, None);
    u
}

fn system(j: f64) -> SystemParams<f64> {
    SystemParams { qubits: QubitParams::default(), coupling: CouplingParams::new(j) }
}

fn targets_strategy() -> impl Strategy<Value = Targets> {
    prop_oneof![Just(Targets::NONE), Just(Targets::CONTROL), Just(Targets::TARGET), Just(Targets::BOTH)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn pulses_and_free_evolution_are_unitary(
        d1 in -TAU * 50e3..TAU * 50e3,
        d2 in -TAU * 50e3..TAU * 50e3,
        j in 0.0..TAU * 200.0,
        phase in 0.0..TAU,
        clockwise in any::<bool>(),
        targets in targets_strategy(),
        duration in 0.0..2e-5,
    ) {
        let angle = if clockwise { -PI } else { PI };
        let p = PulseEvent::new(duration / 2.0, duration, phase, angle, targets);
        let u = pulse_propagator(&p, d1, d2, j, TAU * 60e3).unwrap();
        prop_assert!(u.unitarity_error() < 1e-10);
        let f = free_propagator(duration, d1, d2, j).unwrap();
        prop_assert!(f.unitarity_error() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn single_qubit_drive_matches_reference(
        d1 in -TAU * 50e3..TAU * 50e3,
        d2 in -TAU * 50e3..TAU * 50e3,
        phase in 0.0..TAU,
        targets in prop_oneof![Just(Targets::CONTROL), Just(Targets::TARGET), Just(Targets::BOTH)],
        duration in 1e-7..2e-5,
    ) {
        let j = TAU * 100.0;
        let omega = TAU * 60e3;
        let p = PulseEvent::new(duration / 2.0, duration, phase, PI, targets);
        let u = pulse_propagator(&p, d1, d2, j, omega).unwrap();
        prop_assert!(max_diff(u.matrix(), &reference_pulse(&p, d1, d2, j, omega, duration)) < 1e-9);
    }

    #[test]
    fn noisy_evolution_preserves_norm(
        seed in any::<u64>(),
        n in 0usize..12,
    ) {
        let total = 1e-3;
        let fast = ddsim_core::noise::FastNoiseModel { correlated: false, ..ddsim_core::noise::FastNoiseModel::new(5e4, 2e-4) };
        let trace: NoiseTrace<f64> = ddsim_core::noise::sample_fast_trace(&fast, total, seed, 0).unwrap();
        let seq = build_cpmg(2 * n, total, 1e-6 * 8.33, PhaseMode::Xy, Targets::BOTH).unwrap();
        let psi = ddsim_core::spin::evolve(&TwoQubitState::basis(1, 0), &seq, &trace, &system(TAU * 100.0)).unwrap();
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn simultaneous_pulses_commute_with_coupling() {
    // With both qubits flipped together the coupling term passes through
    // every pulse, so the schedule equals the bare pulse product times the
    // free coupling evolution.
    let total = 5e-3;
    let j = PI / total;
    let params = system(j);
    let schedules: Vec<Sequence<f64>> = vec![
        Sequence::empty(total),
        build_cpmg(4, total, 0.0, PhaseMode::Xy, Targets::BOTH).unwrap(),
        build_cpmg(24, total, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap(),
        schedule_ccpmg(3, total, 0.0, Targets::BOTH).unwrap(),
    ];
    for seq in schedules {
        let trace = NoiseTrace::zeros(total, 1e-6);
        let u = schedule_propagator(&seq, &trace, &params).unwrap();
        let mut pulses = Unitary4::identity();
        for p in &seq.pulses {
            pulses = instantaneous_pulse(p).unwrap() * pulses;
        }
        let expected = pulses * free_propagator(total, 0.0, 0.0, j).unwrap();
        assert!(u.max_diff_up_to_phase(&expected) < 1e-10, "{} pulses", seq.len());
    }
}

#[test]
fn target_only_even_cpmg_refocuses_coupling() {
    let total = 5e-3;
    let params = system(PI / total);
    for n in [2, 4, 24, 48] {
        for mode in [PhaseMode::Yy, PhaseMode::Xy] {
            let seq = build_cpmg(n, total, 0.0, mode, Targets::TARGET).unwrap();
            let u = schedule_propagator(&seq, &NoiseTrace::zeros(total, 1e-6), &params).unwrap();
            assert!(u.conditional_phase().abs() < 1e-10, "{n} {mode:?}: {}", u.conditional_phase());
        }
    }
}

#[test]
fn detuned_rabi_oscillation_is_tilted_and_boosted() {
    let omega = TAU * 60e3;
    let t_pi = PI / omega;
    for ratio in [0.0, 0.1, 0.33, 1.0] {
        let delta = ratio * omega;
        let eff = (omega * omega + delta * delta).sqrt();
        for duration in [0.25 * t_pi, t_pi, 1.7 * t_pi] {
            let p = PulseEvent::new(duration / 2.0, duration, 0.0, PI, Targets::TARGET);
            let u = pulse_propagator(&p, 0.0, delta, 0.0, omega).unwrap();
            let excited = TwoQubitState::basis(0, 0).apply(&u).populations()[1];
            let expected = omega * omega / (eff * eff) * (eff * duration / 2.0).sin().powi(2);
            assert!((excited - expected).abs() < 1e-12, "ratio {ratio}: {excited} vs {expected}");
        }
    }
}

#[test]
fn both_driven_pulse_matches_series_exponential() {
    let (d1, j, t) = (TAU * 10e3, TAU * 100.0, 8.33e-6);
    let omega = TAU * 60e3;
    for phase in [0.0, FRAC_PI_2, 1.234] {
        let p = PulseEvent::new(t / 2.0, t, phase, PI, Targets::BOTH);
        let u = pulse_propagator(&p, d1, -0.3 * d1, j, omega).unwrap();
        let reference = reference_pulse(&p, d1, -0.3 * d1, j, omega, t);
        assert!(max_diff(u.matrix(), &reference) < 1e-9);
    }
}

#[test]
fn finite_pulse_schedules_match_fine_step_product() {
    let total = 5e-3;
    let params = system(PI / total);
    let t_pi = params.qubits.pulse_duration;
    let (d1, d2) = (TAU * 3e3, -TAU * 7e3);
    let trace = NoiseTrace::constant(total, 1e-6, [d1, d2]);
    for seq in [
        build_cpmg(24, total, t_pi, PhaseMode::Xy, Targets::BOTH).unwrap(),
        build_pdd(7, total, t_pi, Targets::TARGET).unwrap(),
    ] {
        let u = schedule_propagator(&seq, &trace, &params).unwrap();
        let reference = reference_schedule(&seq, d1, d2, &params, 1e-6);
        assert!(max_diff(u.matrix(), &reference) < 1e-8, "{:?}: {}", seq.family, max_diff(u.matrix(), &reference));
    }
}

#[test]
fn pulses_straddling_grid_steps_see_each_step() {
    // a pulse across a detuning jump equals the product of its two halves
    let params = system(0.0);
    let omega = params.qubits.rabi_frequency;
    let t_pi = params.qubits.pulse_duration;
    let dt = 5e-6;
    let trace = NoiseTrace::new(dt, vec![0.0, 0.0], vec![TAU * 4e3, -TAU * 9e3]).unwrap();
    let p = PulseEvent::new(dt, t_pi, 0.0, PI, Targets::TARGET);
    let seq = Sequence { pulses: vec![p], total_time: 2.0 * dt, ..Sequence::empty(2.0 * dt) };
    let u = schedule_propagator(&seq, &trace, &params).unwrap();
    let a = taylor_expm(&reference_h(0.0, TAU * 4e3, 0.0, None), dt - t_pi / 2.0);
    let b = reference_pulse(&p, 0.0, TAU * 4e3, 0.0, omega, t_pi / 2.0);
    let c = reference_pulse(&p, 0.0, -TAU * 9e3, 0.0, omega, t_pi / 2.0);
    let d = taylor_expm(&reference_h(0.0, -TAU * 9e3, 0.0, None), dt - t_pi / 2.0);
    assert!(max_diff(u.matrix(), &(d * c * b * a)) < 1e-10);
}

#[test]
fn single_precision_tracks_double() {
    let total = 5e-3;
    let seq64 = build_cpmg(24, total, 8.33e-6, PhaseMode::Xy, Targets::BOTH).unwrap();
    let seq32 = build_cpmg(24, total as f32, 8.33e-6, PhaseMode::Xy, Targets::BOTH).unwrap();
    let p64 = SystemParams { qubits: QubitParams::default(), coupling: CouplingParams::new(PI / total) };
    let p32 = SystemParams {
        qubits: QubitParams::<f32>::default(),
        coupling: CouplingParams::new(std::f32::consts::PI / total as f32),
    };
    let u64 = schedule_propagator(&seq64, &NoiseTrace::constant(total, 1e-6, [100.0, -50.0]), &p64).unwrap();
    let u32 = schedule_propagator(&seq32, &NoiseTrace::constant(total as f32, 1e-6, [100.0, -50.0]), &p32).unwrap();
    let worst = (0..16).map(|k| (u64.matrix()[k] - C::new(u32.matrix()[k].re as f64, u32.matrix()[k].im as f64)).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
    assert!(u32.unitarity_error() < 1e-3, "{}", u32.unitarity_error());
}
