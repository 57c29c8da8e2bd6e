use ddsim_core::experiments::{ExperimentConfig, NoiseConfig, SequenceSpec};
use ddsim_core::noise::{
    calibrate_fast_noise, coherent_field_trace, drift_for, estimate_spectrum, sample_fast_trace, CalibrationOptions,
    CoherentFieldModel, DriftModel, FastNoiseModel, NoiseTrace, DEFAULT_CORRELATION_TIME,
};
use ddsim_core::sequence::{build_cpmg, build_pdd, PhaseMode};
use ddsim_core::spin::Targets;
use ddsim_core::stats;
use rayon::prelude::*;
use std::f64::consts::{PI, TAU};

fn traces(model: &FastNoiseModel, total: f64, count: u64, seed: u64) -> Vec<NoiseTrace<f64>> {
    (0..count).into_par_iter().map(|s| sample_fast_trace(model, total, seed, s).unwrap()).collect()
}

#[test]
fn ou_is_stationary_with_exponential_autocovariance() {
    let sigma = 3.0e3;
    let tau_c = 160e-6;
    let model = FastNoiseModel::new(sigma, tau_c);
    let set = traces(&model, 100.0 * tau_c, 500, 17);
    let all: Vec<f64> = set.iter().flat_map(|t| t.values(0).to_vec()).collect();
    let m = stats::mean(&all);
    let var = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / all.len() as f64;
    assert!(m.abs() < 0.05 * sigma, "mean {m}");
    assert!((var / (sigma * sigma) - 1.0).abs() < 0.05, "variance ratio {}", var / (sigma * sigma));

    // stationary start: the first sample already has the full variance
    let first: Vec<f64> = set.iter().map(|t| t.value(0, 0)).collect();
    let v0 = first.iter().map(|x| x * x).sum::<f64>() / first.len() as f64;
    assert!((v0 / (sigma * sigma) - 1.0).abs() < 0.2);

    let lag = (tau_c / model.dt).round() as usize;
    let mut acc = 0.0;
    let mut count = 0usize;
    for t in &set {
        let v = t.values(0);
        for k in 0..v.len() - lag {
            acc += v[k] * v[k + lag];
            count += 1;
        }
    }
    let cov = acc / count as f64 / (sigma * sigma);
    // 500 traces of 100 correlation times: ~5·10⁴ independent products
    assert!((cov - (-1.0f64).exp()).abs() < 0.02, "autocovariance {cov}");
}

#[test]
fn calibrated_ou_spectrum_falls_as_inverse_square() {
    let sigma = calibrate_fast_noise(200e-6, DEFAULT_CORRELATION_TIME, &CalibrationOptions::default()).unwrap();
    let model = FastNoiseModel::new(sigma, DEFAULT_CORRELATION_TIME);
    let set = traces(&model, 10e-3, 200, 3);
    let spec = estimate_spectrum(&set, 0).unwrap();
    let slope = spec.loglog_slope(1e3, 50e3).unwrap();
    assert!((slope + 2.0).abs() < 0.2, "slope {slope}");

    let var: f64 = set
        .iter()
        .map(|t| {
            let v = t.values(0);
            let m = stats::mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        })
        .sum::<f64>()
        / set.len() as f64;
    assert!((spec.integrated_power() / var - 1.0).abs() < 0.01);
}

#[test]
fn periodogram_matches_lorentzian_level() {
    // window ≫ τ_c keeps rectangular-window leakage negligible
    let model = FastNoiseModel::new(5e3, 50e-6);
    let set = traces(&model, 10e-3, 200, 8);
    let spec = estimate_spectrum(&set, 0).unwrap();
    // one-sided Hz density: G(f) = 2 S(2πf)
    let k = spec.freq_hz.iter().position(|&f| f >= 5e3).unwrap();
    let band: Vec<f64> = (k..k + 100).map(|i| spec.psd[i] / (2.0 * model.spectrum(TAU * spec.freq_hz[i]))).collect();
    assert!((stats::mean(&band) - 1.0).abs() < 0.05, "{}", stats::mean(&band));
}

#[test]
fn composite_trace_is_sum_of_components() {
    let fast = FastNoiseModel::new(2e3, 1e-3);
    let drift = DriftModel::default();
    let field = CoherentFieldModel { amplitude: 300.0, frequency_hz: 4.9e3, phase: 0.3 };
    let cfg = ExperimentConfig {
        noise: NoiseConfig { drift: Some(drift), fast: Some(fast), field: Some(field) },
        seed: 9,
        run: 4,
        ..ExperimentConfig::new(SequenceSpec::Empty, 2e-3)
    };
    let composite = cfg.noise_trace(5).unwrap();
    let ou = sample_fast_trace::<f64>(&fast, 2e-3, ddsim_core::rng::derive_seed(9, &[4]), 5).unwrap();
    let wave = coherent_field_trace::<f64>(&field, 2e-3, fast.dt).unwrap();
    let offset = drift_for(&drift, 9, 4, 5);
    assert_eq!(composite.drift, offset);
    for q in 0..2 {
        for k in 0..composite.len() {
            let expected = ou.value(q, k) + wave.value(q, k) + offset[q];
            assert!((composite.value(q, k) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }
    }
}

#[test]
fn uncorrelated_qubits_get_independent_streams() {
    let model = FastNoiseModel { correlated: false, ..FastNoiseModel::new(1e3, 1e-4) };
    let t: NoiseTrace<f64> = sample_fast_trace(&model, 1e-3, 1, 0).unwrap();
    assert_ne!(t.values(0), t.values(1));
    let shared: NoiseTrace<f64> = sample_fast_trace(&FastNoiseModel::new(1e3, 1e-4), 1e-3, 1, 0).unwrap();
    assert_eq!(shared.values(0), shared.values(1));
    assert_eq!(shared.values(0), t.values(0));
}

/// `∫ y(t) δ(t) dt` by fine midpoint sampling of the sign function and the
/// field formula itself.
fn toggled_phase(switches: &[f64], total: f64, field: &CoherentFieldModel) -> f64 {
    let n = 400_000;
    let dt = total / n as f64;
    let mut flips = 0;
    let mut acc = 0.0;
    for k in 0..n {
        let t = (k as f64 + 0.5) * dt;
        while flips < switches.len() && switches[flips] <= t {
            flips += 1;
        }
        let y = if flips % 2 == 0 { 1.0 } else { -1.0 };
        acc += y * field.amplitude * (TAU * field.frequency_hz * t + field.phase).sin() * dt;
    }
    acc
}

#[test]
fn synchronized_field_accumulates_only_under_pdd() {
    let spacing = 100e-6;
    let b = 250.0;
    let mut per_pulse = Vec::new();
    for n in [9usize, 19, 29, 49] {
        let total = (n + 1) as f64 * spacing;
        let pdd = build_pdd(n, total, 0.0, Targets::BOTH).unwrap();
        let field = CoherentFieldModel { amplitude: b, frequency_hz: 1.0 / (2.0 * spacing), phase: 0.0 };
        let switches: Vec<f64> = pdd.pulses.iter().map(|p| p.center_time).collect();
        let phase = toggled_phase(&switches, total, &field);
        per_pulse.push(phase / (n + 1) as f64);

        let cpmg = build_cpmg(24, total, 0.0, PhaseMode::Xy, Targets::BOTH).unwrap();
        let cpmg_switches: Vec<f64> = cpmg.pulses.iter().map(|p| p.center_time).collect();
        let off = toggled_phase(&cpmg_switches, total, &field);
        assert!(off.abs() < 0.1 * phase.abs(), "{n}: CPMG {off} vs PDD {phase}");
    }
    // each half period adds b·2·spacing/π
    for p in per_pulse {
        assert!((p - 2.0 * b * spacing / PI).abs() < 1e-3 * p, "{p}");
    }
}

#[test]
fn calibration_hits_the_target_decay() {
    // corner near 1 kHz
    let tau_c = 160e-6;
    let opts = CalibrationOptions::default();
    let sigma = calibrate_fast_noise(200e-6, tau_c, &opts).unwrap();
    // fresh realizations: the 1/e time of the no-DD contrast
    let model = FastNoiseModel::new(sigma, tau_c);
    let cfg = |t: f64| ExperimentConfig {
        noise: NoiseConfig { fast: Some(model), ..Default::default() },
        shots: 4000,
        seed: 77,
        ..ExperimentConfig::new(SequenceSpec::Empty, t)
    };
    let delays: Vec<f64> = (1..=8).map(|k| 50e-6 * k as f64).collect();
    let points: Vec<(f64, f64)> = delays
        .iter()
        .map(|&t| (t, ddsim_core::experiments::monte_carlo_coherence(&cfg(t)).unwrap().contrast))
        .collect();
    let t2 = ddsim_core::experiments::crossing_time(&points, (-1.0f64).exp()).unwrap();
    assert!((t2 / 200e-6 - 1.0).abs() < 0.1, "1/e time {t2}");
}

#[test]
fn quasi_static_calibration_scales_inversely() {
    // τ_c ≫ T: contrast exp(−σ²t²/2), so halving the target doubles σ and
    // σ² t² is pinned.
    let opts = CalibrationOptions::default();
    let a = calibrate_fast_noise(200e-6, 1.0, &opts).unwrap();
    let b = calibrate_fast_noise(100e-6, 1.0, &opts).unwrap();
    assert!((b / a - 2.0).abs() < 0.02, "{}", b / a);
    assert!((a * 200e-6 / 2f64.sqrt() - 1.0).abs() < 0.05, "{}", a * 200e-6);
    assert_eq!(calibrate_fast_noise(f64::INFINITY, 1.0, &opts).unwrap(), 0.0);
    assert!(calibrate_fast_noise(-1.0, 1.0, &opts).is_err());
}
