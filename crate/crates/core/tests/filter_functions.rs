use ddsim_core::filter::{
    filter_value, predict_coherence, probe_slope, probe_spectrum, toggle_from_sequence, ProbeInput,
    QuadratureOptions, ToggleFunction,
};
use ddsim_core::noise::ou_spectrum;
use ddsim_core::sequence::{build_cpmg, build_pdd, schedule_ccpmg, PhaseMode, Sequence};
use ddsim_core::spin::Targets;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

/// `|∫ y e^{iωt} dt|²` by composite Simpson inside each constant piece.
fn quadrature_filter(tog: &ToggleFunction<f64>, w: f64) -> f64 {
    let mut edges = vec![0.0];
    edges.extend(&tog.switch_times);
    edges.push(tog.total_time);
    let (mut re, mut im) = (0.0, 0.0);
    for (i, e) in edges.windows(2).enumerate() {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        let len = e[1] - e[0];
        let n = ((w * len / TAU * 64.0).ceil() as usize).max(64);
        let h = len / n as f64;
        for k in 0..n {
            let a = e[0] + k as f64 * h;
            for (t, wt) in [(a, 1.0), (a + 0.5 * h, 4.0), (a + h, 1.0)] {
                re += y * wt * (w * t).cos() * h / 6.0;
                im += y * wt * (w * t).sin() * h / 6.0;
            }
        }
    }
    re * re + im * im
}

/// `½ ∫∫ y(t) y(s) σ² e^{−|t−s|/τ} dt ds` from closed-form piece pairs.
fn time_domain_chi(tog: &ToggleFunction<f64>, sigma: f64, tau: f64) -> f64 {
    let mut edges = vec![0.0];
    edges.extend(&tog.switch_times);
    edges.push(tog.total_time);
    let pieces: Vec<(f64, f64, f64)> = edges
        .windows(2)
        .enumerate()
        .map(|(i, e)| (e[0], e[1], if i % 2 == 0 { 1.0 } else { -1.0 }))
        .collect();
    let mut total = 0.0;
    for (i, &(a, b, ya)) in pieces.iter().enumerate() {
        let len = b - a;
        total += 2.0 * tau * (len - tau * (1.0 - (-len / tau).exp()));
        for &(c, d, yc) in &pieces[i + 1..] {
            let cross = tau * tau
                * ((-(c - b) / tau).exp() - (-(d - b) / tau).exp() - (-(c - a) / tau).exp()
                    + (-(d - a) / tau).exp());
            total += 2.0 * ya * yc * cross;
        }
    }
    0.5 * sigma * sigma * total
}

fn zoo(total: f64) -> Vec<Sequence<f64>> {
    vec![
        Sequence::empty(total),
        build_cpmg(4, total, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap(),
        build_cpmg(24, total, 0.0, PhaseMode::Xy, Targets::BOTH).unwrap(),
        build_pdd(49, total, 0.0, Targets::BOTH).unwrap(),
        schedule_ccpmg(2, total, 0.0, Targets::BOTH).unwrap(),
    ]
}

#[test]
fn closed_form_matches_quadrature_on_log_grid() {
    for seq in zoo(1e-3) {
        let tog = toggle_from_sequence(&seq);
        let scale = tog.total_time * tog.total_time;
        for k in 0..=25 {
            let w = 10f64.powf(2.0 + 5.0 * k as f64 / 25.0);
            let exact = filter_value(&tog, w);
            let quad = quadrature_filter(&tog, w);
            assert!(
                (exact - quad).abs() <= 1e-6 * exact + 1e-12 * scale,
                "{:?} ω={w}: {exact} vs {quad}",
                seq.family
            );
        }
    }
}

#[test]
fn dc_value_is_squared_signed_length() {
    for seq in zoo(2e-3) {
        let tog = toggle_from_sequence(&seq);
        let signed: f64 = tog.segments().iter().map(|&(a, b, s)| s * (b - a)).sum();
        assert!((filter_value(&tog, 0.0) - signed * signed).abs() < 1e-18);
    }
}

proptest! {
    #[test]
    fn filter_scales_with_time(
        half in 0usize..20,
        total in 1e-4f64..1e-2,
        s in 0.1f64..10.0,
        w in 1e2f64..1e6,
    ) {
        let tog = toggle_from_sequence(&build_cpmg(2 * half, total, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap());
        let lhs = filter_value(&tog.scaled(s), w);
        let rhs = s * s * filter_value(&tog, s * w);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1e-3 * (s * total).powi(2)));
    }

    #[test]
    fn chi_is_non_negative(half in 0usize..10, total in 1e-4..5e-3, sigma in 0.0..1e4) {
        let tog = toggle_from_sequence(&build_cpmg(2 * half, total, 0.0, PhaseMode::Xy, Targets::BOTH).unwrap());
        let p = predict_coherence(&tog, |w| ou_spectrum(sigma, 1e-3, w), &QuadratureOptions::default()).unwrap();
        prop_assert!(p.chi >= 0.0);
        prop_assert!(p.contrast > 0.0 && p.contrast <= 1.0);
    }
}

#[test]
fn frequency_domain_chi_matches_time_domain_ou() {
    let sigma = 7.2e3;
    for tau in [160e-6, 2e-3] {
        for total in [0.2e-3, 1e-3, 5e-3] {
            for seq in zoo(total) {
                let tog = toggle_from_sequence(&seq);
                let expected = time_domain_chi(&tog, sigma, tau);
                let got = predict_coherence(&tog, |w| ou_spectrum(sigma, tau, w), &QuadratureOptions::default())
                    .unwrap()
                    .chi;
                assert!(
                    (got / expected - 1.0).abs() < 1e-4,
                    "{:?} T={total} τ={tau}: {got} vs {expected}",
                    seq.family
                );
            }
        }
    }
}

#[test]
fn explicit_band_excludes_the_tail() {
    let tog = toggle_from_sequence(&build_cpmg(4, 1e-3, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap());
    let s = |w: f64| ou_spectrum(5e3, 1e-3, w);
    let full = predict_coherence(&tog, s, &QuadratureOptions::default()).unwrap().chi;
    let banded = predict_coherence(&tog, s, &QuadratureOptions { omega_max: Some(TAU * 2e3), ..Default::default() })
        .unwrap()
        .chi;
    assert!(banded < full && banded > 0.0);
}

#[test]
fn white_noise_probe_is_flat() {
    // S ≡ S0 under CPMG(N, T): χ = S0·T/2 exactly, independent of N
    let s0 = 40.0;
    let inputs: Vec<ProbeInput> = [(4, 2e-3), (12, 2e-3), (32, 2e-3), (40, 1e-3), (100, 1e-3)]
        .iter()
        .map(|&(n, t)| {
            let tog = toggle_from_sequence(&build_cpmg(n, t, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap());
            let chi = predict_coherence(&tog, |_| s0, &QuadratureOptions::default()).unwrap().chi;
            assert!((chi / (s0 * t / 2.0) - 1.0).abs() < 1e-4);
            ProbeInput { n_pulses: n, total_time: t, contrast: (-chi).exp() }
        })
        .collect();
    let points = probe_spectrum(&inputs);
    let slope = probe_slope(&points, 1e3, 50e3).unwrap();
    assert!(slope.abs() < 1e-4, "{slope}");
    // narrow-passband inversion: π²/8 of the flat level
    for p in &points {
        assert!((p.s_value.unwrap() / s0 - PI * PI / 8.0).abs() < 1e-3);
    }

    let silent = probe_spectrum(&[ProbeInput { n_pulses: 4, total_time: 1e-3, contrast: 1.0 }]);
    assert_eq!(silent[0].s_value, Some(0.0));
}

#[test]
fn ou_probe_recovers_inverse_square_slope() {
    let (sigma, tau) = (7.2e3, 2e-3);
    let inputs: Vec<ProbeInput> = [(4, 2e-3), (12, 2e-3), (32, 2e-3), (40, 1e-3), (100, 1e-3)]
        .iter()
        .map(|&(n, t)| {
            let tog = toggle_from_sequence(&build_cpmg(n, t, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap());
            let chi = time_domain_chi(&tog, sigma, tau);
            ProbeInput { n_pulses: n, total_time: t, contrast: (-chi).exp() }
        })
        .collect();
    let points = probe_spectrum(&inputs);
    let slope = probe_slope(&points, 1e3, 50e3).unwrap();
    assert!((slope + 2.0).abs() < 0.1, "{slope}");
    for p in &points {
        let truth = ou_spectrum(sigma, tau, TAU * p.freq_hz);
        assert!((p.s_value.unwrap() / truth - 1.0).abs() < 0.25, "{} Hz", p.freq_hz);
    }
}
