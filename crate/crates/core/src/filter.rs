//! Filter functions of instantaneous-pulse schedules and the decay they
//! predict for Gaussian dephasing noise.
//!
//! Conventions: the toggling sign `y(t)` starts at `+1` and flips at every
//! π pulse; `F(ω) = |∫₀ᵀ y(t) e^{iωt} dt|²`; for a spectrum `S(ω)` equal to
//! the Fourier transform of the detuning autocovariance the coherence
//! decays as `W = e^{−χ}` with `χ = (1/2π) ∫₀^∞ S(ω) F(ω) dω`.

use serde::Serialize;
use std::collections::BinaryHeap;
use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sequence::Sequence;

/// Piecewise-constant `±1` sign function over `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToggleFunction<T> {
    pub switch_times: Vec<T>,
    pub total_time: T,
}

impl<T: Real> ToggleFunction<T> {
    pub fn free_induction(total_time: T) -> Self {
        Self { switch_times: Vec::new(), total_time }
    }

    /// `(start, end, sign)` of each constant piece.
    pub fn segments(&self) -> Vec<(T, T, T)> {
        let mut out = Vec::with_capacity(self.switch_times.len() + 1);
        let mut a = T::zero();
        let mut sign = T::one();
        for &s in &self.switch_times {
            out.push((a, s, sign));
            a = s;
            sign = -sign;
        }
        out.push((a, self.total_time, sign));
        out
    }

    /// Sign at time `t`.
    pub fn sign_at(&self, t: T) -> T {
        let flips = self.switch_times.iter().filter(|&&s| s <= t).count();
        if flips % 2 == 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    /// Copy with every time multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self {
            switch_times: self.switch_times.iter().map(|&t| t * s).collect(),
            total_time: self.total_time * s,
        }
    }
}

/// Switches at the pulse centers.
pub fn toggle_from_sequence<T: Real>(seq: &Sequence<T>) -> ToggleFunction<T> {
    ToggleFunction {
        switch_times: seq.pulses.iter().map(|p| p.center_time).collect(),
        total_time: seq.total_time,
    }
}

/// `|∫₀ᵀ y(t) e^{iωt} dt|²` from the closed-form segment integrals.
pub fn filter_value<T: Real>(toggle: &ToggleFunction<T>, omega: T) -> T {
    let two = T::lit(2.0);
    let (mut re, mut im) = (T::zero(), T::zero());
    for (a, b, sign) in toggle.segments() {
        let len = b - a;
        let mid = (a + b) / two;
        // ∫_a^b e^{iωt} dt = e^{iω·mid} · len · sinc(ω·len/2)
        let x = omega * len / two;
        let sinc = if x.abs() < T::lit(1e-8) { T::one() - x * x / T::lit(6.0) } else { x.sin() / x };
        let w = sign * len * sinc;
        let ph = omega * mid;
        re += w * ph.cos();
        im += w * ph.sin();
    }
    re * re + im * im
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherencePrediction {
    /// Decay exponent χ.
    pub chi: f64,
    /// `e^{−χ}`.
    pub contrast: f64,
}

/// Integration settings for [`predict_coherence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Lower band edge in rad/s.
    pub omega_min: f64,
    /// Upper band edge in rad/s; `None` picks one from the schedule and adds
    /// the oscillation-averaged tail beyond it.
    pub omega_max: Option<f64>,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { omega_min: 0.0, omega_max: None, rel_tol: 1e-6, max_intervals: 2_000_000 }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss–Kronrod over `[a, b]` starting from panels of
/// width at most `panel`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panel: f64, rel_tol: f64, max_intervals: usize) -> Result<f64> {
    if !(b > a) {
        return Ok(0.0);
    }
    let n0 = (((b - a) / panel).ceil() as usize).max(1);
    if n0 > max_intervals {
        return Err(Error::Integration(format!("{n0} panels exceed the interval budget")));
    }
    let mut heap = BinaryHeap::with_capacity(2 * n0);
    let (mut total, mut err) = (0.0, 0.0);
    for i in 0..n0 {
        let lo = a + (b - a) * i as f64 / n0 as f64;
        let hi = a + (b - a) * (i + 1) as f64 / n0 as f64;
        let (v, e) = gk15(&f, lo, hi);
        total += v;
        err += e;
        heap.push(Piece { a: lo, b: hi, value: v, err: e });
    }
    let mut count = n0;
    while err > rel_tol * total.abs() && err > f64::MIN_POSITIVE {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Integration("integrand is not finite on the band".into()));
        }
        if count >= max_intervals {
            return Err(Error::Integration(format!(
                "no convergence: estimated error {err:e} on {total:e}"
            )));
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.err;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2 });
        count += 1;
    }
    if !total.is_finite() {
        return Err(Error::Integration("integrand is not finite on the band".into()));
    }
    // re-sum to shed accumulated rounding from the running updates
    Ok(heap.iter().map(|p| p.value).sum())
}

/// `χ = (1/2π) ∫ S(ω) F(ω) dω` by adaptive quadrature.
///
/// Without an explicit upper edge the band stops well above the fastest
/// toggling rate and the remaining tail uses the oscillation average
/// `⟨F(ω)⟩ = (4N + 2)/ω²`.
pub fn predict_coherence<T: Real, S: Fn(f64) -> f64>(
    toggle: &ToggleFunction<T>,
    spectrum: S,
    opts: &QuadratureOptions,
) -> Result<CoherencePrediction> {
    let total = toggle.total_time.to_f64_lossy();
    if !(total > 0.0) {
        return Ok(CoherencePrediction { chi: 0.0, contrast: 1.0 });
    }
    let tog64 = ToggleFunction {
        switch_times: toggle.switch_times.iter().map(|t| t.to_f64_lossy()).collect(),
        total_time: total,
    };
    let n = tog64.switch_times.len() as f64;
    let min_gap = tog64
        .segments()
        .iter()
        .map(|&(a, b, _)| b - a)
        .filter(|&l| l > 0.0)
        .fold(total, f64::min);
    let check = |w: f64| -> f64 {
        let s = spectrum(w);
        if s.is_finite() { s } else { f64::NAN }
    };
    let integrand = |w: f64| check(w) * filter_value(&tog64, w);
    let panel = std::f64::consts::PI / total;
    let (hi, tail) = match opts.omega_max {
        Some(hi) => (hi, 0.0),
        None => {
            let hi = (200.0 / min_gap).max(100.0 * (n + 1.0) * panel).max(opts.omega_min);
            // ∫_hi^∞ S(ω)/ω² dω = ∫_0^{1/hi} S(1/u) du
            let tail_int = integrate(|u| check(1.0 / u), 0.0, 1.0 / hi, 1.0 / hi, opts.rel_tol, 10_000)?;
            (hi, (4.0 * n + 2.0) * tail_int)
        }
    };
    let body = integrate(integrand, opts.omega_min, hi, panel, opts.rel_tol, opts.max_intervals)?;
    let chi = (body + tail) / (2.0 * std::f64::consts::PI);
    if !chi.is_finite() {
        return Err(Error::Integration("decay exponent is not finite".into()));
    }
    Ok(CoherencePrediction { chi, contrast: (-chi).exp() })
}

/// One CPMG-type measurement used for spectrum reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeInput {
    pub n_pulses: usize,
    pub total_time: f64,
    /// Measured coherence in `(0, 1]`.
    pub contrast: f64,
}

/// Spectrum estimate at a probe's passband center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub freq_hz: f64,
    /// `S(2π f)` in the same convention as [`predict_coherence`]; `None`
    /// when the contrast is unusable.
    pub s_value: Option<f64>,
    pub passband_width_hz: f64,
}

/// Inverts `χ = −ln W` under the narrow-passband approximation.
///
/// A CPMG sequence with `N` pulses over `T` passes a band of width `≈ 1/T`
/// around `f₀ = N/(2T)` whose fundamental carries `∫F dω ≈ 8T/π`, so
/// `S(2π f₀) ≈ π² χ / (4T)`.
pub fn probe_spectrum(inputs: &[ProbeInput]) -> Vec<ProbePoint> {
    inputs
        .iter()
        .map(|p| {
            let t = p.total_time;
            let usable = p.n_pulses > 0 && t > 0.0 && p.contrast > 0.0 && p.contrast <= 1.0;
            let chi = -p.contrast.ln();
            ProbePoint {
                freq_hz: p.n_pulses as f64 / (2.0 * t),
                s_value: usable.then(|| std::f64::consts::PI.powi(2) * chi / (4.0 * t)),
                passband_width_hz: 1.0 / t,
            }
        })
        .collect()
}

/// Log-log slope of the usable probe points inside `[lo, hi]` Hz.
pub fn probe_slope(points: &[ProbePoint], lo_hz: f64, hi_hz: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.freq_hz >= lo_hz && p.freq_hz <= hi_hz)
        .filter_map(|p| p.s_value.filter(|&s| s > 0.0).map(|s| (p.freq_hz.ln(), s.ln())))
        .collect();
    crate::stats::linear_fit(&pts).map(|(m, _)| m)
}

/// Columnar export: `f_Hz S_value passband_width_Hz`.
pub fn probe_to_columns(points: &[ProbePoint]) -> String {
    let mut s = String::from("# f_Hz S_value_rad2_per_s passband_width_Hz\n");
    for p in points {
        let v = p.s_value.map_or_else(|| "nan".to_string(), |v| format!("{v:e}"));
        let _ = writeln!(s, "{} {} {}", p.freq_hz, v, p.passband_width_hz);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{build_cpmg, build_pdd, PhaseMode};
    use crate::spin::Targets;

    /// Composite Simpson quadrature of the defining integral between
    /// consecutive switches, independent of the closed form.
    fn filter_by_quadrature(tog: &ToggleFunction<f64>, w: f64, per_piece: usize) -> f64 {
        let mut edges = vec![0.0];
        edges.extend(&tog.switch_times);
        edges.push(tog.total_time);
        let (mut re, mut im) = (0.0, 0.0);
        for (i, e) in edges.windows(2).enumerate() {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let dt = (e[1] - e[0]) / per_piece as f64;
            for k in 0..per_piece {
                let a = e[0] + k as f64 * dt;
                for (t, wt) in [(a, 1.0), (a + 0.5 * dt, 4.0), (a + dt, 1.0)] {
                    re += wt * y * (w * t).cos() * dt / 6.0;
                    im += wt * y * (w * t).sin() * dt / 6.0;
                }
            }
        }
        re * re + im * im
    }

    #[test]
    fn empty_sequence_has_no_switches() {
        let seq = Sequence::<f64>::empty(1e-3);
        let tog = toggle_from_sequence(&seq);
        assert!(tog.switch_times.is_empty());
        assert!((filter_value(&tog, 0.0) - 1e-6).abs() < 1e-20);
        assert!((filter_value(&tog, 1e-3) - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn cpmg_switches_and_dc_null() {
        let seq = build_cpmg(2, 4e-4, 0.0, PhaseMode::Xy, Targets::BOTH).unwrap();
        let tog = toggle_from_sequence(&seq);
        assert!((tog.switch_times[0] - 1e-4f64).abs() < 1e-18);
        assert!((tog.switch_times[1] - 3e-4f64).abs() < 1e-18);
        assert!(filter_value(&tog, 0.0) < 1e-30);
        let pdd = toggle_from_sequence(&build_pdd(49, 5e-3, 0.0, Targets::BOTH).unwrap());
        assert_eq!(pdd.switch_times.len(), 49);
    }

    #[test]
    fn closed_form_matches_quadrature_near_passband() {
        let n = 8;
        let t = 1e-3;
        let tog = toggle_from_sequence(&build_cpmg(n, t, 0.0, PhaseMode::Yy, Targets::BOTH).unwrap());
        let peak = std::f64::consts::PI * n as f64 / t;
        for w in [0.5 * peak, peak, 1.1 * peak, 3.0 * peak] {
            let exact = filter_value(&tog, w);
            let quad = filter_by_quadrature(&tog, w, 400);
            assert!((exact - quad).abs() <= 1e-6 * exact.max(1e-12), "{w}: {exact} vs {quad}");
        }
        // the fundamental passband dominates
        let grid: Vec<f64> = (1..400).map(|k| k as f64 * peak / 100.0).collect();
        let best = grid.iter().cloned().fold(0.0f64, |m, w| if filter_value(&tog, w) > filter_value(&tog, m) { w } else { m });
        assert!((best / peak - 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_spectrum_predicts_full_coherence() {
        let tog = ToggleFunction::free_induction(1e-3);
        let p = predict_coherence(&tog, |_| 0.0, &QuadratureOptions::default()).unwrap();
        assert_eq!(p.chi, 0.0);
        assert_eq!(p.contrast, 1.0);
    }

    #[test]
    fn divergent_band_edge_is_reported() {
        let tog = ToggleFunction::free_induction(1e-3);
        let opts = QuadratureOptions { omega_max: Some(1e4), max_intervals: 5000, ..Default::default() };
        let r = predict_coherence(&tog, |w| 1.0 / (w * w * w), &opts);
        assert!(matches!(r, Err(Error::Integration(_))), "{r:?}");
    }

    #[test]
    fn white_noise_free_induction_matches_closed_form() {
        // S ≡ S0 gives χ = S0·T/2
        let t = 2e-4;
        let tog = ToggleFunction::free_induction(t);
        let p = predict_coherence(&tog, |_| 5000.0, &QuadratureOptions::default()).unwrap();
        assert!((p.chi / (5000.0 * t / 2.0) - 1.0).abs() < 1e-4, "{}", p.chi);
    }

    #[test]
    fn probe_inverts_known_points() {
        let pts = probe_spectrum(&[
            ProbeInput { n_pulses: 4, total_time: 2e-3, contrast: 0.5 },
            ProbeInput { n_pulses: 4, total_time: 2e-3, contrast: 0.0 },
        ]);
        assert_eq!(pts[0].freq_hz, 1000.0);
        let expected = std::f64::consts::PI.powi(2) * 2f64.ln() / 8e-3;
        assert!((pts[0].s_value.unwrap() - expected).abs() < 1e-9);
        assert!(pts[1].s_value.is_none());
        assert!(probe_to_columns(&pts).contains("nan"));
    }
}
