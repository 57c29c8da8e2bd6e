//! Experiment dispatch and result files.

use crate::config::{ExperimentKind, Family, RunConfig};
use crate::error::{CliError, Result};
use ddsim_core::experiments::{
    contrast_vs_pulse_number, crossing_time, fit_lockin_amplitude, fringe_shift_vs_time, lockin_phase,
    pdd_lockin_study, run_cnot, run_conditional, run_ramsey, spectrum_probe, ExperimentConfig, FringeFit,
    PulseFamily,
};
use ddsim_core::noise::drift_for;
use ddsim_core::sequence::ccpmg_pulse_count;
use ddsim_core::stats;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::f64::consts::TAU;
use std::path::Path;
use std::time::Instant;

/// Everything an experiment produces before it touches the disk.
#[derive(Default)]
pub struct Output {
    /// `(file name, contents)` in write order.
    pub files: Vec<(String, String)>,
    pub summary: Map<String, Value>,
    pub warnings: Vec<String>,
}

impl Output {
    fn file(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn check_fit(&mut self, what: &str, fit: &FringeFit) {
        if !fit.reliable {
            self.warnings.push(format!("{what}: fringe contrast {:.3} too low for a reliable minimum", fit.contrast));
        }
    }
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

fn fit_json(fit: &FringeFit) -> Value {
    json!({
        "contrast": fit.contrast,
        "contrast_err": fit.contrast_err,
        "phi_min_rad": fit.phi_min,
        "offset": fit.offset,
        "residual": fit.residual,
        "reliable": fit.reliable,
    })
}

fn with_run(cfg: &ExperimentConfig, run: u64) -> ExperimentConfig {
    ExperimentConfig { run, ..cfg.clone() }
}

/// Circular standard deviation `√(−2 ln R)`.
fn circular_spread(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let r = (s * s + c * c).sqrt() / n;
    (-2.0 * r.ln()).sqrt()
}

pub fn execute(cfg: &RunConfig) -> Result<Output> {
    let sigma = cfg.fast_sigma()?;
    let base = cfg.experiment_config(sigma)?;
    let mut out = Output::default();
    out.set("experiment", serde_json::to_value(cfg.experiment).unwrap());
    out.set("seed", cfg.seed);
    out.set("drift_mode", serde_json::to_value(cfg.noise.drift_mode).unwrap());
    if let Some(s) = sigma {
        out.set("fast_sigma_rad_per_s", s);
    }
    out.file("config.toml", cfg.to_toml());
    let runs = cfg.measurement.runs;
    match cfg.experiment {
        ExperimentKind::Ramsey => ramsey(&base, runs, &mut out)?,
        ExperimentKind::Conditional => conditional(&base, runs, &mut out)?,
        ExperimentKind::ContrastVsDelay => contrast_vs_delay(&base, &cfg.scan.times_s, &mut out)?,
        ExperimentKind::DriftEnsemble => drift_ensemble(&base, runs, &mut out)?,
        ExperimentKind::ShiftVsTime => shift_vs_time(&base, &cfg.scan.times_s, &mut out)?,
        ExperimentKind::Cnot => cnot(&base, runs, &mut out)?,
        ExperimentKind::PulseScan => pulse_scan(cfg, &base, &mut out)?,
        ExperimentKind::Lockin => lockin(cfg, &base, &mut out)?,
        ExperimentKind::SpectrumProbe => spectrum(cfg, &base, &mut out)?,
    }
    out.set("fit_unreliable", !out.warnings.is_empty());
    out.set("warnings", out.warnings.clone());
    Ok(out)
}

fn ramsey(base: &ExperimentConfig, runs: u64, out: &mut Output) -> Result<()> {
    let mut table = String::from("# run contrast contrast_err phi_min_rad reliable\n");
    let mut fits = Vec::new();
    for run in 0..runs {
        let r = run_ramsey(&with_run(base, run))?;
        out.check_fit(&format!("run {run}"), &r.fit);
        let _ = writeln!(table, "{run} {} {} {} {}", r.fit.contrast, r.fit.contrast_err, r.fit.phi_min, r.fit.reliable as u8);
        if run == 0 {
            out.file("fringe.dat", r.to_columns());
            out.set("fit", fit_json(&r.fit));
        }
        fits.push(r.fit);
    }
    if runs > 1 {
        out.file("runs.dat", table);
        let c: Vec<f64> = fits.iter().map(|f| f.contrast).collect();
        out.set("mean_contrast", stats::mean(&c));
        out.set("contrast_sd", stats::std_dev(&c));
    }
    Ok(())
}

fn conditional(base: &ExperimentConfig, runs: u64, out: &mut Output) -> Result<()> {
    let mut table = String::from("# run phi_min_control0_rad phi_min_control1_rad contrast0 contrast1 relative_shift_rad\n");
    let mut shifts = Vec::new();
    for run in 0..runs {
        let c = run_conditional(&with_run(base, run))?;
        out.check_fit(&format!("run {run} control 0"), &c.control0.fit);
        out.check_fit(&format!("run {run} control 1"), &c.control1.fit);
        let shift = c.relative_shift();
        shifts.extend(shift);
        let _ = writeln!(
            table,
            "{run} {} {} {} {} {}",
            num(c.control0.phi_min()),
            num(c.control1.phi_min()),
            c.control0.contrast(),
            c.control1.contrast(),
            num(shift)
        );
        if run == 0 {
            out.file("fringe_control0.dat", c.control0.to_columns());
            out.file("fringe_control1.dat", c.control1.to_columns());
            out.set("control0", fit_json(&c.control0.fit));
            out.set("control1", fit_json(&c.control1.fit));
            out.set("relative_shift_rad", shift);
        }
    }
    if runs > 1 {
        out.file("runs.dat", table);
        if !shifts.is_empty() {
            out.set("circular_mean_shift_rad", stats::circular_mean(&shifts));
        }
    }
    Ok(())
}

fn contrast_vs_delay(base: &ExperimentConfig, delays: &[f64], out: &mut Output) -> Result<()> {
    let mut table = String::from("# delay_s contrast contrast_err phi_min_rad\n");
    let mut points = Vec::new();
    for &t in delays {
        let r = run_ramsey(&ExperimentConfig { total_time: t, ..base.clone() })?;
        let _ = writeln!(table, "{t} {} {} {}", r.fit.contrast, r.fit.contrast_err, num(r.phi_min()));
        points.push((t, r.fit.contrast));
    }
    out.file("contrast_vs_delay.dat", table);
    let t_1e = crossing_time(&points, (-1.0f64).exp());
    if t_1e.is_none() {
        out.warnings.push("contrast never crosses 1/e inside the scanned delays".into());
    }
    out.set("t_1e_s", t_1e);
    Ok(())
}

fn drift_ensemble(base: &ExperimentConfig, runs: u64, out: &mut Output) -> Result<()> {
    let mut table = String::from("# run drift_control_Hz drift_target_Hz phi_min_rad contrast\n");
    let (mut d0, mut d1, mut phis) = (Vec::new(), Vec::new(), Vec::new());
    for run in 0..runs {
        let drift = base.noise.drift.map_or([0.0; 2], |m| drift_for(&m, base.seed, run, 0));
        let r = run_ramsey(&with_run(base, run))?;
        out.check_fit(&format!("run {run}"), &r.fit);
        let (a, b) = (drift[0] / TAU, drift[1] / TAU);
        let _ = writeln!(table, "{run} {a} {b} {} {}", num(r.phi_min()), r.fit.contrast);
        d0.push(a);
        d1.push(b);
        phis.extend(r.phi_min());
    }
    out.file("drift_ensemble.dat", table);
    out.set("drift_sd_control_hz", stats::std_dev(&d0));
    out.set("drift_sd_target_hz", stats::std_dev(&d1));
    if !phis.is_empty() {
        out.set("phi_min_circular_sd_rad", circular_spread(&phis));
    }
    Ok(())
}

fn shift_vs_time(base: &ExperimentConfig, times: &[f64], out: &mut Output) -> Result<()> {
    let points = fringe_shift_vs_time(base, times)?;
    let mut table = String::from("# T_s phi_min_control0_rad phi_min_control1_rad contrast0 contrast1\n");
    let mut tracks = [Vec::new(), Vec::new()];
    for p in &points {
        let _ = writeln!(
            table,
            "{} {} {} {} {}",
            p.total_time,
            num(p.phi_min[0]),
            num(p.phi_min[1]),
            p.contrast[0],
            p.contrast[1]
        );
        for c in 0..2 {
            match p.phi_min[c] {
                Some(phi) => tracks[c].push((p.total_time, phi)),
                None => out.warnings.push(format!("T = {} s control {c}: fringe too faint, gap in track", p.total_time)),
            }
        }
    }
    out.file("shift_vs_time.dat", table);
    let slope = |t: &[(f64, f64)]| stats::linear_fit(t).map(|(m, _)| m);
    out.set("slope_control0_rad_per_s", slope(&tracks[0]));
    out.set("slope_control1_rad_per_s", slope(&tracks[1]));
    out.set("half_coupling_rad_per_s", base.system.coupling.j / 2.0);
    Ok(())
}

fn cnot(base: &ExperimentConfig, runs: u64, out: &mut Output) -> Result<()> {
    let mut matrix = [[0.0; 4]; 4];
    let mut fidelities = Vec::new();
    for run in 0..runs {
        let t = run_cnot(&with_run(base, run))?;
        for (row, r) in matrix.iter_mut().zip(&t.matrix) {
            for (m, v) in row.iter_mut().zip(r) {
                *m += v / runs as f64;
            }
        }
        fidelities.push(t.fidelity);
    }
    let labels = ["00", "01", "10", "11"];
    let mut table = String::from("# input P_00 P_01 P_10 P_11 (control, target)\n");
    for (label, row) in labels.iter().zip(&matrix) {
        let _ = writeln!(table, "{label} {} {} {} {}", row[0], row[1], row[2], row[3]);
    }
    out.file("truth_table.dat", table);
    out.set("fidelity", stats::mean(&fidelities));
    out.set("fidelity_sd", stats::std_dev(&fidelities));
    out.set("matrix", json!(matrix));
    Ok(())
}

fn pulse_family(f: Family) -> Result<PulseFamily> {
    Ok(match f {
        Family::CpmgYy => PulseFamily::CpmgYy,
        Family::CpmgXy => PulseFamily::CpmgXy,
        Family::Pdd => PulseFamily::Pdd,
        Family::Ccpmg => PulseFamily::Ccpmg,
        Family::Empty => return Err(CliError::Config("scan.families: `empty` has no pulse count".into())),
    })
}

fn pulse_scan(cfg: &RunConfig, base: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let runs = cfg.measurement.runs;
    let mut table = String::from("# family N probe_mean probe_sd fitted_mean fitted_sd runs\n");
    let mut per_family = Map::new();
    for &family in &cfg.scan.families {
        let counts: Vec<usize> = if family == Family::Ccpmg {
            cfg.scan.ccpmg_levels.iter().map(|&l| ccpmg_pulse_count(l) as usize).collect()
        } else {
            cfg.scan.pulse_counts.clone()
        };
        let mut probes = vec![Vec::new(); counts.len()];
        let mut fitted = vec![Vec::new(); counts.len()];
        let mut errors: Vec<Option<String>> = vec![None; counts.len()];
        for run in 0..runs {
            let points = contrast_vs_pulse_number(&with_run(base, run), pulse_family(family)?, &counts)?;
            for (k, p) in points.into_iter().enumerate() {
                probes[k].extend(p.probe_contrast);
                fitted[k].extend(p.fitted_contrast);
                if p.error.is_some() {
                    errors[k] = p.error;
                }
            }
        }
        let mut rows = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            if let Some(e) = &errors[k] {
                out.warnings.push(format!("{} N = {n}: {e}", family.name()));
            }
            let stat = |v: &[f64], f: fn(&[f64]) -> f64| (!v.is_empty()).then(|| f(v));
            let (pm, ps) = (stat(&probes[k], stats::mean), stat(&probes[k], stats::std_dev));
            let (fm, fs) = (stat(&fitted[k], stats::mean), stat(&fitted[k], stats::std_dev));
            let _ = writeln!(table, "{} {n} {} {} {} {} {}", family.name(), num(pm), num(ps), num(fm), num(fs), probes[k].len());
            rows.push(json!({ "pulses": n, "probe_mean": pm, "probe_sd": ps, "fitted_mean": fm, "error": errors[k] }));
        }
        per_family.insert(family.name().to_string(), Value::Array(rows));
    }
    out.file("pulse_scan.dat", table);
    out.set("families", Value::Object(per_family));
    Ok(())
}

fn lockin(cfg: &RunConfig, base: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let sc = &cfg.scan;
    let field = fit_lockin_amplitude(base, sc.lockin_pulses, sc.lockin_target_rad)?;
    let mut table = String::from("# sequence pulses extra_phase_rad\n");
    for p in pdd_lockin_study(base, &field, &sc.lockin_counts)? {
        let _ = writeln!(table, "pdd {} {}", p.pulses, p.extra_phase);
    }
    let mut compare = Map::new();
    for &family in &sc.families {
        let spec = family.spec(cfg.sequence.pulses, cfg.sequence.level);
        let at = ExperimentConfig { sequence: spec, ..base.clone() };
        let phase = lockin_phase(&at, &field)?;
        let n = at.schedule()?.len();
        let _ = writeln!(table, "{} {n} {phase}", family.name());
        compare.insert(spec.label(), json!(phase));
    }
    out.file("lockin.dat", table);
    out.set(
        "field",
        json!({ "amplitude_rad_per_s": field.amplitude, "frequency_hz": field.frequency_hz, "phase_rad": field.phase }),
    );
    out.set("extra_phase_rad", Value::Object(compare));
    Ok(())
}

fn spectrum(cfg: &RunConfig, base: &ExperimentConfig, out: &mut Output) -> Result<()> {
    let probes: Vec<(usize, f64)> = cfg.scan.probe_pulses.iter().copied().zip(cfg.scan.probe_times_s.iter().copied()).collect();
    let results = spectrum_probe(base, &probes)?;
    let model = base.noise.fast;
    let mut table = String::from("# f_Hz S_est_rad2_per_s S_model_rad2_per_s passband_width_Hz N T_s contrast\n");
    for (input, point) in &results {
        let _ = writeln!(
            table,
            "{} {} {} {} {} {} {}",
            point.freq_hz,
            num(point.s_value),
            num(model.map(|m| m.spectrum(TAU * point.freq_hz))),
            point.passband_width_hz,
            input.n_pulses,
            input.total_time,
            input.contrast
        );
        if point.s_value.is_none() {
            out.warnings.push(format!("N = {} T = {} s: contrast unusable for inversion", input.n_pulses, input.total_time));
        }
    }
    out.file("spectrum.dat", table);
    let points: Vec<_> = results.iter().map(|r| r.1).collect();
    let [lo, hi] = cfg.scan.band_hz;
    out.set("loglog_slope", ddsim_core::filter::probe_slope(&points, lo, hi));
    out.set("band_hz", json!([lo, hi]));
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes data files, `summary.json` and `manifest.json` into `dir`.
/// Everything except the manifest's wall-clock entry is a function of the
/// config alone.
pub fn write_outputs(cfg: &RunConfig, out: &Output, dir: &Path, started: Instant) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut checksums = BTreeMap::new();
    let summary = serde_json::to_string_pretty(&Value::Object(out.summary.clone())).unwrap() + "\n";
    let all = out.files.iter().map(|(n, c)| (n.as_str(), c.as_str())).chain([("summary.json", summary.as_str())]);
    for (name, contents) in all {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        checksums.insert(name.to_string(), sha256_hex(contents.as_bytes()));
    }
    let manifest = json!({
        "tool": "ddsim",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": serde_json::to_value(cfg).unwrap(),
        "wall_clock_s": started.elapsed().as_secs_f64(),
        "checksums_sha256": checksums,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap() + "\n").map_err(|e| CliError::io(&path, e))
}
