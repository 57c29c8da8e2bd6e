//! Dynamical-decoupling schedules: CPMG_yy, CPMG_xy, PDD_xy and the
//! concatenated C-CPMG family, plus validation and a text format.

use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{arg, Error, Result};
use crate::scalar::Real;
use crate::spin::{PulseEvent, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceFamily {
    CpmgYy,
    CpmgXy,
    PddXy,
    Ccpmg,
    Custom,
    Empty,
}

impl SequenceFamily {
    pub fn label(self) -> &'static str {
        match self {
            SequenceFamily::CpmgYy => "CPMG_YY",
            SequenceFamily::CpmgXy => "CPMG_XY",
            SequenceFamily::PddXy => "PDD_XY",
            SequenceFamily::Ccpmg => "CCPMG",
            SequenceFamily::Custom => "CUSTOM",
            SequenceFamily::Empty => "EMPTY",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "CPMG_YY" => SequenceFamily::CpmgYy,
            "CPMG_XY" => SequenceFamily::CpmgXy,
            "PDD_XY" => SequenceFamily::PddXy,
            "CCPMG" => SequenceFamily::Ccpmg,
            "CUSTOM" => SequenceFamily::Custom,
            "EMPTY" => SequenceFamily::Empty,
            other => return Err(Error::Parse(format!("unknown sequence family `{other}`"))),
        })
    }

    /// Families with half gaps at both ends and full gaps in between.
    pub fn has_cpmg_timing(self) -> bool {
        matches!(self, SequenceFamily::CpmgYy | SequenceFamily::CpmgXy | SequenceFamily::Ccpmg)
    }
}

impl fmt::Display for SequenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Pulse phase pattern for CPMG builders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Every pulse is `Y`.
    Yy,
    /// `Y, X̄, Y, X̄, …`
    Xy,
}

/// A validated, time-ordered pulse schedule over `[0, total_time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence<T> {
    pub family: SequenceFamily,
    /// Concatenation level for C-CPMG, 0 otherwise.
    pub level: u32,
    pub pulses: Vec<PulseEvent<T>>,
    pub total_time: T,
    /// τ: the half gap for CPMG timing, the full gap for PDD.
    pub base_interval: T,
    pub targets: Targets,
}

impl<T: Real> Sequence<T> {
    /// No pulses; one free gap of length `total_time`.
    pub fn empty(total_time: T) -> Self {
        Sequence {
            family: SequenceFamily::Empty,
            level: 0,
            pulses: Vec::new(),
            total_time,
            base_interval: total_time,
            targets: Targets::NONE,
        }
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Free gaps between pulse edges, including both ends.
    pub fn gaps(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.pulses.len() + 1);
        let mut t = T::zero();
        for p in &self.pulses {
            out.push(p.start() - t);
            t = p.end();
        }
        out.push(self.total_time - t);
        out
    }

    /// Copy of the schedule with every pulse made instantaneous.
    pub fn instantaneous(&self) -> Self {
        let mut s = self.clone();
        for p in &mut s.pulses {
            p.duration = T::zero();
        }
        s
    }

    /// Copy of the schedule addressed to a different qubit set.
    pub fn retargeted(&self, targets: Targets) -> Self {
        let mut s = self.clone();
        s.targets = targets;
        for p in &mut s.pulses {
            p.targets = targets;
        }
        s
    }
}

fn check_window<T: Real>(n: usize, total_time: T, t_pi: T) -> Result<()> {
    if !(total_time > T::zero()) || !total_time.is_finite() {
        return arg("total time must be positive and finite");
    }
    if t_pi < T::zero() {
        return arg("pulse duration must be non-negative");
    }
    let busy = T::lit(n as f64) * t_pi;
    if total_time <= busy {
        return Err(Error::Timing(format!(
            "{n} pulses of {} s do not fit into {} s",
            t_pi.to_f64_lossy(),
            total_time.to_f64_lossy()
        )));
    }
    Ok(())
}

/// Places pulses given integer gap multiples of τ before each pulse.
fn place<T: Real>(
    units_before: &[u64],
    kinds: &[PulseKind],
    tau: T,
    t_pi: T,
    targets: Targets,
) -> Vec<PulseEvent<T>> {
    let mut cumulative = 0u64;
    units_before
        .iter()
        .zip(kinds)
        .enumerate()
        .map(|(k, (&units, &kind))| {
            cumulative += units;
            let center =
                T::lit(cumulative as f64) * tau + T::lit(k as f64) * t_pi + t_pi / T::lit(2.0);
            kind.event(center, t_pi, targets)
        })
        .collect()
}

/// CPMG timing: gaps `τ, 2τ, …, 2τ, τ` with `τ = (T − N·t_π)/(2N)`.
pub fn build_cpmg<T: Real>(
    n_pulses: usize,
    total_time: T,
    t_pi: T,
    mode: PhaseMode,
    targets: Targets,
) -> Result<Sequence<T>> {
    check_window(n_pulses, total_time, t_pi)?;
    if n_pulses == 0 {
        return Ok(Sequence::empty(total_time));
    }
    if mode == PhaseMode::Xy && n_pulses % 2 != 0 {
        return arg("CPMG_xy needs an even pulse count");
    }
    let n = T::lit(n_pulses as f64);
    let tau = (total_time - n * t_pi) / (T::lit(2.0) * n);
    let units: Vec<u64> = (0..n_pulses).map(|k| if k == 0 { 1 } else { 2 }).collect();
    let kinds: Vec<PulseKind> = (0..n_pulses)
        .map(|k| match mode {
            PhaseMode::Yy => PulseKind::Y,
            PhaseMode::Xy if k % 2 == 0 => PulseKind::Y,
            PhaseMode::Xy => PulseKind::XBar,
        })
        .collect();
    Ok(Sequence {
        family: match mode {
            PhaseMode::Yy => SequenceFamily::CpmgYy,
            PhaseMode::Xy => SequenceFamily::CpmgXy,
        },
        level: 0,
        pulses: place(&units, &kinds, tau, t_pi, targets),
        total_time,
        base_interval: tau,
        targets,
    })
}

/// Strictly periodic timing: `N + 1` equal gaps, phases `X̄, Y, X̄, …`.
pub fn build_pdd<T: Real>(
    n_pulses: usize,
    total_time: T,
    t_pi: T,
    targets: Targets,
) -> Result<Sequence<T>> {
    if n_pulses == 0 {
        return arg("PDD needs at least one pulse");
    }
    check_window(n_pulses, total_time, t_pi)?;
    let n = T::lit(n_pulses as f64);
    let tau = (total_time - n * t_pi) / (n + T::one());
    let units = vec![1u64; n_pulses];
    let kinds: Vec<PulseKind> = (0..n_pulses)
        .map(|k| if k % 2 == 0 { PulseKind::XBar } else { PulseKind::Y })
        .collect();
    Ok(Sequence {
        family: SequenceFamily::PddXy,
        level: 0,
        pulses: place(&units, &kinds, tau, t_pi, targets),
        total_time,
        base_interval: tau,
        targets,
    })
}

/// The two π pulses of the concatenated alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulseKind {
    /// Anticlockwise about y.
    Y,
    /// Clockwise about x.
    XBar,
}

impl PulseKind {
    pub fn event<T: Real>(self, center: T, duration: T, targets: Targets) -> PulseEvent<T> {
        match self {
            PulseKind::Y => PulseEvent::y(center, duration, targets),
            PulseKind::XBar => PulseEvent::x_bar(center, duration, targets),
        }
    }
}

/// Untimed token tree for concatenated sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceSymbol {
    /// One τ of free evolution.
    Delay,
    Pulse(PulseKind),
    /// `[body]^repeat`
    Block { body: Vec<SequenceSymbol>, repeat: u32 },
}

/// Flattened token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Token {
    Delay,
    Pulse(PulseKind),
}

impl SequenceSymbol {
    pub fn pulse_count(&self) -> u64 {
        match self {
            SequenceSymbol::Delay => 0,
            SequenceSymbol::Pulse(_) => 1,
            SequenceSymbol::Block { body, repeat } => {
                *repeat as u64 * body.iter().map(SequenceSymbol::pulse_count).sum::<u64>()
            }
        }
    }

    pub fn delay_count(&self) -> u64 {
        match self {
            SequenceSymbol::Delay => 1,
            SequenceSymbol::Pulse(_) => 0,
            SequenceSymbol::Block { body, repeat } => {
                *repeat as u64 * body.iter().map(SequenceSymbol::delay_count).sum::<u64>()
            }
        }
    }

    pub fn flatten(&self) -> Vec<Token> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }

    fn flatten_into(&self, out: &mut Vec<Token>) {
        match self {
            SequenceSymbol::Delay => out.push(Token::Delay),
            SequenceSymbol::Pulse(k) => out.push(Token::Pulse(*k)),
            SequenceSymbol::Block { body, repeat } => {
                for _ in 0..*repeat {
                    for s in body {
                        s.flatten_into(out);
                    }
                }
            }
        }
    }

    /// Merges runs of delays: τ-multiples before each pulse, the trailing
    /// multiple, and the pulse kinds in order.
    pub fn timing_skeleton(&self) -> (Vec<u64>, u64, Vec<PulseKind>) {
        let mut before = Vec::new();
        let mut kinds = Vec::new();
        let mut run = 0u64;
        for tok in self.flatten() {
            match tok {
                Token::Delay => run += 1,
                Token::Pulse(k) => {
                    before.push(run);
                    kinds.push(k);
                    run = 0;
                }
            }
        }
        (before, run, kinds)
    }
}

/// `(4^{n+1} − 4) / 3`, the pulse count of C-CPMG level `n`.
pub fn ccpmg_pulse_count(level: u32) -> u64 {
    (4u64.pow(level + 1) - 4) / 3
}

/// Level whose pulse count equals `n`, if any.
pub fn ccpmg_level_for_count(n: u64) -> Option<u32> {
    (1..=12).find(|&l| ccpmg_pulse_count(l) == n)
}

/// Level 1 is `[τ Y τ τ X̄ τ]²`; level `n` is
/// `[√C τ Y τ C τ X̄ τ √C]²` with `C` the previous level and `√C` a single
/// pass over its bracketed block.
pub fn expand_ccpmg(level: u32) -> Result<SequenceSymbol> {
    use SequenceSymbol::{Block, Delay, Pulse};
    if level < 1 {
        return arg("C-CPMG level must be at least 1");
    }
    let mut current = Block {
        body: vec![
            Delay,
            Pulse(PulseKind::Y),
            Delay,
            Delay,
            Pulse(PulseKind::XBar),
            Delay,
        ],
        repeat: 2,
    };
    for _ in 1..level {
        let root = match &current {
            Block { body, .. } => Block { body: body.clone(), repeat: 1 },
            _ => unreachable!("levels are blocks"),
        };
        current = Block {
            body: vec![
                root.clone(),
                Delay,
                Pulse(PulseKind::Y),
                Delay,
                current,
                Delay,
                Pulse(PulseKind::XBar),
                Delay,
                root,
            ],
            repeat: 2,
        };
    }
    Ok(current)
}

/// Times the flattened C-CPMG tokens with `τ = (T − N·t_π)/(2N)`.
pub fn schedule_ccpmg<T: Real>(
    level: u32,
    total_time: T,
    t_pi: T,
    targets: Targets,
) -> Result<Sequence<T>> {
    let symbol = expand_ccpmg(level)?;
    let (before, _trailing, kinds) = symbol.timing_skeleton();
    let n_pulses = kinds.len();
    check_window(n_pulses, total_time, t_pi)?;
    let n = T::lit(n_pulses as f64);
    let tau = (total_time - n * t_pi) / (T::lit(2.0) * n);
    if !(tau > T::zero()) {
        return Err(Error::Timing(format!("level {level} leaves no free time")));
    }
    Ok(Sequence {
        family: SequenceFamily::Ccpmg,
        level,
        pulses: place(&before, &kinds, tau, t_pi, targets),
        total_time,
        base_interval: tau,
        targets,
    })
}

/// One validation outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub checks: Vec<Check>,
}

impl Diagnostics {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self, name: &str) -> bool {
        self.checks.iter().any(|c| c.name == name && !c.passed)
    }
}

/// Structural and family-specific checks; never fails, only reports.
pub fn validate<T: Real>(seq: &Sequence<T>) -> Diagnostics {
    let mut checks = Vec::new();
    let total = seq.total_time;
    let tol = T::lit(1e-9) * (total.abs() + seq.base_interval.abs()).max(T::lit(1e-12));
    let mut push = |name, passed, detail: String| checks.push(Check { name, passed, detail });

    let ordered = seq.pulses.windows(2).all(|w| w[0].center_time < w[1].center_time);
    push("ordering", ordered, if ordered { String::new() } else { "pulse centers not strictly increasing".into() });

    let mut overlap = None;
    for (i, w) in seq.pulses.windows(2).enumerate() {
        if w[1].start() < w[0].end() {
            overlap = Some(i + 1);
            break;
        }
    }
    let inside = seq
        .pulses
        .iter()
        .all(|p| p.duration >= T::zero() && p.start() >= -tol && p.end() <= total + tol);
    push(
        "overlap",
        overlap.is_none() && inside,
        match (overlap, inside) {
            (Some(i), _) => format!("pulse {i} overlaps its predecessor"),
            (None, false) => "pulse outside [0, T]".into(),
            _ => String::new(),
        },
    );

    let gaps = seq.gaps();
    let busy = seq.pulses.iter().fold(T::zero(), |a, p| a + p.duration);
    let sum = gaps.iter().fold(T::zero(), |a, &g| a + g) + busy;
    let conserved = (sum - total).abs() <= tol;
    push(
        "conservation",
        conserved,
        if conserved { String::new() } else { format!("gaps + pulses = {} s", sum.to_f64_lossy()) },
    );

    let tau = seq.base_interval;
    let close = |a: T, b: T| (a - b).abs() <= tol;
    let (timing_ok, timing_detail) = match seq.family {
        f if f.has_cpmg_timing() => {
            let n = gaps.len();
            let ok = n >= 2
                && close(gaps[0], tau)
                && close(gaps[n - 1], tau)
                && gaps[1..n - 1].iter().all(|&g| close(g, T::lit(2.0) * tau));
            (ok, if ok { String::new() } else { "gaps are not τ, 2τ, …, 2τ, τ".into() })
        }
        SequenceFamily::PddXy => {
            let ok = gaps.iter().all(|&g| close(g, tau));
            (ok, if ok { String::new() } else { "gaps are not all equal".into() })
        }
        SequenceFamily::Empty => {
            let ok = seq.pulses.is_empty();
            (ok, if ok { String::new() } else { "EMPTY sequence has pulses".into() })
        }
        _ => (true, String::new()),
    };
    push("timing", timing_ok, timing_detail);

    let n = seq.pulses.len() as u64;
    let (count_ok, count_detail) = match seq.family {
        SequenceFamily::Ccpmg => {
            let expected = if seq.level >= 1 { ccpmg_pulse_count(seq.level) } else { 0 };
            (n == expected && expected > 0, format!("expected {expected}, found {n}"))
        }
        SequenceFamily::CpmgXy => (n % 2 == 0, format!("{n} pulses")),
        SequenceFamily::PddXy => (n >= 1, format!("{n} pulses")),
        _ => (true, String::new()),
    };
    push("pulse_count", count_ok, if count_ok { String::new() } else { count_detail });

    if seq.family != SequenceFamily::Custom {
        let eps = T::lit(1e-12);
        let alphabet = seq.pulses.iter().all(|p| {
            (p.phase.abs() <= eps || (p.phase - T::frac_pi_2()).abs() <= eps)
                && (p.angle.abs() - T::pi()).abs() <= eps
        });
        push(
            "phase_alphabet",
            alphabet,
            if alphabet { String::new() } else { "phase outside {0, π/2} or angle not ±π".into() },
        );
    }

    Diagnostics { checks }
}

/// Line-oriented text encoding of a schedule.
///
/// ```text
/// # ddsim-sequence v1
/// # family=CCPMG level=1 total_time_s=… base_interval_s=… targets=both
/// # center_time_s duration_s phase_rad angle_rad targets
/// <center> <duration> <phase> <angle> <targets>
/// ```
///
/// Floats use Rust's shortest round-trip formatting, so decoding restores
/// the schedule bit for bit.
pub fn to_text<T: Real>(seq: &Sequence<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# ddsim-sequence v1");
    let _ = writeln!(
        s,
        "# family={} level={} total_time_s={} base_interval_s={} targets={}",
        seq.family, seq.level, seq.total_time, seq.base_interval, seq.targets
    );
    let _ = writeln!(s, "# center_time_s duration_s phase_rad angle_rad targets");
    for p in &seq.pulses {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            p.center_time, p.duration, p.phase, p.angle, p.targets
        );
    }
    s
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
}

pub fn from_text<T: Real + FromStr>(text: &str) -> Result<Sequence<T>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("# ddsim-sequence v1") {
        return Err(Error::Parse("missing `# ddsim-sequence v1` header".into()));
    }
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Parse("missing metadata line".into()))?;
    let mut family = None;
    let mut level = None;
    let mut total = None;
    let mut tau = None;
    let mut targets = None;
    for field in header.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad metadata field `{field}`")))?;
        match k {
            "family" => family = Some(SequenceFamily::parse(v)?),
            "level" => level = Some(parse_num::<u32>(v, "level")?),
            "total_time_s" => total = Some(parse_num::<T>(v, "total time")?),
            "base_interval_s" => tau = Some(parse_num::<T>(v, "base interval")?),
            "targets" => targets = Some(Targets::parse(v)?),
            other => return Err(Error::Parse(format!("unknown metadata key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Parse(format!("metadata lacks `{k}`"));
    let mut seq = Sequence {
        family: family.ok_or_else(|| missing("family"))?,
        level: level.ok_or_else(|| missing("level"))?,
        pulses: Vec::new(),
        total_time: total.ok_or_else(|| missing("total_time_s"))?,
        base_interval: tau.ok_or_else(|| missing("base_interval_s"))?,
        targets: targets.ok_or_else(|| missing("targets"))?,
    };
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(Error::Parse(format!("pulse record needs 5 fields: `{line}`")));
        }
        seq.pulses.push(PulseEvent::new(
            parse_num(f[0], "center time")?,
            parse_num(f[1], "duration")?,
            parse_num(f[2], "phase")?,
            parse_num(f[3], "angle")?,
            Targets::parse(f[4])?,
        ));
    }
    Ok(seq)
}
