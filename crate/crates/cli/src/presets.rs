//! Shipped configurations, one per reproduced figure.

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub source: &'static str,
}

macro_rules! preset {
    ($name:literal, $description:literal) => {
        Preset { name: $name, description: $description, source: include_str!(concat!("../presets/", $name, ".toml")) }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig1a", "free-induction contrast vs delay with calibrated fast noise, 1/e time"),
    preset!("fig1b", "fringe position over 64 drift draws"),
    preset!("fig2a", "conditional fringes at the gate time, CPMG_xy(24) on both qubits"),
    preset!("fig2b", "fringe minima vs window length over 2-8 ms, T_g = 8 ms"),
    preset!("fig4a", "conditional fringes, CPMG_xy(24) at 5 ms with noise and drift"),
    preset!("fig4b", "conditional fringes, C-CPMG_3 (84 pulses) at 8 ms with noise and drift"),
    preset!("fig4-pdd", "PDD(49) lock-in field fitted to 0.8 rad and replayed under CPMG timing"),
    preset!("fig5", "contrast vs pulse number for CPMG_yy, CPMG_xy and C-CPMG, target-only DD"),
    preset!("cnot-truth-table", "CNOT truth table under C-CPMG_3 at 8 ms"),
    preset!("spectrum-probe", "CPMG noise spectroscopy of the fast noise over 1-50 kHz"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
