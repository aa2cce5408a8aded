//! Bundled two-converter scenarios: a symmetrical or asymmetrical fault at
//! the grid terminal of the common bus from 0.5 s to 1.0 s, a zero power
//! setpoint until 1.5 s and a ramp to 0.25 pu over 0.2 s.

use crate::control::{FrtStrategy, NsStrategy};
use crate::plant::FaultKind;

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub text: String,
}

pub const FAULT_START_S: f64 = 0.5;
pub const FAULT_CLEAR_S: f64 = 1.0;
pub const RAMP_START_S: f64 = 1.5;
pub const RAMP_TIME_S: f64 = 0.2;
pub const P_FINAL_PU: f64 = 0.25;

const FAULTS: [(&str, FaultKind); 4] = [
    ("sym", FaultKind::ThreePhase),
    ("slg", FaultKind::SinglePhaseGround),
    ("pp", FaultKind::PhasePhase),
    ("ppg", FaultKind::PhasePhaseGround),
];

const MODES: [(&str, FrtStrategy); 3] = [
    ("vcc", FrtStrategy::VectorCurrentControl),
    ("vsc", FrtStrategy::VirtualSynchronousCondenser),
    ("vdr", FrtStrategy::VoltageDownregulation),
];

fn kebab<T: serde::Serialize>(v: T) -> String {
    match toml::Value::try_from(v) {
        Ok(toml::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialise as strings"),
    }
}

struct Options<'a> {
    name: &'a str,
    description: &'a str,
    fault: FaultKind,
    frt: FrtStrategy,
    ns: NsStrategy,
    y_neg_im: f64,
}

fn render(o: &Options) -> String {
    format!(
        r#"name = "{name}"
description = "{description}"
duration_s = 3.0
plant_substeps = 14
decimation = 1

[grid]
scr = 5.0
x_over_r = 10.0

[control]
frt_strategy = "{frt}"
ns_strategy = "{ns}"
limiter = "negative-sequence-priority"
y_v_neg_re_pu = 0.0
y_v_neg_im_pu = {y}

[setpoints]
p_initial_pu = 0.0
q_initial_pu = 0.0
ramp_time_s = {ramp}
steps = [{{ time_s = {ramp_start}, p_pu = {p} }}]

[[converter]]

[[converter]]

[[faults]]
kind = "{kind}"
r_fault_pu = 0.01
location = 1.0
start_s = {start}
clear_s = {clear}
"#,
        name = o.name,
        description = o.description,
        frt = kebab(o.frt),
        ns = kebab(o.ns),
        y = toml::Value::Float(o.y_neg_im),
        ramp = RAMP_TIME_S,
        ramp_start = RAMP_START_S,
        p = P_FINAL_PU,
        kind = kebab(o.fault),
        start = FAULT_START_S,
        clear = FAULT_CLEAR_S,
    )
}

/// Every bundled scenario, in a stable order.
pub fn all() -> Vec<Preset> {
    let mut out = Vec::new();
    for (fname, fault) in FAULTS {
        for (mname, frt) in MODES {
            let name = format!("cs1_{fname}_{mname}");
            let description = format!("{} fault, {} ride-through, balanced currents", kebab(fault), kebab(frt));
            let text = render(&Options {
                name: &name,
                description: &description,
                fault,
                frt,
                ns: NsStrategy::BalancedCurrent,
                y_neg_im: -0.04,
            });
            out.push(Preset { name, text });
        }
    }
    let extra = [
        ("cs1_slg_suppression", FaultKind::SinglePhaseGround, NsStrategy::PowerOscillationSuppression, -0.04,
         "single-phase-ground fault, active-power oscillation suppression"),
        ("cs1_pp_balancing", FaultKind::PhasePhase, NsStrategy::VoltageBalancing, -25.0,
         "phase-to-phase fault, voltage balancing with the admittance of the filter inductor"),
        ("cs1_pp_balancing_table", FaultKind::PhasePhase, NsStrategy::VoltageBalancing, -0.04,
         "phase-to-phase fault, voltage balancing with the tabulated admittance"),
    ];
    for (name, fault, ns, y, description) in extra {
        let text = render(&Options {
            name,
            description,
            fault,
            frt: FrtStrategy::VirtualSynchronousCondenser,
            ns,
            y_neg_im: y,
        });
        out.push(Preset { name: name.to_string(), text });
    }
    out
}

pub fn find(name: &str) -> Option<Preset> {
    let stem = name.trim_end_matches(".toml");
    let stem = stem.rsplit('/').next().unwrap_or(stem);
    all().into_iter().find(|p| p.name == stem)
}
