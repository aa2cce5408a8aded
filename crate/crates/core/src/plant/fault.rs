use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    ThreePhase,
    SinglePhaseGround,
    PhasePhase,
    PhasePhaseGround,
}

impl FaultKind {
    pub fn default_phases(self) -> &'static str {
        match self {
            FaultKind::ThreePhase => "abc",
            FaultKind::SinglePhaseGround => "a",
            FaultKind::PhasePhase | FaultKind::PhasePhaseGround => "bc",
        }
    }

    fn phase_count(self) -> usize {
        match self {
            FaultKind::ThreePhase => 3,
            FaultKind::SinglePhaseGround => 1,
            FaultKind::PhasePhase | FaultKind::PhasePhaseGround => 2,
        }
    }

    pub fn is_grounded(self) -> bool {
        !matches!(self, FaultKind::PhasePhase)
    }
}

/// A resistive shunt fault inside the grid equivalent.
///
/// `location` is the fraction of the grid impedance lying between the fault
/// node and the infinite-bus source: `1.0` places the fault at the common bus
/// (the terminals of the grid equivalent), `0.0` at the ideal source where it
/// has no effect on the network.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Faulted phase indices (0 = a, 1 = b, 2 = c), sorted and distinct.
    pub phases: Vec<usize>,
    pub resistance_pu: f64,
    pub location: f64,
    pub start_s: f64,
    pub clear_s: f64,
}

impl FaultSpec {
    pub fn new(
        kind: FaultKind,
        phases: &str,
        resistance_pu: f64,
        location: f64,
        start_s: f64,
        clear_s: f64,
    ) -> Result<Self> {
        let phases = parse_phases(phases)?;
        let spec = Self { kind, phases, resistance_pu, location, start_s, clear_s };
        spec.validate("fault")?;
        Ok(spec)
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        if self.phases.len() != self.kind.phase_count() {
            return Err(Error::invalid(
                format!("{key}.phases"),
                format!("{:?} fault needs {} phase(s)", self.kind, self.kind.phase_count()),
            ));
        }
        if !(self.resistance_pu > 0.0 && self.resistance_pu.is_finite()) {
            return Err(Error::invalid(format!("{key}.r_fault_pu"), "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.location) {
            return Err(Error::invalid(format!("{key}.location"), "must lie in [0, 1]"));
        }
        if !(self.clear_s > self.start_s) {
            return Err(Error::invalid(format!("{key}.clear_s"), "must be greater than start_s"));
        }
        Ok(())
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        t >= self.start_s && t < self.clear_s
    }
}

pub fn parse_phases(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for ch in s.chars() {
        let p = match ch.to_ascii_lowercase() {
            'a' => 0,
            'b' => 1,
            'c' => 2,
            _ => return Err(Error::invalid("phases", format!("unknown phase `{ch}`"))),
        };
        if out.contains(&p) {
            return Err(Error::invalid("phases", format!("phase `{ch}` repeated")));
        }
        out.push(p);
    }
    out.sort_unstable();
    Ok(out)
}

pub fn phases_to_string(phases: &[usize]) -> String {
    phases.iter().map(|&p| ['a', 'b', 'c'][p]).collect()
}
