//! Multi-rate co-simulation of the plant and the sampled controllers.

use std::f64::consts::PI;

use crate::control::{Controller, OperatingPoint};
use crate::error::{Error, Result};
use crate::frames::{clarke, ThreePhase, Vec2};
use crate::plant::Plant;
use crate::sim::scenario::{PlantInit, Scenario};

/// Per-converter column stems, suffixed with `_k` in the header.
pub const CONVERTER_COLUMNS: [&str; 16] = [
    "vpcc_a", "vpcc_b", "vpcc_c", "ic_a", "ic_b", "ic_c", "p", "q", "freq_hz", "vv", "fault_flag", "id_pos_ref",
    "iq_pos_ref", "id_neg_ref", "iq_neg_ref", "limiter_gamma",
];

pub fn column_names(converters: usize) -> Vec<String> {
    let mut out = vec!["t_s".to_string()];
    for k in 0..converters {
        out.extend(CONVERTER_COLUMNS.iter().map(|c| format!("{c}_{k}")));
    }
    out.extend(["ig_a", "ig_b", "ig_c"].map(String::from));
    out
}

/// Sampled signals, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub data: Vec<f64>,
}

impl Trajectory {
    pub fn new(converters: usize) -> Self {
        Self { columns: column_names(converters), data: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn converter_count(&self) -> usize {
        (self.width() - 4) / CONVERTER_COLUMNS.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.index_of(name)?;
        Some(self.rows().map(|r| r[j]).collect())
    }

    pub fn push(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.width());
        self.data.extend_from_slice(row);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunDiagnostics {
    pub controller_invocations: usize,
    pub plant_steps: usize,
    pub max_kcl_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub diagnostics: RunDiagnostics,
}

/// A run that stopped on a non-finite value, with everything recorded so far.
#[derive(Debug)]
pub struct Diverged {
    pub error: Error,
    pub output: RunOutput,
}

impl std::fmt::Display for Diverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for Diverged {}

fn power(v: ThreePhase, i: ThreePhase) -> (f64, f64) {
    let (v, i) = (clarke(v), clarke(i));
    (v.re * i.re + v.im * i.im, v.im * i.re - v.re * i.im)
}

struct Schedule {
    /// (plant step index, fault index, on)
    faults: Vec<(usize, usize, bool)>,
    grid: Vec<(usize, usize)>,
}

impl Schedule {
    fn new(s: &Scenario, dt: f64) -> Self {
        let snap = |t: f64| (t / dt).round() as usize;
        let mut faults = Vec::new();
        for (i, f) in s.faults.iter().enumerate() {
            faults.push((snap(f.start_s), i, true));
            faults.push((snap(f.clear_s), i, false));
        }
        faults.sort_by_key(|&(j, i, on)| (j, on, i));
        let grid = s.grid_events.iter().enumerate().map(|(i, e)| (snap(e.time_s), i)).collect();
        Self { faults, grid }
    }
}

/// Runs a validated scenario to completion.
pub fn run(scenario: &Scenario) -> std::result::Result<RunOutput, Box<Diverged>> {
    let mut out = RunOutput { trajectory: Trajectory::new(scenario.converters.len()), diagnostics: Default::default() };
    match run_into(scenario, &mut out) {
        Ok(()) => Ok(out),
        Err(error) => Err(Box::new(Diverged { error, output: out })),
    }
}

fn init_plant(s: &Scenario) -> Result<Plant> {
    match s.plant_init {
        PlantInit::SteadyState => Plant::new(s.plant.clone(), s.faults.clone()),
        PlantInit::Zero => Plant::zero_state(s.plant.clone(), s.faults.clone()),
    }
}

fn run_into(s: &Scenario, out: &mut RunOutput) -> Result<()> {
    let n = s.converters.len();
    let t_c = s.control_period();
    let sub = s.plant_substeps;
    let dt = t_c / sub as f64;
    let mut plant = init_plant(s)?;
    let steady = s.plant_init == PlantInit::SteadyState;

    let mut controllers = Vec::with_capacity(n);
    for (k, c) in s.converters.iter().enumerate() {
        let mut ctl = Controller::new(c.control.clone())?;
        let v = if steady { plant.grid_voltage() } else { 0.0 };
        let w = s.plant.grid.frequency_hz * 2.0 * PI / s.plant.omega_n();
        let b_f = s.plant.converters[k].b_f;
        ctl.initialize(OperatingPoint {
            theta: plant.grid_angle(0.0),
            v_pos: Vec2::new(v, 0.0),
            i_pos: Vec2::new(0.0, b_f * w * v),
        });
        controllers.push(ctl);
    }
    let mut held: Vec<ThreePhase> = (0..n)
        .map(|k| if steady { plant.equilibrium_bridge_voltage(k, 0.5 * t_c) } else { ThreePhase::ZERO })
        .collect();

    let schedule = Schedule::new(s, dt);
    let (mut fi, mut gi) = (0, 0);
    let mut row = vec![0.0; out.trajectory.width()];
    let steps = s.control_steps();

    for k in 0..steps {
        let t = k as f64 * t_c;
        let m = plant.measure();
        let mut next = Vec::with_capacity(n);
        let record = k % s.decimation == 0;
        row[0] = t;
        for (c, ctl) in controllers.iter_mut().enumerate() {
            let sp = s.converters[c].setpoints.at(t);
            let o = ctl.step(&m.converters[c], sp);
            if !o.is_finite() {
                return Err(Error::Divergence {
                    time_s: t,
                    detail: format!("controller {c} produced a non-finite reference"),
                });
            }
            if record {
                let mc = &m.converters[c];
                let (p, q) = power(mc.v_pcc, mc.i_c);
                let base = 1 + c * CONVERTER_COLUMNS.len();
                let vals = [
                    mc.v_pcc.a,
                    mc.v_pcc.b,
                    mc.v_pcc.c,
                    mc.i_c.a,
                    mc.i_c.b,
                    mc.i_c.c,
                    p,
                    q,
                    o.omega_r / (2.0 * PI),
                    o.v_v,
                    if o.fault { 1.0 } else { 0.0 },
                    o.i_pos_sat.re,
                    o.i_pos_sat.im,
                    o.i_neg_sat.re,
                    o.i_neg_sat.im,
                    o.gamma,
                ];
                row[base..base + vals.len()].copy_from_slice(&vals);
            }
            next.push(o.v_ref);
        }
        if record {
            let w = row.len();
            row[w - 3..].copy_from_slice(&m.i_g.to_array());
            out.trajectory.push(&row);
        }
        out.diagnostics.controller_invocations += 1;

        for j in k * sub..(k + 1) * sub {
            while fi < schedule.faults.len() && schedule.faults[fi].0 <= j {
                let (_, idx, on) = schedule.faults[fi];
                if on {
                    plant.set_fault_active(idx, true);
                } else {
                    plant.release_fault(idx);
                }
                fi += 1;
            }
            while gi < schedule.grid.len() && schedule.grid[gi].0 <= j {
                let e = &s.grid_events[schedule.grid[gi].1];
                plant.step_grid_phase(e.phase_step_rad);
                if let Some(v) = e.voltage_pu {
                    plant.set_grid_voltage(v);
                }
                gi += 1;
            }
            plant.step(&held, dt)?;
            out.diagnostics.plant_steps += 1;
            let r = plant.kcl_residual();
            out.diagnostics.max_kcl_residual = out.diagnostics.max_kcl_residual.max(r);
        }
        held = next;
    }
    Ok(())
}
