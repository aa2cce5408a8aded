//! Averaged circuit model: N converters with RLC filters feeding a common bus
//! through series lines, and a grid equivalent (series R-L to an ideal
//! source) that can be split at interior nodes to host shunt faults.
//!
//! Element values are per-unit on the converter base. Inductances and
//! capacitances are derived from reactance and susceptance at nominal
//! frequency (`L = X/ω_n`, `C = B/ω_n`) so time stays in seconds.

pub mod fault;
pub mod network;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::frames::{ThreePhase, Vec2};
pub use fault::{FaultKind, FaultSpec};
use network::{Branch, Shunt, Solver};

/// Rated quantities used for SI conversion at the I/O boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Base {
    pub power_va: f64,
    pub voltage_v: f64,
    pub frequency_hz: f64,
}

impl Default for Base {
    fn default() -> Self {
        Self { power_va: 100e3, voltage_v: 400.0, frequency_hz: 50.0 }
    }
}

impl Base {
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    pub fn impedance_ohm(&self) -> f64 {
        self.voltage_v * self.voltage_v / self.power_va
    }

    /// Peak phase-to-neutral voltage for 1 pu; `voltage_v` is line-to-line RMS.
    pub fn voltage_peak_v(&self) -> f64 {
        self.voltage_v * (2.0f64 / 3.0).sqrt()
    }

    /// Peak phase current for 1 pu.
    pub fn current_peak_a(&self) -> f64 {
        2.0 * self.power_va / (3.0 * self.voltage_peak_v())
    }
}

/// Filter and connection impedances of one converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterCircuit {
    pub r_f: f64,
    pub x_f: f64,
    /// Filter capacitor susceptance at nominal frequency.
    pub b_f: f64,
    pub r_l: f64,
    pub x_l: f64,
}

impl Default for ConverterCircuit {
    fn default() -> Self {
        Self { r_f: 0.002, x_f: 0.04, b_f: 0.05, r_l: 0.003, x_l: 0.06 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub r: f64,
    pub x: f64,
    /// Infinite-bus phase-voltage amplitude.
    pub voltage: f64,
    pub frequency_hz: f64,
    /// Phase of the infinite bus at t = 0.
    pub phase: f64,
}

impl GridParams {
    pub fn from_scr(scr: f64, x_over_r: f64) -> Self {
        let z = 1.0 / scr;
        let r = z / (1.0 + x_over_r * x_over_r).sqrt();
        Self { r, x: r * x_over_r, voltage: 1.0, frequency_hz: 50.0, phase: 0.0 }
    }
}

impl Default for GridParams {
    fn default() -> Self {
        Self::from_scr(5.0, 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub base: Base,
    pub converters: Vec<ConverterCircuit>,
    pub grid: GridParams,
}

impl PlantParams {
    pub fn new(converters: usize) -> Self {
        Self {
            base: Base::default(),
            converters: vec![ConverterCircuit::default(); converters],
            grid: GridParams::default(),
        }
    }

    pub fn omega_n(&self) -> f64 {
        self.base.omega()
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.base;
        for (key, v) in [
            ("base.power_va", b.power_va),
            ("base.voltage_v", b.voltage_v),
            ("base.frequency_hz", b.frequency_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be > 0"));
            }
        }
        if self.converters.is_empty() {
            return Err(Error::invalid("converter", "at least one converter is required"));
        }
        for (k, c) in self.converters.iter().enumerate() {
            let positive = [("x_f_pu", c.x_f), ("b_f_pu", c.b_f), ("x_l_pu", c.x_l)];
            for (name, v) in positive {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("converter[{k}].{name}"), "must be > 0"));
                }
            }
            for (name, v) in [("r_f_pu", c.r_f), ("r_l_pu", c.r_l)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("converter[{k}].{name}"), "must be >= 0"));
                }
            }
        }
        let g = &self.grid;
        if !(g.x > 0.0 && g.x.is_finite()) {
            return Err(Error::invalid("grid.x_pu", "must be > 0"));
        }
        if !(g.r >= 0.0 && g.r.is_finite()) {
            return Err(Error::invalid("grid.r_pu", "must be >= 0"));
        }
        if !(g.voltage >= 0.0 && g.voltage.is_finite()) {
            return Err(Error::invalid("grid.voltage_pu", "must be >= 0"));
        }
        if !(g.frequency_hz > 0.0 && g.frequency_hz.is_finite()) {
            return Err(Error::invalid("grid.frequency_hz", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterMeasurement {
    pub v_pcc: ThreePhase,
    /// Converter-side filter inductor current.
    pub i_c: ThreePhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub converters: Vec<ConverterMeasurement>,
    /// Current flowing from the common bus into the grid equivalent.
    pub i_g: ThreePhase,
}

/// Fixed topology derived from the parameters and every fault location that
/// may occur during a run.
#[derive(Debug, Clone)]
struct Topology {
    n_conv: usize,
    /// Node positions along the grid impedance, bus (1.0) first.
    positions: Vec<f64>,
    branches: Vec<Branch>,
    /// Node hosting each fault, `None` for faults sitting on the ideal source.
    fault_nodes: Vec<Option<usize>>,
}

impl Topology {
    fn new(params: &PlantParams, faults: &[FaultSpec]) -> Self {
        let n_conv = params.converters.len();
        let omega_n = params.omega_n();
        let mut positions = vec![1.0];
        for f in faults {
            if f.location > 0.0 && f.location < 1.0 && !positions.iter().any(|&p| p == f.location) {
                positions.push(f.location);
            }
        }
        positions[1..].sort_by(|a, b| b.total_cmp(a));
        let fault_nodes = faults
            .iter()
            .map(|f| {
                if f.location <= 0.0 {
                    None
                } else {
                    positions.iter().position(|&p| p == f.location)
                }
            })
            .collect();

        let mut branches = Vec::new();
        for c in &params.converters {
            for p in 0..3 {
                branches.push(Branch { r: c.r_l, l: c.x_l / omega_n, from: None, to: Some(p) });
            }
        }
        let nodes = positions.len();
        for s in 0..nodes {
            let span = positions[s] - positions.get(s + 1).copied().unwrap_or(0.0);
            for p in 0..3 {
                branches.push(Branch {
                    r: span * params.grid.r,
                    l: span * params.grid.x / omega_n,
                    from: Some(s * 3 + p),
                    to: (s + 1 < nodes).then_some((s + 1) * 3 + p),
                });
            }
        }
        Self { n_conv, positions, branches, fault_nodes }
    }

    fn node_count(&self) -> usize {
        self.positions.len() * 3
    }

    fn line_offset(&self) -> usize {
        6 * self.n_conv
    }

    fn segment_offset(&self) -> usize {
        9 * self.n_conv
    }

    fn state_len(&self) -> usize {
        6 * self.n_conv + self.branches.len()
    }

    /// Shunts of every active slot. Fault `idx` owns mask bits
    /// `SLOTS·idx .. SLOTS·idx + SLOTS`, one per shunt element.
    fn shunts(&self, faults: &[FaultSpec], mask: u64) -> Vec<Shunt> {
        let mut out = Vec::new();
        for (idx, f) in faults.iter().enumerate() {
            let Some(node) = self.fault_nodes[idx] else { continue };
            for (slot, sh) in fault_shunts(f, node).into_iter().enumerate() {
                if mask & slot_bit(idx, slot) != 0 {
                    out.push(sh);
                }
            }
        }
        out
    }
}

const SLOTS: usize = 3;

/// Largest number of faults a plant can host.
pub const MAX_FAULTS: usize = 64 / SLOTS;

fn slot_bit(idx: usize, slot: usize) -> u64 {
    1 << (SLOTS * idx + slot)
}

fn fault_bits(idx: usize) -> u64 {
    ((1 << SLOTS) - 1) << (SLOTS * idx)
}

fn fault_shunts(f: &FaultSpec, node: usize) -> Vec<Shunt> {
    let g = 1.0 / f.resistance_pu;
    let base = node * 3;
    if f.kind == FaultKind::PhasePhase {
        vec![Shunt { a: base + f.phases[0], b: Some(base + f.phases[1]), g }]
    } else {
        f.phases.iter().map(|&p| Shunt { a: base + p, b: None, g }).collect()
    }
}

#[derive(Debug, Clone)]
struct Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    x: Vec<f64>,
    e: Vec<f64>,
    vc: Vec<ThreePhase>,
}

/// State and integrator of the circuit.
///
/// The state vector is laid out as `[i_f (3N) | v_pcc (3N) | i_line (3N) | i_grid (3S)]`
/// with S the number of grid segments.
#[derive(Debug, Clone)]
pub struct Plant {
    params: PlantParams,
    topo: Topology,
    faults: Vec<FaultSpec>,
    active: u64,
    /// Slots waiting for their current zero, with the last sampled current.
    releasing: Vec<(usize, usize, f64, f64)>,
    solvers: BTreeMap<u64, Solver>,
    y: Vec<f64>,
    t: f64,
    grid_phase: f64,
    grid_voltage: f64,
    l_f: Vec<f64>,
    c_f: Vec<f64>,
    ws: Workspace,
}

impl Plant {
    /// Plant at the unloaded balanced steady state: capacitor voltages equal to
    /// the grid voltage, line and grid currents zero, filter inductors carrying
    /// the capacitor charging current.
    pub fn new(params: PlantParams, faults: Vec<FaultSpec>) -> Result<Self> {
        let mut plant = Self::zero_state(params, faults)?;
        plant.set_steady_state(0.0);
        Ok(plant)
    }

    pub fn zero_state(params: PlantParams, faults: Vec<FaultSpec>) -> Result<Self> {
        params.validate()?;
        if faults.len() > MAX_FAULTS {
            return Err(Error::invalid("faults", format!("at most {MAX_FAULTS} faults per scenario")));
        }
        for (i, f) in faults.iter().enumerate() {
            f.validate(&format!("faults[{i}]"))?;
        }
        let topo = Topology::new(&params, &faults);
        let omega_n = params.omega_n();
        let n = topo.state_len();
        let m = topo.node_count();
        let mut solvers = BTreeMap::new();
        solvers.insert(0, Solver::new(m, &topo.branches, &topo.shunts(&faults, 0)));
        let ws = Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            x: vec![0.0; m],
            e: vec![0.0; topo.branches.len()],
            vc: vec![ThreePhase::ZERO; params.converters.len()],
        };
        Ok(Self {
            l_f: params.converters.iter().map(|c| c.x_f / omega_n).collect(),
            c_f: params.converters.iter().map(|c| c.b_f / omega_n).collect(),
            grid_phase: params.grid.phase,
            grid_voltage: params.grid.voltage,
            params,
            topo,
            faults,
            active: 0,
            releasing: Vec::new(),
            solvers,
            y: vec![0.0; n],
            t: 0.0,
            ws,
        })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn converter_count(&self) -> usize {
        self.topo.n_conv
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    fn grid_omega(&self) -> f64 {
        2.0 * PI * self.params.grid.frequency_hz
    }

    /// Angle of the infinite-bus phase-a voltage at time `t`.
    pub fn grid_angle(&self, t: f64) -> f64 {
        self.grid_omega() * t + self.grid_phase
    }

    pub fn grid_voltage(&self) -> f64 {
        self.grid_voltage
    }

    /// Shifts the infinite-bus phase by `delta` radians.
    pub fn step_grid_phase(&mut self, delta: f64) {
        self.grid_phase += delta;
    }

    pub fn set_grid_voltage(&mut self, v: f64) {
        self.grid_voltage = v;
    }

    fn charging_current(&self, k: usize) -> Vec2 {
        let c = &self.params.converters[k];
        let w = self.grid_omega() / self.params.omega_n();
        Vec2::new(0.0, c.b_f * w) * self.grid_voltage
    }

    /// Bridge voltage that holds converter `k` at the unloaded steady state.
    pub fn equilibrium_bridge_voltage(&self, k: usize, t: f64) -> ThreePhase {
        let c = &self.params.converters[k];
        let w = self.grid_omega() / self.params.omega_n();
        let e = Vec2::new(self.grid_voltage, 0.0) + Vec2::new(c.r_f, c.x_f * w) * self.charging_current(k);
        ThreePhase::balanced(e.norm(), self.grid_angle(t) + e.arg())
    }

    /// Overwrites the state with the unloaded steady state at time `t`.
    pub fn set_steady_state(&mut self, t: f64) {
        self.t = t;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        let n = self.topo.n_conv;
        let th = self.grid_angle(t);
        for k in 0..n {
            let i = self.charging_current(k);
            let v = ThreePhase::balanced(self.grid_voltage, th);
            let ia = ThreePhase::balanced(i.norm(), th + i.arg());
            self.y[3 * k..3 * k + 3].copy_from_slice(&ia.to_array());
            self.y[3 * n + 3 * k..3 * n + 3 * k + 3].copy_from_slice(&v.to_array());
        }
    }

    /// Bit `idx` is set while any shunt of fault `idx` conducts.
    pub fn active_faults(&self) -> u64 {
        (0..self.faults.len()).filter(|&i| self.active & fault_bits(i) != 0).fold(0, |m, i| m | 1 << i)
    }

    /// Switches every shunt of fault `idx` on or off at once. Branch currents
    /// are projected onto the new constraint set so that series inductors
    /// never carry different currents, which conserves flux linkage across
    /// the switching instant.
    pub fn set_fault_active(&mut self, idx: usize, on: bool) {
        self.releasing.retain(|r| r.0 != idx);
        let bits = fault_bits(idx);
        self.set_mask(if on { self.active | bits } else { self.active & !bits });
    }

    /// Opens the shunts of fault `idx` one by one, each at the first zero
    /// crossing of its own current, or after one grid period at the latest.
    pub fn release_fault(&mut self, idx: usize) {
        let now = self.shunt_slot_currents(idx);
        for (slot, i) in now.into_iter().enumerate() {
            if self.active & slot_bit(idx, slot) != 0 && !self.releasing.iter().any(|r| r.0 == idx && r.1 == slot) {
                self.releasing.push((idx, slot, i, self.t));
            }
        }
    }

    fn set_mask(&mut self, mask: u64) {
        if mask == self.active {
            return;
        }
        self.active = mask;
        let solver = self.solver_for(mask);
        let off = self.topo.line_offset();
        solver.project(&mut self.y[off..]);
    }

    /// Current through each shunt element of fault `idx`, in slot order.
    fn shunt_slot_currents(&self, idx: usize) -> Vec<f64> {
        let Some(node) = self.topo.fault_nodes[idx] else { return Vec::new() };
        let x = self.node_voltages();
        fault_shunts(&self.faults[idx], node)
            .iter()
            .map(|sh| sh.g * (x[sh.a] - sh.b.map_or(0.0, |b| x[b])))
            .collect()
    }

    fn advance_releases(&mut self) {
        if self.releasing.is_empty() {
            return;
        }
        let period = 1.0 / self.params.grid.frequency_hz;
        let mut mask = self.active;
        let mut keep = Vec::new();
        for (idx, slot, prev, since) in std::mem::take(&mut self.releasing) {
            let now = self.shunt_slot_currents(idx)[slot];
            if now == 0.0 || now.signum() != prev.signum() || self.t - since >= period {
                mask &= !slot_bit(idx, slot);
            } else {
                keep.push((idx, slot, now, since));
            }
        }
        self.releasing = keep;
        self.set_mask(mask);
    }

    /// Activates exactly the faults whose window contains `t`.
    pub fn apply_fault_schedule(&mut self, t: f64) {
        for idx in 0..self.faults.len() {
            let on = self.faults[idx].is_active_at(t);
            self.set_fault_active(idx, on);
        }
    }

    fn solver_for(&mut self, mask: u64) -> Solver {
        if !self.solvers.contains_key(&mask) {
            let shunts = self.topo.shunts(&self.faults, mask);
            let s = Solver::new(self.topo.node_count(), &self.topo.branches, &shunts);
            self.solvers.insert(mask, s);
        }
        self.solvers[&mask].clone()
    }

    pub fn measure(&self) -> Measurements {
        let n = self.topo.n_conv;
        let tp = |o: usize| ThreePhase::new(self.y[o], self.y[o + 1], self.y[o + 2]);
        Measurements {
            converters: (0..n)
                .map(|k| ConverterMeasurement { v_pcc: tp(3 * n + 3 * k), i_c: tp(3 * k) })
                .collect(),
            i_g: tp(self.topo.segment_offset()),
        }
    }

    /// Stored magnetic and electric energy of all elements.
    pub fn energy(&self) -> f64 {
        let n = self.topo.n_conv;
        let mut w = 0.0;
        for k in 0..n {
            for p in 0..3 {
                w += 0.5 * self.l_f[k] * self.y[3 * k + p].powi(2);
                w += 0.5 * self.c_f[k] * self.y[3 * n + 3 * k + p].powi(2);
            }
        }
        let off = self.topo.line_offset();
        for (b, br) in self.topo.branches.iter().enumerate() {
            w += 0.5 * br.l * self.y[off + b].powi(2);
        }
        w
    }

    fn fill_known(&self, t: f64, y: &[f64], e: &mut [f64]) {
        let n = self.topo.n_conv;
        e.iter_mut().for_each(|v| *v = 0.0);
        e[..3 * n].copy_from_slice(&y[3 * n..6 * n]);
        let emf = ThreePhase::balanced(self.grid_voltage, self.grid_angle(t)).to_array();
        let last = self.topo.branches.len() - 3;
        for p in 0..3 {
            e[last + p] = -emf[p];
        }
    }

    /// Voltages of the common bus and interior grid nodes, node-major.
    pub fn node_voltages(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.topo.branches.len()];
        let mut x = vec![0.0; self.topo.node_count()];
        self.fill_known(self.t, &self.y, &mut e);
        let off = self.topo.line_offset();
        self.solvers[&self.active].solve(&self.y[off..], &e, &mut x);
        x
    }

    pub fn bus_voltage(&self) -> ThreePhase {
        let x = self.node_voltages();
        ThreePhase::new(x[0], x[1], x[2])
    }

    /// Voltage of the node hosting fault `idx`; the infinite-bus voltage for a
    /// fault sitting on the ideal source.
    pub fn fault_node_voltage(&self, idx: usize) -> ThreePhase {
        match self.topo.fault_nodes[idx] {
            Some(node) => {
                let x = self.node_voltages();
                ThreePhase::new(x[3 * node], x[3 * node + 1], x[3 * node + 2])
            }
            None => ThreePhase::balanced(self.grid_voltage, self.grid_angle(self.t)),
        }
    }

    /// Current leaving the node hosting fault `idx` through its shunts, summed
    /// over every active fault at that node.
    pub fn fault_node_shunt_current(&self, idx: usize) -> ThreePhase {
        match self.topo.fault_nodes[idx] {
            Some(node) => {
                let g = self.solvers[&self.active].shunt_currents(&self.node_voltages());
                ThreePhase::new(g[3 * node], g[3 * node + 1], g[3 * node + 2])
            }
            None => ThreePhase::ZERO,
        }
    }

    /// Worst Kirchhoff current-law mismatch over the grid nodes and the
    /// floating converter neutrals.
    pub fn kcl_residual(&self) -> f64 {
        let x = self.node_voltages();
        let off = self.topo.line_offset();
        let mut r = self.solvers[&self.active].kcl_residual(&self.y[off..], &x);
        for k in 0..self.topo.n_conv {
            r = r.max((self.y[3 * k] + self.y[3 * k + 1] + self.y[3 * k + 2]).abs());
        }
        r
    }

    fn deriv(&mut self, solver: &Solver, t: f64, y_src: Src, dy_dst: usize) {
        let n = self.topo.n_conv;
        let off = self.topo.line_offset();
        let mut e = std::mem::take(&mut self.ws.e);
        let mut x = std::mem::take(&mut self.ws.x);
        let mut dy = std::mem::take(&mut self.ws.k[dy_dst]);
        {
            let y: &[f64] = match y_src {
                Src::State => &self.y,
                Src::Tmp => &self.ws.tmp,
            };
            self.fill_known(t, y, &mut e);
            solver.solve(&y[off..], &e, &mut x);

            for k in 0..n {
                let c = &self.params.converters[k];
                let vc = self.ws.vc[k].to_array();
                let mut drive = [0.0; 3];
                for p in 0..3 {
                    drive[p] = vc[p] - c.r_f * y[3 * k + p] - y[3 * n + 3 * k + p];
                }
                let vn = (drive[0] + drive[1] + drive[2]) / 3.0;
                for p in 0..3 {
                    dy[3 * k + p] = (drive[p] - vn) / self.l_f[k];
                    let il = y[off + 3 * k + p];
                    dy[3 * n + 3 * k + p] = (y[3 * k + p] - il) / self.c_f[k];
                }
            }
            for (b, br) in self.topo.branches.iter().enumerate() {
                let mut v = e[b] - br.r * y[off + b];
                if let Some(f) = br.from {
                    v += x[f];
                }
                if let Some(to) = br.to {
                    v -= x[to];
                }
                dy[off + b] = v / br.l;
            }
        }
        self.ws.e = e;
        self.ws.x = x;
        self.ws.k[dy_dst] = dy;
    }

    /// Advances one RK4 step with bridge voltages supplied as functions of
    /// converter index and time.
    pub fn step_with<F>(&mut self, dt: f64, v_c: F) -> Result<()>
    where
        F: Fn(usize, f64) -> ThreePhase,
    {
        let solver = self.solvers[&self.active].clone();
        let t0 = self.t;
        let len = self.y.len();
        let stages = [(0.0, 0usize), (0.5, 1), (0.5, 2), (1.0, 3)];
        for (s, &(frac, dst)) in stages.iter().enumerate() {
            let ts = t0 + frac * dt;
            for k in 0..self.topo.n_conv {
                self.ws.vc[k] = v_c(k, ts);
            }
            if s == 0 {
                self.deriv(&solver, ts, Src::State, dst);
            } else {
                for i in 0..len {
                    self.ws.tmp[i] = self.y[i] + frac * dt * self.ws.k[s - 1][i];
                }
                self.deriv(&solver, ts, Src::Tmp, dst);
            }
        }
        let [k1, k2, k3, k4] = &self.ws.k;
        for i in 0..len {
            self.y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.t = t0 + dt;
        self.advance_releases();
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time_s: self.t,
                detail: format!("plant state element {i} is {}", self.y[i]),
            });
        }
        Ok(())
    }

    /// Advances one RK4 step with bridge voltages held constant.
    pub fn step(&mut self, v_c: &[ThreePhase], dt: f64) -> Result<()> {
        let held = v_c.to_vec();
        self.step_with(dt, move |k, _| held[k])
    }
}

#[derive(Clone, Copy)]
enum Src {
    State,
    Tmp,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::park;

    fn plant(n: usize, faults: Vec<FaultSpec>) -> Plant {
        Plant::new(PlantParams::new(n), faults).unwrap()
    }

    const DT: f64 = 1.0 / 14000.0 / 14.0;

    #[test]
    fn zero_state_is_zero() {
        let p = Plant::zero_state(PlantParams::new(2), vec![]).unwrap();
        assert!(p.state().iter().all(|&v| v == 0.0));
        let m = p.measure();
        assert_eq!(m.converters.len(), 2);
        assert_eq!(m.i_g, ThreePhase::ZERO);
    }

    #[test]
    fn sizes_follow_converter_count() {
        let p = plant(2, vec![]);
        assert_eq!(p.state().len(), 6 * 2 + 3 * 2 + 3);
        let f = FaultSpec::new(FaultKind::ThreePhase, "abc", 0.01, 0.5, 0.1, 0.2).unwrap();
        let p = plant(2, vec![f]);
        assert_eq!(p.state().len(), 6 * 2 + 3 * 2 + 6);
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let mut p = plant(2, vec![]);
        let reference = p.clone();
        for step in 0..200 {
            let r = reference.clone();
            p.step_with(DT, |k, t| r.equilibrium_bridge_voltage(k, t)).unwrap();
            let mut expect = reference.clone();
            expect.set_steady_state((step + 1) as f64 * DT);
            let worst = p
                .state()
                .iter()
                .zip(expect.state())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(worst < 1e-9, "step {step}: {worst}");
        }
    }

    #[test]
    fn no_load_voltage_is_nominal() {
        let mut p = plant(1, vec![]);
        let r = p.clone();
        let steps = (0.1 / DT) as usize;
        for _ in 0..steps {
            p.step_with(DT, |k, t| r.equilibrium_bridge_voltage(k, t)).unwrap();
        }
        let v = park(p.grid_angle(p.time()), p.measure().converters[0].v_pcc);
        assert!((v.norm() - 1.0).abs() < 0.05);
    }

    #[test]
    fn passive_decay_without_source() {
        let mut params = PlantParams::new(2);
        params.grid.voltage = 0.0;
        let mut p = Plant::new(params.clone(), vec![]).unwrap();
        // start from an arbitrary energised state
        p.set_grid_voltage(1.0);
        p.set_steady_state(0.0);
        p.set_grid_voltage(0.0);
        let mut w = p.energy();
        assert!(w > 0.0);
        let zero = [ThreePhase::ZERO; 2];
        for _ in 0..20_000 {
            p.step(&zero, DT).unwrap();
            let w1 = p.energy();
            assert!(w1 <= w * (1.0 + 1e-12), "{w1} > {w}");
            w = w1;
        }
    }

    #[test]
    fn bolted_fault_at_bus_collapses_node_voltage() {
        let f = FaultSpec::new(FaultKind::ThreePhase, "abc", 0.01, 1.0, 0.0, 1.0).unwrap();
        let mut p = plant(2, vec![f]);
        p.set_fault_active(0, true);
        let per = (0.02 / DT).round() as usize;
        let mut worst: f64 = 0.0;
        for step in 0..12 * per {
            p.step(&[ThreePhase::ZERO; 2], DT).unwrap();
            assert!(p.kcl_residual() < 1e-9);
            if step >= 10 * per {
                worst = worst.max(crate::frames::clarke(p.fault_node_voltage(0)).norm());
            }
        }
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn release_opens_each_phase_at_current_zero() {
        let f = FaultSpec::new(FaultKind::ThreePhase, "abc", 0.01, 0.5, 0.0, 1.0).unwrap();
        let mut p = plant(2, vec![f]);
        let held = [ThreePhase::ZERO; 2];
        p.set_fault_active(0, true);
        let per = (0.02 / DT).round() as usize;
        for _ in 0..20 * per {
            p.step(&held, DT).unwrap();
        }
        p.release_fault(0);
        let mut open_after = None;
        let mut peak: f64 = 0.0;
        for step in 0..per {
            p.step(&held, DT).unwrap();
            assert!(p.kcl_residual() < 1e-9);
            peak = peak.max(p.measure().converters[0].v_pcc.max_abs());
            if p.active_faults() == 0 && open_after.is_none() {
                open_after = Some(step);
            }
        }
        // the last phase interrupts within half a cycle plus one step
        assert!(open_after.unwrap() <= per / 2 + 1, "{open_after:?}");
        assert!(peak < 2.0, "{peak}");
    }

    #[test]
    fn single_phase_fault_leaves_other_phases() {
        let f = FaultSpec::new(FaultKind::SinglePhaseGround, "a", 1e-6, 0.5, 0.0, 1.0).unwrap();
        let mut p = plant(1, vec![f]);
        let before = p.fault_node_voltage(0);
        p.set_fault_active(0, true);
        let after = p.fault_node_voltage(0);
        assert!(after.a.abs() < 1e-4, "{after:?}");
        // with no current flowing yet the healthy phases still see the pass-through voltage
        assert!((after.b - before.b).abs() < 1e-9);
        assert!((after.c - before.c).abs() < 1e-9);
    }

    #[test]
    fn phase_phase_fault_kcl() {
        let f = FaultSpec::new(FaultKind::PhasePhase, "ab", 0.01, 0.5, 0.0, 1.0).unwrap();
        let mut p = plant(2, vec![f]);
        p.set_fault_active(0, true);
        let r = p.clone();
        for _ in 0..1000 {
            p.step_with(DT, |k, t| r.equilibrium_bridge_voltage(k, t)).unwrap();
            let v = p.fault_node_voltage(0);
            let i = p.fault_node_shunt_current(0);
            let expect = (v.a - v.b) / 0.01;
            assert!((i.a - expect).abs() < 1e-9);
            assert!((i.b + expect).abs() < 1e-9);
            assert!(i.c.abs() < 1e-12);
            assert!(p.kcl_residual() < 1e-9);
        }
    }

    #[test]
    fn unfaulted_pass_through_node() {
        let f = FaultSpec::new(FaultKind::ThreePhase, "abc", 0.01, 0.4, 0.0, 1.0).unwrap();
        let p = plant(1, vec![f]);
        let v = p.fault_node_voltage(0);
        let emf = ThreePhase::balanced(1.0, p.grid_angle(0.0));
        assert!((v - emf).max_abs() < 1e-12);
    }

    #[test]
    fn clearing_restores_series_current() {
        let f = FaultSpec::new(FaultKind::PhasePhaseGround, "bc", 0.01, 0.5, 0.0, 1.0).unwrap();
        let mut p = plant(1, vec![f]);
        p.set_fault_active(0, true);
        let r = p.clone();
        for _ in 0..500 {
            p.step_with(DT, |k, t| r.equilibrium_bridge_voltage(k, t)).unwrap();
        }
        p.set_fault_active(0, false);
        let off = 9;
        let s = p.state();
        for ph in 0..3 {
            assert!((s[off + ph] - s[off + 3 + ph]).abs() < 1e-12);
        }
        assert!(p.kcl_residual() < 1e-9);
    }

    #[test]
    fn three_phase_fault_is_symmetric() {
        // Rotating the operating point by one phase must permute the response.
        let run = |phase: f64| {
            let f = FaultSpec::new(FaultKind::ThreePhase, "abc", 0.01, 0.5, 0.0, 1.0).unwrap();
            let mut params = PlantParams::new(2);
            params.grid.phase = phase;
            let mut p = Plant::new(params, vec![f]).unwrap();
            let r = p.clone();
            let mut out = Vec::new();
            for step in 0..3000 {
                if step == 100 {
                    p.set_fault_active(0, true);
                }
                p.step_with(DT, |k, t| r.equilibrium_bridge_voltage(k, t)).unwrap();
                let m = p.measure();
                out.push([m.converters[0].i_c, m.converters[1].i_c, m.i_g]);
            }
            out
        };
        let base = run(0.3);
        let shifted = run(0.3 - 2.0 * PI / 3.0);
        for (x, y) in base.iter().zip(&shifted) {
            for (u, v) in x.iter().zip(y) {
                assert!((u.b - v.a).abs() < 1e-6);
                assert!((u.c - v.b).abs() < 1e-6);
                assert!((u.a - v.c).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rk4_order() {
        let run = |dt: f64| {
            let mut p = plant(1, vec![]);
            let r = p.clone();
            let steps = (0.02 / dt).round() as usize;
            for _ in 0..steps {
                p.step_with(dt, |k, t| r.equilibrium_bridge_voltage(k, t) * 1.05).unwrap();
            }
            p.state().to_vec()
        };
        let h = 2e-5;
        let a = run(h);
        let b = run(h / 2.0);
        let c = run(h / 4.0);
        let d1 = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let d2 = b.iter().zip(&c).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let order = (d1 / d2).log2();
        assert!(order >= 3.5, "observed order {order}");
    }

    #[test]
    fn rejects_bad_elements() {
        let mut params = PlantParams::new(1);
        params.converters[0].x_f = 0.0;
        assert!(Plant::new(params, vec![]).is_err());
        let mut params = PlantParams::new(1);
        params.grid.r = -1.0;
        assert!(Plant::new(params, vec![]).is_err());
    }

    #[test]
    fn balanced_power_is_constant() {
        let p = plant(1, vec![]);
        let mut q = p.clone();
        let mut ps = Vec::new();
        for _ in 0..100 {
            q.step_with(DT, |k, t| p.equilibrium_bridge_voltage(k, t)).unwrap();
            let m = &q.measure().converters[0];
            ps.push(m.v_pcc.a * m.i_c.a + m.v_pcc.b * m.i_c.b + m.v_pcc.c * m.i_c.c);
        }
        let lo = ps.iter().cloned().fold(f64::MAX, f64::min);
        let hi = ps.iter().cloned().fold(f64::MIN, f64::max);
        assert!(hi - lo < 1e-6);
    }
}
