//! Scenario documents: schema, defaults, overrides and validation.

use serde::Deserialize;
use toml::{Table, Value};

use crate::control::{ControlParams, Setpoint};
use crate::error::{Error, Result};
use crate::plant::{fault::parse_phases, Base, ConverterCircuit, FaultKind, FaultSpec, GridParams, PlantParams};

fn default_one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    duration_s: f64,
    #[serde(default)]
    plant_substeps: Option<usize>,
    #[serde(default)]
    dt_plant_s: Option<f64>,
    #[serde(default = "default_one")]
    decimation: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    converter_count: Option<usize>,
    #[serde(default)]
    base: BaseDoc,
    #[serde(default)]
    grid: GridDoc,
    #[serde(default)]
    plant: Table,
    #[serde(default)]
    control: Table,
    #[serde(default)]
    setpoints: Option<SetpointsDoc>,
    #[serde(default)]
    converter: Vec<ConverterDoc>,
    #[serde(default)]
    faults: Vec<FaultDoc>,
    #[serde(default)]
    grid_events: Vec<GridEventDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BaseDoc {
    power_va: f64,
    voltage_v: f64,
    frequency_hz: f64,
}

impl Default for BaseDoc {
    fn default() -> Self {
        let b = Base::default();
        Self { power_va: b.power_va, voltage_v: b.voltage_v, frequency_hz: b.frequency_hz }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridDoc {
    scr: f64,
    x_over_r: f64,
    r_pu: Option<f64>,
    x_pu: Option<f64>,
    voltage_pu: f64,
    frequency_hz: Option<f64>,
    phase_rad: f64,
}

impl Default for GridDoc {
    fn default() -> Self {
        Self {
            scr: 5.0,
            x_over_r: 10.0,
            r_pu: None,
            x_pu: None,
            voltage_pu: 1.0,
            frequency_hz: None,
            phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantInit {
    SteadyState,
    Zero,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlantDoc {
    r_f_pu: f64,
    x_f_pu: f64,
    b_f_pu: f64,
    r_l_pu: f64,
    x_l_pu: f64,
    init: PlantInit,
}

impl Default for PlantDoc {
    fn default() -> Self {
        let c = ConverterCircuit::default();
        Self {
            r_f_pu: c.r_f,
            x_f_pu: c.x_f,
            b_f_pu: c.b_f,
            r_l_pu: c.r_l,
            x_l_pu: c.x_l,
            init: PlantInit::SteadyState,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SetpointsDoc {
    p_initial_pu: f64,
    q_initial_pu: f64,
    ramp_time_s: f64,
    steps: Vec<StepDoc>,
}

impl Default for SetpointsDoc {
    fn default() -> Self {
        Self { p_initial_pu: 0.0, q_initial_pu: 0.0, ramp_time_s: 0.2, steps: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDoc {
    time_s: f64,
    #[serde(default)]
    p_pu: Option<f64>,
    #[serde(default)]
    q_pu: Option<f64>,
    #[serde(default)]
    ramp_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConverterDoc {
    #[serde(default)]
    control: Table,
    #[serde(default)]
    plant: Table,
    #[serde(default)]
    setpoints: Option<SetpointsDoc>,
}

fn default_r_fault() -> f64 {
    0.01
}

fn default_location() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultDoc {
    kind: FaultKind,
    #[serde(default)]
    phases: Option<String>,
    #[serde(default = "default_r_fault")]
    r_fault_pu: f64,
    #[serde(default = "default_location")]
    location: f64,
    start_s: f64,
    clear_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridEventDoc {
    time_s: f64,
    #[serde(default)]
    phase_step_rad: f64,
    #[serde(default)]
    voltage_pu: Option<f64>,
}

/// One change of the active/reactive setpoint, reached linearly over `ramp_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetpointStep {
    pub time_s: f64,
    pub p: f64,
    pub q: f64,
    pub ramp_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetpointSchedule {
    pub initial: Setpoint,
    /// Sorted by time.
    pub steps: Vec<SetpointStep>,
}

impl SetpointSchedule {
    pub fn constant(sp: Setpoint) -> Self {
        Self { initial: sp, steps: Vec::new() }
    }

    pub fn at(&self, t: f64) -> Setpoint {
        let mut cur = self.initial;
        for s in &self.steps {
            if t < s.time_s {
                break;
            }
            let frac = if s.ramp_s > 0.0 { ((t - s.time_s) / s.ramp_s).min(1.0) } else { 1.0 };
            cur = Setpoint { p: cur.p + frac * (s.p - cur.p), q: cur.q + frac * (s.q - cur.q) };
        }
        cur
    }

    /// Time at which the last ramp reaches its target.
    pub fn settled_after(&self) -> f64 {
        self.steps.iter().map(|s| s.time_s + s.ramp_s).fold(0.0, f64::max)
    }

    pub fn final_value(&self) -> Setpoint {
        self.at(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConverterConfig {
    pub control: ControlParams,
    pub setpoints: SetpointSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridEvent {
    pub time_s: f64,
    pub phase_step_rad: f64,
    pub voltage_pu: Option<f64>,
}

/// Fully validated scenario with every default applied.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: Option<String>,
    pub description: Option<String>,
    pub duration_s: f64,
    pub plant_substeps: usize,
    pub decimation: usize,
    pub seed: u64,
    pub plant: PlantParams,
    pub plant_init: PlantInit,
    pub converters: Vec<ConverterConfig>,
    pub faults: Vec<FaultSpec>,
    pub grid_events: Vec<GridEvent>,
    /// The document after overrides, as it was validated.
    pub document: Table,
}

impl Scenario {
    pub fn control_period(&self) -> f64 {
        self.converters[0].control.t_c()
    }

    pub fn dt_plant(&self) -> f64 {
        self.control_period() / self.plant_substeps as f64
    }

    /// Number of controller invocations over the run.
    pub fn control_steps(&self) -> usize {
        let rate = self.converters[0].control.control_rate_hz;
        (self.duration_s * rate * (1.0 + 1e-12)).floor() as usize
    }

    pub fn grid_frequency_hz(&self) -> f64 {
        self.plant.grid.frequency_hz
    }

    /// Earliest fault start and latest fault clearing time.
    pub fn fault_interval(&self) -> Option<(f64, f64)> {
        let start = self.faults.iter().map(|f| f.start_s).reduce(f64::min)?;
        let clear = self.faults.iter().map(|f| f.clear_s).reduce(f64::max)?;
        Some((start, clear))
    }
}

/// Parses a scenario document and applies dotted-key overrides.
pub fn load_scenario(text: &str, overrides: &[String]) -> Result<Scenario> {
    let mut doc: Table = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    from_table(doc)
}

/// Applies `a.b.c=value` to a document. The value is read as a TOML literal
/// and falls back to a plain string.
pub fn apply_override(doc: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid(assignment, "override must have the form key=value"))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid(path, "empty key segment"));
    }
    set_path(doc, &parts, value, path)
}

fn set_path(table: &mut Table, parts: &[&str], value: Value, path: &str) -> Result<()> {
    let (head, rest) = parts.split_first().expect("non-empty path");
    if rest.is_empty() {
        table.insert(head.to_string(), value);
        return Ok(());
    }
    let slot = table.entry(head.to_string()).or_insert_with(|| Value::Table(Table::new()));
    set_in_value(slot, rest, value, path)
}

fn set_in_value(slot: &mut Value, parts: &[&str], value: Value, path: &str) -> Result<()> {
    match slot {
        Value::Table(t) => set_path(t, parts, value, path),
        Value::Array(a) => {
            let (head, rest) = parts.split_first().expect("non-empty path");
            let idx: usize = head
                .parse()
                .map_err(|_| Error::invalid(path, format!("`{head}` is not an array index")))?;
            let len = a.len();
            let item = a
                .get_mut(idx)
                .ok_or_else(|| Error::invalid(path, format!("index {idx} out of range (length {len})")))?;
            if rest.is_empty() {
                *item = value;
                Ok(())
            } else {
                set_in_value(item, rest, value, path)
            }
        }
        _ => Err(Error::invalid(path, "cannot descend into a non-table value")),
    }
}

fn merge(base: &Table, over: &Table) -> Table {
    let mut out = base.clone();
    for (k, v) in over {
        match (out.get_mut(k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => *a = merge(a, b),
            _ => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    out
}

fn de<T: serde::de::DeserializeOwned>(t: Table, section: &str) -> Result<T> {
    T::deserialize(Value::Table(t)).map_err(|e| Error::Parse(format!("[{section}] {e}")))
}

fn check_time(key: &str, t: f64, duration: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0 && t <= duration) {
        return Err(Error::invalid(key, format!("must lie in [0, duration_s = {duration}]")));
    }
    Ok(())
}

fn schedule(doc: &SetpointsDoc, key: &str, duration: f64) -> Result<SetpointSchedule> {
    if !(doc.ramp_time_s >= 0.0 && doc.ramp_time_s.is_finite()) {
        return Err(Error::invalid(format!("{key}.ramp_time_s"), "must be >= 0"));
    }
    let mut steps = Vec::new();
    let (mut p, mut q) = (doc.p_initial_pu, doc.q_initial_pu);
    let (mut prev, mut last) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (i, s) in doc.steps.iter().enumerate() {
        let k = format!("{key}.steps[{i}]");
        check_time(&format!("{k}.time_s"), s.time_s, duration)?;
        if s.time_s < prev {
            return Err(Error::invalid(format!("{k}.time_s"), "steps must be in chronological order"));
        }
        let ramp = s.ramp_s.unwrap_or(doc.ramp_time_s);
        if !(ramp >= 0.0 && ramp.is_finite()) {
            return Err(Error::invalid(format!("{k}.ramp_s"), "must be >= 0"));
        }
        if s.time_s < last {
            return Err(Error::invalid(format!("{k}.time_s"), "overlaps the previous ramp"));
        }
        prev = s.time_s;
        last = s.time_s + ramp;
        p = s.p_pu.unwrap_or(p);
        q = s.q_pu.unwrap_or(q);
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::invalid(k, "setpoints must be finite"));
        }
        steps.push(SetpointStep { time_s: s.time_s, p, q, ramp_s: ramp });
    }
    Ok(SetpointSchedule { initial: Setpoint { p: doc.p_initial_pu, q: doc.q_initial_pu }, steps })
}

fn from_table(table: Table) -> Result<Scenario> {
    let doc: Document = de(table.clone(), "root")?;
    let duration = doc.duration_s;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration_s", "must be a finite value >= 0"));
    }
    if doc.decimation == 0 {
        return Err(Error::invalid("decimation", "must be >= 1"));
    }
    let count = match (doc.converter_count, doc.converter.len()) {
        (Some(0), _) => return Err(Error::invalid("converter_count", "must be >= 1")),
        (Some(n), 0) => n,
        (Some(n), m) if n != m => {
            return Err(Error::invalid(
                "converter_count",
                format!("{n} does not match the {m} [[converter]] entries"),
            ))
        }
        (_, 0) => 1,
        (_, m) => m,
    };

    let base = Base {
        power_va: doc.base.power_va,
        voltage_v: doc.base.voltage_v,
        frequency_hz: doc.base.frequency_hz,
    };
    let g = &doc.grid;
    let mut grid = match (g.r_pu, g.x_pu) {
        (Some(r), Some(x)) => GridParams { r, x, ..GridParams::default() },
        (None, None) => {
            if !(g.scr > 0.0 && g.x_over_r > 0.0) {
                return Err(Error::invalid("grid.scr", "scr and x_over_r must be > 0"));
            }
            // short-circuit ratio refers to the combined rating of all converters
            GridParams::from_scr(g.scr * count as f64, g.x_over_r)
        }
        _ => return Err(Error::invalid("grid.r_pu", "r_pu and x_pu must be given together")),
    };
    grid.voltage = g.voltage_pu;
    grid.frequency_hz = g.frequency_hz.unwrap_or(base.frequency_hz);
    grid.phase = g.phase_rad;

    let mut circuits = Vec::with_capacity(count);
    let mut converters = Vec::with_capacity(count);
    let mut init = None;
    let global_sp = doc.setpoints.clone().unwrap_or_default();
    for k in 0..count {
        let over = doc.converter.get(k);
        let plant_t = over.map(|c| merge(&doc.plant, &c.plant)).unwrap_or_else(|| doc.plant.clone());
        let pd: PlantDoc = de(plant_t, &format!("converter[{k}].plant"))?;
        if *init.get_or_insert(pd.init) != pd.init {
            return Err(Error::invalid(format!("converter[{k}].plant.init"), "all converters must share init"));
        }
        let circuit = ConverterCircuit { r_f: pd.r_f_pu, x_f: pd.x_f_pu, b_f: pd.b_f_pu, r_l: pd.r_l_pu, x_l: pd.x_l_pu };
        let control_t = over.map(|c| merge(&doc.control, &c.control)).unwrap_or_else(|| doc.control.clone());
        let mut control: ControlParams = de(control_t, "control")?;
        control.omega_n = base.omega();
        control.r_f = circuit.r_f;
        control.x_f = circuit.x_f;
        let prefix = if doc.converter.is_empty() { "control.".to_string() } else { format!("converter[{k}].control.") };
        control.validate(&prefix)?;
        let sp_doc = over.and_then(|c| c.setpoints.clone()).unwrap_or_else(|| global_sp.clone());
        let sp_key = if over.and_then(|c| c.setpoints.as_ref()).is_some() {
            format!("converter[{k}].setpoints")
        } else {
            "setpoints".to_string()
        };
        let setpoints = schedule(&sp_doc, &sp_key, duration)?;
        circuits.push(circuit);
        converters.push(ConverterConfig { control, setpoints });
    }
    let rate = converters[0].control.control_rate_hz;
    if converters.iter().any(|c| c.control.control_rate_hz != rate) {
        return Err(Error::invalid("control.control_rate_hz", "all converters must share the control rate"));
    }
    let plant = PlantParams { base, converters: circuits, grid };
    plant.validate()?;

    let t_c = 1.0 / rate;
    let substeps = match (doc.plant_substeps, doc.dt_plant_s) {
        (Some(_), Some(_)) => {
            return Err(Error::invalid("dt_plant_s", "give either plant_substeps or dt_plant_s, not both"))
        }
        (Some(0), None) => return Err(Error::invalid("plant_substeps", "must be >= 1")),
        (Some(n), None) => n,
        (None, Some(dt)) => {
            if !(dt > 0.0 && dt.is_finite() && dt <= t_c) {
                return Err(Error::invalid("dt_plant_s", "must lie in (0, control period]"));
            }
            let n = (t_c / dt).round();
            if ((t_c / n) - dt).abs() > 1e-12 * dt {
                return Err(Error::invalid(
                    "dt_plant_s",
                    format!("must divide the control period {t_c} s within 1e-12 relative error"),
                ));
            }
            n as usize
        }
        (None, None) => 14,
    };

    let mut faults = Vec::new();
    for (i, f) in doc.faults.iter().enumerate() {
        let key = format!("faults[{i}]");
        let phases = match &f.phases {
            Some(p) => parse_phases(p).map_err(|_| Error::invalid(format!("{key}.phases"), "unknown or repeated phase"))?,
            None => parse_phases(f.kind.default_phases())?,
        };
        let spec = FaultSpec {
            kind: f.kind,
            phases,
            resistance_pu: f.r_fault_pu,
            location: f.location,
            start_s: f.start_s,
            clear_s: f.clear_s,
        };
        spec.validate(&key)?;
        check_time(&format!("{key}.start_s"), f.start_s, duration)?;
        check_time(&format!("{key}.clear_s"), f.clear_s, duration)?;
        faults.push(spec);
    }
    if faults.len() > crate::plant::MAX_FAULTS {
        return Err(Error::invalid("faults", format!("at most {} faults", crate::plant::MAX_FAULTS)));
    }
    let mut grid_events = Vec::new();
    for (i, e) in doc.grid_events.iter().enumerate() {
        let key = format!("grid_events[{i}]");
        check_time(&format!("{key}.time_s"), e.time_s, duration)?;
        if !e.phase_step_rad.is_finite() {
            return Err(Error::invalid(format!("{key}.phase_step_rad"), "must be finite"));
        }
        if let Some(v) = e.voltage_pu {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{key}.voltage_pu"), "must be >= 0"));
            }
        }
        grid_events.push(GridEvent { time_s: e.time_s, phase_step_rad: e.phase_step_rad, voltage_pu: e.voltage_pu });
    }
    grid_events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

    Ok(Scenario {
        name: doc.name,
        description: doc.description,
        duration_s: duration,
        plant_substeps: substeps,
        decimation: doc.decimation,
        seed: doc.seed,
        plant,
        plant_init: init.unwrap_or(PlantInit::SteadyState),
        converters,
        faults,
        grid_events,
        document: table,
    })
}
