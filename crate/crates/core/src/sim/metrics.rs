//! Scalar metrics extracted from a trajectory.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::frames::{symmetrical_components, SequencePair, Vec2};
use crate::sim::run::Trajectory;
use crate::sim::scenario::{Scenario, SetpointSchedule};

/// What the metrics need to know about the scenario besides the samples.
#[derive(Debug, Clone)]
pub struct MetricsContext {
    pub frequency_hz: f64,
    pub fault: Option<(f64, f64)>,
    pub setpoints: Vec<SetpointSchedule>,
    /// Filter impedance of each converter at the grid frequency, used to
    /// reconstruct the bridge terminal voltage.
    pub filters: Vec<Vec2>,
}

impl MetricsContext {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            frequency_hz: s.grid_frequency_hz(),
            fault: s.fault_interval(),
            setpoints: s.converters.iter().map(|c| c.setpoints.clone()).collect(),
            filters: s
                .plant
                .converters
                .iter()
                .map(|c| Vec2::new(c.r_f, c.x_f * s.grid_frequency_hz() / s.plant.base.frequency_hz))
                .collect(),
        }
    }
}

pub type Metrics = BTreeMap<String, f64>;

/// Fraction of the fault window, counted from its start, that is skipped
/// before steady-state quantities are measured.
const SETTLING_FRACTION: f64 = 0.4;

/// Shorter steady windows leave the fault metrics out.
const MIN_WINDOW_CYCLES: usize = 2;

/// Tolerance band for resynchronisation, relative to the final setpoint.
const RESYNC_TOLERANCE: f64 = 0.01;

/// Fourier coefficient `(2/n)·Σ x·e^{-jωt}` at angular frequency `w`.
pub fn fourier(t: &[f64], x: &[f64], w: f64) -> Vec2 {
    let n = x.len() as f64;
    let s: Vec2 = t.iter().zip(x).map(|(&t, &x)| Vec2::from_polar(x, -w * t)).sum();
    s * (2.0 / n)
}

/// Ratio of the second-harmonic amplitude of `p` to the mean of `|p|`.
pub fn ripple_ratio(t: &[f64], p: &[f64], f: f64) -> Option<f64> {
    if p.is_empty() {
        return None;
    }
    let mean = p.iter().map(|v| v.abs()).sum::<f64>() / p.len() as f64;
    if mean <= f64::EPSILON {
        return None;
    }
    Some(fourier(t, p, 4.0 * PI * f).norm() / mean)
}

/// Fundamental symmetrical components of each whole cycle.
pub fn cycle_sequences(t: &[f64], abc: [&[f64]; 3], f: f64, per_cycle: usize) -> Vec<SequencePair> {
    if per_cycle == 0 || t.len() < per_cycle {
        return Vec::new();
    }
    let w = 2.0 * PI * f;
    (0..=t.len() - per_cycle)
        .step_by(per_cycle)
        .map(|start| {
            let r = start..start + per_cycle;
            let ph = abc.map(|x| fourier(&t[r.clone()], &x[r.clone()], w));
            symmetrical_components(ph[0], ph[1], ph[2])
        })
        .collect()
}

fn mean_unbalance(seqs: impl Iterator<Item = SequencePair>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0;
    for s in seqs {
        if s.pos.norm() <= f64::EPSILON {
            return None;
        }
        sum += s.neg.norm() / s.pos.norm();
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Negative- over positive-sequence fundamental magnitude, averaged over
/// whole cycles.
pub fn voltage_unbalance(t: &[f64], abc: [&[f64]; 3], f: f64, per_cycle: usize) -> Option<f64> {
    mean_unbalance(cycle_sequences(t, abc, f, per_cycle).into_iter())
}

/// Unbalance of the voltage behind the filter impedance `z`, i.e. at the
/// bridge terminals, from the capacitor voltage and the bridge current.
pub fn terminal_unbalance(
    t: &[f64],
    v: [&[f64]; 3],
    i: [&[f64]; 3],
    z: Vec2,
    f: f64,
    per_cycle: usize,
) -> Option<f64> {
    let vs = cycle_sequences(t, v, f, per_cycle);
    let is = cycle_sequences(t, i, f, per_cycle);
    // negative-sequence vectors come back conjugated
    mean_unbalance(
        vs.into_iter().zip(is).map(|(v, i)| SequencePair { pos: v.pos + z * i.pos, neg: v.neg + z.conj() * i.neg }),
    )
}

/// Trailing moving average over `width` samples (shorter at the start).
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let width = width.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i];
        if i >= width {
            acc -= x[i - width];
        }
        out.push(acc / (i + 1).min(width) as f64);
    }
    out
}

fn sample_period(t: &[f64]) -> Option<f64> {
    (t.len() >= 2).then(|| (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64)
}

/// Index range of the steady part of the fault window, truncated to whole
/// cycles counted back from the clearing instant.
fn steady_window(t: &[f64], fault: (f64, f64), f: f64, dt: f64) -> Option<(std::ops::Range<usize>, usize)> {
    let (start, clear) = fault;
    let from = start + SETTLING_FRACTION * (clear - start);
    let end = t.partition_point(|&x| x < clear - 0.5 * dt);
    let per_cycle = (1.0 / (f * dt)).round() as usize;
    let cycles = ((clear - from) * f + 1e-9).floor() as usize;
    let n = (cycles * per_cycle).min(end);
    (cycles >= MIN_WINDOW_CYCLES && per_cycle > 0 && n > 0).then_some((end - n..end, per_cycle))
}

pub fn compute(traj: &Trajectory, ctx: &MetricsContext) -> Metrics {
    let mut m = Metrics::new();
    if traj.is_empty() {
        return m;
    }
    let t = traj.column("t_s").expect("time column");
    let f = ctx.frequency_hz;
    let dt = sample_period(&t);
    for k in 0..traj.converter_count() {
        let col = |name: &str| traj.column(&format!("{name}_{k}")).expect("converter column");
        let ic = [col("ic_a"), col("ic_b"), col("ic_c")];
        let peak = |r: std::ops::Range<usize>| {
            ic.iter().flat_map(|x| x[r.clone()].iter()).fold(0.0f64, |a, v| a.max(v.abs()))
        };
        m.insert(format!("c{k}_max_phase_current_pu"), peak(0..t.len()));
        let freq = col("freq_hz");
        m.insert(format!("c{k}_max_freq_dev_hz"), freq.iter().fold(0.0f64, |a, v| a.max((v - f).abs())));

        let (Some((start, clear)), Some(dt)) = (ctx.fault, dt) else { continue };
        if let Some((r, per_cycle)) = steady_window(&t, (start, clear), f, dt) {
            m.insert(format!("c{k}_fault_max_phase_current_pu"), peak(r.clone()));
            let (id, iq) = (col("id_pos_ref"), col("iq_pos_ref"));
            let mean = r.clone().map(|i| id[i].hypot(iq[i])).sum::<f64>() / r.len() as f64;
            m.insert(format!("c{k}_fault_mean_ipos_pu"), mean);
            let p = col("p");
            if let Some(rr) = ripple_ratio(&t[r.clone()], &p[r.clone()], f) {
                m.insert(format!("c{k}_ripple_ratio"), rr);
            }
            let v = [col("vpcc_a"), col("vpcc_b"), col("vpcc_c")];
            let slices = [&v[0][r.clone()], &v[1][r.clone()], &v[2][r.clone()]];
            if let Some(vuf) = voltage_unbalance(&t[r.clone()], slices, f, per_cycle) {
                m.insert(format!("c{k}_vuf"), vuf);
            }
            if let Some(&z) = ctx.filters.get(k) {
                let currents = [&ic[0][r.clone()], &ic[1][r.clone()], &ic[2][r.clone()]];
                if let Some(vuf) = terminal_unbalance(&t[r.clone()], slices, currents, z, f, per_cycle) {
                    m.insert(format!("c{k}_terminal_vuf"), vuf);
                }
            }
        }
        if let Some(sched) = ctx.setpoints.get(k) {
            if let Some(rt) = resync_time(&t, &col("p"), sched, clear, f, dt) {
                m.insert(format!("c{k}_resync_time_s"), rt);
            }
        }
    }
    m
}

/// Time after `clear` from which the cycle-averaged active power stays
/// within tolerance of the setpoint until the end of the record.
fn resync_time(t: &[f64], p: &[f64], sched: &SetpointSchedule, clear: f64, f: f64, dt: f64) -> Option<f64> {
    let target = sched.final_value().p;
    let band = RESYNC_TOLERANCE * target.abs().max(1e-3);
    let avg = moving_average(p, (1.0 / (f * dt)).round() as usize);
    let first = t.partition_point(|&x| x < clear);
    if first >= t.len() {
        return None;
    }
    let outside = |i: usize| (avg[i] - sched.at(t[i]).p).abs() > band;
    if outside(t.len() - 1) {
        return None;
    }
    let last_bad = (first..t.len()).rev().find(|&i| outside(i));
    Some(match last_bad {
        Some(i) => t[i + 1] - clear,
        None => (t[first] - clear).max(0.0),
    })
}

/// Writes metrics as a flat TOML table.
pub fn to_toml(m: &Metrics) -> String {
    let mut s = String::new();
    for (k, v) in m {
        s.push_str(&format!("{k} = {}\n", toml::Value::Float(*v)));
    }
    s
}

pub fn from_toml(text: &str) -> crate::Result<Metrics> {
    let t: toml::Table = toml::from_str(text).map_err(|e| crate::Error::Parse(e.to_string()))?;
    t.into_iter()
        .map(|(k, v)| match v {
            toml::Value::Float(x) => Ok((k, x)),
            toml::Value::Integer(x) => Ok((k, x as f64)),
            _ => Err(crate::Error::Parse(format!("metric `{k}` is not a number"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const F: f64 = 50.0;
    const DT: f64 = 1.0 / 14000.0;

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * DT).collect()
    }

    #[test]
    fn ripple_of_synthetic_power() {
        let t = times(2800);
        let p: Vec<f64> = t.iter().map(|&t| 0.5 * (1.0 + 0.1 * (4.0 * PI * F * t + 0.3).cos())).collect();
        assert!((ripple_ratio(&t, &p, F).unwrap() - 0.1).abs() < 1e-9);
        let flat = vec![0.5; t.len()];
        assert!(ripple_ratio(&t, &flat, F).unwrap() < 1e-12);
        assert!(ripple_ratio(&t, &vec![0.0; t.len()], F).is_none());
    }

    #[test]
    fn unbalance_of_synthetic_voltage() {
        let t = times(2800);
        let w = 2.0 * PI * F;
        let lam = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];
        let ph: Vec<Vec<f64>> = lam
            .iter()
            .map(|l| t.iter().map(|&t| (w * t + l).cos() + 0.2 * (w * t - l + 0.4).cos()).collect())
            .collect();
        let vuf = voltage_unbalance(&t, [&ph[0], &ph[1], &ph[2]], F, 280).unwrap();
        assert!((vuf - 0.2).abs() < 1e-6, "{vuf}");
    }

    #[test]
    fn moving_average_is_trailing() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn resync_measures_last_excursion() {
        let t = times(14000);
        let sched = SetpointSchedule::constant(crate::control::Setpoint { p: 0.25, q: 0.0 });
        let p: Vec<f64> = t.iter().map(|&t| if t < 0.6 { 0.0 } else { 0.25 }).collect();
        let r = resync_time(&t, &p, &sched, 0.5, F, DT).unwrap();
        assert!((r - 0.12).abs() < 1e-3, "{r}");
        let bad: Vec<f64> = t.iter().map(|_| 0.0).collect();
        assert!(resync_time(&t, &bad, &sched, 0.5, F, DT).is_none());
    }

    #[test]
    fn steady_window_is_whole_cycles() {
        let t = times(15000);
        let (r, pc) = steady_window(&t, (0.5, 1.0), F, DT).unwrap();
        assert_eq!(pc, 280);
        assert_eq!(r.len(), 15 * 280);
        assert!((t[r.end] - 1.0).abs() < 0.5 * DT);
    }

    #[test]
    fn short_fault_has_no_window() {
        let t = times(15000);
        assert!(steady_window(&t, (0.5, 0.54), F, DT).is_none());
        assert!(steady_window(&t, (0.5, 0.57), F, DT).is_some());
    }

    #[test]
    fn toml_round_trip() {
        let mut m = Metrics::new();
        m.insert("c0_vuf".into(), 0.1 + 0.2);
        m.insert("c1_ripple_ratio".into(), 1e-17);
        m.insert("c0_max_freq_dev_hz".into(), 3.0);
        assert_eq!(from_toml(&to_toml(&m)).unwrap(), m);
    }
}
