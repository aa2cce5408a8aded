//! Dual-sequence grid-forming vector current controller.
//!
//! One [`Controller::step`] runs the whole pipeline for a control period:
//! sequence extraction, fault detection, PLL, virtual admittance, virtual
//! current source, negative-sequence reference, fault ride-through
//! modifications, current limiting and current control.

pub mod blocks;
pub mod current;
pub mod limiter;
pub mod params;

use crate::error::Result;
use crate::filters::LowPass;
use crate::frames::{clarke, inv_clarke, SequenceExtractor, SequencePair, ThreePhase, Vec2};
use crate::plant::ConverterMeasurement;

use blocks::{fault_detector_step, governor, ns_reference, ActiveDamping, Avr, Pll, VirtualAdmittance};
use current::{CurrentController, CurrentLoopGains};
pub use limiter::Limited;
pub use params::{ControlParams, FrtStrategy, IntegratorPolicy, LimiterKind, NsStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Setpoint {
    pub p: f64,
    pub q: f64,
}

/// Steady operating point used to start the controller without transients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Angle of the PCC voltage at the first sample.
    pub theta: f64,
    /// Positive-sequence PCC voltage in the frame aligned with `theta`.
    pub v_pos: Vec2,
    /// Positive-sequence converter current in the same frame.
    pub i_pos: Vec2,
}

#[derive(Debug, Clone)]
pub struct ControllerState {
    pub pll: Pll,
    pub avr: Avr,
    pub admittance: VirtualAdmittance,
    pub v_v: f64,
    pub fault: bool,
    pub lpf_frequency: LowPass,
    pub lpf_vd: LowPass,
    pub lpf_vmag: LowPass,
    pub lpf_q: LowPass,
    pub damping_pos: ActiveDamping,
    pub damping_neg: ActiveDamping,
    pub v_extractor: SequenceExtractor,
    pub i_extractor: SequenceExtractor,
    pub current: CurrentController,
}

/// Scalar view of the controller state used to compare operating points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSnapshot {
    pub omega_pu: f64,
    pub pll_integrator: f64,
    pub avr_integrator: f64,
    pub i_vsc: Vec2,
    pub v_v: f64,
    pub frequency_filtered: f64,
    pub vd_filtered: f64,
    pub vmag_filtered: f64,
    pub fault: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub v_ref: ThreePhase,
    pub v_ref_ab: Vec2,
    /// References before limiting.
    pub i_pos_ref: Vec2,
    pub i_neg_ref: Vec2,
    pub i_pos_sat: Vec2,
    pub i_neg_sat: Vec2,
    pub gamma: f64,
    pub omega_r: f64,
    pub theta_r: f64,
    pub v_v: f64,
    pub fault: bool,
    pub v_seq: SequencePair,
    pub i_seq: SequencePair,
    pub suppression_clamped: bool,
}

impl ControlOutput {
    pub fn is_finite(&self) -> bool {
        let v = [self.v_ref_ab, self.i_pos_sat, self.i_neg_sat, self.i_pos_ref, self.i_neg_ref];
        self.v_ref.is_finite()
            && v.iter().all(|c| c.re.is_finite() && c.im.is_finite())
            && self.omega_r.is_finite()
            && self.v_v.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    params: ControlParams,
    state: ControllerState,
}

impl Controller {
    pub fn new(params: ControlParams) -> Result<Self> {
        params.validate("control.")?;
        let hz = |f: f64| 2.0 * std::f64::consts::PI * f;
        let state = ControllerState {
            pll: Pll::new(0.0),
            avr: Avr::new(0.0),
            admittance: VirtualAdmittance::new(),
            v_v: params.v_v0,
            fault: false,
            lpf_frequency: LowPass::new(hz(params.lpf_frequency_hz)),
            lpf_vd: LowPass::new(hz(params.lpf_voltage_hz)),
            lpf_vmag: LowPass::new(hz(params.lpf_voltage_hz)),
            lpf_q: LowPass::new(hz(params.lpf_voltage_hz)),
            damping_pos: ActiveDamping::new(hz(params.hpf_hz)),
            damping_neg: ActiveDamping::new(hz(params.hpf_hz)),
            v_extractor: SequenceExtractor::new(params.notch_zeta),
            i_extractor: SequenceExtractor::new(params.notch_zeta),
            current: CurrentController::new(params.alpha_ff()),
        };
        Ok(Self { params, state })
    }

    pub fn params(&self) -> &ControlParams {
        &self.params
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut ControllerState {
        &mut self.state
    }

    /// Pre-charges every filter and integrator at a steady, balanced,
    /// nominal-frequency operating point.
    pub fn initialize(&mut self, op: OperatingPoint) {
        let p = &self.params;
        let dt = p.t_c();
        let w = p.omega_n;
        let s = &mut self.state;
        s.pll = Pll::new(op.theta);
        s.avr = Avr::new(op.i_pos.im.clamp(-p.i_lim, p.i_lim));
        s.admittance.reset();
        s.v_v = p.v_v0;
        s.fault = false;
        s.lpf_frequency.precharge_scalar(0.0);
        s.lpf_vd.precharge_scalar(op.v_pos.re);
        s.lpf_vmag.precharge_scalar(op.v_pos.norm());
        s.lpf_q.precharge_scalar(op.v_pos.im * op.i_pos.re - op.v_pos.re * op.i_pos.im);
        s.damping_pos.precharge(op.v_pos);
        s.damping_neg.precharge(Vec2::default());
        s.v_extractor.precharge(SequencePair { pos: op.v_pos, neg: Vec2::default() }, op.theta, w, dt);
        s.i_extractor.precharge(SequencePair { pos: op.i_pos, neg: Vec2::default() }, op.theta, w, dt);
        let v_ab = op.v_pos * Vec2::from_polar(1.0, op.theta);
        s.current.precharge(v_ab, w, dt);
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let s = &self.state;
        StateSnapshot {
            omega_pu: s.pll.omega_pu,
            pll_integrator: s.pll.integrator,
            avr_integrator: s.avr.integrator,
            i_vsc: s.admittance.current,
            v_v: s.v_v,
            frequency_filtered: s.lpf_frequency.output().re,
            vd_filtered: s.lpf_vd.output().re,
            vmag_filtered: s.lpf_vmag.output().re,
            fault: s.fault,
        }
    }

    /// Runs one control period on the sampled measurements.
    pub fn step(&mut self, m: &ConverterMeasurement, sp: Setpoint) -> ControlOutput {
        let p = &self.params;
        let s = &mut self.state;
        let dt = p.t_c();
        let wn = p.omega_n;

        let theta = s.pll.theta;
        let omega_prev = s.pll.omega(wn);
        let v_seq = s.v_extractor.extract(m.v_pcc, theta, omega_prev, dt);
        let i_seq = s.i_extractor.extract(m.i_c, theta, omega_prev, dt);
        let v_mag = v_seq.pos.norm();

        let was_fault = s.fault;
        s.fault = fault_detector_step(was_fault, v_mag, p.v_trig, p.v_rec);
        let vsc_fault = s.fault && p.frt_strategy == FrtStrategy::VirtualSynchronousCondenser;
        let vcc_fault = s.fault && p.frt_strategy == FrtStrategy::VectorCurrentControl;
        let vdr_fault = s.fault && p.frt_strategy == FrtStrategy::VoltageDownregulation;
        if s.fault && !was_fault && vsc_fault && p.vsc_integrator_policy == IntegratorPolicy::FreezeAndReset {
            s.pll.integrator = 0.0;
            s.avr.integrator = 0.0;
        }
        if !s.fault && was_fault {
            s.v_v = p.v_v0;
        }

        let clamp = p.pll_clamp_hz.map(|c| c * 2.0 * std::f64::consts::PI / wn);
        let (omega_r, _) = if vsc_fault {
            s.pll.step_frozen(wn, dt)
        } else {
            let k = if vcc_fault { p.vcc_pll_gain_multiplier } else { 1.0 };
            s.pll.step(v_seq.pos.im, k * p.k_pll_p, k * p.k_pll_i, wn, clamp, dt)
        };

        let dw_f = s.lpf_frequency.step_scalar(omega_r / wn - 1.0, dt);
        let vd_f = s.lpf_vd.step_scalar(v_seq.pos.re, dt);
        let vmag_f = s.lpf_vmag.step_scalar(v_mag, dt);
        let v_ab = clarke(m.v_pcc);
        let i_ab = clarke(m.i_c);
        let q_inst = v_ab.im * i_ab.re - v_ab.re * i_ab.im;
        let q_f = s.lpf_q.step_scalar(q_inst, dt);

        let i_vsc = if vcc_fault {
            s.admittance.reset();
            Vec2::default()
        } else {
            s.admittance.step(Vec2::new(s.v_v, 0.0), v_seq.pos, p.r_v, p.x_v, wn, dt)
        };

        let p_set = if vsc_fault { 0.0 } else { sp.p };
        let i_vd = governor(p_set, p.k_g, dw_f, vd_f, p.eps_v);
        let i_vq = if vsc_fault || vcc_fault {
            s.avr.integrator
        } else {
            let mut err = vmag_f - s.v_v;
            if p.q_tracking {
                err += (q_f - sp.q) / vmag_f.max(p.eps_v);
            }
            s.avr.step(err, p.k_v, p.i_lim, dt)
        };
        let i_ad = s.damping_pos.step(v_seq.pos, p.r_ad, dt);
        let i_vcs = if vsc_fault { Vec2::default() } else { i_ad + Vec2::new(i_vd, i_vq) };
        let i_pos_ref = if vcc_fault { Vec2::new(0.0, -p.i_lim) } else { i_vcs + i_vsc };

        if vdr_fault {
            s.v_v = blocks::downregulate(s.v_v, i_pos_ref.norm(), p.i_lim, p.k_i, dt);
        }

        let (mut i_neg_ref, suppression_clamped) =
            ns_reference(p.ns_strategy, v_seq.neg, v_seq.pos, i_pos_ref, p.y_v_neg(), p.eps_v);
        let i_ad_neg = s.damping_neg.step(v_seq.neg, p.r_ad_neg, dt);
        if p.ns_active_damping && p.ns_strategy != NsStrategy::BalancedCurrent {
            i_neg_ref += i_ad_neg;
        }

        let lim = match p.ns_strategy {
            NsStrategy::BalancedCurrent => limiter::limit_balanced(i_pos_ref, p.i_lim),
            NsStrategy::PowerOscillationSuppression => {
                limiter::limit_equal_downscale(i_pos_ref, i_neg_ref, p.i_lim)
            }
            NsStrategy::VoltageBalancing => match p.limiter {
                LimiterKind::EqualDownscale => limiter::limit_equal_downscale(i_pos_ref, i_neg_ref, p.i_lim),
                LimiterKind::NegativeSequencePriority => limiter::limit_ns_priority(i_pos_ref, i_neg_ref, p.i_lim),
            },
        };

        let gains = CurrentLoopGains {
            k_p: p.k_cc_p,
            r_f: p.r_f,
            x_f: p.x_f,
            omega_n: wn,
            delay: p.compensated_delay(),
        };
        let v_ref_ab = s.current.step(lim.pos, lim.neg, i_ab, v_ab, theta, omega_r, &gains, dt);

        ControlOutput {
            v_ref: inv_clarke(v_ref_ab),
            v_ref_ab,
            i_pos_ref,
            i_neg_ref,
            i_pos_sat: lim.pos,
            i_neg_sat: lim.neg,
            gamma: lim.gamma,
            omega_r,
            theta_r: s.pll.theta,
            v_v: s.v_v,
            fault: s.fault,
            v_seq,
            i_seq,
            suppression_clamped,
        }
    }
}
