//! Individual loops of the grid-forming controller.

use crate::filters::HighPass;
use crate::frames::{wrap_angle, Vec2};

use super::params::NsStrategy;

/// Type-2 PLL regulating the positive-sequence q voltage to zero.
///
/// Frequency is kept in per-unit of the nominal value:
/// `ω_r = ω_n·(1 + K_p·v_q + x)`, `dx/dt = K_i·v_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pll {
    pub theta: f64,
    pub integrator: f64,
    /// Latest frequency output in per-unit.
    pub omega_pu: f64,
}

impl Pll {
    pub fn new(theta: f64) -> Self {
        Self { theta: wrap_angle(theta), integrator: 0.0, omega_pu: 1.0 }
    }

    /// Advances one step and returns `(ω_r [rad/s], θ_r [rad])`.
    ///
    /// `clamp_pu` bounds both the frequency deviation and the integrator.
    pub fn step(&mut self, v_q: f64, k_p: f64, k_i: f64, omega_n: f64, clamp_pu: Option<f64>, dt: f64) -> (f64, f64) {
        self.integrator += k_i * v_q * dt;
        let mut dev = k_p * v_q + self.integrator;
        if let Some(c) = clamp_pu {
            self.integrator = self.integrator.clamp(-c, c);
            dev = dev.clamp(-c, c);
        }
        self.omega_pu = 1.0 + dev;
        self.advance(omega_n, dt)
    }

    /// Runs the PLL without proportional action: the frequency is held at the
    /// value implied by the integrator alone.
    pub fn step_frozen(&mut self, omega_n: f64, dt: f64) -> (f64, f64) {
        self.omega_pu = 1.0 + self.integrator;
        self.advance(omega_n, dt)
    }

    fn advance(&mut self, omega_n: f64, dt: f64) -> (f64, f64) {
        let w = omega_n * self.omega_pu;
        self.theta = wrap_angle(self.theta + w * dt);
        (w, self.theta)
    }

    pub fn omega(&self, omega_n: f64) -> f64 {
        omega_n * self.omega_pu
    }
}

/// PLL gains that emulate inertia `M` and damping `K_f` with a virtual
/// reactance `X_v` and a nominal voltage in the damping term.
pub fn pll_gains_from_inertia(m: f64, k_f: f64, v_v: f64, x_v: f64, v_nom: f64) -> (f64, f64) {
    (k_f / (m * v_nom), v_v / (m * x_v))
}

/// Inertia and damping implied by a pair of PLL gains.
pub fn inertia_from_pll_gains(k_p: f64, k_i: f64, v_v: f64, x_v: f64, v_nom: f64) -> (f64, f64) {
    let m = v_v / (k_i * x_v);
    (m, k_p * m * v_nom)
}

/// Dynamic virtual admittance `(X_v/ω_n)·di/dt = Δv − (R_v + jX_v)·i`,
/// discretized exactly for a input held over the step.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualAdmittance {
    pub current: Vec2,
    decay: Vec2,
    key: (f64, f64, f64, f64),
}

impl VirtualAdmittance {
    pub fn new() -> Self {
        Self { current: Vec2::default(), decay: Vec2::default(), key: (f64::NAN, 0.0, 0.0, 0.0) }
    }

    pub fn step(&mut self, v_set: Vec2, v_pcc: Vec2, r_v: f64, x_v: f64, omega_n: f64, dt: f64) -> Vec2 {
        let key = (r_v, x_v, omega_n, dt);
        if key != self.key {
            self.key = key;
            let a = -Vec2::new(r_v, x_v) * (omega_n / x_v);
            self.decay = (a * dt).exp();
        }
        let steady = (v_set - v_pcc) / Vec2::new(r_v, x_v);
        self.current = self.decay * self.current + (Vec2::new(1.0, 0.0) - self.decay) * steady;
        self.current
    }

    pub fn reset(&mut self) {
        self.current = Vec2::default();
    }
}

impl Default for VirtualAdmittance {
    fn default() -> Self {
        Self::new()
    }
}

/// d-axis current of the virtual current source.
///
/// `delta_omega_pu` and `v_d` are the already low-pass filtered frequency
/// deviation and d voltage.
pub fn governor(p_set: f64, k_g: f64, delta_omega_pu: f64, v_d: f64, eps_v: f64) -> f64 {
    (p_set + k_g * delta_omega_pu) / v_d.max(eps_v)
}

/// Integral voltage regulator producing the q-axis current, clamped to `±limit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Avr {
    pub integrator: f64,
}

impl Avr {
    pub fn new(initial: f64) -> Self {
        Self { integrator: initial }
    }

    pub fn step(&mut self, error: f64, k_v: f64, limit: f64, dt: f64) -> f64 {
        self.integrator = (self.integrator + k_v * error * dt).clamp(-limit, limit);
        self.integrator
    }
}

/// Virtual termination resistor fed through a high-pass filter.
#[derive(Debug, Clone)]
pub struct ActiveDamping {
    hp: HighPass,
}

impl ActiveDamping {
    pub fn new(corner: f64) -> Self {
        Self { hp: HighPass::new(corner) }
    }

    pub fn step(&mut self, v: Vec2, r_ad: f64, dt: f64) -> Vec2 {
        self.hp.step(v, dt) / r_ad
    }

    pub fn precharge(&mut self, v: Vec2) {
        self.hp.precharge(v);
    }
}

/// Negative-sequence reference; the flag reports a clamped denominator.
pub fn ns_reference(
    strategy: NsStrategy,
    v_neg: Vec2,
    v_pos: Vec2,
    i_pos_ref: Vec2,
    y_v_neg: Vec2,
    eps_v: f64,
) -> (Vec2, bool) {
    match strategy {
        NsStrategy::BalancedCurrent => (Vec2::default(), false),
        NsStrategy::PowerOscillationSuppression => {
            let m = v_pos.norm();
            let clamped = m <= eps_v;
            let den = if !clamped {
                v_pos.conj()
            } else if m > 0.0 {
                v_pos.conj() * (eps_v / m)
            } else {
                Vec2::new(eps_v, 0.0)
            };
            (-(v_neg / den) * i_pos_ref.conj(), clamped)
        }
        // The negative-sequence vector is the conjugate of its phasor, so a
        // phasor-domain admittance acts through its conjugate.
        NsStrategy::VoltageBalancing => (y_v_neg.conj() * (Vec2::default() - v_neg), false),
    }
}

/// Voltage setpoint after one step of downregulation: decreases at rate
/// `K_I·max(|i_ref| − I_lim, 0)` and never falls below zero.
pub fn downregulate(v_v: f64, i_ref_norm: f64, i_lim: f64, k_i: f64, dt: f64) -> f64 {
    (v_v - k_i * (i_ref_norm - i_lim).max(0.0) * dt).max(0.0)
}

/// Hysteresis fault detector on the positive-sequence voltage magnitude.
pub fn fault_detector_step(flag: bool, v_mag: f64, v_trig: f64, v_rec: f64) -> bool {
    if v_mag <= v_trig {
        true
    } else if v_mag >= v_rec {
        false
    } else {
        flag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const WN: f64 = 2.0 * PI * 50.0;
    const DT: f64 = 1.0 / 14000.0;

    #[test]
    fn pll_locked() {
        let mut p = Pll::new(0.0);
        let mut expect = 0.0;
        for _ in 0..1000 {
            let (w, th) = p.step(0.0, 0.1, 1.4, WN, None, DT);
            expect = wrap_angle(expect + WN * DT);
            assert_eq!(w, WN);
            assert!((th - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn pll_ramp() {
        let mut p = Pll::new(0.0);
        let eps = 1e-3;
        let n = 1400;
        let mut w = 0.0;
        for _ in 0..n {
            w = p.step(eps, 0.1, 1.4, WN, None, DT).0;
        }
        let expect = WN * (1.0 + 0.1 * eps + 1.4 * eps * n as f64 * DT);
        assert!((w - expect).abs() < 1e-9 * WN);
    }

    #[test]
    fn pll_clamp() {
        let mut p = Pll::new(0.0);
        for _ in 0..100_000 {
            p.step(1.0, 0.1, 1.4, WN, Some(0.2), DT);
        }
        assert!((p.omega_pu - 1.2).abs() < 1e-12);
    }

    #[test]
    fn gains_from_inertia() {
        let m = 1.0 / (1.4 * 0.18);
        let (kp, ki) = pll_gains_from_inertia(m, 0.3, 1.0, 0.18, 1.0);
        assert!((ki - 1.4).abs() < 1e-12);
        let (kp2, ki2) = pll_gains_from_inertia(2.0 * m, 0.3, 1.0, 0.18, 1.0);
        assert!((kp2 - kp / 2.0).abs() < 1e-12 && (ki2 - ki / 2.0).abs() < 1e-12);
        assert_eq!(pll_gains_from_inertia(m, 0.0, 1.0, 0.18, 1.0).0, 0.0);
        let (m2, kf2) = inertia_from_pll_gains(kp, ki, 1.0, 0.18, 1.0);
        assert!((m2 - m).abs() < 1e-12 && (kf2 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn admittance_zero_drive() {
        let mut va = VirtualAdmittance::new();
        va.current = Vec2::new(0.3, -0.2);
        for _ in 0..14000 {
            va.step(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), 0.045, 0.18, WN, DT);
        }
        assert!(va.current.norm() < 1e-6);
    }

    #[test]
    fn admittance_steady_state() {
        let mut va = VirtualAdmittance::new();
        for _ in 0..14000 {
            va.step(Vec2::new(1.1, 0.0), Vec2::new(1.0, 0.0), 0.045, 0.18, WN, DT);
        }
        let d = 0.045f64.powi(2) + 0.18f64.powi(2);
        let expect = Vec2::new(0.1 * 0.045 / d, -0.1 * 0.18 / d);
        assert!((va.current - expect).norm() < 1e-9);
        assert!((expect - Vec2::new(0.1307, -0.5229)).norm() < 1e-4);
    }

    #[test]
    fn admittance_time_constant() {
        let mut va = VirtualAdmittance::new();
        va.current = Vec2::new(1.0, 0.0);
        let tau = 0.18 / 0.045 / WN;
        let n = (tau / DT).round() as usize;
        for _ in 0..n {
            va.step(Vec2::default(), Vec2::default(), 0.045, 0.18, WN, DT);
        }
        let fitted = -(n as f64 * DT) / va.current.norm().ln();
        assert!((fitted / tau - 1.0).abs() < 0.05);
    }

    #[test]
    fn governor_examples() {
        assert_eq!(governor(0.25, 20.0, 0.0, 1.0, 0.05), 0.25);
        assert!((governor(0.0, 20.0, -0.01, 1.0, 0.05) + 0.2).abs() < 1e-12);
        assert!((governor(0.25, 20.0, 0.0, 0.01, 0.05) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn avr_examples() {
        let mut a = Avr::new(0.3);
        for _ in 0..100 {
            assert_eq!(a.step(0.0, 75.0, 1.2, DT), 0.3);
        }
        let mut a = Avr::new(0.0);
        for _ in 0..1400 {
            a.step(0.01, 75.0, 1.2, DT);
        }
        assert!((a.integrator - 0.075).abs() < 1e-9);
        for _ in 0..14000 {
            a.step(1.0, 75.0, 1.2, DT);
        }
        assert_eq!(a.integrator, 1.2);
    }

    #[test]
    fn active_damping_examples() {
        let mut ad = ActiveDamping::new(2.0 * PI * 20.0);
        ad.precharge(Vec2::new(1.0, 0.0));
        let first = ad.step(Vec2::new(1.1, 0.0), 0.66, DT);
        assert!((first.re - 0.1 / 0.66).abs() < 0.01 * 0.1515);
        for _ in 0..14000 {
            ad.step(Vec2::new(1.1, 0.0), 0.66, DT);
        }
        assert!(ad.step(Vec2::new(1.1, 0.0), 0.66, DT).norm() < 1e-9);
    }

    #[test]
    fn ns_reference_examples() {
        let z = Vec2::default();
        let (i, _) = ns_reference(NsStrategy::BalancedCurrent, Vec2::new(0.3, 0.1), Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), z, 0.05);
        assert_eq!(i, z);
        let (i, clamped) = ns_reference(
            NsStrategy::PowerOscillationSuppression,
            Vec2::new(0.2, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 0.0),
            z,
            0.05,
        );
        assert!((i - Vec2::new(-0.2, 0.0)).norm() < 1e-12 && !clamped);
        let (i, _) = ns_reference(
            NsStrategy::VoltageBalancing,
            Vec2::new(0.04, 0.0),
            Vec2::new(1.0, 0.0),
            z,
            Vec2::new(0.0, -25.0),
            0.05,
        );
        assert!((i - Vec2::new(0.0, -1.0)).norm() < 1e-12);
        let (_, clamped) = ns_reference(
            NsStrategy::PowerOscillationSuppression,
            Vec2::new(0.2, 0.0),
            Vec2::new(0.01, 0.0),
            Vec2::new(1.0, 0.0),
            z,
            0.05,
        );
        assert!(clamped);
    }

    #[test]
    fn suppression_removes_power_ripple() {
        let v_pos = Vec2::new(0.9, 0.1);
        let v_neg = Vec2::new(0.15, -0.07);
        let i_pos = Vec2::new(0.8, 0.4);
        let (i_neg, _) = ns_reference(NsStrategy::PowerOscillationSuppression, v_neg, v_pos, i_pos, Vec2::default(), 0.05);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for k in 0..1000 {
            let th = 2.0 * PI * k as f64 / 1000.0;
            let r = Vec2::from_polar(1.0, th);
            let v = v_pos * r + v_neg * r.conj();
            let i = i_pos * r + i_neg * r.conj();
            let p = v.re * i.re + v.im * i.im;
            lo = lo.min(p);
            hi = hi.max(p);
        }
        assert!(hi - lo < 1e-9);
    }

    #[test]
    fn downregulation_integral() {
        let mut v = 1.0;
        for _ in 0..(0.2 / DT).round() as usize {
            v = downregulate(v, 1.3, 1.2, 10.0, DT);
        }
        assert!((v - 0.8).abs() < 1e-9);
        assert_eq!(downregulate(0.001, 5.0, 1.2, 10.0, DT), 0.0);
        assert_eq!(downregulate(0.7, 1.0, 1.2, 10.0, DT), 0.7);
    }

    #[test]
    fn fault_detector_trace() {
        assert!(!fault_detector_step(false, 0.9, 0.8, 0.85));
        let mut f = fault_detector_step(false, 0.5, 0.8, 0.85);
        assert!(f);
        f = fault_detector_step(f, 0.82, 0.8, 0.85);
        assert!(f);
        f = fault_detector_step(f, 0.9, 0.8, 0.85);
        assert!(!f);
        assert!(!fault_detector_step(false, 0.83, 0.8, 0.85));
    }
}
