//! Stationary-frame proportional current controller with filtered voltage
//! feedforward and filter-drop compensation.

use crate::filters::BandPass;
use crate::frames::{rotate, Vec2};

#[derive(Debug, Clone)]
pub struct CurrentController {
    ff: BandPass,
}

#[derive(Debug, Clone, Copy)]
pub struct CurrentLoopGains {
    pub k_p: f64,
    pub r_f: f64,
    pub x_f: f64,
    pub omega_n: f64,
    /// Delay between sampling and the mid-point of the applied voltage.
    pub delay: f64,
}

impl CurrentController {
    pub fn new(alpha_ff: f64) -> Self {
        Self { ff: BandPass::new(alpha_ff) }
    }

    /// Starts the feedforward filter at the steady response to a voltage
    /// vector rotating at `omega`.
    pub fn precharge(&mut self, v_pcc: Vec2, omega: f64, dt: f64) {
        self.ff.precharge_rotating(v_pcc, omega, dt);
    }

    /// Filtered PCC voltage, extrapolated over the loop delay.
    pub fn feedforward(&mut self, v_pcc: Vec2, omega_r: f64, delay: f64, dt: f64) -> Vec2 {
        let y = self.ff.step(v_pcc, omega_r, dt);
        y + self.ff.output_derivative() * delay
    }

    /// Bridge voltage reference in the stationary frame.
    ///
    /// References are in their own synchronous frames: `i_pos` rotates with
    /// `theta`, `i_neg` against it.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        i_pos: Vec2,
        i_neg: Vec2,
        i_c: Vec2,
        v_pcc: Vec2,
        theta: f64,
        omega_r: f64,
        g: &CurrentLoopGains,
        dt: f64,
    ) -> Vec2 {
        let v_ff = self.feedforward(v_pcc, omega_r, g.delay, dt);
        let reference = rotate(theta, i_pos) + rotate(-theta, i_neg);
        let lead = theta + omega_r * g.delay;
        let x = g.x_f * omega_r / g.omega_n;
        let drop = Vec2::new(g.r_f, x) * rotate(lead, i_pos) + Vec2::new(g.r_f, -x) * rotate(-lead, i_neg);
        (reference - i_c) * g.k_p + drop + v_ff
    }
}
