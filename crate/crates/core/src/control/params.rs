use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrtStrategy {
    VectorCurrentControl,
    VirtualSynchronousCondenser,
    VoltageDownregulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NsStrategy {
    BalancedCurrent,
    PowerOscillationSuppression,
    VoltageBalancing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimiterKind {
    EqualDownscale,
    NegativeSequencePriority,
}

/// What happens to the PLL and AVR integrators while the
/// virtual-synchronous-condenser fault mode is engaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorPolicy {
    Freeze,
    FreezeAndReset,
}

/// Controller configuration. Gains act on per-unit quantities with time in
/// seconds; frequencies given in Hz are converted where used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    #[serde(rename = "r_v_pu")]
    pub r_v: f64,
    #[serde(rename = "x_v_pu")]
    pub x_v: f64,
    #[serde(rename = "k_pll_p_pu")]
    pub k_pll_p: f64,
    #[serde(rename = "k_pll_i_pu")]
    pub k_pll_i: f64,
    #[serde(rename = "k_g_pu")]
    pub k_g: f64,
    #[serde(rename = "k_v_pu")]
    pub k_v: f64,
    #[serde(rename = "r_ad_pu")]
    pub r_ad: f64,
    #[serde(rename = "r_ad_neg_pu")]
    pub r_ad_neg: f64,
    #[serde(rename = "k_cc_p_pu")]
    pub k_cc_p: f64,
    #[serde(rename = "alpha_ff_hz")]
    pub alpha_ff_hz: f64,
    #[serde(rename = "i_lim_pu")]
    pub i_lim: f64,
    #[serde(rename = "k_i_pu")]
    pub k_i: f64,
    /// Negative-sequence virtual admittance as a phasor-domain admittance.
    #[serde(rename = "y_v_neg_re_pu")]
    pub y_v_neg_re: f64,
    #[serde(rename = "y_v_neg_im_pu")]
    pub y_v_neg_im: f64,
    #[serde(rename = "v_v0_pu")]
    pub v_v0: f64,
    #[serde(rename = "v_trig_pu")]
    pub v_trig: f64,
    #[serde(rename = "v_rec_pu")]
    pub v_rec: f64,
    pub control_rate_hz: f64,
    pub frt_strategy: FrtStrategy,
    pub ns_strategy: NsStrategy,
    pub ns_active_damping: bool,
    pub limiter: LimiterKind,
    pub vsc_integrator_policy: IntegratorPolicy,
    pub vcc_pll_gain_multiplier: f64,
    /// Symmetric clamp on the PLL frequency deviation; absent means unclamped.
    pub pll_clamp_hz: Option<f64>,
    pub q_tracking: bool,
    pub notch_zeta: f64,
    pub lpf_frequency_hz: f64,
    pub lpf_voltage_hz: f64,
    pub hpf_hz: f64,
    #[serde(rename = "eps_v_pu")]
    pub eps_v: f64,
    pub delay_compensation: bool,
    /// Nominal angular frequency, taken from the scenario base.
    #[serde(skip)]
    pub omega_n: f64,
    /// Filter resistance and reactance used by the current controller.
    #[serde(skip)]
    pub r_f: f64,
    #[serde(skip)]
    pub x_f: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            r_v: 0.045,
            x_v: 0.18,
            k_pll_p: 0.1,
            k_pll_i: 1.4,
            k_g: 20.0,
            k_v: 75.0,
            r_ad: 0.66,
            r_ad_neg: 0.66,
            k_cc_p: 0.56,
            alpha_ff_hz: 200.0,
            i_lim: 1.2,
            k_i: 10.0,
            y_v_neg_re: 0.0,
            y_v_neg_im: -0.04,
            v_v0: 1.0,
            v_trig: 0.8,
            v_rec: 0.85,
            control_rate_hz: 14_000.0,
            frt_strategy: FrtStrategy::VirtualSynchronousCondenser,
            ns_strategy: NsStrategy::BalancedCurrent,
            ns_active_damping: false,
            limiter: LimiterKind::NegativeSequencePriority,
            vsc_integrator_policy: IntegratorPolicy::FreezeAndReset,
            vcc_pll_gain_multiplier: 1.0,
            pll_clamp_hz: None,
            q_tracking: false,
            notch_zeta: 0.7,
            lpf_frequency_hz: 10.0,
            lpf_voltage_hz: 10.0,
            hpf_hz: 20.0,
            eps_v: 0.05,
            delay_compensation: true,
            omega_n: 2.0 * PI * 50.0,
            r_f: 0.002,
            x_f: 0.04,
        }
    }
}

impl ControlParams {
    pub fn t_c(&self) -> f64 {
        1.0 / self.control_rate_hz
    }

    pub fn y_v_neg(&self) -> Vec2 {
        Vec2::new(self.y_v_neg_re, self.y_v_neg_im)
    }

    pub fn alpha_ff(&self) -> f64 {
        2.0 * PI * self.alpha_ff_hz
    }

    /// Effective loop delay compensated in the current controller: one
    /// computation period plus half a period of zero-order hold.
    pub fn compensated_delay(&self) -> f64 {
        if self.delay_compensation {
            1.5 * self.t_c()
        } else {
            0.0
        }
    }

    /// Checks every constraint; `prefix` is prepended to offending key names.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}{k}");
        let positive = [
            ("x_v_pu", self.x_v),
            ("i_lim_pu", self.i_lim),
            ("r_ad_pu", self.r_ad),
            ("r_ad_neg_pu", self.r_ad_neg),
            ("alpha_ff_hz", self.alpha_ff_hz),
            ("control_rate_hz", self.control_rate_hz),
            ("notch_zeta", self.notch_zeta),
            ("lpf_frequency_hz", self.lpf_frequency_hz),
            ("lpf_voltage_hz", self.lpf_voltage_hz),
            ("hpf_hz", self.hpf_hz),
            ("eps_v_pu", self.eps_v),
            ("vcc_pll_gain_multiplier", self.vcc_pll_gain_multiplier),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key(k), "must be > 0"));
            }
        }
        let non_negative = [
            ("r_v_pu", self.r_v),
            ("k_pll_p_pu", self.k_pll_p),
            ("k_pll_i_pu", self.k_pll_i),
            ("k_g_pu", self.k_g),
            ("k_v_pu", self.k_v),
            ("k_cc_p_pu", self.k_cc_p),
            ("k_i_pu", self.k_i),
            ("v_v0_pu", self.v_v0),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(key(k), "must be >= 0"));
            }
        }
        if !(self.y_v_neg_re.is_finite() && self.y_v_neg_im.is_finite()) {
            return Err(Error::invalid(key("y_v_neg_re_pu"), "must be finite"));
        }
        for (k, v) in [("v_trig_pu", self.v_trig), ("v_rec_pu", self.v_rec)] {
            if !(v > 0.0 && v < 1.2) {
                return Err(Error::invalid(key(k), "must lie in (0, 1.2)"));
            }
        }
        if self.v_rec <= self.v_trig {
            return Err(Error::invalid(
                key("v_rec_pu"),
                format!("recovery threshold {} must exceed trigger threshold {}", self.v_rec, self.v_trig),
            ));
        }
        if let Some(c) = self.pll_clamp_hz {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(key("pll_clamp_hz"), "must be > 0"));
            }
        }
        if !(self.omega_n > 0.0) {
            return Err(Error::invalid("base.frequency_hz", "must be > 0"));
        }
        if !(self.x_f > 0.0 && self.r_f >= 0.0) {
            return Err(Error::invalid(key("x_f_pu"), "filter reactance must be > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ControlParams::default().validate("control.").unwrap();
    }

    #[test]
    fn inverted_hysteresis_rejected() {
        let p = ControlParams { v_trig: 0.8, v_rec: 0.75, ..Default::default() };
        let err = p.validate("control.").unwrap_err().to_string();
        assert!(err.contains("control.v_rec_pu"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let doc = "i_lim_pu = 1.5\nbogus = 1";
        assert!(toml::from_str::<ControlParams>(doc).is_err());
        let p: ControlParams = toml::from_str("i_lim_pu = 1.5\nfrt_strategy = \"vector-current-control\"").unwrap();
        assert_eq!(p.i_lim, 1.5);
        assert_eq!(p.frt_strategy, FrtStrategy::VectorCurrentControl);
    }
}
