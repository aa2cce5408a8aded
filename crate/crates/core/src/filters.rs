//! Discrete filters used by the sequence extraction and the controller.
//!
//! All filters are discretized with the trapezoidal (bilinear) rule. Signals
//! are complex so a single filter instance processes both channels of a
//! two-component vector; scalar signals use the real part only.
//!
//! Second-order sections are realized as
//!
//! ```text
//! y' = α(u − y) − ω₀²·z,   z' = y      ⇒   Y/U = αs / (s² + αs + ω₀²)
//! ```
//!
//! which gives both the band-pass used for voltage feedforward and, through
//! `u − y`, the notch `(s² + ω₀²)/(s² + αs + ω₀²)` used for sequence extraction.

use crate::frames::Vec2;

/// Relative change of the tuning frequency that triggers a coefficient update.
const RETUNE_EPS: f64 = 1e-9;

/// Adaptive second-order band-pass `αs / (s² + αs + ω₀²)`.
///
/// The center frequency is pre-warped so that the discrete filter peaks (and
/// the derived notch nulls) exactly at the requested frequency.
#[derive(Debug, Clone)]
pub struct BandPass {
    y: Vec2,
    z: Vec2,
    u_prev: Vec2,
    alpha: f64,
    center: f64,
    dt: f64,
    // continuous-time center after pre-warping
    w0: f64,
    phi: [[f64; 2]; 2],
    gamma: [f64; 2],
}

impl BandPass {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha > 0.0, "band-pass bandwidth must be positive");
        Self {
            y: Vec2::default(),
            z: Vec2::default(),
            u_prev: Vec2::default(),
            alpha,
            center: f64::NAN,
            dt: f64::NAN,
            w0: 0.0,
            phi: [[0.0; 2]; 2],
            gamma: [0.0; 2],
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        if (alpha - self.alpha).abs() > RETUNE_EPS * self.alpha.abs().max(1.0) {
            self.alpha = alpha;
            self.center = f64::NAN;
        }
    }

    fn retune(&mut self, center: f64, dt: f64) {
        let stale = !(self.dt == dt)
            || !((center - self.center).abs() <= RETUNE_EPS * center.abs().max(1.0));
        if !stale {
            return;
        }
        self.center = center;
        self.dt = dt;
        let w0 = (2.0 / dt) * (center * dt / 2.0).tan();
        self.w0 = w0;
        let (h, a, w2) = (dt, self.alpha, w0 * w0);
        let det = 1.0 + h * a / 2.0 + h * h * w2 / 4.0;
        // inv(I - hA/2)
        let inv = [[1.0 / det, -h * w2 / 2.0 / det], [h / 2.0 / det, (1.0 + h * a / 2.0) / det]];
        // I + hA/2
        let m2 = [[1.0 - h * a / 2.0, -h * w2 / 2.0], [h / 2.0, 1.0]];
        for (i, row) in self.phi.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[i][0] * m2[0][j] + inv[i][1] * m2[1][j];
            }
        }
        self.gamma = [inv[0][0] * h * a / 2.0, inv[1][0] * h * a / 2.0];
    }

    /// Advances one step with the center frequency `center` (rad/s).
    pub fn step(&mut self, u: Vec2, center: f64, dt: f64) -> Vec2 {
        self.retune(center, dt);
        let drive = self.u_prev + u;
        let y = self.y * self.phi[0][0] + self.z * self.phi[0][1] + drive * self.gamma[0];
        let z = self.y * self.phi[1][0] + self.z * self.phi[1][1] + drive * self.gamma[1];
        self.y = y;
        self.z = z;
        self.u_prev = u;
        y
    }

    pub fn output(&self) -> Vec2 {
        self.y
    }

    /// Time derivative of the output implied by the current state and input.
    pub fn output_derivative(&self) -> Vec2 {
        (self.u_prev - self.y) * self.alpha - self.z * (self.w0 * self.w0)
    }

    /// Sets the state to the steady response to a DC input `u`.
    pub fn precharge_dc(&mut self, u: Vec2, center: f64, dt: f64) {
        self.retune(center, dt);
        self.y = Vec2::default();
        self.z = u * (self.alpha / (self.w0 * self.w0));
        self.u_prev = u;
    }

    /// Sets the state to the exact discrete steady response to `dc` plus a
    /// vector rotating at `omega` rad/s whose value at the next step is
    /// `ripple`. The filter is tuned to `center`.
    pub fn precharge_steady(&mut self, dc: Vec2, ripple: Vec2, omega: f64, center: f64, dt: f64) {
        self.retune(center, dt);
        let one = Vec2::new(1.0, 0.0);
        let lam = Vec2::from_polar(1.0, omega * dt);
        let (yd, zd) = self.steady_gain(one);
        let (yr, zr) = self.steady_gain(lam);
        let back = lam.inv();
        self.y = yd * dc + yr * ripple * back;
        self.z = zd * dc + zr * ripple * back;
        self.u_prev = dc + ripple * back;
    }

    /// State per unit input for the sequence `u_k = λ^k`, solving
    /// `(λI − Φ)·x = Γ·(1 + λ)`.
    fn steady_gain(&self, lam: Vec2) -> (Vec2, Vec2) {
        let p = &self.phi;
        let (a, b) = (lam - p[0][0], Vec2::new(-p[0][1], 0.0));
        let (c, d) = (Vec2::new(-p[1][0], 0.0), lam - p[1][1]);
        let rhs = ((lam + 1.0) * self.gamma[0], (lam + 1.0) * self.gamma[1]);
        let det = a * d - b * c;
        ((rhs.0 * d - b * rhs.1) / det, (a * rhs.1 - c * rhs.0) / det)
    }

    /// Sets the state to the steady response to a vector `u` currently rotating
    /// at `omega` rad/s (negative for clockwise rotation), assuming `|omega|`
    /// equals the center frequency.
    pub fn precharge_rotating(&mut self, u: Vec2, omega: f64, dt: f64) {
        self.retune(omega.abs(), dt);
        self.y = u;
        self.z = u / Vec2::new(0.0, omega);
        self.u_prev = u;
    }

    pub fn reset(&mut self) {
        self.y = Vec2::default();
        self.z = Vec2::default();
        self.u_prev = Vec2::default();
    }
}

/// Adaptive notch `G_ω(s) = (s² + 4ω²)/(s² + 4ζωs + 4ω²)`, nulling `2ω`.
#[derive(Debug, Clone)]
pub struct NotchFilter {
    bp: BandPass,
    zeta: f64,
}

impl NotchFilter {
    pub fn new(zeta: f64) -> Self {
        assert!(zeta > 0.0, "notch damping must be positive");
        Self { bp: BandPass::new(1.0), zeta }
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// One step of the notch tuned to the fundamental `omega` (rad/s).
    pub fn step(&mut self, u: Vec2, omega: f64, dt: f64) -> Vec2 {
        self.bp.set_alpha(4.0 * self.zeta * omega);
        u - self.bp.step(u, 2.0 * omega, dt)
    }

    pub fn precharge(&mut self, u: Vec2, omega: f64, dt: f64) {
        self.bp.set_alpha(4.0 * self.zeta * omega);
        self.bp.precharge_dc(u, 2.0 * omega, dt);
    }

    /// Steady state for a DC input plus a component rotating at `±2ω` whose
    /// value at the next step is `ripple`.
    pub fn precharge_with_ripple(&mut self, dc: Vec2, ripple: Vec2, counter_clockwise: bool, omega: f64, dt: f64) {
        self.bp.set_alpha(4.0 * self.zeta * omega);
        let w = if counter_clockwise { 2.0 * omega } else { -2.0 * omega };
        self.bp.precharge_steady(dc, ripple, w, 2.0 * omega, dt);
    }

    pub fn reset(&mut self) {
        self.bp.reset();
    }
}

/// First-order low-pass `ω_c/(s + ω_c)`.
#[derive(Debug, Clone)]
pub struct LowPass {
    y: Vec2,
    u_prev: Vec2,
    corner: f64,
}

impl LowPass {
    pub fn new(corner: f64) -> Self {
        assert!(corner > 0.0, "corner frequency must be positive");
        Self { y: Vec2::default(), u_prev: Vec2::default(), corner }
    }

    pub fn step(&mut self, u: Vec2, dt: f64) -> Vec2 {
        let k = self.corner * dt / 2.0;
        self.y = (self.y * (1.0 - k) + (self.u_prev + u) * k) / (1.0 + k);
        self.u_prev = u;
        self.y
    }

    pub fn step_scalar(&mut self, u: f64, dt: f64) -> f64 {
        self.step(Vec2::new(u, 0.0), dt).re
    }

    pub fn output(&self) -> Vec2 {
        self.y
    }

    pub fn precharge(&mut self, u: Vec2) {
        self.y = u;
        self.u_prev = u;
    }

    pub fn precharge_scalar(&mut self, u: f64) {
        self.precharge(Vec2::new(u, 0.0));
    }
}

/// First-order high-pass `s/(s + ω_c)`.
#[derive(Debug, Clone)]
pub struct HighPass {
    lp: LowPass,
}

impl HighPass {
    pub fn new(corner: f64) -> Self {
        Self { lp: LowPass::new(corner) }
    }

    pub fn step(&mut self, u: Vec2, dt: f64) -> Vec2 {
        u - self.lp.step(u, dt)
    }

    /// Pre-charges so that a constant `u` produces zero output.
    pub fn precharge(&mut self, u: Vec2) {
        self.lp.precharge(u);
    }
}
