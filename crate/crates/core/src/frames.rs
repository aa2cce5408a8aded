//! Reference-frame transforms and positive/negative sequence extraction.
//!
//! Vectors in a rotating or stationary frame are carried as complex numbers
//! `x + jy`. The Park transform used throughout is amplitude invariant and
//! drops the zero-sequence row:
//!
//! ```text
//! P(θ) · abc = e^{-jθ} · clarke(abc)
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::filters::NotchFilter;

/// Two-component vector in a (d,q) or (α,β) frame.
pub type Vec2 = Complex64;

const TWO_PI_3: f64 = 2.0 * PI / 3.0;

/// Instantaneous per-phase triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThreePhase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ThreePhase {
    pub const ZERO: ThreePhase = ThreePhase { a: 0.0, b: 0.0, c: 0.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a, self.b, self.c]
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }

    /// Balanced set `amplitude·cos(angle - k·2π/3)`, k = 0, 1, 2.
    pub fn balanced(amplitude: f64, angle: f64) -> Self {
        Self::new(
            amplitude * angle.cos(),
            amplitude * (angle - TWO_PI_3).cos(),
            amplitude * (angle + TWO_PI_3).cos(),
        )
    }

    pub fn zero_sequence(&self) -> f64 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn max_abs(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }
}

impl std::ops::Add for ThreePhase {
    type Output = ThreePhase;
    fn add(self, o: ThreePhase) -> ThreePhase {
        ThreePhase::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl std::ops::Sub for ThreePhase {
    type Output = ThreePhase;
    fn sub(self, o: ThreePhase) -> ThreePhase {
        ThreePhase::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl std::ops::Mul<f64> for ThreePhase {
    type Output = ThreePhase;
    fn mul(self, k: f64) -> ThreePhase {
        ThreePhase::new(self.a * k, self.b * k, self.c * k)
    }
}

/// Positive- and negative-sequence vectors, each in its own synchronous frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SequencePair {
    pub pos: Vec2,
    pub neg: Vec2,
}

/// Amplitude-invariant Clarke transform (zero sequence discarded).
pub fn clarke(abc: ThreePhase) -> Vec2 {
    let alpha = (2.0 * abc.a - abc.b - abc.c) / 3.0;
    let beta = (abc.b - abc.c) / 3f64.sqrt();
    Vec2::new(alpha, beta)
}

/// Inverse of [`clarke`] producing a zero-sequence-free triple.
pub fn inv_clarke(v: Vec2) -> ThreePhase {
    let s3 = 3f64.sqrt() / 2.0;
    ThreePhase::new(v.re, -0.5 * v.re + s3 * v.im, -0.5 * v.re - s3 * v.im)
}

/// `P(θ)·abc`.
pub fn park(theta: f64, abc: ThreePhase) -> Vec2 {
    let (s, c) = theta.sin_cos();
    let (s1, c1) = (theta - TWO_PI_3).sin_cos();
    let (s2, c2) = (theta + TWO_PI_3).sin_cos();
    let k = 2.0 / 3.0;
    Vec2::new(
        k * (c * abc.a + c1 * abc.b + c2 * abc.c),
        -k * (s * abc.a + s1 * abc.b + s2 * abc.c),
    )
}

/// Right inverse of [`park`]: `park(θ, inv_park(θ, v)) == v`.
pub fn inv_park(theta: f64, dq: Vec2) -> ThreePhase {
    let (s, c) = theta.sin_cos();
    let (s1, c1) = (theta - TWO_PI_3).sin_cos();
    let (s2, c2) = (theta + TWO_PI_3).sin_cos();
    ThreePhase::new(
        c * dq.re - s * dq.im,
        c1 * dq.re - s1 * dq.im,
        c2 * dq.re - s2 * dq.im,
    )
}

/// `R(θ)·v`.
pub fn rotate(theta: f64, v: Vec2) -> Vec2 {
    v * Vec2::from_polar(1.0, theta)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    } else if t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Notch-based dual-frame sequence extractor.
///
/// `pos = G_ω(P(θ)·abc)`, `neg = G_ω(P(−θ)·abc)`. The cross-coupling term in
/// each frame oscillates at 2ω and sits in the notch.
#[derive(Debug, Clone)]
pub struct SequenceExtractor {
    pos: NotchFilter,
    neg: NotchFilter,
}

impl SequenceExtractor {
    pub fn new(zeta: f64) -> Self {
        Self { pos: NotchFilter::new(zeta), neg: NotchFilter::new(zeta) }
    }

    /// Pre-charges both notches so their output equals `pair` from the first
    /// step, taken at angle `theta`.
    pub fn precharge(&mut self, pair: SequencePair, theta: f64, omega: f64, dt: f64) {
        let twice = Vec2::from_polar(1.0, 2.0 * theta);
        self.pos.precharge_with_ripple(pair.pos, pair.neg / twice, false, omega, dt);
        self.neg.precharge_with_ripple(pair.neg, pair.pos * twice, true, omega, dt);
    }

    pub fn extract(&mut self, abc: ThreePhase, theta: f64, omega: f64, dt: f64) -> SequencePair {
        SequencePair {
            pos: self.pos.step(park(theta, abc), omega, dt),
            neg: self.neg.step(park(-theta, abc), omega, dt),
        }
    }
}

/// Sequence vectors of a steady sinusoidal triple known by its phasors,
/// each given as `amplitude·e^{jφ}` with `x(t) = Re{X·e^{jωt}}`.
///
/// Returns the positive-sequence vector as seen in the frame `θ = ωt`, and the
/// negative-sequence vector as seen in the frame `θ = −ωt` (a conjugate phasor).
pub fn symmetrical_components(a: Vec2, b: Vec2, c: Vec2) -> SequencePair {
    let op = Vec2::from_polar(1.0, TWO_PI_3);
    let pos = (a + op * b + op * op * c) / 3.0;
    let neg = (a + op * op * b + op * c) / 3.0;
    SequencePair { pos, neg: neg.conj() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn park_balanced_cosine_at_zero() {
        let v = park(0.0, ThreePhase::new(1.0, -0.5, -0.5));
        assert!(close(v, Vec2::new(1.0, 0.0), 1e-12));
    }

    #[test]
    fn park_quarter_turn() {
        let v = park(PI / 2.0, ThreePhase::new(1.0, -0.5, -0.5));
        assert!(close(v, Vec2::new(0.0, -1.0), 1e-12), "{v}");
    }

    #[test]
    fn park_of_zero_is_zero() {
        assert_eq!(park(1.234, ThreePhase::ZERO), Vec2::new(0.0, 0.0));
        assert_eq!(inv_park(0.3, Vec2::new(0.0, 0.0)), ThreePhase::ZERO);
    }

    #[test]
    fn inv_park_of_unit_d() {
        let abc = inv_park(0.0, Vec2::new(1.0, 0.0));
        assert!((abc.a - 1.0).abs() < 1e-12);
        assert!((abc.b + 0.5).abs() < 1e-12);
        assert!((abc.c + 0.5).abs() < 1e-12);
    }

    #[test]
    fn park_matches_clarke_rotation() {
        let abc = ThreePhase::new(0.3, -1.1, 0.45);
        for k in 0..20 {
            let th = -3.0 + 0.3 * k as f64;
            assert!(close(park(th, abc), rotate(-th, clarke(abc)), 1e-12));
        }
        let z = abc.zero_sequence();
        let back = inv_clarke(clarke(abc)) + ThreePhase::new(z, z, z);
        assert!((back - abc).max_abs() < 1e-12);
    }

    #[test]
    fn rotation_examples() {
        assert!(close(rotate(PI / 2.0, Vec2::new(1.0, 0.0)), Vec2::new(0.0, 1.0), 1e-12));
        let v = Vec2::new(0.3, -0.7);
        assert_eq!(rotate(0.0, v), v);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn symmetrical_components_of_single_phase() {
        let one = Vec2::new(1.0, 0.0);
        let zero = Vec2::new(0.0, 0.0);
        let s = symmetrical_components(one, zero, zero);
        assert!((s.pos.norm() - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.neg.norm() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn precharged_extractor_has_no_start_transient() {
        let (w, dt, theta0) = (2.0 * PI * 50.0, 1.0 / 14000.0, 0.7);
        let pair = SequencePair { pos: Vec2::new(0.9, 0.1), neg: Vec2::new(-0.2, 0.15) };
        let mut ex = SequenceExtractor::new(0.7);
        ex.precharge(pair, theta0, w, dt);
        for k in 0..200 {
            let th = theta0 + w * dt * k as f64;
            let abc = inv_park(th, pair.pos) + inv_park(-th, pair.neg);
            let out = ex.extract(abc, th, w, dt);
            assert!(close(out.pos, pair.pos, 1e-9) && close(out.neg, pair.neg, 1e-9), "step {k}: {out:?}");
        }
    }
}
