//! Current reference limiters for balanced and unbalanced operation.

use std::f64::consts::PI;

use crate::frames::Vec2;

/// Phase offsets `λ_x` for phases a, b, c.
pub const PHASE_OFFSETS: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limited {
    pub pos: Vec2,
    pub neg: Vec2,
    /// Scale applied to the positive-sequence reference (1 when inactive).
    pub gamma: f64,
}

impl Limited {
    fn unchanged(pos: Vec2, neg: Vec2) -> Self {
        Self { pos, neg, gamma: 1.0 }
    }
}

fn cross_term(i_pos: Vec2, i_neg: Vec2, lambda: f64) -> f64 {
    (i_pos * i_neg * Vec2::from_polar(1.0, 2.0 * lambda)).re
}

/// Peak phase-current magnitudes produced by a positive/negative sequence pair.
pub fn phase_current_magnitudes(i_pos: Vec2, i_neg: Vec2) -> [f64; 3] {
    let base = i_pos.norm_sqr() + i_neg.norm_sqr();
    PHASE_OFFSETS.map(|l| (base + 2.0 * cross_term(i_pos, i_neg, l)).max(0.0).sqrt())
}

pub fn max_phase_current(i_pos: Vec2, i_neg: Vec2) -> f64 {
    phase_current_magnitudes(i_pos, i_neg).into_iter().fold(0.0, f64::max)
}

/// Magnitude limiter that preserves the reference angle.
pub fn limit_balanced(i_ref: Vec2, i_lim: f64) -> Limited {
    let m = i_ref.norm();
    if m <= i_lim {
        Limited::unchanged(i_ref, Vec2::default())
    } else {
        let g = i_lim / m;
        Limited { pos: i_ref * g, neg: Vec2::default(), gamma: g }
    }
}

/// Scales both sequences by the same factor so the worst phase sits at `i_lim`.
pub fn limit_equal_downscale(i_pos: Vec2, i_neg: Vec2, i_lim: f64) -> Limited {
    let worst = max_phase_current(i_pos, i_neg);
    if worst < i_lim {
        return Limited::unchanged(i_pos, i_neg);
    }
    let g = i_lim / worst;
    Limited { pos: i_pos * g, neg: i_neg * g, gamma: g }
}

/// Keeps the negative-sequence reference and shrinks the positive sequence
/// until the worst phase reaches `i_lim`.
pub fn limit_ns_priority(i_pos: Vec2, i_neg: Vec2, i_lim: f64) -> Limited {
    if max_phase_current(i_pos, i_neg) <= i_lim {
        return Limited::unchanged(i_pos, i_neg);
    }
    let n2 = i_neg.norm_sqr();
    let p2 = i_pos.norm_sqr();
    if n2 >= i_lim * i_lim || p2 == 0.0 {
        let neg = if n2 > i_lim * i_lim { i_neg * (i_lim / n2.sqrt()) } else { i_neg };
        return Limited { pos: Vec2::default(), neg, gamma: 0.0 };
    }
    let g = PHASE_OFFSETS
        .iter()
        .map(|&l| priority_scale(p2, n2, cross_term(i_pos, i_neg, l), i_lim))
        .fold(f64::INFINITY, f64::min);
    Limited { pos: i_pos * g, neg: i_neg, gamma: g }
}

/// Largest scale `s` with `s²·|i+|² + 2s·R + |i−|² ≤ I_lim²` for one phase.
fn priority_scale(p2: f64, n2: f64, r: f64, i_lim: f64) -> f64 {
    let disc = (p2 * (i_lim * i_lim - n2) + r * r).sqrt();
    // rationalised form avoids cancellation when r is large and positive
    if r > 0.0 {
        (i_lim * i_lim - n2) / (disc + r)
    } else {
        (disc - r) / p2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    /// Peak of each reconstructed phase waveform sampled over one period.
    fn waveform_peaks(i_pos: Vec2, i_neg: Vec2) -> [f64; 3] {
        let mut peaks = [0.0f64; 3];
        let n = 20_000;
        for k in 0..n {
            let th = 2.0 * PI * k as f64 / n as f64;
            let ab = i_pos * Vec2::from_polar(1.0, th) + i_neg * Vec2::from_polar(1.0, -th);
            let abc = crate::frames::inv_clarke(ab).to_array();
            for x in 0..3 {
                peaks[x] = peaks[x].max(abc[x].abs());
            }
        }
        peaks
    }

    #[test]
    fn magnitudes_example() {
        let m = phase_current_magnitudes(v(1.0, 0.0), v(0.5, 0.0));
        assert!((m[0] - 1.5).abs() < 1e-12);
        assert!((m[1] - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((m[2] - 0.75f64.sqrt()).abs() < 1e-12);
        let peaks = waveform_peaks(v(1.0, 0.0), v(0.5, 0.0));
        for x in 0..3 {
            assert!((peaks[x] - m[x]).abs() < 1e-6);
        }
        let bal = phase_current_magnitudes(v(0.3, 0.4), Vec2::default());
        assert!(bal.iter().all(|&x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn balanced_examples() {
        let l = limit_balanced(v(0.6, 0.8), 1.2);
        assert_eq!(l.pos, v(0.6, 0.8));
        let l = limit_balanced(v(1.2, 1.6), 1.2);
        assert!((l.pos - v(0.72, 0.96)).norm() < 1e-12);
    }

    #[test]
    fn equal_downscale_example() {
        let l = limit_equal_downscale(v(1.0, 0.0), v(0.5, 0.0), 1.2);
        assert!((l.gamma - 0.8).abs() < 1e-12);
        assert!((l.pos - v(0.8, 0.0)).norm() < 1e-12);
        assert!((l.neg - v(0.4, 0.0)).norm() < 1e-12);
        let peak = waveform_peaks(l.pos, l.neg).into_iter().fold(0.0, f64::max);
        assert!((peak - 1.2).abs() < 1e-6);
        let u = limit_equal_downscale(v(0.5, 0.0), v(0.1, 0.0), 1.2);
        assert_eq!(u.gamma, 1.0);
    }

    #[test]
    fn priority_examples() {
        let l = limit_ns_priority(v(1.0, 0.0), v(0.5, 0.0), 1.2);
        assert!((l.gamma - 0.7).abs() < 1e-12);
        assert!((l.pos - v(0.7, 0.0)).norm() < 1e-12);
        assert_eq!(l.neg, v(0.5, 0.0));
        assert!((max_phase_current(l.pos, l.neg) - 1.2).abs() < 1e-12);

        let l = limit_ns_priority(v(0.5, 0.0), v(1.3, 0.0), 1.2);
        assert_eq!(l.pos, Vec2::default());
        assert!((l.neg - v(1.2, 0.0)).norm() < 1e-12);

        let l = limit_ns_priority(v(0.5, 0.0), v(0.1, 0.0), 1.2);
        assert_eq!((l.pos, l.neg, l.gamma), (v(0.5, 0.0), v(0.1, 0.0), 1.0));

        let l = limit_ns_priority(Vec2::default(), v(0.0, 1.5), 1.2);
        assert_eq!(l.pos, Vec2::default());
        assert!((l.neg.norm() - 1.2).abs() < 1e-12);
    }

    fn bisect_scale(i_pos: Vec2, i_neg: Vec2, i_lim: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if max_phase_current(i_pos * mid, i_neg) > i_lim {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn vec2() -> impl Strategy<Value = Vec2> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y)| Vec2::new(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn limiters_are_safe(p in vec2(), n in vec2(), lim in 0.2f64..2.0) {
            for l in [limit_equal_downscale(p, n, lim), limit_ns_priority(p, n, lim)] {
                prop_assert!(max_phase_current(l.pos, l.neg) <= lim + 1e-9);
            }
            prop_assert!(limit_balanced(p, lim).pos.norm() <= lim + 1e-12);
        }

        #[test]
        fn balanced_preserves_angle(p in vec2(), lim in 0.2f64..2.0) {
            let l = limit_balanced(p, lim);
            if p.norm() > 1e-9 {
                prop_assert!((l.pos.arg() - p.arg()).abs() < 1e-12);
            }
        }

        #[test]
        fn equal_downscale_keeps_ratio(p in vec2(), n in vec2(), lim in 0.2f64..2.0) {
            prop_assume!(p.norm() > 1e-6);
            let l = limit_equal_downscale(p, n, lim);
            prop_assert!((l.neg / l.pos - n / p).norm() <= 1e-12 * (n / p).norm().max(1.0));
        }

        #[test]
        fn priority_is_tight(
            lim in 0.2f64..2.0,
            pm in 0.1f64..4.0,
            pa in -PI..PI,
            nm in 0.0f64..0.999,
            na in -PI..PI,
        ) {
            let p = Vec2::from_polar(pm * lim, pa);
            let n = Vec2::from_polar(nm * lim, na);
            prop_assume!(max_phase_current(p, n) > lim);
            let l = limit_ns_priority(p, n, lim);
            prop_assert!((max_phase_current(l.pos, l.neg) - lim).abs() < 1e-9);
            prop_assert!((l.gamma - bisect_scale(p, n, lim)).abs() < 1e-9);
        }

        #[test]
        fn magnitudes_invariant_under_time_shift(p in vec2(), n in vec2(), phi in -PI..PI) {
            let r = Vec2::from_polar(1.0, phi);
            let a = phase_current_magnitudes(p, n);
            let b = phase_current_magnitudes(p * r, n * r.conj());
            for x in 0..3 {
                prop_assert!((a[x] - b[x]).abs() < 1e-9);
            }
        }
    }
}
