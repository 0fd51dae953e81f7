//! Scalar interval arithmetic used by the set-valued plant step and the
//! interval network evaluator.
//!
//! Every operation returns an interval that contains the exact image of its
//! argument intervals. Transcendental enclosures (sin, cos, tanh, sigmoid)
//! are computed by monotonic-piece analysis and then widened by a few ulps to
//! absorb libm rounding, so the containment property survives floating-point
//! evaluation of the underlying function at any point of the input interval.

use serde::{Deserialize, Serialize};

/// Multiplicative slack applied to transcendental endpoint images.
/// Covers worst-case libm error (< 2 ulp) with margin to spare while staying
/// far below every tolerance used by callers (1e-12 and up).
const TRANS_SLACK: f64 = 4.0 * f64::EPSILON;

/// Closed interval `[lo, hi]`. Endpoints may be infinite; `lo <= hi` always.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    /// Interval from ordered endpoints. Panics if `lo > hi` or either is NaN;
    /// those are programming errors, not runtime conditions.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(!lo.is_nan() && !hi.is_nan(), "interval endpoint is NaN");
        assert!(lo <= hi, "interval endpoints out of order: [{lo}, {hi}]");
        Interval { lo, hi }
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Self {
        Interval::new(x, x)
    }

    pub fn everything() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Some(Interval { lo, hi })
        } else {
            None
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Widen both endpoints outward by `r >= 0`.
    pub fn widen(&self, r: f64) -> Interval {
        debug_assert!(r >= 0.0, "widening radius must be non-negative");
        Interval {
            lo: self.lo - r,
            hi: self.hi + r,
        }
    }

    pub fn add(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo + other.lo,
            hi: self.hi + other.hi,
        }
    }

    pub fn sub(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo - other.hi,
            hi: self.hi - other.lo,
        }
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub fn add_scalar(&self, c: f64) -> Interval {
        Interval {
            lo: self.lo + c,
            hi: self.hi + c,
        }
    }

    /// Multiply by a scalar (sign-aware).
    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval {
                lo: self.lo * c,
                hi: self.hi * c,
            }
        } else {
            Interval {
                lo: self.hi * c,
                hi: self.lo * c,
            }
        }
    }

    /// Interval product; min/max over the four endpoint products.
    pub fn mul(&self, other: &Interval) -> Interval {
        let products = [
            mul_guard(self.lo, other.lo),
            mul_guard(self.lo, other.hi),
            mul_guard(self.hi, other.lo),
            mul_guard(self.hi, other.hi),
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in products {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        Interval { lo, hi }
    }

    /// Interval quotient. When the divisor straddles zero the quotient is
    /// unbounded; the whole line is returned so that downstream blow-up
    /// detection can report divergence instead of propagating NaN.
    pub fn div(&self, other: &Interval) -> Interval {
        if other.contains(0.0) {
            return Interval::everything();
        }
        let quotients = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for q in quotients {
            lo = lo.min(q);
            hi = hi.max(q);
        }
        Interval { lo, hi }
    }

    /// Enclosure of `x^2`; never dips below zero even when the input
    /// straddles the origin.
    pub fn square(&self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.contains(0.0) {
            Interval {
                lo: 0.0,
                hi: a.max(b),
            }
        } else {
            Interval {
                lo: a.min(b),
                hi: a.max(b),
            }
        }
    }

    /// Enclosure of sin over the interval: endpoint values plus any interior
    /// critical points (odd multiples of pi/2), with ulp slack.
    pub fn sin(&self) -> Interval {
        if !self.is_finite() || self.width() >= 2.0 * std::f64::consts::PI {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let mut lo = self.lo.sin().min(self.hi.sin());
        let mut hi = self.lo.sin().max(self.hi.sin());
        // sin attains +1 at pi/2 + 2k*pi and -1 at -pi/2 + 2k*pi.
        if contains_critical(self, std::f64::consts::FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_critical(self, -std::f64::consts::FRAC_PI_2) {
            lo = -1.0;
        }
        widen_unit(lo, hi)
    }

    /// Enclosure of cos over the interval; critical points at even and odd
    /// multiples of pi.
    pub fn cos(&self) -> Interval {
        if !self.is_finite() || self.width() >= 2.0 * std::f64::consts::PI {
            return Interval { lo: -1.0, hi: 1.0 };
        }
        let mut lo = self.lo.cos().min(self.hi.cos());
        let mut hi = self.lo.cos().max(self.hi.cos());
        if contains_critical(self, 0.0) {
            hi = 1.0;
        }
        if contains_critical(self, std::f64::consts::PI) {
            lo = -1.0;
        }
        widen_unit(lo, hi)
    }

    /// Enclosure of tanh (monotone: endpoint images with ulp slack).
    pub fn tanh(&self) -> Interval {
        widen_unit(self.lo.tanh(), self.hi.tanh())
    }

    /// Enclosure of the logistic sigmoid (monotone).
    pub fn sigmoid(&self) -> Interval {
        let lo = crate::controllers::sigmoid(self.lo);
        let hi = crate::controllers::sigmoid(self.hi);
        let slack_lo = (lo - TRANS_SLACK).max(0.0);
        let slack_hi = (hi + TRANS_SLACK).min(1.0);
        Interval {
            lo: slack_lo,
            hi: slack_hi,
        }
    }

    /// Clamp the interval into `[bound.lo, bound.hi]` (image of the pointwise
    /// clamp function, which is monotone).
    pub fn clamp_to(&self, bound: &Interval) -> Interval {
        Interval {
            lo: self.lo.clamp(bound.lo, bound.hi),
            hi: self.hi.clamp(bound.lo, bound.hi),
        }
    }
}

/// IEEE multiplication maps 0 * inf to NaN; for interval endpoints the exact
/// product of a zero-width factor is zero.
fn mul_guard(a: f64, b: f64) -> f64 {
    let p = a * b;
    if p.is_nan() && (a == 0.0 || b == 0.0) {
        0.0
    } else {
        p
    }
}

/// True when some point `c + 2k*pi` lies inside the interval.
fn contains_critical(iv: &Interval, c: f64) -> bool {
    let tau = 2.0 * std::f64::consts::PI;
    let k = ((iv.lo - c) / tau).ceil();
    c + k * tau <= iv.hi
}

/// Outward slack for a function with range [-1, 1].
fn widen_unit(lo: f64, hi: f64) -> Interval {
    Interval {
        lo: (lo - TRANS_SLACK).max(-1.0),
        hi: (hi + TRANS_SLACK).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn point_interval_has_zero_width() {
        let p = Interval::point(1.5);
        assert_eq!(p.width(), 0.0);
        assert!(p.contains(1.5));
    }

    #[test]
    #[should_panic(expected = "out of order")]
    fn reversed_endpoints_panic() {
        Interval::new(1.0, 0.0);
    }

    #[test]
    fn arithmetic_endpoints() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(3.0, 5.0);
        assert_eq!(a.add(&b), Interval::new(2.0, 7.0));
        assert_eq!(a.sub(&b), Interval::new(-6.0, -1.0));
        assert_eq!(a.scale(-2.0), Interval::new(-4.0, 2.0));
        assert_eq!(a.mul(&b), Interval::new(-5.0, 10.0));
    }

    #[test]
    fn square_straddling_zero_is_nonnegative() {
        let s = Interval::new(-2.0, 1.0).square();
        assert_eq!(s.lo, 0.0);
        assert_eq!(s.hi, 4.0);
    }

    #[test]
    fn division_by_sign_definite_interval() {
        let q = Interval::new(1.0, 2.0).div(&Interval::new(2.0, 4.0));
        assert!(q.lo <= 0.25 && q.hi >= 1.0);
        assert!(q.is_finite());
    }

    #[test]
    fn division_through_zero_is_unbounded() {
        let q = Interval::new(1.0, 2.0).div(&Interval::new(-1.0, 1.0));
        assert!(!q.is_finite());
    }

    #[test]
    fn sin_enclosure_includes_peak() {
        let s = Interval::new(1.0, 2.0).sin();
        // pi/2 is interior, so the max is exactly 1.
        assert_eq!(s.hi, 1.0);
        assert!(s.lo <= (2.0f64).sin());
    }

    #[test]
    fn cos_enclosure_includes_trough() {
        let c = Interval::new(3.0, 3.3).cos();
        assert_eq!(c.lo, -1.0);
    }

    #[test]
    fn wide_interval_saturates_trig() {
        let s = Interval::new(0.0, 10.0).sin();
        assert_eq!(s, Interval::new(-1.0, 1.0));
    }

    #[test]
    fn clamp_to_bound() {
        let v = Interval::new(-3.0, 0.5);
        let c = v.clamp_to(&Interval::new(-1.0, 1.0));
        assert_eq!(c, Interval::new(-1.0, 0.5));
    }

    // ==================== sampled soundness ====================

    #[test]
    fn sampled_images_stay_inside_enclosures() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let a: f64 = rng.gen_range(-7.0..7.0);
            let b: f64 = rng.gen_range(-7.0..7.0);
            let iv = Interval::new(a.min(b), a.max(b));
            let t = rng.gen_range(0.0..=1.0);
            let x = iv.lo + t * (iv.hi - iv.lo);
            assert!(iv.sin().contains(x.sin()), "sin escaped at {x}");
            assert!(iv.cos().contains(x.cos()), "cos escaped at {x}");
            assert!(iv.tanh().contains(x.tanh()), "tanh escaped at {x}");
            assert!(iv.square().contains(x * x), "square escaped at {x}");
        }
    }

    #[test]
    fn sampled_products_stay_inside_enclosures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let bounds: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = Interval::new(bounds[0].min(bounds[1]), bounds[0].max(bounds[1]));
            let q = Interval::new(bounds[2].min(bounds[3]), bounds[2].max(bounds[3]));
            let x = p.lo + rng.gen_range(0.0..=1.0) * p.width();
            let y = q.lo + rng.gen_range(0.0..=1.0) * q.width();
            assert!(p.mul(&q).contains(x * y));
        }
    }
}
