//! State-space geometry: states, axis-aligned boxes, and finite unions of
//! boxes. Boxes are the only set representation used by the reach engine.

use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state entry {index} is not finite")]
    NonFinite { index: usize },
    #[error("box bounds out of order in dimension {dim}")]
    BoundsOutOfOrder { dim: usize },
    #[error("empty {what}")]
    Empty { what: &'static str },
}

/// Plant state vector. All entries finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(values: Vec<f64>) -> Result<Self, GeomError> {
        if values.is_empty() {
            return Err(GeomError::Empty { what: "state" });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GeomError::NonFinite { index: i });
            }
        }
        Ok(State(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn l1_distance(&self, other: &State) -> Result<f64, GeomError> {
        if self.dim() != other.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Scalar control input.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlAction(pub f64);

/// Interval of control values, used when propagating sets through the plant.
pub type ActionInterval = Interval;

/// Axis-aligned box in state space. Coordinates may be unbounded (infinite
/// endpoints), which goal regions use for unconstrained dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox(Vec<Interval>);

impl StateBox {
    pub fn new(dims: Vec<Interval>) -> Result<Self, GeomError> {
        if dims.is_empty() {
            return Err(GeomError::Empty { what: "box" });
        }
        Ok(StateBox(dims))
    }

    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self, GeomError> {
        if lower.len() != upper.len() {
            return Err(GeomError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(GeomError::Empty { what: "box" });
        }
        let mut dims = Vec::with_capacity(lower.len());
        for (d, (&lo, &hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(GeomError::BoundsOutOfOrder { dim: d });
            }
            dims.push(Interval { lo, hi });
        }
        Ok(StateBox(dims))
    }

    /// Degenerate box containing exactly one state.
    pub fn point(s: &State) -> Self {
        StateBox(s.values().iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dims(&self) -> &[Interval] {
        &self.0
    }

    pub fn dim_interval(&self, i: usize) -> &Interval {
        &self.0[i]
    }

    pub fn lower(&self) -> Vec<f64> {
        self.0.iter().map(|iv| iv.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.0.iter().map(|iv| iv.hi).collect()
    }

    pub fn center(&self) -> State {
        State(self.0.iter().map(|iv| iv.midpoint()).collect())
    }

    pub fn widths(&self) -> Vec<f64> {
        self.0.iter().map(|iv| iv.width()).collect()
    }

    pub fn max_width(&self) -> f64 {
        self.0.iter().map(|iv| iv.width()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|iv| iv.is_finite())
    }

    pub fn contains(&self, s: &State) -> bool {
        self.dim() == s.dim() && self.0.iter().zip(s.values()).all(|(iv, &v)| iv.contains(v))
    }

    pub fn contains_box(&self, other: &StateBox) -> bool {
        self.dim() == other.dim()
            && self
                .0
                .iter()
                .zip(other.0.iter())
                .all(|(a, b)| a.contains_interval(b))
    }

    pub fn intersect(&self, other: &StateBox) -> Option<StateBox> {
        if self.dim() != other.dim() {
            return None;
        }
        let mut dims = Vec::with_capacity(self.dim());
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            dims.push(a.intersect(b)?);
        }
        Some(StateBox(dims))
    }

    pub fn hull(&self, other: &StateBox) -> StateBox {
        debug_assert_eq!(self.dim(), other.dim());
        StateBox(
            self.0
                .iter()
                .zip(other.0.iter())
                .map(|(a, b)| a.hull(b))
                .collect(),
        )
    }

    /// Widen every coordinate outward by `r`.
    pub fn widen(&self, r: f64) -> StateBox {
        StateBox(self.0.iter().map(|iv| iv.widen(r)).collect())
    }

    /// Uniform sample from a bounded box. Degenerate intervals return their
    /// single point.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> State {
        State::new(
            self.0
                .iter()
                .map(|iv| iv.lo + rng.gen::<f64>() * (iv.hi - iv.lo))
                .collect(),
        )
        .expect("sampling a bounded box yields a finite state")
    }

    /// Squared-free distance from a state to the box under the l1 metric
    /// (zero when inside).
    pub fn l1_distance_to(&self, s: &State) -> f64 {
        self.0
            .iter()
            .zip(s.values())
            .map(|(iv, &v)| {
                if v < iv.lo {
                    iv.lo - v
                } else if v > iv.hi {
                    v - iv.hi
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Split into `pieces[d]` equal slices along each dimension, row-major
    /// over split indices. `pieces` entries must be >= 1.
    pub fn split(&self, pieces: &[usize]) -> Vec<StateBox> {
        debug_assert_eq!(pieces.len(), self.dim());
        let total: usize = pieces.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        loop {
            let mut dims = Vec::with_capacity(self.dim());
            for d in 0..self.dim() {
                let n = pieces[d].max(1);
                let iv = &self.0[d];
                if !iv.is_finite() || n == 1 {
                    dims.push(*iv);
                    continue;
                }
                let w = iv.width() / n as f64;
                let lo = iv.lo + idx[d] as f64 * w;
                let hi = if idx[d] + 1 == n { iv.hi } else { lo + w };
                dims.push(Interval::new(lo.min(hi), hi.max(lo)));
            }
            out.push(StateBox(dims));
            // odometer increment
            let mut d = self.dim();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < pieces[d].max(1) {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(|iv| iv.width()).product()
    }
}

/// Finite union of boxes of equal dimension. Never empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxUnion(Vec<StateBox>);

impl BoxUnion {
    pub fn new(boxes: Vec<StateBox>) -> Result<Self, GeomError> {
        if boxes.is_empty() {
            return Err(GeomError::Empty { what: "box union" });
        }
        let d = boxes[0].dim();
        for b in &boxes {
            if b.dim() != d {
                return Err(GeomError::DimensionMismatch {
                    expected: d,
                    got: b.dim(),
                });
            }
        }
        Ok(BoxUnion(boxes))
    }

    pub fn single(b: StateBox) -> Self {
        BoxUnion(vec![b])
    }

    pub fn boxes(&self) -> &[StateBox] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0[0].dim()
    }

    pub fn contains(&self, s: &State) -> bool {
        self.0.iter().any(|b| b.contains(s))
    }

    /// True when every member box lies inside `region`.
    pub fn inside(&self, region: &StateBox) -> bool {
        self.0.iter().all(|b| region.contains_box(b))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|b| b.is_finite())
    }

    pub fn hull(&self) -> StateBox {
        let mut h = self.0[0].clone();
        for b in &self.0[1..] {
            h = h.hull(b);
        }
        h
    }

    pub fn merge(mut self, other: BoxUnion) -> BoxUnion {
        self.0.extend(other.0);
        self
    }

    pub fn widen(&self, r: f64) -> BoxUnion {
        BoxUnion(self.0.iter().map(|b| b.widen(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxy(bounds: &[(f64, f64)]) -> StateBox {
        StateBox::from_bounds(
            &bounds.iter().map(|b| b.0).collect::<Vec<_>>(),
            &bounds.iter().map(|b| b.1).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn state_rejects_non_finite() {
        assert!(matches!(
            State::new(vec![0.0, f64::NAN]),
            Err(GeomError::NonFinite { index: 1 })
        ));
        assert!(State::new(vec![]).is_err());
    }

    #[test]
    fn l1_distance_matches_hand_value() {
        let a = State::new(vec![1.0, -2.0]).unwrap();
        let b = State::new(vec![-1.0, 1.0]).unwrap();
        assert_eq!(a.l1_distance(&b).unwrap(), 5.0);
    }

    #[test]
    fn box_rejects_reversed_bounds() {
        assert!(matches!(
            StateBox::from_bounds(&[1.0], &[0.0]),
            Err(GeomError::BoundsOutOfOrder { dim: 0 })
        ));
    }

    #[test]
    fn box_membership_and_containment() {
        let b = boxy(&[(0.0, 1.0), (-1.0, 1.0)]);
        assert!(b.contains(&State::new(vec![0.5, 0.0]).unwrap()));
        assert!(!b.contains(&State::new(vec![1.5, 0.0]).unwrap()));
        assert!(b.contains_box(&boxy(&[(0.25, 0.75), (0.0, 0.5)])));
        assert!(!b.contains_box(&boxy(&[(0.25, 1.2), (0.0, 0.5)])));
    }

    #[test]
    fn unbounded_goal_box_contains_large_values() {
        let g = StateBox::new(vec![
            Interval::new(0.45, f64::INFINITY),
            Interval::everything(),
        ])
        .unwrap();
        assert!(g.contains(&State::new(vec![100.0, -50.0]).unwrap()));
        assert!(!g.contains(&State::new(vec![0.0, 0.0]).unwrap()));
    }

    #[test]
    fn widen_grows_every_coordinate() {
        let b = boxy(&[(0.0, 1.0), (0.0, 1.0)]).widen(0.1);
        assert_eq!(b.lower(), vec![-0.1, -0.1]);
        assert_eq!(b.upper(), vec![1.1, 1.1]);
    }

    #[test]
    fn split_tiles_the_box_exactly() {
        let b = boxy(&[(0.0, 1.0), (0.0, 2.0)]);
        let parts = b.split(&[2, 4]);
        assert_eq!(parts.len(), 8);
        let vol: f64 = parts.iter().map(|p| p.volume()).sum();
        assert!((vol - b.volume()).abs() < 1e-12);
        // every part inside the parent, and parent corners covered
        for p in &parts {
            assert!(b.contains_box(p));
        }
        assert!(parts.iter().any(|p| p.lower() == vec![0.0, 0.0]));
        assert!(parts.iter().any(|p| p.upper() == vec![1.0, 2.0]));
    }

    #[test]
    fn union_membership_and_hull() {
        let u = BoxUnion::new(vec![boxy(&[(0.0, 1.0)]), boxy(&[(2.0, 3.0)])]).unwrap();
        assert!(u.contains(&State::new(vec![2.5]).unwrap()));
        assert!(!u.contains(&State::new(vec![1.5]).unwrap()));
        assert_eq!(u.hull(), boxy(&[(0.0, 3.0)]));
        assert!(u.inside(&boxy(&[(-1.0, 4.0)])));
        assert!(!u.inside(&boxy(&[(0.0, 2.5)])));
    }
}
