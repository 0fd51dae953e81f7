//! Reach tubes for closed loops driven by interval-bounded actions.
//!
//! A tube is a sequence of box unions, one per time step, whose element `t`
//! contains every state the closed loop can occupy at step `t` when started
//! anywhere in the initial region. The per-step image combines two sound
//! enclosures and intersects them:
//!
//! * plain propagation: evaluate the controller's output range over the
//!   current box (optionally over a sub-grid of the box, re-hulling the
//!   images), widen it by the action discrepancy bound, clamp to the
//!   actuation range, and push the box through the plant's interval step;
//! * a mean-value form: roll the exact center trajectory forward and track
//!   an interval matrix `M` and remainder `R` with
//!   `state(t) - center(t) in M * (region - center(0)) + R`, updated through
//!   enclosures of the closed-loop step Jacobian. This preserves first-order
//!   correlations between coordinates that plain interval propagation
//!   forgets, which is what keeps tubes contracting when the closed loop
//!   contracts.
//!
//! The mean-value rows are padded by a few ulps before intersecting so that
//! floating-point rollouts sitting exactly on a face cannot leak out. Plants
//! without a closed-form step Jacobian fall back to plain propagation.
//!
//! Discrepancy bounds enter in the two ways the pipeline uses them: action
//! bounds widen the per-step action interval before clamping (clamping is
//! applied after widening), and trajectory bounds widen every box of a
//! finished tube per axis. Per-axis widening over-approximates the exact
//! L1-ball sum, which keeps the boxes axis-aligned. An infinite bound cannot
//! certify anything: those tubes degenerate to a sentinel of unbounded boxes
//! and are flagged unverifiable, and goal checks on them always fail.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{DiscrepancyBound, DiscrepancyKind};
use crate::controllers::{ControllerError, LdcNetwork};
use crate::dynamics::{
    step, step_interval, step_jacobian_interval, DynamicsError, Plant, PlantParams,
};
use crate::geom::{BoxUnion, ControlAction, GeomError, State, StateBox};
use crate::interval::Interval;

/// Relative ulp padding applied to each mean-value row before intersecting
/// with the plain image, absorbing rounding differences between the scalar
/// center rollout and the interval algebra around it.
const MEAN_VALUE_PAD_ULPS: f64 = 4.0;

#[derive(Debug, Error)]
pub enum ReachError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("reach set diverged to an unbounded box at step {step}")]
    Diverged { step: usize },
    #[error("expected a {} bound, got a {} bound", expected.name(), got.name())]
    KindMismatch {
        expected: DiscrepancyKind,
        got: DiscrepancyKind,
    },
    #[error("discrepancy bound must be non-negative, got {0}")]
    NegativeBound(f64),
    #[error("tube horizons differ: {first} vs {got}")]
    HorizonMismatch { first: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("cannot union an empty list of tubes")]
    EmptyUnion,
    #[error("no regional controllers supplied")]
    NoControllers,
    #[error("goal check starts at step {start} but the tube ends at step {horizon}")]
    StepBeyondHorizon { start: usize, horizon: usize },
    #[error("initial region must be bounded")]
    UnboundedRegion,
}

/// Which part of a tube a goal condition constrains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalMode {
    /// Only the final reach set must lie inside the goal.
    FinalSet,
    /// Every reach set from the given step onward must lie inside the goal.
    FromStep(usize),
}

/// Where a tube came from: the initial region, the controllers that drove
/// it, and the discrepancy inflation applied to it, if any.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeProvenance {
    pub region: StateBox,
    pub controller_ids: Vec<usize>,
    pub inflation: Option<(DiscrepancyKind, f64)>,
}

/// A reachable-set tube: `sets.len() == horizon + 1` and `sets[0]` covers
/// the initial region. `unverifiable` marks sentinel tubes produced from
/// infinite discrepancy bounds; they fail every goal check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachTube {
    pub sets: Vec<BoxUnion>,
    pub provenance: TubeProvenance,
    pub unverifiable: bool,
    /// True when a switched propagation had to cover states outside every
    /// controller's home region.
    pub fallback_used: bool,
}

impl ReachTube {
    pub fn horizon(&self) -> usize {
        self.sets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn final_set(&self) -> &BoxUnion {
        self.sets.last().expect("tube always has an initial set")
    }
}

/// Propagation knobs. `split_depth` sub-grids each box into `2^depth`
/// pieces per dimension before the plain step (0 disables splitting);
/// `centered` enables the mean-value engine where the plant supports it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachOptions {
    pub split_depth: usize,
    pub centered: bool,
}

impl Default for ReachOptions {
    fn default() -> Self {
        ReachOptions {
            split_depth: 1,
            centered: true,
        }
    }
}

impl ReachOptions {
    /// Defaults tuned per plant: the two-dimensional plants benefit from one
    /// level of sub-gridding plus the mean-value engine; the cart-pole's
    /// step has no closed-form Jacobian enclosure, so it propagates plainly.
    pub fn for_plant(params: &PlantParams) -> Self {
        match params.plant {
            Plant::InvertedPendulum { .. } | Plant::MountainCar { .. } => ReachOptions {
                split_depth: 1,
                centered: true,
            },
            Plant::CartPole { .. } => ReachOptions {
                split_depth: 0,
                centered: false,
            },
            Plant::Frozen { .. } => ReachOptions {
                split_depth: 0,
                centered: true,
            },
        }
    }
}

// ==================== propagation core ====================

/// One plain step: controller range over the box (sub-gridded when asked),
/// widened by `gamma`, clamped to actuation, pushed through the interval
/// step, images re-hulled.
fn plain_step(
    net: &LdcNetwork,
    params: &PlantParams,
    current: &StateBox,
    gamma: f64,
    split_depth: usize,
) -> Result<StateBox, ReachError> {
    let pieces = if split_depth == 0 {
        vec![current.clone()]
    } else {
        current.split(&vec![1usize << split_depth; current.dim()])
    };
    let mut hull: Option<StateBox> = None;
    for piece in &pieces {
        let range = net.eval_interval(piece)?;
        let action = range.widen(gamma).clamp_to(&params.actuation);
        let image = step_interval(params, piece, &action)?;
        hull = Some(match hull {
            None => image,
            Some(h) => h.hull(&image),
        });
    }
    Ok(hull.expect("a box splits into at least one piece"))
}

/// Mean-value carry: exact center trajectory plus the interval matrix and
/// remainder relating deviations at time `t` back to the initial deviation.
struct MeanValueCarry {
    center: State,
    matrix: Vec<Vec<Interval>>,
    remainder: Vec<Interval>,
    delta0: Vec<Interval>,
}

impl MeanValueCarry {
    fn new(region: &StateBox) -> Self {
        let d = region.dim();
        let center = region.center();
        let delta0 = (0..d)
            .map(|i| {
                let iv = region.dim_interval(i);
                let c = center[i];
                Interval::new(iv.lo - c, iv.hi - c)
            })
            .collect();
        let matrix = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| Interval::point(if i == j { 1.0 } else { 0.0 }))
                    .collect()
            })
            .collect();
        MeanValueCarry {
            center,
            matrix,
            remainder: vec![Interval::point(0.0); d],
            delta0,
        }
    }

    /// Advance the carry through one closed-loop step and return the
    /// enclosure of the next reach set. `current` is the box the true states
    /// at time `t` are known to lie in.
    fn advance(
        &mut self,
        net: &LdcNetwork,
        params: &PlantParams,
        current: &StateBox,
        gamma: f64,
    ) -> Result<StateBox, ReachError> {
        let d = current.dim();
        // The Jacobians must cover the segment from the center to any true
        // state, so evaluate them over the hull of both.
        let jbox = current.hull(&StateBox::point(&self.center));
        let (j_state, j_action) =
            step_jacobian_interval(params, &jbox).expect("engine enabled only with Jacobians");
        let grad = net.jacobian_interval(&jbox)?;

        // Slope range of the actuation clamp over the widened action range:
        // identity when the range stays strictly inside, flat when it sits
        // entirely outside, and the full [0, 1] envelope when it touches.
        let range = net.eval_interval(&jbox)?.widen(gamma);
        let act = &params.actuation;
        let clamp_slope = if range.lo > act.hi || range.hi < act.lo {
            Interval::point(0.0)
        } else if range.hi > act.hi || range.lo < act.lo {
            Interval::new(0.0, 1.0)
        } else {
            Interval::point(1.0)
        };

        // Closed-loop Jacobian rows: d step_i / d state_j plus the action
        // channel routed through the clamp and the controller gradient.
        let mut j_loop = vec![vec![Interval::point(0.0); d]; d];
        for i in 0..d {
            let channel = j_action[i].mul(&clamp_slope);
            for j in 0..d {
                j_loop[i][j] = j_state[i][j].add(&channel.mul(&grad[j]));
            }
        }

        let gamma_iv = Interval::new(-gamma, gamma);
        let mut matrix_next = vec![vec![Interval::point(0.0); d]; d];
        let mut remainder_next = vec![Interval::point(0.0); d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = Interval::point(0.0);
                for (k, m_row) in self.matrix.iter().enumerate() {
                    acc = acc.add(&j_loop[i][k].mul(&m_row[j]));
                }
                matrix_next[i][j] = acc;
            }
            let mut acc = Interval::point(0.0);
            for (k, r) in self.remainder.iter().enumerate() {
                acc = acc.add(&j_loop[i][k].mul(r));
            }
            remainder_next[i] = acc.add(&j_action[i].mul(&clamp_slope).mul(&gamma_iv));
        }

        let raw = net.eval(&self.center)?;
        let applied = ControlAction(params.clamp_action(raw));
        let center_next = step(params, &self.center, applied)?;

        let mut dims = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = Interval::point(center_next[i]);
            let mut magnitude = center_next[i].abs();
            for j in 0..d {
                let term = matrix_next[i][j].mul(&self.delta0[j]);
                magnitude += term.lo.abs().max(term.hi.abs());
                acc = acc.add(&term);
            }
            magnitude += remainder_next[i].lo.abs().max(remainder_next[i].hi.abs());
            acc = acc.add(&remainder_next[i]);
            let pad = MEAN_VALUE_PAD_ULPS * f64::EPSILON * magnitude.max(1.0);
            dims.push(Interval::new(acc.lo - pad, acc.hi + pad));
        }

        self.center = center_next;
        self.matrix = matrix_next;
        self.remainder = remainder_next;
        Ok(StateBox::new(dims)?)
    }
}

/// Shared propagation loop; `gamma` must be finite and non-negative here.
fn propagate(
    net: &LdcNetwork,
    params: &PlantParams,
    region: &StateBox,
    horizon: usize,
    gamma: f64,
    opts: &ReachOptions,
) -> Result<Vec<StateBox>, ReachError> {
    if !region.is_finite() {
        return Err(ReachError::UnboundedRegion);
    }
    if region.dim() != params.state_dim() {
        return Err(ReachError::DimMismatch {
            expected: params.state_dim(),
            got: region.dim(),
        });
    }
    let mut carry = if opts.centered && step_jacobian_interval(params, region).is_some() {
        Some(MeanValueCarry::new(region))
    } else {
        None
    };
    let mut sets = Vec::with_capacity(horizon + 1);
    sets.push(region.clone());
    for t in 0..horizon {
        let current = &sets[t];
        let plain = plain_step(net, params, current, gamma, opts.split_depth)?;
        let next = match carry.as_mut() {
            Some(c) => {
                let centered = c.advance(net, params, current, gamma)?;
                centered.intersect(&plain).unwrap_or(plain)
            }
            None => plain,
        };
        if !next.is_finite() {
            return Err(ReachError::Diverged { step: t + 1 });
        }
        sets.push(next);
    }
    Ok(sets)
}

fn sentinel_tube(dim: usize, horizon: usize, provenance: TubeProvenance) -> ReachTube {
    let everything = StateBox::new(vec![Interval::everything(); dim])
        .expect("unbounded boxes are representable");
    ReachTube {
        sets: vec![BoxUnion::single(everything); horizon + 1],
        provenance,
        unverifiable: true,
        fallback_used: false,
    }
}

fn check_bound_value(bound: &DiscrepancyBound) -> Result<(), ReachError> {
    if bound.value.is_nan() || bound.value < 0.0 {
        return Err(ReachError::NegativeBound(bound.value));
    }
    Ok(())
}

// ==================== tube constructors ====================

/// Tube of the closed loop under the controller alone: each step applies the
/// controller's interval output (clamped to actuation) to the plant's
/// interval step.
pub fn reach_tube_ldc(
    net: &LdcNetwork,
    params: &PlantParams,
    region: &StateBox,
    horizon: usize,
    opts: &ReachOptions,
) -> Result<ReachTube, ReachError> {
    let sets = propagate(net, params, region, horizon, 0.0, opts)?;
    Ok(ReachTube {
        sets: sets.into_iter().map(BoxUnion::single).collect(),
        provenance: TubeProvenance {
            region: region.clone(),
            controller_ids: vec![0],
            inflation: None,
        },
        unverifiable: false,
        fallback_used: false,
    })
}

/// Tube under the controller plus any per-step action disturbance up to the
/// given bound: the action interval is widened by the bound first, then
/// clamped to actuation. With a zero bound this coincides exactly with
/// [`reach_tube_ldc`]. An infinite bound yields an unverifiable sentinel.
pub fn reach_tube_action_inflated(
    net: &LdcNetwork,
    params: &PlantParams,
    region: &StateBox,
    horizon: usize,
    bound: &DiscrepancyBound,
    opts: &ReachOptions,
) -> Result<ReachTube, ReachError> {
    if bound.kind != DiscrepancyKind::Action {
        return Err(ReachError::KindMismatch {
            expected: DiscrepancyKind::Action,
            got: bound.kind,
        });
    }
    check_bound_value(bound)?;
    let provenance = TubeProvenance {
        region: region.clone(),
        controller_ids: vec![0],
        inflation: Some((DiscrepancyKind::Action, bound.value)),
    };
    if !bound.value.is_finite() {
        return Ok(sentinel_tube(region.dim(), horizon, provenance));
    }
    let sets = propagate(net, params, region, horizon, bound.value, opts)?;
    Ok(ReachTube {
        sets: sets.into_iter().map(BoxUnion::single).collect(),
        provenance,
        unverifiable: false,
        fallback_used: false,
    })
}

/// Widen every box of a finished tube by a trajectory discrepancy bound,
/// per axis. This over-approximates the L1 ball around the tube. An
/// infinite bound yields an unverifiable sentinel; inflating a sentinel
/// keeps the sentinel.
pub fn inflate_tube_trajectory(
    tube: &ReachTube,
    bound: &DiscrepancyBound,
) -> Result<ReachTube, ReachError> {
    if bound.kind != DiscrepancyKind::Trajectory {
        return Err(ReachError::KindMismatch {
            expected: DiscrepancyKind::Trajectory,
            got: bound.kind,
        });
    }
    check_bound_value(bound)?;
    let mut provenance = tube.provenance.clone();
    provenance.inflation = Some((DiscrepancyKind::Trajectory, bound.value));
    if tube.unverifiable || !bound.value.is_finite() {
        let mut out = sentinel_tube(tube.dim(), tube.horizon(), provenance);
        out.fallback_used = tube.fallback_used;
        return Ok(out);
    }
    Ok(ReachTube {
        sets: tube.sets.iter().map(|u| u.widen(bound.value)).collect(),
        provenance,
        unverifiable: false,
        fallback_used: tube.fallback_used,
    })
}

/// Element-wise union of tubes over the same horizon.
pub fn union_tubes(tubes: &[ReachTube]) -> Result<ReachTube, ReachError> {
    let first = tubes.first().ok_or(ReachError::EmptyUnion)?;
    for tube in &tubes[1..] {
        if tube.horizon() != first.horizon() {
            return Err(ReachError::HorizonMismatch {
                first: first.horizon(),
                got: tube.horizon(),
            });
        }
        if tube.dim() != first.dim() {
            return Err(ReachError::DimMismatch {
                expected: first.dim(),
                got: tube.dim(),
            });
        }
    }
    let mut sets = Vec::with_capacity(first.horizon() + 1);
    for t in 0..=first.horizon() {
        let mut boxes = Vec::new();
        for tube in tubes {
            boxes.extend_from_slice(tube.sets[t].boxes());
        }
        sets.push(BoxUnion::new(boxes)?);
    }
    let mut region = first.provenance.region.clone();
    let mut controller_ids = Vec::new();
    for tube in tubes {
        region = region.hull(&tube.provenance.region);
        for id in &tube.provenance.controller_ids {
            if !controller_ids.contains(id) {
                controller_ids.push(*id);
            }
        }
    }
    let inflation = if tubes
        .iter()
        .all(|t| t.provenance.inflation == first.provenance.inflation)
    {
        first.provenance.inflation
    } else {
        None
    };
    Ok(ReachTube {
        sets,
        provenance: TubeProvenance {
            region,
            controller_ids,
            inflation,
        },
        unverifiable: tubes.iter().any(|t| t.unverifiable),
        fallback_used: tubes.iter().any(|t| t.fallback_used),
    })
}

// ==================== switched propagation ====================

/// A controller tied to the region it was calibrated on.
#[derive(Clone, Debug)]
pub struct RegionalController {
    pub id: usize,
    pub net: LdcNetwork,
    pub home: StateBox,
    pub gamma: f64,
}

/// True when the union of `homes` provably covers `b`: either one home
/// contains the whole box, or some home boundary cuts the box into halves
/// that are each covered. Exact for finite unions of boxes.
fn union_covers(homes: &[&StateBox], b: &StateBox) -> bool {
    if homes.iter().any(|h| h.contains_box(b)) {
        return true;
    }
    for h in homes {
        if h.intersect(b).is_none() {
            continue;
        }
        for d in 0..b.dim() {
            let iv = b.dim_interval(d);
            for cut in [h.dim_interval(d).lo, h.dim_interval(d).hi] {
                if iv.lo < cut && cut < iv.hi {
                    let mut lo_dims = b.dims().to_vec();
                    let mut hi_dims = b.dims().to_vec();
                    lo_dims[d] = Interval::new(iv.lo, cut);
                    hi_dims[d] = Interval::new(cut, iv.hi);
                    let lo_box = StateBox::new(lo_dims).expect("finite split halves");
                    let hi_box = StateBox::new(hi_dims).expect("finite split halves");
                    return union_covers(homes, &lo_box) && union_covers(homes, &hi_box);
                }
            }
        }
    }
    false
}

/// Propagate a region under per-region controllers: at each step every box
/// is intersected with each controller's home region and the piece is
/// propagated with that controller and its action bound; the images of one
/// controller are re-hulled so the union stays bounded by the controller
/// count. Where a box is not provably covered by the homes, the whole box
/// is additionally propagated under every controller and the tube is
/// flagged, which covers any rule for picking a controller outside the
/// homes. An infinite action bound yields an unverifiable sentinel.
pub fn reach_tube_switched(
    controllers: &[RegionalController],
    params: &PlantParams,
    region: &StateBox,
    horizon: usize,
    opts: &ReachOptions,
) -> Result<ReachTube, ReachError> {
    if controllers.is_empty() {
        return Err(ReachError::NoControllers);
    }
    if !region.is_finite() {
        return Err(ReachError::UnboundedRegion);
    }
    let ids: Vec<usize> = controllers.iter().map(|c| c.id).collect();
    let provenance = TubeProvenance {
        region: region.clone(),
        controller_ids: ids,
        inflation: None,
    };
    for c in controllers {
        if c.gamma.is_nan() || c.gamma < 0.0 {
            return Err(ReachError::NegativeBound(c.gamma));
        }
        if c.home.dim() != region.dim() {
            return Err(ReachError::DimMismatch {
                expected: region.dim(),
                got: c.home.dim(),
            });
        }
    }
    if controllers.iter().any(|c| c.gamma.is_infinite()) {
        return Ok(sentinel_tube(region.dim(), horizon, provenance));
    }

    let homes: Vec<&StateBox> = controllers.iter().map(|c| &c.home).collect();
    let mut fallback_used = false;
    let mut sets = vec![BoxUnion::single(region.clone())];
    let mut current = vec![region.clone()];
    for t in 0..horizon {
        // One image bucket per controller, re-hulled as pieces come in.
        let mut buckets: Vec<Option<StateBox>> = vec![None; controllers.len()];
        let absorb = |bucket: &mut Option<StateBox>, image: StateBox| {
            *bucket = Some(match bucket.take() {
                None => image,
                Some(h) => h.hull(&image),
            });
        };
        for b in &current {
            let mut any_piece = false;
            for (c, bucket) in controllers.iter().zip(&mut buckets) {
                if let Some(piece) = c.home.intersect(b) {
                    let image = plain_step(&c.net, params, &piece, c.gamma, opts.split_depth)?;
                    absorb(bucket, image);
                    any_piece = true;
                }
            }
            if !any_piece || !union_covers(&homes, b) {
                fallback_used = true;
                for (c, bucket) in controllers.iter().zip(&mut buckets) {
                    let image = plain_step(&c.net, params, b, c.gamma, opts.split_depth)?;
                    absorb(bucket, image);
                }
            }
        }
        current = buckets.into_iter().flatten().collect();
        if current.iter().any(|b| !b.is_finite()) {
            return Err(ReachError::Diverged { step: t + 1 });
        }
        sets.push(BoxUnion::new(current.clone())?);
    }
    Ok(ReachTube {
        sets,
        provenance,
        unverifiable: false,
        fallback_used,
    })
}

// ==================== goal checks ====================

/// Decide whether a tube certifies the goal: with [`GoalMode::FinalSet`]
/// only the final reach set must lie inside the goal box; with
/// [`GoalMode::FromStep`] every set from that step onward must. Sentinel
/// tubes never certify. Goal boxes may be unbounded in any coordinate.
pub fn check_goal(tube: &ReachTube, goal: &StateBox, mode: GoalMode) -> Result<bool, ReachError> {
    if goal.dim() != tube.dim() {
        return Err(ReachError::DimMismatch {
            expected: tube.dim(),
            got: goal.dim(),
        });
    }
    if tube.unverifiable {
        return Ok(false);
    }
    match mode {
        GoalMode::FinalSet => Ok(tube.final_set().inside(goal)),
        GoalMode::FromStep(start) => {
            if start > tube.horizon() {
                return Err(ReachError::StepBeyondHorizon {
                    start,
                    horizon: tube.horizon(),
                });
            }
            Ok(tube.sets[start..].iter().all(|u| u.inside(goal)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use crate::seeding::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn const_net(dim: usize, value: f64) -> LdcNetwork {
        LdcNetwork::new(
            vec![crate::controllers::Layer {
                weights: vec![vec![0.0; dim]],
                bias: vec![value],
                activation: crate::controllers::Activation::Identity,
            }],
            1.0,
        )
        .unwrap()
    }

    fn small_tanh_net(seed: u64) -> LdcNetwork {
        let mut rng = stream_rng(seed, 0);
        let mut layer = |inp: usize, out: usize, act| crate::controllers::Layer {
            weights: (0..out)
                .map(|_| (0..inp).map(|_| rng.gen_range(-0.7..0.7)).collect())
                .collect(),
            bias: (0..out).map(|_| rng.gen_range(-0.2..0.2)).collect(),
            activation: act,
        };
        let layers = vec![
            layer(2, 8, crate::controllers::Activation::Tanh),
            layer(8, 1, crate::controllers::Activation::Tanh),
        ];
        LdcNetwork::new(layers, 1.0).unwrap()
    }

    fn action_bound(value: f64, region: &StateBox) -> DiscrepancyBound {
        DiscrepancyBound {
            kind: DiscrepancyKind::Action,
            value,
            alpha: 0.05,
            sample_count: 60,
            region: region.clone(),
            seed: 0,
        }
    }

    fn traj_bound(value: f64, region: &StateBox) -> DiscrepancyBound {
        DiscrepancyBound {
            kind: DiscrepancyKind::Trajectory,
            value,
            alpha: 0.05,
            sample_count: 60,
            region: region.clone(),
            seed: 0,
        }
    }

    fn boxy(bounds: &[(f64, f64)]) -> StateBox {
        StateBox::from_bounds(
            &bounds.iter().map(|b| b.0).collect::<Vec<_>>(),
            &bounds.iter().map(|b| b.1).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    // ==================== plain propagation ====================

    #[test]
    fn frozen_plant_repeats_the_region() {
        let params = PlantParams::frozen(2);
        let region = boxy(&[(0.0, 1.0), (-1.0, 2.0)]);
        let net = const_net(2, 0.4);
        let tube =
            reach_tube_ldc(&net, &params, &region, 5, &ReachOptions::for_plant(&params)).unwrap();
        assert_eq!(tube.sets.len(), 6);
        for set in &tube.sets {
            assert_eq!(set.boxes(), std::slice::from_ref(&region));
        }
        assert!(!tube.unverifiable);
    }

    #[test]
    fn tube_starts_at_the_initial_region() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.1, 0.2), (-0.2, -0.1)]);
        let net = const_net(2, 0.0);
        let tube =
            reach_tube_ldc(&net, &params, &region, 3, &ReachOptions::for_plant(&params)).unwrap();
        assert_eq!(tube.horizon(), 3);
        assert_eq!(tube.sets[0].boxes(), std::slice::from_ref(&region));
        assert_eq!(tube.provenance.region, region);
        assert_eq!(tube.provenance.inflation, None);
    }

    #[test]
    fn pendulum_point_region_matches_hand_rollout() {
        // From the origin with a constant action of 0.125 the pendulum gains
        // exactly 0.125 / 0.125 = 1.0 in angular rate and keeps its angle.
        let params = PlantParams::inverted_pendulum();
        let region = StateBox::point(&State::new(vec![0.0, 0.0]).unwrap());
        let net = const_net(2, 0.125);
        let tube =
            reach_tube_ldc(&net, &params, &region, 1, &ReachOptions::for_plant(&params)).unwrap();
        let last = tube.final_set().hull();
        assert!(last.dim_interval(0).lo.abs() <= 1e-12);
        assert!(last.dim_interval(0).hi.abs() <= 1e-12);
        assert!((last.dim_interval(1).lo - 1.0).abs() <= 1e-12);
        assert!((last.dim_interval(1).hi - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn point_tube_follows_the_simulated_rollout() {
        let params = PlantParams::inverted_pendulum();
        let net = small_tanh_net(3);
        let s0 = State::new(vec![0.3, -0.4]).unwrap();
        let region = StateBox::point(&s0);
        let horizon = 8;
        let tube = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        let traj = simulate(
            &params,
            |s| net.eval(s).map(ControlAction).map_err(|e| e.to_string()),
            &s0,
            horizon,
        )
        .unwrap();
        for (t, state) in traj.states.iter().enumerate() {
            let hull = tube.sets[t].hull();
            for d in 0..2 {
                let iv = hull.dim_interval(d);
                assert!(
                    iv.lo - 1e-9 <= state[d] && state[d] <= iv.hi + 1e-9,
                    "step {t} dim {d}: {} outside [{}, {}]",
                    state[d],
                    iv.lo,
                    iv.hi
                );
                assert!(iv.width() <= 1e-9, "point tube should stay thin");
            }
        }
    }

    #[test]
    fn controller_range_is_clamped_to_actuation() {
        // A constant raw output of 5.0 saturates at the +1 actuation limit,
        // so the tube must match the rollout that applies exactly +1.
        let params = PlantParams::inverted_pendulum();
        let region = StateBox::point(&State::new(vec![0.2, 0.0]).unwrap());
        let big = const_net(2, 5.0);
        let saturated = const_net(2, 1.0);
        let opts = ReachOptions::for_plant(&params);
        let tube_big = reach_tube_ldc(&big, &params, &region, 4, &opts).unwrap();
        let tube_sat = reach_tube_ldc(&saturated, &params, &region, 4, &opts).unwrap();
        for (a, b) in tube_big.sets.iter().zip(&tube_sat.sets) {
            let (ha, hb) = (a.hull(), b.hull());
            for d in 0..2 {
                assert!((ha.dim_interval(d).lo - hb.dim_interval(d).lo).abs() <= 1e-12);
                assert!((ha.dim_interval(d).hi - hb.dim_interval(d).hi).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cart_pole_blowup_reports_divergence_step() {
        // A fast-spinning pole under a do-nothing controller gains rate
        // roughly quadratically per step; the interval iterates overflow to
        // an unbounded box after a handful of steps.
        let params = PlantParams::cart_pole();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1), (0.0, 0.1), (10.0, 11.0)]);
        let net = const_net(4, 0.0);
        let err = reach_tube_ldc(&net, &params, &region, 60, &ReachOptions::for_plant(&params))
            .unwrap_err();
        match err {
            ReachError::Diverged { step } => assert!(step >= 1 && step <= 60),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_region_is_rejected() {
        let params = PlantParams::inverted_pendulum();
        let region = StateBox::new(vec![Interval::everything(), Interval::new(0.0, 1.0)]).unwrap();
        let net = const_net(2, 0.0);
        let err = reach_tube_ldc(&net, &params, &region, 3, &ReachOptions::default()).unwrap_err();
        assert!(matches!(err, ReachError::UnboundedRegion));
    }

    #[test]
    fn zero_action_bound_matches_plain_tube_exactly() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.25), (-0.25, 0.0)]);
        let net = small_tanh_net(5);
        let opts = ReachOptions::for_plant(&params);
        let plain = reach_tube_ldc(&net, &params, &region, 10, &opts).unwrap();
        let inflated =
            reach_tube_action_inflated(&net, &params, &region, 10, &action_bound(0.0, &region), &opts)
                .unwrap();
        assert_eq!(plain.sets, inflated.sets);
    }

    // ==================== containment ====================

    #[test]
    fn simulated_rollouts_stay_inside_the_tube() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.25), (-0.25, 0.0)]);
        let net = small_tanh_net(7);
        let horizon = 30;
        let tube = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        for i in 0..300u64 {
            let s0 = region.sample(&mut stream_rng(42, i));
            let traj = simulate(
                &params,
                |s| net.eval(s).map(ControlAction).map_err(|e| e.to_string()),
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                assert!(tube.sets[t].contains(state), "rollout {i} escaped at step {t}");
            }
        }
    }

    #[test]
    fn mountain_car_rollouts_stay_inside_the_tube() {
        let params = PlantParams::mountain_car();
        let region = boxy(&[(-0.6, -0.4), (-0.02, 0.05)]);
        let net = small_tanh_net(11);
        let horizon = 60;
        let tube = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        for i in 0..200u64 {
            let s0 = region.sample(&mut stream_rng(43, i));
            let traj = simulate(
                &params,
                |s| net.eval(s).map(ControlAction).map_err(|e| e.to_string()),
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                assert!(tube.sets[t].contains(state), "rollout {i} escaped at step {t}");
            }
        }
    }

    #[test]
    fn disturbed_actions_stay_inside_the_action_inflated_tube() {
        // Any controller within gamma of the network (before clamping) must
        // be covered by the action-inflated tube.
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.25), (-0.25, 0.0)]);
        let net = small_tanh_net(13);
        let gamma = 0.05;
        let horizon = 25;
        let tube = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            horizon,
            &action_bound(gamma, &region),
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        for i in 0..200u64 {
            let mut rng = stream_rng(44, i);
            let s0 = region.sample(&mut rng);
            let traj = simulate(
                &params,
                |s| {
                    let u = net.eval(s).map_err(|e| e.to_string())?;
                    Ok(ControlAction(u + rng.gen_range(-gamma..=gamma)))
                },
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                assert!(tube.sets[t].contains(state), "rollout {i} escaped at step {t}");
            }
        }
    }

    #[test]
    fn trajectory_inflation_covers_l1_neighborhoods() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.25), (-0.25, 0.0)]);
        let net = small_tanh_net(17);
        let beta = 0.1;
        let horizon = 15;
        let base = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        let inflated = inflate_tube_trajectory(&base, &traj_bound(beta, &region)).unwrap();
        for i in 0..100u64 {
            let mut rng = stream_rng(45, i);
            let s0 = region.sample(&mut rng);
            let traj = simulate(
                &params,
                |s| net.eval(s).map(ControlAction).map_err(|e| e.to_string()),
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                // Perturb by a random vector of L1 norm at most beta.
                let raw: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let l1: f64 = raw.iter().map(|x| x.abs()).sum();
                let scale = beta * rng.gen_range(0.0..1.0) / l1.max(1e-12);
                let moved = State::new(
                    state
                        .values()
                        .iter()
                        .zip(&raw)
                        .map(|(x, p)| x + p * scale)
                        .collect(),
                )
                .unwrap();
                assert!(
                    inflated.sets[t].contains(&moved),
                    "perturbed state escaped at step {t}"
                );
            }
        }
    }

    // ==================== inflation arithmetic ====================

    #[test]
    fn unit_box_trajectory_inflation_example() {
        // Widening [0, 1]^2 by 0.1 in every coordinate gives [-0.1, 1.1]^2.
        let params = PlantParams::frozen(2);
        let region = boxy(&[(0.0, 1.0), (0.0, 1.0)]);
        let net = const_net(2, 0.0);
        let base =
            reach_tube_ldc(&net, &params, &region, 3, &ReachOptions::for_plant(&params)).unwrap();
        let inflated = inflate_tube_trajectory(&base, &traj_bound(0.1, &region)).unwrap();
        let expected = boxy(&[(-0.1, 1.1), (-0.1, 1.1)]);
        for set in &inflated.sets {
            assert_eq!(set.boxes(), std::slice::from_ref(&expected));
        }
        assert_eq!(
            inflated.provenance.inflation,
            Some((DiscrepancyKind::Trajectory, 0.1))
        );
    }

    #[test]
    fn pendulum_point_action_inflation_example() {
        // From the origin with a zero controller and an action bound of
        // 0.125 the rate after one step spans [-1, 1] while the angle stays
        // put.
        let params = PlantParams::inverted_pendulum();
        let region = StateBox::point(&State::new(vec![0.0, 0.0]).unwrap());
        let net = const_net(2, 0.0);
        let tube = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            1,
            &action_bound(0.125, &region),
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        let last = tube.final_set().hull();
        assert!(last.dim_interval(0).lo.abs() <= 1e-12);
        assert!(last.dim_interval(0).hi.abs() <= 1e-12);
        assert!((last.dim_interval(1).lo + 1.0).abs() <= 1e-12);
        assert!((last.dim_interval(1).hi - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_trajectory_inflation_is_the_identity() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.1, 0.3), (-0.3, -0.1)]);
        let net = small_tanh_net(19);
        let base =
            reach_tube_ldc(&net, &params, &region, 10, &ReachOptions::for_plant(&params)).unwrap();
        let inflated = inflate_tube_trajectory(&base, &traj_bound(0.0, &region)).unwrap();
        assert_eq!(base.sets, inflated.sets);
    }

    #[test]
    fn bound_kinds_are_enforced() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1)]);
        let net = const_net(2, 0.0);
        let opts = ReachOptions::for_plant(&params);
        let err = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            2,
            &traj_bound(0.1, &region),
            &opts,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ReachError::KindMismatch {
                expected: DiscrepancyKind::Action,
                got: DiscrepancyKind::Trajectory,
            }
        ));
        let base = reach_tube_ldc(&net, &params, &region, 2, &opts).unwrap();
        let err = inflate_tube_trajectory(&base, &action_bound(0.1, &region)).unwrap_err();
        assert!(matches!(
            err,
            ReachError::KindMismatch {
                expected: DiscrepancyKind::Trajectory,
                got: DiscrepancyKind::Action,
            }
        ));
    }

    #[test]
    fn negative_bound_is_rejected() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1)]);
        let net = const_net(2, 0.0);
        let mut bad = action_bound(0.1, &region);
        bad.value = -0.5;
        let err = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            2,
            &bad,
            &ReachOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReachError::NegativeBound(v) if v == -0.5));
    }

    #[test]
    fn infinite_bounds_yield_unverifiable_sentinels() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1)]);
        let net = const_net(2, 0.0);
        let opts = ReachOptions::for_plant(&params);

        let tube = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            4,
            &action_bound(f64::INFINITY, &region),
            &opts,
        )
        .unwrap();
        assert!(tube.unverifiable);
        assert_eq!(tube.sets.len(), 5);
        assert!(!tube.final_set().hull().is_finite());

        let base = reach_tube_ldc(&net, &params, &region, 4, &opts).unwrap();
        let sentinel =
            inflate_tube_trajectory(&base, &traj_bound(f64::INFINITY, &region)).unwrap();
        assert!(sentinel.unverifiable);

        // A sentinel can never certify a goal, not even the whole space.
        let goal = StateBox::new(vec![Interval::everything(); 2]).unwrap();
        assert!(!check_goal(&sentinel, &goal, GoalMode::FinalSet).unwrap());

        // Inflating a sentinel keeps the sentinel.
        let again = inflate_tube_trajectory(&sentinel, &traj_bound(0.1, &region)).unwrap();
        assert!(again.unverifiable);
    }

    // ==================== unions and goal checks ====================

    #[test]
    fn union_concatenates_boxes_per_step() {
        let params = PlantParams::frozen(2);
        let opts = ReachOptions::for_plant(&params);
        let net = const_net(2, 0.0);
        let region_a = boxy(&[(0.0, 1.0), (0.0, 1.0)]);
        let region_b = boxy(&[(2.0, 3.0), (2.0, 3.0)]);
        let tube_a = reach_tube_ldc(&net, &params, &region_a, 3, &opts).unwrap();
        let mut tube_b = reach_tube_ldc(&net, &params, &region_b, 3, &opts).unwrap();
        tube_b.provenance.controller_ids = vec![1];
        let union = union_tubes(&[tube_a, tube_b]).unwrap();
        assert_eq!(union.horizon(), 3);
        for set in &union.sets {
            assert_eq!(set.boxes().len(), 2);
        }
        assert_eq!(union.provenance.controller_ids, vec![0, 1]);
        assert_eq!(union.provenance.region, boxy(&[(0.0, 3.0), (0.0, 3.0)]));
        assert!(union.sets[1].contains(&State::new(vec![0.5, 0.5]).unwrap()));
        assert!(union.sets[1].contains(&State::new(vec![2.5, 2.5]).unwrap()));
        assert!(!union.sets[1].contains(&State::new(vec![1.5, 1.5]).unwrap()));
    }

    #[test]
    fn union_rejects_mismatched_horizons() {
        let params = PlantParams::frozen(2);
        let opts = ReachOptions::for_plant(&params);
        let net = const_net(2, 0.0);
        let region = boxy(&[(0.0, 1.0), (0.0, 1.0)]);
        let tube_a = reach_tube_ldc(&net, &params, &region, 3, &opts).unwrap();
        let tube_b = reach_tube_ldc(&net, &params, &region, 4, &opts).unwrap();
        let err = union_tubes(&[tube_a, tube_b]).unwrap_err();
        assert!(matches!(err, ReachError::HorizonMismatch { first: 3, got: 4 }));
        assert!(matches!(union_tubes(&[]).unwrap_err(), ReachError::EmptyUnion));
    }

    #[test]
    fn goal_modes_check_the_right_steps() {
        // Hand-built tube: the state visits [2, 3] at step 1 and settles in
        // [0, 1] afterwards.
        let region = boxy(&[(0.0, 1.0)]);
        let passing = boxy(&[(2.0, 3.0)]);
        let tube = ReachTube {
            sets: vec![
                BoxUnion::single(region.clone()),
                BoxUnion::single(passing),
                BoxUnion::single(region.clone()),
                BoxUnion::single(region.clone()),
            ],
            provenance: TubeProvenance {
                region: region.clone(),
                controller_ids: vec![0],
                inflation: None,
            },
            unverifiable: false,
            fallback_used: false,
        };
        let goal = boxy(&[(-0.5, 1.5)]);
        assert!(check_goal(&tube, &goal, GoalMode::FinalSet).unwrap());
        assert!(check_goal(&tube, &goal, GoalMode::FromStep(2)).unwrap());
        assert!(!check_goal(&tube, &goal, GoalMode::FromStep(1)).unwrap());
        assert!(matches!(
            check_goal(&tube, &goal, GoalMode::FromStep(4)).unwrap_err(),
            ReachError::StepBeyondHorizon { start: 4, horizon: 3 }
        ));
        let wrong_dim = boxy(&[(0.0, 1.0), (0.0, 1.0)]);
        assert!(matches!(
            check_goal(&tube, &wrong_dim, GoalMode::FinalSet).unwrap_err(),
            ReachError::DimMismatch { expected: 1, got: 2 }
        ));
    }

    #[test]
    fn goals_may_be_unbounded() {
        // A final position interval of [0.5, 0.6] certifies the half-line
        // goal x >= 0.45 regardless of the unconstrained velocity.
        let region = boxy(&[(-0.6, -0.4), (-0.02, 0.05)]);
        let final_box = boxy(&[(0.5, 0.6), (-1.0, 1.0)]);
        let tube = ReachTube {
            sets: vec![BoxUnion::single(region.clone()), BoxUnion::single(final_box)],
            provenance: TubeProvenance {
                region,
                controller_ids: vec![0],
                inflation: None,
            },
            unverifiable: false,
            fallback_used: false,
        };
        let goal = StateBox::new(vec![
            Interval::new(0.45, f64::INFINITY),
            Interval::everything(),
        ])
        .unwrap();
        assert!(check_goal(&tube, &goal, GoalMode::FinalSet).unwrap());
        let stricter = StateBox::new(vec![
            Interval::new(0.55, f64::INFINITY),
            Interval::everything(),
        ])
        .unwrap();
        assert!(!check_goal(&tube, &stricter, GoalMode::FinalSet).unwrap());
    }

    // ==================== mean-value engine ====================

    #[test]
    fn mean_value_engine_contracts_where_plain_propagation_diverges() {
        // A stabilizing controller makes the closed loop contract, but plain
        // interval propagation forgets the angle/rate correlation and its
        // widths compound instead. The mean-value engine keeps the tube
        // tight over a long horizon.
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.1, 0.15), (-0.15, -0.1)]);
        // A linear stabilizer: u = -0.245 theta - 0.02 theta - 0.1 omega,
        // well within actuation on this region.
        let net = LdcNetwork::new(
            vec![crate::controllers::Layer {
                weights: vec![vec![-0.265, -0.1]],
                bias: vec![0.0],
                activation: crate::controllers::Activation::Identity,
            }],
            1.0,
        )
        .unwrap();
        let horizon = 30;
        let centered = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions {
                split_depth: 1,
                centered: true,
            },
        )
        .unwrap();
        let plain = reach_tube_ldc(
            &net,
            &params,
            &region,
            horizon,
            &ReachOptions {
                split_depth: 1,
                centered: false,
            },
        )
        .unwrap();
        let centered_width = centered.final_set().hull().max_width();
        let plain_width = plain.final_set().hull().max_width();
        assert!(
            centered_width < 0.2,
            "mean-value tube should stay tight, got width {centered_width}"
        );
        assert!(
            plain_width > 1.0,
            "plain tube should blow up on this loop, got width {plain_width}"
        );
    }

    #[test]
    fn mean_value_tube_still_contains_rollouts_under_disturbance() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.1, 0.15), (-0.15, -0.1)]);
        let net = LdcNetwork::new(
            vec![crate::controllers::Layer {
                weights: vec![vec![-0.265, -0.1]],
                bias: vec![0.0],
                activation: crate::controllers::Activation::Identity,
            }],
            1.0,
        )
        .unwrap();
        let gamma = 0.002;
        let horizon = 30;
        let tube = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            horizon,
            &action_bound(gamma, &region),
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        for i in 0..300u64 {
            let mut rng = stream_rng(46, i);
            let s0 = region.sample(&mut rng);
            let traj = simulate(
                &params,
                |s| {
                    let u = net.eval(s).map_err(|e| e.to_string())?;
                    Ok(ControlAction(u + rng.gen_range(-gamma..=gamma)))
                },
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                assert!(tube.sets[t].contains(state), "rollout {i} escaped at step {t}");
            }
        }
    }

    // ==================== switched propagation ====================

    #[test]
    fn single_home_covering_everything_matches_plain_tube() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.2), (-0.2, 0.0)]);
        let net = small_tanh_net(23);
        let opts = ReachOptions {
            split_depth: 1,
            centered: false,
        };
        let plain = reach_tube_ldc(&net, &params, &region, 10, &opts).unwrap();
        let switched = reach_tube_switched(
            &[RegionalController {
                id: 0,
                net: net.clone(),
                home: boxy(&[(-1e7, 1e7), (-1e7, 1e7)]),
                gamma: 0.0,
            }],
            &params,
            &region,
            10,
            &opts,
        )
        .unwrap();
        assert_eq!(plain.sets, switched.sets);
        assert!(!switched.fallback_used);
    }

    #[test]
    fn switched_tube_covers_rollouts_that_change_controller() {
        // Two constant controllers split the angle axis; trajectories cross
        // from one home into the other and must stay covered throughout.
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(-0.55, -0.45), (0.0, 0.05)]);
        let push = const_net(2, 0.6);
        let brake = const_net(2, -0.6);
        let big = 1e6;
        let homes = [
            boxy(&[(-big, 0.0), (-big, big)]),
            boxy(&[(0.0, big), (-big, big)]),
        ];
        let controllers = vec![
            RegionalController {
                id: 0,
                net: push.clone(),
                home: homes[0].clone(),
                gamma: 0.01,
            },
            RegionalController {
                id: 1,
                net: brake.clone(),
                home: homes[1].clone(),
                gamma: 0.01,
            },
        ];
        let horizon = 6;
        let opts = ReachOptions {
            split_depth: 1,
            centered: false,
        };
        let tube =
            reach_tube_switched(&controllers, &params, &region, horizon, &opts).unwrap();
        assert!(!tube.fallback_used);
        for i in 0..200u64 {
            let mut rng = stream_rng(47, i);
            let s0 = region.sample(&mut rng);
            let traj = simulate(
                &params,
                |s| {
                    let net = if homes[0].contains(s) { &push } else { &brake };
                    let u = net.eval(s).map_err(|e| e.to_string())?;
                    Ok(ControlAction(u + rng.gen_range(-0.01..=0.01)))
                },
                &s0,
                horizon,
            )
            .unwrap();
            for (t, state) in traj.states.iter().enumerate() {
                assert!(tube.sets[t].contains(state), "rollout {i} escaped at step {t}");
            }
        }
    }

    #[test]
    fn gap_between_homes_flags_the_fallback() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(-0.5, -0.45), (0.0, 0.05)]);
        let big = 1e6;
        let controllers = vec![
            RegionalController {
                id: 0,
                net: const_net(2, 0.5),
                home: boxy(&[(-big, -0.4), (-big, big)]),
                gamma: 0.0,
            },
            RegionalController {
                id: 1,
                net: const_net(2, -0.5),
                home: boxy(&[(0.4, big), (-big, big)]),
                gamma: 0.0,
            },
        ];
        let tube = reach_tube_switched(&controllers, &params, &region, 8, &ReachOptions {
            split_depth: 0,
            centered: false,
        })
        .unwrap();
        assert!(tube.fallback_used, "the gap (-0.4, 0.4) forces the fallback");
        // The fallback still produces a fully populated tube.
        assert_eq!(tube.sets.len(), 9);
    }

    #[test]
    fn switched_with_infinite_gamma_is_a_sentinel() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1)]);
        let controllers = vec![RegionalController {
            id: 0,
            net: const_net(2, 0.0),
            home: boxy(&[(-10.0, 10.0), (-10.0, 10.0)]),
            gamma: f64::INFINITY,
        }];
        let tube =
            reach_tube_switched(&controllers, &params, &region, 5, &ReachOptions::default())
                .unwrap();
        assert!(tube.unverifiable);
        assert!(matches!(
            reach_tube_switched(&[], &params, &region, 5, &ReachOptions::default()).unwrap_err(),
            ReachError::NoControllers
        ));
    }

    // ==================== options and provenance ====================

    #[test]
    fn default_options_follow_the_plant() {
        let ip = ReachOptions::for_plant(&PlantParams::inverted_pendulum());
        assert_eq!(ip.split_depth, 1);
        assert!(ip.centered);
        let cp = ReachOptions::for_plant(&PlantParams::cart_pole());
        assert_eq!(cp.split_depth, 0);
        assert!(!cp.centered);
    }

    #[test]
    fn provenance_records_the_inflation() {
        let params = PlantParams::inverted_pendulum();
        let region = boxy(&[(0.0, 0.1), (0.0, 0.1)]);
        let net = const_net(2, 0.0);
        let tube = reach_tube_action_inflated(
            &net,
            &params,
            &region,
            2,
            &action_bound(0.05, &region),
            &ReachOptions::for_plant(&params),
        )
        .unwrap();
        assert_eq!(
            tube.provenance.inflation,
            Some((DiscrepancyKind::Action, 0.05))
        );
        assert_eq!(tube.provenance.region, region);
    }

    // ==================== properties ====================

    proptest! {
        #[test]
        fn larger_action_bounds_give_larger_tubes(
            g1 in 0.0..0.2f64,
            g2 in 0.0..0.2f64,
        ) {
            let (small, large) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let params = PlantParams::inverted_pendulum();
            let region = boxy(&[(0.05, 0.15), (-0.1, 0.0)]);
            let net = small_tanh_net(29);
            // Splitting is disabled so the per-step map is monotone in the
            // action bound.
            let opts = ReachOptions { split_depth: 0, centered: true };
            let a = reach_tube_action_inflated(
                &net, &params, &region, 8, &action_bound(small, &region), &opts,
            ).unwrap();
            let b = reach_tube_action_inflated(
                &net, &params, &region, 8, &action_bound(large, &region), &opts,
            ).unwrap();
            for (sa, sb) in a.sets.iter().zip(&b.sets) {
                prop_assert!(sb.hull().contains_box(&sa.hull()));
            }
        }

        #[test]
        fn larger_trajectory_bounds_give_larger_tubes(
            b1 in 0.0..0.5f64,
            b2 in 0.0..0.5f64,
        ) {
            let (small, large) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            let params = PlantParams::inverted_pendulum();
            let region = boxy(&[(0.05, 0.15), (-0.1, 0.0)]);
            let net = small_tanh_net(31);
            let base = reach_tube_ldc(
                &net, &params, &region, 6, &ReachOptions::for_plant(&params),
            ).unwrap();
            let a = inflate_tube_trajectory(&base, &traj_bound(small, &region)).unwrap();
            let b = inflate_tube_trajectory(&base, &traj_bound(large, &region)).unwrap();
            for (sa, sb) in a.sets.iter().zip(&b.sets) {
                prop_assert!(sb.hull().contains_box(&sa.hull()));
            }
        }

        #[test]
        fn tube_invariants_hold(
            lo0 in -0.3..0.3f64,
            lo1 in -0.3..0.3f64,
            w in 0.0..0.2f64,
            horizon in 1usize..12,
        ) {
            let params = PlantParams::inverted_pendulum();
            let region = boxy(&[(lo0, lo0 + w), (lo1, lo1 + w)]);
            let net = small_tanh_net(37);
            let tube = reach_tube_ldc(
                &net, &params, &region, horizon, &ReachOptions::for_plant(&params),
            ).unwrap();
            prop_assert_eq!(tube.sets.len(), horizon + 1);
            prop_assert_eq!(tube.sets[0].boxes(), std::slice::from_ref(&region));
            for set in &tube.sets {
                prop_assert!(set.hull().is_finite());
            }
        }
    }
}
