//! Grid management, iterative calibration, end-to-end verification,
//! ground-truth labeling, and classification metrics.
//!
//! Verification decouples two grids. The coarse calibration grid is where
//! controllers are distilled and discrepancy bounds are calibrated: each
//! region gets its own network and bound, retraining with tightened
//! thresholds when the bound exceeds the configured limit and splitting the
//! region when retraining is not enough. The fine verification grid is where
//! verdicts are produced: each cell inherits the network and bound of the
//! calibration region containing its center, gets its inflated reach tube,
//! and is declared safe only when the tube certifies the goal. Everything
//! that can go wrong for a cell (training failures, infinite bounds,
//! divergent tubes) lands on the unsafe side with a note, never the safe
//! side.
//!
//! Ground truth comes from simulating the original oracle loop from uniform
//! samples in each cell and requiring every sampled trajectory to meet the
//! same goal criterion the verdicts use, so the two label sets are directly
//! comparable by the usual confusion-matrix rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{action_discrepancy, traj_discrepancy, DiscrepancyBound, DiscrepancyKind};
use crate::controllers::LdcNetwork;
use crate::distill::{generate_dataset, train_ldc, DistillError, TrainConfig, TrainReport};
use crate::dynamics::PlantParams;
use crate::geom::{GeomError, State, StateBox};
use crate::highdim::HdcOracle;
use crate::interval::Interval;
use crate::reach::{
    check_goal, inflate_tube_trajectory, reach_tube_action_inflated, reach_tube_ldc, GoalMode,
    ReachOptions,
};
use crate::seeding::derive_seed;

// Seed stream tags so the independent random decisions of a run never share
// a stream.
const TRAIN_STREAM: u64 = 1;
const CALIBRATION_STREAM: u64 = 2;
const DATASET_STREAM: u64 = 3;
const GROUND_TRUTH_STREAM: u64 = 4;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid {field}: {message}")]
    InvalidField {
        field: &'static str,
        message: String,
    },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("ground-truth labels count {got} does not match cell count {expected}")]
    LabelCount { expected: usize, got: usize },
}

// ==================== grids ====================

/// A box tiled into axis-aligned cells of the requested widths. The last
/// cell along a dimension is thinner whenever the width does not divide the
/// side exactly, so the cells always tile the box precisely.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    domain: StateBox,
    widths: Vec<f64>,
    cells: Vec<StateBox>,
}

impl GridSpec {
    pub fn new(domain: StateBox, widths: Vec<f64>) -> Result<Self, VerifyError> {
        if !domain.is_finite() {
            return Err(VerifyError::InvalidField {
                field: "grid domain",
                message: "must be bounded".to_string(),
            });
        }
        if widths.len() != domain.dim() {
            return Err(VerifyError::InvalidField {
                field: "cell widths",
                message: format!("expected {} entries, got {}", domain.dim(), widths.len()),
            });
        }
        if let Some(bad) = widths.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(VerifyError::InvalidField {
                field: "cell widths",
                message: format!("widths must be positive and finite, got {bad}"),
            });
        }
        // Per-dimension boundaries: lo, lo + w, lo + 2w, ..., hi. Interior
        // boundaries are shared bitwise by neighboring cells.
        let mut boundaries: Vec<Vec<f64>> = Vec::with_capacity(domain.dim());
        for (d, w) in widths.iter().enumerate() {
            let iv = domain.dim_interval(d);
            let span = iv.hi - iv.lo;
            let count = ((span / w) - 1e-9).ceil().max(1.0) as usize;
            let mut bs = Vec::with_capacity(count + 1);
            for i in 0..count {
                bs.push(iv.lo + (i as f64) * w);
            }
            bs.push(iv.hi);
            boundaries.push(bs);
        }
        let counts: Vec<usize> = boundaries.iter().map(|b| b.len() - 1).collect();
        let total: usize = counts.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; domain.dim()];
        for _ in 0..total {
            let dims: Vec<Interval> = idx
                .iter()
                .zip(&boundaries)
                .map(|(&i, bs)| Interval::new(bs[i], bs[i + 1]))
                .collect();
            cells.push(StateBox::new(dims)?);
            // Odometer increment, last dimension fastest.
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Ok(GridSpec {
            domain,
            widths,
            cells,
        })
    }

    pub fn domain(&self) -> &StateBox {
        &self.domain
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[StateBox] {
        &self.cells
    }

    /// Index of the first cell containing the state, if any.
    pub fn locate(&self, s: &State) -> Option<usize> {
        self.cells.iter().position(|c| c.contains(s))
    }
}

// ==================== configuration ====================

/// Which discrepancy the pipeline calibrates and how it inflates tubes:
/// trajectory bounds widen the finished tube per axis, action bounds widen
/// the per-step action interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "trajectory-based")]
    Trajectory,
    #[serde(rename = "action-based")]
    Action,
}

impl Approach {
    pub fn name(self) -> &'static str {
        match self {
            Approach::Trajectory => "trajectory-based",
            Approach::Action => "action-based",
        }
    }
}

/// Everything a verification run needs beyond the oracle and the plant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub approach: Approach,
    /// Initial set the grids tile.
    pub domain: StateBox,
    pub goal: StateBox,
    pub goal_mode: GoalMode,
    pub horizon: usize,
    /// Conformal miscoverage level.
    pub alpha: f64,
    /// Calibration rollouts per region.
    pub n_per_region: usize,
    /// Dataset rollouts per training attempt.
    pub n_init: usize,
    /// Discrepancy threshold that triggers retraining and region splits.
    pub xi: f64,
    /// Training template; its MSE threshold is the initial tightening
    /// target and its Lipschitz threshold the initial smoothing target.
    /// Its seed field is ignored: attempt seeds derive from `seed`.
    pub train: TrainConfig,
    pub calibration_widths: Vec<f64>,
    pub cell_widths: Vec<f64>,
    /// Retraining attempts (threshold halvings) before giving up on a
    /// region within a round.
    pub retry_budget: usize,
    /// Total refinement rounds; regions split at most `max_rounds - 1`
    /// times.
    pub max_rounds: usize,
    /// Reach propagation knobs; `None` picks the plant defaults.
    pub reach: Option<ReachOptions>,
    /// Master seed; every dataset, training, calibration, and trial stream
    /// derives from it.
    pub seed: u64,
}

impl VerifyConfig {
    pub fn validate(&self, params: &PlantParams) -> Result<(), VerifyError> {
        let bad = |field, message: String| Err(VerifyError::InvalidField { field, message });
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("must be in (0, 1), got {}", self.alpha));
        }
        if !(self.xi > 0.0) {
            return bad("xi", format!("must be positive, got {}", self.xi));
        }
        if self.n_per_region == 0 {
            return bad("n_per_region", "must be at least 1".to_string());
        }
        if self.n_init == 0 {
            return bad("n_init", "must be at least 1".to_string());
        }
        if self.max_rounds == 0 {
            return bad("max_rounds", "must be at least 1".to_string());
        }
        let d = params.state_dim();
        if self.domain.dim() != d {
            return bad("domain", format!("expected {d} dimensions, got {}", self.domain.dim()));
        }
        if !self.domain.is_finite() {
            return bad("domain", "must be bounded".to_string());
        }
        if self.goal.dim() != d {
            return bad("goal", format!("expected {d} dimensions, got {}", self.goal.dim()));
        }
        if let GoalMode::FromStep(k) = self.goal_mode {
            if k > self.horizon {
                return bad(
                    "goal_mode",
                    format!("from-step {k} exceeds the horizon {}", self.horizon),
                );
            }
        }
        for (field, widths) in [
            ("calibration_widths", &self.calibration_widths),
            ("cell_widths", &self.cell_widths),
        ] {
            if widths.len() != d {
                return bad(field, format!("expected {d} entries, got {}", widths.len()));
            }
            if let Some(w) = widths.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                return bad(field, format!("widths must be positive and finite, got {w}"));
            }
        }
        Ok(())
    }

    fn reach_options(&self, params: &PlantParams) -> ReachOptions {
        self.reach.unwrap_or_else(|| ReachOptions::for_plant(params))
    }
}

// ==================== calibration ====================

/// One calibrated region: the distilled controller, its conformal bound,
/// and whether calibration finished inside the configured budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedRegion {
    pub id: u64,
    pub region: StateBox,
    pub net: LdcNetwork,
    pub bound: DiscrepancyBound,
    pub report: Option<TrainReport>,
    /// True when the bound met the threshold and the region-level reach
    /// check certified the goal within the budgets.
    pub settled: bool,
    pub note: Option<String>,
}

fn attempt_seed(master: u64, stream: u64, region_id: u64, attempt: u64) -> u64 {
    derive_seed(
        derive_seed(master, stream),
        region_id.wrapping_mul(1 << 8).wrapping_add(attempt),
    )
}

/// The derived seeds one training attempt of one region uses, exposed so
/// external tooling can reproduce a calibration step in isolation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttemptSeeds {
    pub dataset: u64,
    pub train: u64,
    pub calibration: u64,
}

pub fn attempt_seeds(master: u64, region_id: u64, attempt: u64) -> AttemptSeeds {
    AttemptSeeds {
        dataset: attempt_seed(master, DATASET_STREAM, region_id, attempt),
        train: attempt_seed(master, TRAIN_STREAM, region_id, attempt),
        calibration: attempt_seed(master, CALIBRATION_STREAM, region_id, attempt),
    }
}

fn discrepancy_bound(
    cfg: &VerifyConfig,
    net: &LdcNetwork,
    oracle: &HdcOracle,
    params: &PlantParams,
    region: &StateBox,
    seed: u64,
) -> Result<DiscrepancyBound, crate::conformal::ConformalError> {
    match cfg.approach {
        Approach::Trajectory => traj_discrepancy(
            net,
            oracle,
            params,
            region,
            cfg.alpha,
            cfg.n_per_region,
            cfg.horizon,
            seed,
        ),
        Approach::Action => action_discrepancy(
            net,
            oracle,
            params,
            region,
            cfg.alpha,
            cfg.n_per_region,
            cfg.horizon,
            seed,
        ),
    }
}

/// Build the approach's inflated tube for one box and check the goal.
fn tube_certifies(
    cfg: &VerifyConfig,
    params: &PlantParams,
    net: &LdcNetwork,
    bound: &DiscrepancyBound,
    region: &StateBox,
    opts: &ReachOptions,
) -> Result<bool, crate::reach::ReachError> {
    let tube = match cfg.approach {
        Approach::Action => {
            reach_tube_action_inflated(net, params, region, cfg.horizon, bound, opts)?
        }
        Approach::Trajectory => {
            let base = reach_tube_ldc(net, params, region, cfg.horizon, opts)?;
            inflate_tube_trajectory(&base, bound)?
        }
    };
    check_goal(&tube, &cfg.goal, cfg.goal_mode)
}

/// Outcome of calibrating a single region for one round.
enum RegionOutcome {
    Done(CalibratedRegion),
    Split(CalibratedRegion),
}

/// Calibrate one region: train, bound, and retrain with halved thresholds
/// while the budget lasts. Attempts that diverge halve the learning rate
/// instead. The best attempt (smallest bound) is kept.
fn calibrate_region(
    oracle: &HdcOracle,
    params: &PlantParams,
    cfg: &VerifyConfig,
    id: u64,
    region: &StateBox,
    last_round: bool,
) -> RegionOutcome {
    let opts = cfg.reach_options(params);
    let mut local = cfg.train.clone();
    let mut best: Option<CalibratedRegion> = None;
    let mut note: Option<String> = None;
    let consider = |best: &mut Option<CalibratedRegion>, candidate: CalibratedRegion| {
        let better = match best {
            None => true,
            Some(b) => candidate.bound.value < b.bound.value,
        };
        if better {
            *best = Some(candidate);
        }
    };
    for attempt in 0..=cfg.retry_budget as u64 {
        let seeds = attempt_seeds(cfg.seed, id, attempt);
        let (data_seed, calib_seed) = (seeds.dataset, seeds.calibration);
        local.seed = seeds.train;
        let dataset = match generate_dataset(oracle, region, cfg.n_init, cfg.horizon, data_seed) {
            Ok(d) => d,
            Err(e) => {
                note = Some(format!("dataset generation failed: {e}"));
                continue;
            }
        };
        let (net, report) = match train_ldc(&dataset, &local) {
            Ok(pair) => pair,
            Err(DistillError::Diverged { epoch }) => {
                note = Some(format!("training diverged at epoch {epoch}"));
                local.learning_rate /= 2.0;
                continue;
            }
            Err(e) => {
                note = Some(format!("training failed: {e}"));
                continue;
            }
        };
        let bound = match discrepancy_bound(cfg, &net, oracle, params, region, calib_seed) {
            Ok(b) => b,
            Err(e) => {
                note = Some(format!("calibration failed: {e}"));
                continue;
            }
        };
        let over_threshold = !(bound.value <= cfg.xi);
        let candidate = CalibratedRegion {
            id,
            region: region.clone(),
            net,
            bound,
            report: Some(report),
            settled: false,
            note: None,
        };
        if over_threshold {
            consider(&mut best, candidate);
            local.mse_threshold /= 2.0;
            continue;
        }
        let certified = tube_certifies(
            cfg,
            params,
            &candidate.net,
            &candidate.bound,
            region,
            &opts,
        )
        .unwrap_or(false);
        if certified {
            let mut done = candidate;
            done.settled = true;
            return RegionOutcome::Done(done);
        }
        consider(&mut best, candidate);
        local.lip_threshold /= 2.0;
    }
    let fallback = || CalibratedRegion {
        id,
        region: region.clone(),
        net: crate::distill::init_network(
            &cfg.train.arch,
            params.state_dim(),
            attempt_seed(cfg.seed, TRAIN_STREAM, id, 0),
        ),
        bound: DiscrepancyBound {
            kind: match cfg.approach {
                Approach::Trajectory => DiscrepancyKind::Trajectory,
                Approach::Action => DiscrepancyKind::Action,
            },
            value: f64::INFINITY,
            alpha: cfg.alpha,
            sample_count: cfg.n_per_region,
            region: region.clone(),
            seed: cfg.seed,
        },
        report: None,
        settled: false,
        note: None,
    };
    let mut kept = best.unwrap_or_else(fallback);
    kept.note = note.or(Some("budget exhausted".to_string()));
    // Only a bound stuck above the threshold justifies refining the grid;
    // a certification miss alone does not.
    if !(kept.bound.value <= cfg.xi) && !last_round {
        RegionOutcome::Split(kept)
    } else {
        RegionOutcome::Done(kept)
    }
}

/// Distill and calibrate a controller for every region of the calibration
/// grid. Regions whose bound stays above the threshold after the retry
/// budget are split at their per-dimension midpoints and the children are
/// recalibrated, up to the round budget; whatever is left keeps its best
/// attempt, flagged via `settled`/`note`.
pub fn iterative_training(
    oracle: &HdcOracle,
    params: &PlantParams,
    cfg: &VerifyConfig,
) -> Result<Vec<CalibratedRegion>, VerifyError> {
    cfg.validate(params)?;
    let grid = GridSpec::new(cfg.domain.clone(), cfg.calibration_widths.clone())?;
    let mut work: Vec<(u64, StateBox)> = grid
        .cells()
        .iter()
        .enumerate()
        .map(|(i, c)| (i as u64, c.clone()))
        .collect();
    let mut next_id = work.len() as u64;
    let mut finished: Vec<CalibratedRegion> = Vec::new();
    for round in 0..cfg.max_rounds {
        if work.is_empty() {
            break;
        }
        let last_round = round + 1 == cfg.max_rounds;
        let outcomes: Vec<RegionOutcome> = work
            .par_iter()
            .map(|(id, region)| calibrate_region(oracle, params, cfg, *id, region, last_round))
            .collect();
        let mut next_work = Vec::new();
        for outcome in outcomes {
            match outcome {
                RegionOutcome::Done(r) => finished.push(r),
                RegionOutcome::Split(parent) => {
                    for child in parent.region.split(&vec![2; parent.region.dim()]) {
                        next_work.push((next_id, child));
                        next_id += 1;
                    }
                }
            }
        }
        work = next_work;
    }
    finished.sort_by_key(|r| r.id);
    Ok(finished)
}

// ==================== verdict maps ====================

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Safe,
    Unsafe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruth {
    Safe,
    Unsafe,
    Unknown,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Safe => "safe",
            Verdict::Unsafe => "unsafe",
        }
    }
}

impl GroundTruth {
    pub fn name(self) -> &'static str {
        match self {
            GroundTruth::Safe => "safe",
            GroundTruth::Unsafe => "unsafe",
            GroundTruth::Unknown => "unknown",
        }
    }
}

/// One verification cell's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub index: usize,
    pub cell: StateBox,
    pub controller_id: u64,
    pub bound_value: f64,
    pub verdict: Verdict,
    pub gt: GroundTruth,
    pub note: Option<String>,
}

/// Per-cell verdicts over the verification grid, plus the calibrated
/// regions that produced them. Every grid cell appears exactly once, in
/// grid order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictMap {
    pub domain: StateBox,
    pub cells: Vec<CellRecord>,
    pub regions: Vec<CalibratedRegion>,
}

/// Calibrate controllers, then classify every verification cell: the cell
/// inherits the controller and bound of the calibration region containing
/// its center, its inflated tube is propagated, and the goal check decides
/// the verdict. Any per-cell failure, missing region, or infinite bound is
/// conservatively recorded as unsafe with a note. Ground truth starts out
/// unknown; merge labels with [`merge_ground_truth`].
pub fn end_to_end_verify(
    oracle: &HdcOracle,
    params: &PlantParams,
    cfg: &VerifyConfig,
) -> Result<VerdictMap, VerifyError> {
    let regions = iterative_training(oracle, params, cfg)?;
    let grid = GridSpec::new(cfg.domain.clone(), cfg.cell_widths.clone())?;
    let opts = cfg.reach_options(params);
    let cells: Vec<CellRecord> = grid
        .cells()
        .par_iter()
        .enumerate()
        .map(|(index, cell)| {
            let center = cell.center();
            let Some(home) = regions.iter().find(|r| r.region.contains(&center)) else {
                return CellRecord {
                    index,
                    cell: cell.clone(),
                    controller_id: u64::MAX,
                    bound_value: f64::INFINITY,
                    verdict: Verdict::Unsafe,
                    gt: GroundTruth::Unknown,
                    note: Some("no calibration region covers the cell center".to_string()),
                };
            };
            let (verdict, note) =
                match tube_certifies(cfg, params, &home.net, &home.bound, cell, &opts) {
                    Ok(true) => (Verdict::Safe, None),
                    Ok(false) => {
                        let note = if !home.bound.value.is_finite() {
                            Some("discrepancy bound is unbounded".to_string())
                        } else {
                            None
                        };
                        (Verdict::Unsafe, note)
                    }
                    Err(e) => (Verdict::Unsafe, Some(format!("reach failed: {e}"))),
                };
            CellRecord {
                index,
                cell: cell.clone(),
                controller_id: home.id,
                bound_value: home.bound.value,
                verdict,
                gt: GroundTruth::Unknown,
                note,
            }
        })
        .collect();
    Ok(VerdictMap {
        domain: cfg.domain.clone(),
        cells,
        regions,
    })
}

/// Whether one simulated trajectory meets the goal criterion.
fn trajectory_meets_goal(
    traj: &crate::dynamics::Trajectory,
    goal: &StateBox,
    mode: GoalMode,
) -> bool {
    match mode {
        GoalMode::FinalSet => goal.contains(traj.states.last().expect("non-empty rollout")),
        GoalMode::FromStep(k) => traj.states[k.min(traj.states.len() - 1)..]
            .iter()
            .all(|s| goal.contains(s)),
    }
}

/// Label every grid cell by simulating the oracle loop from uniform
/// samples: safe when all sampled trajectories meet the goal criterion,
/// unsafe when any misses it, unknown when a simulation fails.
pub fn ground_truth(
    oracle: &HdcOracle,
    grid: &GridSpec,
    samples_per_cell: usize,
    horizon: usize,
    goal: &StateBox,
    mode: GoalMode,
    seed: u64,
) -> Result<Vec<GroundTruth>, VerifyError> {
    if samples_per_cell == 0 {
        return Err(VerifyError::InvalidField {
            field: "samples_per_cell",
            message: "must be at least 1".to_string(),
        });
    }
    let labels = grid
        .cells()
        .par_iter()
        .enumerate()
        .map(|(j, cell)| {
            let cell_seed = derive_seed(derive_seed(seed, GROUND_TRUTH_STREAM), j as u64);
            let mut rng = crate::seeding::stream_rng(cell_seed, 0);
            for i in 0..samples_per_cell {
                let s0 = cell.sample(&mut rng);
                match oracle.trajectory(&s0, horizon, derive_seed(cell_seed, 1 + i as u64)) {
                    Ok(traj) => {
                        if !trajectory_meets_goal(&traj, goal, mode) {
                            return GroundTruth::Unsafe;
                        }
                    }
                    Err(_) => return GroundTruth::Unknown,
                }
            }
            GroundTruth::Safe
        })
        .collect();
    Ok(labels)
}

/// Attach ground-truth labels (in grid order) to a verdict map.
pub fn merge_ground_truth(
    map: &mut VerdictMap,
    labels: &[GroundTruth],
) -> Result<(), VerifyError> {
    if labels.len() != map.cells.len() {
        return Err(VerifyError::LabelCount {
            expected: map.cells.len(),
            got: labels.len(),
        });
    }
    for (cell, label) in map.cells.iter_mut().zip(labels) {
        cell.gt = *label;
    }
    Ok(())
}

// ==================== metrics ====================

/// Confusion counts and rates over cells with known ground truth. A rate
/// whose denominator is zero is `None` (undefined), never zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub true_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub false_positives: usize,
    pub unknown: usize,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

/// Score a verdict map against its merged ground truth. Safe is the
/// positive class; cells with unknown ground truth are excluded from every
/// count except `unknown`.
pub fn score(map: &VerdictMap) -> Metrics {
    let mut tp = 0;
    let mut fn_ = 0;
    let mut tn = 0;
    let mut fp = 0;
    let mut unknown = 0;
    for cell in &map.cells {
        match (cell.verdict, cell.gt) {
            (Verdict::Safe, GroundTruth::Safe) => tp += 1,
            (Verdict::Unsafe, GroundTruth::Safe) => fn_ += 1,
            (Verdict::Unsafe, GroundTruth::Unsafe) => tn += 1,
            (Verdict::Safe, GroundTruth::Unsafe) => fp += 1,
            (_, GroundTruth::Unknown) => unknown += 1,
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let tpr = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (precision, tpr) {
        (Some(p), Some(t)) if p + t > 0.0 => Some(2.0 * p * t / (p + t)),
        _ => None,
    };
    Metrics {
        true_positives: tp,
        false_negatives: fn_,
        true_negatives: tn,
        false_positives: fp,
        unknown,
        tpr,
        tnr: ratio(tn, tn + fp),
        precision,
        f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::Activation;
    use crate::distill::ArchSpec;
    use crate::highdim::{DecoderKind, ReferenceLaw};

    fn boxy(bounds: &[(f64, f64)]) -> StateBox {
        StateBox::from_bounds(
            &bounds.iter().map(|b| b.0).collect::<Vec<_>>(),
            &bounds.iter().map(|b| b.1).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    /// A noiseless oracle whose action the distilled networks can represent
    /// exactly: identity decoding plus an affine law.
    fn exact_oracle(params: &PlantParams, weights: Vec<f64>, bias: f64) -> HdcOracle {
        HdcOracle::new(
            params.clone(),
            ReferenceLaw::Affine { weights, bias },
            DecoderKind::Identity,
            vec![0.0; params.state_dim()],
        )
        .unwrap()
    }

    fn linear_arch() -> ArchSpec {
        ArchSpec {
            hidden: vec![],
            output_activation: Activation::Identity,
            output_scale: 1.0,
        }
    }

    fn base_config(domain: StateBox, goal: StateBox) -> VerifyConfig {
        VerifyConfig {
            approach: Approach::Action,
            domain,
            goal,
            goal_mode: GoalMode::FinalSet,
            horizon: 8,
            alpha: 0.25,
            n_per_region: 12,
            n_init: 5,
            xi: 1e-3,
            train: TrainConfig {
                arch: linear_arch(),
                learning_rate: 0.5,
                batch_size: 0,
                max_epochs: 60000,
                mse_threshold: 1e-12,
                lip_threshold: 10.0,
                seed: 0,
            },
            calibration_widths: vec![0.25, 0.25],
            cell_widths: vec![0.125, 0.125],
            retry_budget: 1,
            max_rounds: 2,
            reach: None,
            seed: 7,
        }
    }

    // ==================== grids ====================

    #[test]
    fn grid_tiles_the_benchmark_domain() {
        let grid = GridSpec::new(boxy(&[(0.0, 2.0), (-2.0, 0.0)]), vec![0.25, 0.25]).unwrap();
        assert_eq!(grid.len(), 64);
        let fine = GridSpec::new(boxy(&[(0.0, 2.0), (-2.0, 0.0)]), vec![0.05, 0.05]).unwrap();
        assert_eq!(fine.len(), 1600);
    }

    #[test]
    fn last_cells_are_thinner_when_widths_do_not_divide() {
        let grid = GridSpec::new(boxy(&[(0.0, 1.0)]), vec![0.3]).unwrap();
        assert_eq!(grid.len(), 4);
        let last = &grid.cells()[3];
        assert_eq!(last.dim_interval(0).lo, 0.8999999999999999);
        assert_eq!(last.dim_interval(0).hi, 1.0);
        // Shared boundaries are bitwise identical between neighbors.
        for pair in grid.cells().windows(2) {
            assert_eq!(pair[0].dim_interval(0).hi, pair[1].dim_interval(0).lo);
        }
    }

    #[test]
    fn cells_partition_without_interior_overlap() {
        let grid = GridSpec::new(boxy(&[(0.0, 1.0), (0.0, 1.0)]), vec![0.4, 0.5]).unwrap();
        assert_eq!(grid.len(), 3 * 2);
        for (i, a) in grid.cells().iter().enumerate() {
            for b in &grid.cells()[i + 1..] {
                if let Some(overlap) = a.intersect(b) {
                    assert_eq!(overlap.volume(), 0.0, "cells may only share faces");
                }
            }
        }
        // Sampled points are always covered by some cell.
        let mut rng = crate::seeding::stream_rng(3, 0);
        for _ in 0..500 {
            let s = grid.domain().sample(&mut rng);
            assert!(grid.locate(&s).is_some());
        }
    }

    #[test]
    fn invalid_grid_parameters_name_the_field() {
        let err = GridSpec::new(boxy(&[(0.0, 1.0)]), vec![0.0]).unwrap_err();
        assert!(matches!(
            err,
            VerifyError::InvalidField { field: "cell widths", .. }
        ));
        let err = GridSpec::new(boxy(&[(0.0, 1.0)]), vec![0.1, 0.1]).unwrap_err();
        assert!(matches!(
            err,
            VerifyError::InvalidField { field: "cell widths", .. }
        ));
    }

    // ==================== configuration ====================

    #[test]
    fn config_validation_names_the_offending_field() {
        let params = PlantParams::inverted_pendulum();
        let good = base_config(boxy(&[(-0.25, 0.25), (-0.25, 0.25)]), boxy(&[(0.0, 0.35), (-5.0, 5.0)]));
        assert!(good.validate(&params).is_ok());

        let mut bad = good.clone();
        bad.alpha = 1.5;
        assert!(matches!(
            bad.validate(&params).unwrap_err(),
            VerifyError::InvalidField { field: "alpha", .. }
        ));

        let mut bad = good.clone();
        bad.xi = 0.0;
        assert!(matches!(
            bad.validate(&params).unwrap_err(),
            VerifyError::InvalidField { field: "xi", .. }
        ));

        let mut bad = good.clone();
        bad.goal_mode = GoalMode::FromStep(99);
        assert!(matches!(
            bad.validate(&params).unwrap_err(),
            VerifyError::InvalidField { field: "goal_mode", .. }
        ));

        let mut bad = good;
        bad.cell_widths = vec![0.1];
        assert!(matches!(
            bad.validate(&params).unwrap_err(),
            VerifyError::InvalidField { field: "cell_widths", .. }
        ));
    }

    // ==================== calibration ====================

    #[test]
    fn exact_teacher_calibrates_with_tiny_bounds_and_no_splits() {
        // The oracle's law is affine and the architecture is a single
        // linear layer, so training can match it almost exactly and the
        // conformal bounds collapse.
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-10.0, 10.0), (-10.0, 10.0)]),
        );
        let regions = iterative_training(&oracle, &params, &cfg).unwrap();
        assert_eq!(regions.len(), 4, "no region should split");
        for r in &regions {
            assert!(r.settled, "region {} not settled: {:?}", r.id, r.note);
            assert!(
                r.bound.value <= 1e-4,
                "bound {} should be near zero",
                r.bound.value
            );
            assert_eq!(r.bound.alpha, cfg.alpha);
        }
    }

    #[test]
    fn infinite_threshold_never_splits() {
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-10.0, 10.0), (-10.0, 10.0)]),
        );
        cfg.xi = f64::INFINITY;
        // Untrained networks keep the bound well away from zero, yet the
        // infinite threshold accepts every region as-is.
        cfg.train.max_epochs = 0;
        cfg.max_rounds = 3;
        let regions = iterative_training(&oracle, &params, &cfg).unwrap();
        assert_eq!(regions.len(), 4);
    }

    #[test]
    fn tiny_threshold_splits_region_down_to_the_round_budget() {
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-10.0, 10.0), (-10.0, 10.0)]),
        );
        // One coarse region, untrained nets, and an unreachable threshold:
        // every round splits every live region in half per dimension.
        cfg.calibration_widths = vec![0.5, 0.5];
        cfg.train.max_epochs = 0;
        cfg.xi = 1e-12;
        cfg.retry_budget = 0;
        cfg.max_rounds = 3;
        let regions = iterative_training(&oracle, &params, &cfg).unwrap();
        assert_eq!(regions.len(), 16, "two split generations of a 2-d region");
        for r in &regions {
            assert!((r.region.max_width() - 0.125).abs() <= 1e-12);
            assert!(!r.settled);
            assert!(r.note.is_some());
        }
        // The children exactly tile the original region.
        let total: f64 = regions.iter().map(|r| r.region.volume()).sum();
        assert!((total - 0.25).abs() <= 1e-12);
    }

    // ==================== end to end ====================

    #[test]
    fn goal_covering_everything_verifies_every_cell() {
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            StateBox::new(vec![Interval::everything(), Interval::everything()]).unwrap(),
        );
        cfg.train.max_epochs = 200;
        cfg.xi = f64::INFINITY;
        let map = end_to_end_verify(&oracle, &params, &cfg).unwrap();
        assert_eq!(map.cells.len(), 16);
        assert!(map.cells.iter().all(|c| c.verdict == Verdict::Safe));
        // Partition integrity: cells tile the domain in grid order.
        let grid = GridSpec::new(cfg.domain.clone(), cfg.cell_widths.clone()).unwrap();
        for (record, cell) in map.cells.iter().zip(grid.cells()) {
            assert_eq!(&record.cell, cell);
        }
    }

    #[test]
    fn unbounded_discrepancy_marks_cells_unsafe() {
        // One calibration sample cannot support the confidence level, so
        // the bound is infinite and every cell must land on the unsafe side
        // even though the goal is everything.
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            StateBox::new(vec![Interval::everything(), Interval::everything()]).unwrap(),
        );
        cfg.n_per_region = 1;
        cfg.alpha = 0.05;
        cfg.xi = f64::INFINITY;
        cfg.train.max_epochs = 100;
        let map = end_to_end_verify(&oracle, &params, &cfg).unwrap();
        assert!(map
            .cells
            .iter()
            .all(|c| c.verdict == Verdict::Unsafe && c.bound_value.is_infinite()));
        assert!(map.cells[0]
            .note
            .as_deref()
            .unwrap()
            .contains("unbounded"));
    }

    #[test]
    fn verification_is_deterministic_for_a_seed() {
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-0.5, 0.5), (-2.0, 2.0)]),
        );
        cfg.train.max_epochs = 300;
        let a = end_to_end_verify(&oracle, &params, &cfg).unwrap();
        let b = end_to_end_verify(&oracle, &params, &cfg).unwrap();
        assert_eq!(a, b);
    }

    // ==================== ground truth ====================

    #[test]
    fn frozen_states_label_by_position_alone() {
        // A frozen plant never moves, so a cell is safe exactly when all
        // its samples start inside the goal; a cell poking out is unsafe.
        let params = PlantParams::frozen(2);
        let oracle = exact_oracle(&params, vec![0.0, 0.0], 0.0);
        let grid = GridSpec::new(boxy(&[(0.0, 1.0), (0.0, 1.0)]), vec![0.5, 0.5]).unwrap();
        let goal = boxy(&[(-0.1, 0.55), (-0.1, 1.1)]);
        let labels = ground_truth(&oracle, &grid, 10, 5, &goal, GoalMode::FinalSet, 11).unwrap();
        // Cells are ordered with the last dimension fastest: the two cells
        // with x in [0, 0.5] sit inside the goal, the two with x in
        // [0.5, 1.0] stick out.
        assert_eq!(
            labels,
            vec![
                GroundTruth::Safe,
                GroundTruth::Safe,
                GroundTruth::Unsafe,
                GroundTruth::Unsafe
            ]
        );
        let again = ground_truth(&oracle, &grid, 10, 5, &goal, GoalMode::FinalSet, 11).unwrap();
        assert_eq!(labels, again, "labels are deterministic under a seed");
        let other = ground_truth(&oracle, &grid, 10, 5, &goal, GoalMode::FinalSet, 12).unwrap();
        assert_eq!(labels.len(), other.len());
    }

    #[test]
    fn one_escaping_sample_makes_the_cell_unsafe() {
        let params = PlantParams::frozen(1);
        let oracle = exact_oracle(&params, vec![0.0], 0.0);
        let grid = GridSpec::new(boxy(&[(0.0, 1.0)]), vec![1.0]).unwrap();
        // The goal covers almost the whole cell; enough samples will find
        // the sliver outside.
        let goal = boxy(&[(0.0, 0.9)]);
        let labels = ground_truth(&oracle, &grid, 64, 3, &goal, GoalMode::FinalSet, 5).unwrap();
        assert_eq!(labels, vec![GroundTruth::Unsafe]);
    }

    #[test]
    fn from_step_mode_checks_the_tail_of_each_rollout() {
        // Under the pendulum's drift a start inside the goal leaves it
        // after a few steps; requiring the tail only from a later step can
        // therefore disagree with requiring it from step zero.
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![0.0, 0.0], 0.5);
        let grid = GridSpec::new(boxy(&[(0.0, 0.05), (0.0, 0.05)]), vec![0.05, 0.05]).unwrap();
        let goal = boxy(&[(-100.0, 100.0), (0.0, 1e6)]);
        // With constant positive torque the rate only grows: safe from any
        // step.
        let labels = ground_truth(&oracle, &grid, 5, 6, &goal, GoalMode::FromStep(2), 3).unwrap();
        assert_eq!(labels, vec![GroundTruth::Safe]);
        let tight_goal = boxy(&[(-100.0, 100.0), (5.0, 1e6)]);
        // The rate passes 5.0 only after a few steps, so the final-set
        // check passes while from-step-0 fails.
        let final_ok =
            ground_truth(&oracle, &grid, 5, 6, &tight_goal, GoalMode::FinalSet, 3).unwrap();
        assert_eq!(final_ok, vec![GroundTruth::Safe]);
        let from_zero =
            ground_truth(&oracle, &grid, 5, 6, &tight_goal, GoalMode::FromStep(0), 3).unwrap();
        assert_eq!(from_zero, vec![GroundTruth::Unsafe]);
    }

    #[test]
    fn merge_attaches_labels_in_grid_order() {
        let params = PlantParams::inverted_pendulum();
        let oracle = exact_oracle(&params, vec![-0.265, -0.1], 0.005);
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-10.0, 10.0), (-10.0, 10.0)]),
        );
        cfg.train.max_epochs = 100;
        cfg.xi = f64::INFINITY;
        let mut map = end_to_end_verify(&oracle, &params, &cfg).unwrap();
        let labels = vec![GroundTruth::Safe; map.cells.len()];
        merge_ground_truth(&mut map, &labels).unwrap();
        assert!(map.cells.iter().all(|c| c.gt == GroundTruth::Safe));
        let err = merge_ground_truth(&mut map, &labels[1..]).unwrap_err();
        assert!(matches!(err, VerifyError::LabelCount { .. }));
    }

    // ==================== metrics ====================

    fn synthetic_map(records: &[(Verdict, GroundTruth)]) -> VerdictMap {
        let cell = boxy(&[(0.0, 1.0)]);
        VerdictMap {
            domain: cell.clone(),
            cells: records
                .iter()
                .enumerate()
                .map(|(index, (verdict, gt))| CellRecord {
                    index,
                    cell: cell.clone(),
                    controller_id: 0,
                    bound_value: 0.1,
                    verdict: *verdict,
                    gt: *gt,
                    note: None,
                })
                .collect(),
            regions: vec![],
        }
    }

    #[test]
    fn confusion_fixture_reproduces_hand_rates() {
        use GroundTruth as G;
        use Verdict as V;
        let mut records = Vec::new();
        records.extend(std::iter::repeat((V::Safe, G::Safe)).take(8));
        records.extend(std::iter::repeat((V::Unsafe, G::Safe)).take(2));
        records.extend(std::iter::repeat((V::Unsafe, G::Unsafe)).take(9));
        records.extend(std::iter::repeat((V::Safe, G::Unsafe)).take(1));
        let m = score(&synthetic_map(&records));
        assert_eq!(
            (m.true_positives, m.false_negatives, m.true_negatives, m.false_positives),
            (8, 2, 9, 1)
        );
        assert!((m.tpr.unwrap() - 0.8).abs() <= 1e-12);
        assert!((m.tnr.unwrap() - 0.9).abs() <= 1e-12);
        assert!((m.precision.unwrap() - 0.8889).abs() <= 5e-5);
        assert!((m.f1.unwrap() - 0.8421).abs() <= 5e-5);
    }

    #[test]
    fn perfect_verdicts_score_ones() {
        use GroundTruth as G;
        use Verdict as V;
        let m = score(&synthetic_map(&[
            (V::Safe, G::Safe),
            (V::Safe, G::Safe),
            (V::Unsafe, G::Unsafe),
        ]));
        assert_eq!(m.tpr, Some(1.0));
        assert_eq!(m.tnr, Some(1.0));
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
    }

    #[test]
    fn zero_denominators_are_undefined_not_zero() {
        use GroundTruth as G;
        use Verdict as V;
        // No safe verdicts: precision undefined; TPR defined and zero.
        let m = score(&synthetic_map(&[
            (V::Unsafe, G::Safe),
            (V::Unsafe, G::Unsafe),
        ]));
        assert_eq!(m.precision, None);
        assert_eq!(m.tpr, Some(0.0));
        assert_eq!(m.f1, None);
        // No ground-truth-unsafe cells: TNR undefined.
        let m = score(&synthetic_map(&[(V::Safe, G::Safe)]));
        assert_eq!(m.tnr, None);
        // Unknown cells are excluded but counted.
        let m = score(&synthetic_map(&[
            (V::Safe, G::Unknown),
            (V::Unsafe, G::Unknown),
        ]));
        assert_eq!(m.unknown, 2);
        assert_eq!(m.tpr, None);
        assert_eq!(m.tnr, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, None);
    }

    // ==================== verdict monotonicity ====================

    #[test]
    fn larger_injected_bounds_never_flip_unsafe_to_safe() {
        let params = PlantParams::inverted_pendulum();
        let mut cfg = base_config(
            boxy(&[(-0.25, 0.25), (-0.25, 0.25)]),
            boxy(&[(-0.6, 0.6), (-1.5, 1.5)]),
        );
        cfg.horizon = 12;
        let cell = boxy(&[(0.1, 0.15), (-0.15, -0.1)]);
        let net = LdcNetwork::new(
            vec![crate::controllers::Layer {
                weights: vec![vec![-0.265, -0.1]],
                bias: vec![0.0],
                activation: Activation::Identity,
            }],
            1.0,
        )
        .unwrap();
        let opts = ReachOptions::for_plant(&params);
        for approach in [Approach::Action, Approach::Trajectory] {
            cfg.approach = approach;
            let kind = match approach {
                Approach::Action => DiscrepancyKind::Action,
                Approach::Trajectory => DiscrepancyKind::Trajectory,
            };
            let mut last_safe = true;
            for value in [0.0, 1e-3, 1e-2, 0.1, 1.0, f64::INFINITY] {
                let bound = DiscrepancyBound {
                    kind,
                    value,
                    alpha: 0.05,
                    sample_count: 60,
                    region: cell.clone(),
                    seed: 0,
                };
                let safe = tube_certifies(&cfg, &params, &net, &bound, &cell, &opts).unwrap();
                assert!(
                    last_safe || !safe,
                    "{}: verdict flipped unsafe -> safe as the bound grew to {value}",
                    approach.name()
                );
                last_safe = safe;
            }
        }
    }
}
