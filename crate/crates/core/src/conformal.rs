//! Split-conformal calibration of the gap between the image-pipeline
//! controller and its distilled low-dimensional stand-in.
//!
//! The two closed loops are rolled out in pairs from shared initial states
//! drawn uniformly from a region. Each pair yields one non-conformity
//! score: either the largest L1 state deviation along the pair
//! (trajectory kind) or the largest gap between the recorded action
//! sequences (action kind). The calibrated bound is the rank
//! `r = ceil((k+1)(1-alpha))` element of the scores augmented with one
//! `+inf` entry, which upper-bounds a fresh score with probability at
//! least `1 - alpha` under exchangeability. The `+inf` augmentation means
//! small calibration sets honestly return an infinite bound instead of an
//! optimistic finite one, and infinite bounds propagate downstream rather
//! than being clipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::LdcNetwork;
use crate::dynamics::{simulate, PlantParams, Trajectory};
use crate::geom::{ControlAction, StateBox};
use crate::highdim::HdcOracle;
use crate::seeding::{derive_seed, stream_rng};

/// Guards small floating-point overshoot in `(k+1)(1-alpha)` before the
/// ceiling; exact integer products stay on their integer rank.
const RANK_SNAP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("cannot calibrate on an empty score list")]
    EmptyScores,
    #[error("miscoverage level must lie strictly inside (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("score at index {0} is NaN")]
    NanScore(usize),
    #[error("calibration needs at least one sample")]
    NoSamples,
    #[error("oracle plant differs from the rollout plant")]
    PlantMismatch,
    #[error("region has {got} dimensions, plant state has {expected}")]
    RegionDim { expected: usize, got: usize },
    #[error("calibration region must be bounded")]
    UnboundedRegion,
    #[error("rollout for sample {sample} failed: {message}")]
    Rollout { sample: usize, message: String },
}

/// Which gap a calibrated bound measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscrepancyKind {
    /// Largest L1 state deviation between paired rollouts.
    Trajectory,
    /// Largest gap between the paired rollouts' action sequences.
    Action,
}

impl DiscrepancyKind {
    pub fn name(&self) -> &'static str {
        match self {
            DiscrepancyKind::Trajectory => "trajectory",
            DiscrepancyKind::Action => "action",
        }
    }
}

/// A calibrated discrepancy quantile together with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyBound {
    pub kind: DiscrepancyKind,
    /// The calibrated quantile; `+inf` when the rank lands on the
    /// augmented element.
    pub value: f64,
    pub alpha: f64,
    /// Number of calibration rollout pairs.
    pub sample_count: usize,
    /// Region the initial states were drawn from.
    pub region: StateBox,
    /// Master seed of the calibration draw.
    pub seed: u64,
}

impl DiscrepancyBound {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// The rank-`r` element of `scores` augmented with one `+inf` entry,
/// `r = ceil((k+1)(1-alpha))`, counting duplicates separately.
///
/// Individual scores may be `+inf` (a diverged pair); they sort last and
/// propagate honestly. NaN scores are rejected.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64, ConformalError> {
    if scores.is_empty() {
        return Err(ConformalError::EmptyScores);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConformalError::InvalidAlpha(alpha));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(ConformalError::NanScore(i));
    }
    let k = scores.len();
    let rank = ((k + 1) as f64 * (1.0 - alpha) - RANK_SNAP).ceil() as usize;
    if rank > k {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are not NaN"));
    Ok(sorted[rank - 1])
}

/// Calibrated bound on the largest L1 state deviation between the
/// image-pipeline loop and the distilled loop over a shared horizon.
///
/// Samples `n` initial states uniformly from `region` (sample `i` uses its
/// own derived RNG stream, so any subset is reproducible), rolls both
/// loops from each, and scores the pair by the maximum over
/// `t in 0..=horizon` of the L1 distance between their states.
#[allow(clippy::too_many_arguments)]
pub fn traj_discrepancy(
    net: &LdcNetwork,
    oracle: &HdcOracle,
    params: &PlantParams,
    region: &StateBox,
    alpha: f64,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<DiscrepancyBound, ConformalError> {
    let scores = paired_scores(net, oracle, params, region, n, horizon, seed, |hdc, ldc| {
        let mut worst: f64 = 0.0;
        for (a, b) in hdc.states.iter().zip(&ldc.states) {
            let d = a
                .l1_distance(b)
                .expect("paired rollouts share the state dimension");
            worst = worst.max(d);
        }
        worst
    })?;
    Ok(DiscrepancyBound {
        kind: DiscrepancyKind::Trajectory,
        value: conformal_quantile(&scores, alpha)?,
        alpha,
        sample_count: n,
        region: region.clone(),
        seed,
    })
}

/// Calibrated bound on the largest gap between the action sequences the
/// two loops record along paired rollouts from shared initial states.
///
/// Both sequences hold post-clamp actuator commands, so the score measures
/// what the plant would actually receive.
#[allow(clippy::too_many_arguments)]
pub fn action_discrepancy(
    net: &LdcNetwork,
    oracle: &HdcOracle,
    params: &PlantParams,
    region: &StateBox,
    alpha: f64,
    n: usize,
    horizon: usize,
    seed: u64,
) -> Result<DiscrepancyBound, ConformalError> {
    let scores = paired_scores(net, oracle, params, region, n, horizon, seed, |hdc, ldc| {
        let mut worst: f64 = 0.0;
        for (a, b) in hdc.actions.iter().zip(&ldc.actions) {
            worst = worst.max((a.0 - b.0).abs());
        }
        worst
    })?;
    Ok(DiscrepancyBound {
        kind: DiscrepancyKind::Action,
        value: conformal_quantile(&scores, alpha)?,
        alpha,
        sample_count: n,
        region: region.clone(),
        seed,
    })
}

/// Shared paired-rollout loop: sample, roll both controllers from the same
/// initial state, and reduce each pair to one score.
#[allow(clippy::too_many_arguments)]
fn paired_scores(
    net: &LdcNetwork,
    oracle: &HdcOracle,
    params: &PlantParams,
    region: &StateBox,
    n: usize,
    horizon: usize,
    seed: u64,
    score: impl Fn(&Trajectory, &Trajectory) -> f64,
) -> Result<Vec<f64>, ConformalError> {
    if n == 0 {
        return Err(ConformalError::NoSamples);
    }
    if params != &oracle.params {
        return Err(ConformalError::PlantMismatch);
    }
    if region.dim() != params.state_dim() {
        return Err(ConformalError::RegionDim {
            expected: params.state_dim(),
            got: region.dim(),
        });
    }
    if !region.is_finite() {
        return Err(ConformalError::UnboundedRegion);
    }
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let s0 = region.sample(&mut stream_rng(seed, i as u64));
        let hdc = oracle
            .trajectory(&s0, horizon, derive_seed(seed, i as u64))
            .map_err(|e| ConformalError::Rollout {
                sample: i,
                message: e.to_string(),
            })?;
        let ldc = simulate(
            params,
            |s| net.eval(s).map(ControlAction).map_err(|e| e.to_string()),
            &s0,
            horizon,
        )
        .map_err(|e| ConformalError::Rollout {
            sample: i,
            message: e.to_string(),
        })?;
        scores.push(score(&hdc, &ldc));
    }
    Ok(scores)
}
