//! Verification of image-pipeline control loops by low-dimensional
//! distillation.
//!
//! The pipeline mirrors its deployment story: a high-dimensional controller
//! (rendered frames in, actions out) is distilled into small per-region
//! state-feedback networks, the distillation error is bounded with split
//! conformal prediction, and the bound inflates interval reach tubes of the
//! distilled loop so the verdicts transfer back to the original loop.

pub mod conformal;
pub mod controllers;
pub mod distill;
pub mod dynamics;
pub mod geom;
pub mod highdim;
pub mod interval;
pub mod reach;
pub mod seeding;
pub mod verify;

pub use conformal::{
    action_discrepancy, conformal_quantile, traj_discrepancy, ConformalError, DiscrepancyBound,
    DiscrepancyKind,
};
pub use controllers::{Activation, ControllerError, Layer, LdcNetwork};
pub use distill::{
    generate_dataset, train_ldc, two_objective_step, ArchSpec, DistillError, SupervisedDataset,
    TrainConfig, TrainReport,
};
pub use dynamics::{simulate, step, step_interval, DynamicsError, Plant, PlantParams, Trajectory};
pub use geom::{ActionInterval, BoxUnion, ControlAction, GeomError, State, StateBox};
pub use highdim::{
    decode_state, render, DecoderKind, HdcOracle, HighdimError, ImageFrame, ReferenceLaw,
};
pub use interval::Interval;
pub use reach::{
    check_goal, inflate_tube_trajectory, reach_tube_action_inflated, reach_tube_ldc,
    reach_tube_switched, union_tubes, GoalMode, ReachError, ReachOptions, ReachTube,
    RegionalController, TubeProvenance,
};
pub use verify::{
    end_to_end_verify, ground_truth, iterative_training, merge_ground_truth, score, Approach,
    CalibratedRegion, CellRecord, GridSpec, GroundTruth, Metrics, Verdict, VerdictMap,
    VerifyConfig, VerifyError,
};
