//! Batch front end for the verification pipeline: parse a run
//! configuration, execute one stage, and emit artifacts into the output
//! directory. The six stages are `distill` (datasets, models, reports),
//! `discrepancy` (calibrated bounds), `reach` (one region's tube),
//! `verify` (the full verdict map), `gt` (ground-truth labels), and
//! `report` (merged metrics plus the SVG region map).
//!
//! Exit status: 0 on success, 1 when the pipeline itself fails, 2 for
//! configuration or usage errors.

pub mod artifacts;
pub mod config;

use artifacts::ArtifactError;
use clap::{Parser, Subcommand};
use config::{ConfigError, Resolved};
use rayon::prelude::*;
use reachbridge_core::distill::{generate_dataset, train_ldc};
use reachbridge_core::highdim::DecoderKind;
use reachbridge_core::reach::{
    check_goal, inflate_tube_trajectory, reach_tube_action_inflated, reach_tube_ldc, ReachTube,
};
use reachbridge_core::verify::{
    attempt_seeds, end_to_end_verify, ground_truth, iterative_training, merge_ground_truth,
    score, Approach, GridSpec, VerifyError,
};

#[derive(Parser)]
#[command(name = "reachbridge", version, about = "distill, bound, and verify controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to a JSON run configuration, or a preset name (ip, mc, cp).
    #[arg(long, global = true, default_value = "ip")]
    config: String,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for region and cell processing.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets and train one controller per calibration region.
    Distill,
    /// Calibrate discrepancy bounds for every region.
    Discrepancy,
    /// Propagate the reach tube of the configured region.
    Reach,
    /// Run the full pipeline and classify every verification cell.
    Verify,
    /// Label verification cells by simulating the oracle loop.
    Gt,
    /// Merge verdicts with labels into metrics and the region map.
    Report,
}

enum RunError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<ArtifactError> for RunError {
    fn from(e: ArtifactError) -> Self {
        RunError::Runtime(e.0)
    }
}

impl From<VerifyError> for RunError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::InvalidField { field, message } => RunError::Config(ConfigError {
                field: field.to_string(),
                message,
            }),
            other => RunError::Runtime(other.to_string()),
        }
    }
}

fn runtime<T>(message: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Runtime(message.into()))
}

pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        // A second build in the same process is a no-op; the first pool wins.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = config::load(&cli.config)
        .map_err(RunError::Config)
        .and_then(|file| Ok(config::resolve(&file, cli.seed, cli.out.as_deref())?))
        .and_then(|resolved| {
            artifacts::ensure_out_dir(&resolved)?;
            match cli.command {
                Command::Distill => distill(&resolved),
                Command::Discrepancy => discrepancy(&resolved),
                Command::Reach => reach(&resolved),
                Command::Verify => verify(&resolved),
                Command::Gt => gt(&resolved),
                Command::Report => report(&resolved),
            }
        });
    match outcome {
        Ok(()) => 0,
        Err(RunError::Config(e)) => {
            eprintln!("{e}");
            2
        }
        Err(RunError::Runtime(message)) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn calibration_grid(r: &Resolved) -> Result<GridSpec, RunError> {
    Ok(GridSpec::new(
        r.vcfg.domain.clone(),
        r.vcfg.calibration_widths.clone(),
    )?)
}

fn cell_grid(r: &Resolved) -> Result<GridSpec, RunError> {
    Ok(GridSpec::new(
        r.vcfg.domain.clone(),
        r.vcfg.cell_widths.clone(),
    )?)
}

fn distill(r: &Resolved) -> Result<(), RunError> {
    let grid = calibration_grid(r)?;
    let results: Vec<_> = grid
        .cells()
        .par_iter()
        .enumerate()
        .map(|(id, region)| {
            let seeds = attempt_seeds(r.seed(), id as u64, 0);
            let mut train = r.vcfg.train.clone();
            train.seed = seeds.train;
            let dataset =
                generate_dataset(&r.oracle, region, r.vcfg.n_init, r.vcfg.horizon, seeds.dataset)
                    .map_err(|e| format!("region {id}: dataset: {e}"))?;
            let samples = dataset.len();
            let trained = train_ldc(&dataset, &train)
                .map_err(|e| format!("region {id}: training: {e}"))?;
            Ok::<_, String>((id, samples, trained))
        })
        .collect();
    let mut trained = 0usize;
    let mut failures = Vec::new();
    for result in results {
        match result {
            Ok((id, samples, (net, rep))) => {
                artifacts::write_model_json(
                    r,
                    artifacts::ModelDoc {
                        region_id: id as u64,
                        region: &grid.cells()[id],
                        net: &net,
                        report: Some(&rep),
                    },
                )?;
                trained += 1;
                eprintln!(
                    "region {id}: {samples} samples, mse {:.3e} in {} epochs",
                    rep.final_mse, rep.epochs_run
                );
            }
            Err(message) => failures.push(message),
        }
    }
    for message in &failures {
        eprintln!("warning: {message}");
    }
    if r.decoder == DecoderKind::Pixel && r.frames > 0 {
        let start = r.vcfg.domain.center();
        let traj = r
            .oracle
            .trajectory(&start, r.frames, r.seed())
            .map_err(|e| RunError::Runtime(format!("frame rollout: {e}")))?;
        for (i, state) in traj.states.iter().take(r.frames).enumerate() {
            let frame = reachbridge_core::highdim::render(&r.params, state);
            artifacts::write_frame_pgm(r, i, &frame)?;
        }
    }
    println!(
        "distilled {trained}/{} regions -> {}",
        grid.len(),
        r.out.display()
    );
    if trained == 0 {
        return runtime("no region trained successfully");
    }
    Ok(())
}

fn discrepancy(r: &Resolved) -> Result<(), RunError> {
    let regions = iterative_training(&r.oracle, &r.params, &r.vcfg)?;
    let settled = regions.iter().filter(|x| x.settled).count();
    let path = artifacts::write_bounds_csv(r, &regions)?;
    println!(
        "calibrated {} regions ({settled} settled) -> {}",
        regions.len(),
        path.display()
    );
    Ok(())
}

fn single_region_tube(r: &Resolved) -> Result<(ReachTube, f64), RunError> {
    let Some(region) = &r.region else {
        return Err(RunError::Config(ConfigError {
            field: "region".to_string(),
            message: "the reach command needs a region, e.g. \"region\": [[0.0, 0.25], [-0.25, 0.0]]"
                .to_string(),
        }));
    };
    let seeds = attempt_seeds(r.seed(), 0, 0);
    let mut train = r.vcfg.train.clone();
    train.seed = seeds.train;
    let dataset = generate_dataset(&r.oracle, region, r.vcfg.n_init, r.vcfg.horizon, seeds.dataset)
        .map_err(|e| RunError::Runtime(format!("dataset: {e}")))?;
    let (net, _) =
        train_ldc(&dataset, &train).map_err(|e| RunError::Runtime(format!("training: {e}")))?;
    let opts = r
        .vcfg
        .reach
        .unwrap_or_else(|| reachbridge_core::reach::ReachOptions::for_plant(&r.params));
    let v = &r.vcfg;
    let tube = match v.approach {
        Approach::Action => {
            let bound = reachbridge_core::conformal::action_discrepancy(
                &net, &r.oracle, &r.params, region, v.alpha, v.n_per_region, v.horizon,
                seeds.calibration,
            )
            .map_err(|e| RunError::Runtime(format!("calibration: {e}")))?;
            let tube = reach_tube_action_inflated(&net, &r.params, region, v.horizon, &bound, &opts)
                .map_err(|e| RunError::Runtime(format!("propagation: {e}")))?;
            (tube, bound.value)
        }
        Approach::Trajectory => {
            let bound = reachbridge_core::conformal::traj_discrepancy(
                &net, &r.oracle, &r.params, region, v.alpha, v.n_per_region, v.horizon,
                seeds.calibration,
            )
            .map_err(|e| RunError::Runtime(format!("calibration: {e}")))?;
            let base = reach_tube_ldc(&net, &r.params, region, v.horizon, &opts)
                .map_err(|e| RunError::Runtime(format!("propagation: {e}")))?;
            let tube = inflate_tube_trajectory(&base, &bound)
                .map_err(|e| RunError::Runtime(format!("inflation: {e}")))?;
            (tube, bound.value)
        }
    };
    Ok(tube)
}

fn reach(r: &Resolved) -> Result<(), RunError> {
    let (tube, bound) = single_region_tube(r)?;
    let certified = check_goal(&tube, &r.vcfg.goal, r.vcfg.goal_mode)
        .map_err(|e| RunError::Runtime(format!("goal check: {e}")))?;
    let path = artifacts::write_tube_csv(r, &tube)?;
    println!(
        "bound {bound}, goal {} -> {}",
        if certified { "certified" } else { "not certified" },
        path.display()
    );
    Ok(())
}

fn verify(r: &Resolved) -> Result<(), RunError> {
    let map = end_to_end_verify(&r.oracle, &r.params, &r.vcfg)?;
    let safe = map
        .cells
        .iter()
        .filter(|c| c.verdict == reachbridge_core::verify::Verdict::Safe)
        .count();
    artifacts::write_bounds_csv(r, &map.regions)?;
    let vpath = artifacts::write_verdicts_csv(r, &map)?;
    let metrics = score(&map);
    artifacts::write_metrics_json(r, &metrics)?;
    println!(
        "verified {} cells ({safe} safe) -> {}",
        map.cells.len(),
        vpath.display()
    );
    Ok(())
}

fn gt(r: &Resolved) -> Result<(), RunError> {
    let grid = cell_grid(r)?;
    let labels = ground_truth(
        &r.oracle,
        &grid,
        r.gt_samples_per_cell,
        r.vcfg.horizon,
        &r.vcfg.goal,
        r.vcfg.goal_mode,
        r.seed(),
    )?;
    let safe = labels
        .iter()
        .filter(|l| **l == reachbridge_core::verify::GroundTruth::Safe)
        .count();
    let path = artifacts::write_labels_csv(r, &labels)?;
    println!("labeled {} cells ({safe} safe) -> {}", labels.len(), path.display());
    Ok(())
}

fn report(r: &Resolved) -> Result<(), RunError> {
    let verdicts_path = r.out.join("verdicts.csv");
    let labels_path = r.out.join("labels.csv");
    if !verdicts_path.exists() {
        return runtime(format!(
            "{} not found; run the verify command first",
            verdicts_path.display()
        ));
    }
    if !labels_path.exists() {
        return runtime(format!(
            "{} not found; run the gt command first",
            labels_path.display()
        ));
    }
    let mut map = artifacts::read_verdicts_csv(&verdicts_path, r.params.state_dim())?;
    let labels = artifacts::read_labels_csv(&labels_path)?;
    merge_ground_truth(&mut map, &labels)?;
    artifacts::write_verdicts_csv(r, &map)?;
    let metrics = score(&map);
    let mpath = artifacts::write_metrics_json(r, &metrics)?;
    match artifacts::write_map_svg(r, &map)? {
        Some(svg) => println!("map -> {}", svg.display()),
        None => eprintln!("note: the region map is only drawn for 2-dimensional domains"),
    }
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.4}"));
    println!(
        "tp={} fn={} tn={} fp={} unknown={} tpr={} tnr={} precision={} f1={} -> {}",
        metrics.true_positives,
        metrics.false_negatives,
        metrics.true_negatives,
        metrics.false_positives,
        metrics.unknown,
        show(metrics.tpr),
        show(metrics.tnr),
        show(metrics.precision),
        show(metrics.f1),
        mpath.display()
    );
    Ok(())
}
