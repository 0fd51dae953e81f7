//! Run configuration: JSON schema, built-in benchmark presets, resolution
//! into concrete pipeline inputs, and the canonical config hash stamped
//! into every artifact.
//!
//! A configuration is resolved in three layers: the benchmark preset
//! supplies every default, the JSON file overrides individual fields, and
//! command-line flags override the file. The resolved configuration is
//! hashed (sha-256 over a canonical text rendering, first 16 hex digits) so
//! artifacts can be traced back to the exact run parameters even when the
//! file itself is lost.

use reachbridge_core::controllers::Activation;
use reachbridge_core::distill::{ArchSpec, TrainConfig};
use reachbridge_core::dynamics::PlantParams;
use reachbridge_core::geom::StateBox;
use reachbridge_core::highdim::{DecoderKind, HdcOracle, ReferenceLaw};
use reachbridge_core::interval::Interval;
use reachbridge_core::reach::GoalMode;
use reachbridge_core::verify::{Approach, VerifyConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::PathBuf;

/// A configuration or usage problem; the process exits with status 2.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error in `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        field: field.to_string(),
        message: message.into(),
    })
}

/// A JSON number or the strings "inf" / "-inf", so unbounded goal edges
/// can be written in plain JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Extended {
    Num(f64),
    Named(String),
}

impl Extended {
    fn value(&self, field: &str) -> Result<f64, ConfigError> {
        match self {
            Extended::Num(x) => Ok(*x),
            Extended::Named(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => bad(field, format!("not a number: {other:?}")),
            },
        }
    }
}

/// Noise scale: one value for every state dimension, or one per dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    PerDim(Vec<f64>),
}

/// The JSON file schema. Every field is optional: whatever is absent comes
/// from the benchmark preset. Unknown fields are rejected.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset name (`ip`, `mc`, `cp`); defaults apply benchmark literals.
    pub preset: Option<String>,
    /// Benchmark id; implied by `preset` when absent.
    pub benchmark: Option<String>,
    pub approach: Option<Approach>,
    /// Observation noise scale for the oracle.
    pub sigma: Option<SigmaSpec>,
    /// `pixel` (render + decode) or `identity` (direct state access).
    pub decoder: Option<String>,
    /// Override of the plant's admissible action interval.
    pub actuation: Option<[Extended; 2]>,
    /// Initial set, one `[lo, hi]` pair per state dimension.
    pub domain: Option<Vec<[Extended; 2]>>,
    pub goal: Option<Vec<[Extended; 2]>>,
    pub goal_mode: Option<GoalMode>,
    pub horizon: Option<usize>,
    pub alpha: Option<f64>,
    pub n_per_region: Option<usize>,
    pub n_init: Option<usize>,
    /// Discrepancy threshold; accepts "inf".
    pub xi: Option<Extended>,
    pub train: Option<TrainConfig>,
    pub calibration_widths: Option<Vec<f64>>,
    pub cell_widths: Option<Vec<f64>>,
    pub retry_budget: Option<usize>,
    pub max_rounds: Option<usize>,
    pub gt_samples_per_cell: Option<usize>,
    /// The single region the `reach` command propagates.
    pub region: Option<Vec<[Extended; 2]>>,
    /// Rendered oracle frames emitted by `distill` (pixel decoder only).
    pub frames: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<String>,
}

/// Fully resolved run parameters, ready to drive the pipeline.
#[derive(Debug)]
pub struct Resolved {
    pub benchmark: &'static str,
    pub params: PlantParams,
    pub oracle: HdcOracle,
    pub decoder: DecoderKind,
    pub sigma: Vec<f64>,
    pub vcfg: VerifyConfig,
    pub gt_samples_per_cell: usize,
    pub region: Option<StateBox>,
    pub frames: usize,
    pub out: PathBuf,
    pub hash: String,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.vcfg.seed
    }
}

struct Preset {
    benchmark: &'static str,
    domain: Vec<[f64; 2]>,
    goal: Vec<[f64; 2]>,
    horizon: usize,
    xi_action: f64,
    xi_trajectory: f64,
    calibration_widths: Vec<f64>,
    cell_widths: Vec<f64>,
}

/// Benchmark scenario literals: initial set, horizon, goal, and grid
/// resolutions, per benchmark.
fn preset(name: &str) -> Option<Preset> {
    let inf = f64::INFINITY;
    match name {
        "ip" | "inverted-pendulum" => Some(Preset {
            benchmark: "inverted-pendulum",
            domain: vec![[0.0, 2.0], [-2.0, 0.0]],
            goal: vec![[0.0, 0.35], [-inf, inf]],
            horizon: 30,
            xi_action: 3e-3,
            xi_trajectory: 0.15,
            calibration_widths: vec![0.25, 0.25],
            cell_widths: vec![0.05, 0.05],
        }),
        "mc" | "mountain-car" => Some(Preset {
            benchmark: "mountain-car",
            domain: vec![[-0.6, -0.4], [-0.02, 0.05]],
            goal: vec![[0.45, inf], [-inf, inf]],
            horizon: 60,
            xi_action: 3e-3,
            xi_trajectory: 0.05,
            calibration_widths: vec![0.05, 0.0175],
            cell_widths: vec![0.01, 0.0035],
        }),
        "cp" | "cart-pole" => Some(Preset {
            benchmark: "cart-pole",
            domain: vec![[0.0, 0.1], [0.0, 0.1], [0.05, 0.15], [-0.4, -0.35]],
            goal: vec![[0.0, 0.2], [-inf, inf], [-0.2, 0.2], [-inf, inf]],
            horizon: 20,
            xi_action: 3e-3,
            xi_trajectory: 0.05,
            calibration_widths: vec![0.05, 0.05, 0.05, 0.025],
            cell_widths: vec![0.025, 0.025, 0.025, 0.0125],
        }),
        _ => None,
    }
}

fn default_train() -> TrainConfig {
    TrainConfig {
        arch: ArchSpec {
            hidden: vec![(16, Activation::Tanh)],
            output_activation: Activation::Identity,
            output_scale: 1.0,
        },
        learning_rate: 0.5,
        batch_size: 0,
        max_epochs: 6000,
        mse_threshold: 1e-5,
        lip_threshold: 6.0,
        seed: 0,
    }
}

fn parse_box(spec: &[[Extended; 2]], field: &str) -> Result<StateBox, ConfigError> {
    let mut lower = Vec::with_capacity(spec.len());
    let mut upper = Vec::with_capacity(spec.len());
    for pair in spec {
        lower.push(pair[0].value(field)?);
        upper.push(pair[1].value(field)?);
    }
    StateBox::from_bounds(&lower, &upper).map_err(|e| ConfigError {
        field: field.to_string(),
        message: e.to_string(),
    })
}

fn plain_box(spec: &[[f64; 2]]) -> StateBox {
    StateBox::from_bounds(
        &spec.iter().map(|p| p[0]).collect::<Vec<_>>(),
        &spec.iter().map(|p| p[1]).collect::<Vec<_>>(),
    )
    .expect("preset boxes are well formed")
}

/// Read a config file, or treat a bare preset name as an empty file with
/// that preset.
pub fn load(path_or_preset: &str) -> Result<RunConfig, ConfigError> {
    if preset(path_or_preset).is_some() && !std::path::Path::new(path_or_preset).exists() {
        return Ok(RunConfig {
            preset: Some(path_or_preset.to_string()),
            ..RunConfig::default()
        });
    }
    let text = std::fs::read_to_string(path_or_preset).map_err(|e| ConfigError {
        field: "config".to_string(),
        message: format!("cannot read {path_or_preset}: {e}"),
    })?;
    serde_json::from_str(&text).map_err(|e| ConfigError {
        field: "config".to_string(),
        message: format!("{path_or_preset}: {e}"),
    })
}

/// Merge preset defaults, file fields, and flag overrides into concrete
/// pipeline inputs, validating everything and computing the config hash.
pub fn resolve(
    file: &RunConfig,
    seed_flag: Option<u64>,
    out_flag: Option<&str>,
) -> Result<Resolved, ConfigError> {
    let preset_name = file
        .preset
        .as_deref()
        .or(file.benchmark.as_deref())
        .unwrap_or("ip");
    let Some(base) = preset(preset_name) else {
        return bad(
            "preset",
            format!("unknown benchmark or preset {preset_name:?} (expected ip, mc, or cp)"),
        );
    };
    if let Some(bench) = file.benchmark.as_deref() {
        let named = preset(bench).map(|p| p.benchmark);
        if named != Some(base.benchmark) {
            return bad(
                "benchmark",
                format!("{bench:?} conflicts with preset {preset_name:?}"),
            );
        }
    }
    let mut params = match base.benchmark {
        "inverted-pendulum" => PlantParams::inverted_pendulum(),
        "mountain-car" => PlantParams::mountain_car(),
        _ => PlantParams::cart_pole(),
    };
    if let Some(pair) = &file.actuation {
        let lo = pair[0].value("actuation")?;
        let hi = pair[1].value("actuation")?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("actuation", format!("not a valid interval: [{lo}, {hi}]"));
        }
        params.actuation = Interval::new(lo, hi);
    }
    let d = params.state_dim();

    let approach = file.approach.unwrap_or(Approach::Action);
    let sigma = match &file.sigma {
        None => vec![0.0; d],
        Some(SigmaSpec::Uniform(s)) => vec![*s; d],
        Some(SigmaSpec::PerDim(v)) => v.clone(),
    };
    if sigma.len() != d || sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return bad(
            "sigma",
            format!("expected {d} finite non-negative entries, got {sigma:?}"),
        );
    }
    let decoder = match file.decoder.as_deref().unwrap_or("pixel") {
        "pixel" => DecoderKind::Pixel,
        "identity" => DecoderKind::Identity,
        other => return bad("decoder", format!("expected pixel or identity, got {other:?}")),
    };
    let oracle = HdcOracle::new(
        params.clone(),
        ReferenceLaw::for_plant(&params),
        decoder,
        sigma.clone(),
    )
    .map_err(|e| ConfigError {
        field: "sigma".to_string(),
        message: e.to_string(),
    })?;

    let domain = match &file.domain {
        Some(spec) => parse_box(spec, "domain")?,
        None => plain_box(&base.domain),
    };
    let goal = match &file.goal {
        Some(spec) => parse_box(spec, "goal")?,
        None => plain_box(&base.goal),
    };
    let xi = match &file.xi {
        Some(v) => v.value("xi")?,
        None => match approach {
            Approach::Action => base.xi_action,
            Approach::Trajectory => base.xi_trajectory,
        },
    };
    let vcfg = VerifyConfig {
        approach,
        domain,
        goal,
        goal_mode: file.goal_mode.unwrap_or(GoalMode::FinalSet),
        horizon: file.horizon.unwrap_or(base.horizon),
        alpha: file.alpha.unwrap_or(0.05),
        n_per_region: file.n_per_region.unwrap_or(60),
        n_init: file.n_init.unwrap_or(10),
        xi,
        train: file.train.clone().unwrap_or_else(default_train),
        calibration_widths: file
            .calibration_widths
            .clone()
            .unwrap_or(base.calibration_widths),
        cell_widths: file.cell_widths.clone().unwrap_or(base.cell_widths),
        retry_budget: file.retry_budget.unwrap_or(2),
        max_rounds: file.max_rounds.unwrap_or(3),
        reach: None,
        seed: seed_flag.or(file.seed).unwrap_or(0),
    };
    vcfg.validate(&params).map_err(|e| match e {
        reachbridge_core::verify::VerifyError::InvalidField { field, message } => ConfigError {
            field: field.to_string(),
            message,
        },
        other => ConfigError {
            field: "config".to_string(),
            message: other.to_string(),
        },
    })?;
    let gt_samples_per_cell = file.gt_samples_per_cell.unwrap_or(10);
    if gt_samples_per_cell == 0 {
        return bad("gt_samples_per_cell", "must be at least 1");
    }
    let region = match &file.region {
        Some(spec) => {
            let b = parse_box(spec, "region")?;
            if b.dim() != d {
                return bad("region", format!("expected {d} dimensions, got {}", b.dim()));
            }
            if !b.is_finite() {
                return bad("region", "must be bounded");
            }
            Some(b)
        }
        None => None,
    };
    let out = PathBuf::from(
        out_flag
            .map(str::to_string)
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| "reachbridge-out".to_string()),
    );

    let mut resolved = Resolved {
        benchmark: base.benchmark,
        params,
        oracle,
        decoder,
        sigma,
        vcfg,
        gt_samples_per_cell,
        region,
        frames: file.frames.unwrap_or(3),
        out,
        hash: String::new(),
    };
    resolved.hash = hash_of(&resolved);
    Ok(resolved)
}

fn push_box(text: &mut String, name: &str, b: &StateBox) {
    write!(text, "{name}=").unwrap();
    for iv in b.dims() {
        write!(text, "[{},{}]", iv.lo, iv.hi).unwrap();
    }
    text.push('\n');
}

/// Canonical text rendering of every resolved field. Plain `Display` of
/// floats round-trips exactly and renders infinities, which JSON cannot.
fn canonical(r: &Resolved) -> String {
    let mut text = String::new();
    let v = &r.vcfg;
    writeln!(text, "benchmark={}", r.benchmark).unwrap();
    writeln!(text, "approach={}", v.approach.name()).unwrap();
    writeln!(
        text,
        "actuation=[{},{}]",
        r.params.actuation.lo, r.params.actuation.hi
    )
    .unwrap();
    writeln!(
        text,
        "decoder={}",
        match r.decoder {
            DecoderKind::Pixel => "pixel",
            DecoderKind::Identity => "identity",
        }
    )
    .unwrap();
    writeln!(
        text,
        "sigma={}",
        r.sigma
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )
    .unwrap();
    push_box(&mut text, "domain", &v.domain);
    push_box(&mut text, "goal", &v.goal);
    writeln!(
        text,
        "goal_mode={}",
        match v.goal_mode {
            GoalMode::FinalSet => "final-set".to_string(),
            GoalMode::FromStep(k) => format!("from-step:{k}"),
        }
    )
    .unwrap();
    writeln!(text, "horizon={}", v.horizon).unwrap();
    writeln!(text, "alpha={}", v.alpha).unwrap();
    writeln!(text, "n_per_region={}", v.n_per_region).unwrap();
    writeln!(text, "n_init={}", v.n_init).unwrap();
    writeln!(text, "xi={}", v.xi).unwrap();
    let t = &v.train;
    let hidden = t
        .arch
        .hidden
        .iter()
        .map(|(n, a)| format!("{n}:{}", activation_name(*a)))
        .collect::<Vec<_>>()
        .join(",");
    writeln!(
        text,
        "train=arch[{hidden}]->{}x{};lr={};batch={};epochs={};mse={};lip={}",
        activation_name(t.arch.output_activation),
        t.arch.output_scale,
        t.learning_rate,
        t.batch_size,
        t.max_epochs,
        t.mse_threshold,
        t.lip_threshold
    )
    .unwrap();
    let widths = |w: &[f64]| {
        w.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    writeln!(text, "calibration_widths={}", widths(&v.calibration_widths)).unwrap();
    writeln!(text, "cell_widths={}", widths(&v.cell_widths)).unwrap();
    writeln!(text, "retry_budget={}", v.retry_budget).unwrap();
    writeln!(text, "max_rounds={}", v.max_rounds).unwrap();
    writeln!(text, "gt_samples_per_cell={}", r.gt_samples_per_cell).unwrap();
    if let Some(region) = &r.region {
        push_box(&mut text, "region", region);
    }
    writeln!(text, "seed={}", v.seed).unwrap();
    text
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Sigmoid => "sigmoid",
        Activation::Identity => "identity",
    }
}

fn hash_of(r: &Resolved) -> String {
    let digest = Sha256::digest(canonical(r).as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}
