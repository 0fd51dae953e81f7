//! Distillation of the image-pipeline controller into small state-feedback
//! networks.
//!
//! Training minimizes two objectives at once: mean squared action error
//! against recorded oracle actions, and a Lipschitz surrogate (the product
//! of per-layer spectral norms). The two gradients are combined by a
//! case split: when they agree (non-negative inner product) the update
//! follows their angular bisector; when they conflict, the accuracy
//! gradient is projected onto the hyperplane orthogonal to the Lipschitz
//! gradient so accuracy descends without undoing the norm budget.

use crate::controllers::{spectral_norm, Activation, LdcNetwork, Layer};
use crate::geom::{State, StateBox};
use crate::highdim::{HdcOracle, HighdimError};
use crate::seeding::{derive_seed, stream_rng};
use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset has {inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("non-finite target value {value}")]
    NonFiniteTarget { value: f64 },
    #[error("rollout for sample {sample} failed: {source}")]
    Rollout {
        sample: usize,
        #[source]
        source: HighdimError,
    },
    #[error("gradient vectors have lengths {a} and {b}")]
    GradientLength { a: usize, b: usize },
    #[error("non-finite gradient component")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("network construction failed: {0}")]
    Network(#[from] crate::controllers::ControllerError),
}

/// Network shape for a distilled controller: hidden layers with their
/// activations, then a single-unit output layer scaled to the action range.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArchSpec {
    pub hidden: Vec<(usize, Activation)>,
    pub output_activation: Activation,
    pub output_scale: f64,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            hidden: vec![(20, Activation::Tanh), (20, Activation::Sigmoid)],
            output_activation: Activation::Tanh,
            output_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub learning_rate: f64,
    /// Mini-batch size; 0 trains on the full dataset each step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the full-dataset MSE is at or below this.
    pub mse_threshold: f64,
    /// ... and the certified Lipschitz bound is at or below this.
    pub lip_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchSpec::default(),
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 5000,
            mse_threshold: 1e-6,
            lip_threshold: 10.0,
            seed: 0,
        }
    }
}

/// State/action pairs harvested from closed-loop oracle rollouts.
#[derive(Clone, Debug)]
pub struct SupervisedDataset {
    pub inputs: Vec<State>,
    pub targets: Vec<f64>,
}

impl SupervisedDataset {
    pub fn new(inputs: Vec<State>, targets: Vec<f64>) -> Result<Self, DistillError> {
        if inputs.is_empty() {
            return Err(DistillError::EmptyDataset);
        }
        if inputs.len() != targets.len() {
            return Err(DistillError::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if let Some(&bad) = targets.iter().find(|t| !t.is_finite()) {
            return Err(DistillError::NonFiniteTarget { value: bad });
        }
        Ok(SupervisedDataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs[0].dim()
    }
}

/// Roll the oracle out from `n_init` uniform starts in `region` and record
/// every (state, applied action) pair: `n_init * (horizon + 1)` samples.
pub fn generate_dataset(
    oracle: &HdcOracle,
    region: &StateBox,
    n_init: usize,
    horizon: usize,
    seed: u64,
) -> Result<SupervisedDataset, DistillError> {
    if n_init == 0 {
        return Err(DistillError::EmptyDataset);
    }
    let mut inputs = Vec::with_capacity(n_init * (horizon + 1));
    let mut targets = Vec::with_capacity(n_init * (horizon + 1));
    for i in 0..n_init {
        let mut rng = stream_rng(seed, i as u64);
        let s0 = region.sample(&mut rng);
        let traj = oracle
            .trajectory(&s0, horizon, derive_seed(seed, i as u64))
            .map_err(|source| DistillError::Rollout { sample: i, source })?;
        for (s, a) in traj.states.iter().zip(&traj.actions) {
            inputs.push(s.clone());
            targets.push(a.0);
        }
    }
    SupervisedDataset::new(inputs, targets)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub final_mse: f64,
    pub final_lip: f64,
    pub epochs_run: usize,
    pub met_thresholds: bool,
    pub seed: u64,
}

/// Fresh network with parameters uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
pub fn init_network(arch: &ArchSpec, input_dim: usize, seed: u64) -> LdcNetwork {
    let mut rng = stream_rng(seed, 0);
    let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
    let mut fan_in = input_dim;
    let shapes: Vec<(usize, Activation)> = arch
        .hidden
        .iter()
        .copied()
        .chain(std::iter::once((1, arch.output_activation)))
        .collect();
    for (units, activation) in shapes {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..units)
            .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
            .collect();
        let bias = (0..units).map(|_| rng.gen_range(-bound..bound)).collect();
        layers.push(Layer {
            weights,
            bias,
            activation,
        });
        fan_in = units;
    }
    LdcNetwork::new(layers, arch.output_scale).expect("generated architecture is well-formed")
}

// ==================== parameter flattening ====================

/// Copy all parameters (per layer: weights row-major, then biases) into one
/// vector. Order is the shared convention for gradient vectors.
pub fn flatten_params(net: &LdcNetwork) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &net.layers {
        for row in &layer.weights {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&layer.bias);
    }
    out
}

/// Inverse of `flatten_params`; panics if the length does not match.
pub fn set_params(net: &mut LdcNetwork, params: &[f64]) {
    let mut it = params.iter();
    for layer in &mut net.layers {
        for row in &mut layer.weights {
            for w in row.iter_mut() {
                *w = *it.next().expect("parameter vector too short");
            }
        }
        for b in layer.bias.iter_mut() {
            *b = *it.next().expect("parameter vector too short");
        }
    }
    assert!(it.next().is_none(), "parameter vector too long");
}

// ==================== objective gradients ====================

/// Full forward/backward pass of the mean-squared-error objective over the
/// given sample indices. Returns (mse, gradient in flat parameter order).
pub fn mse_gradient(
    net: &LdcNetwork,
    dataset: &SupervisedDataset,
    indices: &[usize],
) -> (f64, Vec<f64>) {
    let n = indices.len().max(1) as f64;
    let mut grads: Vec<(Vec<Vec<f64>>, Vec<f64>)> = net
        .layers
        .iter()
        .map(|l| {
            (
                l.weights.iter().map(|r| vec![0.0; r.len()]).collect(),
                vec![0.0; l.bias.len()],
            )
        })
        .collect();
    // Workspaces reused across samples: post-activation values per layer
    // and the two backward delta buffers. This loop runs once per epoch
    // per region, so per-sample allocation would dominate.
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len() + 1);
    acts.push(vec![0.0; dataset.input_dim()]);
    for layer in &net.layers {
        acts.push(vec![0.0; layer.out_dim()]);
    }
    let widest = acts.iter().map(Vec::len).max().unwrap_or(1);
    let mut delta = vec![0.0; widest];
    let mut prev_delta = vec![0.0; widest];
    let mut mse = 0.0;
    for &i in indices {
        // Forward pass keeping post-activation values per layer.
        acts[0].copy_from_slice(dataset.inputs[i].values());
        for (l, layer) in net.layers.iter().enumerate() {
            let (before, after) = acts.split_at_mut(l + 1);
            let prev = &before[l];
            for ((row, b), out) in layer
                .weights
                .iter()
                .zip(&layer.bias)
                .zip(after[0].iter_mut())
            {
                *out = layer
                    .activation
                    .apply(row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>() + b);
            }
        }
        let y = net.output_scale * acts.last().unwrap()[0];
        let err = y - dataset.targets[i];
        mse += err * err / n;
        // Backward pass: delta = dL/dz per layer.
        let mut width = 1;
        delta[0] = 2.0 * err / n * net.output_scale;
        for (l, layer) in net.layers.iter().enumerate().rev() {
            let out = &acts[l + 1];
            for (d, &a) in delta[..width].iter_mut().zip(out) {
                *d *= layer.activation.derivative_from_output(a);
            }
            let prev = &acts[l];
            for (j, d) in delta[..width].iter().enumerate() {
                for (k, &a) in prev.iter().enumerate() {
                    grads[l].0[j][k] += d * a;
                }
                grads[l].1[j] += *d;
            }
            if l > 0 {
                for (k, nd) in prev_delta[..prev.len()].iter_mut().enumerate() {
                    *nd = layer
                        .weights
                        .iter()
                        .zip(&delta[..width])
                        .map(|(row, d)| row[k] * d)
                        .sum();
                }
                std::mem::swap(&mut delta, &mut prev_delta);
                width = prev.len();
            }
        }
    }
    let mut flat = Vec::new();
    for (w, b) in grads {
        for row in w {
            flat.extend_from_slice(&row);
        }
        flat.extend_from_slice(&b);
    }
    (mse, flat)
}

/// Lipschitz surrogate (product of spectral norms, scaled by activation
/// slope bounds and |output_scale|) and its gradient. The per-layer
/// gradient of a spectral norm is the outer product of its leading
/// singular vectors; biases do not enter.
pub fn lipschitz_gradient(net: &LdcNetwork) -> (f64, Vec<f64>) {
    let decomps: Vec<(f64, Vec<f64>, Vec<f64>)> = net
        .layers
        .iter()
        .map(|l| spectral_norm(&l.weights))
        .collect();
    let slope_product: f64 = net
        .layers
        .iter()
        .map(|l| l.activation.slope_bound())
        .product();
    let scale = net.output_scale.abs();
    let value = scale * slope_product * decomps.iter().map(|d| d.0).product::<f64>();
    let mut flat = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        let others: f64 = decomps
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != l)
            .map(|(_, d)| d.0)
            .product();
        let factor = scale * slope_product * others;
        let (_, u, v) = &decomps[l];
        for (j, row) in layer.weights.iter().enumerate() {
            for k in 0..row.len() {
                flat.push(factor * u[j] * v[k]);
            }
        }
        flat.extend(std::iter::repeat(0.0).take(layer.bias.len()));
    }
    (value, flat)
}

// ==================== two-objective combination ====================

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Combine the accuracy and Lipschitz gradients into one descent direction.
///
/// Agreement (inner product >= 0) yields the normalized angular bisector of
/// the two unit gradients; conflict yields the accuracy gradient minus its
/// projection onto the Lipschitz direction. A vanished gradient defers to
/// the other; two vanished gradients yield zero.
pub fn two_objective_step(grad_mse: &[f64], grad_lip: &[f64]) -> Result<Vec<f64>, DistillError> {
    if grad_mse.len() != grad_lip.len() {
        return Err(DistillError::GradientLength {
            a: grad_mse.len(),
            b: grad_lip.len(),
        });
    }
    if grad_mse.iter().chain(grad_lip).any(|g| !g.is_finite()) {
        return Err(DistillError::NonFiniteGradient);
    }
    let nm = l2(grad_mse);
    let nl = l2(grad_lip);
    if nm == 0.0 && nl == 0.0 {
        return Ok(vec![0.0; grad_mse.len()]);
    }
    if nm == 0.0 {
        return Ok(grad_lip.to_vec());
    }
    if nl == 0.0 {
        return Ok(grad_mse.to_vec());
    }
    let dot: f64 = grad_mse.iter().zip(grad_lip).map(|(a, b)| a * b).sum();
    if dot >= 0.0 {
        let bis: Vec<f64> = grad_mse
            .iter()
            .zip(grad_lip)
            .map(|(m, l)| m / nm + l / nl)
            .collect();
        let nb = l2(&bis);
        Ok(bis.iter().map(|x| x / nb).collect())
    } else {
        let proj = dot / (nl * nl);
        Ok(grad_mse
            .iter()
            .zip(grad_lip)
            .map(|(m, l)| m - proj * l)
            .collect())
    }
}

// ==================== training loop ====================

/// Mini-batch two-objective descent until both thresholds hold or the epoch
/// budget runs out. Thresholds are checked on epoch boundaries, including
/// before the first epoch, so `max_epochs = 0` returns the initialized
/// network with its actual losses reported.
pub fn train_ldc(
    dataset: &SupervisedDataset,
    cfg: &TrainConfig,
) -> Result<(LdcNetwork, TrainReport), DistillError> {
    if dataset.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    let mut net = init_network(&cfg.arch, dataset.input_dim(), cfg.seed);
    let mut shuffle_rng = stream_rng(cfg.seed, 1);
    let all: Vec<usize> = (0..dataset.len()).collect();
    let batch = if cfg.batch_size == 0 || cfg.batch_size >= dataset.len() {
        dataset.len()
    } else {
        cfg.batch_size
    };

    let evaluate = |net: &LdcNetwork| {
        let (mse, _) = mse_gradient(net, dataset, &all);
        (mse, net.lipschitz_upper_bound())
    };
    let (mut mse, mut lip) = evaluate(&net);
    let mut met = mse <= cfg.mse_threshold && lip <= cfg.lip_threshold;
    let mut epochs_run = 0;

    while !met && epochs_run < cfg.max_epochs {
        let mut order = all.clone();
        if batch < dataset.len() {
            order.shuffle(&mut shuffle_rng);
        }
        let mut params = flatten_params(&net);
        for chunk in order.chunks(batch) {
            set_params(&mut net, &params);
            let (_, g_mse) = mse_gradient(&net, dataset, chunk);
            let (lip_now, g_lip) = lipschitz_gradient(&net);
            // The Lipschitz objective only pushes while its budget is
            // exceeded; below the threshold accuracy trains unopposed.
            let g_lip_eff = if lip_now <= cfg.lip_threshold {
                vec![0.0; g_lip.len()]
            } else {
                g_lip
            };
            let nm = l2(&g_mse);
            let nl = l2(&g_lip_eff);
            let dir = two_objective_step(&g_mse, &g_lip_eff)?;
            // The bisector branch returns a unit direction; restore the
            // accuracy gradient's magnitude so steps shrink as training
            // converges. The other branches already carry magnitude.
            let dot: f64 = g_mse.iter().zip(&g_lip_eff).map(|(a, b)| a * b).sum();
            let magnitude = if nm > 0.0 && nl > 0.0 && dot >= 0.0 {
                nm
            } else {
                1.0
            };
            for (p, d) in params.iter_mut().zip(&dir) {
                *p -= cfg.learning_rate * magnitude * d;
            }
        }
        epochs_run += 1;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(DistillError::Diverged { epoch: epochs_run });
        }
        set_params(&mut net, &params);
        let (m, l) = evaluate(&net);
        mse = m;
        lip = l;
        if !mse.is_finite() || !lip.is_finite() {
            return Err(DistillError::Diverged { epoch: epochs_run });
        }
        met = mse <= cfg.mse_threshold && lip <= cfg.lip_threshold;
    }

    let report = TrainReport {
        final_mse: mse,
        final_lip: lip,
        epochs_run,
        met_thresholds: met,
        seed: cfg.seed,
    };
    Ok((net, report))
}
