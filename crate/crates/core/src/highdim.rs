//! Desk-scale surrogate for the image-based controller: a deterministic
//! state-to-frame rasterizer, pixel-level state decoders, per-benchmark
//! reference control laws, and seeded Gaussian state noise.
//!
//! Actions are produced only through the image channel (plus the directly
//! supplied velocity dimensions), so the rest of the pipeline can treat the
//! oracle as an opaque callable. Rendering uses a Gaussian falloff around
//! each shape instead of hard thresholding; that keeps every decoded
//! quantity smooth in the underlying state, which is what lets small
//! networks imitate the composed law closely.

use crate::controllers::dot;
use crate::dynamics::{step, DynamicsError, Plant, PlantParams, Trajectory};
use crate::geom::{ControlAction, GeomError, State};
use crate::seeding::{next_standard_normal, stream_rng};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HighdimError {
    #[error("decoder failed: frame is blank")]
    BlankFrame,
    #[error("noise spec has {got} entries for a {expected}-dimensional state")]
    SigmaDim { expected: usize, got: usize },
    #[error("negative noise level {got}")]
    NegativeSigma { got: f64 },
    #[error("state dimension {got} does not match oracle dimension {expected}")]
    StateDim { expected: usize, got: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("oracle query failed at step {step}: {source}")]
    At {
        step: usize,
        #[source]
        source: Box<HighdimError>,
    },
}

/// Square grayscale frame with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    data: Vec<f64>,
}

impl ImageFrame {
    pub const SIDE: usize = 64;

    pub fn blank() -> Self {
        ImageFrame {
            data: vec![0.0; Self::SIDE * Self::SIDE],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * Self::SIDE + col]
    }

    fn deposit(&mut self, row: usize, col: usize, value: f64) {
        let cell = &mut self.data[row * Self::SIDE + col];
        if value > *cell {
            *cell = value.min(1.0);
        }
    }

    pub fn total_intensity(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Binary PGM (P5) export with a comment line, for eyeballing frames.
    pub fn write_pgm<W: Write>(&self, out: &mut W, comment: &str) -> std::io::Result<()> {
        writeln!(out, "P5")?;
        writeln!(out, "# {comment}")?;
        writeln!(out, "{} {}", Self::SIDE, Self::SIDE)?;
        writeln!(out, "255")?;
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        out.write_all(&bytes)
    }
}

// Rendering geometry. Pixel (row r, col c) is sampled at the continuous
// point (x=c, y=r); shapes are drawn as exp(-d^2 / 2 sigma^2) falloffs of
// the distance d to the shape, cut off beyond six sigmas where the value
// drops below 2e-8.
const ROD_CENTER: f64 = 32.0;
const ROD_LENGTH: f64 = 24.0;
const ROD_BLUR: f64 = 1.0;
const CAR_BLUR: f64 = 1.2;
const CAR_X_MIN: f64 = -1.2;
const CAR_X_MAX: f64 = 0.7;
// The cart window is wide relative to the goal band because catch-and-return
// transients overshoot several units; decoding precision scales with the
// window but stays far below what the gentle cart gains can notice.
const CART_BLUR: f64 = 0.8;
const CART_X_MIN: f64 = -8.0;
const CART_X_MAX: f64 = 8.0;
const CART_ROW: f64 = 44.0;
const CART_HALF_W: f64 = 3.0;
const CART_HALF_H: f64 = 3.0;
const HINGE_ROW: f64 = 41.0;
const POLE_LENGTH: f64 = 20.0;
// Row bands for the cart-pole decoder: pole moments stop three pixels above
// the cart roof so cart bleed (symmetric about the hinge column) cannot
// tilt the estimated axis.
const POLE_BAND_LAST_ROW: usize = 37;
const CART_BAND_FIRST_ROW: usize = 43;

fn splat_segment(frame: &mut ImageFrame, a: (f64, f64), b: (f64, f64), sigma: f64) {
    let reach = 6.0 * sigma;
    let c_lo = (a.0.min(b.0) - reach).floor().max(0.0) as usize;
    let c_hi = (a.0.max(b.0) + reach).ceil().min(63.0) as usize;
    let r_lo = (a.1.min(b.1) - reach).floor().max(0.0) as usize;
    let r_hi = (a.1.max(b.1) + reach).ceil().min(63.0) as usize;
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let (px, py) = (c as f64 - a.0, r as f64 - a.1);
            let t = if len_sq == 0.0 {
                0.0
            } else {
                ((px * dx + py * dy) / len_sq).clamp(0.0, 1.0)
            };
            let (ex, ey) = (px - t * dx, py - t * dy);
            let d_sq = ex * ex + ey * ey;
            if d_sq <= reach * reach {
                frame.deposit(r, c, (-d_sq / (2.0 * sigma * sigma)).exp());
            }
        }
    }
}

fn splat_rect(frame: &mut ImageFrame, center: (f64, f64), half_w: f64, half_h: f64, sigma: f64) {
    let reach = 6.0 * sigma;
    let c_lo = (center.0 - half_w - reach).floor().max(0.0) as usize;
    let c_hi = (center.0 + half_w + reach).ceil().min(63.0) as usize;
    let r_lo = (center.1 - half_h - reach).floor().max(0.0) as usize;
    let r_hi = (center.1 + half_h + reach).ceil().min(63.0) as usize;
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let ex = ((c as f64 - center.0).abs() - half_w).max(0.0);
            let ey = ((r as f64 - center.1).abs() - half_h).max(0.0);
            let d_sq = ex * ex + ey * ey;
            if d_sq <= reach * reach {
                frame.deposit(r, c, (-d_sq / (2.0 * sigma * sigma)).exp());
            }
        }
    }
}

fn car_pixel(x: f64) -> (f64, f64) {
    let xc = x.clamp(CAR_X_MIN, CAR_X_MAX);
    let col = (xc - CAR_X_MIN) / (CAR_X_MAX - CAR_X_MIN) * 63.0;
    let row = (1.0 - (3.0 * xc).sin()) / 2.0 * 63.0;
    (col, row)
}

fn cart_pixel_col(x: f64) -> f64 {
    let xc = x.clamp(CART_X_MIN, CART_X_MAX);
    (xc - CART_X_MIN) / (CART_X_MAX - CART_X_MIN) * 63.0
}

/// Deterministic rasterization of a state. The angle convention puts zero
/// straight up with positive angles leaning to the right of the frame.
pub fn render(params: &PlantParams, s: &State) -> ImageFrame {
    let mut frame = ImageFrame::blank();
    match &params.plant {
        Plant::InvertedPendulum { .. } => {
            let th = s[0];
            let tip = (
                ROD_CENTER + ROD_LENGTH * th.sin(),
                ROD_CENTER - ROD_LENGTH * th.cos(),
            );
            splat_segment(&mut frame, (ROD_CENTER, ROD_CENTER), tip, ROD_BLUR);
        }
        Plant::MountainCar { .. } => {
            let p = car_pixel(s[0]);
            splat_segment(&mut frame, p, p, CAR_BLUR);
        }
        Plant::CartPole { .. } => {
            let col = cart_pixel_col(s[0]);
            splat_rect(
                &mut frame,
                (col, CART_ROW),
                CART_HALF_W,
                CART_HALF_H,
                CART_BLUR,
            );
            let th = s[2];
            let tip = (
                col + POLE_LENGTH * th.sin(),
                HINGE_ROW - POLE_LENGTH * th.cos(),
            );
            splat_segment(&mut frame, (col, HINGE_ROW), tip, CART_BLUR);
        }
        Plant::Frozen { .. } => {}
    }
    frame
}

/// Rebuild a full state estimate from a frame plus the directly supplied
/// dimensions (velocities ride alongside the image, mirroring a sensor
/// stack that measures rates but not configuration).
pub fn decode_state(
    params: &PlantParams,
    frame: &ImageFrame,
    supplied: &State,
) -> Result<State, HighdimError> {
    match &params.plant {
        Plant::InvertedPendulum { .. } => {
            let (mut mx, mut up, mut total) = (0.0, 0.0, 0.0);
            for r in 0..ImageFrame::SIDE {
                for c in 0..ImageFrame::SIDE {
                    let w = frame.get(r, c);
                    total += w;
                    mx += w * (c as f64 - ROD_CENTER);
                    up += w * (ROD_CENTER - r as f64);
                }
            }
            if total < 1e-6 {
                return Err(HighdimError::BlankFrame);
            }
            let theta = mx.atan2(up);
            Ok(State::new(vec![theta, supplied[1]])?)
        }
        Plant::MountainCar { .. } => {
            let mut best_col = 0usize;
            let mut best = -1.0;
            let mut total = 0.0;
            for c in 0..ImageFrame::SIDE {
                let column: f64 = (0..ImageFrame::SIDE).map(|r| frame.get(r, c)).sum();
                total += column;
                if column > best {
                    best = column;
                    best_col = c;
                }
            }
            if total < 1e-6 {
                return Err(HighdimError::BlankFrame);
            }
            let x = CAR_X_MIN + best_col as f64 / 63.0 * (CAR_X_MAX - CAR_X_MIN);
            Ok(State::new(vec![x, supplied[1]])?)
        }
        Plant::CartPole { .. } => {
            let (mut cart_mass, mut cart_first) = (0.0, 0.0);
            for r in CART_BAND_FIRST_ROW..ImageFrame::SIDE {
                for c in 0..ImageFrame::SIDE {
                    let w = frame.get(r, c);
                    cart_mass += w;
                    cart_first += w * c as f64;
                }
            }
            if cart_mass < 1e-6 {
                return Err(HighdimError::BlankFrame);
            }
            let hinge_col = cart_first / cart_mass;
            let x = CART_X_MIN + hinge_col / 63.0 * (CART_X_MAX - CART_X_MIN);

            let (mut mx, mut up, mut pole_mass) = (0.0, 0.0, 0.0);
            for r in 0..=POLE_BAND_LAST_ROW {
                for c in 0..ImageFrame::SIDE {
                    let w = frame.get(r, c);
                    pole_mass += w;
                    mx += w * (c as f64 - hinge_col);
                    up += w * (HINGE_ROW - r as f64);
                }
            }
            if pole_mass < 1e-6 {
                return Err(HighdimError::BlankFrame);
            }
            let theta = mx.atan2(up);
            Ok(State::new(vec![x, supplied[1], theta, supplied[3]])?)
        }
        Plant::Frozen { .. } => Err(HighdimError::BlankFrame),
    }
}

// Reference law constants. The pendulum law compensates gravity torque and
// adds proportional feedback toward an interior attractor angle. Rate
// feedback is gain-scheduled: it engages only inside a capture window
// around the attractor, a standard two-mode scheme. Inside the window the
// angle and rate gains place a critically damped double pole at 0.6, which
// keeps the steady-state amplification of small action errors modest (a
// constant action offset of size e shifts the attractor by e divided by
// the angle gain). Outside the window the loop is an undamped spiral, so
// only states that pass through the window with moderate momentum are
// recovered; the rest oscillate away.
pub const PENDULUM_GRAVITY_GAIN: f64 = 0.24525;
pub const PENDULUM_ANGLE_GAIN: f64 = 0.02;
pub const PENDULUM_RATE_GAIN: f64 = 0.1;
pub const PENDULUM_BIAS: f64 = 0.0035;
pub const PENDULUM_CAPTURE_ANGLE: f64 = 0.8;
pub const PENDULUM_CAPTURE_RATE: f64 = 1.2;
/// Cart-pole state feedback (x, v, theta, theta_dot). The angle gain sits
/// just above the value that cancels the per-step gravity kick on the pole,
/// the rate gain pulls the pole to rest within a few steps, and the small
/// positive cart gains exploit the non-minimum-phase cart response (pushing
/// toward the pole leans the pole back over the cart, which then drags the
/// cart home). The bias recenters the loop's attractor at the origin.
pub const POLE_GAINS: [f64; 4] = [0.025, 0.13, 13.5, 2.2];
pub const POLE_BIAS: f64 = -0.0025;

/// The control law the image pipeline implements on decoded states.
#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceLaw {
    /// Gravity-compensated proportional balance law for the pendulum.
    PendulumBalance,
    /// Bang-bang energy pumping for the mountain car: push along the
    /// current velocity, full throttle forward at standstill.
    CarEnergyPump,
    /// Linear state feedback for the cart-pole.
    PoleBalance,
    /// Plain affine law, mostly for stubs and exactness tests.
    Affine { weights: Vec<f64>, bias: f64 },
}

impl ReferenceLaw {
    pub fn for_plant(params: &PlantParams) -> Self {
        match &params.plant {
            Plant::InvertedPendulum { .. } => ReferenceLaw::PendulumBalance,
            Plant::MountainCar { .. } => ReferenceLaw::CarEnergyPump,
            Plant::CartPole { .. } => ReferenceLaw::PoleBalance,
            Plant::Frozen { dim } => ReferenceLaw::Affine {
                weights: vec![0.0; *dim],
                bias: 0.0,
            },
        }
    }

    /// Raw (unclamped) action at a decoded state.
    pub fn eval(&self, s: &State) -> f64 {
        match self {
            ReferenceLaw::PendulumBalance => {
                let damping = if s[0].abs() < PENDULUM_CAPTURE_ANGLE
                    && s[1].abs() < PENDULUM_CAPTURE_RATE
                {
                    PENDULUM_RATE_GAIN * s[1]
                } else {
                    0.0
                };
                -PENDULUM_ANGLE_GAIN * s[0] - damping + PENDULUM_BIAS
                    - PENDULUM_GRAVITY_GAIN * s[0].sin()
            }
            ReferenceLaw::CarEnergyPump => {
                if s[1] >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            ReferenceLaw::PoleBalance => dot(&POLE_GAINS, s.values()) + POLE_BIAS,
            ReferenceLaw::Affine { weights, bias } => dot(weights, s.values()) + bias,
        }
    }
}

/// How the oracle turns frames back into state estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    /// Pixel-level estimation from the rendered frame.
    Pixel,
    /// Perfect perception stub: the decoded state is the (noisy) input
    /// state itself. Useful for isolating pipeline stages in tests.
    Identity,
}

/// Black-box controller surrogate: renders the (noisy) state, decodes a
/// state estimate from pixels, and applies the reference law. Immutable;
/// noise is a pure function of (seed, query index), so concurrent rollouts
/// stay reproducible.
#[derive(Clone, Debug)]
pub struct HdcOracle {
    pub params: PlantParams,
    pub law: ReferenceLaw,
    pub decoder: DecoderKind,
    /// Per-dimension Gaussian noise levels added to the true state before
    /// rendering; the supplied dimensions receive the same noisy values.
    pub sigma: Vec<f64>,
}

impl HdcOracle {
    pub fn new(
        params: PlantParams,
        law: ReferenceLaw,
        decoder: DecoderKind,
        sigma: Vec<f64>,
    ) -> Result<Self, HighdimError> {
        if sigma.len() != params.state_dim() {
            return Err(HighdimError::SigmaDim {
                expected: params.state_dim(),
                got: sigma.len(),
            });
        }
        if let Some(&bad) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(HighdimError::NegativeSigma { got: bad });
        }
        Ok(HdcOracle {
            params,
            law,
            decoder,
            sigma,
        })
    }

    /// Noise-free pixel-decoding oracle with the benchmark's own law.
    pub fn noiseless(params: PlantParams) -> Self {
        let law = ReferenceLaw::for_plant(&params);
        let dim = params.state_dim();
        let decoder = match params.plant {
            Plant::Frozen { .. } => DecoderKind::Identity,
            _ => DecoderKind::Pixel,
        };
        HdcOracle {
            params,
            law,
            decoder,
            sigma: vec![0.0; dim],
        }
    }

    pub fn with_sigma(params: PlantParams, sigma: Vec<f64>) -> Result<Self, HighdimError> {
        let law = ReferenceLaw::for_plant(&params);
        HdcOracle::new(params, law, DecoderKind::Pixel, sigma)
    }

    fn noisy_state(&self, s: &State, seed: u64, query_index: u64) -> Result<State, HighdimError> {
        if self.sigma.iter().all(|&sd| sd == 0.0) {
            return Ok(s.clone());
        }
        let mut rng = stream_rng(seed, query_index);
        let values = s
            .values()
            .iter()
            .zip(&self.sigma)
            .map(|(v, sd)| {
                if *sd == 0.0 {
                    *v
                } else {
                    v + sd * next_standard_normal(&mut rng)
                }
            })
            .collect();
        Ok(State::new(values)?)
    }

    /// One oracle query: corrupt the state, render it, decode it, apply the
    /// law, clamp to the actuation range.
    pub fn act(&self, s: &State, seed: u64, query_index: u64) -> Result<ControlAction, HighdimError> {
        if s.dim() != self.params.state_dim() {
            return Err(HighdimError::StateDim {
                expected: self.params.state_dim(),
                got: s.dim(),
            });
        }
        let noisy = self.noisy_state(s, seed, query_index)?;
        let decoded = match self.decoder {
            DecoderKind::Identity => noisy,
            DecoderKind::Pixel => {
                let frame = render(&self.params, &noisy);
                decode_state(&self.params, &frame, &noisy)?
            }
        };
        let raw = self.law.eval(&decoded);
        Ok(ControlAction(self.params.clamp_action(raw)))
    }

    /// Closed-loop rollout driven by oracle queries, with the per-step
    /// query index doubling as the noise stream index. Returns horizon+1
    /// states and horizon+1 actions; the final action is evaluated but not
    /// applied.
    pub fn trajectory(
        &self,
        s0: &State,
        horizon: usize,
        seed: u64,
    ) -> Result<Trajectory, HighdimError> {
        let mut states = Vec::with_capacity(horizon + 1);
        let mut actions = Vec::with_capacity(horizon + 1);
        states.push(s0.clone());
        for t in 0..=horizon {
            let u = self.act(&states[t], seed, t as u64).map_err(|e| HighdimError::At {
                step: t,
                source: Box::new(e),
            })?;
            actions.push(u);
            if t < horizon {
                let next = step(&self.params, &states[t], u).map_err(|e| HighdimError::At {
                    step: t,
                    source: Box::new(HighdimError::Dynamics(e)),
                })?;
                states.push(next);
            }
        }
        Ok(Trajectory { states, actions })
    }
}
