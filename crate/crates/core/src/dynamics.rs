//! Discrete-time benchmark plants and their sound set-valued counterparts.
//!
//! All three benchmarks advance with a unit step; rates are per-step
//! quantities. `step` evaluates the printed update equations literally;
//! `step_interval` evaluates the same expressions in interval arithmetic, so
//! its output contains the pointwise image of any (state, action) drawn from
//! the input sets.

use crate::geom::{ControlAction, GeomError, State, StateBox};
use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("state dimension {got} does not match plant dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },
    #[error("controller failed at step {step}: {message}")]
    Controller { step: usize, message: String },
}

/// Benchmark plant constants plus the actuation clamp applied to every
/// control action before it reaches the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub plant: Plant,
    /// Closed actuation range; controller outputs are clamped into it.
    pub actuation: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    /// State (theta, theta_dot): rod angle from vertical and its per-step
    /// rate. Torque input.
    InvertedPendulum {
        mass: f64,
        inertia: f64,
        length: f64,
        damping: f64,
        gravity: f64,
    },
    /// State (x, v): position on the hill and per-step velocity. Throttle
    /// input.
    MountainCar {
        mass: f64,
        engine_force: f64,
        gravity: f64,
    },
    /// State (x, v, theta, theta_dot): cart position/velocity and pole
    /// angle/rate. Horizontal force input.
    CartPole {
        cart_mass: f64,
        pole_mass: f64,
        pole_length: f64,
        gravity: f64,
    },
    /// Diagnostic plant with s' = s regardless of input. Used by tests and
    /// pipeline shakedowns where the plant must not interfere.
    Frozen { dim: usize },
}

impl PlantParams {
    pub fn inverted_pendulum() -> Self {
        PlantParams {
            plant: Plant::InvertedPendulum {
                mass: 0.1,
                inertia: 0.125,
                length: 0.25,
                damping: 0.0,
                gravity: 9.81,
            },
            actuation: Interval::new(-1.0, 1.0),
        }
    }

    pub fn mountain_car() -> Self {
        PlantParams {
            plant: Plant::MountainCar {
                mass: 2.5e-4,
                engine_force: 3.75e-7,
                gravity: 10.0,
            },
            actuation: Interval::new(-1.0, 1.0),
        }
    }

    pub fn cart_pole() -> Self {
        PlantParams {
            plant: Plant::CartPole {
                cart_mass: 1.0,
                pole_mass: 0.1,
                pole_length: 0.5,
                gravity: 9.81,
            },
            actuation: Interval::new(-10.0, 10.0),
        }
    }

    pub fn frozen(dim: usize) -> Self {
        PlantParams {
            plant: Plant::Frozen { dim },
            actuation: Interval::new(-1.0, 1.0),
        }
    }

    pub fn state_dim(&self) -> usize {
        match &self.plant {
            Plant::InvertedPendulum { .. } | Plant::MountainCar { .. } => 2,
            Plant::CartPole { .. } => 4,
            Plant::Frozen { dim } => *dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.plant {
            Plant::InvertedPendulum { .. } => "inverted-pendulum",
            Plant::MountainCar { .. } => "mountain-car",
            Plant::CartPole { .. } => "cart-pole",
            Plant::Frozen { .. } => "frozen",
        }
    }

    /// Clamp a raw controller output into the actuation range.
    pub fn clamp_action(&self, u: f64) -> f64 {
        u.clamp(self.actuation.lo, self.actuation.hi)
    }

    fn check_dim(&self, got: usize) -> Result<(), DynamicsError> {
        let expected = self.state_dim();
        if got != expected {
            Err(DynamicsError::DimensionMismatch { expected, got })
        } else {
            Ok(())
        }
    }
}

/// One plant step from state `s` under (already clamped) action `u`.
pub fn step(params: &PlantParams, s: &State, u: ControlAction) -> Result<State, DynamicsError> {
    params.check_dim(s.dim())?;
    if !u.0.is_finite() {
        return Err(DynamicsError::NonFinite {
            what: "control action",
            step: 0,
        });
    }
    let next = match &params.plant {
        Plant::InvertedPendulum {
            mass,
            inertia,
            length,
            damping,
            gravity,
        } => {
            let (th, om) = (s[0], s[1]);
            let th_next = th + om;
            let om_next =
                om + (1.0 / inertia) * (u.0 - damping * om + mass * gravity * length * th.sin());
            vec![th_next, om_next]
        }
        Plant::MountainCar {
            mass,
            engine_force,
            gravity,
        } => {
            let (x, v) = (s[0], s[1]);
            let x_next = x + v;
            let v_next = v + (engine_force / mass) * u.0 - mass * gravity * (3.0 * x).cos();
            vec![x_next, v_next]
        }
        Plant::CartPole {
            cart_mass,
            pole_mass,
            pole_length,
            gravity,
        } => {
            let (x, v, th, om) = (s[0], s[1], s[2], s[3]);
            let total = cart_mass + pole_mass;
            let sin_th = th.sin();
            let cos_th = th.cos();
            let th_acc = (gravity * sin_th
                + cos_th * ((-u.0 - pole_mass * pole_length * om * om * sin_th) / total))
                / (pole_length * (4.0 / 3.0 - pole_mass * cos_th * cos_th / total));
            let v_next =
                v + (u.0 + pole_mass * pole_length * (om * om * sin_th - th_acc * cos_th)) / total;
            vec![x + v, v_next, th + om, om + th_acc]
        }
        Plant::Frozen { .. } => s.values().to_vec(),
    };
    State::new(next).map_err(|_| DynamicsError::NonFinite {
        what: "successor state",
        step: 0,
    })
}

/// Set-valued counterpart of `step`: the image box of `region` under the
/// update equations with the action ranging over `u`.
pub fn step_interval(
    params: &PlantParams,
    region: &StateBox,
    u: &Interval,
) -> Result<StateBox, DynamicsError> {
    params.check_dim(region.dim())?;
    let dims = match &params.plant {
        Plant::InvertedPendulum {
            mass,
            inertia,
            length,
            damping,
            gravity,
        } => {
            let th = *region.dim_interval(0);
            let om = *region.dim_interval(1);
            let torque = u
                .sub(&om.scale(*damping))
                .add(&th.sin().scale(mass * gravity * length));
            vec![th.add(&om), om.add(&torque.scale(1.0 / inertia))]
        }
        Plant::MountainCar {
            mass,
            engine_force,
            gravity,
        } => {
            let x = *region.dim_interval(0);
            let v = *region.dim_interval(1);
            let v_next = v
                .add(&u.scale(engine_force / mass))
                .sub(&x.scale(3.0).cos().scale(mass * gravity));
            vec![x.add(&v), v_next]
        }
        Plant::CartPole {
            cart_mass,
            pole_mass,
            pole_length,
            gravity,
        } => {
            let x = *region.dim_interval(0);
            let v = *region.dim_interval(1);
            let th = *region.dim_interval(2);
            let om = *region.dim_interval(3);
            let total = cart_mass + pole_mass;
            let sin_th = th.sin();
            let cos_th = th.cos();
            let om_sq_sin = om.square().mul(&sin_th);
            let numer = sin_th.scale(*gravity).add(
                &cos_th.mul(
                    &u.neg()
                        .sub(&om_sq_sin.scale(pole_mass * pole_length))
                        .scale(1.0 / total),
                ),
            );
            let denom = cos_th
                .square()
                .scale(-pole_mass / total)
                .add_scalar(4.0 / 3.0)
                .scale(*pole_length);
            let th_acc = numer.div(&denom);
            let v_next = v.add(
                &u.add(&om_sq_sin.sub(&th_acc.mul(&cos_th)).scale(pole_mass * pole_length))
                    .scale(1.0 / total),
            );
            vec![x.add(&v), v_next, th.add(&om), om.add(&th_acc)]
        }
        Plant::Frozen { .. } => region.dims().to_vec(),
    };
    // Infinite bounds are legitimate (blow-up is diagnosed by the caller);
    // NaN is not, so sanitize it to the conservative whole line.
    let sane = dims
        .into_iter()
        .map(|iv| {
            if iv.lo.is_nan() || iv.hi.is_nan() {
                Interval::everything()
            } else {
                iv
            }
        })
        .collect();
    Ok(StateBox::new(sane)?)
}

/// Interval enclosure of the one-step Jacobian over a state box: the matrix
/// of `d next_state_i / d state_j` ranges plus the column of
/// `d next_state_i / d action` ranges. Only plants whose step map has a
/// simple closed-form Jacobian are supported; the others return `None` and
/// callers fall back to plain interval propagation.
pub(crate) fn step_jacobian_interval(
    params: &PlantParams,
    region: &StateBox,
) -> Option<(Vec<Vec<Interval>>, Vec<Interval>)> {
    let one = Interval::point(1.0);
    let zero = Interval::point(0.0);
    match &params.plant {
        Plant::InvertedPendulum {
            mass,
            inertia,
            length,
            damping,
            gravity,
        } => {
            let th = *region.dim_interval(0);
            let d_om_d_th = th.cos().scale(mass * gravity * length / inertia);
            let d_om_d_om = Interval::point(1.0 - damping / inertia);
            let j_state = vec![vec![one, one], vec![d_om_d_th, d_om_d_om]];
            let j_action = vec![zero, Interval::point(1.0 / inertia)];
            Some((j_state, j_action))
        }
        Plant::MountainCar {
            mass,
            engine_force,
            gravity,
        } => {
            let x = *region.dim_interval(0);
            let d_v_d_x = x.scale(3.0).sin().scale(3.0 * mass * gravity);
            let j_state = vec![vec![one, one], vec![d_v_d_x, one]];
            let j_action = vec![zero, Interval::point(engine_force / mass)];
            Some((j_state, j_action))
        }
        Plant::CartPole { .. } => None,
        Plant::Frozen { dim } => {
            let j_state = (0..*dim)
                .map(|i| (0..*dim).map(|j| if i == j { one } else { zero }).collect())
                .collect();
            Some((j_state, vec![zero; *dim]))
        }
    }
}

/// Closed-loop rollout record: `states.len() == actions.len() == horizon+1`.
/// The final action is evaluated at the final state but never applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<ControlAction>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }
}

/// Roll the closed loop for `horizon` steps. The controller's raw output is
/// clamped to the actuation range before being recorded and applied.
pub fn simulate<C>(
    params: &PlantParams,
    mut controller: C,
    s0: &State,
    horizon: usize,
) -> Result<Trajectory, DynamicsError>
where
    C: FnMut(&State) -> Result<ControlAction, String>,
{
    params.check_dim(s0.dim())?;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    states.push(s0.clone());
    for t in 0..=horizon {
        let raw = controller(&states[t])
            .map_err(|message| DynamicsError::Controller { step: t, message })?;
        if !raw.0.is_finite() {
            return Err(DynamicsError::NonFinite {
                what: "control action",
                step: t,
            });
        }
        let u = ControlAction(params.clamp_action(raw.0));
        actions.push(u);
        if t < horizon {
            let next = step(params, &states[t], u).map_err(|e| match e {
                DynamicsError::NonFinite { what, .. } => DynamicsError::NonFinite { what, step: t },
                other => other,
            })?;
            states.push(next);
        }
    }
    Ok(Trajectory { states, actions })
}
