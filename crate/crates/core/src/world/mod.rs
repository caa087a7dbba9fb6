//! The tilted-gap world: observations, reward, collision and success rules,
//! episode initialization with randomization, and the episode loop.

mod collision;
mod env;
mod trajectory;

pub use collision::{collision_check, obb_corners, straddles_wall, wall_section, OBB_EDGES};
pub use env::{EpisodeOutcome, EpisodeStatus, GapEnv, StepInfo, StepResult, WorldConfig};
pub use trajectory::{write_trajectory_csv, TrajectoryRow, TRAJECTORY_HEADER};

use thiserror::Error;

use crate::dynamics::{DynamicsError, QuadrotorParams, RigidBodyState};
use crate::geometry::Vec3;
use crate::real::Real;
use crate::rng::SimRng;
use crate::sim2real::Sim2RealError;

/// Reward granted on the step that reaches the goal.
pub const GOAL_REWARD: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("no collision-free start pose after {0} draws")]
    StartPoseCollides(usize),
    #[error("invalid world configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Action(#[from] Sim2RealError),
}

/// Wall plane `x = wall_distance` (zero thickness) with a rectangular hole
/// centred at `(wall_distance, 0, gap_center_height)` and rotated in the wall
/// plane by `tilt_angle`.
#[derive(Clone, Debug, PartialEq)]
pub struct GapGeometry<T> {
    pub wall_distance: T,
    pub gap_center_height: T,
    pub width: T,
    pub height: T,
    pub tilt_angle: T,
}

impl<T: Real> Default for GapGeometry<T> {
    fn default() -> Self {
        Self {
            wall_distance: T::lit(3.0),
            gap_center_height: T::lit(1.5),
            width: T::lit(1.5),
            height: T::lit(1.0),
            tilt_angle: T::lit(20f64.to_radians()),
        }
    }
}

impl<T: Real> GapGeometry<T> {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.width > T::zero() && self.height > T::zero()) {
            return Err(WorldError::InvalidConfig("gap width and height must be positive".into()));
        }
        if !(self.tilt_angle.abs() < T::FRAC_PI_2()) {
            return Err(WorldError::InvalidConfig("gap tilt must be within (-pi/2, pi/2)".into()));
        }
        if !(self.wall_distance.is_finite() && self.gap_center_height.is_finite()) {
            return Err(WorldError::InvalidConfig("wall pose must be finite".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3<T> {
        Vec3::new(self.wall_distance, T::zero(), self.gap_center_height)
    }

    /// Whether the wall-plane point `(y, z)` lies inside the hole (boundary included).
    pub fn contains(&self, y: T, z: T) -> bool {
        let (s, c) = self.tilt_angle.sin_cos();
        let dy = y;
        let dz = z - self.gap_center_height;
        let u = c * dy + s * dz;
        let v = -s * dy + c * dz;
        let half = T::lit(0.5);
        u.abs() <= self.width * half && v.abs() <= self.height * half
    }

    pub fn with_dims(&self, width: T, height: T) -> Self {
        Self { width, height, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalSpec<T> {
    pub goal_point: Vec3<T>,
    pub success_radius: T,
    /// The wall plane the centre has to cross before success can count.
    pub wall_x: T,
}

impl<T: Real> GoalSpec<T> {
    /// Goal `offset` metres behind the gap centre.
    pub fn behind(gap: &GapGeometry<T>, offset: T, success_radius: T) -> Result<Self, WorldError> {
        if !(offset > T::zero()) {
            return Err(WorldError::InvalidConfig("goal must lie strictly behind the wall".into()));
        }
        Ok(Self {
            goal_point: gap.center() + Vec3::new(offset, T::zero(), T::zero()),
            success_radius,
            wall_x: gap.wall_distance,
        })
    }
}

/// Ten-entry policy input.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Observation<T>(pub [T; Observation::<f64>::DIM]);

impl<T: Real> Observation<T> {
    pub const DIM: usize = 10;

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn pos_err(&self) -> [T; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn velocity(&self) -> [T; 3] {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn roll(&self) -> T {
        self.0[6]
    }

    pub fn pitch(&self) -> T {
        self.0[7]
    }

    pub fn roll_rate(&self) -> T {
        self.0[8]
    }

    pub fn pitch_rate(&self) -> T {
        self.0[9]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Sensor noise, initial-state spread and per-episode dynamics perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomizationSpec<T> {
    pub obs_position: T,
    pub obs_angle: T,
    pub obs_velocity: T,
    pub obs_rate: T,
    pub init_velocity: T,
    pub init_rate: T,
    pub init_position_xy: T,
    pub init_position_z: T,
    /// Fraction of each principal inertia.
    pub inertia_frac: T,
    /// Fraction of each motor's thrust ceiling.
    pub motor_thrust_frac: T,
}

impl<T: Real> Default for RandomizationSpec<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            obs_position: l(0.002),
            obs_angle: l(0.01),
            obs_velocity: l(0.05),
            obs_rate: l(0.05),
            init_velocity: l(0.01),
            init_rate: l(0.01),
            init_position_xy: l(0.5),
            init_position_z: l(0.2),
            inertia_frac: l(0.15),
            motor_thrust_frac: l(0.05),
        }
    }
}

impl<T: Real> RandomizationSpec<T> {
    pub fn zero() -> Self {
        let z = T::zero();
        Self {
            obs_position: z,
            obs_angle: z,
            obs_velocity: z,
            obs_rate: z,
            init_velocity: z,
            init_rate: z,
            init_position_xy: z,
            init_position_z: z,
            inertia_frac: z,
            motor_thrust_frac: z,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let all = [
            self.obs_position,
            self.obs_angle,
            self.obs_velocity,
            self.obs_rate,
            self.init_velocity,
            self.init_rate,
            self.init_position_xy,
            self.init_position_z,
            self.inertia_frac,
            self.motor_thrust_frac,
        ];
        if all.iter().any(|s| !(*s >= T::zero()) || !s.is_finite()) {
            return Err(WorldError::InvalidConfig("randomization sigmas must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Noisy sensor readings an observation and a command are built from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Measurement<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    /// `(roll, pitch, yaw)`.
    pub euler: Vec3<T>,
    pub body_rates: Vec3<T>,
}

/// Signed square root of each position error channel.
pub fn position_error<T: Real>(p: Vec3<T>, goal: Vec3<T>) -> [T; 3] {
    let d = p - goal;
    [d.x, d.y, d.z].map(|e| e.signum() * e.abs().sqrt())
}

/// Goal bonus on success, otherwise the negative distance to the goal.
pub fn reward<T: Real>(p: Vec3<T>, goal_reached: bool, goal: Vec3<T>) -> T {
    if goal_reached {
        T::lit(GOAL_REWARD)
    } else {
        -(p - goal).norm()
    }
}

/// Success requires a clean history, a crossed wall plane and proximity to the goal.
pub fn success_check<T: Real>(state: &RigidBodyState<T>, goal: &GoalSpec<T>, collided_ever: bool) -> bool {
    !collided_ever
        && state.position.x > goal.wall_x
        && (state.position - goal.goal_point).norm() <= goal.success_radius
}

/// Reads noisy sensors and assembles the observation.
///
/// Noise is added to the raw position, angles, velocity and rates; the
/// signed-square-root transform is then applied to the noisy position error.
/// All twelve noise channels are drawn every call.
pub fn observe<T: Real>(
    state: &RigidBodyState<T>,
    goal: &GoalSpec<T>,
    noise: &RandomizationSpec<T>,
    rng: &mut SimRng,
) -> (Observation<T>, Measurement<T>) {
    let mut jitter = |v: Vec3<T>, sigma: T| Vec3::new(v.x + rng.gaussian(sigma), v.y + rng.gaussian(sigma), v.z + rng.gaussian(sigma));
    let (roll, pitch, yaw) = state.euler();
    let meas = Measurement {
        position: jitter(state.position, noise.obs_position),
        euler: jitter(Vec3::new(roll, pitch, yaw), noise.obs_angle),
        velocity: jitter(state.velocity, noise.obs_velocity),
        body_rates: jitter(state.body_rates, noise.obs_rate),
    };
    let e = position_error(meas.position, goal.goal_point);
    let obs = Observation([
        e[0],
        e[1],
        e[2],
        meas.velocity.x,
        meas.velocity.y,
        meas.velocity.z,
        meas.euler.x,
        meas.euler.y,
        meas.body_rates.x,
        meas.body_rates.y,
    ]);
    (obs, meas)
}

/// Maximum start-pose draws before giving up.
pub const MAX_START_DRAWS: usize = 100;

fn perturbed_positive<T: Real>(nominal: T, frac: T, rng: &mut SimRng) -> T {
    loop {
        let v = nominal + rng.gaussian(frac * nominal);
        if v > T::zero() {
            return v;
        }
    }
}

/// Samples an episode start: a perturbed copy of the airframe and a level,
/// zero-yaw start state around `start`.
pub fn reset<T: Real>(
    spec: &RandomizationSpec<T>,
    nominal: &QuadrotorParams<T>,
    gap: &GapGeometry<T>,
    start: Vec3<T>,
    rng: &mut SimRng,
) -> Result<(RigidBodyState<T>, QuadrotorParams<T>), WorldError> {
    let mut params = nominal.clone();
    for i in 0..3 {
        params.inertia[i] = perturbed_positive(nominal.inertia[i], spec.inertia_frac, rng);
    }
    for i in 0..4 {
        params.motor_max_thrust[i] = perturbed_positive(nominal.motor_max_thrust[i], spec.motor_thrust_frac, rng);
    }
    for _ in 0..MAX_START_DRAWS {
        let position = start
            + Vec3::new(
                rng.gaussian(spec.init_position_xy),
                rng.gaussian(spec.init_position_xy),
                rng.gaussian(spec.init_position_z),
            );
        let velocity = Vec3::new(rng.gaussian(spec.init_velocity), rng.gaussian(spec.init_velocity), T::zero());
        let body_rates = Vec3::new(rng.gaussian(spec.init_rate), rng.gaussian(spec.init_rate), rng.gaussian(spec.init_rate));
        let state = RigidBodyState { position, velocity, body_rates, ..RigidBodyState::default() };
        if !collision_check(&state, &params, gap) {
            return Ok((state, params));
        }
    }
    Err(WorldError::StartPoseCollides(MAX_START_DRAWS))
}
