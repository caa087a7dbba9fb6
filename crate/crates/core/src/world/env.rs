//! Episode loop: one policy step drives the command layer, the inner loop
//! and the physics for one outer-loop period.

use crate::dynamics::{integrate_step, MotorCommand, QuadrotorParams, RigidBodyState};
use crate::geometry::Vec3;
use crate::real::Real;
use crate::rng::SimRng;
use crate::sim2real::{
    make_setpoint, scale_action, CommandFeedback, InnerLoopController, InnerLoopGains, TrackingSetpoint,
};

use super::{
    collision_check, observe, reset, reward, success_check, GapGeometry, GoalSpec, Measurement, Observation,
    RandomizationSpec, TrajectoryRow, WorldError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EpisodeStatus {
    Success,
    Collision,
    Timeout,
    Fault,
}

impl EpisodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Success => "success",
            EpisodeStatus::Collision => "collision",
            EpisodeStatus::Timeout => "timeout",
            EpisodeStatus::Fault => "fault",
        }
    }
}

/// Everything that defines the task apart from the gap's current dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig<T> {
    pub quad: QuadrotorParams<T>,
    pub gap: GapGeometry<T>,
    /// Goal distance behind the gap centre.
    pub goal_offset: T,
    pub success_radius: T,
    pub max_policy_steps: usize,
    pub randomization: RandomizationSpec<T>,
    pub gains: InnerLoopGains<T>,
}

impl<T: Real> Default for WorldConfig<T> {
    fn default() -> Self {
        Self {
            quad: QuadrotorParams::default(),
            gap: GapGeometry::default(),
            goal_offset: T::lit(0.25),
            success_radius: T::lit(0.25),
            max_policy_steps: 250,
            randomization: RandomizationSpec::default(),
            gains: InnerLoopGains::default(),
        }
    }
}

impl<T: Real> WorldConfig<T> {
    pub fn validate(&self) -> Result<(), WorldError> {
        self.quad.validate()?;
        self.gap.validate()?;
        self.randomization.validate()?;
        self.gains.validate()?;
        if !(self.success_radius > T::zero()) {
            return Err(WorldError::InvalidConfig("success radius must be positive".into()));
        }
        if self.max_policy_steps == 0 {
            return Err(WorldError::InvalidConfig("episode length must be positive".into()));
        }
        GoalSpec::behind(&self.gap, self.goal_offset, self.success_radius)?;
        Ok(())
    }

    /// Nominal start: level, at gap height, `wall_distance` in front of the wall.
    pub fn nominal_start(&self) -> Vec3<T> {
        Vec3::new(T::zero(), T::zero(), self.gap.gap_center_height)
    }

    pub fn policy_period(&self) -> T {
        self.gains.outer_period()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo<T> {
    pub status: Option<EpisodeStatus>,
    pub setpoint: TrackingSetpoint<T>,
    /// Any inner-loop tick hit an actuator limit.
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult<T> {
    pub observation: Observation<T>,
    pub reward: T,
    pub done: bool,
    pub info: StepInfo<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome<T> {
    pub status: EpisodeStatus,
    pub episode_reward: T,
    pub steps: usize,
    pub trajectory: Vec<TrajectoryRow<T>>,
}

/// A single simulated vehicle in front of a gapped wall.
#[derive(Clone, Debug)]
pub struct GapEnv<T: Real> {
    cfg: WorldConfig<T>,
    gap: GapGeometry<T>,
    goal: GoalSpec<T>,
    params: QuadrotorParams<T>,
    state: RigidBodyState<T>,
    controller: InnerLoopController<T>,
    rng: SimRng,
    meas: Measurement<T>,
    steps: usize,
    collided: bool,
    status: Option<EpisodeStatus>,
    started: bool,
    episode_reward: T,
    record: bool,
    trajectory: Vec<TrajectoryRow<T>>,
}

impl<T: Real> GapEnv<T> {
    pub fn new(cfg: WorldConfig<T>, rng: SimRng) -> Result<Self, WorldError> {
        cfg.validate()?;
        let gap = cfg.gap.clone();
        let goal = GoalSpec::behind(&gap, cfg.goal_offset, cfg.success_radius)?;
        Ok(Self {
            params: cfg.quad.clone(),
            controller: InnerLoopController::new(cfg.gains.clone()),
            state: RigidBodyState::at_rest(cfg.nominal_start()),
            gap,
            goal,
            cfg,
            rng,
            meas: Measurement::default(),
            steps: 0,
            collided: false,
            status: None,
            started: false,
            episode_reward: T::zero(),
            record: false,
            trajectory: Vec::new(),
        })
    }

    /// Keep per-step trajectory rows for export.
    pub fn with_recording(mut self, record: bool) -> Self {
        self.record = record;
        self
    }

    /// Resizes the hole; takes effect immediately (call between episodes).
    pub fn set_gap_dims(&mut self, width: T, height: T) -> Result<(), WorldError> {
        let gap = self.gap.with_dims(width, height);
        gap.validate()?;
        self.gap = gap;
        Ok(())
    }

    pub fn config(&self) -> &WorldConfig<T> {
        &self.cfg
    }

    pub fn gap(&self) -> &GapGeometry<T> {
        &self.gap
    }

    pub fn goal(&self) -> &GoalSpec<T> {
        &self.goal
    }

    pub fn state(&self) -> &RigidBodyState<T> {
        &self.state
    }

    /// The perturbed airframe of the current episode.
    pub fn params(&self) -> &QuadrotorParams<T> {
        &self.params
    }

    pub fn is_done(&self) -> bool {
        self.status.is_some()
    }

    pub fn reset(&mut self) -> Result<Observation<T>, WorldError> {
        let (state, params) = reset(&self.cfg.randomization, &self.cfg.quad, &self.gap, self.cfg.nominal_start(), &mut self.rng)?;
        self.state = state;
        self.params = params;
        self.controller.reset();
        self.steps = 0;
        self.collided = false;
        self.status = None;
        self.started = true;
        self.episode_reward = T::zero();
        self.trajectory.clear();
        let (obs, meas) = observe(&self.state, &self.goal, &self.cfg.randomization, &mut self.rng);
        self.meas = meas;
        Ok(obs)
    }

    /// Advances one policy period with an action in `(-1, 1)^3`.
    pub fn step(&mut self, action: [T; 3]) -> Result<StepResult<T>, WorldError> {
        if !self.started || self.status.is_some() {
            return Err(WorldError::EpisodeFinished);
        }
        let accel = scale_action(action)?;
        let dt_outer = self.cfg.policy_period();
        let fb = CommandFeedback {
            roll: self.meas.euler.x,
            pitch: self.meas.euler.y,
            roll_rate: self.meas.body_rates.x,
            pitch_rate: self.meas.body_rates.y,
            altitude: self.meas.position.z,
            climb_rate: self.meas.velocity.z,
        };
        let setpoint = make_setpoint(&fb, &accel, dt_outer);
        let start_state = self.state;
        let start_time = T::lit(self.steps as f64) * dt_outer;

        let gains = &self.cfg.gains;
        let dt = gains.physics_period();
        let per_tick = gains.physics_per_attitude();
        let mut cmd = MotorCommand::default();
        let mut saturated = false;
        let mut status = None;
        let mut reached = false;
        for k in 0..gains.physics_per_outer() {
            if k % per_tick == 0 {
                // The controller flies with the nominal model.
                let out = self.controller.step(&self.state, &setpoint, &self.cfg.quad);
                cmd = out.command;
                saturated |= out.saturated;
            }
            match integrate_step(&self.state, &cmd, &self.params, dt) {
                Ok(next) => self.state = next,
                Err(_) => {
                    status = Some(EpisodeStatus::Fault);
                    break;
                }
            }
            if collision_check(&self.state, &self.params, &self.gap) {
                self.collided = true;
                status = Some(EpisodeStatus::Collision);
                break;
            }
            if success_check(&self.state, &self.goal, self.collided) {
                reached = true;
                status = Some(EpisodeStatus::Success);
                break;
            }
        }
        self.steps += 1;
        if status.is_none() && self.steps >= self.cfg.max_policy_steps {
            status = Some(EpisodeStatus::Timeout);
        }
        let r = reward(self.state.position, reached, self.goal.goal_point);
        self.episode_reward = self.episode_reward + r;
        self.status = status;

        if self.record {
            self.trajectory.push(TrajectoryRow {
                time: start_time,
                state: start_state,
                action,
                setpoint,
                reward: r,
                collided: self.collided,
            });
        }

        let (observation, meas) = observe(&self.state, &self.goal, &self.cfg.randomization, &mut self.rng);
        self.meas = meas;
        Ok(StepResult {
            observation,
            reward: r,
            done: status.is_some(),
            info: StepInfo { status, setpoint, saturated },
        })
    }

    /// Summary of the finished episode; `None` while it is still running.
    pub fn outcome(&self) -> Option<EpisodeOutcome<T>> {
        self.status.map(|status| EpisodeOutcome {
            status,
            episode_reward: self.episode_reward,
            steps: self.steps,
            trajectory: self.trajectory.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn quiet_config() -> WorldConfig<f64> {
        WorldConfig { randomization: RandomizationSpec::zero(), ..WorldConfig::default() }
    }

    #[test]
    fn stepping_before_reset_or_after_end_is_rejected() {
        let mut env = GapEnv::new(quiet_config(), SimRng::new(1, stream::ENV)).unwrap();
        assert_eq!(env.step([0.0; 3]), Err(WorldError::EpisodeFinished));
        env.reset().unwrap();
        let mut cfg = quiet_config();
        cfg.max_policy_steps = 1;
        let mut env = GapEnv::new(cfg, SimRng::new(1, stream::ENV)).unwrap();
        env.reset().unwrap();
        assert!(env.step([0.0; 3]).unwrap().done);
        assert_eq!(env.step([0.0; 3]), Err(WorldError::EpisodeFinished));
    }

    #[test]
    fn hover_action_holds_position_until_timeout() {
        let mut env = GapEnv::new(quiet_config(), SimRng::new(1, stream::ENV)).unwrap();
        env.reset().unwrap();
        let p0 = env.state().position;
        let expected = -(p0 - env.goal().goal_point).norm();
        let mut n = 0;
        loop {
            let r = env.step([0.0; 3]).unwrap();
            n += 1;
            assert!((r.reward - expected).abs() < 1e-6, "reward {}", r.reward);
            if r.done {
                assert_eq!(r.info.status, Some(EpisodeStatus::Timeout));
                break;
            }
        }
        assert_eq!(n, 250);
        assert!((env.state().position - p0).norm() < 1e-6);
        let out = env.outcome().unwrap();
        assert_eq!(out.steps, 250);
        assert!((out.episode_reward - 250.0 * expected).abs() < 1e-3);
    }

    #[test]
    fn diving_at_the_wall_beside_a_small_gap_collides() {
        let mut cfg = quiet_config();
        cfg.gap.width = 0.3;
        cfg.gap.height = 0.2;
        let mut env = GapEnv::new(cfg, SimRng::new(1, stream::ENV)).unwrap();
        env.reset().unwrap();
        let mut last = None;
        for _ in 0..250 {
            // Pitch forward hard, then let the rate carry.
            let r = env.step([0.0, 0.9, 0.0]).unwrap();
            if r.done {
                last = r.info.status;
                break;
            }
        }
        assert_eq!(last, Some(EpisodeStatus::Collision));
        assert!(env.outcome().unwrap().episode_reward < 0.0);
    }

    #[test]
    fn noiseless_runs_are_bit_identical() {
        let run = || {
            let mut env = GapEnv::new(quiet_config(), SimRng::new(9, stream::ENV)).unwrap().with_recording(true);
            env.reset().unwrap();
            for k in 0..250 {
                let a = [0.3 * (k as f64 * 0.1).sin(), 0.5, -0.1];
                if env.step(a).unwrap().done {
                    break;
                }
            }
            env.outcome().unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = GapEnv::new(quiet_config(), SimRng::new(1, stream::ENV)).unwrap();
        env.reset().unwrap();
        assert!(matches!(env.step([1.5, 0.0, 0.0]), Err(WorldError::Action(_))));
    }
}
