//! Acceleration-to-setpoint command layer.
//!
//! Policy outputs in `(-1, 1)` are scaled to roll/pitch angular accelerations
//! and a vertical acceleration, extrapolated one outer-loop period ahead into
//! angle and altitude setpoints, and tracked by a cascaded inner loop running
//! between the outer loop and the physics.

use thiserror::Error;

use crate::dynamics::{wrench_to_motors, ControlWrench, MotorCommand, QuadrotorParams, RigidBodyState};
use crate::geometry::Vec3;
use crate::real::Real;

/// Action scaling: rad/s^2 for roll and pitch, m/s^2 for altitude.
pub const ANGULAR_ACCEL_SCALE: f64 = 40.0;
pub const VERTICAL_ACCEL_SCALE: f64 = 12.0;
/// Absolute roll/pitch setpoint bound, rad.
pub const MAX_TILT: f64 = 0.55;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Sim2RealError {
    #[error("action component {index} = {value} outside (-1, 1)")]
    ActionOutOfRange { index: usize, value: f64 },
    #[error("invalid inner-loop configuration: {0}")]
    InvalidGains(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AccelerationCommand<T> {
    pub roll_ang_accel: T,
    pub pitch_ang_accel: T,
    pub vertical_accel: T,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrackingSetpoint<T> {
    pub roll: T,
    pub pitch: T,
    pub altitude: T,
}

/// Cascaded controller gains and loop rates.
///
/// The defaults put the angle and altitude poles at `s^2 + 100 s + 5000`
/// (damping 0.707). With the attitude P gain equal to the outer-loop rate
/// and the rate gain twice that, a setpoint extrapolated one outer period
/// ahead initially produces exactly the commanded acceleration.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerLoopGains<T> {
    /// Angle error to desired body rate, 1/s.
    pub attitude_p: T,
    /// Yaw angle error to desired yaw rate, 1/s.
    pub yaw_p: T,
    /// Rate error to angular acceleration, 1/s.
    pub rate_p: T,
    /// Rate error derivative to angular acceleration, dimensionless.
    pub rate_d: T,
    /// Altitude error to desired climb rate, 1/s.
    pub altitude_p: T,
    /// Climb-rate error to desired vertical acceleration, 1/s.
    pub climb_rate_p: T,
    pub max_climb_rate: T,
    pub max_vertical_accel: T,
    pub outer_hz: u32,
    pub attitude_hz: u32,
    pub physics_hz: u32,
}

impl<T: Real> Default for InnerLoopGains<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            attitude_p: l(50.0),
            yaw_p: l(5.0),
            rate_p: l(100.0),
            rate_d: l(0.05),
            altitude_p: l(50.0),
            climb_rate_p: l(100.0),
            max_climb_rate: l(1.0),
            max_vertical_accel: l(12.0),
            outer_hz: 50,
            attitude_hz: 250,
            physics_hz: 1000,
        }
    }
}

impl<T: Real> InnerLoopGains<T> {
    pub fn validate(&self) -> Result<(), Sim2RealError> {
        let gains = [
            self.attitude_p,
            self.yaw_p,
            self.rate_p,
            self.rate_d,
            self.altitude_p,
            self.climb_rate_p,
            self.max_climb_rate,
            self.max_vertical_accel,
        ];
        if gains.iter().any(|g| !(g.is_finite() && *g > T::zero())) {
            return Err(Sim2RealError::InvalidGains("all gains must be positive and finite".into()));
        }
        if self.outer_hz == 0 || self.attitude_hz == 0 || self.physics_hz == 0 {
            return Err(Sim2RealError::InvalidGains("loop rates must be positive".into()));
        }
        if self.physics_hz % self.attitude_hz != 0 || self.attitude_hz % self.outer_hz != 0 {
            return Err(Sim2RealError::InvalidGains(format!(
                "loop rates must nest evenly: physics {} / attitude {} / outer {}",
                self.physics_hz, self.attitude_hz, self.outer_hz
            )));
        }
        Ok(())
    }

    pub fn outer_period(&self) -> T {
        T::one() / T::lit(self.outer_hz as f64)
    }

    pub fn attitude_period(&self) -> T {
        T::one() / T::lit(self.attitude_hz as f64)
    }

    pub fn physics_period(&self) -> T {
        T::one() / T::lit(self.physics_hz as f64)
    }

    /// Physics sub-steps per inner-loop tick.
    pub fn physics_per_attitude(&self) -> usize {
        (self.physics_hz / self.attitude_hz) as usize
    }

    /// Physics sub-steps per policy step.
    pub fn physics_per_outer(&self) -> usize {
        (self.physics_hz / self.outer_hz) as usize
    }
}

/// Multiplies a squashed action by `(40, 40, 12)`.
pub fn scale_action<T: Real>(raw: [T; 3]) -> Result<AccelerationCommand<T>, Sim2RealError> {
    for (index, &value) in raw.iter().enumerate() {
        if !(value.abs() < T::one()) {
            return Err(Sim2RealError::ActionOutOfRange { index, value: value.to_f64_lossy() });
        }
    }
    Ok(AccelerationCommand {
        roll_ang_accel: raw[0] * T::lit(ANGULAR_ACCEL_SCALE),
        pitch_ang_accel: raw[1] * T::lit(ANGULAR_ACCEL_SCALE),
        vertical_accel: raw[2] * T::lit(VERTICAL_ACCEL_SCALE),
    })
}

/// Second-order extrapolation `p + v dt + a dt^2 / 2`.
pub fn position_command<T: Real>(p: T, v: T, accel: T, dt: T) -> T {
    p + v * dt + T::lit(0.5) * accel * dt * dt
}

/// Angular analogue of [`position_command`], clamped to the tilt bound.
pub fn attitude_command<T: Real>(angle: T, rate: T, ang_accel: T, dt: T) -> T {
    clamp_tilt(position_command(angle, rate, ang_accel, dt))
}

pub fn clamp_tilt<T: Real>(angle: T) -> T {
    let lim = T::lit(MAX_TILT);
    angle.max(-lim).min(lim)
}

/// Measured quantities the setpoint extrapolation starts from.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CommandFeedback<T> {
    pub roll: T,
    pub pitch: T,
    pub roll_rate: T,
    pub pitch_rate: T,
    pub altitude: T,
    pub climb_rate: T,
}

/// Builds the next setpoint from measured feedback and an acceleration command.
pub fn make_setpoint<T: Real>(fb: &CommandFeedback<T>, cmd: &AccelerationCommand<T>, dt: T) -> TrackingSetpoint<T> {
    TrackingSetpoint {
        roll: attitude_command(fb.roll, fb.roll_rate, cmd.roll_ang_accel, dt),
        pitch: attitude_command(fb.pitch, fb.pitch_rate, cmd.pitch_ang_accel, dt),
        altitude: position_command(fb.altitude, fb.climb_rate, cmd.vertical_accel, dt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerLoopOutput<T> {
    pub command: MotorCommand<T>,
    pub wrench: ControlWrench<T>,
    pub saturated: bool,
}

/// Cascaded P / PD tracker. Holds the previous rate error for the D term, so
/// there is one instance per simulated vehicle.
#[derive(Clone, Debug)]
pub struct InnerLoopController<T> {
    gains: InnerLoopGains<T>,
    prev_rate_error: Option<Vec3<T>>,
}

impl<T: Real> InnerLoopController<T> {
    pub fn new(gains: InnerLoopGains<T>) -> Self {
        Self { gains, prev_rate_error: None }
    }

    pub fn gains(&self) -> &InnerLoopGains<T> {
        &self.gains
    }

    pub fn reset(&mut self) {
        self.prev_rate_error = None;
    }

    /// One inner-loop tick. `params` is the controller's model of the vehicle
    /// (nominal values), not necessarily the simulated one.
    pub fn step(
        &mut self,
        state: &RigidBodyState<T>,
        setpoint: &TrackingSetpoint<T>,
        params: &QuadrotorParams<T>,
    ) -> InnerLoopOutput<T> {
        let g = &self.gains;
        let dt = g.attitude_period();
        let (roll, pitch, yaw) = state.euler();

        // Altitude: position P -> climb rate, rate P -> vertical acceleration.
        let climb_cmd = (g.altitude_p * (setpoint.altitude - state.position.z))
            .max(-g.max_climb_rate)
            .min(g.max_climb_rate);
        let accel_cmd = (g.climb_rate_p * (climb_cmd - state.velocity.z))
            .max(-params.gravity)
            .min(g.max_vertical_accel);
        let tilt = (roll.cos() * pitch.cos()).max(T::lit(0.5));
        let thrust = (params.mass * (params.gravity + accel_cmd) / tilt)
            .max(T::zero())
            .min(params.max_total_thrust());

        // Attitude: angle P -> body rate, rate PD -> torque.
        let rate_cmd = Vec3::new(
            g.attitude_p * (clamp_tilt(setpoint.roll) - roll),
            g.attitude_p * (clamp_tilt(setpoint.pitch) - pitch),
            g.yaw_p * (-yaw),
        );
        let err = rate_cmd - state.body_rates;
        let derr = match self.prev_rate_error {
            Some(prev) => (err - prev).scale(T::one() / dt),
            None => Vec3::zero(),
        };
        self.prev_rate_error = Some(err);
        let ang_acc = err.scale(g.rate_p) + derr.scale(g.rate_d);
        let torques = Vec3::new(
            params.inertia[0] * ang_acc.x,
            params.inertia[1] * ang_acc.y,
            params.inertia[2] * ang_acc.z,
        );
        let wrench = ControlWrench { total_thrust: thrust, torques };
        let (command, saturated) = wrench_to_motors(&wrench, params);
        InnerLoopOutput { command, wrench, saturated }
    }
}
