//! Rigid-body quadrotor physics: gyroscopic rotational dynamics, thrust and
//! quadratic drag, the X-frame control distribution matrix and a fixed-step
//! semi-implicit Euler integrator.
//!
//! World frame is z-up with gravity along `-e3`; body thrust acts along the
//! body `+z` axis.

use thiserror::Error;

use crate::geometry::{Quat, Vec3};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid quadrotor parameter: {0}")]
    InvalidParams(String),
}

/// Physical description of the airframe.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadrotorParams<T> {
    pub mass: T,
    /// Principal moments `[I_xx, I_yy, I_zz]`.
    pub inertia: [T; 3],
    /// Oriented bounding box extents along body x, y, z.
    pub obb: [T; 3],
    /// Horizontal side length `d` of the bounding box; the arm is `d * sqrt(2) / 2`.
    pub horizontal_side_d: T,
    pub thrust_coeff: T,
    pub torque_coeff: T,
    /// Per-motor thrust ceiling in newtons.
    pub motor_max_thrust: [T; 4],
    /// Quadratic drag per body axis, N / (m/s)^2.
    pub drag_coeffs: [T; 3],
    pub gravity: T,
}

impl<T: Real> Default for QuadrotorParams<T> {
    /// F330-class airframe: 1.2 kg, 19.6 N total thrust split over four motors.
    fn default() -> Self {
        let l = T::lit;
        Self {
            mass: l(1.2),
            inertia: [l(0.007), l(0.007), l(0.014)],
            obb: [l(0.47), l(0.47), l(0.23)],
            horizontal_side_d: l(0.47),
            thrust_coeff: l(6e-6),
            torque_coeff: l(8e-8),
            motor_max_thrust: [l(4.9); 4],
            drag_coeffs: [l(0.10), l(0.10), l(0.05)],
            gravity: l(9.81),
        }
    }
}

impl<T: Real> QuadrotorParams<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |what: &str| Err(DynamicsError::InvalidParams(what.to_string()));
        let all_finite = [self.mass, self.horizontal_side_d, self.thrust_coeff, self.torque_coeff, self.gravity]
            .iter()
            .chain(&self.inertia)
            .chain(&self.obb)
            .chain(&self.motor_max_thrust)
            .chain(&self.drag_coeffs)
            .all(|x| x.is_finite());
        if !all_finite {
            return bad("non-finite entry");
        }
        if self.mass <= T::zero() {
            return bad("mass must be positive");
        }
        if self.inertia.iter().any(|&i| i <= T::zero()) {
            return bad("inertia must be positive");
        }
        if self.thrust_coeff <= T::zero() || self.torque_coeff <= T::zero() {
            return bad("thrust and torque coefficients must be positive");
        }
        if self.motor_max_thrust.iter().any(|&t| t <= T::zero()) {
            return bad("motor max thrust must be positive");
        }
        if self.obb.iter().any(|&d| d <= T::zero()) {
            return bad("bounding box dimensions must be positive");
        }
        if self.horizontal_side_d <= T::zero() || self.horizontal_side_d > self.obb[0].max(self.obb[1]) {
            return bad("horizontal side d must lie in (0, max(obb_x, obb_y)]");
        }
        if self.drag_coeffs.iter().any(|&c| c < T::zero()) {
            return bad("drag coefficients must be non-negative");
        }
        Ok(())
    }

    /// Moment arm of each motor about the roll and pitch axes.
    pub fn arm(&self) -> T {
        T::FRAC_1_SQRT_2() * self.horizontal_side_d
    }

    pub fn max_total_thrust(&self) -> T {
        self.motor_max_thrust.iter().copied().sum()
    }

    /// Upper bound on each `omega_i^2`.
    pub fn max_speed_sq(&self) -> [T; 4] {
        self.motor_max_thrust.map(|t| t / self.thrust_coeff)
    }
}

/// Simulated pose and twist.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidBodyState<T> {
    pub position: Vec3<T>,
    pub velocity: Vec3<T>,
    /// Body to world.
    pub attitude: Quat<T>,
    pub body_rates: Vec3<T>,
}

impl<T: Real> Default for RigidBodyState<T> {
    fn default() -> Self {
        Self::at_rest(Vec3::zero())
    }
}

impl<T: Real> RigidBodyState<T> {
    /// Level and at rest at `position`.
    pub fn at_rest(position: Vec3<T>) -> Self {
        Self { position, velocity: Vec3::zero(), attitude: Quat::identity(), body_rates: Vec3::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.attitude.is_finite() && self.body_rates.is_finite()
    }

    /// `(roll, pitch, yaw)`, Z-Y-X convention.
    pub fn euler(&self) -> (T, T, T) {
        self.attitude.to_euler()
    }
}

/// Squared rotor speeds, the input of the control distribution matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MotorCommand<T> {
    pub motor_speeds_sq: [T; 4],
}

impl<T: Real> MotorCommand<T> {
    /// Clamps every channel into `[0, max_thrust / C_T]`; the flag reports
    /// whether any channel changed.
    pub fn saturate(self, params: &QuadrotorParams<T>) -> (Self, bool) {
        let limits = params.max_speed_sq();
        let mut saturated = false;
        let mut out = self.motor_speeds_sq;
        for (w, lim) in out.iter_mut().zip(limits) {
            let clamped = w.max(T::zero()).min(lim);
            if clamped != *w {
                saturated = true;
            }
            *w = clamped;
        }
        (Self { motor_speeds_sq: out }, saturated)
    }
}

/// Collective thrust and body torques `(tau_phi, tau_theta, tau_psi)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlWrench<T> {
    pub total_thrust: T,
    pub torques: Vec3<T>,
}

fn ensure_finite(ok: bool, what: &'static str) -> Result<(), DynamicsError> {
    if ok {
        Ok(())
    } else {
        Err(DynamicsError::NonFinite(what))
    }
}

/// Body angular acceleration: torque over inertia minus the gyroscopic coupling.
pub fn angular_acceleration<T: Real>(
    state: &RigidBodyState<T>,
    wrench: &ControlWrench<T>,
    params: &QuadrotorParams<T>,
) -> Result<Vec3<T>, DynamicsError> {
    ensure_finite(state.body_rates.is_finite(), "body rates")?;
    ensure_finite(wrench.torques.is_finite(), "torques")?;
    let [ixx, iyy, izz] = params.inertia;
    let w = state.body_rates;
    let tau = wrench.torques;
    Ok(Vec3::new(
        tau.x / ixx - (iyy - izz) / ixx * w.y * w.z,
        tau.y / iyy - (izz - ixx) / iyy * w.x * w.z,
        tau.z / izz - (ixx - iyy) / izz * w.x * w.y,
    ))
}

/// Quadratic drag in the body frame, opposing the body velocity.
pub fn drag_force<T: Real>(velocity_body: Vec3<T>, params: &QuadrotorParams<T>) -> Vec3<T> {
    let c = params.drag_coeffs;
    Vec3::new(
        -c[0] * velocity_body.x * velocity_body.x.abs(),
        -c[1] * velocity_body.y * velocity_body.y.abs(),
        -c[2] * velocity_body.z * velocity_body.z.abs(),
    )
}

/// World-frame linear acceleration from gravity, thrust and drag.
pub fn translational_acceleration<T: Real>(
    state: &RigidBodyState<T>,
    wrench: &ControlWrench<T>,
    params: &QuadrotorParams<T>,
) -> Result<Vec3<T>, DynamicsError> {
    ensure_finite(state.velocity.is_finite() && state.attitude.is_finite(), "state")?;
    ensure_finite(wrench.total_thrust.is_finite(), "thrust")?;
    let q = state.attitude;
    let inv_m = T::one() / params.mass;
    let thrust = q.rotate(Vec3::unit_z()).scale(wrench.total_thrust * inv_m);
    let drag = q.rotate(drag_force(q.rotate_inverse(state.velocity), params)).scale(inv_m);
    Ok(Vec3::new(T::zero(), T::zero(), -params.gravity) + thrust + drag)
}

/// X-frame control distribution matrix applied to squared rotor speeds.
pub fn mix_motors_to_wrench<T: Real>(cmd: &MotorCommand<T>, params: &QuadrotorParams<T>) -> ControlWrench<T> {
    let [w1, w2, w3, w4] = cmd.motor_speeds_sq;
    let ct = params.thrust_coeff;
    let k = params.arm() * ct;
    let cm = params.torque_coeff;
    ControlWrench {
        total_thrust: ct * (w1 + w2 + w3 + w4),
        torques: Vec3::new(k * (w1 - w2 - w3 + w4), k * (w1 + w2 - w3 - w4), cm * (w1 - w2 + w3 - w4)),
    }
}

/// Inverse of the distribution matrix, clamped to the actuator limits.
///
/// The columns of the matrix are orthogonal once each row is normalized by its
/// coefficient, so the inverse is a scaled transpose. Returns the command and
/// a saturation flag.
pub fn wrench_to_motors<T: Real>(wrench: &ControlWrench<T>, params: &QuadrotorParams<T>) -> (MotorCommand<T>, bool) {
    let ct = params.thrust_coeff;
    let a = wrench.total_thrust / ct;
    let b = wrench.torques.x / (params.arm() * ct);
    let c = wrench.torques.y / (params.arm() * ct);
    let d = wrench.torques.z / params.torque_coeff;
    let quarter = T::lit(0.25);
    let raw = MotorCommand {
        motor_speeds_sq: [
            (a + b + c + d) * quarter,
            (a - b + c - d) * quarter,
            (a - b - c + d) * quarter,
            (a + b - c - d) * quarter,
        ],
    };
    raw.saturate(params)
}

/// Advances the state by `dt` with semi-implicit Euler.
///
/// Rates are updated first and the attitude is advanced with the new rates
/// through the quaternion exponential, then renormalized; velocity is updated
/// next and the position advanced with the new velocity. The command is
/// clamped to the actuator limits of `params`.
pub fn integrate_step<T: Real>(
    state: &RigidBodyState<T>,
    cmd: &MotorCommand<T>,
    params: &QuadrotorParams<T>,
    dt: T,
) -> Result<RigidBodyState<T>, DynamicsError> {
    if !(dt > T::zero()) {
        return Err(DynamicsError::InvalidParams("time step must be positive".into()));
    }
    let (cmd, _) = cmd.saturate(params);
    let wrench = mix_motors_to_wrench(&cmd, params);

    let ang_acc = angular_acceleration(state, &wrench, params)?;
    let body_rates = state.body_rates + ang_acc.scale(dt);
    let attitude = state.attitude.mul(Quat::from_rotation_vector(body_rates.scale(dt))).normalized();

    let lin_acc = translational_acceleration(state, &wrench, params)?;
    let velocity = state.velocity + lin_acc.scale(dt);
    let position = state.position + velocity.scale(dt);

    let next = RigidBodyState { position, velocity, attitude, body_rates };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(DynamicsError::NonFinite("integrated state"))
    }
}
