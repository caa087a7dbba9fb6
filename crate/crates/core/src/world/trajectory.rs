//! Per-policy-step trajectory records and their CSV form.

use std::io::{self, Write};

use crate::dynamics::RigidBodyState;
use crate::real::Real;
use crate::sim2real::TrackingSetpoint;

pub const TRAJECTORY_HEADER: &str =
    "t,px,py,pz,vx,vy,vz,phi,theta,psi,wx,wy,wz,a_roll,a_pitch,a_alt,reward,collided";

/// State at the start of a policy step, the action taken and its outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow<T> {
    pub time: T,
    pub state: RigidBodyState<T>,
    pub action: [T; 3],
    pub setpoint: TrackingSetpoint<T>,
    pub reward: T,
    pub collided: bool,
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(x: f64) -> String {
    fmt_sig(x, 9)
}

pub(crate) fn fmt_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_trajectory_csv<T: Real, W: Write>(rows: &[TrajectoryRow<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        let s = &r.state;
        let (phi, theta, psi) = s.euler();
        let cols = [
            r.time,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            phi,
            theta,
            psi,
            s.body_rates.x,
            s.body_rates.y,
            s.body_rates.z,
            r.action[0],
            r.action[1],
            r.action[2],
            r.reward,
        ];
        let line: Vec<String> = cols.iter().map(|v| fmt_sig9(v.to_f64_lossy())).collect();
        writeln!(out, "{},{}", line.join(","), u8::from(r.collided))?;
    }
    Ok(())
}
