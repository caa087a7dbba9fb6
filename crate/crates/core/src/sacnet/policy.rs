//! Reparameterized tanh-Gaussian policy head.
//!
//! The policy network emits `[mean (A), log_std (A)]` per observation.

use crate::real::Real;
use crate::rng::SimRng;

use super::{Mlp, NetError};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the squash correction.
pub const SQUASH_EPS: f64 = 1e-6;

/// One sample of the squashed Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicyOutput<T> {
    pub mean: Vec<T>,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Vec<T>,
    /// Standard normal draw used for the sample.
    pub noise: Vec<T>,
    pub pre_squash: Vec<T>,
    /// Strictly inside (-1, 1).
    pub action: Vec<T>,
    pub log_prob: T,
    /// `true` where the raw log-std was outside the clamp range.
    pub log_std_clamped: Vec<bool>,
}

/// Noise source for [`policy_sample`].
pub enum Noise<'a, T> {
    Sample(&'a mut SimRng),
    Fixed(&'a [T]),
    /// Zero noise: the action is `tanh(mean)`.
    Deterministic,
}

/// Largest magnitude an action may take.
pub(crate) fn action_bound<T: Real>() -> T {
    T::one() - T::epsilon()
}

/// Squash one raw policy output row given its noise vector.
pub fn squash_head<T: Real>(raw: &[T], noise: &[T]) -> GaussianPolicyOutput<T> {
    let a_dim = noise.len();
    assert_eq!(raw.len(), 2 * a_dim, "policy output must hold a mean and a log-std per channel");
    let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
    let bound = action_bound::<T>();
    let half_log_2pi = T::lit(0.5 * (2.0 * std::f64::consts::PI).ln());
    let half = T::lit(0.5);
    let sq_eps = T::lit(SQUASH_EPS);
    let mut out = GaussianPolicyOutput {
        mean: raw[..a_dim].to_vec(),
        log_std: Vec::with_capacity(a_dim),
        noise: noise.to_vec(),
        pre_squash: Vec::with_capacity(a_dim),
        action: Vec::with_capacity(a_dim),
        log_prob: T::zero(),
        log_std_clamped: Vec::with_capacity(a_dim),
    };
    for i in 0..a_dim {
        let raw_ls = raw[a_dim + i];
        let ls = raw_ls.max(lo).min(hi);
        out.log_std_clamped.push(!(raw_ls >= lo && raw_ls <= hi));
        let u = out.mean[i] + ls.exp() * noise[i];
        let a = u.tanh().max(-bound).min(bound);
        out.log_prob = out.log_prob - half * noise[i] * noise[i] - ls - half_log_2pi
            - (T::one() - a * a + sq_eps).ln();
        out.log_std.push(ls);
        out.pre_squash.push(u);
        out.action.push(a);
    }
    out
}

/// Evaluate the policy on one observation and draw an action.
pub fn policy_sample<T: Real>(
    policy: &Mlp<T>,
    obs: &[T],
    noise: Noise<'_, T>,
) -> Result<GaussianPolicyOutput<T>, NetError> {
    let out_dim = policy.output_dim();
    if out_dim % 2 != 0 {
        return Err(NetError::Shape(format!("policy output width {out_dim} is odd")));
    }
    let a_dim = out_dim / 2;
    let raw = policy.predict(obs, 1)?;
    let eps: Vec<T> = match noise {
        Noise::Sample(rng) => (0..a_dim).map(|_| T::lit(rng.standard_normal())).collect(),
        Noise::Fixed(e) => {
            if e.len() != a_dim {
                return Err(NetError::Shape(format!("noise has {} channels, expected {a_dim}", e.len())));
            }
            e.to_vec()
        }
        Noise::Deterministic => vec![T::zero(); a_dim],
    };
    Ok(squash_head(&raw, &eps))
}
