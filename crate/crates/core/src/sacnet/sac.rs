use crate::real::Real;
use crate::rng::SimRng;

use super::policy::squash_head;
use super::{
    policy_sample, AdamConfig, AdamState, Batch, Mlp, MlpGrads, NetError, Noise, OutputInit, SQUASH_EPS,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub policy_hidden: Vec<usize>,
    /// Hidden widths shared by both Q networks and V.
    pub critic_hidden: Vec<usize>,
    pub gamma: f64,
    /// Entropy temperature.
    pub alpha: f64,
    /// Polyak rate of the target V network.
    pub tau: f64,
    /// Half-width of the uniform init of the Q and V output layers.
    pub critic_output_init: f64,
    pub adam: AdamConfig,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            obs_dim: 10,
            action_dim: 3,
            policy_hidden: vec![256, 256],
            critic_hidden: vec![300, 300, 300],
            gamma: 0.99,
            alpha: 1.0,
            tau: 0.005,
            critic_output_init: 3e-3,
            adam: AdamConfig::default(),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::InvalidConfig(m.into()));
        if self.obs_dim == 0 || self.action_dim == 0 {
            return bad("observation and action widths must be positive");
        }
        if self.policy_hidden.iter().chain(&self.critic_hidden).any(|&w| w == 0) {
            return bad("hidden widths must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and non-negative");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.adam.lr > 0.0 && self.critic_output_init > 0.0) {
            return bad("learning rate and critic init bound must be positive");
        }
        Ok(())
    }

    fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend_from_slice(hidden);
        s.push(output);
        s
    }

    pub fn policy_sizes(&self) -> Vec<usize> {
        Self::sizes(self.obs_dim, &self.policy_hidden, 2 * self.action_dim)
    }

    pub fn q_sizes(&self) -> Vec<usize> {
        Self::sizes(self.obs_dim + self.action_dim, &self.critic_hidden, 1)
    }

    pub fn v_sizes(&self) -> Vec<usize> {
        Self::sizes(self.obs_dim, &self.critic_hidden, 1)
    }
}

/// The five networks of the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct SacNets<T> {
    pub policy: Mlp<T>,
    pub q1: Mlp<T>,
    pub q2: Mlp<T>,
    pub v: Mlp<T>,
    pub v_target: Mlp<T>,
}

impl<T: Real> SacNets<T> {
    pub fn init(config: &SacConfig, rng: &mut SimRng) -> Self {
        let critic = OutputInit::Uniform(config.critic_output_init);
        let policy = Mlp::init(&config.policy_sizes(), OutputInit::FanIn, rng);
        let q1 = Mlp::init(&config.q_sizes(), critic, rng);
        let q2 = Mlp::init(&config.q_sizes(), critic, rng);
        let v = Mlp::init(&config.v_sizes(), critic, rng);
        Self { policy, q1, q2, v_target: v.clone(), v }
    }

    /// In declaration order: policy, q1, q2, v, v_target.
    pub fn all(&self) -> [&Mlp<T>; 5] {
        [&self.policy, &self.q1, &self.q2, &self.v, &self.v_target]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SacLosses<T> {
    pub q1: T,
    pub q2: T,
    pub v: T,
    pub policy: T,
}

impl<T: Real> SacLosses<T> {
    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite() && self.v.is_finite() && self.policy.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SacGrads<T> {
    pub policy: MlpGrads<T>,
    pub q1: MlpGrads<T>,
    pub q2: MlpGrads<T>,
    pub v: MlpGrads<T>,
}

fn concat_rows<T: Real>(a: &[T], a_w: usize, b: &[T], b_w: usize, rows: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * (a_w + b_w));
    for r in 0..rows {
        out.extend_from_slice(&a[r * a_w..(r + 1) * a_w]);
        out.extend_from_slice(&b[r * b_w..(r + 1) * b_w]);
    }
    out
}

/// Element-wise minimum of the two Q networks on `batch` rows of
/// `(state, action)`.
pub fn q_min<T: Real>(q1: &Mlp<T>, q2: &Mlp<T>, states: &[T], actions: &[T], batch: usize) -> Result<Vec<T>, NetError> {
    if batch == 0 {
        return Err(NetError::EmptyBatch);
    }
    let (o, a) = (states.len() / batch, actions.len() / batch);
    let x = concat_rows(states, o, actions, a, batch);
    let y1 = q1.predict(&x, batch)?;
    let y2 = q2.predict(&x, batch)?;
    Ok(y1.into_iter().zip(y2).map(|(a, b)| a.min(b)).collect())
}

fn mse_and_grad<T: Real>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = *p - *t;
            loss = loss + e * e;
            two * e / n
        })
        .collect();
    (loss / n, grad)
}

/// All four SAC losses and their parameter gradients on one minibatch.
///
/// `noise` holds one standard normal draw per `(row, action channel)` and
/// drives the fresh policy samples used by the V and policy losses.
pub fn sac_losses<T: Real>(
    batch: &Batch<T>,
    nets: &SacNets<T>,
    alpha: T,
    gamma: T,
    noise: &[T],
) -> Result<(SacLosses<T>, SacGrads<T>), NetError> {
    let b = batch.len;
    if b == 0 {
        return Err(NetError::EmptyBatch);
    }
    let (o, a_dim) = (batch.obs_dim, batch.action_dim);
    if noise.len() != b * a_dim {
        return Err(NetError::Shape(format!("noise has {} values, expected {b} x {a_dim}", noise.len())));
    }
    if nets.policy.output_dim() != 2 * a_dim || nets.q1.input_dim() != o + a_dim {
        return Err(NetError::Shape("network widths do not match the batch".into()));
    }

    // Q losses against r + gamma (1 - done) V_target(s').
    let v_next = nets.v_target.predict(&batch.next_states, b)?;
    let q_target: Vec<T> = (0..b)
        .map(|i| batch.rewards[i] + gamma * (T::one() - batch.dones[i]) * v_next[i])
        .collect();
    let sa = concat_rows(&batch.states, o, &batch.actions, a_dim, b);
    let q1c = nets.q1.forward(&sa, b)?;
    let q2c = nets.q2.forward(&sa, b)?;
    let (q1_loss, g1) = mse_and_grad(q1c.output(), &q_target);
    let (q2_loss, g2) = mse_and_grad(q2c.output(), &q_target);
    let q1_grads = nets.q1.backward(&q1c, &g1, true, false)?.grads.expect("requested");
    let q2_grads = nets.q2.backward(&q2c, &g2, true, false)?.grads.expect("requested");

    // Fresh reparameterized actions.
    let pc = nets.policy.forward(&batch.states, b)?;
    let heads: Vec<_> = (0..b)
        .map(|i| squash_head(&pc.output()[i * 2 * a_dim..(i + 1) * 2 * a_dim], &noise[i * a_dim..(i + 1) * a_dim]))
        .collect();
    let new_actions: Vec<T> = heads.iter().flat_map(|h| h.action.iter().copied()).collect();
    let sa_new = concat_rows(&batch.states, o, &new_actions, a_dim, b);
    let n1 = nets.q1.forward(&sa_new, b)?;
    let n2 = nets.q2.forward(&sa_new, b)?;
    let use_q1: Vec<bool> = n1.output().iter().zip(n2.output()).map(|(x, y)| x <= y).collect();
    let qmin: Vec<T> = n1.output().iter().zip(n2.output()).map(|(x, y)| x.min(*y)).collect();

    // V loss against min Q - alpha log pi.
    let v_tgt: Vec<T> = (0..b).map(|i| qmin[i] - alpha * heads[i].log_prob).collect();
    let vc = nets.v.forward(&batch.states, b)?;
    let (v_loss, gv) = mse_and_grad(vc.output(), &v_tgt);
    let v_grads = nets.v.backward(&vc, &gv, true, false)?.grads.expect("requested");

    // Policy loss mean(alpha log pi - min Q) through the sampled action.
    let bn = T::lit(b as f64);
    let policy_loss = (0..b).map(|i| alpha * heads[i].log_prob - qmin[i]).fold(T::zero(), |s, x| s + x) / bn;
    let neg = -T::one() / bn;
    let gq1: Vec<T> = use_q1.iter().map(|&u| if u { neg } else { T::zero() }).collect();
    let gq2: Vec<T> = use_q1.iter().map(|&u| if u { T::zero() } else { neg }).collect();
    let dx1 = nets.q1.backward(&n1, &gq1, false, true)?.input_grad.expect("requested");
    let dx2 = nets.q2.backward(&n2, &gq2, false, true)?.input_grad.expect("requested");
    let w = o + a_dim;
    let sq_eps = T::lit(SQUASH_EPS);
    let two = T::lit(2.0);
    let coef = alpha / bn;
    let mut g_out = vec![T::zero(); b * 2 * a_dim];
    for (i, h) in heads.iter().enumerate() {
        for j in 0..a_dim {
            let a = h.action[j];
            let da_du = T::one() - a * a;
            // derivative of -log(1 - tanh(u)^2 + eps) with respect to u
            let squash = two * a * da_du / (da_du + sq_eps);
            let dq_da = dx1[i * w + o + j] + dx2[i * w + o + j];
            let du = dq_da * da_du + coef * squash;
            let sigma = h.log_std[j].exp();
            g_out[i * 2 * a_dim + j] = du;
            g_out[i * 2 * a_dim + a_dim + j] =
                if h.log_std_clamped[j] { T::zero() } else { du * sigma * h.noise[j] - coef };
        }
    }
    let policy_grads = nets.policy.backward(&pc, &g_out, true, false)?.grads.expect("requested");

    Ok((
        SacLosses { q1: q1_loss, q2: q2_loss, v: v_loss, policy: policy_loss },
        SacGrads { policy: policy_grads, q1: q1_grads, q2: q2_grads, v: v_grads },
    ))
}

/// Networks plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct SacAgent<T> {
    pub config: SacConfig,
    pub nets: SacNets<T>,
    pub opt_policy: AdamState<T>,
    pub opt_q1: AdamState<T>,
    pub opt_q2: AdamState<T>,
    pub opt_v: AdamState<T>,
}

impl<T: Real> SacAgent<T> {
    pub fn new(config: SacConfig, rng: &mut SimRng) -> Result<Self, NetError> {
        config.validate()?;
        let nets = SacNets::init(&config, rng);
        Ok(Self::from_parts(config, nets))
    }

    /// Fresh optimizer state around existing networks.
    pub fn from_parts(config: SacConfig, nets: SacNets<T>) -> Self {
        let adam = config.adam;
        Self {
            opt_policy: AdamState::new(&nets.policy, adam),
            opt_q1: AdamState::new(&nets.q1, adam),
            opt_q2: AdamState::new(&nets.q2, adam),
            opt_v: AdamState::new(&nets.v, adam),
            config,
            nets,
        }
    }

    /// Squashed action for one observation; `None` selects the mean.
    pub fn act(&self, obs: &[T], rng: Option<&mut SimRng>) -> Result<Vec<T>, NetError> {
        let noise = match rng {
            Some(r) => Noise::Sample(r),
            None => Noise::Deterministic,
        };
        Ok(policy_sample(&self.nets.policy, obs, noise)?.action)
    }

    /// One gradient step on every network followed by the target update.
    ///
    /// Parameters are left untouched when a loss or gradient is non-finite.
    pub fn update(&mut self, batch: &Batch<T>, rng: &mut SimRng) -> Result<SacLosses<T>, NetError> {
        let noise: Vec<T> = (0..batch.len * batch.action_dim).map(|_| T::lit(rng.standard_normal())).collect();
        let (alpha, gamma) = (T::lit(self.config.alpha), T::lit(self.config.gamma));
        let (losses, grads) = sac_losses(batch, &self.nets, alpha, gamma, &noise)?;
        if !losses.is_finite() {
            return Err(NetError::NonFinite("loss"));
        }
        if !(grads.policy.is_finite() && grads.q1.is_finite() && grads.q2.is_finite() && grads.v.is_finite()) {
            return Err(NetError::NonFinite("gradient"));
        }
        self.opt_policy.apply(&mut self.nets.policy, &grads.policy)?;
        self.opt_q1.apply(&mut self.nets.q1, &grads.q1)?;
        self.opt_q2.apply(&mut self.nets.q2, &grads.q2)?;
        self.opt_v.apply(&mut self.nets.v, &grads.v)?;
        let tau = T::lit(self.config.tau);
        self.nets.v_target.polyak_update(&self.nets.v, tau)?;
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SacConfig {
        SacConfig { obs_dim: 4, action_dim: 2, policy_hidden: vec![8, 8], critic_hidden: vec![8, 8], ..SacConfig::default() }
    }

    fn random_batch(cfg: &SacConfig, n: usize, rng: &mut SimRng) -> Batch<f64> {
        let mut b = Batch::with_capacity(n, cfg.obs_dim, cfg.action_dim);
        for i in 0..n {
            let s: Vec<f64> = (0..cfg.obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let a: Vec<f64> = (0..cfg.action_dim).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
            let s2: Vec<f64> = (0..cfg.obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            b.push(&s, &a, rng.uniform_range(-2.0, 2.0), &s2, i % 3 == 0);
        }
        b
    }

    fn constant_net(sizes: &[usize], value: f64) -> Mlp<f64> {
        let mut net = Mlp::zeros(sizes);
        net.slices_mut().last().unwrap()[0] = value;
        net
    }

    #[test]
    fn terminal_q_target_is_reward() {
        let cfg = small_config();
        let mut rng = SimRng::new(1, 0);
        let mut nets = SacNets::<f64>::init(&cfg, &mut rng);
        nets.v_target = constant_net(&cfg.v_sizes(), 7.0);
        nets.q1 = constant_net(&cfg.q_sizes(), 0.0);
        nets.q2 = nets.q1.clone();
        let mut batch = Batch::with_capacity(2, 4, 2);
        batch.push(&[0.0; 4], &[0.0; 2], 3.0, &[0.0; 4], true);
        batch.push(&[0.0; 4], &[0.0; 2], -1.0, &[0.0; 4], true);
        let (l, _) = sac_losses(&batch, &nets, 1.0, 0.99, &[0.0; 4]).unwrap();
        assert_eq!(l.q1, (9.0 + 1.0) / 2.0);
        let mut live = Batch::with_capacity(1, 4, 2);
        live.push(&[0.0; 4], &[0.0; 2], 3.0, &[0.0; 4], false);
        let (l, _) = sac_losses(&live, &nets, 1.0, 0.99, &[0.0; 2]).unwrap();
        assert_eq!(l.q1, (3.0 + 0.99 * 7.0f64).powi(2));
    }

    #[test]
    fn constant_critics_policy_loss() {
        let cfg = small_config();
        let mut rng = SimRng::new(2, 0);
        let mut nets = SacNets::<f64>::init(&cfg, &mut rng);
        nets.q1 = constant_net(&cfg.q_sizes(), 4.0);
        nets.q2 = constant_net(&cfg.q_sizes(), 6.0);
        let batch = random_batch(&cfg, 5, &mut rng);
        let (l, _) = sac_losses(&batch, &nets, 0.0, 0.99, &[0.0; 10]).unwrap();
        assert_eq!(l.policy, -4.0);
    }

    #[test]
    fn q_min_cases() {
        let cfg = small_config();
        let mut rng = SimRng::new(3, 0);
        let s = [0.1, 0.2, 0.3, 0.4, -0.1, -0.2, -0.3, -0.4];
        let a = [0.5, -0.5, 0.2, 0.1];
        let q = Mlp::<f64>::init(&cfg.q_sizes(), OutputInit::FanIn, &mut rng);
        assert_eq!(q_min(&q, &q, &s, &a, 2).unwrap(), q.predict(&concat_rows(&s, 4, &a, 2, 2), 2).unwrap());
        let c3 = constant_net(&cfg.q_sizes(), 3.0);
        let c5 = constant_net(&cfg.q_sizes(), 5.0);
        assert_eq!(q_min(&c5, &c3, &s, &a, 2).unwrap(), vec![3.0, 3.0]);
        let q2 = Mlp::<f64>::init(&cfg.q_sizes(), OutputInit::FanIn, &mut rng);
        let got = q_min(&q, &q2, &s, &a, 2).unwrap();
        for i in 0..2 {
            let x: Vec<f64> = s[i * 4..i * 4 + 4].iter().chain(&a[i * 2..i * 2 + 2]).copied().collect();
            let want = q.predict(&x, 1).unwrap()[0].min(q2.predict(&x, 1).unwrap()[0]);
            assert_eq!(got[i], want);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let cfg = small_config();
        let mut rng = SimRng::new(4, 0);
        let nets = SacNets::<f64>::init(&cfg, &mut rng);
        let batch = Batch::with_capacity(0, 4, 2);
        assert_eq!(sac_losses(&batch, &nets, 1.0, 0.99, &[]).unwrap_err(), NetError::EmptyBatch);
    }

    #[test]
    fn update_moves_all_nets_and_blends_target() {
        let cfg = small_config();
        let mut rng = SimRng::new(5, 0);
        let mut agent = SacAgent::<f64>::new(cfg.clone(), &mut rng).unwrap();
        let before = agent.clone();
        let batch = random_batch(&cfg, 16, &mut rng);
        agent.update(&batch, &mut rng).unwrap();
        assert_ne!(agent.nets.policy, before.nets.policy);
        assert_ne!(agent.nets.q1, before.nets.q1);
        assert_ne!(agent.nets.v, before.nets.v);
        let mut want = before.nets.v_target.clone();
        want.polyak_update(&agent.nets.v, 0.005).unwrap();
        assert!(agent.nets.v_target.slices().eq(want.slices()));
        assert_eq!(agent.opt_q2.step, 1);
    }

    #[test]
    fn non_finite_batch_leaves_agent_untouched() {
        let cfg = small_config();
        let mut rng = SimRng::new(6, 0);
        let mut agent = SacAgent::<f64>::new(cfg.clone(), &mut rng).unwrap();
        let mut batch = random_batch(&cfg, 4, &mut rng);
        batch.rewards[1] = f64::NAN;
        let before = agent.clone();
        assert!(matches!(agent.update(&batch, &mut rng), Err(NetError::NonFinite(_))));
        assert_eq!(agent, before);
    }
}
