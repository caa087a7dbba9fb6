//! Independent oracles shared by the integration tests and the acceptance
//! target: finite differences, a sampled collision test and closed-form
//! falling-body kinematics.
#![allow(dead_code)]

use gapsac::dynamics::{
    integrate_step, mix_motors_to_wrench, wrench_to_motors, ControlWrench, MotorCommand, QuadrotorParams,
    RigidBodyState,
};
use gapsac::geometry::{Quat, Vec3};
use gapsac::rng::SimRng;
use gapsac::sacnet::{sac_losses, Batch, Mlp, MlpGrads, OutputInit, SacConfig, SacLosses, SacNets};
use gapsac::world::{collision_check, obb_corners, straddles_wall, wall_section};
use gapsac::world::GapGeometry;

pub const FD_STEP: f64 = 1e-5;
/// Relative agreement required between analytic and numeric gradients.
pub const GRAD_TOL: f64 = 1e-4;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// `per_layer` random `(slice, element)` coordinates drawn from each layer's
/// weights and bias together.
pub fn layer_coords(net: &Mlp<f64>, per_layer: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
    let lens: Vec<usize> = net.slices().map(<[f64]>::len).collect();
    let mut out = Vec::new();
    for layer in 0..lens.len() / 2 {
        let (nw, nb) = (lens[2 * layer], lens[2 * layer + 1]);
        for _ in 0..per_layer {
            let k = rng.below(nw + nb);
            out.push(if k < nw { (2 * layer, k) } else { (2 * layer + 1, k - nw) });
        }
    }
    out
}

fn value(net: &mut Mlp<f64>, (s, e): (usize, usize)) -> f64 {
    net.slices().nth(s).unwrap()[e]
}

fn set(net: &mut Mlp<f64>, (s, e): (usize, usize), x: f64) {
    net.slices_mut().nth(s).unwrap()[e] = x;
}

fn grad_at(grads: &MlpGrads<f64>, (s, e): (usize, usize)) -> f64 {
    grads.slices().nth(s).unwrap()[e]
}

/// Bound on the round-off in a central difference of values near `loss`.
pub fn fd_noise(loss: f64) -> f64 {
    8.0 * f64::EPSILON * loss.abs().max(1.0) / (2.0 * FD_STEP)
}

#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    /// Coordinates outside the relative tolerance whose discrepancy is
    /// below the round-off of the difference quotient itself.
    pub within_noise: usize,
    pub failures: usize,
    pub worst: f64,
    pub worst_at: String,
}

impl GradReport {
    fn add(&mut self, analytic: f64, fd: f64, noise: f64, what: impl FnOnce() -> String) {
        let err = rel_err(analytic, fd);
        self.checked += 1;
        if err >= GRAD_TOL {
            if (analytic - fd).abs() < noise {
                self.within_noise += 1;
            } else {
                self.failures += 1;
            }
        }
        if err > self.worst || self.checked == 1 {
            self.worst = err;
            self.worst_at = format!("{} analytic {analytic:e} fd {fd:e}", what());
        }
    }

    pub fn merge(&mut self, other: GradReport) {
        self.checked += other.checked;
        self.within_noise += other.within_noise;
        self.failures += other.failures;
        if other.worst > self.worst {
            self.worst = other.worst;
            self.worst_at = other.worst_at;
        }
    }
}

/// Checks a bare network's parameter and input gradients of
/// `L = sum(c * y) + 0.5 * sum(y^2)` against central differences.
pub fn mlp_gradient_report(sizes: &[usize], per_layer: usize, seed: u64) -> GradReport {
    let mut rng = SimRng::new(seed, 0);
    let mut net = Mlp::<f64>::init(sizes, OutputInit::FanIn, &mut rng);
    let batch = 4;
    let out_dim = *sizes.last().unwrap();
    let x: Vec<f64> = (0..batch * sizes[0]).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let c: Vec<f64> = (0..batch * out_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let objective = |y: &[f64]| y.iter().zip(&c).map(|(y, c)| c * y + 0.5 * y * y).sum::<f64>();
    let cache = net.forward(&x, batch).unwrap();
    let g_out: Vec<f64> = cache.output().iter().zip(&c).map(|(y, c)| c + y).collect();
    let back = net.backward(&cache, &g_out, true, true).unwrap();
    let grads = back.grads.unwrap();
    let mut report = GradReport::default();
    for coord in layer_coords(&net, per_layer, &mut rng) {
        let w = value(&mut net, coord);
        set(&mut net, coord, w + FD_STEP);
        let lp = objective(&net.predict(&x, batch).unwrap());
        set(&mut net, coord, w - FD_STEP);
        let lm = objective(&net.predict(&x, batch).unwrap());
        set(&mut net, coord, w);
        let fd = (lp - lm) / (2.0 * FD_STEP);
        report.add(grad_at(&grads, coord), fd, fd_noise(lp), || format!("{sizes:?} param {coord:?}"));
    }
    let dx = back.input_grad.unwrap();
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + FD_STEP;
        let lp = objective(&net.predict(&xp, batch).unwrap());
        xp[i] = x[i] - FD_STEP;
        let lm = objective(&net.predict(&xp, batch).unwrap());
        xp[i] = x[i];
        report.add(dx[i], (lp - lm) / (2.0 * FD_STEP), fd_noise(lp), || format!("{sizes:?} input {i}"));
    }
    report
}

pub fn random_batch(cfg: &SacConfig, n: usize, rng: &mut SimRng) -> Batch<f64> {
    let mut b = Batch::with_capacity(n, cfg.obs_dim, cfg.action_dim);
    for i in 0..n {
        let s: Vec<f64> = (0..cfg.obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let a: Vec<f64> = (0..cfg.action_dim).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
        let s2: Vec<f64> = (0..cfg.obs_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        b.push(&s, &a, rng.uniform_range(-3.0, 3.0), &s2, i % 4 == 0);
    }
    b
}

type Pick = fn(&mut SacNets<f64>) -> &mut Mlp<f64>;
type Field = fn(&SacLosses<f64>) -> f64;

/// Checks the gradients of all four SAC losses with respect to their own
/// network, `per_layer` coordinates per layer, for each temperature.
pub fn sac_gradient_report(cfg: &SacConfig, rows: usize, per_layer: usize, alphas: &[f64], seed: u64) -> GradReport {
    let mut rng = SimRng::new(seed, 0);
    let mut nets = SacNets::<f64>::init(cfg, &mut rng);
    // Fan-in scaled critic outputs so the action path through min Q carries
    // a gradient of ordinary size.
    for net in [&mut nets.q1, &mut nets.q2, &mut nets.v] {
        let sizes: Vec<usize> = net.shapes().iter().map(|s| s.0).chain([1]).collect();
        *net = Mlp::init(&sizes, OutputInit::FanIn, &mut rng);
    }
    let n = rows;
    let batch = random_batch(cfg, n, &mut rng);
    let noise: Vec<f64> = (0..n * cfg.action_dim).map(|_| rng.standard_normal()).collect();
    let mut report = GradReport::default();
    for &alpha in alphas {
        let eval = |nets: &SacNets<f64>| sac_losses(&batch, nets, alpha, cfg.gamma, &noise).unwrap().0;
        let (_, grads) = sac_losses(&batch, &nets, alpha, cfg.gamma, &noise).unwrap();
        let checks: [(&str, Pick, Field, &MlpGrads<f64>); 4] = [
            ("policy", |n| &mut n.policy, |l| l.policy, &grads.policy),
            ("q1", |n| &mut n.q1, |l| l.q1, &grads.q1),
            ("q2", |n| &mut n.q2, |l| l.q2, &grads.q2),
            ("v", |n| &mut n.v, |l| l.v, &grads.v),
        ];
        for (name, pick, field, g) in checks {
            let mut probe = nets.clone();
            for c in layer_coords(pick(&mut probe), per_layer, &mut rng) {
                let x = value(pick(&mut probe), c);
                set(pick(&mut probe), c, x + FD_STEP);
                let lp = field(&eval(&probe));
                set(pick(&mut probe), c, x - FD_STEP);
                let lm = field(&eval(&probe));
                set(pick(&mut probe), c, x);
                let fd = (lp - lm) / (2.0 * FD_STEP);
                report.add(grad_at(g, c), fd, fd_noise(lp), || format!("{name} {c:?} alpha {alpha}"));
            }
        }
    }
    report
}

/// Grid spacing of the sampled collision oracle.
pub const SAMPLE_SPACING: f64 = 0.005;

/// Half-diagonal reach of one sampling cell: an intrusion that stays within
/// this distance of the hole can slip between samples.
pub fn sampling_margin() -> f64 {
    SAMPLE_SPACING * std::f64::consts::SQRT_2
}

/// Whether `p` (world frame) lies in the closed bounding box.
fn inside_box(p: Vec3<f64>, state: &RigidBodyState<f64>, params: &QuadrotorParams<f64>) -> bool {
    let local = state.attitude.rotate_inverse(p - state.position);
    let l = local.to_array();
    (0..3).all(|i| l[i].abs() <= 0.5 * params.obb[i])
}

/// Samples the solid part of the wall on a square grid and reports contact if
/// any wall sample lies inside the box.
pub fn sampled_collision(state: &RigidBodyState<f64>, params: &QuadrotorParams<f64>, gap: &GapGeometry<f64>) -> bool {
    let corners = obb_corners(state, params);
    let (mut y0, mut y1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for c in &corners {
        y0 = y0.min(c.y);
        y1 = y1.max(c.y);
        z0 = z0.min(c.z);
        z1 = z1.max(c.z);
    }
    let s = SAMPLE_SPACING;
    let (iy0, iy1) = ((y0 / s).floor() as i64, (y1 / s).ceil() as i64);
    let (iz0, iz1) = ((z0 / s).floor() as i64, (z1 / s).ceil() as i64);
    for iy in iy0..=iy1 {
        for iz in iz0..=iz1 {
            let (y, z) = (iy as f64 * s, iz as f64 * s);
            if !gap.contains(y, z) && inside_box(Vec3::new(gap.wall_distance, y, z), state, params) {
                return true;
            }
        }
    }
    false
}

/// Largest distance by which the box's wall section leaves the hole; zero
/// when the section is inside.
pub fn intrusion_depth(state: &RigidBodyState<f64>, params: &QuadrotorParams<f64>, gap: &GapGeometry<f64>) -> f64 {
    let (s, c) = gap.tilt_angle.sin_cos();
    wall_section(state, params, gap)
        .iter()
        .map(|p| {
            let dy = p.y;
            let dz = p.z - gap.gap_center_height;
            let u = (c * dy + s * dz).abs() - 0.5 * gap.width;
            let v = (-s * dy + c * dz).abs() - 0.5 * gap.height;
            u.max(0.0).hypot(v.max(0.0))
        })
        .fold(0.0, f64::max)
}

/// A random pose whose box crosses the wall plane near the hole rim, with a
/// random hole size.
pub fn straddling_pose(rng: &mut SimRng, params: &QuadrotorParams<f64>) -> (RigidBodyState<f64>, GapGeometry<f64>) {
    loop {
        let gap = GapGeometry {
            width: rng.uniform_range(0.6, 1.5),
            height: rng.uniform_range(0.4, 1.0),
            ..GapGeometry::default()
        };
        let position = Vec3::new(
            gap.wall_distance + rng.uniform_range(-0.25, 0.25),
            rng.uniform_range(-0.5 * gap.width, 0.5 * gap.width),
            gap.gap_center_height + rng.uniform_range(-0.5 * gap.height, 0.5 * gap.height),
        );
        let attitude = Quat::from_euler(
            rng.uniform_range(-0.6, 0.6),
            rng.uniform_range(-0.6, 0.6),
            rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI),
        );
        let state = RigidBodyState { position, velocity: Vec3::zero(), attitude, body_rates: Vec3::zero() };
        if straddles_wall(&state, params, &gap) {
            return (state, gap);
        }
    }
}

#[derive(Debug, Default)]
pub struct CollisionReport {
    pub poses: usize,
    pub collisions: usize,
    pub disagreements_within_margin: usize,
    pub disagreements_outside_margin: usize,
}

pub fn collision_oracle_report(poses: usize, seed: u64) -> CollisionReport {
    let params = QuadrotorParams::<f64>::default();
    let mut rng = SimRng::new(seed, 0);
    let margin = sampling_margin();
    let mut report = CollisionReport { poses, ..CollisionReport::default() };
    for _ in 0..poses {
        let (state, gap) = straddling_pose(&mut rng, &params);
        let exact = collision_check(&state, &params, &gap);
        let sampled = sampled_collision(&state, &params, &gap);
        report.collisions += usize::from(exact);
        if exact != sampled {
            if intrusion_depth(&state, &params, &gap) <= margin {
                report.disagreements_within_margin += 1;
            } else {
                report.disagreements_outside_margin += 1;
            }
        }
    }
    report
}

/// Drop after `seconds` of free fall from rest, simulated at 1 kHz with the
/// motors off.
pub fn simulated_drop(params: &QuadrotorParams<f64>, seconds: f64) -> f64 {
    let dt = 1e-3;
    let steps = (seconds / dt).round() as usize;
    let off = MotorCommand { motor_speeds_sq: [0.0; 4] };
    let mut state = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 100.0));
    for _ in 0..steps {
        state = integrate_step(&state, &off, params, dt).unwrap();
    }
    100.0 - state.position.z
}

/// Closed-form drop of a level body with quadratic vertical drag `c`:
/// `(v_t^2 / g) ln cosh(g t / v_t)` with terminal speed `v_t = sqrt(m g / c)`,
/// and `g t^2 / 2` without drag.
pub fn closed_form_drop(params: &QuadrotorParams<f64>, seconds: f64) -> f64 {
    let (g, c) = (params.gravity, params.drag_coeffs[2]);
    if c == 0.0 {
        return 0.5 * g * seconds * seconds;
    }
    let vt = (params.mass * g / c).sqrt();
    vt * vt / g * (g * seconds / vt).cosh().ln()
}

/// Position drift after `seconds` holding the hover command from level rest.
pub fn hover_drift(params: &QuadrotorParams<f64>, seconds: f64) -> f64 {
    let wrench = ControlWrench { total_thrust: params.mass * params.gravity, torques: Vec3::zero() };
    let (cmd, saturated) = wrench_to_motors(&wrench, params);
    assert!(!saturated);
    let start = Vec3::new(0.0, 0.0, 1.5);
    let mut state = RigidBodyState::at_rest(start);
    let dt = 1e-3;
    for _ in 0..(seconds / dt).round() as usize {
        state = integrate_step(&state, &cmd, params, dt).unwrap();
    }
    (state.position - start).norm()
}

/// Worst round-trip error of motors -> wrench -> motors over random
/// unsaturated commands, relative to the magnitude of each entry (floor 1),
/// and of wrench -> motors -> wrench.
pub fn mixer_round_trip_error(params: &QuadrotorParams<f64>, trials: usize, seed: u64) -> f64 {
    let mut rng = SimRng::new(seed, 0);
    let limits = params.max_speed_sq();
    let scaled = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let cmd = MotorCommand { motor_speeds_sq: std::array::from_fn(|i| rng.uniform_range(0.05, 0.95) * limits[i]) };
        let wrench = mix_motors_to_wrench(&cmd, params);
        let (back, saturated) = wrench_to_motors(&wrench, params);
        assert!(!saturated);
        for i in 0..4 {
            worst = worst.max(scaled(cmd.motor_speeds_sq[i], back.motor_speeds_sq[i]));
        }
        let again = mix_motors_to_wrench(&back, params);
        worst = worst.max(scaled(wrench.total_thrust, again.total_thrust));
        for (a, b) in wrench.torques.to_array().into_iter().zip(again.torques.to_array()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
