//! Line-oriented `key = value` run configuration.
//!
//! Keys are dotted (`train.batch_size`, `quad.mass`, ...). Blank lines and
//! `#` comments are ignored. Every key has a default, so an empty file is a
//! valid config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gapsac::trainer::TrainConfig;
use gapsac::world::WorldConfig;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything a run needs besides the command itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub world: WorldConfig<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), world: WorldConfig::default(), out: PathBuf::from("runs/default") }
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! scalar_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("`{s}`: {e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
scalar_value!(f64, u64, u32, usize, bool);

impl Value for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(PathBuf::from(s))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

impl<V: Value> Value for Option<V> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            V::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".into(), Value::render)
    }
}

impl Value for (f64, f64) {
    fn parse_value(s: &str) -> Result<Self, String> {
        parse_gap(s)
    }
    fn render(&self) -> String {
        format!("{}x{}", self.0, self.1)
    }
}

fn parse_list<V: Value>(s: &str) -> Result<Vec<V>, String> {
    s.split(',').map(|p| V::parse_value(p.trim())).collect()
}

fn render_list<V: Value>(v: &[V]) -> String {
    v.iter().map(Value::render).collect::<Vec<_>>().join(", ")
}

impl Value for Vec<usize> {
    fn parse_value(s: &str) -> Result<Self, String> {
        parse_list(s)
    }
    fn render(&self) -> String {
        render_list(self)
    }
}

impl<const N: usize> Value for [f64; N] {
    fn parse_value(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = parse_list(s)?;
        v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated values, got {}", v.len()))
    }
    fn render(&self) -> String {
        render_list(self)
    }
}

/// Parses `WxH`, e.g. `0.7x0.36`.
pub fn parse_gap(s: &str) -> Result<(f64, f64), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("`{s}` is not of the form WIDTHxHEIGHT"))?;
    let w: f64 = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h: f64 = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
        return Err(format!("gap dims in `{s}` must be positive"));
    }
    Ok((w, h))
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+ : $t:ty),* $(,)?) => {
        /// Every accepted key, in snapshot order.
        pub const KEYS: &[&str] = &[$($key),*];

        fn set_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
            match key {
                $($key => {
                    cfg.$($field).+ = <$t as Value>::parse_value(value)
                        .map_err(|msg| ConfigError::Value { key: key.to_string(), msg })?;
                })*
                _ => return Err(ConfigError::UnknownKey(key.to_string())),
            }
            Ok(())
        }

        fn render_keys(cfg: &RunConfig) -> Vec<(&'static str, String)> {
            vec![$(($key, <$t as Value>::render(&cfg.$($field).+))),*]
        }
    };
}

config_keys! {
    "run.seed" => train.seed: u64,
    "run.out" => out: PathBuf,
    "train.phase1_episodes" => train.schedule.phase1_episodes: u64,
    "train.phase2_episodes" => train.schedule.phase2_episodes: u64,
    "train.phase1_denominator" => train.schedule.phase1_denominator: f64,
    "train.phase2_denominator" => train.schedule.phase2_denominator: f64,
    "train.curriculum" => train.schedule.enabled: bool,
    "train.fixed_gap" => train.schedule.fixed_gap: Option<(f64, f64)>,
    "train.batch_size" => train.batch_size: usize,
    "train.buffer_capacity" => train.buffer_capacity: usize,
    "train.warmup" => train.warmup: usize,
    "train.updates_per_step" => train.updates_per_step: f64,
    "train.checkpoint_every" => train.checkpoint_every: u64,
    "train.max_episodes" => train.max_episodes: Option<u64>,
    "train.workers" => train.workers: usize,
    "sac.policy_hidden" => train.sac.policy_hidden: Vec<usize>,
    "sac.critic_hidden" => train.sac.critic_hidden: Vec<usize>,
    "sac.gamma" => train.sac.gamma: f64,
    "sac.alpha" => train.sac.alpha: f64,
    "sac.tau" => train.sac.tau: f64,
    "sac.critic_output_init" => train.sac.critic_output_init: f64,
    "sac.lr" => train.sac.adam.lr: f64,
    "sac.beta1" => train.sac.adam.beta1: f64,
    "sac.beta2" => train.sac.adam.beta2: f64,
    "sac.adam_eps" => train.sac.adam.eps: f64,
    "quad.mass" => world.quad.mass: f64,
    "quad.inertia" => world.quad.inertia: [f64; 3],
    "quad.obb" => world.quad.obb: [f64; 3],
    "quad.side" => world.quad.horizontal_side_d: f64,
    "quad.thrust_coeff" => world.quad.thrust_coeff: f64,
    "quad.torque_coeff" => world.quad.torque_coeff: f64,
    "quad.motor_max_thrust" => world.quad.motor_max_thrust: [f64; 4],
    "quad.drag" => world.quad.drag_coeffs: [f64; 3],
    "quad.gravity" => world.quad.gravity: f64,
    "gap.wall_distance" => world.gap.wall_distance: f64,
    "gap.center_height" => world.gap.gap_center_height: f64,
    "gap.width" => world.gap.width: f64,
    "gap.height" => world.gap.height: f64,
    "gap.tilt" => world.gap.tilt_angle: f64,
    "world.goal_offset" => world.goal_offset: f64,
    "world.success_radius" => world.success_radius: f64,
    "world.max_policy_steps" => world.max_policy_steps: usize,
    "noise.obs_position" => world.randomization.obs_position: f64,
    "noise.obs_angle" => world.randomization.obs_angle: f64,
    "noise.obs_velocity" => world.randomization.obs_velocity: f64,
    "noise.obs_rate" => world.randomization.obs_rate: f64,
    "noise.init_velocity" => world.randomization.init_velocity: f64,
    "noise.init_rate" => world.randomization.init_rate: f64,
    "noise.init_position_xy" => world.randomization.init_position_xy: f64,
    "noise.init_position_z" => world.randomization.init_position_z: f64,
    "noise.inertia_frac" => world.randomization.inertia_frac: f64,
    "noise.motor_thrust_frac" => world.randomization.motor_thrust_frac: f64,
    "gains.attitude_p" => world.gains.attitude_p: f64,
    "gains.yaw_p" => world.gains.yaw_p: f64,
    "gains.rate_p" => world.gains.rate_p: f64,
    "gains.rate_d" => world.gains.rate_d: f64,
    "gains.altitude_p" => world.gains.altitude_p: f64,
    "gains.climb_rate_p" => world.gains.climb_rate_p: f64,
    "gains.max_climb_rate" => world.gains.max_climb_rate: f64,
    "gains.max_vertical_accel" => world.gains.max_vertical_accel: f64,
    "gains.outer_hz" => world.gains.outer_hz: u32,
    "gains.attitude_hz" => world.gains.attitude_hz: u32,
    "gains.physics_hz" => world.gains.physics_hz: u32,
}

/// Splits `key = value` (or `key=value`), trimming both sides.
pub fn split_assignment(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let (k, v) = (k.trim(), v.trim());
    (!k.is_empty()).then_some((k, v))
}

impl RunConfig {
    /// Applies the assignments of a config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_assignment(line).ok_or(ConfigError::Syntax { line: i + 1 })?;
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate(k.into()));
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        set_key(self, key, value)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = split_assignment(assignment).ok_or_else(|| ConfigError::Value {
            key: assignment.to_string(),
            msg: "override must look like key=value".into(),
        })?;
        self.set(k, v)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), msg: e.to_string() })?;
        Self::from_text(&text)
    }

    /// Every key with its resolved value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        for (k, v) in render_keys(self) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.world.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
