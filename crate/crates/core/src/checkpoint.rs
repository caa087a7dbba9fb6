//! Text checkpoints of the learner.
//!
//! A header of `key value` lines is followed by a `params` marker and then
//! one line of whitespace-separated floats per parameter tensor: the five
//! networks (policy, q1, q2, v, v_target), then the Adam first and second
//! moments of policy, q1, q2 and v.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::real::Real;
use crate::sacnet::{AdamConfig, AdamState, Layer, Mlp, SacAgent, SacConfig, SacNets};
use crate::trainer::Phase;

pub const CHECKPOINT_MAGIC: &str = "gapsac-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

const NET_NAMES: [&str; 5] = ["policy", "q1", "q2", "v", "v_target"];
const OPT_NAMES: [&str; 4] = ["policy", "q1", "q2", "v"];

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: String },
    #[error("checkpoint stores {found} parameters but this build expects {expected}")]
    Scalar { found: String, expected: &'static str },
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Everything needed to rebuild the learner and its schedule position.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub agent: SacAgent<T>,
    pub seed: u64,
    /// Episodes completed over the whole run.
    pub episodes: u64,
    pub phase: Phase,
    pub episode_in_phase: u64,
    pub ema_reward: Option<T>,
    pub best_score: Option<T>,
}

fn scalar_name<T: Real>() -> &'static str {
    std::any::type_name::<T>()
}

fn fmt_opt<T: Real>(v: Option<T>) -> String {
    v.map_or_else(|| "none".into(), |x| format!("{x:e}"))
}

fn shapes_str<T: Real>(net: &Mlp<T>) -> String {
    net.shapes().iter().map(|(i, o)| format!("{i}x{o}")).collect::<Vec<_>>().join(" ")
}

fn push_floats<T: Real>(out: &mut String, xs: &[T]) {
    let mut first = true;
    for x in xs {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{x:e}").expect("writing to a String");
    }
    out.push('\n');
}

impl<T: Real> Checkpoint<T> {
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let c = &a.config;
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        let _ = writeln!(w, "scalar {}", scalar_name::<T>());
        let _ = writeln!(w, "seed {}", self.seed);
        let _ = writeln!(w, "episodes {}", self.episodes);
        let _ = writeln!(w, "phase {}", self.phase.number());
        let _ = writeln!(w, "episode_in_phase {}", self.episode_in_phase);
        let _ = writeln!(w, "ema_reward {}", fmt_opt(self.ema_reward));
        let _ = writeln!(w, "best_score {}", fmt_opt(self.best_score));
        let _ = writeln!(w, "gamma {:e}", c.gamma);
        let _ = writeln!(w, "alpha {:e}", c.alpha);
        let _ = writeln!(w, "tau {:e}", c.tau);
        let _ = writeln!(w, "critic_output_init {:e}", c.critic_output_init);
        let _ = writeln!(w, "adam {:e} {:e} {:e} {:e}", c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.eps);
        for (name, net) in NET_NAMES.iter().zip(a.nets.all()) {
            let _ = writeln!(w, "net {name} {}", shapes_str(net));
        }
        for (name, opt) in OPT_NAMES.iter().zip(self.optimizers()) {
            let _ = writeln!(w, "optimizer {name} {}", opt.step);
        }
        s.push_str("params\n");
        for net in a.nets.all() {
            for sl in net.slices() {
                push_floats(&mut s, sl);
            }
        }
        for opt in self.optimizers() {
            for m in opt.m.iter().chain(&opt.v) {
                push_floats(&mut s, m);
            }
        }
        s
    }

    fn optimizers(&self) -> [&AdamState<T>; 4] {
        let a = &self.agent;
        [&a.opt_policy, &a.opt_q1, &a.opt_q2, &a.opt_v]
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io { path: path.to_path_buf(), source };
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_text()).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut r = Reader { lines: text.lines().enumerate(), line: 0 };
        let head = r.fields("header")?;
        if head.first() != Some(&CHECKPOINT_MAGIC) {
            return Err(r.err("not a checkpoint file"));
        }
        let version = head.get(1).copied().unwrap_or("");
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(CheckpointError::Version { found: version.into() });
        }
        let scalar = r.value("scalar")?;
        if scalar != scalar_name::<T>() {
            return Err(CheckpointError::Scalar { found: scalar, expected: scalar_name::<T>() });
        }
        let seed = r.parsed("seed")?;
        let episodes = r.parsed("episodes")?;
        let phase = Phase::from_number(r.parsed("phase")?).ok_or_else(|| r.err("phase must be 1 or 2"))?;
        let episode_in_phase = r.parsed("episode_in_phase")?;
        let ema_reward = r.optional("ema_reward")?;
        let best_score = r.optional("best_score")?;
        let gamma = r.parsed("gamma")?;
        let alpha = r.parsed("alpha")?;
        let tau = r.parsed("tau")?;
        let critic_output_init = r.parsed("critic_output_init")?;
        let adam_f = r.keyed("adam")?;
        if adam_f.len() != 4 {
            return Err(r.err("adam needs lr, beta1, beta2 and eps"));
        }
        let adam_v: Vec<f64> = adam_f.iter().map(|s| r.num(s)).collect::<Result<_, _>>()?;
        let adam = AdamConfig { lr: adam_v[0], beta1: adam_v[1], beta2: adam_v[2], eps: adam_v[3] };

        let mut shapes = Vec::new();
        for name in NET_NAMES {
            let f = r.keyed("net")?;
            if f.first() != Some(&name) {
                return Err(r.err(&format!("expected net {name}")));
            }
            let dims = f[1..]
                .iter()
                .map(|d| {
                    let (i, o) = d.split_once('x').ok_or_else(|| r.err(&format!("bad layer shape {d}")))?;
                    Ok((r.num::<usize>(i)?, r.num::<usize>(o)?))
                })
                .collect::<Result<Vec<_>, CheckpointError>>()?;
            if dims.is_empty() {
                return Err(r.err(&format!("net {name} has no layers")));
            }
            shapes.push(dims);
        }
        let mut steps = Vec::new();
        for name in OPT_NAMES {
            let f = r.keyed("optimizer")?;
            if f.len() != 2 || f[0] != name {
                return Err(r.err(&format!("expected optimizer {name} <step>")));
            }
            steps.push(r.num::<u64>(f[1])?);
        }
        if r.fields("params")? != ["params"] {
            return Err(r.err("expected params marker"));
        }

        let mut nets = Vec::new();
        for dims in &shapes {
            let mut layers = Vec::new();
            for &(i, o) in dims {
                let weights = r.floats(i * o)?;
                let bias = r.floats(o)?;
                layers.push(Layer { fan_in: i, fan_out: o, weights, bias });
            }
            nets.push(Mlp::from_layers(layers).map_err(|e| CheckpointError::Shape(e.to_string()))?);
        }
        let mut opts = Vec::new();
        for (k, step) in steps.into_iter().enumerate() {
            let lens: Vec<usize> = nets[k].slices().map(<[T]>::len).collect();
            let m = lens.iter().map(|&n| r.floats(n)).collect::<Result<Vec<_>, _>>()?;
            let v = lens.iter().map(|&n| r.floats(n)).collect::<Result<Vec<_>, _>>()?;
            opts.push(AdamState { config: adam, step, m, v });
        }
        if let Some((i, extra)) = r.lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(CheckpointError::Format { line: i + 1, msg: format!("trailing data: {extra:.40}") });
        }

        let mut it = nets.into_iter();
        let mut next = || it.next().expect("five networks parsed");
        let nets = SacNets { policy: next(), q1: next(), q2: next(), v: next(), v_target: next() };
        let a_dim = nets.policy.output_dim() / 2;
        let obs_dim = nets.policy.input_dim();
        let hidden = |net: &Mlp<T>| net.shapes()[1..].iter().map(|s| s.0).collect::<Vec<_>>();
        let config = SacConfig {
            obs_dim,
            action_dim: a_dim,
            policy_hidden: hidden(&nets.policy),
            critic_hidden: hidden(&nets.v),
            gamma,
            alpha,
            tau,
            critic_output_init,
            adam,
        };
        let consistent = config.policy_sizes() == sizes(&nets.policy)
            && config.q_sizes() == sizes(&nets.q1)
            && config.q_sizes() == sizes(&nets.q2)
            && config.v_sizes() == sizes(&nets.v)
            && config.v_sizes() == sizes(&nets.v_target);
        if !consistent {
            return Err(CheckpointError::Shape("network shapes do not form a consistent learner".into()));
        }
        let mut opts = opts.into_iter();
        let mut next = || opts.next().expect("four optimizers parsed");
        let agent = SacAgent { config, nets, opt_policy: next(), opt_q1: next(), opt_q2: next(), opt_v: next() };
        Ok(Self { agent, seed, episodes, phase, episode_in_phase, ema_reward, best_score })
    }
}

fn sizes<T: Real>(net: &Mlp<T>) -> Vec<usize> {
    let mut s = vec![net.input_dim()];
    s.extend(net.shapes().iter().map(|x| x.1));
    s
}

struct Reader<'a, I: Iterator<Item = (usize, &'a str)>> {
    lines: I,
    line: usize,
}

impl<'a, I: Iterator<Item = (usize, &'a str)>> Reader<'a, I> {
    fn err(&self, msg: &str) -> CheckpointError {
        CheckpointError::Format { line: self.line, msg: msg.into() }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str, CheckpointError> {
        let (i, l) = self.lines.next().ok_or_else(|| CheckpointError::Format {
            line: self.line + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        self.line = i + 1;
        Ok(l)
    }

    fn fields(&mut self, what: &str) -> Result<Vec<&'a str>, CheckpointError> {
        Ok(self.next_line(what)?.split_whitespace().collect())
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, CheckpointError> {
        let f = self.fields(key)?;
        if f.first() != Some(&key) {
            return Err(self.err(&format!("expected `{key}`")));
        }
        Ok(f[1..].to_vec())
    }

    fn value(&mut self, key: &str) -> Result<String, CheckpointError> {
        let f = self.keyed(key)?;
        if f.len() != 1 {
            return Err(self.err(&format!("`{key}` takes one value")));
        }
        Ok(f[0].to_string())
    }

    fn num<V: FromStr>(&self, s: &str) -> Result<V, CheckpointError> {
        s.parse().map_err(|_| self.err(&format!("cannot parse `{s}`")))
    }

    fn parsed<V: FromStr>(&mut self, key: &str) -> Result<V, CheckpointError> {
        let v = self.value(key)?;
        self.num(&v)
    }

    fn optional<V: FromStr>(&mut self, key: &str) -> Result<Option<V>, CheckpointError> {
        let v = self.value(key)?;
        if v == "none" {
            Ok(None)
        } else {
            self.num(&v).map(Some)
        }
    }

    fn floats<T: Real>(&mut self, n: usize) -> Result<Vec<T>, CheckpointError> {
        let l = self.next_line("parameters")?;
        let v = l.split_whitespace().map(|s| self.num::<T>(s)).collect::<Result<Vec<T>, _>>()?;
        if v.len() != n {
            return Err(CheckpointError::Shape(format!("line {} holds {} values, expected {n}", self.line, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(self.err("non-finite parameter"));
        }
        Ok(v)
    }
}
