//! Training loop, curriculum bookkeeping and evaluation sweeps.

mod curriculum;
mod evaluate;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

pub use curriculum::{
    best_policy_score, curriculum_dims, ema_update, linear_trend, smooth_rewards, CurriculumDims,
    CurriculumSchedule, CurriculumState, Phase, ScoreTracker, EMA_NEW, PHASE1_DENOMINATOR,
    PHASE2_DENOMINATOR, PLOT_KEEP, PLOT_NEW,
};
pub use evaluate::{
    evaluate, run_episode, wilson_interval, write_eval_cells_csv, write_eval_grid_csv, CellResult, EvalGrid,
};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::real::Real;
use crate::rng::{stream, SimRng};
use crate::sacnet::{Mlp, NetError, Noise, ReplayBuffer, SacAgent, SacConfig};
use crate::world::{EpisodeStatus, GapEnv, Observation, WorldConfig, WorldError};

pub const METRICS_HEADER: &str = "episode,phase,f,w,h,episode_reward,ema_reward,score,buffer_size,success_flag";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LATEST_CHECKPOINT: &str = "checkpoint_latest.ckpt";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.ckpt";

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("non-finite loss at episode {episode}; training halted")]
    NonFiniteLoss { episode: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub schedule: CurriculumSchedule,
    pub seed: u64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions collected before the first gradient step.
    pub warmup: usize,
    /// Gradient steps per environment step once warm.
    pub updates_per_step: f64,
    pub sac: SacConfig,
    /// Episodes between periodic checkpoints; 0 keeps only the final one.
    pub checkpoint_every: u64,
    /// Stops the run early; `None` runs the whole schedule.
    pub max_episodes: Option<u64>,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: CurriculumSchedule::default(),
            seed: 0,
            batch_size: 1024,
            buffer_capacity: 100_000,
            warmup: 10_000,
            updates_per_step: 1.0,
            sac: SacConfig::default(),
            checkpoint_every: 1000,
            max_episodes: None,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        self.schedule.validate().map_err(TrainError::Config)?;
        self.sac.validate()?;
        if self.sac.obs_dim != Observation::<f64>::DIM || self.sac.action_dim != 3 {
            return bad("the learner must take 10 observations and emit 3 actions");
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad("batch size must be positive and no larger than the buffer");
        }
        if !(self.updates_per_step >= 0.0 && self.updates_per_step.is_finite()) {
            return bad("updates per step must be finite and non-negative");
        }
        if self.workers == 0 {
            return bad("at least one worker is required");
        }
        Ok(())
    }

    pub fn total_episodes(&self) -> u64 {
        let t = self.schedule.total_episodes();
        self.max_episodes.map_or(t, |m| m.min(t))
    }
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow<T> {
    pub episode: u64,
    pub phase: Phase,
    pub difficulty: T,
    pub width: T,
    pub height: T,
    pub episode_reward: T,
    pub ema_reward: T,
    pub score: T,
    pub buffer_size: usize,
    pub success: bool,
    pub status: EpisodeStatus,
}

impl<T: Real> MetricsRow<T> {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.phase.number(),
            self.difficulty,
            self.width,
            self.height,
            self.episode_reward,
            self.ema_reward,
            self.score,
            self.buffer_size,
            u8::from(self.success)
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary<T> {
    pub episodes: u64,
    pub successes: u64,
    pub best_score: Option<T>,
    pub stopped_early: bool,
    pub agent: SacAgent<T>,
}

struct Transition<T> {
    obs: Observation<T>,
    action: [T; 3],
    reward: T,
    next: Observation<T>,
    terminal: bool,
}

/// Timeouts are truncations, not terminal states.
fn is_terminal(status: Option<EpisodeStatus>) -> bool {
    matches!(status, Some(EpisodeStatus::Success | EpisodeStatus::Collision | EpisodeStatus::Fault))
}

fn act<T: Real>(policy: &Mlp<T>, obs: &Observation<T>, rng: &mut SimRng) -> Result<[T; 3], NetError> {
    let a = crate::sacnet::policy_sample(policy, obs.as_slice(), Noise::Sample(rng))?.action;
    Ok([a[0], a[1], a[2]])
}

struct Learner<T: Real> {
    agent: SacAgent<T>,
    buffer: ReplayBuffer<T>,
    replay_rng: SimRng,
    update_rng: SimRng,
    credit: f64,
    batch: usize,
    warmup: usize,
    ratio: f64,
}

impl<T: Real> Learner<T> {
    fn ingest(&mut self, t: &Transition<T>, episode: u64) -> Result<(), TrainError> {
        self.buffer.push(t.obs.as_slice(), &t.action, t.reward, t.next.as_slice(), t.terminal);
        if self.buffer.len() < self.warmup.max(self.batch) {
            return Ok(());
        }
        self.credit += self.ratio;
        while self.credit >= 1.0 {
            self.credit -= 1.0;
            let b = self.buffer.sample(self.batch, &mut self.replay_rng)?;
            match self.agent.update(&b, &mut self.update_rng) {
                Err(NetError::NonFinite(_)) => return Err(TrainError::NonFiniteLoss { episode }),
                other => {
                    other?;
                }
            }
        }
        Ok(())
    }
}

struct Output {
    dir: PathBuf,
    metrics: BufWriter<File>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self, TrainError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| TrainError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mpath = dir.join(METRICS_FILE);
        let mut metrics = BufWriter::new(File::create(&mpath).map_err(io(&mpath))?);
        writeln!(metrics, "{METRICS_HEADER}").map_err(io(&mpath))?;
        Ok(Self { dir: dir.to_path_buf(), metrics })
    }

    fn row<T: Real>(&mut self, row: &MetricsRow<T>) -> Result<(), TrainError> {
        writeln!(self.metrics, "{}", row.to_csv())
            .map_err(|source| TrainError::Io { path: self.dir.join(METRICS_FILE), source })
    }

    fn flush(&mut self) -> Result<(), TrainError> {
        self.metrics.flush().map_err(|source| TrainError::Io { path: self.dir.join(METRICS_FILE), source })
    }
}

/// Runs the curriculum training loop.
///
/// `observer` sees every metrics row and may stop the run early. With an
/// output directory the metrics log and checkpoints are written there.
pub fn train<T: Real>(
    cfg: &TrainConfig,
    world: &WorldConfig<T>,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(&MetricsRow<T>) -> ControlFlow<()>,
) -> Result<TrainSummary<T>, TrainError> {
    cfg.validate()?;
    world.validate()?;
    let seed = cfg.seed;
    let agent = SacAgent::new(cfg.sac.clone(), &mut SimRng::new(seed, stream::INIT))?;
    let mut learner = Learner {
        agent,
        buffer: ReplayBuffer::new(cfg.buffer_capacity, Observation::<f64>::DIM, 3),
        replay_rng: SimRng::new(seed, stream::REPLAY),
        update_rng: SimRng::new(seed, stream::UPDATE),
        credit: 0.0,
        batch: cfg.batch_size,
        warmup: cfg.warmup,
        ratio: cfg.updates_per_step,
    };
    let mut envs = (0..cfg.workers)
        .map(|w| GapEnv::new(world.clone(), SimRng::indexed(seed, stream::ENV, w as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut explore: Vec<SimRng> =
        (0..cfg.workers).map(|w| SimRng::indexed(seed, stream::EXPLORATION, w as u64)).collect();
    let mut out = out_dir.map(Output::create).transpose()?;
    let mut tracker = ScoreTracker::<T>::default();
    let mut successes = 0;
    let mut done = 0;
    let mut stopped_early = false;
    let total = cfg.total_episodes();

    let snapshot = |learner: &Learner<T>, tracker: &ScoreTracker<T>, episodes: u64| {
        let st = cfg.schedule.state_at::<T>(episodes.min(total.saturating_sub(1)));
        Checkpoint {
            agent: learner.agent.clone(),
            seed,
            episodes,
            phase: st.phase,
            episode_in_phase: st.episode_in_phase,
            ema_reward: tracker.ema_reward,
            best_score: tracker.best_score,
        }
    };

    while done < total && !stopped_early {
        let round = (cfg.workers as u64).min(total - done);
        let states: Vec<CurriculumState<T>> = (done..done + round).map(|e| cfg.schedule.state_at(e)).collect();
        for (env, st) in envs.iter_mut().zip(&states) {
            env.set_gap_dims(st.dims.width, st.dims.height)?;
        }

        let outcomes: Vec<(EpisodeStatus, T)> = if round == 1 {
            // Single worker: learn while acting.
            let (env, rng) = (&mut envs[0], &mut explore[0]);
            let mut obs = env.reset()?;
            loop {
                let action = act(&learner.agent.nets.policy, &obs, rng)?;
                let res = env.step(action)?;
                let t = Transition { obs, action, reward: res.reward, next: res.observation, terminal: is_terminal(res.info.status) };
                learner.ingest(&t, done)?;
                obs = res.observation;
                if res.done {
                    break;
                }
            }
            let o = env.outcome().expect("episode finished");
            vec![(o.status, o.episode_reward)]
        } else {
            let policy = &learner.agent.nets.policy;
            let collected: Vec<Result<(Vec<Transition<T>>, EpisodeStatus, T), TrainError>> = std::thread::scope(|s| {
                let handles: Vec<_> = envs
                    .iter_mut()
                    .zip(explore.iter_mut())
                    .take(round as usize)
                    .map(|(env, rng)| s.spawn(move || collect_episode(env, policy, rng)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
            });
            let mut outs = Vec::with_capacity(collected.len());
            for (k, c) in collected.into_iter().enumerate() {
                let (transitions, status, reward) = c?;
                for t in &transitions {
                    learner.ingest(t, done + k as u64)?;
                }
                outs.push((status, reward));
            }
            outs
        };

        for ((status, episode_reward), st) in outcomes.into_iter().zip(states) {
            let episode = done;
            if st.phase == Phase::Two && st.episode_in_phase == 0 {
                tracker.ema_reward = None;
            }
            let ema = tracker.record(episode_reward);
            let success = status == EpisodeStatus::Success;
            successes += u64::from(success);
            let score = if st.phase == Phase::Two { best_policy_score(st.dims.difficulty, ema) } else { T::zero() };
            done += 1;
            if st.phase == Phase::Two && tracker.offer(score, episode) {
                if let Some(o) = &out {
                    snapshot(&learner, &tracker, done).save(&o.dir.join(BEST_CHECKPOINT))?;
                }
            }
            let row = MetricsRow {
                episode,
                phase: st.phase,
                difficulty: st.dims.difficulty,
                width: st.dims.width,
                height: st.dims.height,
                episode_reward,
                ema_reward: ema,
                score,
                buffer_size: learner.buffer.len(),
                success,
                status,
            };
            if let Some(o) = out.as_mut() {
                o.row(&row)?;
                if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
                    o.flush()?;
                    snapshot(&learner, &tracker, done).save(&o.dir.join(LATEST_CHECKPOINT))?;
                }
            }
            if observer(&row).is_break() {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(o) = out.as_mut() {
        o.flush()?;
        snapshot(&learner, &tracker, done).save(&o.dir.join(LATEST_CHECKPOINT))?;
    }
    Ok(TrainSummary {
        episodes: done,
        successes,
        best_score: tracker.best_score,
        stopped_early,
        agent: learner.agent,
    })
}

fn collect_episode<T: Real>(
    env: &mut GapEnv<T>,
    policy: &Mlp<T>,
    rng: &mut SimRng,
) -> Result<(Vec<Transition<T>>, EpisodeStatus, T), TrainError> {
    let mut obs = env.reset()?;
    let mut out = Vec::new();
    loop {
        let action = act(policy, &obs, rng)?;
        let res = env.step(action)?;
        out.push(Transition { obs, action, reward: res.reward, next: res.observation, terminal: is_terminal(res.info.status) });
        obs = res.observation;
        if res.done {
            break;
        }
    }
    let o = env.outcome().expect("episode finished");
    Ok((out, o.status, o.episode_reward))
}
