//! Two-phase gap curriculum and reward tracking.

use crate::real::Real;

pub const PHASE1_DENOMINATOR: f64 = 10_000.0;
pub const PHASE2_DENOMINATOR: f64 = 150_000.0;
pub const EMA_NEW: f64 = 0.05;
/// Smoothing applied to plotted reward curves.
pub const PLOT_KEEP: f64 = 0.995;
pub const PLOT_NEW: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    One,
    Two,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::One => 1,
            Phase::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Phase::One),
            2 => Some(Phase::Two),
            _ => None,
        }
    }
}

/// Difficulty factor and gap dims for one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurriculumDims<T> {
    pub difficulty: T,
    pub width: T,
    pub height: T,
}

/// `f = min(0.5 sqrt(e / denominator), 1)`; phase 1 shrinks 1.5x1.0 to
/// 1.0x0.5, phase 2 shrinks 1.0x0.5 to 0.6x0.3.
pub fn curriculum_dims<T: Real>(phase: Phase, episode: u64, denominator: f64) -> CurriculumDims<T> {
    let ratio = T::lit(episode as f64) / T::lit(denominator);
    let f = (T::lit(0.5) * ratio.sqrt()).min(T::one());
    let (w0, h0, dw, dh) = match phase {
        Phase::One => (1.5, 1.0, 0.5, 0.5),
        Phase::Two => (1.0, 0.5, 0.4, 0.2),
    };
    CurriculumDims {
        difficulty: f,
        width: T::lit(w0) - T::lit(dw) * f,
        height: T::lit(h0) - T::lit(dh) * f,
    }
}

/// Episode lengths and growth rates of both phases.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumSchedule {
    pub phase1_episodes: u64,
    pub phase2_episodes: u64,
    pub phase1_denominator: f64,
    pub phase2_denominator: f64,
    pub enabled: bool,
    /// Gap used for every episode when the curriculum is off; `None` means
    /// the final phase-2 dims.
    pub fixed_gap: Option<(f64, f64)>,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self {
            phase1_episodes: 100_000,
            phase2_episodes: 600_000,
            phase1_denominator: PHASE1_DENOMINATOR,
            phase2_denominator: PHASE2_DENOMINATOR,
            enabled: true,
            fixed_gap: None,
        }
    }
}

impl CurriculumSchedule {
    pub fn total_episodes(&self) -> u64 {
        self.phase1_episodes + self.phase2_episodes
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.phase1_episodes == 0 && self.phase2_episodes == 0 {
            return Err("both curriculum phases are empty".into());
        }
        if !(self.phase1_denominator > 0.0 && self.phase2_denominator > 0.0) {
            return Err("curriculum denominators must be positive".into());
        }
        if let Some((w, h)) = self.fixed_gap {
            if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                return Err("fixed gap dims must be positive".into());
            }
        }
        Ok(())
    }

    /// Curriculum state at a global episode index.
    pub fn state_at<T: Real>(&self, episode: u64) -> CurriculumState<T> {
        let (phase, e) = if episode < self.phase1_episodes {
            (Phase::One, episode)
        } else {
            (Phase::Two, episode - self.phase1_episodes)
        };
        let dims = if self.enabled {
            let denom = match phase {
                Phase::One => self.phase1_denominator,
                Phase::Two => self.phase2_denominator,
            };
            curriculum_dims(phase, e, denom)
        } else {
            let (w, h) = self.fixed_gap.unwrap_or((0.6, 0.3));
            CurriculumDims { difficulty: T::one(), width: T::lit(w), height: T::lit(h) }
        };
        CurriculumState { phase, episode_in_phase: e, dims }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurriculumState<T> {
    pub phase: Phase,
    pub episode_in_phase: u64,
    pub dims: CurriculumDims<T>,
}

/// `0.95 r* + 0.05 r`, evaluated as `r* + 0.05 (r - r*)` so a constant
/// reward is an exact fixed point.
pub fn ema_update<T: Real>(r_star: T, episode_reward: T) -> T {
    r_star + T::lit(EMA_NEW) * (episode_reward - r_star)
}

pub fn best_policy_score<T: Real>(f2: T, r_star: T) -> T {
    f2 * r_star
}

/// Phase-2 moving average and the best score seen so far.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScoreTracker<T> {
    pub ema_reward: Option<T>,
    pub best_score: Option<T>,
    pub best_episode: Option<u64>,
}

impl<T: Real> ScoreTracker<T> {
    /// Folds in one episode reward; the first reward seeds the average.
    pub fn record(&mut self, episode_reward: T) -> T {
        let ema = match self.ema_reward {
            None => episode_reward,
            Some(r) => ema_update(r, episode_reward),
        };
        self.ema_reward = Some(ema);
        ema
    }

    /// Returns `true` when `score` strictly beats the stored best.
    pub fn offer(&mut self, score: T, episode: u64) -> bool {
        if self.best_score.is_some_and(|b| !(score > b)) {
            return false;
        }
        self.best_score = Some(score);
        self.best_episode = Some(episode);
        true
    }
}

/// Exponential smoothing for reward plots, seeded with the first value.
pub fn smooth_rewards(rewards: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rewards.len());
    let mut acc = None;
    for &r in rewards {
        let v = match acc {
            None => r,
            Some(a) => PLOT_KEEP * a + PLOT_NEW * r,
        };
        acc = Some(v);
        out.push(v);
    }
    out
}

/// Least-squares slope of `ys` against their index.
pub fn linear_trend(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}
