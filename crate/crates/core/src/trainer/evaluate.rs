use std::fmt::Write as _;
use std::path::Path;

use crate::real::Real;
use crate::rng::{stream, SimRng};
use crate::sacnet::{policy_sample, Mlp, Noise};
use crate::world::{EpisodeOutcome, EpisodeStatus, GapEnv, WorldConfig};

use super::TrainError;

/// Widths and heights of an evaluation sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalGrid {
    pub widths: Vec<f64>,
    pub heights: Vec<f64>,
}

impl EvalGrid {
    /// Widths 1.0..0.6 by rows, heights 0.38..0.30 by columns.
    pub fn reference() -> Self {
        Self { widths: vec![1.0, 0.9, 0.8, 0.7, 0.6], heights: vec![0.38, 0.36, 0.34, 0.32, 0.30] }
    }

    pub fn single(width: f64, height: f64) -> Self {
        Self { widths: vec![width], heights: vec![height] }
    }

    /// Cells in row-major order (width outer, height inner).
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.widths.iter().flat_map(|&w| self.heights.iter().map(move |&h| (w, h))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellResult {
    pub width: f64,
    pub height: f64,
    pub episodes: usize,
    pub successes: usize,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.successes as f64 / self.episodes as f64
        }
    }

    /// 95% Wilson score interval.
    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.successes, self.episodes, 1.959_963_984_540_054)
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Plays one episode; `noise = None` uses the mean action.
pub fn run_episode<T: Real>(
    env: &mut GapEnv<T>,
    policy: &Mlp<T>,
    mut noise: Option<&mut SimRng>,
) -> Result<EpisodeOutcome<T>, TrainError> {
    let mut obs = env.reset()?;
    loop {
        let n = match noise.as_deref_mut() {
            Some(r) => Noise::Sample(r),
            None => Noise::Deterministic,
        };
        let a = policy_sample(policy, obs.as_slice(), n)?.action;
        let res = env.step([a[0], a[1], a[2]])?;
        obs = res.observation;
        if res.done {
            return Ok(env.outcome().expect("episode finished"));
        }
    }
}

fn eval_cell<T: Real>(
    policy: &Mlp<T>,
    world: &WorldConfig<T>,
    (width, height): (f64, f64),
    episodes: usize,
    seed: u64,
    index: usize,
) -> Result<CellResult, TrainError> {
    let mut env = GapEnv::new(world.clone(), SimRng::indexed(seed, stream::EVAL, index as u64))?;
    env.set_gap_dims(T::lit(width), T::lit(height))?;
    let mut successes = 0;
    for _ in 0..episodes {
        if run_episode(&mut env, policy, None)?.status == EpisodeStatus::Success {
            successes += 1;
        }
    }
    Ok(CellResult { width, height, episodes, successes })
}

/// Success rate of the deterministic policy on every grid cell.
///
/// Each cell draws from its own seeded stream, so results do not depend on
/// the worker count.
pub fn evaluate<T: Real>(
    policy: &Mlp<T>,
    world: &WorldConfig<T>,
    grid: &EvalGrid,
    episodes_per_cell: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<CellResult>, TrainError> {
    let cells = grid.cells();
    let workers = workers.clamp(1, cells.len().max(1));
    let mut results: Vec<Option<Result<CellResult, TrainError>>> = (0..cells.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|k| {
                let cells = &cells;
                s.spawn(move || {
                    (k..cells.len())
                        .step_by(workers)
                        .map(|i| (i, eval_cell(policy, world, cells[i], episodes_per_cell, seed, i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("evaluation worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every cell evaluated")).collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), TrainError> {
    std::fs::write(path, text).map_err(|source| TrainError::Io { path: path.to_path_buf(), source })
}

/// Success percentages laid out with widths as rows and heights as columns.
pub fn write_eval_grid_csv(path: &Path, grid: &EvalGrid, results: &[CellResult]) -> Result<(), TrainError> {
    let mut s = String::from("width\\height");
    for h in &grid.heights {
        let _ = write!(s, ",{h}");
    }
    s.push('\n');
    for (r, w) in grid.widths.iter().enumerate() {
        let _ = write!(s, "{w}");
        for c in 0..grid.heights.len() {
            let cell = &results[r * grid.heights.len() + c];
            let _ = write!(s, ",{:.1}", 100.0 * cell.rate());
        }
        s.push('\n');
    }
    write_text(path, &s)
}

pub fn write_eval_cells_csv(path: &Path, results: &[CellResult]) -> Result<(), TrainError> {
    let mut s = String::from("width,height,episodes,successes,success_rate,ci_low,ci_high\n");
    for c in results {
        let (lo, hi) = c.interval();
        let _ = writeln!(s, "{},{},{},{},{},{},{}", c.width, c.height, c.episodes, c.successes, c.rate(), lo, hi);
    }
    write_text(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sacnet::OutputInit;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(50, 100, 1.959_963_984_540_054);
        assert!((lo - 0.403_831).abs() < 1e-5 && (hi - 0.596_169).abs() < 1e-5);
        let (lo, hi) = wilson_interval(0, 200, 1.96);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.018_84).abs() < 1e-4);
    }

    #[test]
    fn grid_layout() {
        let g = EvalGrid::reference();
        let cells = g.cells();
        assert_eq!(cells.len(), 25);
        assert_eq!(cells[0], (1.0, 0.38));
        assert_eq!(cells[6], (0.9, 0.36));
    }

    #[test]
    fn impossible_gap_never_succeeds_and_workers_agree() {
        let mut rng = SimRng::new(8, 0);
        let policy = Mlp::<f64>::init(&[10, 16, 6], OutputInit::FanIn, &mut rng);
        let world = WorldConfig::<f64>::default();
        let grid = EvalGrid { widths: vec![0.2, 0.3], heights: vec![0.1, 0.15] };
        let a = evaluate(&policy, &world, &grid, 3, 9, 1).unwrap();
        let b = evaluate(&policy, &world, &grid, 3, 9, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|c| c.successes == 0 && c.episodes == 3));
    }
}
