use serde::{Deserialize, Serialize};

use super::{map_indexed, Candidate, Evaluator, ExecMode};
use crate::error::{CrmError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Candidate,
    /// All grid points, first gene varying slowest.
    pub points: Vec<Candidate>,
}

impl GridResult {
    /// `(min, max)` fitness over completed rollouts.
    pub fn fitness_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .filter(|c| !c.failed())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c.fitness), hi.max(c.fitness)))
    }
}

/// `n` points spanning `[lo, hi]` inclusive; the midpoint when `n == 1`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Exhaustive search over at most two free genes.
pub fn grid_oracle(evaluator: &Evaluator, resolution: usize, mode: ExecMode) -> Result<GridResult> {
    let genes = &evaluator.space.genes;
    if genes.len() > 2 {
        return Err(CrmError::TooManyFreeVariables(genes.len()));
    }
    if resolution == 0 {
        return Err(CrmError::Domain("grid resolution must be at least 1".into()));
    }
    let axes: Vec<Vec<f64>> = genes.iter().map(|g| linspace(g.lower, g.upper, resolution)).collect();
    let mut grid: Vec<Vec<f64>> = vec![vec![]];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    let points = map_indexed(mode, &grid, |_, x| evaluator.evaluate(x));
    let best = points
        .iter()
        .max_by(|a, b| a.rank_cmp(b))
        .cloned()
        .ok_or_else(|| CrmError::Domain("empty grid".into()))?;
    Ok(GridResult { best, points })
}
