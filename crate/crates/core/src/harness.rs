//! Time-refinement studies over dyadic levels.
//!
//! Level `l` uses `base_steps·2^l` uniform steps on `[0, T]`, so every knot
//! of level `l` is also a knot of level `l+1`. Quantities are compared at
//! the level-0 knots ("probes"), reading each level's piecewise-constant,
//! right-continuous interpolant.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{evolve, pre_crack_balance_residual, LedgerRow, Problem, TimeGrid, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub level: u32,
    pub dt: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub level: u32,
    pub dt: f64,
    pub probe: f64,
    pub bulk: f64,
    pub surface_c: f64,
    pub total: f64,
    /// `total − total_0 − Σ θ Δt` at the probe.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub level: u32,
    pub dt: f64,
    /// Largest balance residual before the crack first grows.
    pub residual: f64,
    /// `log2(residual_{l−1} / residual_l)`; absent on level 0.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub levels: Vec<Level>,
    pub probes: Vec<f64>,
}

/// Runs `levels` dyadic refinements of `[0, horizon]` in parallel.
pub fn refine_study(
    problem: &Problem,
    horizon: f64,
    base_steps: usize,
    levels: u32,
) -> Result<Study> {
    if levels == 0 {
        return Err(Error::InvalidInput("a study needs at least one level".into()));
    }
    let grids: Vec<(u32, TimeGrid)> = (0..levels)
        .map(|l| TimeGrid::dyadic(horizon, base_steps, l).map(|g| (l, g)))
        .collect::<Result<_>>()?;
    let probes = grids[0].1.times().to_vec();
    let levels = grids
        .into_par_iter()
        .map(|(level, grid)| {
            let dt = grid.max_step();
            evolve(problem, grid).map(|trajectory| Level {
                level,
                dt,
                trajectory,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Study { levels, probes })
}

/// Index of the last row with `t ≤ probe`.
fn row_at(ledger: &[LedgerRow], probe: f64) -> usize {
    ledger.partition_point(|r| r.t <= probe).saturating_sub(1)
}

fn balance_at(ledger: &[LedgerRow], k: usize) -> f64 {
    let acc: f64 = ledger[..=k]
        .windows(2)
        .map(|w| w[0].theta * (w[1].t - w[0].t))
        .sum();
    ledger[k].total - ledger[0].total - acc
}

impl Study {
    pub fn rows(&self) -> Vec<StudyRow> {
        let mut rows = Vec::new();
        for lv in &self.levels {
            let ledger = &lv.trajectory.ledger;
            for &probe in &self.probes {
                let k = row_at(ledger, probe);
                let r = &ledger[k];
                rows.push(StudyRow {
                    level: lv.level,
                    dt: lv.dt,
                    probe,
                    bulk: r.bulk,
                    surface_c: r.surface_c,
                    total: r.total,
                    residual: balance_at(ledger, k),
                });
            }
        }
        rows
    }

    /// `d[p][l] = |q_{l+1}(probe_p) − q_l(probe_p)|` for a ledger quantity.
    pub fn differences(&self, quantity: impl Fn(&LedgerRow) -> f64) -> Vec<Vec<f64>> {
        self.probes
            .iter()
            .map(|&probe| {
                let values: Vec<f64> = self
                    .levels
                    .iter()
                    .map(|lv| {
                        let ledger = &lv.trajectory.ledger;
                        quantity(&ledger[row_at(ledger, probe)])
                    })
                    .collect();
                values.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
            })
            .collect()
    }

    /// Whether successive-level differences never grow at any probe.
    pub fn differences_nonincreasing(&self, quantity: impl Fn(&LedgerRow) -> f64) -> bool {
        self.differences(quantity)
            .iter()
            .all(|d| d.windows(2).all(|w| w[1] <= w[0]))
    }

    pub fn rates(&self) -> Vec<RateRow> {
        let residuals: Vec<f64> = self
            .levels
            .iter()
            .map(|lv| pre_crack_balance_residual(&lv.trajectory.ledger))
            .collect();
        self.levels
            .iter()
            .enumerate()
            .map(|(i, lv)| RateRow {
                level: lv.level,
                dt: lv.dt,
                residual: residuals[i],
                rate: (i > 0).then(|| (residuals[i - 1] / residuals[i]).log2()),
            })
            .collect()
    }
}

/// Observed convergence rates of the pre-crack energy balance residual.
pub fn balance_convergence(study: &Study) -> Vec<RateRow> {
    study.rates()
}
