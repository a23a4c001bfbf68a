//! Time-discrete quasi-static evolution.
//!
//! Knots `0 = t_0 < … < t_K = T`. At each knot the incremental problem is
//! solved against the accumulated crack, and the crack grows by the new
//! jump: `Γ_k = Γ_{k−1} ∪ J(u_k)`. Row `k` of the energy ledger records
//! bulk and surface energy at `t_k`, the power `θ(t_k)` of the boundary
//! load, and the cumulated discrete work.
//!
//! The work increment of step `k` is the exact energy change of the
//! competitor `u_{k−1} + g_k − g_{k−1}` on the bonds that survive
//! `Γ_{k−1}`, so `total_k ≤ total_0 + work_cum_k` holds at every knot up to
//! solver accuracy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::crack::CrackSet;
use crate::elastic::bond_gradient;
use crate::energy::BulkDensity;
use crate::error::{Error, Result};
use crate::mesh::{BondId, BondKind, LoadProgram, Mesh, NodalField};
use crate::phase_field::{solve_step_altmin, PhaseField};
use crate::solver::{solve_step_exact, Backend, DisplacementState, StepOptions};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Knot times `t_k = T·k/K`.
///
/// Computing each knot from its index (rather than by accumulation) makes
/// the knots of a coarse grid bit-identical to every `2^l`-th knot of its
/// dyadic refinements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("a time grid needs at least one step".into()));
        }
        let times = (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect();
        Ok(TimeGrid { times })
    }

    /// Uniform grid whose step is `dt`; `horizon/dt` must be an integer.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt} must be positive")));
        }
        let k = (horizon / dt).round();
        if k < 1.0 || (k * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::InvalidInput(format!(
                "time step {dt} does not divide horizon {horizon}"
            )));
        }
        Self::uniform(horizon, k as usize)
    }

    /// Level `l` of the dyadic family with `base_steps` steps at level 0.
    pub fn dyadic(horizon: f64, base_steps: usize, level: u32) -> Result<Self> {
        Self::uniform(horizon, base_steps << level)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        let ok = times.len() >= 2
            && times[0] == 0.0
            && times.windows(2).all(|w| w[1] > w[0])
            && times.iter().all(|t| t.is_finite());
        if !ok {
            return Err(Error::InvalidInput(
                "knots must start at 0 and increase strictly".into(),
            ));
        }
        Ok(TimeGrid { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn max_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Everything that defines a run apart from its time grid.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub density: Arc<dyn BulkDensity>,
    pub load: LoadProgram,
    pub options: StepOptions,
    /// `Γ₀`.
    pub initial: CrackSet,
}

impl Problem {
    /// Γ₀ defaults to the mesh's notch bonds.
    pub fn new(
        mesh: Mesh,
        density: Arc<dyn BulkDensity>,
        load: LoadProgram,
        options: StepOptions,
    ) -> Result<Self> {
        options.validate()?;
        if options.truncation.is_some() && load.components() != 1 {
            return Err(Error::InvalidInput(
                "truncation applies to scalar displacements only".into(),
            ));
        }
        let initial = CrackSet::initial(&mesh);
        Ok(Problem {
            mesh,
            density,
            load,
            options,
            initial,
        })
    }

    pub fn with_initial(mut self, initial: CrackSet) -> Result<Self> {
        if initial.mask().len() != self.mesh.bond_count() {
            return Err(Error::InvalidInput("Γ₀ belongs to a different mesh".into()));
        }
        self.initial = initial;
        Ok(self)
    }

    /// Clamp to `sup_t ‖g(t)‖_∞` (scalar problems only).
    pub fn with_truncation(mut self) -> Result<Self> {
        if self.load.components() != 1 {
            return Err(Error::InvalidInput(
                "truncation applies to scalar displacements only".into(),
            ));
        }
        self.options.truncation = Some(self.load.sup_boundary_norm(&self.mesh));
        Ok(self)
    }

    fn solve(
        &self,
        gamma: &CrackSet,
        boundary: &NodalField,
        previous: Option<&NodalField>,
        history: Option<&PhaseField>,
    ) -> Result<(DisplacementState, Option<PhaseField>)> {
        match self.options.backend {
            Backend::Exact => {
                let s = solve_step_exact(
                    &self.mesh,
                    self.density.as_ref(),
                    gamma,
                    boundary,
                    previous,
                    &self.options,
                )?;
                Ok((s, None))
            }
            Backend::Altmin => {
                let fresh;
                let hist = match history {
                    Some(h) => h,
                    None => {
                        fresh = PhaseField::fresh(&self.mesh, gamma);
                        &fresh
                    }
                };
                let (s, v) = solve_step_altmin(
                    &self.mesh,
                    self.density.as_ref(),
                    hist,
                    gamma,
                    boundary,
                    previous,
                    &self.options,
                )?;
                Ok((s, Some(v)))
            }
        }
    }

    /// Degradation factors for a phase field, `None` for sharp states.
    fn stiffness(&self, history: Option<&PhaseField>) -> Option<Vec<f64>> {
        history.map(|p| p.stiffness(&self.mesh, &self.options))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub bulk: f64,
    pub surface_c: f64,
    pub total: f64,
    pub theta: f64,
    pub work_cum: f64,
}

/// One trajectory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    /// Sorted ids of `Γ_k`.
    pub broken: Vec<BondId>,
    pub u: NodalField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub knots: Vec<Knot>,
    pub ledger: Vec<LedgerRow>,
}

impl Trajectory {
    /// First knot whose crack strictly exceeds `Γ₀`.
    pub fn first_growth(&self) -> Option<usize> {
        let base = self.knots.first()?.broken.len();
        self.knots.iter().position(|k| k.broken.len() > base)
    }
}

/// Serializable mid-run state; resuming from it reproduces the remaining
/// knots exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub times: Vec<f64>,
    /// Index of the next knot to solve.
    pub next: usize,
    pub history: Option<PhaseField>,
    pub trajectory: Trajectory,
}

/// Stepping driver for one run.
pub struct Evolution<'p> {
    problem: &'p Problem,
    grid: TimeGrid,
    next: usize,
    gamma: CrackSet,
    u: NodalField,
    history: Option<PhaseField>,
    trajectory: Trajectory,
}

impl<'p> Evolution<'p> {
    /// Solves at `t = 0`, which must leave `Γ₀` unchanged.
    pub fn new(problem: &'p Problem, grid: TimeGrid) -> Result<Self> {
        let mesh = &problem.mesh;
        let g0 = problem.load.boundary_values(mesh, 0.0)?;
        if grid.horizon() > problem.load.horizon() * (1.0 + 1e-12) {
            return Err(Error::OutOfRange {
                t: grid.horizon(),
                horizon: problem.load.horizon(),
            });
        }
        let history = match problem.options.backend {
            Backend::Exact => None,
            Backend::Altmin => Some(PhaseField::fresh(mesh, &problem.initial)),
        };
        let (state, history) = problem
            .solve(&problem.initial, &g0, None, history.as_ref())
            .map_err(|e| e.at_step(0))?;
        if !state.jump.is_empty() {
            return Err(Error::Invariant(format!(
                "initial crack is not stable at t = 0: bonds {:?} open immediately",
                state.jump
            )));
        }
        let mut ev = Evolution {
            problem,
            grid,
            next: 1,
            gamma: problem.initial.clone(),
            u: state.u.clone(),
            history,
            trajectory: Trajectory {
                knots: Vec::new(),
                ledger: Vec::new(),
            },
        };
        ev.record(0.0, &state, 0.0)?;
        Ok(ev)
    }

    pub fn is_finished(&self) -> bool {
        self.next >= self.grid.times().len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn crack(&self) -> &CrackSet {
        &self.gamma
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    /// Solves the next knot. Returns `false` once all knots are done.
    pub fn step(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let k = self.next;
        let p = self.problem;
        let (t_prev, t) = (self.grid.times()[k - 1], self.grid.times()[k]);
        let g_prev = p.load.boundary_values(&p.mesh, t_prev)?;
        let g = p.load.boundary_values(&p.mesh, t)?;
        let work = work_increment(
            &p.mesh,
            p.density.as_ref(),
            &self.u,
            &g_prev,
            &g,
            &self.gamma,
            p.stiffness(self.history.as_ref()).as_deref(),
        );
        let (state, history) = p
            .solve(&self.gamma, &g, Some(&self.u), self.history.as_ref())
            .map_err(|e| e.at_step(k))?;
        self.gamma = self.gamma.union_with_jump(&state.jump)?;
        self.u = state.u.clone();
        if history.is_some() {
            self.history = history;
        }
        let work_cum = self.trajectory.ledger.last().map_or(0.0, |r| r.work_cum) + work;
        self.record(t, &state, work_cum)?;
        self.next += 1;
        Ok(true)
    }

    pub fn run_to_end(mut self) -> Result<Trajectory> {
        while self.step()? {}
        Ok(self.trajectory)
    }

    fn record(&mut self, t: f64, state: &DisplacementState, work_cum: f64) -> Result<()> {
        let p = self.problem;
        let rate = p.load.time_derivative(&p.mesh, t)?;
        let theta = power(
            &p.mesh,
            p.density.as_ref(),
            &state.u,
            &rate,
            &self.gamma,
            p.stiffness(self.history.as_ref()).as_deref(),
        );
        let surface_c = self.gamma.measure_c();
        self.trajectory.ledger.push(LedgerRow {
            t,
            bulk: state.bulk,
            surface_c,
            total: state.bulk + surface_c,
            theta,
            work_cum,
        });
        self.trajectory.knots.push(Knot {
            t,
            broken: self.gamma.to_vec(),
            u: state.u.clone(),
        });
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            times: self.grid.times().to_vec(),
            next: self.next,
            history: self.history.clone(),
            trajectory: self.trajectory.clone(),
        }
    }

    pub fn from_checkpoint(problem: &'p Problem, cp: Checkpoint) -> Result<Self> {
        if cp.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: cp.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let grid = TimeGrid::from_times(cp.times)?;
        let knots = &cp.trajectory.knots;
        let consistent = cp.next >= 1
            && cp.next <= grid.times().len()
            && knots.len() == cp.next
            && cp.trajectory.ledger.len() == cp.next
            && knots.iter().zip(grid.times()).all(|(k, &t)| k.t == t);
        if !consistent {
            return Err(Error::InvalidInput("checkpoint is internally inconsistent".into()));
        }
        let last = knots.last().unwrap();
        let gamma = CrackSet::from_bonds(&problem.mesh, last.broken.iter().copied())?;
        if !problem.initial.is_subset(&gamma) {
            return Err(Error::InvalidInput("checkpoint crack does not contain Γ₀".into()));
        }
        let expected_nodes = problem.mesh.node_count() * problem.load.components();
        if last.u.values.len() != expected_nodes {
            return Err(Error::InvalidInput("checkpoint belongs to a different mesh".into()));
        }
        let history = match problem.options.backend {
            Backend::Exact => None,
            Backend::Altmin => Some(cp.history.ok_or_else(|| {
                Error::InvalidInput("altmin checkpoint lacks a phase history".into())
            })?),
        };
        Ok(Evolution {
            problem,
            grid,
            next: cp.next,
            gamma,
            u: last.u.clone(),
            history,
            trajectory: cp.trajectory,
        })
    }
}

/// Runs every knot of `grid`.
pub fn evolve(problem: &Problem, grid: TimeGrid) -> Result<Trajectory> {
    Evolution::new(problem, grid)?.run_to_end()
}

fn for_unbroken_bonds(
    mesh: &Mesh,
    gamma: &CrackSet,
    mut f: impl FnMut(usize, usize, usize, usize, f64),
) {
    for (id, bond) in mesh.interior_bonds() {
        if gamma.contains(id) {
            continue;
        }
        let BondKind::Interior { a, b, axis } = bond.kind else {
            unreachable!()
        };
        f(id, a, b, axis, bond.elastic_weight);
    }
}

/// Exact energy change of `u + (g_next − g_prev)` over bonds outside `Γ`.
pub fn work_increment(
    mesh: &Mesh,
    density: &dyn BulkDensity,
    u: &NodalField,
    g_prev: &NodalField,
    g_next: &NodalField,
    gamma: &CrackSet,
    stiffness: Option<&[f64]>,
) -> f64 {
    let dim = mesh.dim();
    let m = u.components;
    let mut shifted = u.clone();
    for ((s, a), b) in shifted.values.iter_mut().zip(&g_prev.values).zip(&g_next.values) {
        *s += b - a;
    }
    let mut xi = vec![0.0; m * dim];
    let mut xs = vec![0.0; m * dim];
    let mut total = 0.0;
    for_unbroken_bonds(mesh, gamma, |id, a, b, axis, w| {
        bond_gradient(u, a, b, axis, dim, mesh.h(), &mut xi);
        bond_gradient(&shifted, a, b, axis, dim, mesh.h(), &mut xs);
        let s = stiffness.map_or(1.0, |s| s[id]);
        total += w * s * (density.w(&xs) - density.w(&xi));
    });
    total
}

/// `θ = Σ w_b s_b DW(ξ_b(u)) : ξ_b(ġ)` over bonds outside `Γ`.
pub fn power(
    mesh: &Mesh,
    density: &dyn BulkDensity,
    u: &NodalField,
    rate: &NodalField,
    gamma: &CrackSet,
    stiffness: Option<&[f64]>,
) -> f64 {
    let dim = mesh.dim();
    let m = u.components;
    let mut xi = vec![0.0; m * dim];
    let mut xr = vec![0.0; m * dim];
    let mut dw = vec![0.0; m * dim];
    let mut total = 0.0;
    for_unbroken_bonds(mesh, gamma, |id, a, b, axis, w| {
        bond_gradient(u, a, b, axis, dim, mesh.h(), &mut xi);
        bond_gradient(rate, a, b, axis, dim, mesh.h(), &mut xr);
        density.dw(&xi, &mut dw);
        let s = stiffness.map_or(1.0, |s| s[id]);
        total += w * s * dw.iter().zip(&xr).map(|(d, r)| d * r).sum::<f64>();
    });
    total
}

/// Largest excess of `total_k` (and of `surface_c,k`) over
/// `total_0 + work_cum_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub max_excess: f64,
    pub worst_row: usize,
    pub surface_excess: f64,
}

impl InequalityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_excess <= tol && self.surface_excess <= tol
    }
}

pub fn check_energy_inequality(ledger: &[LedgerRow]) -> InequalityReport {
    let mut report = InequalityReport {
        max_excess: f64::NEG_INFINITY,
        worst_row: 0,
        surface_excess: f64::NEG_INFINITY,
    };
    let Some(first) = ledger.first() else {
        return report;
    };
    for (k, r) in ledger.iter().enumerate() {
        let budget = first.total + r.work_cum;
        if r.total - budget > report.max_excess {
            report.max_excess = r.total - budget;
            report.worst_row = k;
        }
        report.surface_excess = report.surface_excess.max(r.surface_c - budget);
    }
    report
}

/// `max_k |total_k − total_0 − Σ_{j<k} θ_j (t_{j+1} − t_j)|`.
pub fn energy_balance_residual(ledger: &[LedgerRow]) -> f64 {
    balance_terms(ledger).fold(0.0, |m, r| m.max(r.abs()))
}

/// As [`energy_balance_residual`] over the rows before the crack first
/// grows beyond its initial measure.
pub fn pre_crack_balance_residual(ledger: &[LedgerRow]) -> f64 {
    let Some(first) = ledger.first() else {
        return 0.0;
    };
    let end = ledger
        .iter()
        .position(|r| r.surface_c > first.surface_c)
        .unwrap_or(ledger.len());
    energy_balance_residual(&ledger[..end])
}

fn balance_terms(ledger: &[LedgerRow]) -> impl Iterator<Item = f64> + '_ {
    let total0 = ledger.first().map_or(0.0, |r| r.total);
    let mut acc = 0.0;
    ledger.iter().enumerate().map(move |(k, r)| {
        if k > 0 {
            let p = &ledger[k - 1];
            acc += p.theta * (r.t - p.t);
        }
        r.total - total0 - acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyDensity;
    use crate::mesh::AffineField;

    fn bar_problem(n: usize, horizon: f64) -> Problem {
        let mesh = Mesh::build_bar(1.0, n, 1.0).unwrap();
        let load = LoadProgram::ramp(&mesh, AffineField::scalar(0.0, 1.0, 0.0), 1.0, horizon).unwrap();
        let options = StepOptions {
            budget: 200,
            ..Default::default()
        };
        Problem::new(mesh, Arc::new(EnergyDensity::quadratic()), load, options).unwrap()
    }

    #[test]
    fn grids_nest() {
        let coarse = TimeGrid::dyadic(2.0, 25, 0).unwrap();
        let fine = TimeGrid::dyadic(2.0, 25, 3).unwrap();
        for (k, &t) in coarse.times().iter().enumerate() {
            assert_eq!(fine.times()[8 * k], t);
        }
        assert!(TimeGrid::with_step(2.0, 0.3).is_err());
        assert_eq!(TimeGrid::with_step(2.0, 0.01).unwrap().steps(), 200);
    }

    #[test]
    fn bar_cracks_once_after_unit_time() {
        let p = bar_problem(21, 2.0);
        let traj = evolve(&p, TimeGrid::with_step(2.0, 0.01).unwrap()).unwrap();
        let k = traj.first_growth().unwrap();
        assert_eq!(traj.ledger[k].t, 1.01);
        for r in &traj.ledger[..k] {
            assert!((r.total - r.t * r.t).abs() < 1e-8);
        }
        for r in &traj.ledger[k..] {
            assert!((r.total - 1.0).abs() < 1e-8);
        }
        assert!(check_energy_inequality(&traj.ledger).holds(1e-8));
        // Γ never shrinks.
        for w in traj.knots.windows(2) {
            assert!(w[0].broken.iter().all(|b| w[1].broken.contains(b)));
        }
    }

    #[test]
    fn work_matches_pre_crack_energy() {
        let p = bar_problem(11, 1.0);
        let traj = evolve(&p, TimeGrid::uniform(0.9, 9).unwrap()).unwrap();
        for r in &traj.ledger {
            assert!((r.work_cum - r.t * r.t).abs() < 1e-10);
            assert!((r.theta - 2.0 * r.t).abs() < 1e-10);
        }
        // Left-endpoint quadrature of θ = 2t lags by t·Δ.
        let res = energy_balance_residual(&traj.ledger);
        assert!((res - 0.9 * 0.1).abs() < 1e-9, "{res}");
    }

    #[test]
    fn resume_matches_straight_run() {
        let p = bar_problem(11, 2.0);
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let straight = evolve(&p, grid.clone()).unwrap();
        let mut ev = Evolution::new(&p, grid).unwrap();
        for _ in 0..17 {
            ev.step().unwrap();
        }
        let cp = ev.checkpoint();
        let resumed = Evolution::from_checkpoint(&p, cp).unwrap().run_to_end().unwrap();
        assert_eq!(straight, resumed);
    }

    #[test]
    fn unstable_initial_crack_is_rejected() {
        let mesh = Mesh::build_bar(1.0, 11, 1.0).unwrap();
        let load = LoadProgram::new(
            &mesh,
            AffineField::scalar(0.0, 1.0, 0.0),
            AffineField::scalar(0.0, 2.0, 0.0),
            crate::mesh::Schedule::ramp(1.0, 1.0),
            1.0,
        )
        .unwrap();
        let opts = StepOptions {
            budget: 50,
            ..Default::default()
        };
        let p = Problem::new(mesh, Arc::new(EnergyDensity::quadratic()), load, opts).unwrap();
        assert!(matches!(
            Evolution::new(&p, TimeGrid::uniform(1.0, 4).unwrap()),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn checkpoint_version_is_checked() {
        let p = bar_problem(5, 1.0);
        let ev = Evolution::new(&p, TimeGrid::uniform(1.0, 4).unwrap()).unwrap();
        let mut cp = ev.checkpoint();
        cp.format_version = 7;
        assert!(matches!(
            Evolution::from_checkpoint(&p, cp),
            Err(Error::Version { found: 7, .. })
        ));
    }
}
