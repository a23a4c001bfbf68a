//! Independent references and trajectory auditing.
//!
//! [`BarOracle`] is the closed-form evolution of a 1D bar under a ramp.
//! [`brute_force_step`] enumerates every crack pattern without pruning.
//! [`verify_trajectory`] re-derives each recorded quantity from the
//! trajectory alone and reports what does not match.

use rayon::prelude::*;

use crate::crack::CrackSet;
use crate::elastic::bulk_energy;
use crate::energy::BulkDensity;
use crate::error::{Error, Result};
use crate::evolution::{check_energy_inequality, LedgerRow, Problem, Trajectory};
use crate::mesh::{Mesh, NodalField};
use crate::solver::{
    select, verify_own_jump_minimality, Backend, DisplacementState, Pattern, PatternSpace,
    StepOptions, ENUMERATION_CAP,
};

/// Bar `[0, L]` with `u(0) = 0`, `u(L) = rate·t` and `W(ξ) = |ξ|²`.
///
/// The elastic energy `(rate·t)²/L` competes with a single cut of cost `κ`,
/// so the bar breaks once at `t* = √(κL)/rate` and carries no energy but
/// `κ` afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarOracle {
    pub length: f64,
    pub kappa: f64,
    pub rate: f64,
    pub horizon: f64,
}

impl BarOracle {
    pub fn new(length: f64, kappa: f64, rate: f64, horizon: f64) -> Result<Self> {
        for (name, v) in [("L", length), ("kappa", kappa), ("T", horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} = {v} must be positive")));
            }
        }
        if !rate.is_finite() {
            return Err(Error::InvalidInput(format!("rate {rate} must be finite")));
        }
        Ok(BarOracle {
            length,
            kappa,
            rate,
            horizon,
        })
    }

    /// `None` when the bar survives the whole horizon.
    pub fn crack_time(&self) -> Option<f64> {
        if self.rate == 0.0 {
            return None;
        }
        let t = (self.kappa * self.length).sqrt() / self.rate.abs();
        (t < self.horizon).then_some(t)
    }

    fn elastic(&self, t: f64) -> f64 {
        let g = self.rate * t;
        g * g / self.length
    }

    /// `(bulk, surface)` at `t`. At `t*` both states tie; the uncracked one
    /// is reported.
    pub fn energies(&self, t: f64) -> (f64, f64) {
        match self.crack_time() {
            Some(c) if t > c => (0.0, self.kappa),
            _ => (self.elastic(t), 0.0),
        }
    }

    pub fn total(&self, t: f64) -> f64 {
        let (b, s) = self.energies(t);
        b + s
    }

    /// First knot at which a time-discrete evolution on `times` breaks:
    /// the first `t_k` whose elastic energy strictly exceeds `κ`.
    pub fn discrete_crack_time(&self, times: &[f64]) -> Option<f64> {
        times.iter().copied().find(|&t| self.elastic(t) > self.kappa)
    }
}

/// Time of the first knot where the crack grows beyond `Γ₀`.
pub fn bar_crack_time(trajectory: &Trajectory) -> Option<f64> {
    trajectory.first_growth().map(|k| trajectory.knots[k].t)
}

/// Global minimizer by plain enumeration of all `2^K` patterns, resolved
/// with the same tie rule as the exact backend. `K` may not exceed
/// [`ENUMERATION_CAP`].
pub fn brute_force_step(
    mesh: &Mesh,
    density: &dyn BulkDensity,
    gamma_prev: &CrackSet,
    boundary: &NodalField,
    previous: Option<&NodalField>,
    opts: &StepOptions,
) -> Result<DisplacementState> {
    let space = PatternSpace::new(mesh, density, gamma_prev, boundary, previous, opts.elastic())?;
    let k = space.candidates.len();
    if k > ENUMERATION_CAP {
        return Err(Error::BudgetExceeded {
            candidates: k,
            budget: ENUMERATION_CAP,
        });
    }
    let patterns: Vec<Pattern> = (0..1u32 << k)
        .into_par_iter()
        .map(|bits| {
            let chosen: Vec<usize> = (0..k).filter(|&i| bits >> i & 1 == 1).collect();
            space.evaluate(&chosen)
        })
        .collect::<Result<_>>()?;
    let winner = select(&patterns).expect("at least the empty pattern");
    space.realize(winner)
}

/// One audited property of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, name: &'static str, failure: Option<String>) {
        self.checks.push(Check {
            name,
            passed: failure.is_none(),
            detail: failure.unwrap_or_else(|| "ok".into()),
        });
    }
}

/// Tolerance for the energy inequality and minimality residuals.
pub const VERIFY_TOL: f64 = 1e-8;

/// Knots with at most this many candidates are re-solved by enumeration.
pub const VERIFY_ENUMERATION_LIMIT: usize = 12;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Audits a trajectory against `problem`.
///
/// Structural checks (knot order, bond ids, irreversibility, ledger
/// arithmetic, boundary data, surface measure) apply to both backends.
/// Exact-backend trajectories are also checked for the energy inequality,
/// recomputed bulk energies, own-jump minimality and, where the candidate
/// count allows, global minimality of every step by enumeration.
pub fn verify_trajectory(problem: &Problem, traj: &Trajectory) -> Result<VerifyReport> {
    let mesh = &problem.mesh;
    let mut report = VerifyReport::default();
    let knots = &traj.knots;
    let ledger = &traj.ledger;

    let order = if knots.is_empty() {
        Some("trajectory has no knots".to_string())
    } else if knots[0].t != 0.0 {
        Some(format!("first knot at t = {} instead of 0", knots[0].t))
    } else {
        knots
            .windows(2)
            .position(|w| w[1].t <= w[0].t)
            .map(|k| format!("knot {} does not advance time", k + 1))
    };
    report.push("knot order", order);
    if knots.is_empty() {
        return Ok(report);
    }

    let ids = knots.iter().enumerate().find_map(|(k, knot)| {
        let sorted = knot.broken.windows(2).all(|w| w[0] < w[1]);
        let in_range = knot.broken.iter().all(|&b| b < mesh.bond_count());
        let sized = knot.u.values.len() == mesh.node_count() * problem.load.components()
            && knot.u.components == problem.load.components();
        (!(sorted && in_range && sized)).then(|| format!("knot {k} has malformed bonds or field"))
    });
    report.push("knot records", ids.clone());
    if ids.is_some() {
        return Ok(report);
    }

    let sets: Vec<CrackSet> = knots
        .iter()
        .map(|k| CrackSet::from_bonds(mesh, k.broken.iter().copied()))
        .collect::<Result<_>>()?;
    let irrev = if !problem.initial.is_subset(&sets[0]) {
        Some("Γ at t = 0 does not contain Γ₀".into())
    } else {
        sets.windows(2).enumerate().find_map(|(k, w)| {
            (!w[0].is_subset(&w[1])).then(|| {
                let lost: Vec<_> = w[0].iter().filter(|b| !w[1].contains(*b)).collect();
                format!("bonds {lost:?} heal between knots {k} and {}", k + 1)
            })
        })
    };
    report.push("irreversibility", irrev);

    let shape = if ledger.len() != knots.len() {
        Some(format!("{} ledger rows for {} knots", ledger.len(), knots.len()))
    } else {
        ledger
            .iter()
            .zip(knots)
            .position(|(r, k)| r.t != k.t)
            .map(|k| format!("ledger row {k} has a different time than its knot"))
    };
    report.push("ledger alignment", shape.clone());

    let arithmetic = ledger.iter().enumerate().find_map(|(k, r)| {
        let values = [r.t, r.bulk, r.surface_c, r.total, r.theta, r.work_cum];
        if values.iter().any(|v| !v.is_finite()) {
            return Some(format!("row {k} has a non-finite entry"));
        }
        (!close(r.total, r.bulk + r.surface_c, 1e-12))
            .then(|| format!("row {k}: total {} ≠ bulk + surface_c", r.total))
    });
    report.push("ledger arithmetic", arithmetic);

    if shape.is_none() {
        let surface = ledger.iter().zip(&sets).enumerate().find_map(|(k, (r, g))| {
            (!close(r.surface_c, g.measure_c(), 1e-12)).then(|| {
                format!("row {k}: surface_c {} but Γ measures {}", r.surface_c, g.measure_c())
            })
        });
        report.push("surface measure", surface);
    }

    let mut bc = None;
    for (k, (knot, g)) in knots.iter().zip(&sets).enumerate() {
        let data = problem.load.boundary_values(mesh, knot.t)?;
        for (id, node) in mesh.ghost_bonds() {
            if g.contains(id) {
                continue;
            }
            let m = data.components;
            for c in 0..m {
                let (have, want) = (knot.u.at(node, c), data.at(node, c));
                if !close(have, want, 1e-12) {
                    bc = Some(format!("knot {k}: node {node} has {have}, boundary data {want}"));
                }
            }
        }
        if bc.is_some() {
            break;
        }
    }
    report.push("boundary data", bc);

    if let Some(bound) = problem.options.truncation {
        let over = knots
            .iter()
            .position(|k| k.u.sup_norm() > bound)
            .map(|k| format!("knot {k} exceeds the truncation bound {bound}"));
        report.push("truncation", over);
    }

    if problem.options.backend == Backend::Exact && shape.is_none() {
        verify_exact(problem, traj, &sets, &mut report)?;
    }
    Ok(report)
}

fn verify_exact(
    problem: &Problem,
    traj: &Trajectory,
    sets: &[CrackSet],
    report: &mut VerifyReport,
) -> Result<()> {
    let mesh = &problem.mesh;
    let density = problem.density.as_ref();
    let opts = &problem.options;

    let ineq = check_energy_inequality(&traj.ledger);
    report.push(
        "energy inequality",
        (!ineq.holds(VERIFY_TOL)).then(|| {
            format!(
                "total exceeds total(0) + work by {:e} at row {}; surface excess {:e}",
                ineq.max_excess, ineq.worst_row, ineq.surface_excess
            )
        }),
    );

    let bulk = traj
        .knots
        .iter()
        .zip(&traj.ledger)
        .zip(sets)
        .enumerate()
        .find_map(|(k, ((knot, row), g))| {
            let e = bulk_energy(mesh, density, &knot.u, &g.mask(), None);
            (!close(e, row.bulk, 1e-9)).then(|| format!("row {k}: bulk {} recomputes to {e}", row.bulk))
        });
    report.push("bulk energy", bulk);

    let mut own = None;
    let mut global = None;
    let mut enumerated = 0usize;
    for k in 0..traj.knots.len() {
        let knot = &traj.knots[k];
        let prev_set = if k == 0 { &problem.initial } else { &sets[k - 1] };
        let jump: Vec<_> = sets[k].iter().filter(|b| !prev_set.contains(*b)).collect();
        let data = problem.load.boundary_values(mesh, knot.t)?;
        let row: &LedgerRow = &traj.ledger[k];
        let state = DisplacementState {
            u: knot.u.clone(),
            jump: jump.clone(),
            bulk: row.bulk,
            new_surface: 0.0,
            surface_surrogate: None,
        };
        let r = verify_own_jump_minimality(mesh, density, &state, prev_set, &data, opts)?;
        if own.is_none() && r > VERIFY_TOL {
            own = Some(format!("knot {k}: displacement is {r:e} above the minimum on its crack"));
        }
        let candidates = (0..mesh.bond_count())
            .filter(|&b| mesh.is_candidate(b) && !prev_set.contains(b))
            .count();
        if global.is_none() && candidates <= VERIFY_ENUMERATION_LIMIT {
            enumerated += 1;
            let previous = (k > 0).then(|| &traj.knots[k - 1].u);
            let best = brute_force_step(mesh, density, prev_set, &data, previous, opts)?;
            let recorded: f64 = row.bulk + (sets[k].measure_c() - prev_set.measure_c());
            if best.jump != jump || !close(best.energy(), recorded, 1e-9) {
                global = Some(format!(
                    "knot {k}: enumeration finds {:?} with energy {}, trajectory has {:?} with {}",
                    best.jump,
                    best.energy(),
                    jump,
                    recorded
                ));
            }
        }
    }
    report.push("own-jump minimality", own);
    if enumerated > 0 || global.is_some() {
        report.push("global minimality", global);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::EnergyDensity;
    use crate::evolution::{evolve, TimeGrid};
    use crate::mesh::{AffineField, LoadProgram};
    use crate::solver::solve_step_exact;
    use std::sync::Arc;

    #[test]
    fn bar_oracle_formulae() {
        let o = BarOracle::new(1.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(o.crack_time(), Some(1.0));
        assert_eq!(o.total(0.5), 0.25);
        assert_eq!(o.total(1.0), 1.0);
        assert_eq!(o.energies(1.5), (0.0, 1.0));
        let times: Vec<f64> = (0..=200).map(|k| 2.0 * k as f64 / 200.0).collect();
        assert_eq!(o.discrete_crack_time(&times), Some(1.01));
        let slow = BarOracle::new(4.0, 1.0, 1.0, 1.5).unwrap();
        assert_eq!(slow.crack_time(), None);
    }

    #[test]
    fn brute_force_agrees_on_a_small_bar() {
        let mesh = Mesh::build_bar(1.0, 6, 1.0).unwrap();
        let load = LoadProgram::ramp(&mesh, AffineField::scalar(0.0, 1.0, 0.0), 1.0, 3.0).unwrap();
        let w = EnergyDensity::quadratic();
        let opts = StepOptions::default();
        for t in [0.2, 0.99, 1.0, 1.3, 2.5] {
            let g = load.boundary_values(&mesh, t).unwrap();
            let gamma = CrackSet::empty(&mesh);
            let a = solve_step_exact(&mesh, &w, &gamma, &g, None, &opts).unwrap();
            let b = brute_force_step(&mesh, &w, &gamma, &g, None, &opts).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn verify_flags_healing() {
        let mesh = Mesh::build_bar(1.0, 6, 1.0).unwrap();
        let load = LoadProgram::ramp(&mesh, AffineField::scalar(0.0, 1.0, 0.0), 1.0, 2.0).unwrap();
        let p = Problem::new(
            mesh,
            Arc::new(EnergyDensity::quadratic()),
            load,
            StepOptions::default(),
        )
        .unwrap();
        let mut traj = evolve(&p, TimeGrid::uniform(2.0, 8).unwrap()).unwrap();
        let report = verify_trajectory(&p, &traj).unwrap();
        assert!(report.passed(), "{:?}", report.failures().collect::<Vec<_>>());
        let last = traj.knots.len() - 1;
        traj.knots[last].broken.clear();
        let report = verify_trajectory(&p, &traj).unwrap();
        assert!(report.failures().any(|c| c.name == "irreversibility"));
    }
}
