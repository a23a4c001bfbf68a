//! One step of the incremental problem: minimize bulk energy plus the
//! `H_c` measure of *new* crack, over fields matching the boundary data,
//! given the accumulated crack `Γ_prev`.
//!
//! The exact backend searches crack patterns (subsets of the unbroken
//! candidate bonds) by depth-first branch and bound. For a pattern `S` the
//! energy is `E_el(Γ_prev ∪ S) + Σ_{b∈S} c_b`; since breaking more bonds can
//! only lower the elastic minimum, `Σ_{b∈B} c_b + E_el(Γ_prev ∪ B ∪ R)` bounds
//! every completion of a partial decision `B` with undecided bonds `R`.
//!
//! Global minimizers need not be unique. Ties (energies within
//! [`TIE_REL`] relative) resolve to the smallest new-crack measure, then to
//! the lexicographically smallest sorted bond list.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::crack::CrackSet;
use crate::elastic::{bulk_energy, ElasticOptions, ElasticProblem};
use crate::energy::BulkDensity;
use crate::error::{Error, Result};
use crate::mesh::{BondId, Mesh, NodalField};

/// Relative energy gap below which two crack patterns count as tied.
pub const TIE_REL: f64 = 1e-9;

/// Hard cap on candidate bonds for plain enumeration.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Exact,
    Altmin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub backend: Backend,
    /// Energy tolerance for inner iterative solves.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Maximum number of candidate bonds the exact backend accepts.
    pub budget: usize,
    /// `‖u‖_∞` clamp applied in the scalar case.
    pub truncation: Option<f64>,
    /// Phase-field length `ε` in units of the grid spacing.
    pub at_epsilon_over_h: f64,
    /// Residual stiffness `η` in units of `ε`.
    pub at_eta_over_epsilon: f64,
    /// Bonds with phase field at or below this value count as broken.
    pub v_threshold: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            backend: Backend::Exact,
            tolerance: 1e-8,
            max_iterations: 10_000,
            budget: 20,
            truncation: None,
            at_epsilon_over_h: 4.0,
            at_eta_over_epsilon: 1e-6,
            v_threshold: 0.1,
        }
    }
}

impl StepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance {} must be positive",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if !(self.at_epsilon_over_h >= 2.0 && self.at_epsilon_over_h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "phase-field length must be at least 2h, got {}h",
                self.at_epsilon_over_h
            )));
        }
        if !(self.at_eta_over_epsilon > 0.0 && self.at_eta_over_epsilon < 1e-2) {
            return Err(Error::InvalidInput(
                "residual stiffness must satisfy 0 < η ≪ ε".into(),
            ));
        }
        if !(self.v_threshold > 0.0 && self.v_threshold < 1.0) {
            return Err(Error::InvalidInput("v_threshold must lie in (0, 1)".into()));
        }
        if let Some(b) = self.truncation {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidInput("truncation bound must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn elastic(&self) -> ElasticOptions {
        ElasticOptions {
            max_iterations: self.max_iterations.max(1000) * 4,
            truncation: self.truncation,
        }
    }
}

/// Result of one incremental solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementState {
    pub u: NodalField,
    /// Bonds broken by this solve (not already in `Γ_prev`), sorted.
    pub jump: Vec<BondId>,
    /// Bulk energy of `u` on the updated crack (degraded for the phase field).
    pub bulk: f64,
    /// `H_c` measure of `jump`.
    pub new_surface: f64,
    /// Elliptic surface functional of the phase field (altmin only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface_surrogate: Option<f64>,
}

impl DisplacementState {
    pub fn energy(&self) -> f64 {
        self.bulk + self.new_surface
    }
}

fn tie_tol(e: f64) -> f64 {
    TIE_REL * e.abs().max(1.0)
}

/// An evaluated crack pattern.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Pattern {
    pub energy: f64,
    pub measure: f64,
    /// Sorted bond ids.
    pub bonds: Vec<BondId>,
}

/// Applies the tie rule to a set of evaluated patterns.
pub(crate) fn select(patterns: &[Pattern]) -> Option<&Pattern> {
    let min_e = patterns.iter().map(|p| p.energy).min_by(|a, b| a.total_cmp(b))?;
    let class: Vec<&Pattern> = patterns
        .iter()
        .filter(|p| p.energy <= min_e + tie_tol(min_e))
        .collect();
    let min_m = class.iter().map(|p| p.measure).min_by(|a, b| a.total_cmp(b))?;
    class
        .into_iter()
        .filter(|p| p.measure <= min_m + 1e-12 * min_m.max(1.0))
        .min_by(|a, b| a.bonds.cmp(&b.bonds).then(Ordering::Equal))
}

/// Shared setup for crack-pattern searches.
pub(crate) struct PatternSpace<'a> {
    pub mesh: &'a Mesh,
    pub density: &'a dyn BulkDensity,
    pub boundary: &'a NodalField,
    pub previous: Option<&'a NodalField>,
    pub elastic: ElasticOptions,
    pub base: Vec<bool>,
    pub candidates: Vec<BondId>,
    pub costs: Vec<f64>,
}

impl<'a> PatternSpace<'a> {
    pub fn new(
        mesh: &'a Mesh,
        density: &'a dyn BulkDensity,
        gamma_prev: &CrackSet,
        boundary: &'a NodalField,
        previous: Option<&'a NodalField>,
        elastic: ElasticOptions,
    ) -> Result<Self> {
        check_boundary(mesh, boundary)?;
        let base = gamma_prev.mask();
        if base.len() != mesh.bond_count() {
            return Err(Error::InvalidInput("crack set belongs to a different mesh".into()));
        }
        let candidates: Vec<BondId> = (0..mesh.bond_count())
            .filter(|&b| mesh.is_candidate(b) && !base[b])
            .collect();
        let costs = candidates
            .iter()
            .map(|&b| mesh.bonds()[b].surface_weight)
            .collect();
        Ok(PatternSpace {
            mesh,
            density,
            boundary,
            previous,
            elastic,
            base,
            candidates,
            costs,
        })
    }

    pub fn elastic_energy(&self, mask: &[bool]) -> Result<f64> {
        Ok(self.problem(mask).solve(&self.elastic)?.bulk)
    }

    pub fn problem<'m>(&'m self, mask: &'m [bool]) -> ElasticProblem<'m> {
        ElasticProblem {
            mesh: self.mesh,
            density: self.density,
            broken: mask,
            boundary: self.boundary,
            stiffness: None,
            previous: self.previous,
        }
    }

    /// Energy of breaking the candidates at positions `chosen` (increasing).
    pub fn evaluate(&self, chosen: &[usize]) -> Result<Pattern> {
        let mut mask = self.base.clone();
        let mut cost = 0.0;
        for &i in chosen {
            mask[self.candidates[i]] = true;
            cost += self.costs[i];
        }
        let bulk = self.elastic_energy(&mask)?;
        Ok(Pattern {
            energy: cost + bulk,
            measure: cost,
            bonds: chosen.iter().map(|&i| self.candidates[i]).collect(),
        })
    }

    /// Re-solves the selected pattern into a full state.
    pub fn realize(&self, pattern: &Pattern) -> Result<DisplacementState> {
        let mut mask = self.base.clone();
        for &b in &pattern.bonds {
            mask[b] = true;
        }
        let sol = self.problem(&mask).solve(&self.elastic)?;
        Ok(DisplacementState {
            u: sol.u,
            jump: pattern.bonds.clone(),
            bulk: sol.bulk,
            new_surface: pattern.measure,
            surface_surrogate: None,
        })
    }
}

fn check_boundary(mesh: &Mesh, boundary: &NodalField) -> Result<()> {
    if boundary.components == 0 || boundary.values.len() != mesh.node_count() * boundary.components
    {
        return Err(Error::InvalidInput(
            "boundary field does not match the mesh".into(),
        ));
    }
    Ok(())
}

struct BranchAndBound<'s, 'a> {
    space: &'s PatternSpace<'a>,
    best: f64,
    found: Vec<Pattern>,
    chosen: Vec<usize>,
}

impl BranchAndBound<'_, '_> {
    fn prune_above(&self) -> f64 {
        // Twice the tie tolerance: one for ties, one for solver rounding in
        // the bound.
        self.best + 2.0 * tie_tol(self.best)
    }

    fn record(&mut self, p: Pattern) {
        if p.energy <= self.best + tie_tol(self.best) {
            if p.energy < self.best {
                self.best = p.energy;
                let cut = self.best + tie_tol(self.best);
                self.found.retain(|q| q.energy <= cut);
            }
            self.found.push(p);
        }
    }

    fn visit(&mut self, depth: usize, cost: f64) -> Result<()> {
        if cost > self.prune_above() {
            return Ok(());
        }
        let k = self.space.candidates.len();
        if depth == k {
            let p = self.space.evaluate(&self.chosen)?;
            self.record(p);
            return Ok(());
        }
        let mut mask = self.space.base.clone();
        for &i in &self.chosen {
            mask[self.space.candidates[i]] = true;
        }
        for &b in &self.space.candidates[depth..] {
            mask[b] = true;
        }
        let lower = cost + self.space.elastic_energy(&mask)?;
        if lower > self.prune_above() {
            return Ok(());
        }
        self.visit(depth + 1, cost)?;
        self.chosen.push(depth);
        let r = self.visit(depth + 1, cost + self.space.costs[depth]);
        self.chosen.pop();
        r
    }
}

/// Exact global minimizer of the incremental problem over all crack
/// patterns of the unbroken candidate bonds.
///
/// `previous` supplies the values assigned to components that end up
/// detached from every pinned node.
pub fn solve_step_exact(
    mesh: &Mesh,
    density: &dyn BulkDensity,
    gamma_prev: &CrackSet,
    boundary: &NodalField,
    previous: Option<&NodalField>,
    opts: &StepOptions,
) -> Result<DisplacementState> {
    opts.validate()?;
    let space = PatternSpace::new(mesh, density, gamma_prev, boundary, previous, opts.elastic())?;
    if space.candidates.len() > opts.budget {
        return Err(Error::BudgetExceeded {
            candidates: space.candidates.len(),
            budget: opts.budget,
        });
    }
    let mut search = BranchAndBound {
        space: &space,
        best: f64::INFINITY,
        found: Vec::new(),
        chosen: Vec::new(),
    };
    // Seed the incumbent with the no-new-crack pattern.
    let none = space.evaluate(&[])?;
    search.best = none.energy;
    search.visit(0, 0.0)?;
    let winner = select(&search.found).cloned().unwrap_or(none);
    space.realize(&winner)
}

/// Re-minimizes with the crack fixed to `Γ_prev ∪ jump` and returns
/// `energy(state) − energy(re-solve)`, both measured with the surface term
/// that vanishes on the fixed crack.
pub fn verify_own_jump_minimality(
    mesh: &Mesh,
    density: &dyn BulkDensity,
    state: &DisplacementState,
    gamma_prev: &CrackSet,
    boundary: &NodalField,
    opts: &StepOptions,
) -> Result<f64> {
    let gamma = gamma_prev.union_with_jump(&state.jump)?;
    let mask = gamma.mask();
    let own = bulk_energy(mesh, density, &state.u, &mask, None);
    let resolved = ElasticProblem {
        mesh,
        density,
        broken: &mask,
        boundary,
        stiffness: None,
        previous: Some(&state.u),
    }
    .solve(&opts.elastic())?;
    Ok(own - resolved.bulk)
}
