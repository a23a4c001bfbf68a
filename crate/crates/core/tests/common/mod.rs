//! Random small problems for fuzzing.
#![allow(dead_code)]

use std::sync::Arc;

use fracture_qs::crack::CrackSet;
use fracture_qs::energy::{BulkDensity, EnergyDensity};
use fracture_qs::evolution::{Problem, TimeGrid};
use fracture_qs::mesh::{AffineField, BoundaryKind, BoundarySpec, LoadProgram, Mesh, Schedule};
use fracture_qs::solver::StepOptions;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn bar(n: usize, budget: usize) -> Problem {
    let mesh = Mesh::build_bar(1.0, n, 1.0).unwrap();
    let load = LoadProgram::ramp(&mesh, AffineField::scalar(0.0, 1.0, 0.0), 1.0, 2.0).unwrap();
    let opts = StepOptions {
        budget,
        ..Default::default()
    };
    Problem::new(mesh, Arc::new(EnergyDensity::quadratic()), load, opts).unwrap()
}

fn kind(r: &mut ChaCha8Rng, p_dirichlet: f64) -> BoundaryKind {
    if r.gen_bool(p_dirichlet) {
        BoundaryKind::Dirichlet
    } else {
        BoundaryKind::Free
    }
}

pub fn random_density(r: &mut ChaCha8Rng) -> Arc<dyn BulkDensity> {
    match r.gen_range(0..3) {
        0 => Arc::new(EnergyDensity::quadratic()),
        1 => Arc::new(EnergyDensity::scaled_quadratic(r.gen_range(0.5..3.0), None).unwrap()),
        _ => Arc::new(
            EnergyDensity::p_power(r.gen_range(1.5..3.0), r.gen_range(0.5..2.0), None).unwrap(),
        ),
    }
}

pub fn random_mesh(r: &mut ChaCha8Rng) -> Mesh {
    let kappa = r.gen_range(0.2..2.0);
    if r.gen_bool(0.6) {
        let spec = BoundarySpec {
            left: kind(r, 0.85),
            right: kind(r, 0.85),
            ..Default::default()
        };
        Mesh::build_bar_with(r.gen_range(0.5..2.0), r.gen_range(2..=8), kappa, spec).unwrap()
    } else {
        let spec = BoundarySpec {
            left: kind(r, 0.5),
            right: kind(r, 0.5),
            bottom: kind(r, 0.5),
            top: kind(r, 0.5),
        };
        let height = if r.gen_bool(0.5) { 0.5 } else { 1.0 };
        Mesh::build_rect(1.0, height, 0.5, None, spec, kappa).unwrap()
    }
}

/// Ghost-free meshes are retried, since they admit only zero loads.
pub fn random_problem(r: &mut ChaCha8Rng, budget: usize) -> (Problem, TimeGrid) {
    loop {
        let mesh = random_mesh(r);
        if !mesh.has_dirichlet_boundary() {
            continue;
        }
        let m = if r.gen_bool(0.2) { 2 } else { 1 };
        let coeffs: Vec<[f64; 3]> = (0..m)
            .map(|_| {
                [
                    r.gen_range(-1.0..1.0),
                    r.gen_range(-2.0..2.0),
                    r.gen_range(-2.0..2.0),
                ]
            })
            .collect();
        let horizon = 1.0;
        let mut knots = vec![(0.0, 0.0)];
        let mut t = 0.0;
        for _ in 0..r.gen_range(1..4) {
            t += r.gen_range(0.1..0.5);
            if t >= horizon {
                break;
            }
            knots.push((t, r.gen_range(-1.5..1.5)));
        }
        knots.push((horizon, r.gen_range(-1.5..1.5)));
        let load = LoadProgram::new(
            &mesh,
            AffineField::new(coeffs).unwrap(),
            AffineField::zero(m),
            Schedule::new(knots).unwrap(),
            horizon,
        )
        .unwrap();
        let gamma0: Vec<usize> = (0..mesh.interior_count())
            .filter(|_| r.gen_bool(0.15))
            .collect();
        let gamma0 = CrackSet::from_bonds(&mesh, gamma0).unwrap();
        let opts = StepOptions {
            budget,
            ..Default::default()
        };
        let density = random_density(r);
        let problem = Problem::new(mesh, density, load, opts)
            .unwrap()
            .with_initial(gamma0)
            .unwrap();
        let grid = TimeGrid::uniform(horizon, r.gen_range(3..=8)).unwrap();
        return (problem, grid);
    }
}

pub fn candidates(mesh: &Mesh, gamma: &CrackSet) -> usize {
    (0..mesh.bond_count())
        .filter(|&b| mesh.is_candidate(b) && !gamma.contains(b))
        .count()
}
