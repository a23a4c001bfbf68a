//! The irreversible crack set `Γ` as a finite set of broken bonds.
//!
//! Set operations are exact, so inclusion between crack sets is decided
//! without tolerance. Measures sum bond surface weights in id order, so two
//! equal sets always report bit-identical measures.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BondId, Mesh};

#[derive(Debug)]
struct SurfaceTable {
    weight: Vec<f64>,
    free: Vec<bool>,
}

#[derive(Clone)]
pub struct CrackSet {
    table: Arc<SurfaceTable>,
    broken: BTreeSet<BondId>,
}

impl CrackSet {
    pub fn empty(mesh: &Mesh) -> Self {
        let table = SurfaceTable {
            weight: mesh.bonds().iter().map(|b| b.surface_weight).collect(),
            free: mesh.bonds().iter().map(|b| b.on_free_boundary()).collect(),
        };
        CrackSet {
            table: Arc::new(table),
            broken: BTreeSet::new(),
        }
    }

    pub fn from_bonds(mesh: &Mesh, bonds: impl IntoIterator<Item = BondId>) -> Result<Self> {
        let empty = Self::empty(mesh);
        let ids: Vec<BondId> = bonds.into_iter().collect();
        empty.union_with_jump(&ids)
    }

    /// `Γ₀` made of the mesh's pre-broken (notch) bonds.
    pub fn initial(mesh: &Mesh) -> Self {
        let mut s = Self::empty(mesh);
        s.broken.extend(mesh.prebroken().iter().copied());
        s
    }

    /// `Γ ∪ jump` as a new set; `self` is left untouched.
    pub fn union_with_jump(&self, jump: &[BondId]) -> Result<CrackSet> {
        if let Some(bad) = jump.iter().find(|&&b| b >= self.table.weight.len()) {
            return Err(Error::InvalidInput(format!(
                "bond {bad} does not exist (mesh has {} bonds)",
                self.table.weight.len()
            )));
        }
        let mut broken = self.broken.clone();
        broken.extend(jump.iter().copied());
        Ok(CrackSet {
            table: Arc::clone(&self.table),
            broken,
        })
    }

    pub fn contains(&self, bond: BondId) -> bool {
        self.broken.contains(&bond)
    }

    pub fn len(&self) -> usize {
        self.broken.len()
    }

    pub fn is_empty(&self) -> bool {
        self.broken.is_empty()
    }

    /// Broken bonds in increasing id order.
    pub fn iter(&self) -> impl Iterator<Item = BondId> + '_ {
        self.broken.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<BondId> {
        self.iter().collect()
    }

    pub fn is_subset(&self, other: &CrackSet) -> bool {
        self.broken.is_subset(&other.broken)
    }

    /// `H^{N−1}(Γ)`.
    pub fn measure(&self) -> f64 {
        self.iter().map(|b| self.table.weight[b]).sum()
    }

    /// `H_c^{N−1}(Γ) = H^{N−1}(Γ \ ∂Ω_f)`.
    pub fn measure_c(&self) -> f64 {
        self.iter()
            .filter(|&b| !self.table.free[b])
            .map(|b| self.table.weight[b])
            .sum()
    }

    /// Dense membership mask over all mesh bonds.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.table.weight.len()];
        for b in self.iter() {
            m[b] = true;
        }
        m
    }
}

impl PartialEq for CrackSet {
    fn eq(&self, other: &Self) -> bool {
        self.broken == other.broken
    }
}

impl Eq for CrackSet {}

impl fmt::Debug for CrackSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.broken.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{BondKind, BoundaryKind, BoundarySpec, Notch};
    use proptest::prelude::*;

    fn bar() -> Mesh {
        Mesh::build_bar(1.0, 6, 1.0).unwrap()
    }

    #[test]
    fn union_basics() {
        let m = bar();
        let g = CrackSet::empty(&m);
        let g2 = g.union_with_jump(&[3]).unwrap();
        assert_eq!(g2.to_vec(), vec![3]);
        assert!(g.is_empty());
        let g3 = g2.union_with_jump(&[3]).unwrap();
        assert_eq!(g3.measure(), g2.measure());
        assert!(matches!(g.union_with_jump(&[99]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn measures() {
        let m = bar();
        let g = CrackSet::empty(&m);
        assert_eq!((g.measure(), g.measure_c()), (0.0, 0.0));

        let two = Mesh::build_bar(1.0, 2, 1.0).unwrap();
        let all = CrackSet::from_bonds(&two, 0..3).unwrap();
        assert_eq!((all.measure(), all.measure_c()), (3.0, 3.0));

        let rect = Mesh::build_rect(
            1.0,
            1.0,
            0.5,
            None,
            BoundarySpec {
                top: BoundaryKind::Free,
                ..Default::default()
            },
            1.0,
        )
        .unwrap();
        let facet = rect
            .bonds()
            .iter()
            .position(|b| matches!(b.kind, BondKind::Facet { .. }))
            .unwrap();
        let g = CrackSet::from_bonds(&rect, [facet]).unwrap();
        assert_eq!(g.measure(), rect.bonds()[facet].surface_weight);
        assert_eq!(g.measure_c(), 0.0);
    }

    #[test]
    fn tip_extension_adds_one_facet() {
        let h = 0.25;
        let notch = Notch {
            start: [0.0, 0.375],
            end: [0.125, 0.375],
        };
        let m = Mesh::build_rect(1.0, 1.0, h, Some(notch), BoundarySpec::default(), 2.0).unwrap();
        let g0 = CrackSet::initial(&m);
        // The next vertical bond along the notch line.
        let tip = m
            .cross_section(1, 0.375)
            .into_iter()
            .find(|b| !g0.contains(*b))
            .unwrap();
        let g1 = g0.union_with_jump(&[tip]).unwrap();
        assert_eq!(g1.measure() - g0.measure(), h * 2.0);
    }

    proptest! {
        #[test]
        fn union_laws(a in proptest::collection::vec(0usize..12, 0..8),
                      b in proptest::collection::vec(0usize..12, 0..8),
                      c in proptest::collection::vec(0usize..12, 0..8)) {
            let m = Mesh::build_rect(1.0, 1.0, 0.5, None,
                BoundarySpec { left: BoundaryKind::Free, ..Default::default() }, 1.0).unwrap();
            let base = CrackSet::from_bonds(&m, c).unwrap();
            let ab = base.union_with_jump(&a).unwrap().union_with_jump(&b).unwrap();
            let ba = base.union_with_jump(&b).unwrap().union_with_jump(&a).unwrap();
            prop_assert_eq!(&ab, &ba);
            prop_assert_eq!(ab.union_with_jump(&a).unwrap(), ab.clone());
            prop_assert!(base.is_subset(&ab));
            prop_assert!(base.measure() <= ab.measure());
            prop_assert!(ab.measure_c() <= ab.measure());
        }
    }
}
