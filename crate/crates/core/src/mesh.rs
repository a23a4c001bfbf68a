//! Lattice discretization of the domain and the boundary displacement program.
//!
//! Nodes sit on a uniform vertex-centered grid with spacing `h`. Every
//! breakable entity is a *bond* with a stable integer id:
//!
//! * interior bonds join grid neighbours and carry the bulk energy; each
//!   one is dual to a facet of length `h^(N−1)` (half that along the
//!   boundary), which is its surface weight,
//! * ghost bonds pin a boundary node on `∂Ω_d` to the imposed displacement;
//!   breaking one debonds the node at the cost of its boundary facet,
//! * facet bonds mark the traction-free boundary `∂Ω_f`. They carry no
//!   constraint and are excluded from the surface term `H_c`.
//!
//! Ids are assigned interior first (horizontal then vertical, row-major),
//! then ghosts, then facets. All surface weights are multiplied by the
//! toughness `κ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BondId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    #[default]
    Dirichlet,
    Free,
}

/// Assignment of each side of the rectangle (or each end of the bar) to
/// `∂Ω_d` or `∂Ω_f`. Sides are closed segments, so any union of them is
/// closed in the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundarySpec {
    pub left: BoundaryKind,
    pub right: BoundaryKind,
    pub bottom: BoundaryKind,
    pub top: BoundaryKind,
}

impl BoundarySpec {
    pub fn all(kind: BoundaryKind) -> Self {
        BoundarySpec {
            left: kind,
            right: kind,
            bottom: kind,
            top: kind,
        }
    }

    pub fn kind(&self, side: Side) -> BoundaryKind {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
            Side::Bottom => self.bottom,
            Side::Top => self.top,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BondKind {
    /// Joins nodes `a < b` along coordinate `axis`.
    Interior { a: usize, b: usize, axis: usize },
    Ghost { node: usize, side: Side },
    Facet { node: usize, side: Side },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub kind: BondKind,
    /// Quadrature weight of the bond's gradient contribution (zero for
    /// ghost and facet bonds).
    pub elastic_weight: f64,
    /// `κ` times the measure of the dual facet.
    pub surface_weight: f64,
}

impl Bond {
    pub fn on_free_boundary(&self) -> bool {
        matches!(self.kind, BondKind::Facet { .. })
    }

    pub fn is_interior(&self) -> bool {
        matches!(self.kind, BondKind::Interior { .. })
    }
}

/// A straight pre-crack lying on a dual grid line.
///
/// A horizontal notch (`start[1] == end[1]`) must sit at `y = (j + ½)h` and
/// cuts the vertical bonds whose dual facets it covers; its endpoints must
/// fall on facet boundaries (`0`, `(i + ½)h` or the domain edge). Vertical
/// notches are analogous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Notch {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    dim: usize,
    h: f64,
    kappa: f64,
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    boundary: BoundarySpec,
    positions: Vec<[f64; 2]>,
    bonds: Vec<Bond>,
    n_interior: usize,
    prebroken: Vec<BondId>,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidMesh(format!("{name} = {v} must be positive")))
    }
}

impl Mesh {
    /// A bar `[0, L]` with `n` nodes, both ends on `∂Ω_d`.
    pub fn build_bar(length: f64, node_count: usize, kappa: f64) -> Result<Mesh> {
        Self::build_bar_with(length, node_count, kappa, BoundarySpec::default())
    }

    /// A bar whose ends follow `boundary.left` / `boundary.right`.
    pub fn build_bar_with(
        length: f64,
        node_count: usize,
        kappa: f64,
        boundary: BoundarySpec,
    ) -> Result<Mesh> {
        if node_count < 2 {
            return Err(Error::InvalidMesh(format!(
                "a bar needs at least 2 nodes, got {node_count}"
            )));
        }
        check_positive("length", length)?;
        check_positive("kappa", kappa)?;
        let h = length / (node_count - 1) as f64;
        let positions = (0..node_count)
            .map(|i| [length * i as f64 / (node_count - 1) as f64, 0.0])
            .collect();
        let mut bonds: Vec<Bond> = (0..node_count - 1)
            .map(|i| Bond {
                kind: BondKind::Interior {
                    a: i,
                    b: i + 1,
                    axis: 0,
                },
                elastic_weight: h,
                surface_weight: kappa,
            })
            .collect();
        let n_interior = bonds.len();
        let ends = [(0, Side::Left), (node_count - 1, Side::Right)];
        for want in [BoundaryKind::Dirichlet, BoundaryKind::Free] {
            for &(node, side) in &ends {
                if boundary.kind(side) != want {
                    continue;
                }
                let kind = match want {
                    BoundaryKind::Dirichlet => BondKind::Ghost { node, side },
                    BoundaryKind::Free => BondKind::Facet { node, side },
                };
                bonds.push(Bond {
                    kind,
                    elastic_weight: 0.0,
                    surface_weight: kappa,
                });
            }
        }
        Ok(Mesh {
            dim: 1,
            h,
            kappa,
            nx: node_count,
            ny: 1,
            width: length,
            height: 0.0,
            boundary: BoundarySpec {
                bottom: BoundaryKind::Free,
                top: BoundaryKind::Free,
                ..boundary
            },
            positions,
            bonds,
            n_interior,
            prebroken: Vec::new(),
        })
    }

    /// A `width × height` rectangle with grid spacing `h`.
    pub fn build_rect(
        width: f64,
        height: f64,
        h: f64,
        notch: Option<Notch>,
        boundary: BoundarySpec,
        kappa: f64,
    ) -> Result<Mesh> {
        check_positive("width", width)?;
        check_positive("height", height)?;
        check_positive("h", h)?;
        check_positive("kappa", kappa)?;
        let cells = |len: f64, name: &str| -> Result<usize> {
            let c = (len / h).round();
            if c < 1.0 || (c * h - len).abs() > 1e-9 * len {
                return Err(Error::InvalidMesh(format!("h = {h} does not divide {name} = {len}")));
            }
            Ok(c as usize)
        };
        let cx = cells(width, "width")?;
        let cy = cells(height, "height")?;
        let (nx, ny) = (cx + 1, cy + 1);
        let node = |i: usize, j: usize| j * nx + i;
        let mut positions = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                positions.push([width * i as f64 / cx as f64, height * j as f64 / cy as f64]);
            }
        }
        let h2 = h * h;
        let mut bonds = Vec::new();
        // Bonds running along a boundary line own half a dual cell.
        for j in 0..ny {
            let edge = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
            for i in 0..nx - 1 {
                bonds.push(Bond {
                    kind: BondKind::Interior {
                        a: node(i, j),
                        b: node(i + 1, j),
                        axis: 0,
                    },
                    elastic_weight: edge * h2,
                    surface_weight: edge * h * kappa,
                });
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx {
                let edge = if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                bonds.push(Bond {
                    kind: BondKind::Interior {
                        a: node(i, j),
                        b: node(i, j + 1),
                        axis: 1,
                    },
                    elastic_weight: edge * h2,
                    surface_weight: edge * h * kappa,
                });
            }
        }
        let n_interior = bonds.len();
        let side_nodes = |side: Side| -> Vec<usize> {
            match side {
                Side::Left => (0..ny).map(|j| node(0, j)).collect(),
                Side::Right => (0..ny).map(|j| node(nx - 1, j)).collect(),
                Side::Bottom => (0..nx).map(|i| node(i, 0)).collect(),
                Side::Top => (0..nx).map(|i| node(i, ny - 1)).collect(),
            }
        };
        let sides = [Side::Left, Side::Right, Side::Bottom, Side::Top];
        for want in [BoundaryKind::Dirichlet, BoundaryKind::Free] {
            for side in sides {
                if boundary.kind(side) != want {
                    continue;
                }
                let nodes = side_nodes(side);
                let last = nodes.len() - 1;
                for (k, &n) in nodes.iter().enumerate() {
                    let share = if k == 0 || k == last { 0.5 } else { 1.0 };
                    let kind = match want {
                        BoundaryKind::Dirichlet => BondKind::Ghost { node: n, side },
                        BoundaryKind::Free => BondKind::Facet { node: n, side },
                    };
                    bonds.push(Bond {
                        kind,
                        elastic_weight: 0.0,
                        surface_weight: share * h * kappa,
                    });
                }
            }
        }
        let mut mesh = Mesh {
            dim: 2,
            h,
            kappa,
            nx,
            ny,
            width,
            height,
            boundary,
            positions,
            bonds,
            n_interior,
            prebroken: Vec::new(),
        };
        if let Some(n) = notch {
            mesh.prebroken = mesh.notch_bonds(&n)?;
        }
        Ok(mesh)
    }

    /// Interior bonds cut by a notch; errors if the notch is not exactly a
    /// union of dual facets.
    pub fn notch_bonds(&self, notch: &Notch) -> Result<Vec<BondId>> {
        if self.dim != 2 {
            return Err(Error::InvalidGeometry("notches apply to 2D meshes only".into()));
        }
        let tol = 1e-9 * self.h;
        let [x0, y0] = notch.start;
        let [x1, y1] = notch.end;
        // `line_axis` is the axis the notch runs along; cut bonds run across it.
        let (line_axis, level, mut a, mut b) = if (y0 - y1).abs() <= tol && (x0 - x1).abs() > tol {
            (0, y0, x0, x1)
        } else if (x0 - x1).abs() <= tol && (y0 - y1).abs() > tol {
            (1, x0, y0, y1)
        } else {
            return Err(Error::InvalidGeometry(
                "notch must be a non-degenerate horizontal or vertical segment".into(),
            ));
        };
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let (along_len, across_len, across_cells) = if line_axis == 0 {
            (self.width, self.height, self.ny - 1)
        } else {
            (self.height, self.width, self.nx - 1)
        };
        // Dual line index: level = (j + ½)h.
        let jf = level / self.h - 0.5;
        let j = jf.round();
        if (jf - j).abs() * self.h > tol || j < 0.0 || j as usize >= across_cells || level > across_len
        {
            return Err(Error::InvalidGeometry(format!(
                "notch line at {level} is not a dual grid line (expected (j + 1/2)·h)"
            )));
        }
        let j = j as usize;
        let on_facet_boundary = |x: f64| {
            if x.abs() <= tol || (x - along_len).abs() <= tol {
                return true;
            }
            let f = x / self.h - 0.5;
            (f - f.round()).abs() * self.h <= tol && x > 0.0 && x < along_len
        };
        if a < -tol || b > along_len + tol || !on_facet_boundary(a) || !on_facet_boundary(b) {
            return Err(Error::InvalidGeometry(format!(
                "notch extent [{a}, {b}] does not end on dual facet boundaries"
            )));
        }
        let mut cut = Vec::new();
        for (id, bond) in self.interior_bonds() {
            let BondKind::Interior { a: na, axis, .. } = bond.kind else {
                continue;
            };
            if axis == line_axis {
                continue;
            }
            let p = self.positions[na];
            let (along, across_idx) = if line_axis == 0 {
                (p[0], ((p[1] / self.h).round()) as usize)
            } else {
                (p[1], ((p[0] / self.h).round()) as usize)
            };
            if across_idx != j {
                continue;
            }
            let lo = (along - 0.5 * self.h).max(0.0);
            let hi = (along + 0.5 * self.h).min(along_len);
            if lo >= a - tol && hi <= b + tol {
                cut.push(id);
            }
        }
        if cut.is_empty() {
            return Err(Error::InvalidGeometry("notch cuts no bonds".into()));
        }
        Ok(cut)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Node counts along x and y (`ny = 1` for a bar).
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn boundary(&self) -> &BoundarySpec {
        &self.boundary
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, id: BondId) -> Option<&Bond> {
        self.bonds.get(id)
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn interior_count(&self) -> usize {
        self.n_interior
    }

    pub fn interior_bonds(&self) -> impl Iterator<Item = (BondId, &Bond)> {
        self.bonds[..self.n_interior].iter().enumerate()
    }

    pub fn ghost_bonds(&self) -> impl Iterator<Item = (BondId, usize)> + '_ {
        self.bonds.iter().enumerate().filter_map(|(id, b)| match b.kind {
            BondKind::Ghost { node, .. } => Some((id, node)),
            _ => None,
        })
    }

    pub fn has_dirichlet_boundary(&self) -> bool {
        self.ghost_bonds().next().is_some()
    }

    /// Bonds cut by the notch at construction (part of `Γ₀`).
    pub fn prebroken(&self) -> &[BondId] {
        &self.prebroken
    }

    /// Bonds the incremental problem may break: interior and ghost bonds.
    /// Facet bonds on `∂Ω_f` constrain nothing and never need breaking.
    pub fn is_candidate(&self, id: BondId) -> bool {
        !self.bonds[id].on_free_boundary()
    }

    /// Total breakable measure `Σ surface_weight` over all bonds.
    pub fn total_surface(&self) -> f64 {
        self.bonds.iter().map(|b| b.surface_weight).sum()
    }

    /// `Σ elastic_weight`, the discrete counterpart of `N·|Ω|`.
    pub fn elastic_volume(&self) -> f64 {
        self.bonds[..self.n_interior].iter().map(|b| b.elastic_weight).sum()
    }

    /// `|Ω|` (length of the bar, area of the rectangle).
    pub fn domain_measure(&self) -> f64 {
        if self.dim == 1 {
            self.width
        } else {
            self.width * self.height
        }
    }

    /// Interior bonds crossing the dual line `x_axis = level`, i.e. the
    /// bonds a straight crack along that line would break.
    pub fn cross_section(&self, axis: usize, level: f64) -> Vec<BondId> {
        self.interior_bonds()
            .filter_map(|(id, b)| match b.kind {
                BondKind::Interior { a, b: nb, axis: ax } if ax == axis => {
                    let lo = self.positions[a][axis];
                    let hi = self.positions[nb][axis];
                    (lo < level && level < hi).then_some(id)
                }
                _ => None,
            })
            .collect()
    }
}

/// An affine function `c0 + c1·x + c2·y` per displacement component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineField {
    coeffs: Vec<[f64; 3]>,
}

impl AffineField {
    pub fn new(coeffs: Vec<[f64; 3]>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("affine field needs at least one component".into()));
        }
        if coeffs.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("affine field has non-finite coefficients".into()));
        }
        Ok(AffineField { coeffs })
    }

    /// Scalar field `c0 + c1·x + c2·y`.
    pub fn scalar(c0: f64, cx: f64, cy: f64) -> Self {
        AffineField {
            coeffs: vec![[c0, cx, cy]],
        }
    }

    pub fn zero(components: usize) -> Self {
        AffineField {
            coeffs: vec![[0.0; 3]; components],
        }
    }

    pub fn components(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[[f64; 3]] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(|c| *c == 0.0)
    }

    pub fn eval(&self, x: [f64; 2], component: usize) -> f64 {
        let [c0, cx, cy] = self.coeffs[component];
        c0 + cx * x[0] + cy * x[1]
    }
}

/// A nodal field with `m` components per node, stored node-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalField {
    pub components: usize,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn zeros(nodes: usize, components: usize) -> Self {
        NodalField {
            components,
            values: vec![0.0; nodes * components],
        }
    }

    pub fn at(&self, node: usize, component: usize) -> f64 {
        self.values[node * self.components + component]
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The time map `r(t)`, piecewise linear through its knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    knots: Vec<(f64, f64)>,
}

impl Schedule {
    /// Knots must start at `t = 0` and be strictly increasing in time.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("schedule needs at least one knot".into()));
        }
        if knots.iter().any(|(t, r)| !t.is_finite() || !r.is_finite()) {
            return Err(Error::InvalidInput("schedule knots must be finite".into()));
        }
        if knots[0].0 != 0.0 {
            return Err(Error::InvalidInput(format!(
                "schedule must start at t = 0, got {}",
                knots[0].0
            )));
        }
        if let Some(w) = knots.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput(format!(
                "schedule knots out of order: t = {} follows t = {}",
                w[1].0, w[0].0
            )));
        }
        Ok(Schedule { knots })
    }

    /// `r(t) = rate·t`.
    pub fn ramp(rate: f64, horizon: f64) -> Self {
        Schedule {
            knots: vec![(0.0, 0.0), (horizon, rate * horizon)],
        }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn segment(&self, t: f64) -> usize {
        // Index i with knots[i].t ≤ t < knots[i+1].t, clamped to the last segment.
        let n = self.knots.len();
        if n < 2 {
            return 0;
        }
        match self.knots.partition_point(|(tk, _)| *tk <= t) {
            0 => 0,
            i => (i - 1).min(n - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        if self.knots.len() == 1 {
            return self.knots[0].1;
        }
        let i = self.segment(t);
        let (t0, r0) = self.knots[i];
        let (t1, r1) = self.knots[i + 1];
        if t == t1 {
            return r1;
        }
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }

    /// Right derivative of `r` (left derivative at the final knot).
    pub fn rate(&self, t: f64) -> f64 {
        if self.knots.len() == 1 {
            return 0.0;
        }
        let i = self.segment(t);
        let (t0, r0) = self.knots[i];
        let (t1, r1) = self.knots[i + 1];
        (r1 - r0) / (t1 - t0)
    }
}

/// `g(t) = g0 + r(t)·G`, with `G` and `g0` affine fields on all of space.
/// The affine form is its own lift into `Ω`, so `∇ġ` is available inside the
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProgram {
    profile: AffineField,
    offset: AffineField,
    schedule: Schedule,
    horizon: f64,
}

impl LoadProgram {
    pub fn new(
        mesh: &Mesh,
        profile: AffineField,
        offset: AffineField,
        schedule: Schedule,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
        }
        if profile.components() != offset.components() {
            return Err(Error::InvalidInput(format!(
                "profile has {} components but offset has {}",
                profile.components(),
                offset.components()
            )));
        }
        let last = schedule.knots().last().map_or(0.0, |k| k.0);
        if schedule.knots().len() > 1 && last < horizon {
            return Err(Error::InvalidInput(format!(
                "schedule ends at t = {last} before the horizon {horizon}"
            )));
        }
        if !mesh.has_dirichlet_boundary() && !profile.is_zero() {
            return Err(Error::InvalidGeometry(
                "boundary is entirely traction-free but the load profile is nonzero".into(),
            ));
        }
        Ok(LoadProgram {
            profile,
            offset,
            schedule,
            horizon,
        })
    }

    /// `g(t) = r(t)·G` with `r(t) = rate·t` and zero offset.
    pub fn ramp(mesh: &Mesh, profile: AffineField, rate: f64, horizon: f64) -> Result<Self> {
        let m = profile.components();
        Self::new(mesh, profile, AffineField::zero(m), Schedule::ramp(rate, horizon), horizon)
    }

    pub fn components(&self) -> usize {
        self.profile.components()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn profile(&self) -> &AffineField {
        &self.profile
    }

    pub fn offset(&self) -> &AffineField {
        &self.offset
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `g0 + r(t)·G` at every node. Ghost bonds read the entry of the node
    /// they pin.
    pub fn boundary_values(&self, mesh: &Mesh, t: f64) -> Result<NodalField> {
        self.check_time(t)?;
        let r = self.schedule.value(t);
        Ok(self.field(mesh, |x, c| self.offset.eval(x, c) + r * self.profile.eval(x, c)))
    }

    /// `ṙ(t)·G` at every node.
    pub fn time_derivative(&self, mesh: &Mesh, t: f64) -> Result<NodalField> {
        self.check_time(t)?;
        let rate = self.schedule.rate(t);
        Ok(self.field(mesh, |x, c| rate * self.profile.eval(x, c)))
    }

    fn field(&self, mesh: &Mesh, f: impl Fn([f64; 2], usize) -> f64) -> NodalField {
        let m = self.components();
        let mut values = Vec::with_capacity(mesh.node_count() * m);
        for &x in mesh.positions() {
            for c in 0..m {
                values.push(f(x, c));
            }
        }
        NodalField {
            components: m,
            values,
        }
    }

    /// `sup_t ‖g(t)‖_∞` over the ghost nodes on `[0, T]`. Since `g` is affine
    /// in `r` and `r` is piecewise linear, the supremum is attained at a
    /// schedule knot or at `T`.
    pub fn sup_boundary_norm(&self, mesh: &Mesh) -> f64 {
        let mut times: Vec<f64> = self
            .schedule
            .knots()
            .iter()
            .map(|k| k.0)
            .filter(|t| *t <= self.horizon)
            .collect();
        times.push(self.horizon);
        let m = self.components();
        let mut sup: f64 = 0.0;
        for t in times {
            let r = self.schedule.value(t);
            for (_, node) in mesh.ghost_bonds() {
                let x = mesh.positions()[node];
                for c in 0..m {
                    sup = sup.max((self.offset.eval(x, c) + r * self.profile.eval(x, c)).abs());
                }
            }
        }
        sup
    }
}
