//! Bulk energy densities `W` and their differentials.
//!
//! Every density here is a function of the full `m × N` displacement
//! gradient. The shipped forms are isotropic powers of the Frobenius norm,
//! `W(ξ) = a |ξ|^p`, which are convex and therefore quasiconvex. Other
//! densities plug in through [`BulkDensity`] (see [`CustomDensity`]); the
//! solvers accept them but only the convex forms come with a global
//! minimality guarantee.
//!
//! Each density carries a growth constant `C ≥ 1` for the two-sided bound
//!
//! ```text
//! (1/C)|ξ|^p − C  ≤  W(ξ)  ≤  C|ξ|^p + C
//! ```
//!
//! and a derived constant `C'` for `|DW(ξ)| ≤ C'(1 + |ξ|^(p−1))`.
//! [`check_growth`] verifies both on a sample set.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `rows × cols` gradient matrix stored row-major.
///
/// `rows` is the number of displacement components `m`, `cols` the spatial
/// dimension `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        GradientMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "gradient matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(GradientMatrix { rows, cols, data })
    }

    /// A single-row matrix, the scalar (`m = 1`) case.
    pub fn row(data: &[f64]) -> Self {
        GradientMatrix {
            rows: 1,
            cols: data.len(),
            data: data.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn norm(&self) -> f64 {
        frobenius(&self.data)
    }

    pub fn scaled(&self, s: f64) -> Self {
        GradientMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn dot(&self, other: &GradientMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "gradient matrix has non-finite entries".into(),
            ))
        }
    }
}

pub(crate) fn frobenius(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The interface the solvers need from a bulk energy density.
///
/// Gradients are passed as flat row-major `m × N` slices.
pub trait BulkDensity: Send + Sync + fmt::Debug {
    /// Growth exponent `p ∈ (1, ∞)`.
    fn exponent(&self) -> f64;

    /// Constant `C ≥ 1` of the two-sided growth bound.
    fn growth_constant(&self) -> f64;

    /// Constant `C'` of the bound `|DW(ξ)| ≤ C'(1 + |ξ|^(p−1))`.
    fn dw_constant(&self) -> f64;

    fn w(&self, xi: &[f64]) -> f64;

    /// Writes `DW(ξ)` into `out` (same layout as `xi`).
    fn dw(&self, xi: &[f64], out: &mut [f64]);

    /// `Some(a)` when `W(ξ) = a|ξ|²`; the solvers then use a linear solve.
    fn quadratic_coefficient(&self) -> Option<f64> {
        None
    }

    /// Whether global minimality of the exact backend is guaranteed.
    fn is_convex(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityForm {
    /// `|ξ|²`
    Quadratic,
    /// `a |ξ|^p`
    PPower,
    /// `a |ξ|²`
    ScaledQuadratic,
}

impl fmt::Display for DensityForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DensityForm::Quadratic => "quadratic",
            DensityForm::PPower => "p-power",
            DensityForm::ScaledQuadratic => "scaled-quadratic",
        })
    }
}

/// One of the shipped convex densities `W(ξ) = a|ξ|^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDensity {
    form: DensityForm,
    p: f64,
    coefficient: f64,
    growth_c: f64,
}

impl EnergyDensity {
    /// `W(ξ) = |ξ|²` with `C = 1`.
    pub fn quadratic() -> Self {
        EnergyDensity {
            form: DensityForm::Quadratic,
            p: 2.0,
            coefficient: 1.0,
            growth_c: 1.0,
        }
    }

    /// `W(ξ) = a|ξ|²`. When `growth_c` is `None` the smallest valid constant
    /// `max(a, 1/a, 1)` is used.
    pub fn scaled_quadratic(coefficient: f64, growth_c: Option<f64>) -> Result<Self> {
        Self::new(DensityForm::ScaledQuadratic, 2.0, coefficient, growth_c)
    }

    /// `W(ξ) = a|ξ|^p`.
    pub fn p_power(p: f64, coefficient: f64, growth_c: Option<f64>) -> Result<Self> {
        Self::new(DensityForm::PPower, p, coefficient, growth_c)
    }

    pub fn new(form: DensityForm, p: f64, coefficient: f64, growth_c: Option<f64>) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidInput(format!("exponent p = {p} must lie in (1, ∞)")));
        }
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::InvalidInput(format!(
                "coefficient {coefficient} must be positive"
            )));
        }
        match form {
            DensityForm::Quadratic if p != 2.0 || coefficient != 1.0 => {
                return Err(Error::InvalidInput(
                    "quadratic form is |ξ|² (p = 2, coefficient 1); use scaled-quadratic or p-power"
                        .into(),
                ));
            }
            DensityForm::ScaledQuadratic if p != 2.0 => {
                return Err(Error::InvalidInput("scaled-quadratic requires p = 2".into()));
            }
            _ => {}
        }
        let growth_c = growth_c.unwrap_or_else(|| natural_growth_constant(coefficient));
        if !(growth_c.is_finite() && growth_c >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "growth constant C = {growth_c} must be at least 1"
            )));
        }
        Ok(EnergyDensity {
            form,
            p,
            coefficient,
            growth_c,
        })
    }

    pub fn form(&self) -> DensityForm {
        self.form
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn eval_w(&self, xi: &GradientMatrix) -> Result<f64> {
        xi.check_finite()?;
        Ok(self.w(xi.as_slice()))
    }

    pub fn eval_dw(&self, xi: &GradientMatrix) -> Result<GradientMatrix> {
        xi.check_finite()?;
        let mut out = GradientMatrix::zeros(xi.rows(), xi.cols());
        self.dw(xi.as_slice(), &mut out.data);
        Ok(out)
    }
}

fn natural_growth_constant(coefficient: f64) -> f64 {
    coefficient.max(1.0 / coefficient).max(1.0)
}

impl BulkDensity for EnergyDensity {
    fn exponent(&self) -> f64 {
        self.p
    }

    fn growth_constant(&self) -> f64 {
        self.growth_c
    }

    fn dw_constant(&self) -> f64 {
        (self.coefficient * self.p).max(1.0)
    }

    fn w(&self, xi: &[f64]) -> f64 {
        let sq: f64 = xi.iter().map(|x| x * x).sum();
        if self.p == 2.0 {
            self.coefficient * sq
        } else {
            self.coefficient * sq.powf(0.5 * self.p)
        }
    }

    fn dw(&self, xi: &[f64], out: &mut [f64]) {
        if self.p == 2.0 {
            for (o, x) in out.iter_mut().zip(xi) {
                *o = 2.0 * self.coefficient * x;
            }
            return;
        }
        let sq: f64 = xi.iter().map(|x| x * x).sum();
        let scale = if sq == 0.0 {
            0.0
        } else {
            self.coefficient * self.p * sq.powf(0.5 * self.p - 1.0)
        };
        for (o, x) in out.iter_mut().zip(xi) {
            *o = scale * x;
        }
    }

    fn quadratic_coefficient(&self) -> Option<f64> {
        (self.p == 2.0).then_some(self.coefficient)
    }

    fn is_convex(&self) -> bool {
        true
    }
}

type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A user-supplied density. No convexity is assumed, so the exact backend
/// returns the best pattern it finds but makes no global-minimality claim.
#[derive(Clone)]
pub struct CustomDensity {
    w: Arc<ScalarFn>,
    dw: Arc<GradFn>,
    p: f64,
    growth_c: f64,
    dw_c: f64,
    convex: bool,
}

impl CustomDensity {
    pub fn new(
        p: f64,
        growth_c: f64,
        dw_c: f64,
        w: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        dw: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidInput(format!("exponent p = {p} must lie in (1, ∞)")));
        }
        if !(growth_c >= 1.0 && dw_c >= 1.0) {
            return Err(Error::InvalidInput("growth constants must be at least 1".into()));
        }
        Ok(CustomDensity {
            w: Arc::new(w),
            dw: Arc::new(dw),
            p,
            growth_c,
            dw_c,
            convex: false,
        })
    }

    /// Declare the density convex, enabling the global-minimality claim.
    pub fn assume_convex(mut self) -> Self {
        self.convex = true;
        self
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("p", &self.p)
            .field("growth_c", &self.growth_c)
            .field("convex", &self.convex)
            .finish_non_exhaustive()
    }
}

impl BulkDensity for CustomDensity {
    fn exponent(&self) -> f64 {
        self.p
    }
    fn growth_constant(&self) -> f64 {
        self.growth_c
    }
    fn dw_constant(&self) -> f64 {
        self.dw_c
    }
    fn w(&self, xi: &[f64]) -> f64 {
        (self.w)(xi)
    }
    fn dw(&self, xi: &[f64], out: &mut [f64]) {
        (self.dw)(xi, out)
    }
    fn is_convex(&self) -> bool {
        self.convex
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Negative,
    Lower,
    Upper,
    Derivative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthViolation {
    pub sample: usize,
    pub kind: BoundKind,
    pub norm: f64,
    /// The offending value (`W` or `|DW|`).
    pub value: f64,
    /// The bound it should have respected.
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GrowthReport {
    pub violations: Vec<GrowthViolation>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks nonnegativity, both growth bounds and the `DW` bound on every
/// sample. An empty report means all samples pass.
pub fn check_growth(density: &dyn BulkDensity, samples: &[GradientMatrix]) -> GrowthReport {
    let p = density.exponent();
    let c = density.growth_constant();
    let c_dw = density.dw_constant();
    // Relative slack for rounding in the bound arithmetic.
    let slack = |b: f64| 1e-12 * (1.0 + b.abs());
    let mut violations = Vec::new();
    let mut grad = Vec::new();
    for (i, xi) in samples.iter().enumerate() {
        let r = xi.norm();
        let w = density.w(xi.as_slice());
        let rp = r.powf(p);
        let mut flag = |kind, value, bound| {
            violations.push(GrowthViolation {
                sample: i,
                kind,
                norm: r,
                value,
                bound,
            })
        };
        if w < 0.0 {
            flag(BoundKind::Negative, w, 0.0);
        }
        let lower = rp / c - c;
        if w < lower - slack(lower) {
            flag(BoundKind::Lower, w, lower);
        }
        let upper = c * rp + c;
        if w > upper + slack(upper) {
            flag(BoundKind::Upper, w, upper);
        }
        grad.clear();
        grad.resize(xi.as_slice().len(), 0.0);
        density.dw(xi.as_slice(), &mut grad);
        let g = frobenius(&grad);
        let dbound = c_dw * (1.0 + r.powf(p - 1.0));
        if g > dbound + slack(dbound) {
            flag(BoundKind::Derivative, g, dbound);
        }
    }
    GrowthReport { violations }
}

/// A deterministic lattice of gradients (norms 0 to 16 along coordinate and
/// diagonal directions) followed by `random` seeded draws.
pub fn growth_samples(rows: usize, cols: usize, random: usize, seed: u64) -> Vec<GradientMatrix> {
    let len = rows * cols;
    let norms = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 16.0];
    let mut out = Vec::new();
    for &r in &norms {
        for k in 0..len {
            let mut d = vec![0.0; len];
            d[k] = r;
            out.push(GradientMatrix { rows, cols, data: d.clone() });
            d[k] = -r;
            out.push(GradientMatrix { rows, cols, data: d });
        }
        let diag = r / (len as f64).sqrt();
        out.push(GradientMatrix {
            rows,
            cols,
            data: vec![diag; len],
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let scale = 10f64.powf(rng.gen_range(-3.0..2.0));
        let data = (0..len).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        out.push(GradientMatrix { rows, cols, data });
    }
    out
}
