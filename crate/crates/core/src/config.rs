//! TOML run configuration.
//!
//! ```toml
//! [w]
//! form = "quadratic"          # quadratic | p-power | scaled-quadratic
//! p = 2.0
//! coefficient = 1.0
//! # growth_c = 1.0
//!
//! [mesh]
//! kind = "bar"                # bar | rect
//! h = 0.01
//! length = 1.0                # bar; rect uses width/height
//! kappa = 1.0
//! # notch = { start = [0.0, 0.5625], end = [0.4375, 0.5625] }
//! # boundary = { left = "dirichlet", right = "free" }
//!
//! [load]
//! profile = [0.0, 1.0, 0.0]   # g = c0 + cx·x + cy·y (or one triple per component)
//! schedule = "ramp"           # or [[t, r], ...]
//! horizon = 2.0
//! dt = 0.01
//!
//! [solver]
//! backend = "exact"           # exact | altmin
//! tolerance = 1e-8
//! budget = 200
//! ```
//!
//! Unknown keys are errors; every error names the offending key path.

use std::sync::Arc;

use serde::Deserialize;

use crate::energy::{DensityForm, EnergyDensity};
use crate::error::{Error, Result};
use crate::evolution::{Problem, TimeGrid};
use crate::mesh::{AffineField, BoundarySpec, LoadProgram, Mesh, Notch, Schedule};
use crate::solver::{Backend, StepOptions};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(default = "default_form")]
    pub form: DensityForm,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub coefficient: f64,
    pub growth_c: Option<f64>,
}

fn default_form() -> DensityForm {
    DensityForm::Quadratic
}

fn two() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Bar,
    Rect,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub kind: MeshKind,
    pub h: f64,
    pub length: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    #[serde(default = "one")]
    pub kappa: f64,
    pub notch: Option<Notch>,
    #[serde(default)]
    pub boundary: BoundarySpec,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ProfileConfig {
    Scalar([f64; 3]),
    Vector(Vec<[f64; 3]>),
}

impl ProfileConfig {
    fn field(&self, key: &str) -> Result<AffineField> {
        match self {
            ProfileConfig::Scalar(c) => Ok(AffineField::scalar(c[0], c[1], c[2])),
            ProfileConfig::Vector(cs) => {
                AffineField::new(cs.clone()).map_err(|e| Error::config(key, e.to_string()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Named(String),
    Knots(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub profile: ProfileConfig,
    pub offset: Option<ProfileConfig>,
    #[serde(default = "ramp")]
    pub schedule: ScheduleConfig,
    pub horizon: f64,
    pub dt: f64,
}

fn ramp() -> ScheduleConfig {
    ScheduleConfig::Named("ramp".into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub backend: Backend,
    pub tolerance: Option<f64>,
    pub budget: Option<usize>,
    pub max_iterations: Option<usize>,
    pub at_epsilon_over_h: Option<f64>,
    #[serde(default)]
    pub truncate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            backend: Backend::Exact,
            tolerance: None,
            budget: None,
            max_iterations: None,
            at_epsilon_over_h: None,
            truncate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub w: DensityConfig,
    pub mesh: MeshConfig,
    pub load: LoadConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["w", "mesh", "load", "solver"]),
    ("w", &["form", "p", "coefficient", "growth_c"]),
    (
        "mesh",
        &["kind", "h", "length", "width", "height", "kappa", "notch", "boundary"],
    ),
    ("mesh.notch", &["start", "end"]),
    ("mesh.boundary", &["left", "right", "bottom", "top"]),
    ("load", &["profile", "offset", "schedule", "horizon", "dt"]),
    (
        "solver",
        &[
            "backend",
            "tolerance",
            "budget",
            "max_iterations",
            "at_epsilon_over_h",
            "truncate",
        ],
    ),
];

fn check_keys(table: &toml::Table, path: &str) -> Result<()> {
    let Some((_, allowed)) = KEYS.iter().find(|(p, _)| *p == path) else {
        return Ok(());
    };
    for (k, v) in table {
        let full = if path.is_empty() {
            k.clone()
        } else {
            format!("{path}.{k}")
        };
        if !allowed.contains(&k.as_str()) {
            return Err(Error::config(full, "unknown key"));
        }
        if let toml::Value::Table(t) = v {
            check_keys(t, &full)?;
        }
    }
    Ok(())
}

/// Maps a serde message such as "missing field `h`" in section `sec` to a
/// key path.
fn key_of(section: &str, message: &str) -> String {
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.contains("field"))
        .map(|f| format!("{section}.{f}"));
    field.unwrap_or_else(|| section.to_string())
}

fn section<T: for<'de> Deserialize<'de>>(table: &toml::Table, name: &str) -> Result<Option<T>> {
    match table.get(name) {
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e: toml::de::Error| {
                let msg = e.message().to_string();
                Error::config(key_of(name, &msg), msg)
            }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        check_keys(&table, "")?;
        let need = |name: &str| Error::config(name, "missing section");
        let cfg = RunConfig {
            w: section(&table, "w")?.ok_or_else(|| need("w"))?,
            mesh: section(&table, "mesh")?.ok_or_else(|| need("mesh"))?,
            load: section(&table, "load")?.ok_or_else(|| need("load"))?,
            solver: section(&table, "solver")?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        self.density()?;
        self.options()?;
        if !(self.load.horizon > 0.0 && self.load.horizon.is_finite()) {
            return Err(Error::config("load.horizon", "must be positive"));
        }
        TimeGrid::with_step(self.load.horizon, self.load.dt)
            .map_err(|e| Error::config("load.dt", e.to_string()))?;
        Ok(())
    }

    pub fn density(&self) -> Result<EnergyDensity> {
        let w = &self.w;
        if !(w.p > 1.0 && w.p.is_finite()) {
            return Err(Error::config("w.p", format!("exponent {} must exceed 1", w.p)));
        }
        if !(w.coefficient > 0.0 && w.coefficient.is_finite()) {
            return Err(Error::config("w.coefficient", "must be positive"));
        }
        if let Some(c) = w.growth_c {
            if !(c >= 1.0 && c.is_finite()) {
                return Err(Error::config("w.growth_c", "must be at least 1"));
            }
        }
        EnergyDensity::new(w.form, w.p, w.coefficient, w.growth_c)
            .map_err(|e| Error::config("w.form", e.to_string()))
    }

    pub fn options(&self) -> Result<StepOptions> {
        let s = &self.solver;
        let d = StepOptions::default();
        let opts = StepOptions {
            backend: s.backend,
            tolerance: s.tolerance.unwrap_or(d.tolerance),
            max_iterations: s.max_iterations.unwrap_or(d.max_iterations),
            budget: s.budget.unwrap_or(d.budget),
            at_epsilon_over_h: s.at_epsilon_over_h.unwrap_or(d.at_epsilon_over_h),
            ..d
        };
        opts.validate().map_err(|e| {
            let key = match e.to_string() {
                m if m.contains("tolerance") => "solver.tolerance",
                m if m.contains("max_iterations") => "solver.max_iterations",
                m if m.contains("phase-field") => "solver.at_epsilon_over_h",
                _ => "solver",
            };
            Error::config(key, e.to_string())
        })?;
        Ok(opts)
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let m = &self.mesh;
        let wrap = |key: &'static str| move |e: Error| Error::config(key, e.to_string());
        match m.kind {
            MeshKind::Bar => {
                if m.width.is_some() || m.height.is_some() || m.notch.is_some() {
                    return Err(Error::config("mesh.kind", "a bar takes only `length`"));
                }
                let length = m.length.unwrap_or(1.0);
                let cells = (length / m.h).round();
                if !(m.h > 0.0) || cells < 1.0 || (cells * m.h - length).abs() > 1e-9 * length {
                    return Err(Error::config("mesh.h", format!("must divide length {length}")));
                }
                Mesh::build_bar_with(length, cells as usize + 1, m.kappa, m.boundary)
                    .map_err(wrap("mesh"))
            }
            MeshKind::Rect => {
                if m.length.is_some() {
                    return Err(Error::config("mesh.length", "a rectangle takes width/height"));
                }
                Mesh::build_rect(
                    m.width.unwrap_or(1.0),
                    m.height.unwrap_or(1.0),
                    m.h,
                    m.notch,
                    m.boundary,
                    m.kappa,
                )
                .map_err(|e| match e {
                    Error::InvalidGeometry(msg) => Error::config("mesh.notch", msg),
                    other => Error::config("mesh", other.to_string()),
                })
            }
        }
    }

    pub fn load_program(&self, mesh: &Mesh) -> Result<LoadProgram> {
        let l = &self.load;
        let profile = l.profile.field("load.profile")?;
        let offset = match &l.offset {
            Some(o) => o.field("load.offset")?,
            None => AffineField::zero(profile.components()),
        };
        if offset.components() != profile.components() {
            return Err(Error::config("load.offset", "component count differs from profile"));
        }
        let schedule = match &l.schedule {
            ScheduleConfig::Named(n) if n == "ramp" => Schedule::ramp(1.0, l.horizon),
            ScheduleConfig::Named(n) => {
                return Err(Error::config("load.schedule", format!("unknown schedule `{n}`")))
            }
            ScheduleConfig::Knots(k) => Schedule::new(k.clone())
                .map_err(|e| Error::config("load.schedule", e.to_string()))?,
        };
        LoadProgram::new(mesh, profile, offset, schedule, l.horizon).map_err(|e| match e {
            Error::InvalidGeometry(msg) => Error::config("mesh.boundary", msg),
            other => Error::config("load", other.to_string()),
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        let mesh = self.mesh()?;
        let load = self.load_program(&mesh)?;
        let density = Arc::new(self.density()?);
        let scalar = load.components() == 1;
        let p = Problem::new(mesh, density, load, self.options()?)?;
        if self.solver.truncate {
            if !scalar {
                return Err(Error::config("solver.truncate", "requires a scalar displacement"));
            }
            return p.with_truncation();
        }
        Ok(p)
    }

    /// Level `l` of the dyadic family based on `load.dt`.
    pub fn grid(&self, level: u32) -> Result<TimeGrid> {
        let base = TimeGrid::with_step(self.load.horizon, self.load.dt)?;
        TimeGrid::dyadic(self.load.horizon, base.steps(), level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAR: &str = r#"
[w]
form = "quadratic"

[mesh]
kind = "bar"
h = 0.01

[load]
profile = [0.0, 1.0, 0.0]
horizon = 2.0
dt = 0.01

[solver]
budget = 200
"#;

    fn key_error(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn bar_config_builds() {
        let cfg = RunConfig::parse(BAR).unwrap();
        let p = cfg.problem().unwrap();
        assert_eq!(p.mesh.node_count(), 101);
        assert_eq!(p.options.budget, 200);
        assert_eq!(cfg.grid(0).unwrap().steps(), 200);
        assert_eq!(cfg.grid(2).unwrap().steps(), 800);
    }

    #[test]
    fn rejects_unknown_keys_with_path() {
        assert_eq!(key_error(&format!("{BAR}\nfoo = 1\n")), "solver.foo");
        assert_eq!(key_error(&BAR.replace("[w]", "[w]\nshape = 1")), "w.shape");
        assert_eq!(key_error(&format!("{BAR}\n[extra]\n")), "extra");
    }

    #[test]
    fn rejects_sublinear_exponent() {
        let text = BAR.replace("form = \"quadratic\"", "form = \"p-power\"\np = 0.5");
        assert_eq!(key_error(&text), "w.p");
    }

    #[test]
    fn reports_missing_fields() {
        assert_eq!(key_error(&BAR.replace("h = 0.01", "")), "mesh.h");
        assert_eq!(key_error(&BAR.replace("dt = 0.01", "dt = 0.3")), "load.dt");
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        match RunConfig::parse("[w]\nform = \n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn notched_rectangle() {
        let text = r#"
[w]
[mesh]
kind = "rect"
h = 0.125
notch = { start = [0.0, 0.5625], end = [0.4375, 0.5625] }
boundary = { left = "free", right = "free" }
[load]
profile = [0.0, 0.0, 1.0]
horizon = 1.0
dt = 0.25
"#;
        let p = RunConfig::parse(text).unwrap().problem().unwrap();
        assert_eq!(p.initial.len(), 4);
        let bad = text.replace("0.5625", "0.5");
        let cfg = RunConfig::parse(&bad).unwrap();
        assert!(matches!(cfg.problem(), Err(Error::Config { key, .. }) if key == "mesh.notch"));
    }
}
