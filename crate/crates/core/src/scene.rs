//! Scene files: one JSON format shared by every pipeline and by catalog
//! exports.
//!
//! ```json
//! {
//!   "chart": {"kind": "sphere"},
//!   "one_form": ["-0.5*x2", "0.5*x1", "-0.5*x4", "0.5*x3"],
//!   "potential": "0.5*(x1^2 + x2^2) - 0.5*(x3^2 + x4^2)",
//!   "params": {},
//!   "tolerances": {"step": 0.01}
//! }
//! ```
//!
//! Expressions are parsed with `params` substituted, so the canonical form
//! written by [`Scene::emit`] holds numbers only; `params` is kept for
//! reference. `field` overrides the descent field of `potential`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::CatalogSystem;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{gradient, IntegrateOptions, ScalarField, VectorField};
use crate::geometry::{Chart, OneForm};
use crate::links::{ClassifyOptions, ContinuationOptions};
use crate::surfaces::{ReturnOptions, SurfaceKind, SurfaceParam, Transversal, SINGULAR_ANGLE, UV};

/// Overrides for module defaults. Absent keys keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Integrator local error tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Continuation arclength step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Seeding grid per axis; sample count per axis for grid reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangency_angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_angle: Option<f64>,
    /// Threshold for the surface transversality check; the check runs only
    /// when this is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transversality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_samples: Option<usize>,
}

impl Tolerances {
    pub fn continuation(&self) -> ContinuationOptions<f64> {
        let mut o = ContinuationOptions::default();
        if let Some(h) = self.step {
            o.step = h;
            o.min_step = h / 256.0;
        }
        if let Some(g) = self.grid {
            o.grid = g;
        }
        if let Some(t) = self.newton_tol {
            o.newton_tol = t;
        }
        if let Some(t) = self.rank_tol {
            o.rank_tol = t;
        }
        o
    }

    pub fn classify(&self) -> ClassifyOptions<f64> {
        let mut o = ClassifyOptions::default();
        if let Some(t) = self.re_tol {
            o.re_tol = t;
        }
        if let Some(t) = self.im_tol {
            o.im_tol = t;
        }
        if let Some(t) = self.refine_tol {
            o.refine_tol = t;
        }
        if let Some(t) = self.tangency_angle {
            o.tangency_angle = t;
        }
        o
    }

    pub fn integrate(&self) -> IntegrateOptions<f64> {
        match self.tol {
            Some(t) => IntegrateOptions::with_tol(t),
            None => IntegrateOptions::default(),
        }
    }

    pub fn returns(&self) -> ReturnOptions {
        let mut o = ReturnOptions::default();
        if let Some(h) = self.return_step {
            o.step = h;
        }
        o
    }

    pub fn singular_angle(&self) -> f64 {
        self.singular_angle.unwrap_or(SINGULAR_ANGLE)
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("step", self.step),
            ("newton_tol", self.newton_tol),
            ("rank_tol", self.rank_tol),
            ("re_tol", self.re_tol),
            ("im_tol", self.im_tol),
            ("refine_tol", self.refine_tol),
            ("tangency_angle", self.tangency_angle),
            ("singular_angle", self.singular_angle),
            ("return_step", self.return_step),
        ];
        for (k, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::BadParams(format!("tolerance {k} = {v} must be positive")));
                }
            }
        }
        if let Some(t) = self.transversality {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::BadParams(format!("transversality = {t} must lie in [0, 1)")));
            }
        }
        if self.grid.is_some_and(|g| g < 2) || self.return_samples.is_some_and(|n| n < 2) {
            return Err(Error::BadParams("grid and return_samples need at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub kind: SurfaceKind,
    /// Embedding in the surface coordinates `u v`.
    pub embedding: Vec<String>,
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub grid: [usize; 2],
}

/// On-disk form of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub chart: Chart,
    pub one_form: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Vec<String>>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Trajectory start points for `simulate`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub starts: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transversal: Option<Transversal>,
    /// Free-form metadata carried through unchanged (catalog exports put
    /// their expected block here).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Value>,
}

/// A parsed scene, ready for the pipelines.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: Option<String>,
    pub chart: Chart,
    pub one_form: OneForm,
    pub potential: Option<ScalarField>,
    /// Explicit field components, when given.
    explicit_field: Option<Vec<Expr>>,
    pub field: VectorField,
    pub params: BTreeMap<String, f64>,
    pub tolerances: Tolerances,
    pub starts: Vec<Vec<f64>>,
    pub duration: f64,
    pub surface: Option<SurfaceParam>,
    pub transversal: Option<Transversal>,
    pub expected: Option<Value>,
}

const DEFAULT_DURATION: f64 = 10.0;

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

impl Scene {
    pub fn parse(text: &str) -> Result<Self> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::Invalid(format!("scene: {e}")))?;
        Self::from_file(file)
    }

    pub fn from_file(file: SceneFile) -> Result<Self> {
        file.tolerances.check()?;
        let chart = file.chart;
        if let Chart::Box { bounds } = &chart {
            Chart::new_box(*bounds)?;
        }
        let params = file.params;
        let one_form = OneForm::parse(chart.clone(), &strs(&file.one_form), &params)?;
        let potential = file
            .potential
            .as_deref()
            .map(|t| ScalarField::parse(t, &chart, &params))
            .transpose()?;
        let (explicit_field, field) = match (&file.field, &potential) {
            (Some(texts), _) => {
                let f = VectorField::parse(chart.clone(), &strs(texts), &params)?;
                (f.components().map(<[Expr]>::to_vec), f)
            }
            (None, Some(psi)) => (None, gradient(psi, &chart)),
            (None, None) => {
                return Err(Error::Invalid("scene needs `potential` or `field`".into()));
            }
        };
        for (k, s) in file.starts.iter().enumerate() {
            if s.len() != chart.dim() {
                return Err(Error::Invalid(format!(
                    "start {k} has {} coordinates, chart needs {}",
                    s.len(),
                    chart.dim()
                )));
            }
        }
        let duration = file.duration.unwrap_or(DEFAULT_DURATION);
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::BadParams(format!("duration = {duration} must be positive")));
        }
        let surface = file
            .surface
            .map(|s| {
                SurfaceParam::parse(
                    s.kind,
                    chart.clone(),
                    &strs(&s.embedding),
                    s.u_range,
                    s.v_range,
                    s.grid,
                    &params,
                )
            })
            .transpose()?;
        if let Some(tr) = &file.transversal {
            if surface.is_none() {
                return Err(Error::Invalid("transversal given without a surface".into()));
            }
            if tr.axis > 1 || !(tr.range[0] < tr.range[1]) {
                return Err(Error::Invalid("transversal needs axis 0 or 1 and a nonempty range".into()));
            }
        }
        Ok(Self {
            name: file.name,
            chart,
            one_form,
            potential,
            explicit_field,
            field,
            params,
            tolerances: file.tolerances,
            starts: file.starts,
            duration,
            surface,
            transversal: file.transversal,
            expected: file.expected,
        })
    }

    /// Scene for a catalog system, tolerances at module defaults.
    pub fn from_catalog(sys: &CatalogSystem) -> Self {
        Self {
            name: Some(sys.name.clone()),
            chart: sys.chart.clone(),
            one_form: sys.one_form.clone(),
            potential: sys.potential.clone(),
            explicit_field: if sys.potential.is_some() {
                None
            } else {
                sys.field.components().map(<[Expr]>::to_vec)
            },
            field: sys.field.clone(),
            params: sys.params.clone(),
            tolerances: Tolerances::default(),
            starts: sys.trajectory_starts.clone(),
            duration: sys.duration,
            surface: sys.surface.clone(),
            transversal: sys.transversal,
            expected: Some(serde_json::to_value(&sys.expected).expect("expected block serializes")),
        }
    }

    pub fn to_file(&self) -> SceneFile {
        let names = self.chart.coord_names();
        let show = |e: &Expr| e.display(names).to_string();
        SceneFile {
            name: self.name.clone(),
            chart: self.chart.clone(),
            one_form: self.one_form.coeffs().iter().map(show).collect(),
            potential: self.potential.as_ref().map(|p| show(p.expr())),
            field: self
                .explicit_field
                .as_ref()
                .map(|c| c.iter().map(show).collect()),
            params: self.params.clone(),
            tolerances: self.tolerances.clone(),
            starts: self.starts.clone(),
            duration: Some(self.duration),
            surface: self.surface.as_ref().map(|s| SurfaceSpec {
                kind: s.kind,
                embedding: s.embedding.iter().map(|e| e.display(&UV).to_string()).collect(),
                u_range: s.u_range,
                v_range: s.v_range,
                grid: s.grid,
            }),
            transversal: self.transversal,
            expected: self.expected.clone(),
        }
    }

    /// Canonical JSON text.
    pub fn emit(&self) -> String {
        crate::output::to_json(&self.to_file())
    }
}
