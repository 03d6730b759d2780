//! Concrete systems with the structure each is known to have.
//!
//! Every builder returns a [`CatalogSystem`] whose `expected` block states
//! what the analysis modules should find; the integration tests check each
//! block against live computation.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::{gradient, ScalarField, VectorField};
use crate::geometry::{lift_family, Chart, OneForm, PlanarFamily};
use crate::links::EventKind;
use crate::surfaces::{SurfaceKind, SurfaceParam, Transversal};

pub const NAMES: [&str; 6] = [
    "sn_normal_form",
    "hopf_normal_form",
    "s3_gradient",
    "s3_tight_form",
    "s3_overtwisted_form",
    "lutz_local_model",
];

#[derive(Debug, Clone, Serialize)]
pub struct ExpectedEvent {
    pub kind: EventKind,
    pub location: Vec<f64>,
    /// Crossing eigenvalue `(re, im)` up to conjugation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Expected {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_curves: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
    /// Constant transverse pairs `[(re, im); 2]`, one per curve, in any order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub spectra: Vec<[[f64; 2]; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<ExpectedEvent>>,
    /// Absolute linking number of the two fixed curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linking: Option<i64>,
    /// Sign of the Frobenius density: `1` contact, `0` integrable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frobenius_sign: Option<i8>,
    /// Bound on `|alpha(-grad Psi)|` over sample points.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangency_bound: Option<f64>,
    /// Potential value of the closed leaf on the model disc.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_leaf_psi: Option<f64>,
    /// Ratio of the twisted to the untwisted form on the boundary torus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_factor: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CatalogSystem {
    pub name: String,
    pub chart: Chart,
    pub one_form: OneForm,
    pub potential: Option<ScalarField>,
    pub field: VectorField,
    /// Planar family and coupling `g` for lifted normal forms.
    pub family: Option<(PlanarFamily, ScalarField)>,
    pub params: BTreeMap<String, f64>,
    /// Untwisted comparison form (Lutz model).
    pub base_form: Option<OneForm>,
    pub surface: Option<SurfaceParam>,
    pub transversal: Option<Transversal>,
    /// Start points for trajectory checks and their duration.
    pub trajectory_starts: Vec<Vec<f64>>,
    pub duration: f64,
    pub expected: Expected,
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> Result<f64> {
    let v = params.get(key).copied().unwrap_or(default);
    if !v.is_finite() {
        return Err(Error::BadParams(format!("{key} = {v} is not finite")));
    }
    Ok(v)
}

fn reject_unknown(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    match params.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::BadParams(format!(
            "unknown parameter `{k}` (expected one of {allowed:?})"
        ))),
        None => Ok(()),
    }
}

/// Builds a catalog system by name from numeric parameters.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<CatalogSystem> {
    match name {
        "sn_normal_form" => {
            reject_unknown(params, &["a", "lambda_x"])?;
            sn_normal_form(param(params, "a", 1.0)?, param(params, "lambda_x", -1.0)?, None)
        }
        "hopf_normal_form" => {
            reject_unknown(params, &["a", "omega"])?;
            hopf_normal_form(param(params, "a", -1.0)?, param(params, "omega", 1.0)?, None)
        }
        "s3_gradient" => {
            reject_unknown(params, &[])?;
            s3_gradient()
        }
        "s3_tight_form" => {
            reject_unknown(params, &[])?;
            s3_tight_form()
        }
        "s3_overtwisted_form" => {
            reject_unknown(params, &["n"])?;
            let n = param(params, "n", 1.0)?;
            if n.fract() != 0.0 || n < 1.0 {
                return Err(Error::BadParams(format!("n = {n} must be a positive integer")));
            }
            s3_overtwisted_form(n as u32)
        }
        "lutz_local_model" => {
            reject_unknown(params, &["eps", "c", "tilt"])?;
            lutz_local_model(
                param(params, "c", 1.0)?,
                param(params, "eps", 1.0)?,
                param(params, "tilt", 0.1)?,
            )
        }
        other => Err(Error::UnknownPreset(other.to_string())),
    }
}

fn box_chart(bounds: [[f64; 2]; 3]) -> Chart {
    Chart::new_box(bounds).expect("catalog bounds are valid")
}

fn parse_scalar(text: &str, chart: &Chart, params: &BTreeMap<String, f64>) -> ScalarField {
    ScalarField::parse(text, chart, params).expect("catalog expression parses")
}

/// Saddle-node unfolding `x' = lambda_x x`, `y' = z - a y^2`, lifted to the
/// plane field `dz + g dy` (default `g = y`). Fixed curve: the parabola
/// `x = 0, z = a y^2`, with a saddle-node at the origin.
pub fn sn_normal_form(a: f64, lambda_x: f64, g: Option<&str>) -> Result<CatalogSystem> {
    if a == 0.0 {
        return Err(Error::BadParams("a must be nonzero".into()));
    }
    if lambda_x == 0.0 {
        return Err(Error::BadParams("lambda_x must be nonzero".into()));
    }
    let params: BTreeMap<String, f64> = [("a".to_string(), a), ("lambda_x".to_string(), lambda_x)].into();
    let zmax = a.abs() + 0.5;
    let chart = box_chart([[-1.0, 1.0], [-1.0, 1.0], [-zmax, zmax]]);
    let g = parse_scalar(g.unwrap_or("y"), &chart, &params);
    let family = PlanarFamily::parse("lambda_x*x", "z - a*y^2", &params)?;
    let field = lift_family(&chart, &family, &g);
    let one_form = OneForm::normal_form(chart.clone(), g.expr().clone())?;
    Ok(CatalogSystem {
        name: "sn_normal_form".into(),
        chart,
        one_form,
        potential: None,
        field,
        family: Some((family, g)),
        params,
        base_form: None,
        surface: None,
        transversal: None,
        trajectory_starts: vec![
            vec![0.3, 0.2, 0.5 * a],
            vec![-0.2, -0.4, 0.3 * a],
            vec![0.1, 0.6, 0.2 * a],
        ],
        duration: 5.0,
        expected: Expected {
            fixed_curves: Some(1),
            closed: Some(false),
            events: Some(vec![ExpectedEvent {
                kind: EventKind::SaddleNode,
                location: vec![0.0, 0.0, 0.0],
                crossing: Some([0.0, 0.0]),
            }]),
            ..Expected::default()
        },
    })
}

/// Hopf unfolding `(zx - omega y + a x r^2, omega x + zy + a y r^2)`, lifted
/// to `dz + g dy`. Fixed curve: the `z`-axis, with a Hopf point at the
/// origin and invariant paraboloid `r = sqrt(-z / a)`.
pub fn hopf_normal_form(a: f64, omega: f64, g: Option<&str>) -> Result<CatalogSystem> {
    if a == 0.0 {
        return Err(Error::BadParams("a must be nonzero".into()));
    }
    if omega == 0.0 {
        return Err(Error::BadParams("omega must be nonzero".into()));
    }
    let params: BTreeMap<String, f64> = [("a".to_string(), a), ("omega".to_string(), omega)].into();
    let chart = box_chart([[-1.0, 1.0], [-1.0, 1.0], [-0.5, 0.5]]);
    let g = parse_scalar(g.unwrap_or("y"), &chart, &params);
    let family = PlanarFamily::parse(
        "z*x - omega*y + a*x*(x^2 + y^2)",
        "omega*x + z*y + a*y*(x^2 + y^2)",
        &params,
    )?;
    let field = lift_family(&chart, &family, &g);
    let one_form = OneForm::normal_form(chart.clone(), g.expr().clone())?;
    Ok(CatalogSystem {
        name: "hopf_normal_form".into(),
        chart,
        one_form,
        potential: None,
        field,
        family: Some((family, g)),
        params,
        base_form: None,
        surface: None,
        transversal: None,
        trajectory_starts: vec![vec![0.3, 0.0, 0.2], vec![0.1, 0.2, -0.2], vec![-0.4, 0.1, 0.0]],
        duration: 5.0,
        expected: Expected {
            fixed_curves: Some(1),
            closed: Some(false),
            events: Some(vec![ExpectedEvent {
                kind: EventKind::Hopf,
                location: vec![0.0, 0.0, 0.0],
                crossing: Some([0.0, omega.abs()]),
            }]),
            ..Expected::default()
        },
    })
}

const S3_POTENTIAL: &str = "0.5*(x1^2 + x2^2) - 0.5*(x3^2 + x4^2)";
const S3_TIGHT: [&str; 4] = ["-0.5*x2", "0.5*x1", "-0.5*x4", "0.5*x3"];

fn s3_system(name: &str, one_form: OneForm, params: BTreeMap<String, f64>) -> CatalogSystem {
    let chart = Chart::Sphere;
    let potential = parse_scalar(S3_POTENTIAL, &chart, &BTreeMap::new());
    let field = gradient(&potential, &chart);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CatalogSystem {
        name: name.into(),
        chart,
        one_form,
        potential: Some(potential),
        field,
        family: None,
        params,
        base_form: None,
        surface: None,
        transversal: None,
        trajectory_starts: vec![
            vec![h, 0.0, h, 0.0],
            vec![0.6, 0.3, 0.5, 0.4],
            vec![0.1, -0.2, 0.7, 0.5],
            vec![-0.5, 0.5, -0.5, 0.5],
        ],
        duration: 10.0,
        expected: Expected {
            fixed_curves: Some(2),
            closed: Some(true),
            spectra: vec![[[-2.0, 0.0], [-2.0, 0.0]], [[2.0, 0.0], [2.0, 0.0]]],
            events: Some(Vec::new()),
            linking: Some(1),
            frobenius_sign: Some(1),
            tangency_bound: Some(1e-10),
            ..Expected::default()
        },
    }
}

/// Gradient of `(x1^2 + x2^2 - x3^2 - x4^2) / 2` on `S^3`, inside the
/// standard tight contact structure. Fixed set: the Hopf link
/// `{x1 = x2 = 0} ∪ {x3 = x4 = 0}`.
pub fn s3_gradient() -> Result<CatalogSystem> {
    let form = OneForm::parse(Chart::Sphere, &S3_TIGHT, &BTreeMap::new())?;
    Ok(s3_system("s3_gradient", form, BTreeMap::new()))
}

/// The standard tight form `(x1 dx2 - x2 dx1 + x3 dx4 - x4 dx3) / 2`.
pub fn s3_tight_form() -> Result<CatalogSystem> {
    let form = OneForm::parse(Chart::Sphere, &S3_TIGHT, &BTreeMap::new())?;
    Ok(s3_system("s3_tight_form", form, BTreeMap::new()))
}

/// Overtwisted forms
/// `cos(pi/4 + n pi (x3^2 + x4^2)) (x1 dx2 - x2 dx1) + sin(...) (x3 dx4 - x4 dx3)`.
pub fn s3_overtwisted_form(n: u32) -> Result<CatalogSystem> {
    if n == 0 {
        return Err(Error::BadParams("n must be at least 1".into()));
    }
    let params: BTreeMap<String, f64> = [("n".to_string(), n as f64)].into();
    let phase = "(pi/4 + n*pi*(x3^2 + x4^2))";
    let form = OneForm::parse(
        Chart::Sphere,
        &[
            &format!("-x2*cos{phase}"),
            &format!("x1*cos{phase}"),
            &format!("-x4*sin{phase}"),
            &format!("x3*sin{phase}"),
        ],
        &params,
    )?;
    Ok(s3_system("s3_overtwisted_form", form, params))
}

/// Local Lutz twist around a sink curve (the `z`-axis) of `Psi = x^2 + y^2`
/// with `g = c Psi`:
///
/// `alpha' = sin(pi/4 + 2 pi Psi / eps) c (x dy - y dx) + cos(pi/4 + 2 pi Psi / eps) dz`.
///
/// The model disc is the graph `z = tilt u^2` over the disc of radius
/// `0.95 sqrt(eps)`; its characteristic foliation has a closed leaf at
/// `Psi = 3 eps / 8`, where `alpha'` restricted to horizontal planes
/// vanishes.
pub fn lutz_local_model(c: f64, eps: f64, tilt: f64) -> Result<CatalogSystem> {
    if !(c > 0.0) {
        return Err(Error::BadParams(format!(
            "g = c Psi needs dg/dPsi = c > 0, got c = {c}"
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::BadParams(format!("eps = {eps} must be positive")));
    }
    if tilt == 0.0 {
        return Err(Error::BadParams("a flat disc has a circle of singular points, not a leaf; tilt must be nonzero".into()));
    }
    let params: BTreeMap<String, f64> = [
        ("c".to_string(), c),
        ("eps".to_string(), eps),
        ("tilt".to_string(), tilt),
    ]
    .into();
    let r = eps.sqrt();
    let chart = box_chart([[-1.2 * r, 1.2 * r], [-1.2 * r, 1.2 * r], [-1.0, 1.0]]);
    let phase = "(pi/4 + 2*pi*(x^2 + y^2)/eps)";
    let one_form = OneForm::parse(
        chart.clone(),
        &[
            &format!("-c*y*sin{phase}"),
            &format!("c*x*sin{phase}"),
            &format!("cos{phase}"),
        ],
        &params,
    )?;
    let base_form = OneForm::parse(chart.clone(), &["-c*y", "c*x", "1"], &params)?;
    let potential = parse_scalar("x^2 + y^2", &chart, &params);
    let field = gradient(&potential, &chart);
    let surface = SurfaceParam::parse(
        SurfaceKind::Disc,
        chart.clone(),
        &["u*cos(v)", "u*sin(v)", "tilt*u^2"],
        [0.0, 0.95 * r],
        [0.0, TAU],
        [20, 32],
        &params,
    )?;
    Ok(CatalogSystem {
        name: "lutz_local_model".into(),
        chart,
        one_form,
        potential: Some(potential),
        field,
        family: None,
        params,
        base_form: Some(base_form),
        surface: Some(surface),
        transversal: Some(Transversal {
            axis: 1,
            at: 0.0,
            range: [0.1 * r, 0.9 * r],
        }),
        trajectory_starts: vec![
            vec![0.5 * r, 0.3 * r, 0.1],
            vec![-0.2 * r, 0.6 * r, -0.2],
            vec![0.7 * r, -0.1 * r, 0.0],
        ],
        duration: 3.0,
        expected: Expected {
            fixed_curves: Some(1),
            closed: Some(false),
            frobenius_sign: Some(1),
            tangency_bound: Some(1e-10),
            closed_leaf_psi: Some(0.375 * eps),
            boundary_factor: Some(std::f64::consts::FRAC_1_SQRT_2),
            ..Expected::default()
        },
    })
}

/// Bracket of the twisted density, `cos(A) sin(A) + 2 pi Psi / eps` with
/// `A = pi/4 + 2 pi Psi / eps`; the density of `alpha'` in Cartesian
/// coordinates is `2 c` times this.
pub fn lutz_bracket(psi: f64, eps: f64) -> f64 {
    let a = std::f64::consts::FRAC_PI_4 + TAU * psi / eps;
    a.cos() * a.sin() + TAU * psi / eps
}

impl CatalogSystem {
    /// Expression of the potential, when there is one.
    pub fn potential_expr(&self) -> Option<&Expr> {
        self.potential.as_ref().map(ScalarField::expr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_builds_with_defaults() {
        for name in NAMES {
            let sys = build(name, &BTreeMap::new()).unwrap();
            assert_eq!(sys.name, name);
        }
    }

    #[test]
    fn bad_params_rejected() {
        let p = |k: &str, v: f64| -> BTreeMap<String, f64> { [(k.to_string(), v)].into() };
        assert!(matches!(build("sn_normal_form", &p("a", 0.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("hopf_normal_form", &p("a", 0.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("s3_overtwisted_form", &p("n", 0.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("s3_overtwisted_form", &p("n", 1.5)), Err(Error::BadParams(_))));
        assert!(matches!(build("lutz_local_model", &p("eps", -1.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("lutz_local_model", &p("c", 0.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("s3_gradient", &p("a", 1.0)), Err(Error::BadParams(_))));
        assert!(matches!(build("nope", &BTreeMap::new()), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn lutz_bracket_positive() {
        for i in 0..=1000 {
            assert!(lutz_bracket(i as f64 / 1000.0, 1.0) > 0.0);
        }
        assert_eq!(lutz_bracket(0.0, 1.0), 0.5);
    }
}
