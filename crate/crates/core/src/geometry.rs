//! Charts, one-forms and plane fields.
//!
//! Two charts are supported: an axis-aligned box in 3-space with the
//! Euclidean metric, and the unit sphere in 4-space with the induced round
//! metric. Points are plain coordinate vectors in the ambient space (3 or 4
//! entries); tangent vectors on the sphere are ambient vectors orthogonal to
//! the base point.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::fields::{ScalarField, VectorField};
use crate::linalg::{self, det, dot, norm, scale};
use crate::scalar::Scalar;

/// Below this tangential norm a one-form is treated as degenerate.
pub const DEGENERATE_FORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    /// Euclidean box with coordinates `x y z`.
    Box { bounds: [[f64; 2]; 3] },
    /// Unit sphere `S^3` in 4-space with coordinates `x1 x2 x3 x4`.
    Sphere,
}

impl Chart {
    pub fn new_box(bounds: [[f64; 2]; 3]) -> Result<Self> {
        for (axis, [lo, hi]) in bounds.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Invalid(format!(
                    "box axis {axis}: empty interval [{lo}, {hi}]"
                )));
            }
        }
        Ok(Chart::Box { bounds })
    }

    /// Ambient coordinate count.
    pub fn dim(&self) -> usize {
        match self {
            Chart::Box { .. } => 3,
            Chart::Sphere => 4,
        }
    }

    pub fn coord_names(&self) -> &'static [&'static str] {
        match self {
            Chart::Box { .. } => &["x", "y", "z"],
            Chart::Sphere => &["x1", "x2", "x3", "x4"],
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Chart::Sphere)
    }

    pub fn contains<T: Scalar>(&self, p: &[T]) -> bool {
        match self {
            Chart::Box { bounds } => p
                .iter()
                .zip(bounds)
                .all(|(&x, [lo, hi])| x >= T::lit(*lo) && x <= T::lit(*hi)),
            Chart::Sphere => (norm(p) - T::one()).abs() <= T::tol(1e-6),
        }
    }

    /// Maps an ambient point onto the chart (identity on the box,
    /// radial normalisation on the sphere).
    pub fn retract<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        match self {
            Chart::Box { .. } => p.to_vec(),
            Chart::Sphere => scale(p, T::one() / norm(p)),
        }
    }

    /// Orthogonal projection of an ambient vector onto `T_p`.
    pub fn to_tangent<T: Scalar>(&self, p: &[T], v: &[T]) -> Vec<T> {
        match self {
            Chart::Box { .. } => v.to_vec(),
            Chart::Sphere => {
                let c = dot(v, p) / dot(p, p);
                linalg::axpy(v, -c, p)
            }
        }
    }

    /// Positively oriented orthonormal frame of `T_p`: the standard frame on
    /// the box; on the sphere a frame `(f1, f2, f3)` with
    /// `det[p, f1, f2, f3] = +1`.
    pub fn tangent_frame<T: Scalar>(&self, p: &[T]) -> Vec<Vec<T>> {
        match self {
            Chart::Box { .. } => (0..3)
                .map(|i| {
                    let mut e = vec![T::zero(); 3];
                    e[i] = T::one();
                    e
                })
                .collect(),
            Chart::Sphere => {
                let n = scale(p, T::one() / norm(p));
                let mut basis = linalg::complete_basis(&[n], 4);
                if det(&basis) < T::zero() {
                    basis[1] = scale(&basis[1], -T::one());
                }
                basis.split_off(1)
            }
        }
    }

    /// A regular grid of sample points: `n^3` points in the box (cell
    /// centres), or a Hopf-coordinate grid on the sphere.
    pub fn sample_grid(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(n * n * n);
        match self {
            Chart::Box { bounds } => {
                let at = |axis: usize, i: usize| {
                    let [lo, hi] = bounds[axis];
                    lo + (hi - lo) * (i as f64 + 0.5) / n as f64
                };
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            out.push(vec![at(0, i), at(1, j), at(2, k)]);
                        }
                    }
                }
            }
            Chart::Sphere => {
                out = hopf_grid(n, n, n);
            }
        }
        out
    }
}

/// Points `(cos e cos a, cos e sin a, sin e cos b, sin e sin b)` on a
/// regular grid in the Hopf angles; `e` avoids the two degenerate circles.
pub fn hopf_grid(ne: usize, na: usize, nb: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::{FRAC_PI_2, TAU};
    let mut out = Vec::with_capacity(ne * na * nb);
    for i in 0..ne {
        let e = FRAC_PI_2 * (i as f64 + 0.5) / ne as f64;
        for j in 0..na {
            let a = TAU * j as f64 / na as f64;
            for k in 0..nb {
                let b = TAU * k as f64 / nb as f64;
                out.push(vec![
                    e.cos() * a.cos(),
                    e.cos() * a.sin(),
                    e.sin() * b.cos(),
                    e.sin() * b.sin(),
                ]);
            }
        }
    }
    out
}

/// A one-form `sum_i a_i dx_i` with coefficient expressions over the chart's
/// ambient coordinates and their exact partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    chart: Chart,
    coeffs: Vec<Expr>,
    /// `partials[i][j] = d a_i / d x_j`
    partials: Vec<Vec<Expr>>,
}

impl OneForm {
    pub fn new(chart: Chart, coeffs: Vec<Expr>) -> Result<Self> {
        let d = chart.dim();
        if coeffs.len() != d {
            return Err(Error::Invalid(format!(
                "one-form needs {d} coefficients, got {}",
                coeffs.len()
            )));
        }
        if let Some(v) = coeffs.iter().filter_map(Expr::max_var).max() {
            if v >= d {
                return Err(Error::Invalid(format!("coefficient references variable {v}")));
            }
        }
        let partials = coeffs
            .iter()
            .map(|c| (0..d).map(|j| c.diff(j)).collect())
            .collect();
        Ok(Self {
            chart,
            coeffs,
            partials,
        })
    }

    pub fn parse(chart: Chart, texts: &[&str], params: &BTreeMap<String, f64>) -> Result<Self> {
        let names = chart.coord_names();
        let coeffs = texts
            .iter()
            .map(|t| Expr::parse(t, names, params))
            .collect::<Result<Vec<_>>>()?;
        Self::new(chart, coeffs)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    /// Ambient covector at `p`.
    pub fn at<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        self.coeffs.iter().map(|c| c.eval(p)).collect()
    }

    /// Covector restricted to `T_p`, represented by its metric dual in `T_p`.
    pub fn tangential<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        self.chart.to_tangent(p, &self.at(p))
    }

    /// `alpha(v)` at `p`.
    pub fn apply<T: Scalar>(&self, p: &[T], v: &[T]) -> T {
        dot(&self.at(p), v)
    }

    /// Matrix of `d alpha` at `p`: `A_ij = d_i a_j - d_j a_i`.
    pub fn exterior_derivative<T: Scalar>(&self, p: &[T]) -> Vec<Vec<T>> {
        let d = self.coeffs.len();
        let grad: Vec<Vec<T>> = self
            .partials
            .iter()
            .map(|row| row.iter().map(|e| e.eval(p)).collect())
            .collect();
        (0..d)
            .map(|i| (0..d).map(|j| grad[j][i] - grad[i][j]).collect())
            .collect()
    }

    /// Multiplies every coefficient by the same expression.
    pub fn scaled(&self, factor: &Expr) -> Result<Self> {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| expr::mul(factor.clone(), c.clone()))
            .collect();
        Self::new(self.chart.clone(), coeffs)
    }

    /// Divides by the `dz` coefficient, giving `dz + f dx + g dy` on a box
    /// chart. Only the rescaling is performed; eliminating `f` needs a change
    /// of coordinates that is left to the caller.
    pub fn rescaled_to_dz(&self) -> Result<Self> {
        if self.chart.is_sphere() {
            return Err(Error::Invalid("rescaling applies to box charts".into()));
        }
        let c = self.coeffs[2].clone();
        if c.is_zero() {
            return Err(Error::Invalid("dz coefficient vanishes identically".into()));
        }
        let coeffs = vec![
            expr::div(self.coeffs[0].clone(), c.clone()),
            expr::div(self.coeffs[1].clone(), c.clone()),
            expr::constant(1.0),
        ];
        Self::new(self.chart.clone(), coeffs)
    }

    /// The function `g` when the form is literally `dz + g dy`.
    pub fn normal_form_g(&self) -> Option<Expr> {
        if self.chart.is_sphere() {
            return None;
        }
        (self.coeffs[0].is_zero() && self.coeffs[2] == expr::constant(1.0))
            .then(|| self.coeffs[1].clone())
    }

    /// The form `dz + g dy` on a box chart.
    pub fn normal_form(chart: Chart, g: Expr) -> Result<Self> {
        Self::new(chart, vec![expr::constant(0.0), g, expr::constant(1.0)])
    }

    fn tangential_checked<T: Scalar>(&self, p: &[T]) -> Result<Vec<T>> {
        let a = self.tangential(p);
        let n = norm(&a);
        if !(n >= T::tol(DEGENERATE_FORM)) {
            return Err(Error::DegenerateForm {
                point: p.iter().map(|x| x.as_f64()).collect(),
                norm: n.as_f64(),
            });
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

/// Plane field given as the kernel of a one-form.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    pub form: OneForm,
    pub orientation: Orientation,
}

impl PlaneField {
    pub fn new(form: OneForm) -> Self {
        Self {
            form,
            orientation: Orientation::Positive,
        }
    }

    pub fn chart(&self) -> &Chart {
        self.form.chart()
    }
}

/// Orthonormal basis `(e1, e2)` of the plane at `p`, ordered so that
/// `(alpha#, e1, e2)` is positively oriented in the chart frame (reversed
/// for [`Orientation::Negative`]).
pub fn plane_basis<T: Scalar>(pf: &PlaneField, p: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    let chart = pf.chart();
    let a = pf.form.tangential_checked(p)?;
    let frame = chart.tangent_frame(p);
    let local: Vec<T> = frame.iter().map(|f| dot(f, &a)).collect();
    let n = scale(&local, T::one() / norm(&local));
    let mut b = linalg::complete_basis(&[n], 3);
    if det(&b) < T::zero() {
        b.swap(1, 2);
    }
    if pf.orientation == Orientation::Negative {
        b.swap(1, 2);
    }
    let lift = |c: &[T]| -> Vec<T> {
        let mut v = vec![T::zero(); p.len()];
        for (k, f) in frame.iter().enumerate() {
            for (vi, &fi) in v.iter_mut().zip(f) {
                *vi += c[k] * fi;
            }
        }
        v
    };
    Ok((lift(&b[1]), lift(&b[2])))
}

/// `(alpha ^ d alpha)(f1, f2, f3)` on the oriented unit tangent frame at `p`.
pub fn frobenius_density<T: Scalar>(form: &OneForm, p: &[T]) -> T {
    let frame = form.chart().tangent_frame(p);
    let a = form.at(p);
    let da = form.exterior_derivative(p);
    let two = |u: &[T], v: &[T]| -> T {
        let mut s = T::zero();
        for (i, row) in da.iter().enumerate() {
            s += u[i] * dot(row, v);
        }
        s
    };
    let (f1, f2, f3) = (&frame[0], &frame[1], &frame[2]);
    dot(&a, f1) * two(f2, f3) - dot(&a, f2) * two(f1, f3) + dot(&a, f3) * two(f1, f2)
}

/// Orthogonal projection of `v` onto the plane at `p`.
pub fn project_vector<T: Scalar>(pf: &PlaneField, v: &[T], p: &[T]) -> Result<Vec<T>> {
    let chart = pf.chart();
    let a = pf.form.tangential_checked(p)?;
    let vt = chart.to_tangent(p, v);
    let c = dot(&a, &vt) / dot(&a, &a);
    Ok(linalg::axpy(&vt, -c, &a))
}

/// Relative tangency residual `|alpha(v)| / (|alpha_T| |v|)` (0 for `v = 0`).
pub fn tangency_residual<T: Scalar>(form: &OneForm, p: &[T], v: &[T]) -> T {
    let nv = norm(v);
    if nv == T::zero() {
        return T::zero();
    }
    let a = form.tangential(p);
    let na = norm(&a);
    if na == T::zero() {
        return T::zero();
    }
    dot(&a, v).abs() / (na * nv)
}

/// Angle between a tangent direction and the plane at `p`.
pub fn angle_to_plane<T: Scalar>(form: &OneForm, p: &[T], v: &[T]) -> T {
    tangency_residual(form, p, v).min(T::one()).asin()
}

/// One-parameter family `F_z(x, y) = (f1, f2)` of planar vector fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarFamily {
    pub f1: Expr,
    pub f2: Expr,
}

impl PlanarFamily {
    pub fn new(f1: Expr, f2: Expr) -> Self {
        Self { f1, f2 }
    }

    pub fn parse(f1: &str, f2: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let names = ["x", "y", "z"];
        Ok(Self {
            f1: Expr::parse(f1, &names, params)?,
            f2: Expr::parse(f2, &names, params)?,
        })
    }

    pub fn eval<T: Scalar>(&self, p: &[T]) -> [T; 2] {
        [self.f1.eval(p), self.f2.eval(p)]
    }
}

/// Field `(f1, f2, -g f2)` tangent to `ker(dz + g dy)`; its zeros are the
/// zeros of `F`.
pub fn lift_family(chart: &Chart, family: &PlanarFamily, g: &ScalarField) -> VectorField {
    let origin = [0.0f64; 3];
    let g0 = g.expr().eval(&origin);
    if g0.abs() > 1e-12 {
        log::warn!("lift_family: g(0,0,0) = {g0:e}, expected 0 for the normal form");
    }
    let z = expr::neg(expr::mul(g.expr().clone(), family.f2.clone()));
    VectorField::from_exprs(chart.clone(), vec![family.f1.clone(), family.f2.clone(), z])
        .expect("three components on a box chart")
}

/// Inverse of [`lift_family`]: `(X1, X2)`, after checking `X3 + g X2 = 0` on
/// a 100-point grid.
pub fn reduce_to_family(field: &VectorField, g: &ScalarField) -> Result<PlanarFamily> {
    let comps = field.components().ok_or_else(|| {
        Error::Invalid("reduce_to_family needs a closed-form field".to_string())
    })?;
    let chart = field.chart();
    let Chart::Box { bounds } = chart else {
        return Err(Error::Invalid("reduce_to_family needs a box chart".into()));
    };
    let residual_expr = expr::add(
        comps[2].clone(),
        expr::mul(g.expr().clone(), comps[1].clone()),
    );
    let samples = box_samples(bounds, [5, 5, 4]);
    for p in &samples {
        let r: f64 = residual_expr.eval(p);
        let scale = field.eval(p).iter().fold(1.0f64, |m, c: &f64| m.max(c.abs()));
        if !(r.abs() <= 1e-10 * scale) {
            return Err(Error::NotTangent {
                point: p.clone(),
                residual: r,
            });
        }
    }
    Ok(PlanarFamily::new(comps[0].clone(), comps[1].clone()))
}

pub(crate) fn box_samples(bounds: &[[f64; 2]; 3], n: [usize; 3]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let at = |axis: usize, i: usize| {
        let [lo, hi] = bounds[axis];
        lo + (hi - lo) * (i as f64 + 0.5) / n[axis] as f64
    };
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                out.push(vec![at(0, i), at(1, j), at(2, k)]);
            }
        }
    }
    out
}

/// Generalised cross product in 4-space: the vector `n` with
/// `<n, w> = det[a, b, c, w]`.
pub fn cross4<T: Scalar>(a: &[T], b: &[T], c: &[T]) -> Vec<T> {
    (0..4)
        .map(|i| {
            let mut e = vec![T::zero(); 4];
            e[i] = T::one();
            det(&[a.to_vec(), b.to_vec(), c.to_vec(), e])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn boxc() -> Chart {
        Chart::new_box([[-1.0, 1.0]; 3]).unwrap()
    }

    fn form(chart: Chart, t: &[&str]) -> OneForm {
        OneForm::parse(chart, t, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn box_bounds_must_be_nonempty() {
        assert!(Chart::new_box([[0.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).is_err());
        assert!(Chart::new_box([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn plane_basis_of_dz_is_horizontal() {
        let pf = PlaneField::new(form(boxc(), &["0", "0", "1"]));
        let (e1, e2) = plane_basis(&pf, &[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(e1[2], 0.0);
        assert_abs_diff_eq!(e2[2], 0.0);
        assert_abs_diff_eq!(dot(&e1, &e2), 0.0);
        assert_abs_diff_eq!(norm(&e1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn plane_basis_annihilated_by_twisted_form() {
        let pf = PlaneField::new(form(boxc(), &["0", "x", "1"]));
        let p = [1.0f64, 0.0, 0.0];
        let (e1, e2) = plane_basis(&pf, &p).unwrap();
        // covector (0,1,1)/sqrt2
        for e in [&e1, &e2] {
            assert!(pf.form.apply(&p, e).abs() < 1e-15);
            assert!((norm(e) - 1.0).abs() < 1e-15);
        }
        assert!(dot(&e1, &e2).abs() < 1e-15);
        // positively oriented with the normal
        let n = [0.0, 1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        assert!(det(&[n.to_vec(), e1.clone(), e2.clone()]) > 0.0);
        let flipped = PlaneField { orientation: Orientation::Negative, ..pf };
        let (f1, _) = plane_basis(&flipped, &p).unwrap();
        assert_eq!(f1, e2);
    }

    #[test]
    fn plane_basis_on_sphere_is_tangent() {
        let pf = PlaneField::new(form(
            Chart::Sphere,
            &["-0.5*x2", "0.5*x1", "-0.5*x4", "0.5*x3"],
        ));
        for p in [[1.0f64, 0.0, 0.0, 0.0], [0.5, -0.5, 0.5, 0.5]] {
            let (e1, e2) = plane_basis(&pf, &p).unwrap();
            for e in [&e1, &e2] {
                assert!(pf.form.apply(&p, e).abs() < 1e-15);
                assert!(dot(e, &p).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_form_is_reported() {
        let pf = PlaneField::new(form(boxc(), &["x", "0", "0"]));
        assert!(matches!(
            plane_basis(&pf, &[0.0, 0.3, 0.0]),
            Err(Error::DegenerateForm { .. })
        ));
        // radial form on the sphere has no tangential part
        let radial = PlaneField::new(form(Chart::Sphere, &["x1", "x2", "x3", "x4"]));
        assert!(plane_basis(&radial, &[0.0, 1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn frobenius_density_examples() {
        let flat = form(boxc(), &["0", "0", "1"]);
        assert_eq!(frobenius_density(&flat, &[0.3, -0.2, 0.1]), 0.0);
        let twisted = form(boxc(), &["0", "x", "1"]);
        for p in [[0.0, 0.0, 0.0], [0.4, -0.9, 0.7]] {
            assert_abs_diff_eq!(frobenius_density(&twisted, &p), 1.0, epsilon = 1e-15);
        }
        let tight = form(Chart::Sphere, &["-0.5*x2", "0.5*x1", "-0.5*x4", "0.5*x3"]);
        assert_abs_diff_eq!(frobenius_density(&tight, &[1.0, 0.0, 0.0, 0.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn frobenius_density_scales_quadratically() {
        let twisted = form(boxc(), &["y", "x*z", "1 + x^2"]);
        let scaled = twisted.scaled(&expr::constant(3.0)).unwrap();
        let p = [0.2f64, 0.5, -0.3];
        let base = frobenius_density(&twisted, &p);
        assert!((frobenius_density(&scaled, &p) - 9.0 * base).abs() < 1e-13);
    }

    #[test]
    fn projection_examples() {
        let pf = PlaneField::new(form(boxc(), &["0", "x", "1"]));
        let v = project_vector(&pf, &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], -0.5, epsilon = 1e-15);
        let flat = PlaneField::new(form(boxc(), &["0", "0", "1"]));
        assert_eq!(project_vector(&flat, &[0.0, 0.0, 1.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let inplane = [0.3, -0.2, 0.0];
        assert_eq!(project_vector(&flat, &inplane, &[0.0; 3]).unwrap(), inplane.to_vec());
    }

    #[test]
    fn rescaling_exposes_normal_form() {
        let f = form(boxc(), &["0", "2*y", "2"]);
        let r = f.rescaled_to_dz().unwrap();
        let g = r.normal_form_g().unwrap();
        assert_eq!(g.eval(&[0.0, 0.25, 0.0]), 0.25);
        let with_dx = form(boxc(), &["x", "y", "1"]).rescaled_to_dz().unwrap();
        assert!(with_dx.normal_form_g().is_none());
    }

    #[test]
    fn cross4_is_orthogonal() {
        let a = [1.0f64, 2.0, 0.0, -1.0];
        let b = [0.0, 1.0, 3.0, 1.0];
        let c = [2.0, 0.0, 1.0, 1.0];
        let n = cross4(&a, &b, &c);
        for v in [&a, &b, &c] {
            assert!(dot(&n, v).abs() < 1e-12);
        }
    }
}
