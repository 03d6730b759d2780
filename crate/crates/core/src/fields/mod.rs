//! Scalar and vector fields, descent fields, flow integration and the
//! round-handle perturbation along a singular link.

pub mod ode;
mod perturb;

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{self, Expr};
use crate::geometry::{Chart, OneForm};
use crate::linalg::{self, dot, norm, Mat};
use crate::scalar::Scalar;

pub use ode::StopReason;
pub use perturb::rh_perturbation;
use perturb::Tube;

/// A closed-form function on the chart together with its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    expr: Expr,
    grad: Vec<Expr>,
}

impl ScalarField {
    pub fn new(expr: Expr, dim: usize) -> Self {
        let grad = (0..dim).map(|i| expr.diff(i)).collect();
        Self { expr, grad }
    }

    pub fn parse(text: &str, chart: &Chart, params: &BTreeMap<String, f64>) -> Result<Self> {
        let e = Expr::parse(text, chart.coord_names(), params)?;
        Ok(Self::new(e, chart.dim()))
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn grad_exprs(&self) -> &[Expr] {
        &self.grad
    }

    pub fn eval<T: Scalar>(&self, p: &[T]) -> T {
        self.expr.eval(p)
    }

    /// Ambient gradient.
    pub fn grad<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        self.grad.iter().map(|g| g.eval(p)).collect()
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Symbolic {
        comps: Vec<Expr>,
        /// `jac[i][j] = d X_i / d x_j`
        jac: Vec<Vec<Expr>>,
    },
    Perturbed {
        base: Box<VectorField>,
        tube: Tube,
    },
}

/// Vector field on a chart, in ambient coordinates.
#[derive(Debug, Clone)]
pub struct VectorField {
    chart: Chart,
    repr: Repr,
}

impl VectorField {
    pub fn from_exprs(chart: Chart, comps: Vec<Expr>) -> Result<Self> {
        let d = chart.dim();
        if comps.len() != d {
            return Err(Error::Invalid(format!(
                "vector field needs {d} components, got {}",
                comps.len()
            )));
        }
        if let Some(v) = comps.iter().filter_map(Expr::max_var).max() {
            if v >= d {
                return Err(Error::Invalid(format!("component references variable {v}")));
            }
        }
        let jac = comps
            .iter()
            .map(|c| (0..d).map(|j| c.diff(j)).collect())
            .collect();
        Ok(Self {
            chart,
            repr: Repr::Symbolic { comps, jac },
        })
    }

    pub fn parse(chart: Chart, texts: &[&str], params: &BTreeMap<String, f64>) -> Result<Self> {
        let names = chart.coord_names();
        let comps = texts
            .iter()
            .map(|t| Expr::parse(t, names, params))
            .collect::<Result<Vec<_>>>()?;
        Self::from_exprs(chart, comps)
    }

    pub fn zero(chart: Chart) -> Self {
        let d = chart.dim();
        Self::from_exprs(chart, vec![expr::constant(0.0); d]).unwrap()
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    /// Component expressions, for closed-form fields.
    pub fn components(&self) -> Option<&[Expr]> {
        match &self.repr {
            Repr::Symbolic { comps, .. } => Some(comps),
            Repr::Perturbed { .. } => None,
        }
    }

    pub fn eval<T: Scalar>(&self, p: &[T]) -> Vec<T> {
        match &self.repr {
            Repr::Symbolic { comps, .. } => comps.iter().map(|c| c.eval(p)).collect(),
            Repr::Perturbed { base, tube } => {
                let mut v = base.eval(p);
                let q: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
                let w = tube.push(&q, &self.chart);
                for (vi, wi) in v.iter_mut().zip(w) {
                    *vi += T::lit(wi);
                }
                v
            }
        }
    }

    /// Ambient Jacobian. Closed-form fields differentiate exactly; the
    /// perturbation term of a perturbed field uses central differences.
    pub fn jacobian<T: Scalar>(&self, p: &[T]) -> Mat<T> {
        match &self.repr {
            Repr::Symbolic { jac, .. } => {
                let d = jac.len();
                let mut m = Mat::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = jac[i][j].eval(p);
                    }
                }
                m
            }
            Repr::Perturbed { base, tube } => {
                let mut m = base.jacobian(p);
                let q: Vec<f64> = p.iter().map(|x| x.as_f64()).collect();
                let d = q.len();
                for j in 0..d {
                    let h = 1e-6 * q[j].abs().max(1.0);
                    let mut a = q.clone();
                    a[j] += h;
                    let mut b = q.clone();
                    b[j] -= h;
                    let (fa, fb) = (tube.push(&a, &self.chart), tube.push(&b, &self.chart));
                    for i in 0..d {
                        m[(i, j)] += T::lit((fa[i] - fb[i]) / (2.0 * h));
                    }
                }
                m
            }
        }
    }

    /// Jacobian restricted to `T_p`, in the chart's tangent frame at `p`
    /// (3x3 on either chart). Also returns the frame.
    pub fn tangent_jacobian<T: Scalar>(&self, p: &[T]) -> (Mat<T>, Vec<Vec<T>>) {
        let j = self.jacobian(p);
        let frame = self.chart.tangent_frame(p);
        let b = Mat::from_cols(&frame);
        (j.restrict(&b), frame)
    }

    /// Field written in the tangent frame at `p`.
    pub fn tangent_components<T: Scalar>(&self, p: &[T], frame: &[Vec<T>]) -> Vec<T> {
        let v = self.eval(p);
        frame.iter().map(|f| dot(f, &v)).collect()
    }

    pub(crate) fn perturbed(base: VectorField, tube: Tube) -> Self {
        Self {
            chart: base.chart.clone(),
            repr: Repr::Perturbed {
                base: Box::new(base),
                tube,
            },
        }
    }

    /// Component-wise display using the chart's coordinate names.
    pub fn describe(&self) -> Vec<String> {
        let names = self.chart.coord_names();
        match &self.repr {
            Repr::Symbolic { comps, .. } => {
                comps.iter().map(|c| c.display(names).to_string()).collect()
            }
            Repr::Perturbed { base, tube } => {
                let mut out = base.describe();
                out.push(format!("+ {} * bump * tangent (radius {})", tube.eps, tube.radius));
                out
            }
        }
    }
}

/// Descent field `-grad Psi`; on the sphere the ambient gradient is first
/// projected onto the tangent space.
pub fn gradient(psi: &ScalarField, chart: &Chart) -> VectorField {
    let g = psi.grad_exprs();
    let comps = match chart {
        Chart::Box { .. } => g.iter().map(|e| expr::neg(e.clone())).collect(),
        Chart::Sphere => {
            // -(grad - <grad, x> x)
            let radial = (0..4).fold(expr::constant(0.0), |acc, i| {
                expr::add(acc, expr::mul(g[i].clone(), expr::var(i)))
            });
            (0..4)
                .map(|i| {
                    expr::neg(expr::sub(
                        g[i].clone(),
                        expr::mul(radial.clone(), expr::var(i)),
                    ))
                })
                .collect()
        }
    };
    VectorField::from_exprs(chart.clone(), comps).expect("dimension matches chart")
}

/// What to watch along a trajectory.
#[derive(Debug, Clone, Copy, Default)]
pub struct Monitor<'a> {
    pub form: Option<&'a OneForm>,
    pub potential: Option<&'a ScalarField>,
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions<T> {
    /// Mixed absolute/relative local error tolerance.
    pub tol: T,
    pub h_min: T,
    pub h_max: Option<T>,
    pub max_steps: usize,
    /// Below this speed the trajectory is considered to have reached an
    /// equilibrium.
    pub speed_floor: T,
}

impl<T: Scalar> Default for IntegrateOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::tol(1e-10),
            h_min: T::tol(1e-14),
            h_max: None,
            max_steps: 2_000_000,
            speed_floor: T::tol(1e-10),
        }
    }
}

impl<T: Scalar> IntegrateOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryStats<T> {
    pub stop: StopReason,
    pub steps: usize,
    pub rejected: usize,
    /// Largest `|alpha(x')| / (|alpha| max(|x'|, 1e-6 max_speed))` over
    /// samples.
    pub max_tangency_residual: Option<T>,
    /// Largest `| |p| - 1 |` on the sphere.
    pub max_norm_drift: Option<T>,
    pub psi_min: Option<T>,
    pub psi_max: Option<T>,
    /// Consecutive sample pairs where the potential increased beyond
    /// rounding.
    pub psi_increases: usize,
    /// Pairs where the potential failed to strictly decrease although the
    /// speed exceeded `1e-6`.
    pub psi_stalls: usize,
    pub max_speed: T,
    pub min_speed: T,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T = f64> {
    pub samples: Vec<(T, Vec<T>)>,
    /// Potential at each sample, when monitored.
    pub psi: Option<Vec<T>>,
    pub stats: TrajectoryStats<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn endpoint(&self) -> &[T] {
        &self.samples.last().expect("at least the initial sample").1
    }

    /// Rows `[t, x...]`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|(t, p)| {
                std::iter::once(t.as_f64())
                    .chain(p.iter().map(|x| x.as_f64()))
                    .collect()
            })
            .collect()
    }
}

/// Integrates the flow of `field` from `p0` for time `duration`.
pub fn integrate<T: Scalar>(
    field: &VectorField,
    p0: &[T],
    duration: T,
    opts: &IntegrateOptions<T>,
    monitor: Monitor<'_>,
) -> Result<Trajectory<T>> {
    let chart = field.chart().clone();
    if p0.len() != chart.dim() {
        return Err(Error::Invalid(format!(
            "start point has {} coordinates, chart needs {}",
            p0.len(),
            chart.dim()
        )));
    }
    let start = chart.retract(p0);
    if !chart.contains(&start) {
        return Err(Error::Invalid(format!("start point {:?} outside chart", start)));
    }
    let ode_opts = ode::OdeOptions {
        rtol: opts.tol,
        atol: opts.tol,
        h_min: opts.h_min,
        h_max: opts.h_max,
        max_steps: opts.max_steps,
    };
    let sphere = chart.is_sphere();
    let run = ode::solve(
        |_, y: &[T]| field.eval(y),
        T::zero(),
        &start,
        duration,
        &ode_opts,
        |y: &mut Vec<T>| {
            if sphere {
                *y = chart.retract(y);
            }
        },
        |_, y: &[T], f: &[T]| {
            if !chart.contains(y) {
                Some(StopReason::DomainExit)
            } else if norm(f) < opts.speed_floor {
                Some(StopReason::Equilibrium)
            } else {
                None
            }
        },
    )?;
    let mut samples = run.samples;
    if run.reason == StopReason::DomainExit && samples.len() > 1 {
        samples.pop();
    }

    let mut stats = TrajectoryStats {
        stop: run.reason,
        steps: samples.len() - 1,
        rejected: run.rejected,
        max_tangency_residual: None,
        max_norm_drift: None,
        psi_min: None,
        psi_max: None,
        psi_increases: 0,
        psi_stalls: 0,
        max_speed: T::zero(),
        min_speed: T::infinity(),
    };
    let speeds: Vec<T> = samples.iter().map(|(_, p)| norm(&field.eval(p))).collect();
    for &s in &speeds {
        stats.max_speed = stats.max_speed.max(s);
        stats.min_speed = stats.min_speed.min(s);
    }
    if let Some(form) = monitor.form {
        // Speeds below this share of the peak carry a direction set by
        // rounding, so they are measured against the floor instead.
        let floor = stats.max_speed * T::tol(1e-6);
        let r = samples
            .iter()
            .zip(&speeds)
            .map(|((_, p), &s)| {
                let x = field.eval(p);
                let a = form.tangential(p);
                let na = norm(&a);
                let d = na * s.max(floor);
                if d == T::zero() {
                    T::zero()
                } else {
                    dot(&a, &x).abs() / d
                }
            })
            .fold(T::zero(), T::max);
        stats.max_tangency_residual = Some(r);
    }
    if sphere {
        let d = samples
            .iter()
            .map(|(_, p)| (norm(p) - T::one()).abs())
            .fold(T::zero(), T::max);
        stats.max_norm_drift = Some(d);
    }
    let psi = monitor.potential.map(|psi| {
        let values: Vec<T> = samples.iter().map(|(_, p)| psi.eval(p)).collect();
        let slack = T::epsilon() * T::lit(64.0);
        for (i, w) in values.windows(2).enumerate() {
            let allowance = slack * w[0].abs().max(T::one());
            if w[1] > w[0] + allowance {
                stats.psi_increases += 1;
            }
            if w[1] >= w[0] && speeds[i] > T::tol(1e-6) {
                stats.psi_stalls += 1;
            }
        }
        stats.psi_min = values.iter().copied().reduce(T::min);
        stats.psi_max = values.iter().copied().reduce(T::max);
        values
    });
    Ok(Trajectory {
        samples,
        psi,
        stats,
    })
}

/// Transverse stability data of a closed orbit.
#[derive(Debug, Clone, Serialize)]
pub struct FloquetReport {
    /// Return time to the section through the start point.
    pub period: f64,
    /// Distance between start and return point.
    pub return_gap: f64,
    /// The two nontrivial multipliers (the flow direction is factored out).
    pub multipliers: [(f64, f64); 2],
    pub max_modulus: f64,
}

/// Integrates the variational equations around the closed orbit through `p0`
/// and returns the transverse Floquet multipliers.
///
/// The orbit is followed until it crosses the hyperplane through `p0`
/// normal to the flow, after at least half of `period_hint`.
pub fn floquet(field: &VectorField, p0: &[f64], period_hint: f64, tol: f64) -> Result<FloquetReport> {
    let chart = field.chart().clone();
    let d = chart.dim();
    let p0 = chart.retract(p0);
    let v0 = field.eval(&p0);
    let t0 = linalg::normalized(&v0, 1e-14)
        .ok_or_else(|| Error::Invalid("field vanishes at the orbit start point".into()))?;

    let rhs = |_: f64, y: &[f64]| -> Vec<f64> {
        let p = &y[..d];
        let mut out = field.eval(p);
        let j = field.jacobian(p);
        // Phi' = J Phi, Phi stored row-major after the point
        for r in 0..d {
            for c in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += j[(r, k)] * y[d + k * d + c];
                }
                out.push(s);
            }
        }
        out
    };
    let mut y0 = p0.clone();
    for r in 0..d {
        for c in 0..d {
            y0.push(if r == c { 1.0 } else { 0.0 });
        }
    }
    let section = |y: &[f64]| dot(&linalg::sub(&y[..d], &p0), &t0);
    let opts = ode::OdeOptions {
        rtol: tol,
        atol: tol,
        h_min: 1e-14,
        h_max: Some(period_hint / 64.0),
        max_steps: 5_000_000,
    };
    let sphere = chart.is_sphere();
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut crossing: Option<((f64, Vec<f64>), (f64, Vec<f64>))> = None;
    let run = ode::solve(
        rhs,
        0.0,
        &y0,
        4.0 * period_hint,
        &opts,
        |y: &mut Vec<f64>| {
            if sphere {
                let n = norm(&y[..d]);
                for v in y[..d].iter_mut() {
                    *v /= n;
                }
            }
        },
        |t, y, _| {
            let out = match &prev {
                Some((tp, yp)) if t > 0.5 * period_hint && section(yp) < 0.0 && section(y) >= 0.0 => {
                    crossing = Some(((*tp, yp.clone()), (t, y.to_vec())));
                    Some(StopReason::Event)
                }
                _ => None,
            };
            prev = Some((t, y.to_vec()));
            out
        },
    )?;
    let ((ta, ya), _) = match (run.reason, crossing) {
        (StopReason::Event, Some(c)) => c,
        _ => {
            return Err(Error::Invalid(
                "orbit did not return to the start section".into(),
            ))
        }
    };
    // secant refinement of the crossing with single steps from the bracket start
    let mut f = |t: f64, y: &[f64]| rhs(t, y);
    let k1 = f(ta, &ya);
    let (mut lo, mut hi) = (0.0f64, run.samples.last().unwrap().0 - ta);
    let (mut glo, mut ghi) = (section(&ya), {
        let (y, _, _) = ode::step(&mut f, ta, &ya, &k1, hi);
        section(&y)
    });
    let mut y_cross = ya.clone();
    let mut h_cross = 0.0;
    for _ in 0..60 {
        let h = if ghi != glo { lo - glo * (hi - lo) / (ghi - glo) } else { 0.5 * (lo + hi) };
        let h = h.clamp(lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo));
        let (y, _, _) = ode::step(&mut f, ta, &ya, &k1, h);
        let g = section(&y);
        y_cross = y;
        h_cross = h;
        if g.abs() < 1e-14 || hi - lo < 1e-15 {
            break;
        }
        if g < 0.0 {
            lo = h;
            glo = g;
        } else {
            hi = h;
            ghi = g;
        }
    }
    let mut p_ret = y_cross[..d].to_vec();
    if sphere {
        p_ret = chart.retract(&p_ret);
    }
    let mut phi = Mat::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            phi[(r, c)] = y_cross[d + r * d + c];
        }
    }
    // monodromy on T_p0 (the return point is within tolerance of p0)
    let frame = chart.tangent_frame(&p0);
    let b = Mat::from_cols(&frame);
    let m3 = phi.restrict(&b);
    let t_local: Vec<f64> = frame.iter().map(|f| dot(f, &t0)).collect();
    let blk = linalg::quotient_block(&m3, &t_local);
    let (l1, l2) = linalg::eig2(blk[0][0], blk[0][1], blk[1][0], blk[1][1]);
    let modulus = |c: Complex<f64>| c.norm();
    Ok(FloquetReport {
        period: ta + h_cross,
        return_gap: linalg::dist(&p_ret, &p0),
        multipliers: [(l1.re, l1.im), (l2.re, l2.im)],
        max_modulus: modulus(l1).max(modulus(l2)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxc() -> Chart {
        Chart::new_box([[-2.0, 2.0]; 3]).unwrap()
    }

    fn s3_psi() -> ScalarField {
        ScalarField::parse("0.5*(x1^2 + x2^2) - 0.5*(x3^2 + x4^2)", &Chart::Sphere, &BTreeMap::new())
            .unwrap()
    }

    #[test]
    fn gradient_of_bowl() {
        let psi = ScalarField::parse("0.5*(x^2+y^2+z^2)", &boxc(), &BTreeMap::new()).unwrap();
        let x = gradient(&psi, &boxc());
        assert_eq!(x.eval(&[1.0, -2.0, 0.5]), vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn sphere_gradient_examples() {
        let x = gradient(&s3_psi(), &Chart::Sphere);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let v = x.eval(&[r, 0.0, r, 0.0]);
        for (a, b) in v.iter().zip([-r, 0.0, r, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(x.eval(&[0.0, 0.0, 1.0, 0.0]), vec![0.0; 4]);
        // tangent everywhere on the sphere
        for p in crate::geometry::hopf_grid(4, 5, 6) {
            assert!(dot(&x.eval(&p), &p).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_gradient_matches_finite_differences() {
        let psi = ScalarField::parse("sin(x*y) + exp(z)*x^3 - atan2(y, 1 + x^2)", &boxc(), &BTreeMap::new())
            .unwrap();
        let mut state = 12345u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..50 {
            let p = [rnd(), rnd(), rnd()];
            let g = psi.grad(&p);
            for i in 0..3 {
                let h = 1e-5 * p[i].abs().max(1.0);
                let mut a = p;
                a[i] += h;
                let mut b = p;
                b[i] -= h;
                let fd = (psi.eval(&a) - psi.eval(&b)) / (2.0 * h);
                assert!((g[i] - fd).abs() <= 1e-6 * g[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn linear_flow_endpoint() {
        let x = VectorField::parse(boxc(), &["-x", "-y", "-z"], &BTreeMap::new()).unwrap();
        let tr = integrate(&x, &[1.0, 0.0, 0.0], 1.0, &IntegrateOptions::default(), Monitor::default()).unwrap();
        let end = tr.endpoint();
        assert!((end[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(tr.stats.stop, StopReason::Horizon);
        assert!(tr.samples.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn linear_flow_in_single_precision() {
        let x = VectorField::parse(boxc(), &["-x", "-y", "-z"], &BTreeMap::new()).unwrap();
        let tr = integrate(&x, &[1.0f32, 0.0, 0.0], 1.0, &IntegrateOptions::with_tol(1e-6), Monitor::default())
            .unwrap();
        assert!((tr.endpoint()[0] - (-1.0f32).exp()).abs() < 1e-4);
    }

    #[test]
    fn zero_field_stays_put() {
        let x = VectorField::zero(boxc());
        let tr = integrate(&x, &[0.3, 0.1, -0.2], 5.0, &IntegrateOptions::default(), Monitor::default()).unwrap();
        assert_eq!(tr.stats.stop, StopReason::Equilibrium);
        assert!(tr.samples.iter().all(|(_, p)| p == &vec![0.3, 0.1, -0.2]));
    }

    #[test]
    fn domain_exit_is_flagged() {
        let x = VectorField::parse(boxc(), &["1", "0", "0"], &BTreeMap::new()).unwrap();
        let tr = integrate(&x, &[0.0, 0.0, 0.0], 10.0, &IntegrateOptions::default(), Monitor::default()).unwrap();
        assert_eq!(tr.stats.stop, StopReason::DomainExit);
        assert!(tr.samples.iter().all(|(_, p)| p[0] <= 2.0));
    }

    #[test]
    fn sphere_descent_reaches_sink_circle() {
        let psi = s3_psi();
        let x = gradient(&psi, &Chart::Sphere);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let form = OneForm::parse(
            Chart::Sphere,
            &["-0.5*x2", "0.5*x1", "-0.5*x4", "0.5*x3"],
            &BTreeMap::new(),
        )
        .unwrap();
        let tr = integrate(
            &x,
            &[r, 0.0, r, 0.0],
            10.0,
            &IntegrateOptions::default(),
            Monitor {
                form: Some(&form),
                potential: Some(&psi),
            },
        )
        .unwrap();
        let end = tr.endpoint();
        assert!(end[0].hypot(end[1]) < 1e-3);
        assert_eq!(tr.stats.psi_increases, 0);
        assert!(tr.stats.max_norm_drift.unwrap() <= 1e-10);
        assert!(tr.stats.max_tangency_residual.unwrap() <= 1e-8);
    }
}
