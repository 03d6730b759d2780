//! Characteristic foliations on parameterized surfaces.
//!
//! A surface is an analytic map `(u, v) -> chart point`. At each point the
//! tangent plane of the surface meets the plane field in a line (or, where
//! the two planes coincide, in the whole plane: a singular point). In
//! surface coordinates that line is the kernel of the pulled-back form
//! `a_u du + a_v dv`, spanned by `(a_v, -a_u)`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fields::VectorField;
use crate::geometry::{self, Chart, OneForm};
use crate::linalg::{self, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    /// Periodic in both `u` and `v`.
    Torus,
    /// Polar: `u` is the radius (centre at `u_range[0] = 0`), `v` the angle.
    Disc,
    /// Periodic in `v` only.
    Annulus,
}

#[derive(Debug, Clone)]
pub struct SurfaceParam {
    pub kind: SurfaceKind,
    pub chart: Chart,
    pub embedding: Vec<Expr>,
    pub u_range: [f64; 2],
    pub v_range: [f64; 2],
    pub grid: [usize; 2],
    partials: [Vec<Expr>; 2],
}

pub const UV: [&str; 2] = ["u", "v"];

impl SurfaceParam {
    pub fn new(
        kind: SurfaceKind,
        chart: Chart,
        embedding: Vec<Expr>,
        u_range: [f64; 2],
        v_range: [f64; 2],
        grid: [usize; 2],
    ) -> Result<Self> {
        if embedding.len() != chart.dim() {
            return Err(Error::Invalid(format!(
                "embedding has {} components, chart needs {}",
                embedding.len(),
                chart.dim()
            )));
        }
        if embedding.iter().any(|e| e.max_var().is_some_and(|m| m > 1)) {
            return Err(Error::Invalid("embedding may only use u and v".into()));
        }
        if !(u_range[0] < u_range[1] && v_range[0] < v_range[1]) {
            return Err(Error::Invalid("empty parameter range".into()));
        }
        if grid[0] < 2 || grid[1] < 2 {
            return Err(Error::Invalid("grid needs at least 2 x 2 nodes".into()));
        }
        if kind == SurfaceKind::Disc && u_range[0] != 0.0 {
            return Err(Error::Invalid("disc radius range must start at 0".into()));
        }
        let partials = [
            embedding.iter().map(|e| e.diff(0)).collect(),
            embedding.iter().map(|e| e.diff(1)).collect(),
        ];
        let s = Self {
            kind,
            chart,
            embedding,
            u_range,
            v_range,
            grid,
            partials,
        };
        s.check_immersion()?;
        Ok(s)
    }

    pub fn parse(
        kind: SurfaceKind,
        chart: Chart,
        embedding: &[&str],
        u_range: [f64; 2],
        v_range: [f64; 2],
        grid: [usize; 2],
        params: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let exprs = embedding
            .iter()
            .map(|t| Expr::parse(t, &UV, params))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, chart, exprs, u_range, v_range, grid)
    }

    pub fn periodic(&self) -> [bool; 2] {
        match self.kind {
            SurfaceKind::Torus => [true, true],
            SurfaceKind::Disc | SurfaceKind::Annulus => [false, true],
        }
    }

    fn period(&self, axis: usize) -> f64 {
        let r = if axis == 0 { self.u_range } else { self.v_range };
        r[1] - r[0]
    }

    /// Wraps periodic coordinates into their fundamental range.
    pub fn wrap(&self, uv: [f64; 2]) -> [f64; 2] {
        let mut out = uv;
        for (axis, per) in self.periodic().into_iter().enumerate() {
            if per {
                let lo = if axis == 0 { self.u_range[0] } else { self.v_range[0] };
                out[axis] = lo + (uv[axis] - lo).rem_euclid(self.period(axis));
            }
        }
        out
    }

    /// Coordinate difference `b - a`, shortest representative on periodic axes.
    pub fn delta(&self, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
        let mut d = [b[0] - a[0], b[1] - a[1]];
        for (axis, per) in self.periodic().into_iter().enumerate() {
            if per {
                let p = self.period(axis);
                d[axis] -= p * (d[axis] / p).round();
            }
        }
        d
    }

    pub fn point(&self, uv: [f64; 2]) -> Vec<f64> {
        self.embedding.iter().map(|e| e.eval(&uv)).collect()
    }

    /// `(dE/du, dE/dv)`.
    pub fn tangents(&self, uv: [f64; 2]) -> [Vec<f64>; 2] {
        [
            self.partials[0].iter().map(|e| e.eval(&uv)).collect(),
            self.partials[1].iter().map(|e| e.eval(&uv)).collect(),
        ]
    }

    pub fn is_centre(&self, uv: [f64; 2]) -> bool {
        self.kind == SurfaceKind::Disc && uv[0].abs() < 1e-14
    }

    /// Two vectors spanning the tangent plane. At a disc centre `dE/dv`
    /// vanishes and two radial directions a quarter turn apart are used.
    pub fn spanning(&self, uv: [f64; 2]) -> [Vec<f64>; 2] {
        if self.is_centre(uv) {
            let a = self.tangents(uv)[0].clone();
            let b = self.tangents([uv[0], uv[1] + FRAC_PI_2])[0].clone();
            [a, b]
        } else {
            self.tangents(uv)
        }
    }

    /// Orthonormal basis of the tangent plane.
    pub fn tangent_basis(&self, uv: [f64; 2]) -> Option<[Vec<f64>; 2]> {
        let [a, b] = self.spanning(uv);
        let e1 = linalg::normalized(&a, 1e-12)?;
        let e2 = linalg::normalized(&linalg::reject(&b, &[e1.clone()]), 1e-12)?;
        Some([e1, e2])
    }

    /// Unit normal inside the chart's tangent space (ambient cross product in
    /// a box, the 4-dimensional cross product with the base point on the
    /// sphere).
    pub fn normal(&self, uv: [f64; 2]) -> Option<Vec<f64>> {
        let [a, b] = self.spanning(uv);
        let n = match self.chart {
            Chart::Sphere => geometry::cross4(&self.point(uv), &a, &b),
            Chart::Box { .. } => linalg::cross3(&a, &b),
        };
        linalg::normalized(&n, 1e-14)
    }

    fn area_element(&self, uv: [f64; 2]) -> f64 {
        let [a, b] = self.spanning(uv);
        let g = dot(&a, &a) * dot(&b, &b) - dot(&a, &b).powi(2);
        g.max(0.0).sqrt()
    }

    /// Grid nodes in row-major order (`u` index outer). Periodic axes omit
    /// the endpoint.
    pub fn nodes(&self) -> Vec<[f64; 2]> {
        let axis = |r: [f64; 2], n: usize, periodic: bool| -> Vec<f64> {
            let d = if periodic { n } else { n - 1 };
            (0..n)
                .map(|i| r[0] + (r[1] - r[0]) * i as f64 / d as f64)
                .collect()
        };
        let per = self.periodic();
        let us = axis(self.u_range, self.grid[0], per[0]);
        let vs = axis(self.v_range, self.grid[1], per[1]);
        us.iter()
            .flat_map(|&u| vs.iter().map(move |&v| [u, v]))
            .collect()
    }

    /// Parameter spacing of the grid per axis.
    pub fn cell(&self) -> [f64; 2] {
        let per = self.periodic();
        let c = |axis: usize| {
            let n = self.grid[axis] as f64;
            self.period(axis) / if per[axis] { n } else { n - 1.0 }
        };
        [c(0), c(1)]
    }

    fn check_immersion(&self) -> Result<()> {
        for uv in self.nodes() {
            if self.area_element(uv) <= 1e-8 {
                return Err(Error::Invalid(format!(
                    "surface is not immersed at (u, v) = ({}, {})",
                    uv[0], uv[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "kind": self.kind,
            "embedding": self.embedding.iter().map(|e| e.display(&UV).to_string()).collect::<Vec<_>>(),
            "u_range": self.u_range,
            "v_range": self.v_range,
            "grid": self.grid,
        })
    }
}

/// Pointwise characteristic line of `form` on `surface`.
#[derive(Debug, Clone, PartialEq)]
pub enum Line {
    /// Unit ambient direction and its coordinate expression.
    Regular { ambient: Vec<f64>, uv: Option<[f64; 2]> },
    /// Tangent plane within the angle threshold of the plane field.
    Singular,
}

/// Sine of the angle between the surface tangent plane and the plane field.
pub fn plane_angle_sine(surface: &SurfaceParam, form: &OneForm, uv: [f64; 2]) -> f64 {
    let p = surface.point(uv);
    let a = form.tangential(&p);
    let an = norm(&a);
    let Some([e1, e2]) = surface.tangent_basis(uv) else {
        return 0.0;
    };
    if an == 0.0 {
        return 0.0;
    }
    (dot(&a, &e1).powi(2) + dot(&a, &e2).powi(2)).sqrt() / an
}

pub fn line_at(surface: &SurfaceParam, form: &OneForm, uv: [f64; 2], singular_angle: f64) -> Line {
    if plane_angle_sine(surface, form, uv) < singular_angle.sin() {
        return Line::Singular;
    }
    let p = surface.point(uv);
    let [a, b] = surface.spanning(uv);
    let (au, av) = (form.apply(&p, &a), form.apply(&p, &b));
    let ambient = linalg::axpy(&linalg::scale(&a, av), -au, &b);
    let Some(dir) = linalg::normalized(&ambient, 0.0) else {
        return Line::Singular;
    };
    let uv_dir = if surface.is_centre(uv) {
        None
    } else {
        let s = norm(&ambient);
        Some([av / s, -au / s])
    };
    Line::Regular {
        ambient: dir,
        uv: uv_dir,
    }
}

#[derive(Debug, Clone)]
pub struct LineFieldSample {
    pub surface: SurfaceParam,
    pub form: OneForm,
    pub singular_angle: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Unit ambient directions, `None` at singular nodes; signs propagated
    /// along each grid row.
    pub directions: Vec<Option<Vec<f64>>>,
    pub singular_nodes: Vec<usize>,
}

impl LineFieldSample {
    /// Line direction in surface coordinates, normalized to unit ambient
    /// speed. `None` at singular points and at a disc centre.
    pub fn uv_direction(&self, uv: [f64; 2]) -> Option<[f64; 2]> {
        match line_at(&self.surface, &self.form, self.surface.wrap(uv), self.singular_angle) {
            Line::Regular { uv, .. } => uv,
            Line::Singular => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .zip(&self.directions)
            .map(|(uv, d)| {
                json!({
                    "uv": uv,
                    "point": self.surface.point(*uv),
                    "direction": d,
                })
            })
            .collect();
        json!({
            "surface": self.surface.to_json(),
            "nodes": nodes,
            "singular_nodes": self.singular_nodes,
        })
    }
}

/// Default plane-angle threshold for singular points (radians).
pub const SINGULAR_ANGLE: f64 = 1e-6;

/// Samples the characteristic foliation of `form` on the surface grid.
pub fn char_foliation(surface: &SurfaceParam, form: &OneForm, singular_angle: f64) -> LineFieldSample {
    let nodes = surface.nodes();
    let nv = surface.grid[1];
    let mut directions = Vec::with_capacity(nodes.len());
    let mut singular_nodes = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for (k, &uv) in nodes.iter().enumerate() {
        if k % nv == 0 {
            prev = None;
        }
        match line_at(surface, form, uv, singular_angle) {
            Line::Singular => {
                singular_nodes.push(k);
                directions.push(None);
            }
            Line::Regular { ambient, .. } => {
                let d = match &prev {
                    Some(p) if dot(p, &ambient) < 0.0 => linalg::scale(&ambient, -1.0),
                    _ => ambient,
                };
                prev = Some(d.clone());
                directions.push(Some(d));
            }
        }
    }
    LineFieldSample {
        surface: surface.clone(),
        form: form.clone(),
        singular_angle,
        nodes,
        directions,
        singular_nodes,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    /// Smallest `|<X, n>| / |X|` over the grid.
    pub min_component: f64,
    pub threshold: f64,
    pub transversal: bool,
    /// Node achieving the minimum.
    pub worst_node: [f64; 2],
}

/// Minimum normalized normal component of `field` over the surface grid.
pub fn surface_transversality(
    field: &VectorField,
    surface: &SurfaceParam,
    threshold: f64,
) -> Result<TransversalityReport> {
    let mut vanishing = Vec::new();
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for (k, uv) in surface.nodes().into_iter().enumerate() {
        let x: Vec<f64> = field.eval(&surface.point(uv));
        let xn = norm(&x);
        if xn < 1e-9 {
            vanishing.push((k / surface.grid[1], k % surface.grid[1]));
            continue;
        }
        let Some(n) = surface.normal(uv) else {
            continue;
        };
        let c = dot(&x, &n).abs() / xn;
        if c < best.0 {
            best = (c, uv);
        }
    }
    if !vanishing.is_empty() {
        return Err(Error::VanishingField { nodes: vanishing });
    }
    Ok(TransversalityReport {
        min_component: best.0,
        threshold,
        transversal: best.0 > threshold,
        worst_node: best.1,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    /// Winding before rounding.
    pub raw: f64,
    /// Nearest integer, when within 0.05.
    pub value: Option<i64>,
    /// `2 * raw` rounded, when `raw` is a half-integer instead.
    pub half_integer: Option<i64>,
    pub residual: f64,
}

fn wrap_angle(a: f64, period: f64) -> f64 {
    a - period * (a / period).round()
}

/// Index of the line field along a closed loop given in surface
/// coordinates: the turning of the loop tangent minus the turning of the
/// line field (tracked modulo `pi`), in full turns.
pub fn curve_index(lf: &LineFieldSample, loop_uv: &[[f64; 2]]) -> Result<IndexReport> {
    let n = loop_uv.len();
    if n < 3 {
        return Err(Error::Invalid("loop needs at least 3 points".into()));
    }
    let surface = &lf.surface;
    let cell = surface.cell();
    for (i, p) in loop_uv.iter().enumerate() {
        for &k in &lf.singular_nodes {
            let d = surface.delta(*p, lf.nodes[k]);
            if d[0].abs() < cell[0] && d[1].abs() < cell[1] {
                return Err(Error::SingularOnLoop { index: i });
            }
        }
    }
    let mut line_angles = Vec::with_capacity(n);
    for (i, &p) in loop_uv.iter().enumerate() {
        let d = lf.uv_direction(p).ok_or(Error::SingularOnLoop { index: i })?;
        line_angles.push(d[1].atan2(d[0]));
    }
    let tangent_angles: Vec<f64> = (0..n)
        .map(|i| {
            let d = surface.delta(loop_uv[i], loop_uv[(i + 1) % n]);
            d[1].atan2(d[0])
        })
        .collect();
    let mut turn_tangent = 0.0;
    let mut turn_line = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        turn_tangent += wrap_angle(tangent_angles[j] - tangent_angles[i], TAU);
        turn_line += wrap_angle(line_angles[j] - line_angles[i], PI);
    }
    let raw = (turn_tangent - turn_line) / TAU;
    let rounded = raw.round();
    let residual = (raw - rounded).abs();
    let (value, half_integer) = if residual < 0.05 {
        (Some(rounded as i64), None)
    } else if (2.0 * raw - (2.0 * raw).round()).abs() < 0.1 {
        (None, Some((2.0 * raw).round() as i64))
    } else {
        (None, None)
    };
    Ok(IndexReport {
        raw,
        value,
        half_integer,
        residual,
    })
}

/// A coordinate-aligned segment in surface coordinates: `axis` is the
/// coordinate that stays fixed at `at`, the other runs over `range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transversal {
    pub axis: usize,
    pub at: f64,
    pub range: [f64; 2],
}

impl Transversal {
    pub fn point(&self, s: f64) -> [f64; 2] {
        let mut p = [0.0; 2];
        p[self.axis] = self.at;
        p[1 - self.axis] = s;
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnOutcome {
    Returned,
    Singular,
    LeftSurface,
    TooLong,
    NotTransverse,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReturnSample {
    pub s: f64,
    /// First-return coordinate along the transversal.
    pub r: Option<f64>,
    pub outcome: ReturnOutcome,
}

#[derive(Debug, Clone, Copy)]
pub struct ReturnOptions {
    /// Arclength step of the leaf integrator.
    pub step: f64,
    /// Leaves longer than this are abandoned.
    pub max_length: f64,
    /// Smallest admissible angle between line and transversal.
    pub min_angle: f64,
}

impl Default for ReturnOptions {
    fn default() -> Self {
        Self {
            step: 2e-3,
            max_length: 20.0,
            min_angle: 1e-2,
        }
    }
}

fn oriented(d: [f64; 2], reference: [f64; 2]) -> [f64; 2] {
    if d[0] * reference[0] + d[1] * reference[1] < 0.0 {
        [-d[0], -d[1]]
    } else {
        d
    }
}

/// First return of the leaf through `transversal.point(s)`, traced in the
/// orientation that crosses the transversal positively.
pub fn first_return(lf: &LineFieldSample, tr: &Transversal, s: f64, opts: &ReturnOptions) -> ReturnSample {
    let surface = &lf.surface;
    let fail = |outcome| ReturnSample { s, r: None, outcome };
    let start = tr.point(s);
    let Some(d0) = lf.uv_direction(start) else {
        return fail(ReturnOutcome::Singular);
    };
    // angle with the transversal, measured in the ambient metric
    let [eu, ev] = surface.tangents(surface.wrap(start));
    let along = if tr.axis == 0 { &ev } else { &eu };
    let line = linalg::axpy(&linalg::scale(&eu, d0[0]), d0[1], &ev);
    let cos = dot(&line, along).abs() / (norm(&line) * norm(along));
    if cos.min(1.0).acos() < opts.min_angle {
        return fail(ReturnOutcome::NotTransverse);
    }
    let mut dir = if d0[tr.axis] < 0.0 { [-d0[0], -d0[1]] } else { d0 };

    let per = surface.periodic();
    let period = surface.period(tr.axis);
    let field = |p: [f64; 2], reference: [f64; 2]| -> Option<[f64; 2]> {
        lf.uv_direction(p).map(|d| oriented(d, reference))
    };
    let mut p = start;
    let mut travelled = 0.0;
    let h = opts.step;
    while travelled < opts.max_length {
        let k1 = dir;
        let add = |a: [f64; 2], s: f64, b: [f64; 2]| [a[0] + s * b[0], a[1] + s * b[1]];
        let Some(k2) = field(add(p, 0.5 * h, k1), k1) else {
            return fail(ReturnOutcome::Singular);
        };
        let Some(k3) = field(add(p, 0.5 * h, k2), k1) else {
            return fail(ReturnOutcome::Singular);
        };
        let Some(k4) = field(add(p, h, k3), k1) else {
            return fail(ReturnOutcome::Singular);
        };
        let q = [
            p[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            p[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        travelled += h;
        for axis in 0..2 {
            if !per[axis] {
                let r = if axis == 0 { surface.u_range } else { surface.v_range };
                if q[axis] < r[0] || q[axis] > r[1] {
                    return fail(ReturnOutcome::LeftSurface);
                }
            }
        }
        // crossings of the fixed coordinate (and its periodic copies)
        let departed = travelled > 4.0 * h;
        let (a, b) = (p[tr.axis] - tr.at, q[tr.axis] - tr.at);
        let crossing = if per[tr.axis] {
            let (ka, kb) = ((a / period).floor(), (b / period).floor());
            (ka != kb).then(|| ka.max(kb) * period)
        } else {
            (a.signum() != b.signum()).then_some(0.0)
        };
        if let (true, Some(target)) = (departed, crossing) {
            let w = (target - a) / (b - a);
            let mut other = p[1 - tr.axis] + w * (q[1 - tr.axis] - p[1 - tr.axis]);
            if per[1 - tr.axis] {
                let pp = surface.period(1 - tr.axis);
                other = tr.range[0] + (other - tr.range[0]).rem_euclid(pp);
            }
            if other >= tr.range[0] && other <= tr.range[1] {
                return ReturnSample {
                    s,
                    r: Some(other),
                    outcome: ReturnOutcome::Returned,
                };
            }
        }
        let Some(nd) = field(q, dir) else {
            return fail(ReturnOutcome::Singular);
        };
        dir = nd;
        p = q;
    }
    fail(ReturnOutcome::TooLong)
}

/// Samples the first-return map at `n` evenly spaced points of the
/// transversal (endpoints included).
pub fn return_map(lf: &LineFieldSample, tr: &Transversal, n: usize, opts: &ReturnOptions) -> Vec<ReturnSample> {
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let s = tr.range[0] + (tr.range[1] - tr.range[0]) * i as f64 / (n - 1) as f64;
            first_return(lf, tr, s, opts)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleStability {
    Attracting,
    Repelling,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClosedLeaf {
    /// Fixed point of the return map on the transversal.
    pub s: f64,
    pub uv: [f64; 2],
    pub point: Vec<f64>,
    /// Estimated derivative of the return map.
    pub slope: f64,
    pub stability: CycleStability,
}

/// Closed leaves crossing the transversal: sign changes of `R(s) - s`
/// between consecutive returning samples, refined by bisection.
pub fn limit_cycles(lf: &LineFieldSample, tr: &Transversal, n: usize, opts: &ReturnOptions) -> Vec<ClosedLeaf> {
    let samples = return_map(lf, tr, n, opts);
    let mut out = Vec::new();
    for w in samples.windows(2) {
        let (Some(ra), Some(rb)) = (w[0].r, w[1].r) else {
            continue;
        };
        let (fa, fb) = (ra - w[0].s, rb - w[1].s);
        if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
            continue;
        }
        let slope = (rb - ra) / (w[1].s - w[0].s);
        let (mut lo, mut hi, mut flo) = (w[0].s, w[1].s, fa);
        let mut root = if fa == 0.0 { lo } else { 0.5 * (lo + hi) };
        if fa != 0.0 {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                root = mid;
                let Some(r) = first_return(lf, tr, mid, opts).r else {
                    break;
                };
                let f = r - mid;
                if f.abs() <= 1e-10 || hi - lo <= 1e-12 {
                    break;
                }
                if f.signum() == flo.signum() {
                    lo = mid;
                    flo = f;
                } else {
                    hi = mid;
                }
            }
        }
        let stability = if (slope.abs() - 1.0).abs() < 1e-4 {
            CycleStability::Degenerate
        } else if slope.abs() < 1.0 {
            CycleStability::Attracting
        } else {
            CycleStability::Repelling
        };
        let uv = tr.point(root);
        out.push(ClosedLeaf {
            s: root,
            uv,
            point: lf.surface.point(uv),
            slope,
            stability,
        });
    }
    out
}
