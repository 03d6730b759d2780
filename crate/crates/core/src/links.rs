//! Singular links of plane-field flows.
//!
//! A field tangent to a plane field has, generically, a one-dimensional zero
//! set: its three components satisfy one linear relation, so `X = 0` is two
//! independent equations. This module finds that zero set ([`seed_zeros`]),
//! follows it by pseudo-arclength continuation ([`trace_curve`]), computes the
//! spectrum transverse to the curve ([`transverse_spectrum`]) and classifies
//! samples and bifurcations along it ([`classify`]).
//!
//! All linear algebra happens in the chart's tangent frame, so box and sphere
//! charts share one code path: on the sphere a point is moved by
//! `p <- (p + B u) / |p + B u|` with `B` the tangent frame at `p`.

use num_complex::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{integrate, IntegrateOptions, Monitor, StopReason, VectorField};
use crate::geometry::{self, Chart, OneForm, PlanarFamily};
use crate::linalg::{self, dot, norm, Mat};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ContinuationOptions<T> {
    /// Nominal arclength step in chart units.
    pub step: T,
    /// Halving stops here.
    pub min_step: T,
    /// Corrector stops once `|X| <=` this.
    pub newton_tol: T,
    pub max_newton: usize,
    pub max_steps: usize,
    /// `sigma_2 / sigma_1` at or below this means the zero set is not a
    /// curve at that point.
    pub rank_tol: T,
    /// Seeding grid resolution per axis.
    pub grid: usize,
}

impl<T: Scalar> Default for ContinuationOptions<T> {
    fn default() -> Self {
        Self {
            step: T::lit(1e-2),
            min_step: T::lit(1e-2 / 256.0),
            newton_tol: T::tol(1e-12),
            max_newton: 16,
            max_steps: 200_000,
            rank_tol: T::tol(1e-6),
            grid: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions<T> {
    /// `|Re lambda|` at or below this counts as zero.
    pub re_tol: T,
    /// `|Im lambda|` above this makes a pair complex.
    pub im_tol: T,
    /// Bisection target for `|Re lambda|` at an event.
    pub refine_tol: T,
    /// Largest curve-tangent / plane angle accepted as "tangent to the plane".
    pub tangency_angle: T,
}

impl<T: Scalar> Default for ClassifyOptions<T> {
    fn default() -> Self {
        Self {
            re_tol: T::tol(1e-6),
            im_tol: T::tol(1e-6),
            refine_tol: T::tol(1e-8),
            tangency_angle: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointTag {
    Source,
    Sink,
    Saddle,
    SnDegenerate,
    HopfDegenerate,
    Unclassified,
}

impl PointTag {
    pub fn is_degenerate(self) -> bool {
        matches!(self, PointTag::SnDegenerate | PointTag::HopfDegenerate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SaddleNode,
    Hopf,
}

#[derive(Debug, Clone)]
pub struct BifurcationEvent<T> {
    pub location: Vec<T>,
    pub kind: EventKind,
    /// Transverse pair at the refined location.
    pub eigenvalues: [Complex<T>; 2],
    /// The eigenvalue whose real part crossed zero.
    pub crossing: Complex<T>,
    /// Angle between the curve tangent and the plane field.
    pub tangent_angle: Option<T>,
    /// Index of the bracketing segment `(i, i + 1)`.
    pub segment: usize,
}

/// Transverse eigenvalue pair at one sample, or `None` when the curve
/// tangent is ambiguous there.
pub type Spectrum<T> = Option<[Complex<T>; 2]>;

#[derive(Debug, Clone)]
pub struct FixedPointCurve<T = f64> {
    pub samples: Vec<Vec<T>>,
    /// Unit tangents, consistently oriented along the polyline.
    pub tangents: Vec<Vec<T>>,
    pub closed: bool,
    /// Continuation step used.
    pub step: T,
    pub spectra: Vec<Spectrum<T>>,
    /// `sigma_min / sigma_max` of the tangent Jacobian per sample.
    pub sv_ratio: Vec<T>,
    pub tags: Vec<PointTag>,
    pub events: Vec<BifurcationEvent<T>>,
    /// Degenerate samples only occur in isolated runs.
    pub nondegenerate: Option<bool>,
}

impl<T: Scalar> FixedPointCurve<T> {
    fn bare(samples: Vec<Vec<T>>, tangents: Vec<Vec<T>>, closed: bool, step: T) -> Self {
        Self {
            samples,
            tangents,
            closed,
            step,
            spectra: Vec::new(),
            sv_ratio: Vec::new(),
            tags: Vec::new(),
            events: Vec::new(),
            nondegenerate: None,
        }
    }

    /// Builds a curve from a polyline (tangents from central differences).
    pub fn from_polyline(samples: Vec<Vec<T>>, closed: bool) -> Self {
        let n = samples.len();
        let tangents = (0..n)
            .map(|i| {
                let (a, b) = match (closed, i) {
                    (true, _) => ((i + n - 1) % n, (i + 1) % n),
                    (false, 0) => (0, 1.min(n - 1)),
                    (false, i) if i == n - 1 => (i - 1, i),
                    (false, i) => (i - 1, i + 1),
                };
                linalg::normalized(&linalg::sub(&samples[b], &samples[a]), T::zero())
                    .unwrap_or_else(|| vec![T::zero(); samples[0].len()])
            })
            .collect();
        let step = T::zero();
        Self::bare(samples, tangents, closed, step)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Polyline length, including the closing segment of a closed curve.
    pub fn length(&self) -> T {
        let mut l: T = self
            .samples
            .windows(2)
            .map(|w| linalg::dist(&w[0], &w[1]))
            .sum();
        if self.closed && self.samples.len() > 1 {
            l += linalg::dist(&self.samples[0], self.samples.last().unwrap());
        }
        l
    }

    /// Lexicographically smallest sample.
    pub fn min_point(&self) -> Vec<T> {
        self.samples
            .iter()
            .min_by(|a, b| lex_cmp(a, b))
            .cloned()
            .unwrap_or_default()
    }

    /// Distance from `p` to the polyline.
    pub fn distance_to(&self, p: &[T]) -> T {
        let n = self.samples.len();
        let segs = if self.closed { n } else { n.saturating_sub(1) };
        if n == 1 {
            return linalg::dist(p, &self.samples[0]);
        }
        (0..segs)
            .map(|i| segment_distance(p, &self.samples[i], &self.samples[(i + 1) % n]))
            .fold(T::infinity(), T::min)
    }
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    std::cmp::Ordering::Equal
}

fn segment_distance<T: Scalar>(p: &[T], a: &[T], b: &[T]) -> T {
    let ab = linalg::sub(b, a);
    let l2 = dot(&ab, &ab);
    let tau = if l2 > T::zero() {
        (dot(&linalg::sub(p, a), &ab) / l2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    linalg::dist(p, &linalg::axpy(a, tau, &ab))
}

#[derive(Debug, Clone)]
pub struct SingularLink<T = f64> {
    pub curves: Vec<FixedPointCurve<T>>,
}

impl<T: Scalar> SingularLink<T> {
    /// Smallest distance between samples of different curves.
    pub fn min_separation(&self) -> T {
        let mut best = T::infinity();
        for (i, a) in self.curves.iter().enumerate() {
            for b in &self.curves[i + 1..] {
                for p in &a.samples {
                    for q in &b.samples {
                        best = best.min(linalg::dist(p, q));
                    }
                }
            }
        }
        best
    }

    /// Curves are pairwise farther apart than twice their sample spacing.
    pub fn is_disjoint(&self) -> bool {
        let spacing = self
            .curves
            .iter()
            .map(|c| c.step)
            .fold(T::zero(), T::max);
        self.curves.len() < 2 || self.min_separation() > T::lit(2.0) * spacing
    }
}

// ---------------------------------------------------------------------------
// Newton machinery

struct Local<T> {
    frame: Vec<Vec<T>>,
    residual: Vec<T>,
    jac: Mat<T>,
}

fn local<T: Scalar>(field: &VectorField, p: &[T]) -> Local<T> {
    let (jac, frame) = field.tangent_jacobian(p);
    let residual = field.tangent_components(p, &frame);
    Local {
        frame,
        residual,
        jac,
    }
}

fn lift<T: Scalar>(frame: &[Vec<T>], u: &[T]) -> Vec<T> {
    let mut v = vec![T::zero(); frame[0].len()];
    for (f, &c) in frame.iter().zip(u) {
        for (vi, &fi) in v.iter_mut().zip(f) {
            *vi += c * fi;
        }
    }
    v
}

fn move_by<T: Scalar>(chart: &Chart, p: &[T], frame: &[Vec<T>], u: &[T]) -> Vec<T> {
    chart.retract(&linalg::add(p, &lift(frame, u)))
}

/// Newton projection of `p` onto `{X = 0}`. With a constraint `(t, anchor)`
/// the iterate also stays on the hyperplane `<t, q - anchor> = 0`; without
/// one, Gauss-Newton steps are restricted to the plane of the two dominant
/// right singular vectors (the tangent direction of the zero set is left
/// free).
fn correct<T: Scalar>(
    field: &VectorField,
    p: &[T],
    constraint: Option<(&[T], &[T])>,
    opts: &ContinuationOptions<T>,
    max_move: T,
) -> Option<Vec<T>> {
    let chart = field.chart();
    let mut q = p.to_vec();
    for _ in 0..opts.max_newton {
        let loc = local(field, &q);
        let rn = norm(&loc.residual);
        let constraint_gap = constraint.map(|(t, a)| dot(t, &linalg::sub(&q, a)));
        let converged = rn <= opts.newton_tol
            && constraint_gap.map_or(true, |g| g.abs() <= opts.newton_tol.max(T::epsilon() * T::lit(16.0)));
        if converged {
            return Some(q);
        }
        let mut rhs: Vec<T> = loc.residual.iter().map(|&r| -r).collect();
        let u = match constraint {
            Some((t, _)) => {
                let mut rows: Vec<Vec<T>> = (0..3).map(|i| loc.jac.row(i)).collect();
                rows.push(loc.frame.iter().map(|f| dot(f, t)).collect());
                rhs.push(-constraint_gap.unwrap());
                Mat::from_rows(&rows).svd().solve(&rhs, T::epsilon() * T::lit(16.0))
            }
            None => loc.jac.svd().solve_rank(&rhs, T::tol(1e-9), 2),
        };
        let un = norm(&u);
        if !un.is_finite() {
            return None;
        }
        let u = if un > max_move {
            linalg::scale(&u, max_move / un)
        } else {
            u
        };
        q = move_by(chart, &q, &loc.frame, &u);
        if linalg::dist(&q, p) > T::lit(4.0) * max_move {
            return None;
        }
    }
    let rn = norm(&local(field, &q).residual);
    (rn <= opts.newton_tol * T::lit(100.0)).then_some(q)
}

/// Unit null direction of the tangent Jacobian at `p` (ambient vector) and
/// the singular value ratios `(sigma_2 / sigma_1, sigma_3 / sigma_1)`.
fn null_direction<T: Scalar>(field: &VectorField, p: &[T]) -> (Vec<T>, T, T) {
    let loc = local(field, p);
    let svd = loc.jac.svd();
    let s1 = svd.largest();
    let (r2, r3) = if s1 > T::zero() {
        (svd.sigma[1] / s1, svd.sigma[2] / s1)
    } else {
        (T::zero(), T::zero())
    };
    (lift(&loc.frame, &svd.right(2)), r2, r3)
}

/// Zeros of `field` found by Gauss-Newton from every node of a regular grid
/// with `resolution` nodes per axis. Duplicates (within `1e-6`) are merged;
/// the result is sorted lexicographically.
pub fn seed_zeros<T: Scalar>(field: &VectorField, resolution: usize) -> Vec<Vec<T>> {
    let chart = field.chart();
    let opts = ContinuationOptions::<T>::default();
    let max_move = match chart {
        Chart::Box { bounds } => {
            let w = bounds.iter().map(|b| b[1] - b[0]).fold(0.0, f64::max);
            T::lit(0.25 * w)
        }
        Chart::Sphere => T::lit(0.5),
    };
    let mut out: Vec<Vec<T>> = Vec::new();
    for g in chart.sample_grid(resolution) {
        let p: Vec<T> = g.iter().map(|&x| T::lit(x)).collect();
        let Some(q) = correct(field, &p, None, &opts, max_move) else {
            continue;
        };
        if !chart.contains(&q) || norm(&field.eval(&q)) > T::tol(1e-10) {
            continue;
        }
        if out.iter().all(|o| linalg::dist(o, &q) > T::tol(1e-6)) {
            out.push(q);
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out
}

struct March<T> {
    points: Vec<Vec<T>>,
    tangents: Vec<Vec<T>>,
    closed: bool,
}

fn march<T: Scalar>(
    field: &VectorField,
    p0: &[T],
    t0: &[T],
    opts: &ContinuationOptions<T>,
) -> Result<March<T>> {
    let chart = field.chart();
    let h_nom = opts.step;
    let mut points = vec![p0.to_vec()];
    let mut tangents = vec![t0.to_vec()];
    let mut p = p0.to_vec();
    let mut t = t0.to_vec();
    let mut h = h_nom;
    let mut traveled = T::zero();
    let to_f64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();

    for _ in 0..opts.max_steps {
        let step_to = |s: T| -> Option<Vec<T>> {
            let pred = chart.retract(&linalg::axpy(&p, s, &t));
            correct(field, &pred, Some((&t, &pred)), opts, s)
        };
        let Some(q) = step_to(h) else {
            h = h * T::lit(0.5);
            if h < opts.min_step {
                return Err(Error::Continuation(format!(
                    "corrector failed near {:?}",
                    to_f64(&p)
                )));
            }
            continue;
        };
        let (tq, r2, _) = null_direction(field, &q);
        if r2 <= opts.rank_tol {
            return Err(Error::SingularJacobian { point: to_f64(&q) });
        }
        let tq = if dot(&tq, &t) < T::zero() {
            linalg::scale(&tq, -T::one())
        } else {
            tq
        };
        // a sharp turn means the corrector jumped branches
        if dot(&tq, &t) < T::lit(0.5) && h > opts.min_step {
            h = h * T::lit(0.5);
            continue;
        }

        if !chart.contains(&q) {
            // land on the boundary: bisect the arclength of the last step
            let (mut lo, mut hi) = (T::zero(), h);
            let mut last_inside: Option<Vec<T>> = None;
            for _ in 0..60 {
                let mid = T::lit(0.5) * (lo + hi);
                match step_to(mid) {
                    Some(m) if chart.contains(&m) => {
                        lo = mid;
                        last_inside = Some(m);
                    }
                    _ => hi = mid,
                }
            }
            if let Some(m) = last_inside {
                if linalg::dist(&m, &p) > T::tol(1e-12) {
                    let (tm, _, _) = null_direction(field, &m);
                    let tm = if dot(&tm, &t) < T::zero() {
                        linalg::scale(&tm, -T::one())
                    } else {
                        tm
                    };
                    points.push(m);
                    tangents.push(tm);
                }
            }
            return Ok(March {
                points,
                tangents,
                closed: false,
            });
        }

        traveled += linalg::dist(&q, &p);
        let gap = linalg::dist(&q, p0);
        if traveled > T::lit(3.0) * h_nom && gap < h_nom * T::lit(1.01) && dot(&tq, t0) > T::zero() {
            if gap > T::lit(0.25) * h_nom {
                points.push(q);
                tangents.push(tq);
            }
            return Ok(March {
                points,
                tangents,
                closed: true,
            });
        }
        points.push(q.clone());
        tangents.push(tq.clone());
        p = q;
        t = tq;
        h = (h * T::lit(2.0)).min(h_nom);
    }
    Err(Error::Continuation(format!(
        "no closure or exit after {} steps",
        opts.max_steps
    )))
}

/// Follows the zero set of `field` through `seed` by pseudo-arclength
/// continuation until the curve closes up or leaves the chart (in both
/// directions for open curves).
pub fn trace_curve<T: Scalar>(
    field: &VectorField,
    seed: &[T],
    opts: &ContinuationOptions<T>,
) -> Result<FixedPointCurve<T>> {
    let chart = field.chart();
    let seed = chart.retract(seed);
    if norm(&field.eval(&seed)) > T::tol(1e-10) {
        return Err(Error::Invalid(format!(
            "seed is not a zero of the field (|X| = {:e})",
            norm(&field.eval(&seed)).as_f64()
        )));
    }
    let p0 = correct(field, &seed, None, opts, opts.step).unwrap_or(seed);
    let (t0, r2, _) = null_direction(field, &p0);
    if r2 <= opts.rank_tol {
        return Err(Error::SingularJacobian {
            point: p0.iter().map(|x| x.as_f64()).collect(),
        });
    }
    let fwd = march(field, &p0, &t0, opts)?;
    if fwd.closed {
        return Ok(FixedPointCurve::bare(fwd.points, fwd.tangents, true, opts.step));
    }
    let back = march(field, &p0, &linalg::scale(&t0, -T::one()), opts)?;
    let mut points: Vec<Vec<T>> = back.points.iter().skip(1).rev().cloned().collect();
    let mut tangents: Vec<Vec<T>> = back
        .tangents
        .iter()
        .skip(1)
        .rev()
        .map(|v| linalg::scale(v, -T::one()))
        .collect();
    points.extend(fwd.points);
    tangents.extend(fwd.tangents);
    Ok(FixedPointCurve::bare(points, tangents, false, opts.step))
}

/// Transverse pair at a zero `p` with curve direction taken from the null
/// space of the Jacobian: the spectrum of the map induced on `T_p / span{t}`.
pub fn point_spectrum<T: Scalar>(
    field: &VectorField,
    p: &[T],
    rank_tol: T,
) -> (Spectrum<T>, T) {
    let loc = local(field, p);
    let svd = loc.jac.svd();
    let s1 = svd.largest();
    let ratio = if s1 > T::zero() { svd.smallest() / s1 } else { T::zero() };
    if s1 > T::zero() && svd.sigma[1] / s1 <= rank_tol {
        return (None, ratio);
    }
    let t = svd.right(2);
    let b = linalg::quotient_block(&loc.jac, &t);
    let (l1, l2) = linalg::eig2(b[0][0], b[0][1], b[1][0], b[1][1]);
    (Some([l1, l2]), ratio)
}

/// Fills in `spectra` and `sv_ratio` for every sample. Samples whose
/// tangent direction is ambiguous (two-dimensional near-null space) get
/// `None`.
pub fn transverse_spectrum<T: Scalar>(
    field: &VectorField,
    curve: &mut FixedPointCurve<T>,
    opts: &ContinuationOptions<T>,
) {
    let (spectra, ratios) = curve
        .samples
        .iter()
        .map(|p| point_spectrum(field, p, opts.rank_tol))
        .unzip();
    curve.spectra = spectra;
    curve.sv_ratio = ratios;
}

fn tag_of<T: Scalar>(s: &Spectrum<T>, o: &ClassifyOptions<T>) -> PointTag {
    let Some([a, b]) = s else {
        return PointTag::Unclassified;
    };
    let pos = |z: &Complex<T>| z.re > o.re_tol;
    let neg = |z: &Complex<T>| z.re < -o.re_tol;
    if pos(a) && pos(b) {
        PointTag::Source
    } else if neg(a) && neg(b) {
        PointTag::Sink
    } else if (pos(a) && neg(b)) || (neg(a) && pos(b)) {
        PointTag::Saddle
    } else if [a, b]
        .iter()
        .any(|z| z.re.abs() <= o.re_tol && z.im.abs() > o.im_tol)
    {
        PointTag::HopfDegenerate
    } else {
        PointTag::SnDegenerate
    }
}

/// Orders `next` to continue the branches `prev` (minimal total distance).
fn match_pair<T: Scalar>(prev: &[Complex<T>; 2], next: [Complex<T>; 2]) -> [Complex<T>; 2] {
    let keep = (next[0] - prev[0]).norm() + (next[1] - prev[1]).norm();
    let swap = (next[1] - prev[0]).norm() + (next[0] - prev[1]).norm();
    if swap < keep {
        [next[1], next[0]]
    } else {
        next
    }
}

/// Tags every sample, locates bifurcations at sign changes of the real part
/// of a continuously matched eigenvalue branch (refined by bisection along
/// the curve) and records the nondegeneracy verdict. Requires
/// [`transverse_spectrum`] to have run.
pub fn classify<T: Scalar>(
    field: &VectorField,
    curve: &mut FixedPointCurve<T>,
    form: Option<&OneForm>,
    opts: &ClassifyOptions<T>,
    copts: &ContinuationOptions<T>,
) {
    let n = curve.samples.len();
    curve.tags = curve.spectra.iter().map(|s| tag_of(s, opts)).collect();
    curve.events.clear();

    // continuous branches
    let mut branches: Vec<Option<[Complex<T>; 2]>> = Vec::with_capacity(n);
    let mut last: Option<[Complex<T>; 2]> = None;
    for s in &curve.spectra {
        let b = s.map(|pair| match &last {
            Some(prev) => match_pair(prev, pair),
            None => pair,
        });
        if b.is_some() {
            last = b;
        }
        branches.push(b);
    }

    let segs = if curve.closed { n } else { n.saturating_sub(1) };
    for i in 0..segs {
        let j = (i + 1) % n;
        let (Some(bi), Some(bj_raw)) = (branches[i], branches[j]) else {
            continue;
        };
        // the wrap-around segment needs its own matching
        let bj = if j == 0 { match_pair(&bi, bj_raw) } else { bj_raw };
        let crossing: Vec<usize> = (0..2)
            .filter(|&k| (bi[k].re > T::zero()) != (bj[k].re > T::zero()))
            .collect();
        let Some(&k) = crossing.first() else {
            continue;
        };
        if let Some(ev) = refine_event(field, curve, i, j, bi, bj, k, form, opts, copts) {
            curve.events.push(ev);
        }
    }

    // degenerate samples must come in short isolated runs
    let mut run = 0usize;
    let mut ok = n > 0;
    for tag in &curve.tags {
        if tag.is_degenerate() {
            run += 1;
            if run > 2 {
                ok = false;
            }
        } else {
            run = 0;
        }
    }
    curve.nondegenerate = Some(ok);
}

#[allow(clippy::too_many_arguments)]
fn refine_event<T: Scalar>(
    field: &VectorField,
    curve: &FixedPointCurve<T>,
    i: usize,
    j: usize,
    bi: [Complex<T>; 2],
    bj: [Complex<T>; 2],
    k: usize,
    form: Option<&OneForm>,
    opts: &ClassifyOptions<T>,
    copts: &ContinuationOptions<T>,
) -> Option<BifurcationEvent<T>> {
    let chart = field.chart();
    let (a, b) = (&curve.samples[i], &curve.samples[j]);
    let dir = linalg::normalized(&linalg::sub(b, a), T::zero())?;
    let left_positive = bi[k].re > T::zero();
    let seg_len = linalg::dist(a, b);

    let eval_at = |tau: T| -> Option<(Vec<T>, [Complex<T>; 2])> {
        let guess = chart.retract(&linalg::axpy(a, tau, &linalg::sub(b, a)));
        let q = correct(field, &guess, Some((&dir, &guess)), copts, seg_len)?;
        let (s, _) = point_spectrum(field, &q, copts.rank_tol);
        // compare against the linear interpolation of the two end branches
        let w = [
            bi[0] * (T::one() - tau) + bj[0] * tau,
            bi[1] * (T::one() - tau) + bj[1] * tau,
        ];
        Some((q, match_pair(&w, s?)))
    };

    let (mut lo, mut hi) = (T::zero(), T::one());
    let mut best: Option<(Vec<T>, [Complex<T>; 2])> = None;
    if bi[k].re.abs() <= opts.refine_tol {
        best = Some((a.clone(), bi));
    } else if bj[k].re.abs() <= opts.refine_tol {
        best = Some((b.clone(), bj));
    } else {
        for _ in 0..200 {
            let mid = T::lit(0.5) * (lo + hi);
            let (q, pair) = eval_at(mid)?;
            let re = pair[k].re;
            best = Some((q, pair));
            if re.abs() <= opts.refine_tol || hi - lo <= T::epsilon() {
                break;
            }
            if (re > T::zero()) == left_positive {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let (location, pair) = best?;
    let crossing = pair[k];
    let kind = if crossing.im.abs() > opts.im_tol {
        EventKind::Hopf
    } else {
        EventKind::SaddleNode
    };
    let tangent_angle = form.map(|f| {
        let (t, _, _) = null_direction(field, &location);
        geometry::angle_to_plane(f, &location, &t)
    });
    Some(BifurcationEvent {
        location,
        kind,
        eigenvalues: pair,
        crossing,
        tangent_angle,
        segment: i,
    })
}

/// Full pipeline: seed, trace every distinct curve, compute spectra and
/// classify. Curves are returned sorted by their lexicographically smallest
/// sample. On the sphere every curve must close.
pub fn trace_link<T: Scalar>(
    field: &VectorField,
    form: Option<&OneForm>,
    copts: &ContinuationOptions<T>,
    opts: &ClassifyOptions<T>,
) -> Result<SingularLink<T>> {
    let seeds = seed_zeros::<T>(field, copts.grid);
    let mut curves: Vec<FixedPointCurve<T>> = Vec::new();
    for s in seeds {
        let near = curves
            .iter()
            .any(|c| c.distance_to(&s) < T::lit(2.0) * copts.step);
        if near {
            continue;
        }
        let mut c = trace_curve(field, &s, copts)?;
        if field.chart().is_sphere() && !c.closed {
            return Err(Error::InvalidLink(
                "open fixed-point curve on a closed chart".into(),
            ));
        }
        transverse_spectrum(field, &mut c, copts);
        classify(field, &mut c, form, opts, copts);
        curves.push(c);
    }
    curves.sort_by(|a, b| lex_cmp(&a.min_point(), &b.min_point()));
    Ok(SingularLink { curves })
}

/// Result of a Gauss linking integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Linking {
    pub value: i64,
    pub raw: f64,
    /// `|raw - value|`
    pub residual: f64,
}

fn stereographic_pole<T: Scalar>(curves: &[&[Vec<T>]]) -> Vec<T> {
    let h = T::lit(0.5);
    let mut candidates: Vec<Vec<T>> = vec![
        vec![h, h, h, h],
        vec![h, -h, h, -h],
        vec![h, h, -h, -h],
        vec![-h, h, h, -h],
    ];
    for i in 0..4 {
        let mut e = vec![T::zero(); 4];
        e[i] = T::one();
        candidates.push(e);
    }
    candidates
        .into_iter()
        .map(|c| {
            let d = curves
                .iter()
                .flat_map(|cv| cv.iter())
                .map(|p| linalg::dist(p, &c))
                .fold(T::infinity(), T::min);
            (c, d)
        })
        .fold((Vec::new(), -T::one()), |best, cand| if cand.1 > best.1 { cand } else { best })
        .0
}

/// Stereographic projection of points of `S^3` from `pole` into 3-space.
pub fn stereographic<T: Scalar>(points: &[Vec<T>], pole: &[T]) -> Vec<Vec<T>> {
    let basis = linalg::complete_basis(&[pole.to_vec()], 4);
    points
        .iter()
        .map(|p| {
            let s = T::one() - dot(p, pole);
            (1..4).map(|k| dot(p, &basis[k]) / s).collect()
        })
        .collect()
}

/// Gauss linking number of two closed polylines by midpoint quadrature over
/// segment pairs. Sphere curves (4 coordinates) are first projected
/// stereographically from a pole away from both.
pub fn linking_number<T: Scalar>(c1: &[Vec<T>], c2: &[Vec<T>]) -> Result<Linking> {
    if c1.len() < 3 || c2.len() < 3 {
        return Err(Error::InvalidLink("linking needs closed polylines".into()));
    }
    let mut sep = T::infinity();
    for p in c1 {
        for q in c2 {
            sep = sep.min(linalg::dist(p, q));
        }
    }
    if sep < T::lit(1e-3) {
        return Err(Error::CurvesIntersect {
            distance: sep.as_f64(),
        });
    }
    let (a, b) = if c1[0].len() == 4 {
        let pole = stereographic_pole(&[c1, c2]);
        (stereographic(c1, &pole), stereographic(c2, &pole))
    } else {
        (c1.to_vec(), c2.to_vec())
    };
    let segs = |c: &[Vec<T>]| -> Vec<(Vec<T>, Vec<T>)> {
        let n = c.len();
        (0..n)
            .map(|i| {
                let (p, q) = (&c[i], &c[(i + 1) % n]);
                let mid = linalg::scale(&linalg::add(p, q), T::lit(0.5));
                (mid, linalg::sub(q, p))
            })
            .collect()
    };
    let (sa, sb) = (segs(&a), segs(&b));
    let mut total = T::zero();
    for (ma, da) in &sa {
        for (mb, db) in &sb {
            let r = linalg::sub(ma, mb);
            let d = norm(&r);
            total += dot(&r, &linalg::cross3(da, db)) / (d * d * d);
        }
    }
    let raw = (total / (T::lit(4.0) * T::PI())).as_f64();
    let value = raw.round();
    let residual = (raw - value).abs();
    if residual >= 0.1 {
        return Err(Error::RefineNeeded { value: raw, residual });
    }
    Ok(Linking {
        value: value as i64,
        raw,
        residual,
    })
}

/// Linking numbers of every pair of closed curves, `(i, j, lk)` with `i < j`.
pub fn linking_matrix<T: Scalar>(link: &SingularLink<T>) -> Result<Vec<(usize, usize, Linking)>> {
    let mut out = Vec::new();
    for i in 0..link.curves.len() {
        for j in i + 1..link.curves.len() {
            let (a, b) = (&link.curves[i], &link.curves[j]);
            if a.closed && b.closed {
                out.push((i, j, linking_number(&a.samples, &b.samples)?));
            }
        }
    }
    Ok(out)
}

/// Heteroclinic connection along one `z`-slice of the saddle-node unfolding.
#[derive(Debug, Clone, Serialize)]
pub struct Connection {
    pub z: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    /// Target equilibrium `(0, +sqrt(z / a))` of the slice.
    pub target: [f64; 2],
    /// Distance from the endpoint to the target in the `(x, y)` plane.
    pub distance: f64,
    pub connected: bool,
}

/// For each slice `z`, integrates the planar field `F_z` (with `z` frozen)
/// from just right of the saddle `(0, -sqrt(z / a))` along the invariant
/// line `x = 0` and checks arrival within `1e-4` of the node
/// `(0, +sqrt(z / a))`.
pub fn verify_sn_heteroclinics(
    chart: &Chart,
    family: &PlanarFamily,
    a: f64,
    zs: &[f64],
    delta: f64,
) -> Result<Vec<Connection>> {
    if a <= 0.0 {
        return Err(Error::BadParams(format!("heteroclinic check needs a > 0, got {a}")));
    }
    let slice = VectorField::from_exprs(
        chart.clone(),
        vec![family.f1.clone(), family.f2.clone(), crate::expr::constant(0.0)],
    )?;
    let opts = IntegrateOptions::<f64> {
        speed_floor: 1e-12,
        ..IntegrateOptions::default()
    };
    zs.iter()
        .map(|&z| {
            if z <= 0.0 {
                return Err(Error::NoConnection(format!("z = {z}: no equilibria in this slice")));
            }
            let y0 = (z / a).sqrt();
            let start = vec![0.0, -y0 + delta, z];
            let horizon = 80.0 / (y0 * (2.0 * a + 1.0)).min(1.0);
            let traj = integrate(&slice, &start, horizon, &opts, Monitor::default())?;
            if traj.stats.stop == StopReason::DomainExit {
                return Err(Error::NoConnection(format!("z = {z}: trajectory left the chart")));
            }
            let end = traj.endpoint().to_vec();
            let distance = end[0].hypot(end[1] - y0);
            Ok(Connection {
                z,
                start,
                end,
                target: [0.0, y0],
                distance,
                connected: distance <= 1e-4,
            })
        })
        .collect()
}

/// Invariance and stability of the paraboloid `r = sqrt(-z / a)` of the Hopf
/// unfolding on one slice.
#[derive(Debug, Clone, Serialize)]
pub struct ParaboloidCheck {
    pub z: f64,
    /// `None` when `-z / a <= 0` (empty slice).
    pub radius: Option<f64>,
    /// Largest `|r'|` of the planar family on the circle.
    pub drift: f64,
    /// Distance to the paraboloid at start and end, for starts at
    /// `0.9 r` and `1.1 r`.
    pub inner: [f64; 2],
    pub outer: [f64; 2],
    /// Both distances shrank (attracting) or both grew (repelling).
    pub attracting: Option<bool>,
}

/// Checks the invariant paraboloid of the Hopf unfolding: the radial drift
/// of the planar family on `r = sqrt(-z / a)` and the behaviour of nearby
/// trajectories of the lifted field.
pub fn verify_hopf_paraboloid(
    family: &PlanarFamily,
    field: &VectorField,
    a: f64,
    zs: &[f64],
    duration: f64,
) -> Result<Vec<ParaboloidCheck>> {
    if a == 0.0 {
        return Err(Error::BadParams("paraboloid needs a != 0".into()));
    }
    let opts = IntegrateOptions::<f64>::default();
    zs.iter()
        .map(|&z| {
            if -z / a <= 0.0 {
                return Ok(ParaboloidCheck {
                    z,
                    radius: None,
                    drift: 0.0,
                    inner: [0.0; 2],
                    outer: [0.0; 2],
                    attracting: None,
                });
            }
            let r = (-z / a).sqrt();
            let drift = (0..64)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / 64.0;
                    let p = [r * t.cos(), r * t.sin(), z];
                    let [f1, f2] = family.eval(&p);
                    ((p[0] * f1 + p[1] * f2) / r).abs()
                })
                .fold(0.0, f64::max);
            let gap = |p: &[f64]| (p[0].hypot(p[1]) - (-p[2] / a).max(0.0).sqrt()).abs();
            let run = |scale: f64| -> Result<[f64; 2]> {
                let start = [scale * r, 0.0, z];
                let traj = integrate(field, &start, duration, &opts, Monitor::default())?;
                Ok([gap(&start), gap(traj.endpoint())])
            };
            let (inner, outer) = (run(0.9)?, run(1.1)?);
            let shrank = inner[1] < inner[0] && outer[1] < outer[0];
            let grew = inner[1] > inner[0] && outer[1] > outer[0];
            Ok(ParaboloidCheck {
                z,
                radius: Some(r),
                drift,
                inner,
                outer,
                attracting: if shrank {
                    Some(true)
                } else if grew {
                    Some(false)
                } else {
                    None
                },
            })
        })
        .collect()
}
