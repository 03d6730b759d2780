//! `X + eps * f * t`: a bump `f` supported in a tube around a closed link,
//! pushing along the link's unit tangent `t`.

use crate::error::{Error, Result};
use crate::geometry::Chart;
use crate::linalg::{self, dot, norm};
use crate::links::SingularLink;
use crate::scalar::Scalar;

use super::VectorField;

#[derive(Debug, Clone)]
pub(crate) struct Tube {
    curves: Vec<TubeCurve>,
    pub(crate) eps: f64,
    pub(crate) radius: f64,
}

#[derive(Debug, Clone)]
struct TubeCurve {
    points: Vec<Vec<f64>>,
    tangents: Vec<Vec<f64>>,
}

/// Quintic smoothstep in `s = (d / r)^2`: 1 on the core, 0 outside the tube,
/// two continuous derivatives at both ends.
pub(crate) fn bump(d2_over_r2: f64) -> f64 {
    if d2_over_r2 >= 1.0 {
        return 0.0;
    }
    let s = d2_over_r2.max(0.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

impl Tube {
    fn new(curves: Vec<Vec<Vec<f64>>>, eps: f64, radius: f64) -> Self {
        let curves = curves
            .into_iter()
            .map(|points| {
                let n = points.len();
                let tangents = (0..n)
                    .map(|i| {
                        let next = &points[(i + 1) % n];
                        let prev = &points[(i + n - 1) % n];
                        let d = linalg::sub(next, prev);
                        linalg::scale(&d, 1.0 / norm(&d))
                    })
                    .collect();
                TubeCurve { points, tangents }
            })
            .collect();
        Self { curves, eps, radius }
    }

    /// The perturbation vector `eps * f(p) * t(p)` at `p`.
    pub(crate) fn push(&self, p: &[f64], chart: &Chart) -> Vec<f64> {
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for (ci, c) in self.curves.iter().enumerate() {
            let n = c.points.len();
            for i in 0..n {
                let a = &c.points[i];
                let b = &c.points[(i + 1) % n];
                let ab = linalg::sub(b, a);
                let l2 = dot(&ab, &ab);
                let tau = if l2 > 0.0 {
                    (dot(&linalg::sub(p, a), &ab) / l2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = linalg::axpy(a, tau, &ab);
                let d2 = dot(&linalg::sub(p, &q), &linalg::sub(p, &q));
                if best.map_or(true, |b| d2 < b.0) {
                    best = Some((d2, ci, i, tau));
                }
            }
        }
        let zero = vec![0.0; p.len()];
        let Some((d2, ci, i, tau)) = best else {
            return zero;
        };
        let f = bump(d2 / (self.radius * self.radius));
        if f == 0.0 {
            return zero;
        }
        let c = &self.curves[ci];
        let n = c.points.len();
        let mixed: Vec<f64> = c.tangents[i]
            .iter()
            .zip(&c.tangents[(i + 1) % n])
            .map(|(a, b)| (1.0 - tau) * a + tau * b)
            .collect();
        let t = chart.to_tangent(p, &mixed);
        let nt = norm(&t);
        if nt == 0.0 {
            return zero;
        }
        linalg::scale(&t, self.eps * f / nt)
    }
}

/// Perturbs `field` by `eps * f * t` where `f` is a smooth bump equal to 1 on
/// the link and vanishing outside distance `radius`, and `t` is the unit
/// tangent interpolated along each curve. The link curves become closed
/// orbits of the result. `eps = 0` returns the field unchanged.
pub fn rh_perturbation<T: Scalar>(
    field: &VectorField,
    link: &SingularLink<T>,
    eps: f64,
    radius: f64,
) -> Result<VectorField> {
    if !(eps >= 0.0) || !(radius > 0.0) {
        return Err(Error::BadParams(format!(
            "need eps >= 0 and radius > 0, got eps = {eps}, radius = {radius}"
        )));
    }
    let mut curves = Vec::with_capacity(link.curves.len());
    for (k, c) in link.curves.iter().enumerate() {
        if !c.closed || c.samples.len() < 3 {
            return Err(Error::InvalidLink(format!("curve {k} is not a closed polyline")));
        }
        curves.push(
            c.samples
                .iter()
                .map(|p| p.iter().map(|x| x.as_f64()).collect())
                .collect(),
        );
    }
    if eps == 0.0 {
        return Ok(field.clone());
    }
    Ok(VectorField::perturbed(field.clone(), Tube::new(curves, eps, radius)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_profile() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0), 0.0);
        assert_eq!(bump(2.0), 0.0);
        // C^2 at the outer edge: value, slope and curvature vanish
        let h = 1e-4;
        let (a, b, c) = (bump(1.0 - 2.0 * h), bump(1.0 - h), bump(1.0));
        assert!(c.abs() < 1e-18);
        assert!(((b - c) / h).abs() < 1e-6);
        assert!(((a - 2.0 * b + c) / (h * h)).abs() < 1e-2);
        // monotone
        let mut prev = 1.0;
        for i in 1..=100 {
            let v = bump(i as f64 / 100.0);
            assert!(v <= prev);
            prev = v;
        }
    }
}
