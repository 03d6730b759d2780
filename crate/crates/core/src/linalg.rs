//! Small dense linear algebra on `Vec<T>` vectors and row-major matrices.
//!
//! Dimensions here never exceed a handful (3-space, 4-space, the 2x2
//! transverse block, the 4x3 augmented continuation system), so the routines
//! favour robustness over speed: singular values come from one-sided Jacobi
//! rotations, which keep full relative accuracy on the tiny singular value
//! that carries the curve tangent.

use num_complex::Complex;

use crate::scalar::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `a + s * b`
pub fn axpy<T: Scalar>(a: &[T], s: T, b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * y).collect()
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    norm(&sub(a, b))
}

/// Returns `None` for vectors shorter than `floor`.
pub fn normalized<T: Scalar>(a: &[T], floor: T) -> Option<Vec<T>> {
    let n = norm(a);
    if n <= floor || !n.is_finite() {
        None
    } else {
        Some(scale(a, T::one() / n))
    }
}

pub fn cross3<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Removes from `v` its components along the (orthonormal) `basis` vectors.
pub fn reject<T: Scalar>(v: &[T], basis: &[Vec<T>]) -> Vec<T> {
    let mut out = v.to_vec();
    for b in basis {
        let c = dot(&out, b);
        for (o, &bi) in out.iter_mut().zip(b) {
            *o -= c * bi;
        }
    }
    out
}

/// Extends the orthonormal `start` vectors to an orthonormal basis of
/// `T^dim` (Gram-Schmidt against the standard basis, twice for stability).
pub fn complete_basis<T: Scalar>(start: &[Vec<T>], dim: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = start.to_vec();
    let mut candidates: Vec<(usize, T)> = (0..dim)
        .map(|i| {
            let mut e = vec![T::zero(); dim];
            e[i] = T::one();
            let r = reject(&reject(&e, &basis), &basis);
            (i, norm(&r))
        })
        .collect();
    // best-conditioned coordinate directions first, ties by index
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in candidates {
        if basis.len() == dim {
            break;
        }
        let mut e = vec![T::zero(); dim];
        e[i] = T::one();
        let r = reject(&reject(&e, &basis), &basis);
        if let Some(u) = normalized(&r, T::tol(1e-8)) {
            basis.push(u);
        }
    }
    basis
}

/// Determinant of a square matrix given by rows (Gaussian elimination with
/// partial pivoting).
pub fn det<T: Scalar>(rows: &[Vec<T>]) -> T {
    let n = rows.len();
    let mut a: Vec<Vec<T>> = rows.to_vec();
    let mut d = T::one();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        if a[piv][c] == T::zero() {
            return T::zero();
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                let v = a[c][k];
                a[r][k] -= f * v;
            }
        }
    }
    d
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|row| row.iter().copied()).collect();
        Self { rows: r, cols: c, data }
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_cols(cols: &[Vec<T>]) -> Self {
        let c = cols.len();
        let r = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn row(&self, i: usize) -> Vec<T> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn col(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matrix/vector shape mismatch");
        (0..self.rows)
            .map(|i| dot(&self.data[i * self.cols..(i + 1) * self.cols], v))
            .collect()
    }

    /// Sandwich `B^T M B`, the restriction of `M` to the column span of `B`.
    pub fn restrict(&self, basis: &Self) -> Self {
        basis.transpose().mul(&self.mul(basis))
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Thin singular value decomposition by one-sided Jacobi.
    pub fn svd(&self) -> Svd<T> {
        svd_jacobi(self)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `A = U diag(sigma) V^T`, singular values sorted descending.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// rows x k, k = min(rows, cols)
    pub u: Mat<T>,
    pub sigma: Vec<T>,
    /// cols x cols; columns beyond k span the null space complement
    pub v: Mat<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn smallest(&self) -> T {
        *self.sigma.last().unwrap_or(&T::zero())
    }

    pub fn largest(&self) -> T {
        *self.sigma.first().unwrap_or(&T::zero())
    }

    /// Right singular vector for the i-th singular value (descending order).
    /// Indices at or beyond `sigma.len()` address the exact null space of a
    /// wide matrix.
    pub fn right(&self, i: usize) -> Vec<T> {
        self.v.col(i)
    }

    /// Least-squares, minimum-norm solve of `A x = b`, treating singular
    /// values below `cutoff * sigma_max` as zero.
    pub fn solve(&self, b: &[T], cutoff: T) -> Vec<T> {
        self.solve_rank(b, cutoff, self.sigma.len())
    }

    /// As [`Svd::solve`], keeping at most the `rank` largest singular values.
    pub fn solve_rank(&self, b: &[T], cutoff: T, rank: usize) -> Vec<T> {
        let n = self.v.rows;
        let mut x = vec![T::zero(); n];
        let thresh = cutoff * self.largest();
        for (k, &s) in self.sigma.iter().enumerate().take(rank) {
            if s <= thresh || s == T::zero() {
                continue;
            }
            let c = dot(&self.u.col(k), b) / s;
            for (xi, vi) in x.iter_mut().zip(self.v.col(k)) {
                *xi += c * vi;
            }
        }
        x
    }
}

fn svd_jacobi<T: Scalar>(a: &Mat<T>) -> Svd<T> {
    // Work on columns of W = A V; V accumulates the rotations. For wide
    // matrices the extra columns of V end up in the null space.
    let (m, n) = (a.rows, a.cols);
    let mut w = a.clone();
    let mut v = Mat::<T>::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[(i, p)], w[(i, q)]);
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<(usize, T)> = (0..n).map(|j| (j, norm(&w.col(j)))).collect();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    let k = m.min(n);
    let mut u = Mat::zeros(m, k);
    let mut vs = Mat::zeros(n, n);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &(src, s)) in order.iter().enumerate() {
        for i in 0..n {
            vs[(i, dst)] = v[(i, src)];
        }
        if dst < k {
            sigma.push(s);
            if s > T::zero() {
                for i in 0..m {
                    u[(i, dst)] = w[(i, src)] / s;
                }
            }
        }
    }
    Svd { u, sigma, v: vs }
}

/// Eigenvalues of a real 2x2 matrix, ordered by real part then imaginary
/// part (a complex pair is returned as `(re - i|im|, re + i|im|)`).
pub fn eig2<T: Scalar>(a: T, b: T, c: T, d: T) -> (Complex<T>, Complex<T>) {
    let half = T::lit(0.5);
    let tr = a + d;
    let mean = half * tr;
    // discriminant via (a-d)^2/4 + bc avoids cancellation in tr^2/4 - det
    let hd = half * (a - d);
    let disc = hd * hd + b * c;
    if disc >= T::zero() {
        let r = disc.sqrt();
        // stable pair: larger-magnitude root first, then det / root
        let big = if mean >= T::zero() { mean + r } else { mean - r };
        let det = a * d - b * c;
        let small = if big != T::zero() { det / big } else { mean - r };
        let (lo, hi) = if big <= small { (big, small) } else { (small, big) };
        (Complex::new(lo, T::zero()), Complex::new(hi, T::zero()))
    } else {
        let im = (-disc).sqrt();
        (Complex::new(mean, -im), Complex::new(mean, im))
    }
}

/// Transverse spectrum of `m` (n x n) relative to a direction `t` with
/// `m t ~ 0` (or `m t ~ t`): the eigenvalues of the map induced on the
/// quotient by `span{t}`. In an orthonormal basis `(t, n1, n2)` the matrix is
/// block triangular, so the remaining pair is the spectrum of the lower 2x2
/// block.
pub fn quotient_block<T: Scalar>(m: &Mat<T>, t: &[T]) -> [[T; 2]; 2] {
    debug_assert_eq!(m.rows, 3);
    let basis = complete_basis(&[t.to_vec()], 3);
    let n1 = &basis[1];
    let n2 = &basis[2];
    let mn1 = m.mul_vec(n1);
    let mn2 = m.mul_vec(n2);
    [[dot(n1, &mn1), dot(n1, &mn2)], [dot(n2, &mn1), dot(n2, &mn2)]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs_and_orders() {
        let a = Mat::from_rows(&[
            vec![2.0, 0.0, 1.0],
            vec![-1.0, 3.0, 0.5],
            vec![0.0, 1.0, 4.0],
            vec![1.0, 1.0, 1.0],
        ]);
        let s = a.svd();
        assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        for i in 0..4 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| s.u[(i, k)] * s.sigma[k] * s.v[(j, k)]).sum();
                assert!((r - a[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn svd_null_vector_of_rank_deficient() {
        // rows span the plane orthogonal to (1,1,1)
        let a = Mat::from_rows(&[vec![1.0, -1.0, 0.0], vec![0.0, 1.0, -1.0], vec![1.0, 0.0, -1.0]]);
        let s = a.svd();
        assert!(s.smallest() < 1e-14);
        let nv = s.right(2);
        let c = 1.0 / 3f64.sqrt();
        assert!((dot(&nv, &[c, c, c]).abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wide_matrix_null_space() {
        let a = Mat::from_rows(&[vec![1.0f64, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let s = a.svd();
        assert_eq!(s.sigma.len(), 2);
        assert!((s.right(2)[2].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn least_squares_solve() {
        let a = Mat::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]]);
        let x = a.svd().solve(&[1.0, 4.0, 7.0], 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eig2_real_and_complex() {
        let (l1, l2) = eig2(-1.0f64, 0.0, 0.0, 0.0);
        assert_eq!((l1.re, l2.re), (-1.0, 0.0));
        let (l1, l2) = eig2(0.0f64, -1.0, 1.0, 0.0);
        assert!(l1.re.abs() < 1e-15 && (l1.im + 1.0).abs() < 1e-15 && (l2.im - 1.0).abs() < 1e-15);
        let (l1, l2) = eig2(-2.0f64, 1.0, 1e-20, -2.0);
        assert!((l1.re + 2.0).abs() < 1e-9 && (l2.re + 2.0).abs() < 1e-9);
    }

    #[test]
    fn quotient_block_of_rank_two() {
        // tangent (0,1,0) in the kernel; remaining spectrum {-1, 0}
        let m = Mat::from_rows(&[vec![-1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0]]);
        let b = quotient_block(&m, &[0.0, 1.0, 0.0]);
        let (l1, l2) = eig2(b[0][0], b[0][1], b[1][0], b[1][1]);
        assert_eq!((l1.re, l2.re), (-1.0, 0.0));
    }

    #[test]
    fn determinant() {
        let m = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 3.0]];
        assert_eq!(det(&m), -3.0);
    }
}
