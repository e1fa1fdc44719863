//! Dense complex linear algebra.
//!
//! Everything here works on [`ComplexMatrix`], a row-major owned matrix of
//! `Complex64`. The routines are the textbook ones (Householder reflectors,
//! Givens rotations, cyclic Jacobi) written for correctness and determinism
//! rather than speed; matrices in this crate are at most a few dozen rows.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::rng::complex_normal;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Deflation threshold for the shifted QR iteration.
pub const DEFLATION_EPS: f64 = 1e-14;

/// Relative pivot threshold below which [`solve`] reports singularity.
pub const SINGULAR_PIVOT_RTOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("matrix is not positive definite (failed at column {column})")]
    NotPositiveDefinite { column: usize },
    #[error(
        "shifted QR did not converge after {iterations} iterations; \
         {deflated} of {dim} eigenvalues deflated"
    )]
    NoConvergence {
        iterations: usize,
        dim: usize,
        deflated: usize,
        /// Eigenvalues already split off from the bottom of the Hessenberg
        /// form, in deflation order.
        converged: Vec<Complex64>,
    },
}

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        }
    }

    pub fn from_diag(diag: &[Complex64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<Complex64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    /// Copy of the `nrows x ncols` block starting at `(row0, col0)`.
    pub fn block(&self, row0: usize, col0: usize, nrows: usize, ncols: usize) -> Self {
        assert!(row0 + nrows <= self.rows && col0 + ncols <= self.cols, "block out of range");
        Self::from_fn(nrows, ncols, |i, j| self[(row0 + i, col0 + j)])
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `(A + A^H) / 2`.
    pub fn hermitian_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    /// Largest entry of `A - A^H` in modulus.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:>11.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `A^H A - I` measured in the max norm.
pub fn unitarity_residual(u: &ComplexMatrix) -> f64 {
    let g = &u.adjoint() * u;
    let id = ComplexMatrix::identity(g.rows());
    (&g - &id).max_abs()
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn phase(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        ONE
    } else {
        z / r
    }
}

/// Householder reflector `H = I - 2 v v^H` (with `|v| = 1`) mapping `x` to
/// `alpha e_1`. Returns `None` when `x` is already zero.
fn householder(x: &[Complex64]) -> Option<(Vec<Complex64>, Complex64)> {
    let norm = vec_norm(x);
    if norm == 0.0 {
        return None;
    }
    let alpha = -phase(x[0]) * norm;
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vn = vec_norm(&v);
    if vn == 0.0 {
        return None;
    }
    for e in &mut v {
        *e /= vn;
    }
    Some((v, alpha))
}

/// Applies `H = I - 2 v v^H` from the left to rows `r0..r0+len(v)`, columns `c0..`.
fn reflect_rows(m: &mut ComplexMatrix, v: &[Complex64], r0: usize, c0: usize) {
    for j in c0..m.cols {
        let mut s = ZERO;
        for (k, vk) in v.iter().enumerate() {
            s += vk.conj() * m[(r0 + k, j)];
        }
        s *= 2.0;
        for (k, vk) in v.iter().enumerate() {
            m[(r0 + k, j)] -= vk * s;
        }
    }
}

/// Applies `H` from the right to columns `c0..c0+len(v)`, rows `r0..`.
fn reflect_cols(m: &mut ComplexMatrix, v: &[Complex64], r0: usize, c0: usize) {
    for i in r0..m.rows {
        let mut s = ZERO;
        for (k, vk) in v.iter().enumerate() {
            s += m[(i, c0 + k)] * vk;
        }
        s *= 2.0;
        for (k, vk) in v.iter().enumerate() {
            m[(i, c0 + k)] -= s * vk.conj();
        }
    }
}

/// Thin Householder QR of an `m x n` matrix with `m >= n`: `Q` is `m x n`
/// with orthonormal columns, `R` is `n x n` upper triangular.
///
/// The diagonal of `R` carries whatever phases the reflectors produce; no
/// normalisation is applied (see [`sample_haar_unitary`]).
pub fn qr_unitary(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix), LinalgError> {
    let (rows, cols) = (m.rows(), m.cols());
    if rows < cols {
        return Err(LinalgError::DimensionMismatch(format!(
            "qr_unitary needs rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut a = m.clone();
    let mut reflectors = Vec::with_capacity(cols);
    for k in 0..cols {
        let x: Vec<Complex64> = (k..rows).map(|i| a[(i, k)]).collect();
        match householder(&x) {
            Some((v, alpha)) => {
                reflect_rows(&mut a, &v, k, k);
                a[(k, k)] = alpha;
                for i in k + 1..rows {
                    a[(i, k)] = ZERO;
                }
                reflectors.push(Some(v));
            }
            None => reflectors.push(None),
        }
    }
    let r = a.block(0, 0, cols, cols);
    let mut q = ComplexMatrix::from_fn(rows, cols, |i, j| if i == j { ONE } else { ZERO });
    for (k, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            reflect_rows(&mut q, v, k, 0);
        }
    }
    Ok((q, r))
}

/// Matrix of i.i.d. standard complex normals.
pub fn sample_ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let data = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    ComplexMatrix::from_row_major(rows, cols, data)
}

/// Haar-distributed element of `U(dim)`: QR of a Ginibre matrix with the
/// columns of `Q` rotated by the phases of `diag(R)`.
pub fn sample_haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let g = sample_ginibre(dim, dim, rng);
    let (mut q, r) = qr_unitary(&g).expect("square input");
    for j in 0..dim {
        let ph = phase(r[(j, j)]);
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Unitary reduction to upper Hessenberg form: returns `(H, Q)` with
/// `m = Q H Q^H`.
pub fn hessenberg(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let mut h = m.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        if let Some((v, _)) = householder(&x) {
            reflect_rows(&mut h, &v, k + 1, 0);
            reflect_cols(&mut h, &v, 0, k + 1);
            reflect_cols(&mut q, &v, 0, k + 1);
        }
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    Ok((h, q))
}

/// Schur form `m = U T U^H`.
#[derive(Debug, Clone)]
pub struct SchurResult {
    /// Upper triangular factor. Its diagonal is in deflation order.
    pub t: ComplexMatrix,
    /// Unitary factor.
    pub u: ComplexMatrix,
    /// Diagonal of `t`, sorted lexicographically by `(re, im)`.
    pub eigenvalues: Vec<Complex64>,
}

impl SchurResult {
    /// `‖m - U T U^H‖_F`.
    pub fn reconstruction_error(&self, m: &ComplexMatrix) -> f64 {
        let rec = &(&self.u * &self.t) * &self.u.adjoint();
        (m - &rec).frobenius_norm()
    }

    /// Unit eigenvectors of the original matrix, one per diagonal entry of
    /// `t` (in the diagonal order of `t`, not the sorted order).
    pub fn eigenvectors(&self) -> Vec<(Complex64, Vec<Complex64>)> {
        let n = self.t.rows();
        let scale = self.t.max_abs().max(f64::MIN_POSITIVE);
        (0..n)
            .map(|k| {
                let lambda = self.t[(k, k)];
                let mut y = vec![ZERO; n];
                y[k] = ONE;
                for j in (0..k).rev() {
                    let s: Complex64 = (j + 1..=k).map(|l| self.t[(j, l)] * y[l]).sum();
                    let mut d = self.t[(j, j)] - lambda;
                    if d.norm() < f64::EPSILON * scale {
                        d = Complex64::new(f64::EPSILON * scale, 0.0);
                    }
                    y[j] = -s / d;
                }
                let x = self.u.matvec(&y);
                let nx = vec_norm(&x);
                (lambda, x.into_iter().map(|e| e / nx).collect())
            })
            .collect()
    }
}

/// Sorts complex numbers lexicographically by `(re, im)`.
pub fn sort_lexicographic(values: &mut [Complex64]) {
    values.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Givens rotation `G = [[c, s], [-conj(s), c]]` with real `c`, chosen so that
/// `G [x, y]^T = [r, 0]^T`.
fn givens(x: Complex64, y: Complex64) -> (f64, Complex64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, phase(y).conj());
    }
    let norm = ax.hypot(ay);
    (ax / norm, (x / ax) * y.conj() / norm)
}

fn rotate_rows(m: &mut ComplexMatrix, k: usize, c: f64, s: Complex64, c0: usize) {
    for j in c0..m.cols {
        let a = m[(k, j)];
        let b = m[(k + 1, j)];
        m[(k, j)] = a * c + s * b;
        m[(k + 1, j)] = -s.conj() * a + b * c;
    }
}

/// Right multiplication by `G^H` on columns `k, k+1`, rows `0..r_end`.
fn rotate_cols(m: &mut ComplexMatrix, k: usize, c: f64, s: Complex64, r_end: usize) {
    for i in 0..r_end {
        let a = m[(i, k)];
        let b = m[(i, k + 1)];
        m[(i, k)] = a * c + b * s.conj();
        m[(i, k + 1)] = -a * s + b * c;
    }
}

/// Eigenvalue of the 2x2 block `[[a, b], [c, d]]` closest to `d`.
fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half_tr = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (half_tr * half_tr - det).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Default iteration budget: 30 sweeps per unit of dimension.
pub fn default_schur_iterations(dim: usize) -> usize {
    30 * dim.max(1)
}

/// Complex Schur decomposition by single-shift (Wilkinson) QR on the
/// Hessenberg form. `max_iters` bounds the total number of QR sweeps.
pub fn schur(m: &ComplexMatrix, max_iters: usize) -> Result<SchurResult, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(LinalgError::DimensionMismatch("non-finite entries".into()));
    }
    let n = m.rows();
    let (mut h, mut z) = hessenberg(m)?;
    let h_norm = h.frobenius_norm();
    let mut total = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n.saturating_sub(1);

    while hi > 0 {
        // Locate the top of the active unreduced block.
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let tol = if diag > 0.0 { DEFLATION_EPS * diag } else { DEFLATION_EPS * h_norm };
            if sub <= tol {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if total >= max_iters {
            let converged = (hi + 1..n).rev().map(|i| h[(i, i)]).collect::<Vec<_>>();
            return Err(LinalgError::NoConvergence {
                iterations: total,
                dim: n,
                deflated: n - hi - 1,
                converged,
            });
        }
        total += 1;
        since_deflation += 1;

        let mu = if since_deflation.is_multiple_of(11) {
            // Exceptional shift to break cycles.
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.25 * h[(hi, hi - 1)].norm())
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        // Implicit single-shift QR sweep on rows/cols lo..=hi, applied to the
        // full matrix so that the final H is the Schur factor.
        let (c, s) = givens(h[(lo, lo)] - mu, h[(lo + 1, lo)]);
        rotate_rows(&mut h, lo, c, s, lo);
        rotate_cols(&mut h, lo, c, s, (lo + 3).min(hi + 1));
        rotate_cols(&mut z, lo, c, s, n);
        for k in lo + 1..hi {
            let (c, s) = givens(h[(k, k - 1)], h[(k + 1, k - 1)]);
            rotate_rows(&mut h, k, c, s, k - 1);
            h[(k + 1, k - 1)] = ZERO;
            rotate_cols(&mut h, k, c, s, (k + 3).min(hi + 1));
            rotate_cols(&mut z, k, c, s, n);
        }
    }

    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = ZERO;
        }
    }
    let mut eigenvalues = h.diag();
    sort_lexicographic(&mut eigenvalues);
    Ok(SchurResult { t: h, u: z, eigenvalues })
}

/// Descending singular values, via the Hermitian eigenvalues of the smaller
/// Gram matrix.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let gram = if m.rows() >= m.cols() {
        &m.adjoint() * m
    } else {
        m * &m.adjoint()
    };
    let (vals, _) = hermitian_eigen(&gram);
    let mut sv: Vec<f64> = vals.into_iter().map(|v| v.max(0.0).sqrt()).collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns ascending eigenvalues and the unitary matrix whose
/// columns are the matching eigenvectors. Only the Hermitian part of the
/// input is used.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    assert!(m.is_square(), "hermitian_eigen needs a square matrix");
    let n = m.rows();
    let mut a = m.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return (vec![0.0; n], v);
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-16 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let e = apq / r;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotation on columns p, q: V = [[c, s], [-s e^*, c e^*]].
                let vpp = Complex64::new(c, 0.0);
                let vpq = Complex64::new(s, 0.0);
                let vqp = -e.conj() * s;
                let vqq = e.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                    let ekp = v[(k, p)];
                    let ekq = v[(k, q)];
                    v[(k, p)] = ekp * vpp + ekq * vqp;
                    v[(k, q)] = ekp * vpq + ekq * vqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let vals = order.iter().map(|&i| a[(i, i)].re).collect();
    let vecs = ComplexMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (vals, vecs)
}

/// `f(A) = V diag(f(λ)) V^H` for Hermitian `A`.
pub fn hermitian_function(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> ComplexMatrix {
    let (vals, vecs) = hermitian_eigen(m);
    let n = vals.len();
    let fv: Vec<f64> = vals.into_iter().map(f).collect();
    ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| vecs[(i, k)] * fv[k] * vecs[(j, k)].conj()).sum()
    })
}

/// LU factorisation with partial pivoting, in place. Returns the pivot
/// permutation parity and the first zero-pivot column, if any.
fn lu_in_place(a: &mut ComplexMatrix, perm: &mut [usize]) -> (bool, Option<usize>) {
    let n = a.rows();
    let mut odd = false;
    let mut zero_at = None;
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|i| (i, a[(i, k)].norm()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == 0.0 {
            zero_at.get_or_insert(k);
            continue;
        }
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            odd = !odd;
        }
        let pivot = a[(k, k)];
        for i in k + 1..n {
            let f = a[(i, k)] / pivot;
            a[(i, k)] = f;
            if f == ZERO {
                continue;
            }
            for j in k + 1..n {
                let u = a[(k, j)];
                a[(i, j)] -= f * u;
            }
        }
    }
    (odd, zero_at)
}

/// `log|det m|` via pivoted elimination; `-inf` for an exactly singular
/// matrix.
pub fn log_abs_det(m: &ComplexMatrix) -> Result<f64, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..m.rows()).collect();
    let (_, zero) = lu_in_place(&mut a, &mut perm);
    if zero.is_some() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((0..m.rows()).map(|i| a[(i, i)].norm().ln()).sum())
}

/// Complex determinant via pivoted elimination.
pub fn determinant(m: &ComplexMatrix) -> Result<Complex64, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let mut a = m.clone();
    let mut perm: Vec<usize> = (0..m.rows()).collect();
    let (odd, zero) = lu_in_place(&mut a, &mut perm);
    if zero.is_some() {
        return Ok(ZERO);
    }
    let d: Complex64 = (0..m.rows()).map(|i| a[(i, i)]).product();
    Ok(if odd { -d } else { d })
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if b.rows() != a.rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "solve: a is {}x{}, b has {} rows",
            a.rows(),
            a.cols(),
            b.rows()
        )));
    }
    let n = a.rows();
    let tol = SINGULAR_PIVOT_RTOL * a.frobenius_norm();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    lu_in_place(&mut lu, &mut perm);
    for k in 0..n {
        let p = lu[(k, k)].norm();
        if p <= tol || p == 0.0 {
            return Err(LinalgError::Singular { column: k, pivot: p });
        }
    }
    let mut x = ComplexMatrix::from_fn(n, b.cols(), |i, j| b[(perm[i], j)]);
    for col in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= lu[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in i + 1..n {
                s -= lu[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

/// Lower Cholesky factor of a Hermitian positive definite matrix. Fails with
/// [`LinalgError::NotPositiveDefinite`] at the first non-positive pivot, which
/// makes it a cheap positive-definiteness test.
pub fn cholesky(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let n = m.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { column: j });
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// `log det` of a Hermitian positive definite matrix via Cholesky.
pub fn log_det_hpd(m: &ComplexMatrix) -> Result<f64, LinalgError> {
    let l = cholesky(m)?;
    Ok(2.0 * (0..m.rows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qr_identity() {
        let (q, r) = qr_unitary(&ComplexMatrix::identity(4)).unwrap();
        for i in 0..4 {
            assert!((q[(i, i)].norm() - 1.0).abs() < 1e-15);
            assert!((r[(i, i)].norm() - 1.0).abs() < 1e-15);
        }
        assert!((&q * &r).as_slice().iter().zip(ComplexMatrix::identity(4).as_slice()).all(|(a, b)| (a - b).norm() < 1e-15));
    }

    #[test]
    fn qr_square_and_tall() {
        let mut rng = RngState::new(3).rng();
        let m = sample_ginibre(5, 5, &mut rng);
        let (q, r) = qr_unitary(&m).unwrap();
        assert!((&m - &(&q * &r)).frobenius_norm() < 1e-12 * m.frobenius_norm());
        for i in 0..5 {
            for j in 0..i {
                assert_eq!(r[(i, j)], ZERO);
            }
        }
        let tall = sample_ginibre(8, 3, &mut rng);
        let (q, r) = qr_unitary(&tall).unwrap();
        assert_eq!((q.rows(), q.cols(), r.rows()), (8, 3, 3));
        assert!(unitarity_residual(&q) < 1e-12);
        assert!((&tall - &(&q * &r)).frobenius_norm() < 1e-12 * tall.frobenius_norm());
    }

    #[test]
    fn qr_rejects_wide() {
        assert!(qr_unitary(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn qr_rank_deficient() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        let (q, r) = qr_unitary(&m).unwrap();
        assert!(r[(1, 1)].norm() < 1e-14);
        assert!((&m - &(&q * &r)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn hessenberg_small_is_identity_transform() {
        let m = ComplexMatrix::from_rows(&[vec![c(1.0, 1.0), c(2.0, 0.0)], vec![c(0.0, 3.0), c(-1.0, 0.5)]]);
        let (h, q) = hessenberg(&m).unwrap();
        assert_eq!(h, m);
        assert_eq!(q, ComplexMatrix::identity(2));
    }

    #[test]
    fn hessenberg_structure_and_reconstruction() {
        let mut rng = RngState::new(9).rng();
        let m = sample_ginibre(6, 6, &mut rng);
        let (h, q) = hessenberg(&m).unwrap();
        for i in 0..6usize {
            for j in 0..i.saturating_sub(1) {
                assert_eq!(h[(i, j)], ZERO, "entry ({i},{j})");
            }
        }
        assert!(unitarity_residual(&q) < 1e-12);
        let rec = &(&q * &h) * &q.adjoint();
        assert!((&m - &rec).frobenius_norm() < 1e-12 * m.frobenius_norm());
        assert!(hessenberg(&ComplexMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn schur_known_spectra() {
        let d = ComplexMatrix::from_diag(&[c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0)]);
        let s = schur(&d, 100).unwrap();
        assert_eq!(s.eigenvalues, vec![c(-3.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)]);

        let swap = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]);
        let s = schur(&swap, 100).unwrap();
        assert!((s.eigenvalues[0] - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((s.eigenvalues[1] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(s.reconstruction_error(&swap) < 1e-14);
    }

    #[test]
    fn schur_eigenpairs_random() {
        let mut rng = RngState::new(21).rng();
        for _ in 0..20 {
            let m = sample_ginibre(5, 5, &mut rng);
            let s = schur(&m, default_schur_iterations(5)).unwrap();
            let norm = m.frobenius_norm();
            assert!(s.reconstruction_error(&m) <= 1e-10 * norm);
            assert!(unitarity_residual(&s.u) < 1e-12);
            for (lambda, v) in s.eigenvectors() {
                let mv = m.matvec(&v);
                let res: f64 = mv.iter().zip(&v).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
                assert!(res <= 1e-8 * norm, "residual {res}");
            }
            for i in 0..5 {
                for j in 0..i {
                    assert_eq!(s.t[(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn schur_reports_nonconvergence() {
        let mut rng = RngState::new(2).rng();
        let m = sample_ginibre(6, 6, &mut rng);
        match schur(&m, 1) {
            Err(LinalgError::NoConvergence { dim, iterations, converged, deflated }) => {
                assert_eq!(dim, 6);
                assert_eq!(iterations, 1);
                assert_eq!(converged.len(), deflated);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn singular_values_basic() {
        let mut rng = RngState::new(5).rng();
        let u = sample_haar_unitary(4, &mut rng);
        for s in singular_values(&u) {
            assert!((s - 1.0).abs() < 1e-12);
        }
        let d = ComplexMatrix::from_diag(&[c(3.0, 0.0), ZERO]);
        let sv = singular_values(&d);
        assert!((sv[0] - 3.0).abs() < 1e-14 && sv[1].abs() < 1e-7);
        let m = sample_ginibre(4, 6, &mut rng);
        let sv = singular_values(&m);
        assert_eq!(sv.len(), 4);
        let total: f64 = sv.iter().map(|s| s * s).sum();
        assert!((total - m.frobenius_norm().powi(2)).abs() < 1e-10 * total);
    }

    #[test]
    fn singular_values_squared_are_gram_eigenvalues() {
        let mut rng = RngState::new(6).rng();
        let m = sample_ginibre(5, 5, &mut rng);
        let gram = &m.adjoint() * &m;
        let mut eig: Vec<f64> = schur(&gram, 200).unwrap().eigenvalues.iter().map(|z| z.re).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (s, e) in singular_values(&m).iter().zip(eig) {
            assert!((s * s - e).abs() < 1e-10 * gram.frobenius_norm());
        }
    }

    #[test]
    fn solve_cases() {
        let mut rng = RngState::new(8).rng();
        let b = sample_ginibre(3, 2, &mut rng);
        let x = solve(&ComplexMatrix::identity(3), &b).unwrap();
        assert_eq!(x, b);
        let x = solve(&ComplexMatrix::identity(3).scale(c(2.0, 0.0)), &ComplexMatrix::identity(3)).unwrap();
        assert!((&x - &ComplexMatrix::identity(3).scale(c(0.5, 0.0))).max_abs() < 1e-16);
        let a = &sample_ginibre(6, 6, &mut rng) + &ComplexMatrix::identity(6).scale(c(4.0, 0.0));
        let b = sample_ginibre(6, 3, &mut rng);
        let x = solve(&a, &b).unwrap();
        assert!((&(&a * &x) - &b).frobenius_norm() < 1e-10 * b.frobenius_norm());
        let sing = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        assert!(matches!(solve(&sing, &ComplexMatrix::identity(2)), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn log_abs_det_cases() {
        assert_eq!(log_abs_det(&ComplexMatrix::identity(3)).unwrap(), 0.0);
        let d = ComplexMatrix::from_diag(&[c(2.0, 0.0), c(0.0, 3.0)]);
        assert!((log_abs_det(&d).unwrap() - 6f64.ln()).abs() < 1e-15);
        assert_eq!(log_abs_det(&ComplexMatrix::zeros(2, 2)).unwrap(), f64::NEG_INFINITY);
        let mut rng = RngState::new(12).rng();
        let m = sample_ginibre(6, 6, &mut rng);
        let spectral: f64 = schur(&m, 200).unwrap().eigenvalues.iter().map(|z| z.norm().ln()).sum();
        assert!((log_abs_det(&m).unwrap() - spectral).abs() < 1e-8);
        let det = determinant(&m).unwrap();
        assert!((det.norm().ln() - spectral).abs() < 1e-8);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = RngState::new(13).rng();
        let g = sample_ginibre(5, 5, &mut rng);
        let h = &g + &g.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        assert!(unitarity_residual(&vecs) < 1e-12);
        let rec = hermitian_function(&h, |x| x);
        assert!((&rec - &h).frobenius_norm() < 1e-12 * h.frobenius_norm());
    }

    #[test]
    fn cholesky_and_log_det() {
        let mut rng = RngState::new(14).rng();
        let g = sample_ginibre(4, 4, &mut rng);
        let a = &(&g * &g.adjoint()) + &ComplexMatrix::identity(4);
        let l = cholesky(&a).unwrap();
        assert!((&(&l * &l.adjoint()) - &a).frobenius_norm() < 1e-12 * a.frobenius_norm());
        assert!((log_det_hpd(&a).unwrap() - log_abs_det(&a).unwrap()).abs() < 1e-12);
        let neg = ComplexMatrix::identity(2).scale(c(-1.0, 0.0));
        assert!(matches!(cholesky(&neg), Err(LinalgError::NotPositiveDefinite { column: 0 })));
    }

    #[test]
    fn haar_phase_fix_matters() {
        // Without the phase correction a 1x1 Householder QR always returns -1.
        let mut rng = RngState::new(15).rng();
        for _ in 0..10 {
            let g = sample_ginibre(1, 1, &mut rng);
            let (q, _) = qr_unitary(&g).unwrap();
            assert!((q[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
        }
        let mut sum = ZERO;
        let m = 100_000;
        for _ in 0..m {
            let u = sample_haar_unitary(1, &mut rng);
            assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-14);
            sum += u[(0, 0)];
        }
        // Uniform phase: Re and Im each have variance 1/2.
        let se = (0.5 / m as f64).sqrt();
        assert!((sum.re / m as f64).abs() < 4.0 * se);
        assert!((sum.im / m as f64).abs() < 4.0 * se);
    }

    #[test]
    fn haar_entry_second_moment() {
        let mut rng = RngState::new(16).rng();
        let dim = 3;
        let m = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let u = sample_haar_unitary(dim, &mut rng);
            assert!(unitarity_residual(&u) < 1e-12);
            let x = u[(0, 0)].norm_sqr();
            s += x;
            s2 += x * x;
        }
        let mean = s / m as f64;
        let var = s2 / m as f64 - mean * mean;
        assert!((mean - 1.0 / dim as f64).abs() < 4.0 * (var / m as f64).sqrt());
    }
}
