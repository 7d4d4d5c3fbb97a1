//! Dense row-major matrices and the handful of solvers the capacity analysis
//! is built on: Cholesky, discrete Lyapunov / Sylvester series via doubling,
//! a spectral-radius estimate, and the unitary eigendecomposition of normal
//! matrices.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub type Complex64 = Complex<f64>;

/// Eigenvalues of a decomposed matrix, one per dimension.
pub type ComplexVec = Vec<Complex64>;

/// Relative normality tolerance: `|AA^T - A^TA|_max <= NORMALITY_TOL * |A|_F^2`.
pub const NORMALITY_TOL: f64 = 1e-10;

/// Default iteration cap for the doubling solvers. Each iteration doubles the
/// number of series terms summed, so this is never the binding constraint for
/// convergent inputs.
pub const DEFAULT_ITER_MAX: usize = 64;

/// Default max-abs residual accepted from the doubling solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:>12.6e} ", self[(r, c)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        Mat {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from row slices. Panics on ragged input; intended for
    /// literals.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Same buffer, new shape.
    pub fn reshaped(mut self, rows: usize, cols: usize) -> Self {
        assert_eq!(rows * cols, self.data.len(), "reshape changes element count");
        self.rows = rows;
        self.cols = cols;
        self
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.rows,
            "matmul {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Mat {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `self^T * other` without materialising the transpose.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.rows, other.rows,
            "t_matmul {}x{}^T * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let b_row = &other.data[p * m..(p + 1) * m];
            for i in 0..n {
                let a = self.data[p * n + i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Mat {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.cols,
            "matmul_t {}x{} * {}x{}^T",
            self.rows, self.cols, other.rows, other.cols
        );
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.data[j * k..(j + 1) * k];
                out[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        Mat {
            rows: n,
            cols: m,
            data: out,
        }
    }

    /// Bilinear map `U^T X V`.
    pub fn bilinear(u: &Mat, x: &Mat, v: &Mat) -> Mat {
        u.t_matmul(x).matmul(v)
    }

    fn zip_with(&self, other: &Mat, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), other.shape(), "{op}: shape mismatch");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Mat {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Mat) -> Mat {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "axpy: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff: shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Mat {
        assert!(self.is_square());
        Mat::from_fn(self.rows, self.cols, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// `|AA^T - A^TA|_max`.
    pub fn normality_deviation(&self) -> f64 {
        self.matmul_t(self).max_abs_diff(&self.t_matmul(self))
    }

    pub fn is_normal(&self) -> bool {
        self.is_square()
            && self.normality_deviation() <= NORMALITY_TOL * self.frobenius_norm_sq().max(f64::MIN_POSITIVE)
    }
}

/// `Tr(A^T B) = sum_ij a_ij b_ij`.
pub fn frobenius_inner(a: &Mat, b: &Mat) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "frobenius_inner",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

fn require_square(a: &Mat, op: &'static str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            op,
            rows: a.rows,
            cols: a.cols,
        })
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Only the lower triangle of the input is read.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Mat,
}

impl Cholesky {
    pub fn new(a: &Mat) -> Result<Self> {
        require_square(a, "cholesky")?;
        let n = a.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite);
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &Mat {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.rows).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// Solves `A X = B`.
    pub fn solve(&self, b: &Mat) -> Mat {
        let n = self.l.rows;
        assert_eq!(b.rows, n, "cholesky solve: rhs has {} rows, expected {n}", b.rows);
        let mut x = b.clone();
        for c in 0..b.cols {
            // forward: L y = b
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
            // backward: L^T x = y
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * x[(k, c)];
                }
                x[(i, c)] = s / self.l[(i, i)];
            }
        }
        x
    }

    /// Symmetric inverse.
    pub fn inverse(&self) -> Mat {
        self.solve(&Mat::identity(self.l.rows)).symmetrized()
    }
}

/// Spectral radius estimate by repeated squaring with renormalisation:
/// `rho ≈ |A^(2^j)|_F^(1/2^j)` for `j = SQUARINGS`. Converges from above;
/// the Frobenius/Jordan prefactors are damped by the `1/2^j` root.
pub fn spectral_radius(a: &Mat) -> f64 {
    const SQUARINGS: i32 = 40;
    assert!(a.is_square(), "spectral_radius of non-square matrix");
    let f0 = a.frobenius_norm();
    if f0 == 0.0 {
        return 0.0;
    }
    let mut m = a.clone();
    // A^(2^j) = exp(log_scale) * m
    let mut log_scale = 0.0_f64;
    let mut est = f0;
    for j in 1..=SQUARINGS {
        let f = m.frobenius_norm();
        if f == 0.0 || !f.is_finite() {
            return 0.0;
        }
        m.scale_in_place(1.0 / f);
        log_scale += f.ln();
        m = m.matmul(&m);
        log_scale *= 2.0;
        let f2 = m.frobenius_norm();
        if f2 == 0.0 {
            return 0.0;
        }
        est = ((log_scale + f2.ln()) / 2f64.powi(j)).exp();
    }
    est
}

/// Fixed point of `X = A^T X A + Q`, i.e. `sum_k A^(kT) Q A^k`, by doubling:
/// `X <- X + A_m^T X A_m`, `A_{m+1} = A_m^2`.
pub fn solve_discrete_lyapunov(a: &Mat, q: &Mat, tol: f64, iter_max: usize) -> Result<Mat> {
    solve_discrete_sylvester_sum(a, a, q, tol, iter_max).map(|x| {
        if q.is_symmetric(0.0) {
            x.symmetrized()
        } else {
            x
        }
    })
}

/// `G(A) = sum_k U^(kT) A V^k`, the fixed point of `X = U^T X V + A`.
pub fn solve_discrete_sylvester_sum(
    u: &Mat,
    v: &Mat,
    a: &Mat,
    tol: f64,
    iter_max: usize,
) -> Result<Mat> {
    require_square(u, "sylvester_sum")?;
    require_square(v, "sylvester_sum")?;
    if a.rows != u.rows || a.cols != v.rows {
        return Err(Error::ShapeMismatch {
            op: "sylvester_sum",
            left: u.shape(),
            right: a.shape(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let rho = spectral_radius(u) * spectral_radius(v);
    if !(rho < 1.0) {
        return Err(Error::NonConvergent {
            residual: f64::INFINITY,
            iterations: 0,
            spectral_radius: rho,
        });
    }

    let mut x = a.clone();
    let mut uk = u.clone();
    let mut vk = v.clone();
    let mut iterations = 0;
    while iterations < iter_max {
        iterations += 1;
        let inc = Mat::bilinear(&uk, &x, &vk);
        let inc_size = inc.max_abs();
        x.add_assign(&inc);
        if inc_size <= f64::EPSILON * 0.25 * x.max_abs() {
            break;
        }
        uk = uk.matmul(&uk);
        vk = vk.matmul(&vk);
        balance(&mut uk, &mut vk);
        if !x.is_finite() {
            break;
        }
    }

    let residual = Mat::bilinear(u, &x, v).add(a).max_abs_diff(&x);
    if !(residual <= tol) {
        return Err(Error::NonConvergent {
            residual,
            iterations,
            spectral_radius: rho,
        });
    }
    Ok(x)
}

/// Rescales `(U, V) -> (cU, V/c)` with `c` a power of two so the product is
/// unchanged exactly while keeping both factors representable.
fn balance(u: &mut Mat, v: &mut Mat) {
    let nu = u.max_abs();
    let nv = v.max_abs();
    if nu == 0.0 || nv == 0.0 {
        return;
    }
    let e = ((nv / nu).log2() / 2.0).round();
    if e.abs() >= 1.0 {
        let c = 2f64.powi(e as i32);
        u.scale_in_place(c);
        v.scale_in_place(1.0 / c);
    }
}

/// Unitary eigendecomposition `A = E diag(values) E^H` of a real normal matrix.
#[derive(Clone, Debug)]
pub struct NormalEig {
    pub values: ComplexVec,
    pub vectors: DMatrix<Complex64>,
}

impl NormalEig {
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.values.clone()));
        &self.vectors * d * self.vectors.adjoint()
    }

    pub fn reconstruction_error(&self, a: &Mat) -> f64 {
        let r = self.reconstruct();
        let mut err = 0.0_f64;
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                err = err.max((r[(i, j)] - Complex64::new(a[(i, j)], 0.0)).norm());
            }
        }
        err
    }
}

pub fn to_complex(a: &Mat) -> DMatrix<Complex64> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| Complex64::new(a[(i, j)], 0.0))
}

/// Eigendecomposition of a normal matrix.
///
/// For normal `A` the symmetric part `S` and skew part `K` are simultaneously
/// unitarily diagonalisable, so the Hermitian matrix `S - i c K` shares `A`'s
/// eigenvectors for any real `c` that does not merge distinct eigenvalues.
/// A few irrational `c` are tried and the first that reconstructs `A` wins.
pub fn eig_normal(a: &Mat) -> Result<NormalEig> {
    require_square(a, "eig_normal")?;
    let n = a.rows();
    let fro2 = a.frobenius_norm_sq();
    let tolerance = NORMALITY_TOL * fro2;
    let deviation = a.normality_deviation();
    if deviation > tolerance {
        return Err(Error::NotNormal {
            deviation,
            tolerance,
        });
    }
    if fro2 == 0.0 {
        return Ok(NormalEig {
            values: vec![Complex64::new(0.0, 0.0); n],
            vectors: DMatrix::identity(n, n),
        });
    }

    let ac = to_complex(a);
    let scale = a.max_abs().max(1.0);
    let mut best: Option<(f64, NormalEig)> = None;
    for c in [0.618_033_988_749_894_9, 0.414_213_562_373_095, 1.324_717_957_244_746, 0.236_067_977_499_789_7] {
        let h = DMatrix::from_fn(n, n, |i, j| {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            let k = 0.5 * (a[(i, j)] - a[(j, i)]);
            Complex64::new(s, -c * k)
        });
        let eig = SymmetricEigen::new(h);
        let e = eig.eigenvectors;
        let values: ComplexVec = (0..n)
            .map(|j| {
                let col = e.column(j);
                (col.adjoint() * &ac * col)[(0, 0)]
            })
            .collect();
        let candidate = NormalEig { values, vectors: e };
        let err = candidate.reconstruction_error(a);
        if err <= 1e-10 * scale {
            return Ok(candidate);
        }
        if best.as_ref().is_none_or(|(b, _)| err < *b) {
            best = Some((err, candidate));
        }
    }
    // Every shift merged some eigenvalues; return the best attempt.
    Ok(best.expect("at least one attempt").1)
}

pub fn random_gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

/// Haar-ish random orthogonal matrix: Gram-Schmidt (applied twice) on the
/// columns of a Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut SeededRng) -> Mat {
    let g = random_gaussian(n, n, rng);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..n).map(|r| g[(r, c)]).collect()).collect();
    for j in 0..n {
        for _ in 0..2 {
            for i in 0..j {
                let dot: f64 = (0..n).map(|r| cols[i][r] * cols[j][r]).sum();
                for r in 0..n {
                    let v = cols[i][r];
                    cols[j][r] -= dot * v;
                }
            }
        }
        let norm = cols[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    Mat::from_fn(n, n, |r, c| cols[c][r])
}

/// Random real normal matrix with spectral radius at most `radius_max`:
/// `Q D Q^T` with `Q` orthogonal and `D` block diagonal with 1x1 real
/// entries and 2x2 scaled rotations, every block radius uniform in
/// `(0, radius_max)`.
pub fn random_normal_convergent(n: usize, radius_max: f64, rng: &mut SeededRng) -> Mat {
    assert!(n >= 1, "dimension must be positive");
    assert!(radius_max > 0.0 && radius_max < 1.0, "radius_max must lie in (0,1)");
    let q = random_orthogonal(n, rng);
    let mut d = Mat::zeros(n, n);
    let mut i = 0;
    while i < n {
        let r = radius_max * rng.uniform_open();
        if i + 1 < n && rng.uniform() < 0.5 {
            let theta = std::f64::consts::PI * rng.uniform();
            let (s, c) = theta.sin_cos();
            d[(i, i)] = r * c;
            d[(i, i + 1)] = -r * s;
            d[(i + 1, i)] = r * s;
            d[(i + 1, i + 1)] = r * c;
            i += 2;
        } else {
            d[(i, i)] = if rng.uniform() < 0.5 { -r } else { r };
            i += 1;
        }
    }
    q.matmul(&d).matmul_t(&q)
}

/// Random (generally non-normal) Gaussian matrix rescaled to a spectral
/// radius drawn uniformly in `(0, radius_max)`.
pub fn random_convergent(n: usize, radius_max: f64, rng: &mut SeededRng) -> Mat {
    assert!(n >= 1, "dimension must be positive");
    assert!(radius_max > 0.0 && radius_max < 1.0, "radius_max must lie in (0,1)");
    let g = random_gaussian(n, n, rng);
    let target = radius_max * rng.uniform_open();
    let rho = spectral_radius(&g);
    g.scale(target / rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: literal partial sum of `A^(kT) Q A^k`.
    fn lyapunov_series(a: &Mat, q: &Mat, terms: usize) -> Mat {
        let mut x = Mat::zeros(q.rows(), q.cols());
        let mut ak = Mat::identity(a.rows());
        for _ in 0..terms {
            x.add_assign(&ak.t_matmul(q).matmul(&ak));
            ak = ak.matmul(a);
        }
        x
    }

    #[test]
    fn lyapunov_examples() {
        let x = solve_discrete_lyapunov(&Mat::scalar(0.0), &Mat::scalar(1.0), 1e-12, 64).unwrap();
        assert_eq!(x, Mat::scalar(1.0));

        let a = Mat::scalar(0.5);
        let x = solve_discrete_lyapunov(&a, &Mat::scalar(1.0), 1e-12, 64).unwrap();
        let oracle = lyapunov_series(&a, &Mat::scalar(1.0), 200);
        assert!((oracle[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!((x[(0, 0)] - oracle[(0, 0)]).abs() < 1e-14);

        let a = Mat::diag(&[0.5, 0.3]);
        let x = solve_discrete_lyapunov(&a, &Mat::identity(2), 1e-12, 64).unwrap();
        let oracle = lyapunov_series(&a, &Mat::identity(2), 200);
        assert!(oracle.max_abs_diff(&Mat::diag(&[4.0 / 3.0, 100.0 / 91.0])) < 1e-14);
        assert!(x.max_abs_diff(&oracle) < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable_input() {
        let err = solve_discrete_lyapunov(&Mat::scalar(1.2), &Mat::scalar(1.0), 1e-12, 64).unwrap_err();
        assert!(matches!(err, Error::NonConvergent { .. }));
    }

    #[test]
    fn lyapunov_hits_iteration_cap() {
        // 0.999 needs ~13 doublings; capping at 2 leaves a large residual
        let err = solve_discrete_lyapunov(&Mat::scalar(0.999), &Mat::scalar(1.0), 1e-12, 2).unwrap_err();
        assert!(matches!(err, Error::NonConvergent { iterations: 2, .. }));
    }

    #[test]
    fn lyapunov_matches_series_on_random_inputs() {
        let mut rng = SeededRng::new(11);
        for _ in 0..20 {
            let a = random_convergent(5, 0.9, &mut rng);
            let b = random_gaussian(5, 5, &mut rng);
            let q = b.t_matmul(&b);
            let x = solve_discrete_lyapunov(&a, &q, 1e-9, 64).unwrap();
            let oracle = lyapunov_series(&a, &q, 500);
            assert!(x.max_abs_diff(&oracle) <= 1e-9, "{}", x.max_abs_diff(&oracle));
            assert!(x.is_symmetric(0.0));
        }
    }

    #[test]
    fn sylvester_examples() {
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let v = Mat::from_rows(&[&[0.2, 0.1], &[0.0, 0.5]]);
        let x = solve_discrete_sylvester_sum(&Mat::zeros(2, 2), &v, &a, 1e-12, 64).unwrap();
        assert_eq!(x, a);

        let x = solve_discrete_sylvester_sum(&Mat::scalar(0.5), &Mat::scalar(0.5), &Mat::scalar(1.0), 1e-12, 64)
            .unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);

        let d = Mat::diag(&[0.5, 0.3]);
        let x = solve_discrete_sylvester_sum(&d, &d, &Mat::identity(2), 1e-12, 64).unwrap();
        assert!(x.max_abs_diff(&Mat::diag(&[4.0 / 3.0, 100.0 / 91.0])) < 1e-14);
    }

    #[test]
    fn sylvester_handles_unbalanced_radii() {
        // rho(U) > 1 but rho(U) rho(V) < 1
        let u = Mat::scalar(1.5);
        let v = Mat::scalar(0.4);
        let x = solve_discrete_sylvester_sum(&u, &v, &Mat::scalar(1.0), 1e-10, 64).unwrap();
        assert!((x[(0, 0)] - 1.0 / (1.0 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn eig_normal_examples() {
        let e = eig_normal(&Mat::identity(2)).unwrap();
        for v in &e.values {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }

        let e = eig_normal(&Mat::diag(&[0.4, 0.2])).unwrap();
        let mut re: Vec<f64> = e.values.iter().map(|v| v.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 0.2).abs() < 1e-12 && (re[1] - 0.4).abs() < 1e-12);

        let t = std::f64::consts::FRAC_PI_4;
        let rot = Mat::from_rows(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]);
        let e = eig_normal(&rot).unwrap();
        let prod = e.values[0] * e.values[1];
        let sum = e.values[0] + e.values[1];
        // det = 1 and trace = 2 cos(pi/4) for e^{±i pi/4}
        assert!((prod.norm() - 1.0).abs() < 1e-12);
        assert!((sum.re - 2.0 * t.cos()).abs() < 1e-12 && sum.im.abs() < 1e-12);
        for v in &e.values {
            assert!((v.norm() - 1.0).abs() < 1e-12);
            assert!((v.arg().abs() - t).abs() < 1e-12);
        }
        assert!(e.reconstruction_error(&rot) < 1e-12);
    }

    #[test]
    fn eig_normal_rejects_non_normal() {
        let a = Mat::from_rows(&[&[0.5, 1.0], &[0.0, 0.3]]);
        assert!(matches!(eig_normal(&a), Err(Error::NotNormal { .. })));
    }

    #[test]
    fn eig_normal_reconstructs_random_normal_matrices() {
        let mut rng = SeededRng::new(5);
        for trial in 0..100 {
            let n = 1 + trial % 15;
            let a = random_normal_convergent(n, 0.95, &mut rng);
            let e = eig_normal(&a).unwrap();
            assert!(e.reconstruction_error(&a) <= 1e-8);
            let unitary = (e.vectors.adjoint() * &e.vectors - DMatrix::<Complex64>::identity(n, n))
                .iter()
                .fold(0.0_f64, |m, z| m.max(z.norm()));
            assert!(unitary <= 1e-8);
        }
    }

    #[test]
    fn random_normal_convergent_properties() {
        let mut rng = SeededRng::new(7);
        let a = random_normal_convergent(1, 0.9, &mut rng);
        assert_eq!(a.shape(), (1, 1));
        assert!(a[(0, 0)].abs() <= 0.9);

        for n in 1..=12 {
            let a = random_normal_convergent(n, 0.8, &mut rng);
            assert!(a.normality_deviation() <= 1e-10);
            assert!(spectral_radius(&a) <= 0.8 + 1e-6);
        }

        let a1 = random_normal_convergent(6, 0.7, &mut SeededRng::new(99));
        let a2 = random_normal_convergent(6, 0.7, &mut SeededRng::new(99));
        assert_eq!(a1, a2);
    }

    #[test]
    fn spectral_radius_estimates() {
        assert_eq!(spectral_radius(&Mat::zeros(3, 3)), 0.0);
        assert!((spectral_radius(&Mat::diag(&[0.2, -0.7, 0.1])) - 0.7).abs() < 1e-9);
        // Jordan block: norm grows transiently but the radius is 0.5
        let j = Mat::from_rows(&[&[0.5, 10.0], &[0.0, 0.5]]);
        assert!((spectral_radius(&j) - 0.5).abs() < 1e-6);
        let nil = Mat::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert_eq!(spectral_radius(&nil), 0.0);
    }

    #[test]
    fn frobenius_inner_examples() {
        let i2 = Mat::identity(2);
        assert_eq!(frobenius_inner(&i2, &i2).unwrap(), 2.0);
        let a = Mat::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(frobenius_inner(&a, &Mat::zeros(2, 2)).unwrap(), 0.0);
        assert_eq!(frobenius_inner(&a, &a).unwrap(), 30.0);
        assert!(matches!(
            frobenius_inner(&a, &Mat::zeros(2, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn cholesky_solves_and_detects_indefinite() {
        let a = Mat::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let c = Cholesky::new(&a).unwrap();
        assert!((c.log_det() - 8f64.ln()).abs() < 1e-14);
        assert!(a.matmul(&c.inverse()).max_abs_diff(&Mat::identity(2)) < 1e-14);
        assert!(Cholesky::new(&Mat::diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn transposed_products_agree() {
        let mut rng = SeededRng::new(3);
        let a = random_gaussian(3, 4, &mut rng);
        let b = random_gaussian(3, 5, &mut rng);
        let c = random_gaussian(6, 4, &mut rng);
        assert!(a.t_matmul(&b).max_abs_diff(&a.transpose().matmul(&b)) < 1e-14);
        assert!(a.matmul_t(&c).max_abs_diff(&a.matmul(&c.transpose())) < 1e-14);
    }
}
