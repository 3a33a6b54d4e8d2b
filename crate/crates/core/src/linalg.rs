//! Small dense linear-algebra kernel used by the regression machinery.
//!
//! The design matrices here are at most a few hundred columns, so a
//! Gram-Schmidt QR and a Jacobi eigensolver are plenty. Rolling our own keeps
//! rank-deficiency reporting (which columns are dependent) and PSD repair
//! under our control without a LAPACK link.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// Columns that are (numerically) linear combinations of earlier ones.
    #[error("design matrix is rank deficient; dependent columns: {0:?}")]
    RankDeficient(Vec<usize>),
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// self * v
    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// selfᵀ * v
    pub fn t_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let r = self.row(i);
            let vi = v[i];
            for j in 0..self.cols {
                out[j] += r[j] * vi;
            }
        }
        out
    }

    /// self * other
    pub fn mat_mat(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = out.row_mut(i);
                for j in 0..orow.len() {
                    out_row[j] += a * orow[j];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Force exact symmetry by averaging with the transpose.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let m = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += *y;
        }
    }

    pub fn sub_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x -= *y;
        }
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Least-squares solve via modified Gram-Schmidt QR with rank detection.
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    /// (XᵀX)⁻¹ = R⁻¹R⁻ᵀ, needed by the sandwich covariances.
    pub xtx_inv: Mat,
}

/// Relative pivot threshold below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

pub fn least_squares(x: &Mat, y: &[f64]) -> Result<LeastSquares, LinalgError> {
    if x.rows() != y.len() {
        return Err(LinalgError::Shape(format!(
            "X has {} rows but y has {}",
            x.rows(),
            y.len()
        )));
    }
    let (n, p) = (x.rows(), x.cols());
    if n < p {
        return Err(LinalgError::Shape(format!("{n} observations for {p} columns")));
    }

    // Column-major copy of X which MGS turns into Q in place.
    let mut q: Vec<Vec<f64>> = (0..p).map(|j| x.col(j)).collect();
    let orig_norm: Vec<f64> = q.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut r = Mat::zeros(p, p);
    let mut dependent = Vec::new();

    for j in 0..p {
        for i in 0..j {
            if r[(i, i)] == 0.0 {
                continue; // dependent column, already zeroed
            }
            let (head, tail) = q.split_at_mut(j);
            let rij = dot(&head[i], &tail[0]);
            r[(i, j)] = rij;
            for (qk, qi) in tail[0].iter_mut().zip(&head[i]) {
                *qk -= rij * qi;
            }
        }
        let norm = dot(&q[j], &q[j]).sqrt();
        if orig_norm[j] == 0.0 || norm <= RANK_TOL * orig_norm[j] {
            dependent.push(j);
            for v in &mut q[j] {
                *v = 0.0;
            }
            r[(j, j)] = 0.0;
        } else {
            r[(j, j)] = norm;
            for v in &mut q[j] {
                *v /= norm;
            }
        }
    }
    if !dependent.is_empty() {
        return Err(LinalgError::RankDeficient(dependent));
    }

    // coef: solve R b = Qᵀ y by back substitution.
    let qty: Vec<f64> = (0..p).map(|j| dot(&q[j], y)).collect();
    let mut coef = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = qty[j];
        for k in (j + 1)..p {
            s -= r[(j, k)] * coef[k];
        }
        coef[j] = s / r[(j, j)];
    }

    // R⁻¹ by back substitution on the identity, then (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ.
    let mut r_inv = Mat::zeros(p, p);
    for col in 0..p {
        for j in (0..=col).rev() {
            let mut s = if j == col { 1.0 } else { 0.0 };
            for k in (j + 1)..=col {
                s -= r[(j, k)] * r_inv[(k, col)];
            }
            r_inv[(j, col)] = s / r[(j, j)];
        }
    }
    let mut xtx_inv = Mat::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in j.max(i)..p {
                s += r_inv[(i, k)] * r_inv[(j, k)];
            }
            xtx_inv[(i, j)] = s;
        }
    }

    let fitted = x.mat_vec(&coef);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(yi, fi)| yi - fi).collect();
    Ok(LeastSquares { coef, fitted, residuals, xtx_inv })
}

/// Solve a small symmetric positive-definite system A x = b (Cholesky).
pub fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(LinalgError::Shape("solve_spd expects square A matching b".into()));
    }
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(LinalgError::Singular);
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    // forward then backward substitution
    let mut yv = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * yv[k];
        }
        yv[i] = s / l[(i, i)];
    }
    let mut xv = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = yv[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * xv[k];
        }
        xv[i] = s / l[(i, i)];
    }
    Ok(xv)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns).
pub fn jacobi_eigh(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    assert_eq!(a.cols(), n, "jacobi_eigh expects a square matrix");
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Mat::identity(n);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diag(), v)
}

fn frobenius(m: &Mat) -> f64 {
    m.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Clamp negative eigenvalues of a symmetric matrix to zero.
/// Returns the repaired matrix and whether any clamping happened.
pub fn psd_repair(a: &Mat) -> (Mat, bool) {
    let n = a.rows();
    let (vals, vecs) = jacobi_eigh(a);
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut repaired = false;
    let mut out = Mat::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        let lam_c = if lam < 0.0 {
            if lam < -1e-10 * (1.0 + scale) {
                repaired = true;
            }
            0.0
        } else {
            lam
        };
        if lam_c == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = vecs[(i, k)];
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[(i, j)] += lam_c * vik * vecs[(j, k)];
            }
        }
    }
    out.symmetrize();
    (out, repaired)
}
