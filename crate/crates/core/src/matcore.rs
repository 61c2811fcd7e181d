//! Dense complex linear algebra kernel.
//!
//! Everything upstream (Choi matrices, dilations, commutant solves, the
//! feasibility solver) is built on the primitives here: a row-major complex
//! matrix type, a Hermitian Jacobi eigensolver with a deterministic
//! phase/order convention, kernel and pseudo-inverse computations, Kronecker
//! products and partial traces.
//!
//! Conventions, fixed once and used everywhere:
//! * `vec` is column-stacking: `vec(A)[j*rows + i] = A[(i,j)]`, so that
//!   `vec(A X B) = (B^T ⊗ A) vec(X)`.
//! * Kronecker/tensor indexing is first-factor-slow: the flat index of the
//!   pair `(i1, i2)` with dims `(d1, d2)` is `i1*d2 + i2`.
//! * Eigenvalues are sorted descending; each eigenvector's
//!   largest-magnitude entry (lowest index on ties) is rotated to be real
//!   positive, and degenerate clusters are ordered by that pivot index.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;

pub const ZERO: C64 = Complex::new(0.0, 0.0);
pub const ONE: C64 = Complex::new(1.0, 0.0);

#[derive(Debug, Error)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (asymmetry {asym:.3e} vs tolerance {tol:.3e})")]
    NotHermitian { asym: f64, tol: f64 },
    #[error("index out of range: {0}")]
    Index(String),
}

/// Tolerance bundle threaded through every numeric comparison.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_tol: f64,
    /// Eigenvalue floor for positive semidefiniteness checks.
    pub psd_tol: f64,
    /// Frobenius-norm threshold for equality of matrices.
    pub eq_tol: f64,
    /// Relative Hermitian-asymmetry threshold.
    pub herm_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_tol: 1e-10,
            psd_tol: 1e-9,
            eq_tol: 1e-8,
            herm_tol: 1e-10,
        }
    }
}

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<C64>,
}

/// Which tensor factor an operation acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, ONE);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count must equal rows*cols");
        ComplexMatrix { rows, cols, data }
    }

    /// Convenience constructor from real entries, row-major.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), rows * cols);
        ComplexMatrix {
            rows,
            cols,
            data: entries.iter().map(|&r| Complex::new(r, 0.0)).collect(),
        }
    }

    /// Rank-one matrix `v w†`.
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: C64) -> Self {
        let data = self.data.iter().map(|a| a * s).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(Complex::new(s, 0.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conj(&self) -> Self {
        let data = self.data.iter().map(|a| a.conj()).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn trace(&self) -> C64 {
        assert!(self.is_square());
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &Self) -> f64 {
        self.sub(other).frobenius_norm()
    }

    /// `(A + A†)/2`.
    pub fn hermitize(&self) -> Self {
        assert!(self.is_square());
        self.add(&self.adjoint()).scale_re(0.5)
    }

    pub fn hermitian_asymmetry(&self) -> f64 {
        self.sub(&self.adjoint()).frobenius_norm()
    }

    pub fn is_hermitian(&self, tol: &Tolerances) -> bool {
        if !self.is_square() {
            return false;
        }
        let norm = self.frobenius_norm();
        self.hermitian_asymmetry() <= tol.herm_tol * norm.max(1.0)
    }

    fn require_hermitian(&self, tol: &Tolerances) -> Result<(), MatError> {
        if !self.is_square() {
            return Err(MatError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let norm = self.frobenius_norm().max(1.0);
        let asym = self.hermitian_asymmetry();
        if asym > tol.herm_tol * norm {
            return Err(MatError::NotHermitian { asym, tol: tol.herm_tol * norm });
        }
        Ok(())
    }

    /// Kronecker product, first factor slow.
    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.get(i1, j1);
                if a == ZERO {
                    continue;
                }
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        out.set(
                            i1 * other.rows + i2,
                            j1 * other.cols + j2,
                            a * other.get(i2, j2),
                        );
                    }
                }
            }
        }
        out
    }

    /// Column-stacking vectorization.
    pub fn vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.rows * self.cols);
        for j in 0..self.cols {
            for i in 0..self.rows {
                v.push(self.get(i, j));
            }
        }
        v
    }

    /// Inverse of [`ComplexMatrix::vec`].
    pub fn unvec(v: &[C64], rows: usize, cols: usize) -> Self {
        assert_eq!(v.len(), rows * cols);
        Self::from_fn(rows, cols, |i, j| v[j * rows + i])
    }

    /// Row-major flattening (used for Kraus-vector bookkeeping, distinct
    /// from the column-stacking `vec`).
    pub fn flatten_rows(&self) -> Vec<C64> {
        self.data.clone()
    }

    pub fn from_flat_rows(v: &[C64], rows: usize, cols: usize) -> Self {
        assert_eq!(v.len(), rows * cols);
        ComplexMatrix { rows, cols, data: v.to_vec() }
    }

    /// Partial trace over one factor of a `d1*d2`-dimensional square matrix.
    pub fn partial_trace(&self, dims: (usize, usize), trace_out: Side) -> Result<Self, MatError> {
        let (d1, d2) = dims;
        if !self.is_square() || self.rows != d1 * d2 {
            return Err(MatError::Dimension(format!(
                "partial trace needs a {n}x{n} matrix for dims ({d1},{d2}), got {r}x{c}",
                n = d1 * d2,
                r = self.rows,
                c = self.cols
            )));
        }
        match trace_out {
            Side::First => {
                let mut out = Self::zeros(d2, d2);
                for i2 in 0..d2 {
                    for j2 in 0..d2 {
                        let mut s = ZERO;
                        for k in 0..d1 {
                            s += self.get(k * d2 + i2, k * d2 + j2);
                        }
                        out.set(i2, j2, s);
                    }
                }
                Ok(out)
            }
            Side::Second => {
                let mut out = Self::zeros(d1, d1);
                for i1 in 0..d1 {
                    for j1 in 0..d1 {
                        let mut s = ZERO;
                        for k in 0..d2 {
                            s += self.get(i1 * d2 + k, j1 * d2 + k);
                        }
                        out.set(i1, j1, s);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Reorder tensor factors of a square matrix on `⊗_i V_i`.
    ///
    /// `perm[k]` names the old factor that lands in position `k`.
    pub fn permute_systems(&self, dims: &[usize], perm: &[usize]) -> Result<Self, MatError> {
        let total: usize = dims.iter().product();
        if !self.is_square() || self.rows != total {
            return Err(MatError::Dimension(format!(
                "permute_systems needs a {total}x{total} matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        assert_eq!(perm.len(), dims.len());
        let k = dims.len();
        let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
        let decompose = |mut idx: usize, ds: &[usize]| -> Vec<usize> {
            let mut out = vec![0; ds.len()];
            for p in (0..ds.len()).rev() {
                out[p] = idx % ds[p];
                idx /= ds[p];
            }
            out
        };
        let compose = |multi: &[usize], ds: &[usize]| -> usize {
            multi.iter().zip(ds).fold(0, |acc, (&i, &d)| acc * d + i)
        };
        let mut out = Self::zeros(total, total);
        for r in 0..total {
            let rm = decompose(r, &new_dims);
            let mut old_rm = vec![0; k];
            for p in 0..k {
                old_rm[perm[p]] = rm[p];
            }
            let ro = compose(&old_rm, dims);
            for c in 0..total {
                let cm = decompose(c, &new_dims);
                let mut old_cm = vec![0; k];
                for p in 0..k {
                    old_cm[perm[p]] = cm[p];
                }
                let co = compose(&old_cm, dims);
                out.set(r, c, self.get(ro, co));
            }
        }
        Ok(out)
    }
}

/// Cyclic complex Jacobi diagonalization of a Hermitian matrix.
///
/// Returns unsorted eigenvalues and the accumulated unitary whose columns
/// are the eigenvectors.
fn jacobi(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.rows;
    let mut a = h.hermitize();
    let mut v = ComplexMatrix::identity(n);
    if n <= 1 {
        let ev = if n == 1 { vec![a.get(0, 0).re] } else { vec![] };
        return (ev, v);
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let stop = 1e-15 * scale;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                let phase = apq / r; // e^{i phi}
                let theta = (aqq - app) / (2.0 * r);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // U restricted to (p,q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let upp = Complex::new(c, 0.0);
                let upq = Complex::new(s, 0.0);
                let uqp = -phase.conj() * s;
                let uqq = phase.conj() * c;
                // A <- A U on columns p, q
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * upp + akq * uqp);
                    a.set(k, q, akp * upq + akq * uqq);
                }
                // A <- U† A on rows p, q
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, upp.conj() * apk + uqp.conj() * aqk);
                    a.set(q, k, upq.conj() * apk + uqq.conj() * aqk);
                }
                a.set(p, q, ZERO);
                a.set(q, p, ZERO);
                a.set(p, p, Complex::new(a.get(p, p).re, 0.0));
                a.set(q, q, Complex::new(a.get(q, q).re, 0.0));
                // V <- V U
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * upp + vkq * uqp);
                    v.set(k, q, vkp * upq + vkq * uqq);
                }
            }
        }
    }
    let evals = (0..n).map(|i| a.get(i, i).re).collect();
    (evals, v)
}

fn pivot_index(col: &[C64]) -> usize {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, c) in col.iter().enumerate() {
        let m = c.norm();
        if m > best_mag + 1e-14 {
            best_mag = m;
            best = i;
        }
    }
    best
}

/// Hermitian eigendecomposition with descending eigenvalues and the
/// deterministic phase/order convention described in the module docs.
pub fn hermitian_eig(
    m: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<(Vec<f64>, ComplexMatrix), MatError> {
    m.require_hermitian(tol)?;
    let n = m.rows;
    let (evals, vecs) = jacobi(m);
    let mut cols: Vec<(f64, Vec<C64>)> =
        (0..n).map(|j| (evals[j], vecs.column(j))).collect();
    // Phase convention: pivot entry real positive.
    for (_, col) in cols.iter_mut() {
        let p = pivot_index(col);
        let piv = col[p];
        if piv.norm() > 0.0 {
            let phase = piv.conj() / piv.norm();
            for c in col.iter_mut() {
                *c *= phase;
            }
        }
    }
    // Sort by descending eigenvalue, then order degenerate clusters by pivot
    // index. Done in two passes because mixing the near-equality test into a
    // single comparator would not be a total order (the cluster relation is
    // not transitive) and the sort could panic.
    let scale = cols.iter().map(|(e, _)| e.abs()).fold(0.0, f64::max).max(1.0);
    let cluster_tol = 1e-10 * scale;
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && (cols[j - 1].0 - cols[j].0).abs() <= cluster_tol {
            j += 1;
        }
        cols[i..j].sort_by_key(|(_, col)| pivot_index(col));
        i = j;
    }
    let sorted_evals: Vec<f64> = cols.iter().map(|(e, _)| *e).collect();
    let v = ComplexMatrix::from_fn(n, n, |i, j| cols[j].1[i]);
    Ok((sorted_evals, v))
}

/// Orthonormal basis of the (numerical) null space, as matrix columns.
///
/// Computed from the eigendecomposition of `m† m`; Gram eigenvalues at or
/// below `rank_tol * e_max` count as zero.
pub fn null_space(m: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let gram = m.adjoint().mul(m);
    let (evals, vecs) = hermitian_eig(&gram, tol).expect("gram matrix is Hermitian");
    // Cut relative to the largest Gram eigenvalue (not its square root):
    // small Gram eigenvalues carry solver noise ~1e-15 * e_max, so a cut on
    // singular values would misclassify exact-zero directions.
    let e_max = evals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = tol.rank_tol.max(f64::EPSILON) * e_max;
    let mut kept: Vec<Vec<C64>> = Vec::new();
    for (j, &ev) in evals.iter().enumerate() {
        if ev <= cut {
            kept.push(vecs.column(j));
        }
    }
    ComplexMatrix::from_fn(m.cols, kept.len(), |i, j| kept[j][i])
}

/// Numerical rank via singular values of `m`.
pub fn rank(m: &ComplexMatrix, tol: &Tolerances) -> usize {
    m.cols - null_space(m, tol).cols
}

/// Nearest positive semidefinite matrix in Frobenius norm (eigenvalue clip).
pub fn project_psd(m: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, MatError> {
    m.require_hermitian(tol)?;
    let (evals, v) = hermitian_eig(m, tol)?;
    Ok(reassemble(&evals.iter().map(|&e| e.max(0.0)).collect::<Vec<_>>(), &v))
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &ComplexMatrix, tol: &Tolerances) -> Result<f64, MatError> {
    let (evals, _) = hermitian_eig(m, tol)?;
    Ok(evals.last().copied().unwrap_or(0.0))
}

/// `V diag(evals) V†`.
pub fn reassemble(evals: &[f64], v: &ComplexMatrix) -> ComplexMatrix {
    let n = v.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for (j, &e) in evals.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        for i in 0..n {
            for k in 0..n {
                let val = out.get(i, k) + v.get(i, j) * v.get(k, j).conj() * e;
                out.set(i, k, val);
            }
        }
    }
    out
}

/// Moore-Penrose pseudo-inverse via the Hermitian eigendecomposition of
/// `m† m`.
pub fn pseudo_inverse(m: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let gram = m.adjoint().mul(m);
    let (evals, v) = hermitian_eig(&gram, tol).expect("gram matrix is Hermitian");
    // Cut relative to the largest Gram eigenvalue: eigenvalues of m†m near
    // zero carry solver noise ~1e-15 * e_max, well below this threshold.
    let sigma_max_sq = evals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = tol.rank_tol.max(f64::EPSILON) * sigma_max_sq;
    let inv: Vec<f64> = evals
        .iter()
        .map(|&e| if e > cut && e > 0.0 { 1.0 / e } else { 0.0 })
        .collect();
    // m^+ = (m† m)^+ m†
    reassemble(&inv, &v).mul(&m.adjoint())
}

/// Solve `G X = B` for Hermitian positive semidefinite `G` (pseudo-inverse
/// on the numerically nonzero spectrum).
pub fn gram_solve(g: &ComplexMatrix, b: &ComplexMatrix, tol: &Tolerances) -> ComplexMatrix {
    let (evals, v) = hermitian_eig(g, tol).expect("gram matrix is Hermitian");
    let emax = evals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = tol.rank_tol.max(f64::EPSILON) * emax;
    let inv: Vec<f64> = evals
        .iter()
        .map(|&e| if e > cut && e > 0.0 { 1.0 / e } else { 0.0 })
        .collect();
    reassemble(&inv, &v).mul(b)
}

/// Matrix square root of a Hermitian PSD matrix (negative ripple clipped).
pub fn sqrt_psd(m: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix, MatError> {
    let (evals, v) = hermitian_eig(m, tol)?;
    Ok(reassemble(&evals.iter().map(|&e| e.max(0.0).sqrt()).collect::<Vec<_>>(), &v))
}

pub mod pauli {
    use super::{C64, ComplexMatrix};
    use num_complex::Complex;

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
    }

    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::from_vec(
            2,
            2,
            vec![
                Complex::new(0.0, 0.0),
                Complex::new(0.0, -1.0),
                Complex::new(0.0, 1.0),
                Complex::new(0.0, 0.0),
            ],
        )
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
    }

    /// `n·σ` for a Bloch vector `n`.
    pub fn bloch(n: [f64; 3]) -> ComplexMatrix {
        let mut m = sigma_x().scale_re(n[0]);
        m = m.add(&sigma_y().scale_re(n[1]));
        m.add(&sigma_z().scale_re(n[2]))
    }

    pub fn all() -> [ComplexMatrix; 4] {
        [ComplexMatrix::identity(2), sigma_x(), sigma_y(), sigma_z()]
    }

    pub const I: C64 = Complex::new(0.0, 1.0);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut StdRng, n: usize) -> ComplexMatrix {
        random_matrix(rng, n, n).hermitize()
    }

    #[test]
    fn eig_identity() {
        let tol = Tolerances::default();
        let (evals, _) = hermitian_eig(&ComplexMatrix::identity(2), &tol).unwrap();
        assert!((evals[0] - 1.0).abs() < 1e-14);
        assert!((evals[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eig_sigma_x() {
        let tol = Tolerances::default();
        let (evals, v) = hermitian_eig(&pauli::sigma_x(), &tol).unwrap();
        assert!((evals[0] - 1.0).abs() < 1e-14);
        assert!((evals[1] + 1.0).abs() < 1e-14);
        let s = 1.0 / 2f64.sqrt();
        // Phase convention pins the pivot entries real positive.
        assert!((v.get(0, 0) - Complex::new(s, 0.0)).norm() < 1e-12);
        assert!((v.get(1, 0) - Complex::new(s, 0.0)).norm() < 1e-12);
        assert!((v.get(0, 1).norm() - s).abs() < 1e-12);
        assert!((v.get(1, 1).norm() - s).abs() < 1e-12);
    }

    #[test]
    fn eig_reconstructs_random_hermitian() {
        let tol = Tolerances::default();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_hermitian(&mut rng, 4);
            let (evals, v) = hermitian_eig(&h, &tol).unwrap();
            let rec = reassemble(&evals, &v);
            assert!(rec.dist(&h) <= 1e-12, "reconstruction error {}", rec.dist(&h));
            // descending order
            for w in evals.windows(2) {
                assert!(w[0] >= w[1] - 1e-10);
            }
        }
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let tol = Tolerances::default();
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(hermitian_eig(&m, &tol).is_err());
        let m = ComplexMatrix::zeros(2, 3);
        assert!(hermitian_eig(&m, &tol).is_err());
    }

    #[test]
    fn null_space_zero_and_identity() {
        let tol = Tolerances::default();
        let z = ComplexMatrix::zeros(2, 3);
        assert_eq!(null_space(&z, &tol).cols, 3);
        let id = ComplexMatrix::identity(3);
        assert_eq!(null_space(&id, &tol).cols, 0);
    }

    #[test]
    fn null_space_of_repeated_column() {
        let tol = Tolerances::default();
        // columns (v, v) -> kernel spanned by (1,-1)/sqrt(2)
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let ns = null_space(&m, &tol);
        assert_eq!(ns.cols, 1);
        let s = 1.0 / 2f64.sqrt();
        let a = ns.get(0, 0);
        let b = ns.get(1, 0);
        assert!((a.norm() - s).abs() < 1e-12);
        assert!((a + b).norm() < 1e-12);
        // orthonormality
        let g = ns.adjoint().mul(&ns);
        assert!(g.dist(&ComplexMatrix::identity(1)) < 1e-12);
    }

    #[test]
    fn partial_trace_of_kron() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 3, 3);
        let k = a.kron(&b);
        let t2 = k.partial_trace((2, 3), Side::Second).unwrap();
        assert!(t2.dist(&a.scale(b.trace())) < 1e-12);
        let t1 = k.partial_trace((2, 3), Side::First).unwrap();
        assert!(t1.dist(&b.scale(a.trace())) < 1e-12);
    }

    #[test]
    fn partial_trace_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let bell = vec![
            Complex::new(s, 0.0),
            ZERO,
            ZERO,
            Complex::new(s, 0.0),
        ];
        let proj = ComplexMatrix::outer(&bell, &bell);
        let red = proj.partial_trace((2, 2), Side::Second).unwrap();
        assert!(red.dist(&ComplexMatrix::identity(2).scale_re(0.5)) < 1e-14);
        assert!((proj.trace() - red.trace()).norm() < 1e-14);
    }

    #[test]
    fn project_psd_cases() {
        let tol = Tolerances::default();
        let d = ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        let p = project_psd(&d, &tol).unwrap();
        assert!(p.dist(&ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 0.0])) < 1e-12);
        // sigma_z -> (I + sigma_z)/2
        let p = project_psd(&pauli::sigma_z(), &tol).unwrap();
        let expect = ComplexMatrix::identity(2).add(&pauli::sigma_z()).scale_re(0.5);
        assert!(p.dist(&expect) < 1e-12);
        // fixed point on PSD input
        let mut rng = StdRng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 3, 3);
        let psd = m.adjoint().mul(&m);
        assert!(project_psd(&psd, &tol).unwrap().dist(&psd) < 1e-10);
    }

    #[test]
    fn pseudo_inverse_solves() {
        let tol = Tolerances::default();
        let mut rng = StdRng::seed_from_u64(5);
        let m = random_matrix(&mut rng, 4, 3);
        let pinv = pseudo_inverse(&m, &tol);
        // m pinv m = m
        assert!(m.mul(&pinv).mul(&m).dist(&m) < 1e-10);
    }

    #[test]
    fn permute_systems_swaps_kron() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 3, 3);
        let ab = a.kron(&b);
        let ba = b.kron(&a);
        let swapped = ab.permute_systems(&[2, 3], &[1, 0]).unwrap();
        assert!(swapped.dist(&ba) < 1e-13);
    }

    #[test]
    fn vec_convention_identity() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 2, 3);
        let x = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let lhs = a.mul(&x).mul(&b).vec();
        let op = b.transpose().kron(&a);
        let rhs = op.mul_vec(&x.vec());
        let diff: f64 = lhs
            .iter()
            .zip(&rhs)
            .map(|(l, r)| (l - r).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(diff < 1e-12);
    }

    #[test]
    fn partial_trace_is_linear_and_trace_preserving() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..200 {
            let m = random_matrix(&mut rng, 6, 6);
            let n = random_matrix(&mut rng, 6, 6);
            let c = Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let lhs = m.scale(c).add(&n).partial_trace((2, 3), Side::First).unwrap();
            let rhs = m
                .partial_trace((2, 3), Side::First)
                .unwrap()
                .scale(c)
                .add(&n.partial_trace((2, 3), Side::First).unwrap());
            assert!(lhs.dist(&rhs) < 1e-12);
            assert!((lhs.trace() - m.scale(c).add(&n).trace()).norm() < 1e-12);
        }
    }
}
