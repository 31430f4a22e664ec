//! Dense symmetric-matrix kernel: cyclic-Jacobi eigendecomposition, PSD
//! projection, symmetric nuclear norm, Moreau splitting and numeric rank.
//!
//! Matrices here are small by construction (block dimension `d+1` or `f+1`),
//! so the Jacobi method is used: it is simple, deterministic for a fixed
//! input, and accurate to machine precision for every real symmetric matrix.

use crate::error::{Error, Result};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

/// Default relative tolerance for rank decisions, chosen so that rank
/// reports stay stable under first-order solver noise (~1e-6).
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// A dense real symmetric matrix. Symmetry is enforced at construction;
/// all operations treat the full storage as authoritative.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: Array2<f64>,
}

impl SymMatrix {
    /// Wrap a square array, requiring exact symmetry.
    pub fn from_array(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Shape(format!(
                "symmetric matrix must be square and nonempty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for i in 0..a.nrows() {
            for j in (i + 1)..a.ncols() {
                if a[[i, j]].to_bits() != a[[j, i]].to_bits() && a[[i, j]] != a[[j, i]] {
                    return Err(Error::Shape(format!(
                        "matrix is not symmetric at ({i},{j}): {} vs {}",
                        a[[i, j]],
                        a[[j, i]]
                    )));
                }
            }
        }
        Ok(Self { data: a })
    }

    /// Wrap a square array after replacing it with its symmetric part
    /// `(A + A^T)/2`.
    pub fn symmetrize(a: Array2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::Shape(format!(
                "expected square nonempty matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let sym = (&a + &a.t()) * 0.5;
        Ok(Self { data: sym })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            data: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: Array2::eye(dim),
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            m.data[[i, i]] = *v;
        }
        m
    }

    /// Rank-one matrix `v v^T`.
    pub fn outer(v: ArrayView1<f64>) -> Self {
        let n = v.len();
        let mut data = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                data[[i, j]] = v[i] * v[j];
            }
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    /// Set entry (i,j) and its mirror (j,i).
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[[i, j]] = v;
        self.data[[j, i]] = v;
    }

    pub fn trace(&self) -> f64 {
        self.data.diag().sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn require_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "matrix has non-finite entries".to_string(),
            ))
        }
    }
}

/// Symmetric `(d+1) x (d+1)` block matrix with named views
/// `Z1` (top-left `d x d`), `Z2` (last column without the corner) and
/// `Z4` (bottom-right corner). Views borrow the inner storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBlockMatrix {
    inner: SymMatrix,
}

impl SymBlockMatrix {
    pub fn new(inner: SymMatrix) -> Result<Self> {
        if inner.dim() < 2 {
            return Err(Error::Shape(
                "block matrix needs dimension at least 2".to_string(),
            ));
        }
        Ok(Self { inner })
    }

    pub fn zeros(block_dim: usize) -> Result<Self> {
        Self::new(SymMatrix::zeros(block_dim))
    }

    /// Assemble `[[Z1, Z2], [Z2^T, Z4]]`.
    pub fn from_blocks(z1: &SymMatrix, z2: ArrayView1<f64>, z4: f64) -> Result<Self> {
        let d = z1.dim();
        if z2.len() != d {
            return Err(Error::Shape(format!(
                "Z2 length {} does not match Z1 dimension {d}",
                z2.len()
            )));
        }
        let mut data = Array2::zeros((d + 1, d + 1));
        data.slice_mut(s![..d, ..d]).assign(z1.as_array());
        for i in 0..d {
            data[[i, d]] = z2[i];
            data[[d, i]] = z2[i];
        }
        data[[d, d]] = z4;
        Ok(Self {
            inner: SymMatrix { data },
        })
    }

    /// Dimension `d` of the `Z1` block (inner dimension minus one).
    pub fn d(&self) -> usize {
        self.inner.dim() - 1
    }

    pub fn inner(&self) -> &SymMatrix {
        &self.inner
    }

    pub fn into_inner(self) -> SymMatrix {
        self.inner
    }

    pub fn z1(&self) -> ArrayView2<'_, f64> {
        let d = self.d();
        self.inner.data.slice(s![..d, ..d])
    }

    pub fn z2(&self) -> ArrayView1<'_, f64> {
        let d = self.d();
        self.inner.data.slice(s![..d, d])
    }

    pub fn z4(&self) -> f64 {
        let d = self.d();
        self.inner.data[[d, d]]
    }

    pub fn trace_z1(&self) -> f64 {
        self.z1().diag().sum()
    }

    /// `tr(Z1) - Z4`, the trace-coupling residual. Equals `<G, Z>` for
    /// `G = diag(I_d, -1)`.
    pub fn coupling_residual(&self) -> f64 {
        self.trace_z1() - self.z4()
    }
}

/// Eigendecomposition `A = Q diag(lambda) Q^T` with eigenvalues sorted in
/// descending order and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Array1<f64>,
    /// Column `j` is the eigenvector for `eigenvalues[j]`.
    pub eigenvectors: Array2<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Rebuild `Q diag(lambda) Q^T`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim();
        let mut data = Array2::zeros((n, n));
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let q = self.eigenvectors.column(j);
            for r in 0..n {
                for c in 0..n {
                    data[[r, c]] += lam * q[r] * q[c];
                }
            }
        }
        SymMatrix::symmetrize(data).expect("square by construction")
    }
}

/// Cyclic Jacobi on contiguous row-major storage; returns unsorted
/// eigenvalues with the eigenvector matrix written into `v` (columns).
/// Classic threshold scheme: small rotations are skipped in late sweeps
/// once they cannot change the diagonal.
pub(crate) fn jacobi_raw(a: &Array2<f64>, v: &mut Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m: Vec<f64> = a.iter().cloned().collect();
    let vm = v.as_slice_mut().expect("contiguous");
    for (i, x) in vm.iter_mut().enumerate() {
        *x = if i % (n + 1) == 0 { 1.0 } else { 0.0 };
    }
    let mut d: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    let mut b = d.clone();
    let mut z = vec![0.0; n];

    for sweep in 1..=100 {
        let mut sm = 0.0;
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                sm += m[p * n + q].abs();
            }
        }
        if sm == 0.0 {
            break;
        }
        let tresh = if sweep < 4 {
            0.2 * sm / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                if sweep > 4 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    m[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= tresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let mut t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        t = -t;
                    }
                    t
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                m[p * n + q] = 0.0;
                let rotate = |m: &mut Vec<f64>, i: usize, j: usize| {
                    let g = m[i];
                    let hh = m[j];
                    m[i] = g - s * (hh + g * tau);
                    m[j] = hh + s * (g - hh * tau);
                };
                for j in 0..p {
                    rotate(&mut m, j * n + p, j * n + q);
                }
                for j in (p + 1)..q {
                    rotate(&mut m, p * n + j, j * n + q);
                }
                for j in (q + 1)..n {
                    rotate(&mut m, p * n + j, q * n + j);
                }
                for j in 0..n {
                    let g = vm[j * n + p];
                    let hh = vm[j * n + q];
                    vm[j * n + p] = g - s * (hh + g * tau);
                    vm[j * n + q] = hh + s * (g - hh * tau);
                }
            }
        }
        for i in 0..n {
            b[i] += z[i];
            d[i] = b[i];
            z[i] = 0.0;
        }
    }
    d
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Eigenvalues are returned in descending order, ties broken by first
/// occurrence, so the output is deterministic for a fixed input.
pub fn eigen_sym(a: &SymMatrix) -> Result<EigenDecomposition> {
    a.require_finite()?;
    let n = a.dim();
    let mut v: Array2<f64> = Array2::zeros((n, n));
    let d = jacobi_raw(&a.data, &mut v);

    // stable descending sort of (eigenvalue, original index)
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        d[j].partial_cmp(&d[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (newj, &oldj) in order.iter().enumerate() {
        eigenvectors.column_mut(newj).assign(&v.column(oldj));
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Frobenius-nearest positive semidefinite matrix: eigenvalues clipped at
/// zero, eigenvectors kept.
pub fn project_psd(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = eigen_sym(a)?;
    let n = a.dim();
    let mut data = Array2::zeros((n, n));
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(j);
        for r in 0..n {
            for c in r..n {
                let v = lam * q[r] * q[c];
                data[[r, c]] += v;
                if r != c {
                    data[[c, r]] += v;
                }
            }
        }
    }
    Ok(SymMatrix { data })
}

/// Sum of absolute eigenvalues; the nuclear norm of a symmetric matrix.
pub fn nuclear_norm_sym(a: &SymMatrix) -> Result<f64> {
    let eig = eigen_sym(a)?;
    Ok(eig.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Moreau decomposition `A = Z1 - Z2` into the positive and negative
/// eigenvalue parts. Both parts are PSD and mutually orthogonal in the
/// trace inner product.
pub fn moreau_split(a: &SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
    let eig = eigen_sym(a)?;
    let n = a.dim();
    let mut pos = Array2::zeros((n, n));
    let mut neg = Array2::zeros((n, n));
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let q = eig.eigenvectors.column(j);
        let (target, w) = if lam > 0.0 {
            (&mut pos, lam)
        } else {
            (&mut neg, -lam)
        };
        for r in 0..n {
            for c in r..n {
                let v = w * q[r] * q[c];
                target[[r, c]] += v;
                if r != c {
                    target[[c, r]] += v;
                }
            }
        }
    }
    Ok((SymMatrix { data: pos }, SymMatrix { data: neg }))
}

/// Number of eigenvalues above `rel_tol * max(lambda_max, 1e-300)`.
/// Small negative eigenvalues are treated as zero.
pub fn numeric_rank(a: &SymMatrix, rel_tol: f64) -> Result<usize> {
    let eig = eigen_sym(a)?;
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let thresh = rel_tol * lam_max.max(1e-300);
    Ok(eig.eigenvalues.iter().filter(|&&l| l > thresh).count())
}

// ---------------------------------------------------------------------
// Small dense solve helpers shared by the solver and the activation fit.
// ---------------------------------------------------------------------

/// In-place Cholesky factorization of a symmetric positive definite
/// matrix; returns the lower triangular factor.
pub(crate) fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "Cholesky pivot {sum:e} at index {i}; matrix not positive definite"
                    )));
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` given the lower Cholesky factor.
pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        for k in 0..i {
            let v = l[[i, k]] * y[k];
            y[i] -= v;
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = l[[k, i]] * y[k];
            y[i] -= v;
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Dense LU factorization with partial pivoting.
pub(crate) struct LuFactors {
    lu: Array2<f64>,
    perm: Vec<usize>,
}

pub(crate) fn lu_factor(a: &Array2<f64>) -> Result<LuFactors> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = lu[[col, col]].abs();
        for r in (col + 1)..n {
            let v = lu[[r, col]].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-300 || !best.is_finite() {
            return Err(Error::Numerical(format!(
                "singular pivot in LU at column {col}"
            )));
        }
        if pivot != col {
            perm.swap(col, pivot);
            for c in 0..n {
                let tmp = lu[[col, c]];
                lu[[col, c]] = lu[[pivot, c]];
                lu[[pivot, c]] = tmp;
            }
        }
        for r in (col + 1)..n {
            let f = lu[[r, col]] / lu[[col, col]];
            lu[[r, col]] = f;
            for c in (col + 1)..n {
                let v = f * lu[[col, c]];
                lu[[r, c]] -= v;
            }
        }
    }
    Ok(LuFactors { lu, perm })
}

pub(crate) fn lu_solve(f: &LuFactors, b: &Array1<f64>) -> Array1<f64> {
    let n = f.lu.nrows();
    let mut x = Array1::from_iter(f.perm.iter().map(|&p| b[p]));
    for i in 0..n {
        for k in 0..i {
            let v = f.lu[[i, k]] * x[k];
            x[i] -= v;
        }
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = f.lu[[i, k]] * x[k];
            x[i] -= v;
        }
        x[i] /= f.lu[[i, i]];
    }
    x
}
