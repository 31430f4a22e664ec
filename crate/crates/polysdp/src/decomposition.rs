//! From convex solutions back to network weights.
//!
//! The core is the neural decomposition: a PSD block matrix satisfying the
//! trace coupling `tr(Z_1) = Z_4` is written as a sum of rank-one terms
//! `p p'` with every `p` on the quadric `p' G p = 0`, `G = diag(I, -1)`.
//! Splitting `p = [c; d]` then gives a unit-norm neuron `u = c / ||c||`
//! with second-layer weight `d^2` (negated for the `Z'` block). The
//! quadratic-activation program instead maps eigenpairs directly to
//! neurons, with an optional rescaling to the cubic-regularized form and
//! an expansion that realizes the same function with any admissible
//! neuron count.

use crate::error::{Error, Result};
use crate::linalg::{eigen_sym, project_psd, SymBlockMatrix, SymMatrix, DEFAULT_RANK_TOL};
use crate::model::{Arch, NetworkWeights};
use crate::programs::{ConvexProgram, ProgramArch};
use crate::solver::ConvexSolution;
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A rank-one factor `p` of the neural decomposition, lying on the
/// quadric `p' G p = 0` up to the decomposition tolerance: the leading
/// entries `c` satisfy `||c||^2 = d_last^2`, and `d_last >= 0`.
#[derive(Debug, Clone)]
pub struct ConeFactor {
    pub p: Array1<f64>,
}

impl ConeFactor {
    /// Leading `d` entries of the factor.
    pub fn c(&self) -> ndarray::ArrayView1<'_, f64> {
        self.p.slice(ndarray::s![..self.p.len() - 1])
    }

    /// Last entry, sign-normalized to be nonnegative.
    pub fn d_last(&self) -> f64 {
        self.p[self.p.len() - 1]
    }

    /// `p' G p = ||c||^2 - d_last^2`.
    pub fn cone_residual(&self) -> f64 {
        quadric_form(&self.p)
    }
}

fn quadric_form(p: &Array1<f64>) -> f64 {
    let last = p.len() - 1;
    let mut v = -p[last] * p[last];
    for i in 0..last {
        v += p[i] * p[i];
    }
    v
}

/// Sum of `p p'` over a factor list.
pub fn reconstruct_factors(factors: &[ConeFactor], dim: usize) -> SymMatrix {
    let mut m = Array2::zeros((dim, dim));
    for f in factors {
        for r in 0..dim {
            for c in 0..dim {
                m[[r, c]] += f.p[r] * f.p[c];
            }
        }
    }
    SymMatrix::symmetrize(m).expect("square by construction")
}

/// Decompose a feasible block matrix into `numeric_rank(Z)` quadric
/// factors with `Z = sum_j p_j p_j'`.
///
/// Inputs violating PSD or trace coupling by at most `100 * tol` relative
/// to `max(1, ||Z||_F)` are repaired first (PSD projection, then the
/// corner entry is rebalanced to `tr(Z_1)`); larger violations are an
/// error. The factor chosen to pair with the head is the one with the
/// largest opposite-sign quadric value, and the quadratic root of smaller
/// magnitude is used, so the output is deterministic.
pub fn neural_decompose(z: &SymBlockMatrix, tol: f64) -> Result<Vec<ConeFactor>> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidInput("tolerance must be positive".to_string()));
    }
    let dim = z.inner().dim();
    let scale = z.inner().frob_norm().max(1.0);
    let eig0 = eigen_sym(z.inner())?;
    let lam_min = eig0.eigenvalues[dim - 1];
    let psd_violation = (-lam_min).max(0.0);
    let trace_violation = z.coupling_residual().abs();
    let violation = psd_violation.max(trace_violation);
    if violation > 100.0 * tol * scale {
        return Err(Error::Decomposition(format!(
            "input violates feasibility by {violation:e} (limit {:e})",
            100.0 * tol * scale
        )));
    }

    let repaired: SymMatrix;
    let eig = if violation > 1e-14 * scale {
        let mut fixed = project_psd(z.inner())?;
        let mut tr1 = 0.0;
        for i in 0..dim - 1 {
            tr1 += fixed.get(i, i);
        }
        fixed.set_sym(dim - 1, dim - 1, tr1);
        repaired = fixed;
        eigen_sym(&repaired)?
    } else {
        eig0
    };

    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let rank_thresh = DEFAULT_RANK_TOL * lam_max.max(1e-300);
    let mut work: Vec<Array1<f64>> = Vec::new();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > rank_thresh {
            let q = eig.eigenvectors.column(j);
            work.push(q.mapv(|v| v * lam.sqrt()));
        }
    }

    let r = work.len();
    let theta_full = tol * scale;
    let theta_emit = theta_full / (4.0 * r.max(1) as f64);
    let mut out: Vec<ConeFactor> = Vec::with_capacity(r);

    while !work.is_empty() {
        let g1 = quadric_form(&work[0]);
        if work.len() == 1 {
            if g1.abs() > theta_full {
                return Err(Error::Numerical(format!(
                    "last factor off the quadric by {:e}; trace coupling violated beyond {:e}",
                    g1.abs(),
                    theta_full
                )));
            }
            out.push(normalize_sign(work.remove(0)));
            continue;
        }
        if g1.abs() <= theta_emit {
            out.push(normalize_sign(work.remove(0)));
            continue;
        }
        // opposite-sign partner with maximal quadric magnitude
        let mut best: Option<(usize, f64)> = None;
        for (j, p) in work.iter().enumerate().skip(1) {
            let gj = quadric_form(p);
            if g1 * gj < 0.0 {
                match best {
                    Some((_, b)) if gj.abs() <= b => {}
                    _ => best = Some((j, gj.abs())),
                }
            }
        }
        let Some((j, _)) = best else {
            if g1.abs() <= theta_full {
                out.push(normalize_sign(work.remove(0)));
                continue;
            }
            return Err(Error::Numerical(format!(
                "no opposite-sign partner for quadric value {g1:e}"
            )));
        };
        let gj = quadric_form(&work[j]);
        let h = {
            let p1 = &work[0];
            let pj = &work[j];
            let last = p1.len() - 1;
            let mut v = -p1[last] * pj[last];
            for i in 0..last {
                v += p1[i] * pj[i];
            }
            v
        };
        // gj a^2 + 2 h a + g1 = 0; discriminant positive because g1 gj < 0
        let disc = (h * h - gj * g1).sqrt();
        let alpha = if h == 0.0 {
            (-g1 / gj).sqrt()
        } else {
            let qv = -(h + h.signum() * disc);
            let r1 = qv / gj;
            let r2 = g1 / qv;
            if r1.abs() < r2.abs() {
                r1
            } else {
                r2
            }
        };
        let denom = (1.0 + alpha * alpha).sqrt();
        let p1 = work[0].clone();
        let pj = work[j].clone();
        let y = (&p1 + &(&pj * alpha)) / denom;
        let unew = (&pj - &(&p1 * alpha)) / denom;
        out.push(normalize_sign(y));
        work[0] = unew;
        work.remove(j);
    }
    Ok(out)
}

fn normalize_sign(mut p: Array1<f64>) -> ConeFactor {
    let last = p.len() - 1;
    if p[last] < 0.0 {
        p.mapv_inplace(|v| -v);
    }
    ConeFactor { p }
}

/// Assemble network weights from the decomposed block pairs of a solved
/// program. Each factor of `Z_k` becomes a unit-norm neuron with
/// second-layer weight `+d^2` placed in slot `k`; factors of `Z'_k`
/// contribute `-d^2`. Near-zero factors (`||p|| <= tol * ||Z||_F^{1/2}`)
/// are dropped.
pub fn weights_from_pairs(
    pairs: &[(SymMatrix, SymMatrix)],
    arch: ProgramArch,
    tol: f64,
) -> Result<NetworkWeights> {
    if arch == ProgramArch::Quadratic {
        return Err(Error::InvalidInput(
            "quadratic-activation solutions decompose through eigen_weights_quadratic".to_string(),
        ));
    }
    let net_arch = arch.network_arch();
    let slots = net_arch.second_layer_len()?;
    if pairs.len() != slots && !matches!(net_arch, Arch::DenseScalar) {
        return Err(Error::Shape(format!(
            "expected {slots} pairs for {net_arch:?}, got {}",
            pairs.len()
        )));
    }
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (k, (z, zp)) in pairs.iter().enumerate() {
        for (matrix, sign) in [(z, 1.0), (zp, -1.0)] {
            let block = SymBlockMatrix::new(matrix.clone())?;
            let drop_tol = tol * matrix.frob_norm().sqrt();
            for factor in neural_decompose(&block, tol)? {
                if factor.p.iter().map(|v| v * v).sum::<f64>().sqrt() <= drop_tol {
                    continue;
                }
                let c = factor.c();
                let cn = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                if cn == 0.0 {
                    continue;
                }
                let u = c.mapv(|v| v / cn);
                let weight = sign * factor.d_last() * factor.d_last();
                let mut alpha = Array1::zeros(slots);
                alpha[if slots == 1 { 0 } else { k }] = weight;
                first.push(u);
                second.push(alpha);
            }
        }
    }
    NetworkWeights::new(net_arch, first, second, true)
}

/// Weights for the quadratic-activation network straight from the
/// eigendecomposition: `u_j` the eigenvectors, `alpha_j` the eigenvalues
/// with `|lambda| > rel_tol * max |lambda|`. The neuron count equals the
/// numeric rank of `Z`, at most `d`.
pub fn eigen_weights_quadratic(z: &SymMatrix, rel_tol: f64) -> Result<NetworkWeights> {
    let eig = eigen_sym(z)?;
    let lam_abs_max = eig
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(0.0_f64, f64::max);
    let thresh = rel_tol * lam_abs_max.max(1e-300);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > thresh {
            first.push(eig.eigenvectors.column(j).to_owned());
            second.push(ndarray::array![lam]);
        }
    }
    NetworkWeights::new(Arch::DenseScalar, first, second, true)
}

/// Convert a convex solution into optimal network weights for its
/// program's architecture.
pub fn network_from_solution(
    program: &ConvexProgram,
    solution: &ConvexSolution,
    tol: f64,
) -> Result<NetworkWeights> {
    match program.arch {
        ProgramArch::Quadratic => {
            let (z, zp) = &solution.pairs[0];
            let diff = SymMatrix::symmetrize(z.as_array() - zp.as_array())?;
            eigen_weights_quadratic(&diff, DEFAULT_RANK_TOL)
        }
        arch => weights_from_pairs(&solution.pairs, arch, tol),
    }
}

/// Rescale unit-norm quadratic-activation weights into the form optimal
/// for the cubic-regularized objective: `u_j <- u_j sqrt(t_j)`,
/// `alpha_j <- alpha_j / t_j` with `t_j = 2^{2/9} |alpha_j|^{2/3}`.
/// Neurons with `alpha_j = 0` are removed first. The forward map is
/// unchanged for quadratic activations.
pub fn rescale_to_cubic(weights: &NetworkWeights) -> Result<NetworkWeights> {
    if weights.arch != Arch::DenseScalar {
        return Err(Error::InvalidInput(
            "cubic rescaling applies to scalar networks".to_string(),
        ));
    }
    if !weights.unit_norm {
        return Err(Error::Constraint(
            "cubic rescaling expects unit-norm first-layer weights".to_string(),
        ));
    }
    let compacted = weights.compact();
    let mut first = Vec::with_capacity(compacted.m());
    let mut second = Vec::with_capacity(compacted.m());
    for (u, a) in compacted.first_layer.iter().zip(&compacted.second_layer) {
        let alpha = a[0];
        let t = 2f64.powf(2.0 / 9.0) * alpha.abs().powf(2.0 / 3.0);
        first.push(u * t.sqrt());
        second.push(ndarray::array![alpha / t]);
    }
    NetworkWeights::new(Arch::DenseScalar, first, second, false)
}

/// Source of the orthonormal-row matrix used by [`expand_solutions`].
#[derive(Debug, Clone, Copy)]
pub enum OrthoSource {
    /// The identity, valid only when `m = 2d`.
    Identity,
    /// QR orthonormalization of a seeded Gaussian matrix.
    Haar { seed: u64 },
}

/// Expand a solved quadratic-activation matrix `Z` into an `m`-neuron
/// network with the same function `x' Z x`: for rows `h_j` of an
/// `(m/2) x d` matrix with orthonormal columns, the neurons are
/// `Z h_j + h_j` with weight `1/4` and `Z h_j - h_j` with weight `-1/4`.
pub fn expand_solutions(z: &SymMatrix, m: usize, source: OrthoSource) -> Result<NetworkWeights> {
    let d = z.dim();
    if !m.is_multiple_of(2) || m < 2 * d {
        return Err(Error::InvalidInput(format!(
            "need even m >= 2d = {}, got {m}",
            2 * d
        )));
    }
    let rows = m / 2;
    let h = match source {
        OrthoSource::Identity => {
            if rows != d {
                return Err(Error::InvalidInput(format!(
                    "identity option needs m = 2d = {}, got m = {m}",
                    2 * d
                )));
            }
            Array2::eye(d)
        }
        OrthoSource::Haar { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = Array2::from_shape_fn((rows, d), |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            orthonormal_columns(a)?
        }
    };
    let mut first = Vec::with_capacity(m);
    let mut second = Vec::with_capacity(m);
    for j in 0..rows {
        let hj = h.row(j).to_owned();
        let zh = z.as_array().dot(&hj);
        first.push(&zh + &hj);
        second.push(ndarray::array![0.25]);
    }
    for j in 0..rows {
        let hj = h.row(j).to_owned();
        let zh = z.as_array().dot(&hj);
        first.push(&zh - &hj);
        second.push(ndarray::array![-0.25]);
    }
    NetworkWeights::new(Arch::DenseScalar, first, second, false)
}

/// Modified Gram-Schmidt with a second pass; columns come out orthonormal
/// to machine precision for generic Gaussian input.
fn orthonormal_columns(mut a: Array2<f64>) -> Result<Array2<f64>> {
    let cols = a.ncols();
    for _ in 0..2 {
        for c in 0..cols {
            for prev in 0..c {
                let proj = a.column(prev).dot(&a.column(c));
                let prev_col = a.column(prev).to_owned();
                a.column_mut(c).scaled_add(-proj, &prev_col);
            }
            let norm = a.column(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-12 {
                return Err(Error::Numerical(
                    "rank-deficient random matrix during orthonormalization".to_string(),
                ));
            }
            a.column_mut(c).mapv_inplace(|v| v / norm);
        }
    }
    Ok(a)
}
