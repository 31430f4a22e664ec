//! Convex program construction. Each architecture's training problem is
//! represented as data: a linear prediction operator on a list of PSD
//! block-matrix pairs `(Z_k, Z'_k)`, trace-coupling equality constraints
//! `tr(Z_1) = Z_4` per block, a convex loss and the regularization weight.
//! One solver serves every program through the `predict`/`adjoint` pair.

use crate::activation::PolyActivation;
use crate::error::{Error, Result};
use crate::linalg::{eigen_sym, SymBlockMatrix, SymMatrix};
use crate::model::{Arch, Dataset, Loss, NetworkWeights};
use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

/// Architecture tag of a convex program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgramArch {
    /// Scalar-output polynomial activation; one `(Z, Z')` pair over
    /// `(d+1) x (d+1)` blocks with trace coupling.
    Scalar,
    /// Quadratic activation; a single unconstrained symmetric `d x d`
    /// variable stored as the PSD pair `(Z1, Z2)` with `Z = Z1 - Z2` and
    /// nuclear-norm regularization `beta * tr(Z1 + Z2)`.
    Quadratic,
    /// Vector output with `classes` independent pairs.
    Vector { classes: usize },
    /// Convolutional with one pair per patch.
    Conv { filter_len: usize, patches: usize },
    /// Average pooling with one pair per window of `pool` patches.
    Pool {
        filter_len: usize,
        patches: usize,
        pool: usize,
    },
}

impl ProgramArch {
    /// The network architecture produced by decomposing this program's
    /// solution.
    pub fn network_arch(&self) -> Arch {
        match *self {
            ProgramArch::Scalar | ProgramArch::Quadratic => Arch::DenseScalar,
            ProgramArch::Vector { classes } => Arch::DenseVector { classes },
            ProgramArch::Conv {
                filter_len,
                patches,
            } => Arch::Conv {
                filter_len,
                patches,
            },
            ProgramArch::Pool {
                filter_len,
                patches,
                pool,
            } => Arch::Pool {
                filter_len,
                patches,
                pool,
            },
        }
    }

    /// Upper bound on `m*` (the sum of block ranks) for this architecture.
    pub fn m_star_bound(&self, block_dim: usize) -> usize {
        match *self {
            ProgramArch::Scalar => 2 * block_dim,
            ProgramArch::Quadratic => block_dim,
            ProgramArch::Vector { classes } => 2 * block_dim * classes,
            ProgramArch::Conv { patches, .. } => 2 * block_dim * patches * patches,
            ProgramArch::Pool { patches, pool, .. } => {
                2 * block_dim * (patches / pool) * (patches / pool)
            }
        }
    }
}

/// Per-pair input rows. For pooling a pair covers several patch matrices
/// whose quadratic and linear terms are averaged with `ab_scale = 1/P`;
/// the constant term of the activation enters once per pair.
#[derive(Debug, Clone)]
struct PairInput {
    row_sets: Vec<Array2<f64>>,
    ab_scale: f64,
    out_col: usize,
}

/// An architecture-tagged convex training program over PSD block pairs.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    pub arch: ProgramArch,
    /// Dimension of each `Z_k` block: `d+1`, `f+1`, or `d` for the
    /// quadratic-activation program.
    pub block_dim: usize,
    pub pair_count: usize,
    pub act: PolyActivation,
    pub beta: f64,
    pub loss: Loss,
    /// Flattened targets, `n x out_dim`.
    pub targets: Array2<f64>,
    pair_inputs: Vec<PairInput>,
    trace_coupled: bool,
    n: usize,
    out_dim: usize,
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "regularization weight must be positive and finite, got {beta}"
        )));
    }
    Ok(())
}

impl ConvexProgram {
    /// Scalar-output polynomial activation program.
    pub fn build_scalar(
        data: &Dataset,
        act: PolyActivation,
        beta: f64,
        loss: Loss,
    ) -> Result<Self> {
        check_beta(beta)?;
        let y = data.y()?;
        Ok(Self {
            arch: ProgramArch::Scalar,
            block_dim: data.d() + 1,
            pair_count: 1,
            act,
            beta,
            loss,
            targets: y.insert_axis(ndarray::Axis(1)).to_owned(),
            pair_inputs: vec![PairInput {
                row_sets: vec![data.x.clone()],
                ab_scale: 1.0,
                out_col: 0,
            }],
            trace_coupled: true,
            n: data.n(),
            out_dim: 1,
        })
    }

    /// Quadratic-activation program with nuclear-norm regularization. The
    /// symmetric variable is stored as a PSD pair so the same cone
    /// machinery applies; there is no trace coupling.
    pub fn build_quadratic(data: &Dataset, beta: f64, loss: Loss) -> Result<Self> {
        check_beta(beta)?;
        let y = data.y()?;
        Ok(Self {
            arch: ProgramArch::Quadratic,
            block_dim: data.d(),
            pair_count: 1,
            act: PolyActivation::quadratic(),
            beta,
            loss,
            targets: y.insert_axis(ndarray::Axis(1)).to_owned(),
            pair_inputs: vec![PairInput {
                row_sets: vec![data.x.clone()],
                ab_scale: 1.0,
                out_col: 0,
            }],
            trace_coupled: false,
            n: data.n(),
            out_dim: 1,
        })
    }

    /// Vector-output program: one independent pair per class.
    pub fn build_vector(
        data: &Dataset,
        act: PolyActivation,
        beta: f64,
        loss: Loss,
    ) -> Result<Self> {
        check_beta(beta)?;
        let classes = data.out_dim();
        let pair_inputs = (0..classes)
            .map(|k| PairInput {
                row_sets: vec![data.x.clone()],
                ab_scale: 1.0,
                out_col: k,
            })
            .collect();
        Ok(Self {
            arch: ProgramArch::Vector { classes },
            block_dim: data.d() + 1,
            pair_count: classes,
            act,
            beta,
            loss,
            targets: data.targets.clone(),
            pair_inputs,
            trace_coupled: true,
            n: data.n(),
            out_dim: classes,
        })
    }

    /// Convolutional program: one pair per patch matrix, as produced by
    /// [`crate::model::extract_patches`].
    pub fn build_conv(
        patches: &[Array2<f64>],
        targets: &Array1<f64>,
        act: PolyActivation,
        beta: f64,
        loss: Loss,
    ) -> Result<Self> {
        check_beta(beta)?;
        let (n, flen) = validate_patches(patches, targets)?;
        let pair_inputs = patches
            .iter()
            .map(|p| PairInput {
                row_sets: vec![p.clone()],
                ab_scale: 1.0,
                out_col: 0,
            })
            .collect();
        Ok(Self {
            arch: ProgramArch::Conv {
                filter_len: flen,
                patches: patches.len(),
            },
            block_dim: flen + 1,
            pair_count: patches.len(),
            act,
            beta,
            loss,
            targets: targets
                .clone()
                .insert_axis(ndarray::Axis(1)),
            pair_inputs,
            trace_coupled: true,
            n,
            out_dim: 1,
        })
    }

    /// Average-pooling program with disjoint consecutive windows of `pool`
    /// patches. `pool = 1` reproduces the convolutional operator; `pool = K`
    /// is global average pooling with a single pair.
    pub fn build_pool(
        patches: &[Array2<f64>],
        targets: &Array1<f64>,
        act: PolyActivation,
        beta: f64,
        loss: Loss,
        pool: usize,
    ) -> Result<Self> {
        check_beta(beta)?;
        let (n, flen) = validate_patches(patches, targets)?;
        let k = patches.len();
        if pool == 0 || !k.is_multiple_of(pool) {
            return Err(Error::Shape(format!(
                "pool size {pool} must divide patch count {k}"
            )));
        }
        let windows = k / pool;
        let pair_inputs = (0..windows)
            .map(|w| PairInput {
                row_sets: patches[w * pool..(w + 1) * pool].to_vec(),
                ab_scale: 1.0 / pool as f64,
                out_col: 0,
            })
            .collect();
        Ok(Self {
            arch: ProgramArch::Pool {
                filter_len: flen,
                patches: k,
                pool,
            },
            block_dim: flen + 1,
            pair_count: windows,
            act,
            beta,
            loss,
            targets: targets
                .clone()
                .insert_axis(ndarray::Axis(1)),
            pair_inputs,
            trace_coupled: true,
            n,
            out_dim: 1,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Whether blocks carry the `tr(Z_1) = Z_4` equality.
    pub fn trace_coupled(&self) -> bool {
        self.trace_coupled
    }

    /// Flattened prediction length `n * out_dim`.
    pub fn prediction_len(&self) -> usize {
        self.n * self.out_dim
    }

    fn check_pairs(&self, pairs: &[(SymMatrix, SymMatrix)]) -> Result<()> {
        if pairs.len() != self.pair_count {
            return Err(Error::Shape(format!(
                "expected {} pairs, got {}",
                self.pair_count,
                pairs.len()
            )));
        }
        for (k, (z, zp)) in pairs.iter().enumerate() {
            if z.dim() != self.block_dim || zp.dim() != self.block_dim {
                return Err(Error::Shape(format!(
                    "pair {k} has dimensions {}x{}, expected {}",
                    z.dim(),
                    zp.dim(),
                    self.block_dim
                )));
            }
        }
        Ok(())
    }

    /// Apply the linear prediction operator to a list of block pairs.
    pub fn predict(&self, pairs: &[(SymMatrix, SymMatrix)]) -> Result<Array2<f64>> {
        self.check_pairs(pairs)?;
        let mut pred = Array2::zeros((self.n, self.out_dim));
        let (a, b, c) = (self.act.a, self.act.b, self.act.c);
        for (pin, (z, zp)) in self.pair_inputs.iter().zip(pairs.iter()) {
            let col = pin.out_col;
            if self.trace_coupled {
                let d = self.block_dim - 1;
                let dz1 = &z.as_array().slice(s![..d, ..d]) - &zp.as_array().slice(s![..d, ..d]);
                let dz2 = &z.as_array().slice(s![..d, d]) - &zp.as_array().slice(s![..d, d]);
                let dz4 = z.get(d, d) - zp.get(d, d);
                for set in &pin.row_sets {
                    let xz = set.dot(&dz1);
                    let lin = set.dot(&dz2);
                    for i in 0..self.n {
                        let quad: f64 = xz.row(i).dot(&set.row(i));
                        pred[[i, col]] += pin.ab_scale * (a * quad + b * lin[i]);
                    }
                }
                for i in 0..self.n {
                    pred[[i, col]] += c * dz4;
                }
            } else {
                let dz = z.as_array() - zp.as_array();
                for set in &pin.row_sets {
                    let xz = set.dot(&dz);
                    for i in 0..self.n {
                        let quad: f64 = xz.row(i).dot(&set.row(i));
                        pred[[i, col]] += pin.ab_scale * a * quad;
                    }
                }
            }
        }
        Ok(pred)
    }

    /// Adjoint of `predict` under the Frobenius inner product on blocks:
    /// `<predict(W), v> = sum_k <Z_k, adj_k> - <Z'_k, adj_k>`.
    pub fn adjoint(&self, v: &Array2<f64>) -> Result<Vec<(SymMatrix, SymMatrix)>> {
        if v.dim() != (self.n, self.out_dim) {
            return Err(Error::Shape(format!(
                "adjoint input is {:?}, expected ({}, {})",
                v.dim(),
                self.n,
                self.out_dim
            )));
        }
        let mut out = Vec::with_capacity(self.pair_count);
        let (a, b, c) = (self.act.a, self.act.b, self.act.c);
        for pin in &self.pair_inputs {
            let w = v.column(pin.out_col);
            let mut block = Array2::zeros((self.block_dim, self.block_dim));
            if self.trace_coupled {
                let d = self.block_dim - 1;
                for set in &pin.row_sets {
                    let mut scaled = set.clone();
                    for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                        row *= w[i];
                    }
                    let quad = set.t().dot(&scaled);
                    let edge = set.t().dot(&w);
                    for r in 0..d {
                        for cidx in 0..d {
                            block[[r, cidx]] += a * pin.ab_scale * quad[[r, cidx]];
                        }
                        block[[r, d]] += 0.5 * b * pin.ab_scale * edge[r];
                        block[[d, r]] += 0.5 * b * pin.ab_scale * edge[r];
                    }
                }
                block[[d, d]] = c * w.sum();
            } else {
                for set in &pin.row_sets {
                    let mut scaled = set.clone();
                    for (i, mut row) in scaled.rows_mut().into_iter().enumerate() {
                        row *= w[i];
                    }
                    let quad = set.t().dot(&scaled);
                    block += &(&quad * (a * pin.ab_scale));
                }
            }
            let plus = SymMatrix::symmetrize(block)?;
            let minus = SymMatrix::symmetrize(-plus.as_array().clone())?;
            out.push((plus, minus));
        }
        Ok(out)
    }

    /// Lifted feature of one flattened prediction entry: the adjoint of a
    /// one-hot vector, computed directly.
    pub(crate) fn basis_feature(&self, flat: usize) -> Result<Vec<(SymMatrix, SymMatrix)>> {
        let i = flat / self.out_dim;
        let col = flat % self.out_dim;
        let (a, b, c) = (self.act.a, self.act.b, self.act.c);
        let mut out = Vec::with_capacity(self.pair_count);
        for pin in &self.pair_inputs {
            let mut block = Array2::zeros((self.block_dim, self.block_dim));
            if pin.out_col == col {
                if self.trace_coupled {
                    let d = self.block_dim - 1;
                    for set in &pin.row_sets {
                        let x = set.row(i);
                        for r in 0..d {
                            for cidx in 0..d {
                                block[[r, cidx]] += a * pin.ab_scale * x[r] * x[cidx];
                            }
                            block[[r, d]] += 0.5 * b * pin.ab_scale * x[r];
                            block[[d, r]] += 0.5 * b * pin.ab_scale * x[r];
                        }
                    }
                    block[[d, d]] = c;
                } else {
                    for set in &pin.row_sets {
                        let x = set.row(i);
                        for r in 0..self.block_dim {
                            for cidx in 0..self.block_dim {
                                block[[r, cidx]] += a * pin.ab_scale * x[r] * x[cidx];
                            }
                        }
                    }
                }
            }
            let plus = SymMatrix::symmetrize(block)?;
            let minus = SymMatrix::symmetrize(-plus.as_array().clone())?;
            out.push((plus, minus));
        }
        Ok(out)
    }

    /// Regularization value at the given blocks: `beta * sum_k (Z_{k,4} +
    /// Z'_{k,4})` for trace-coupled programs, `beta * tr(Z1 + Z2)` for the
    /// quadratic program.
    pub fn regularization(&self, pairs: &[(SymMatrix, SymMatrix)]) -> Result<f64> {
        self.check_pairs(pairs)?;
        let total: f64 = if self.trace_coupled {
            let d = self.block_dim - 1;
            pairs.iter().map(|(z, zp)| z.get(d, d) + zp.get(d, d)).sum()
        } else {
            pairs.iter().map(|(z, zp)| z.trace() + zp.trace()).sum()
        };
        Ok(self.beta * total)
    }

    /// Per-block gradient of the regularization term (with `beta` folded
    /// in): the corner indicator for trace-coupled programs, the identity
    /// for the quadratic program.
    pub(crate) fn regularization_matrix(&self) -> SymMatrix {
        let d = self.block_dim;
        if self.trace_coupled {
            let mut m = SymMatrix::zeros(d);
            m.set_sym(d - 1, d - 1, self.beta);
            m
        } else {
            let mut m = SymMatrix::identity(d);
            for i in 0..d {
                m.set_sym(i, i, self.beta);
            }
            m
        }
    }

    /// Full convex objective at the given blocks.
    pub fn objective_of(&self, pairs: &[(SymMatrix, SymMatrix)]) -> Result<f64> {
        let pred = self.predict(pairs)?;
        Ok(self.loss.total(&pred, &self.targets)? + self.regularization(pairs)?)
    }

    /// The single design matrix of dense single-pair programs (scalar and
    /// quadratic); `None` for the other architectures.
    pub(crate) fn dense_rows(&self) -> Option<&Array2<f64>> {
        match self.arch {
            ProgramArch::Scalar | ProgramArch::Quadratic => {
                Some(&self.pair_inputs[0].row_sets[0])
            }
            _ => None,
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.targets.iter().all(|v| v.is_finite())
            && self.pair_inputs.iter().all(|p| {
                p.row_sets
                    .iter()
                    .all(|set| set.iter().all(|v| v.is_finite()))
            })
    }
}

fn validate_patches(patches: &[Array2<f64>], targets: &Array1<f64>) -> Result<(usize, usize)> {
    let first = patches
        .first()
        .ok_or_else(|| Error::Shape("need at least one patch matrix".to_string()))?;
    let n = first.nrows();
    let flen = first.ncols();
    if n == 0 || flen == 0 {
        return Err(Error::Shape("patch matrices must be nonempty".to_string()));
    }
    for (k, p) in patches.iter().enumerate() {
        if p.nrows() != n || p.ncols() != flen {
            return Err(Error::Shape(format!(
                "patch {k} is {}x{}, expected {n}x{flen}",
                p.nrows(),
                p.ncols()
            )));
        }
    }
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "target length {} does not match sample count {n}",
            targets.len()
        )));
    }
    Ok((n, flen))
}

/// Membership query for the neural spectrahedron `{Z >= 0, tr(Z1) = Z4 <= t}`.
#[derive(Debug, Clone)]
pub struct SpectrahedronQuery {
    pub z: SymBlockMatrix,
    pub t: f64,
    pub tol: f64,
}

/// Check `Z >= 0`, `tr(Z1) = Z4` and `Z4 <= t` up to the query tolerance.
pub fn spectrahedron_member(q: &SpectrahedronQuery) -> Result<bool> {
    if q.tol <= 0.0 {
        return Err(Error::InvalidInput("tolerance must be positive".to_string()));
    }
    let scale = q.z.inner().frob_norm().max(1.0);
    let eig = eigen_sym(q.z.inner())?;
    let lam_min = eig.eigenvalues[eig.eigenvalues.len() - 1];
    Ok(lam_min >= -q.tol * scale
        && q.z.coupling_residual().abs() <= q.tol * scale
        && q.z.z4() <= q.t + q.tol)
}

/// Precomputed Gram form of the squared loss for the scalar program:
/// `||X_V z - y||^2 = z' G z - 2 g' z + ||y||^2` where rows of `X_V` are
/// `[a vec(x x')', b x', c]`.
#[derive(Debug, Clone)]
pub struct GramData {
    pub g_mat: Array2<f64>,
    pub g_vec: Array1<f64>,
    pub y_norm_sq: f64,
}

impl GramData {
    /// Dimension `d^2 + d + 1` of the lifted coefficient vector.
    pub fn dim(&self) -> usize {
        self.g_vec.len()
    }
}

/// Build the lifted design row of one sample: `[a vec(x x')', b x', c]`
/// with `vec` in row-major order.
pub(crate) fn lifted_row(x: ndarray::ArrayView1<f64>, act: PolyActivation) -> Array1<f64> {
    let d = x.len();
    let mut row = Array1::zeros(d * d + d + 1);
    for i in 0..d {
        for j in 0..d {
            row[i * d + j] = act.a * x[i] * x[j];
        }
    }
    for i in 0..d {
        row[d * d + i] = act.b * x[i];
    }
    row[d * d + d] = act.c;
    row
}

/// Compute `X_V' X_V`, `X_V' y` and `||y||^2` for the squared-loss scalar
/// program. Useful when `n >> d^2` or when sweeping `beta` on fixed data.
pub fn gram_precompute(data: &Dataset, act: PolyActivation) -> Result<GramData> {
    if !data.is_finite() {
        return Err(Error::InvalidInput("dataset has non-finite entries".to_string()));
    }
    let y = data.y()?.to_owned();
    gram_precompute_from(&data.x, &y, act)
}

pub(crate) fn gram_precompute_from(
    x: &Array2<f64>,
    y: &Array1<f64>,
    act: PolyActivation,
) -> Result<GramData> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "design has {} rows but targets have {}",
            x.nrows(),
            y.len()
        )));
    }
    let d = x.ncols();
    let dim = d * d + d + 1;
    let mut g_mat = Array2::zeros((dim, dim));
    let mut g_vec = Array1::zeros(dim);
    let mut y_norm_sq = 0.0;
    for i in 0..x.nrows() {
        let row = lifted_row(x.row(i), act);
        for r in 0..dim {
            let xr = row[r];
            if xr == 0.0 {
                continue;
            }
            for c in 0..dim {
                g_mat[[r, c]] += xr * row[c];
            }
            g_vec[r] += xr * y[i];
        }
        y_norm_sq += y[i] * y[i];
    }
    Ok(GramData {
        g_mat,
        g_vec,
        y_norm_sq,
    })
}

/// Lift network weights into program variables: `Z_k` collects
/// `[u_j; 1][u_j; 1]'` weighted by the positive part of the relevant
/// second-layer entry, `Z'_k` by the negative part. The result is feasible
/// for the corresponding program and `predict` on it reproduces the
/// network's forward output.
pub fn lift_network(weights: &NetworkWeights) -> Result<Vec<(SymMatrix, SymMatrix)>> {
    if !weights.unit_norm {
        return Err(Error::Constraint(
            "lifting requires unit-norm first-layer weights".to_string(),
        ));
    }
    let pair_count = weights.arch.second_layer_len()?;
    let fdim = weights
        .first_layer
        .first()
        .map(|u| u.len())
        .unwrap_or_else(|| match weights.arch {
            Arch::Conv { filter_len, .. } | Arch::Pool { filter_len, .. } => filter_len,
            _ => 1,
        });
    let bd = fdim + 1;
    let mut pairs: Vec<(Array2<f64>, Array2<f64>)> = (0..pair_count)
        .map(|_| (Array2::zeros((bd, bd)), Array2::zeros((bd, bd))))
        .collect();
    for (u, alpha) in weights.first_layer.iter().zip(&weights.second_layer) {
        let mut appended = Array1::zeros(bd);
        appended.slice_mut(s![..fdim]).assign(u);
        appended[fdim] = 1.0;
        for (k, &a) in alpha.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let (target, w) = if a > 0.0 {
                (&mut pairs[k].0, a)
            } else {
                (&mut pairs[k].1, -a)
            };
            for r in 0..bd {
                for c in 0..bd {
                    target[[r, c]] += w * appended[r] * appended[c];
                }
            }
        }
    }
    pairs
        .into_iter()
        .map(|(z, zp)| Ok((SymMatrix::symmetrize(z)?, SymMatrix::symmetrize(zp)?)))
        .collect()
}

/// Lifted quadratic form `sum_j alpha_j u_j u_j'` of a scalar network,
/// the variable of the quadratic-activation program.
pub fn lift_quadratic(weights: &NetworkWeights) -> Result<SymMatrix> {
    if weights.arch != Arch::DenseScalar {
        return Err(Error::Shape("quadratic lift needs a scalar network".to_string()));
    }
    let d = weights.first_layer.first().map(|u| u.len()).unwrap_or(1);
    let mut m = Array2::zeros((d, d));
    for (u, alpha) in weights.first_layer.iter().zip(&weights.second_layer) {
        let a = alpha[0];
        for r in 0..d {
            for c in 0..d {
                m[[r, c]] += a * u[r] * u[c];
            }
        }
    }
    SymMatrix::symmetrize(m)
}
