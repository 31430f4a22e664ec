//! Non-convex side of the toolkit: datasets, network weight containers,
//! forward passes for the four architectures, losses and the regularizer
//! identities used by the rescaling arguments.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// `2^{1/3} + 2^{-2/3}`, the constant tying cubic and weight-decay
/// regularization to their scale-invariant forms.
pub fn cubic_scale() -> f64 {
    2f64.powf(1.0 / 3.0) + 2f64.powf(-2.0 / 3.0)
}

/// Row-major image geometry for convolutional inputs. Each sample row of
/// the data matrix stores pixels row-major with channels last:
/// `index = (y * width + x) * channels + ch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

/// A supervised dataset. `x` holds one sample per row; `targets` has one
/// row per sample (single column for scalar outputs).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub targets: Array2<f64>,
    pub image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Shape("dataset must have n >= 1 and d >= 1".to_string()));
        }
        if targets.nrows() != x.nrows() {
            return Err(Error::Shape(format!(
                "target rows {} do not match sample count {}",
                targets.nrows(),
                x.nrows()
            )));
        }
        if targets.ncols() == 0 {
            return Err(Error::Shape("targets must have at least one column".to_string()));
        }
        Ok(Self {
            x,
            targets,
            image_shape: None,
        })
    }

    pub fn new_scalar(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let n = y.len();
        let targets = y.into_shape_with_order((n, 1)).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(x, targets)
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.height * shape.width * shape.channels != self.d() {
            return Err(Error::Shape(format!(
                "image shape {}x{}x{} does not match feature count {}",
                shape.height,
                shape.width,
                shape.channels,
                self.d()
            )));
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Scalar target view; errors when the dataset is vector-valued.
    pub fn y(&self) -> Result<ArrayView1<'_, f64>> {
        if self.out_dim() != 1 {
            return Err(Error::Shape(format!(
                "expected scalar targets, found {} columns",
                self.out_dim()
            )));
        }
        Ok(self.targets.column(0))
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.targets.iter().all(|v| v.is_finite())
    }
}

/// Network architecture tag. `filter_len` is the flattened filter length
/// (`f*f*channels` for 2-D inputs), `patches` the patch count `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    DenseScalar,
    DenseVector { classes: usize },
    Conv { filter_len: usize, patches: usize },
    Pool { filter_len: usize, patches: usize, pool: usize },
}

impl Arch {
    /// Length of each second-layer coefficient vector.
    pub fn second_layer_len(&self) -> Result<usize> {
        match *self {
            Arch::DenseScalar => Ok(1),
            Arch::DenseVector { classes } => {
                if classes == 0 {
                    return Err(Error::Shape("vector output needs classes >= 1".to_string()));
                }
                Ok(classes)
            }
            Arch::Conv { patches, .. } => Ok(patches),
            Arch::Pool { patches, pool, .. } => {
                if pool == 0 || patches % pool != 0 {
                    return Err(Error::Shape(format!(
                        "pool size {pool} must divide patch count {patches}"
                    )));
                }
                Ok(patches / pool)
            }
        }
    }

    /// Expected first-layer vector length given the ambient data dimension.
    pub fn first_layer_len(&self, data_dim: usize) -> usize {
        match *self {
            Arch::DenseScalar | Arch::DenseVector { .. } => data_dim,
            Arch::Conv { filter_len, .. } | Arch::Pool { filter_len, .. } => filter_len,
        }
    }

    /// Width of the prediction matrix: the class count for vector
    /// outputs, one otherwise.
    pub fn output_dim(&self) -> usize {
        match *self {
            Arch::DenseVector { classes } => classes,
            _ => 1,
        }
    }
}

/// Two-layer network weights: `m` first-layer vectors (unit-norm when
/// `unit_norm` is set) and `m` second-layer coefficient vectors whose
/// length depends on the architecture. An empty network (`m = 0`)
/// represents the zero function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub arch: Arch,
    pub first_layer: Vec<Array1<f64>>,
    pub second_layer: Vec<Array1<f64>>,
    pub unit_norm: bool,
}

impl NetworkWeights {
    pub fn new(
        arch: Arch,
        first_layer: Vec<Array1<f64>>,
        second_layer: Vec<Array1<f64>>,
        unit_norm: bool,
    ) -> Result<Self> {
        if first_layer.len() != second_layer.len() {
            return Err(Error::Shape(format!(
                "layer counts differ: {} first-layer vs {} second-layer",
                first_layer.len(),
                second_layer.len()
            )));
        }
        let alpha_len = arch.second_layer_len()?;
        for (j, alpha) in second_layer.iter().enumerate() {
            if alpha.len() != alpha_len {
                return Err(Error::Shape(format!(
                    "second-layer vector {j} has length {}, expected {alpha_len}",
                    alpha.len()
                )));
            }
        }
        if let Some(d0) = first_layer.first().map(|u| u.len()) {
            if first_layer.iter().any(|u| u.len() != d0) {
                return Err(Error::Shape("first-layer vectors have mixed lengths".to_string()));
            }
        }
        let w = Self {
            arch,
            first_layer,
            second_layer,
            unit_norm,
        };
        if w.unit_norm {
            for (j, u) in w.first_layer.iter().enumerate() {
                let norm = l2(u.view());
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::Constraint(format!(
                        "first-layer vector {j} has norm {norm}, expected 1"
                    )));
                }
            }
        }
        Ok(w)
    }

    pub fn empty(arch: Arch) -> Self {
        Self {
            arch,
            first_layer: Vec::new(),
            second_layer: Vec::new(),
            unit_norm: true,
        }
    }

    pub fn m(&self) -> usize {
        self.first_layer.len()
    }

    /// Drop neurons whose second-layer coefficients are exactly zero; they
    /// contribute nothing and break per-neuron rescaling.
    pub fn compact(&self) -> Self {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (u, a) in self.first_layer.iter().zip(self.second_layer.iter()) {
            if a.iter().any(|v| *v != 0.0) {
                first.push(u.clone());
                second.push(a.clone());
            }
        }
        Self {
            arch: self.arch,
            first_layer: first,
            second_layer: second,
            unit_norm: self.unit_norm,
        }
    }
}

pub(crate) fn l2(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Convex losses applied elementwise to prediction residuals and summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    /// `sum r_i^2`
    Squared,
    /// `sum H(r_i)` with `H(x) = x^2` for `|x| <= 1` and `2|x| - 1` beyond.
    Huber,
    /// `sum |r_i|`
    L1,
}

impl Loss {
    pub fn value(&self, r: f64) -> f64 {
        match self {
            Loss::Squared => r * r,
            Loss::Huber => {
                if r.abs() <= 1.0 {
                    r * r
                } else {
                    2.0 * r.abs() - 1.0
                }
            }
            Loss::L1 => r.abs(),
        }
    }

    /// Derivative (a subgradient for L1 at zero) with respect to the
    /// prediction.
    pub fn deriv(&self, r: f64) -> f64 {
        match self {
            Loss::Squared => 2.0 * r,
            Loss::Huber => {
                if r.abs() <= 1.0 {
                    2.0 * r
                } else {
                    2.0 * r.signum()
                }
            }
            Loss::L1 => {
                if r == 0.0 {
                    0.0
                } else {
                    r.signum()
                }
            }
        }
    }

    pub fn total(&self, predictions: &Array2<f64>, targets: &Array2<f64>) -> Result<f64> {
        if predictions.dim() != targets.dim() {
            return Err(Error::Shape(format!(
                "prediction shape {:?} does not match target shape {:?}",
                predictions.dim(),
                targets.dim()
            )));
        }
        Ok(predictions
            .iter()
            .zip(targets.iter())
            .map(|(p, y)| self.value(p - y))
            .sum())
    }
}

/// Regularization attached to the non-convex objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegSpec {
    /// `beta * sum_j ||alpha_j||_1`, with unit-norm first layer assumed.
    L1SecondLayer(f64),
    /// `beta/c * sum_j (||alpha_j||_2^2 + ||u_j||_2^2)`.
    WeightDecay(f64),
    /// `beta/c * sum_j (||alpha_j||_2^3 + ||u_j||_2^3)`.
    Cubic(f64),
}

impl RegSpec {
    pub fn beta(&self) -> f64 {
        match self {
            RegSpec::L1SecondLayer(b) | RegSpec::WeightDecay(b) | RegSpec::Cubic(b) => *b,
        }
    }
}

/// Model inputs: the raw data matrix for dense architectures, or the `K`
/// patch matrices produced by [`extract_patches`] for conv/pool.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Dense(&'a Array2<f64>),
    Patches(&'a [Array2<f64>]),
}

impl<'a> Inputs<'a> {
    pub fn n(&self) -> usize {
        match self {
            Inputs::Dense(x) => x.nrows(),
            Inputs::Patches(p) => p.first().map_or(0, |m| m.nrows()),
        }
    }
}

/// Direct-summation forward pass; returns an `n x out_dim` matrix
/// (single column for scalar-valued architectures).
pub fn forward(
    weights: &NetworkWeights,
    inputs: &Inputs<'_>,
    act: PolyActivation,
) -> Result<Array2<f64>> {
    let n = inputs.n();
    weights.arch.second_layer_len()?;
    let out_dim = weights.arch.output_dim();
    let mut pred = Array2::zeros((n, out_dim));
    match (weights.arch, inputs) {
        (Arch::DenseScalar, Inputs::Dense(x)) | (Arch::DenseVector { .. }, Inputs::Dense(x)) => {
            check_first_layer(weights, x.ncols())?;
            for (u, alpha) in weights.first_layer.iter().zip(&weights.second_layer) {
                let z = x.dot(u);
                for i in 0..n {
                    let s = act.eval(z[i]);
                    for k in 0..out_dim {
                        pred[[i, k]] += s * alpha[k];
                    }
                }
            }
        }
        (Arch::Conv { filter_len, patches }, Inputs::Patches(p)) => {
            check_patches(p, filter_len, patches, n)?;
            check_first_layer(weights, filter_len)?;
            for (u, alpha) in weights.first_layer.iter().zip(&weights.second_layer) {
                for (k, pk) in p.iter().enumerate() {
                    let z = pk.dot(u);
                    for i in 0..n {
                        pred[[i, 0]] += act.eval(z[i]) * alpha[k];
                    }
                }
            }
        }
        (Arch::Pool { filter_len, patches, pool }, Inputs::Patches(p)) => {
            check_patches(p, filter_len, patches, n)?;
            check_first_layer(weights, filter_len)?;
            let windows = patches / pool;
            let inv_p = 1.0 / pool as f64;
            for (u, alpha) in weights.first_layer.iter().zip(&weights.second_layer) {
                for k in 0..windows {
                    let mut avg = Array1::<f64>::zeros(n);
                    for l in 0..pool {
                        let z = p[k * pool + l].dot(u);
                        for i in 0..n {
                            avg[i] += act.eval(z[i]);
                        }
                    }
                    for i in 0..n {
                        pred[[i, 0]] += avg[i] * inv_p * alpha[k];
                    }
                }
            }
        }
        _ => {
            return Err(Error::Shape(format!(
                "architecture {:?} does not accept this input kind",
                weights.arch
            )))
        }
    }
    Ok(pred)
}

fn check_first_layer(weights: &NetworkWeights, expected: usize) -> Result<()> {
    for (j, u) in weights.first_layer.iter().enumerate() {
        if u.len() != expected {
            return Err(Error::Shape(format!(
                "first-layer vector {j} has length {}, expected {expected}",
                u.len()
            )));
        }
    }
    Ok(())
}

fn check_patches(p: &[Array2<f64>], filter_len: usize, patches: usize, n: usize) -> Result<()> {
    if p.len() != patches {
        return Err(Error::Shape(format!(
            "expected {patches} patch matrices, got {}",
            p.len()
        )));
    }
    for (k, pk) in p.iter().enumerate() {
        if pk.ncols() != filter_len || pk.nrows() != n {
            return Err(Error::Shape(format!(
                "patch matrix {k} is {}x{}, expected {n}x{filter_len}",
                pk.nrows(),
                pk.ncols()
            )));
        }
    }
    Ok(())
}

/// Regularization term of the non-convex objective.
pub fn regularization_term(weights: &NetworkWeights, reg: &RegSpec) -> Result<f64> {
    match reg {
        RegSpec::L1SecondLayer(beta) => {
            if !weights.unit_norm && weights.m() > 0 {
                return Err(Error::Constraint(
                    "l1 second-layer regularization assumes unit-norm first-layer weights"
                        .to_string(),
                ));
            }
            Ok(beta
                * weights
                    .second_layer
                    .iter()
                    .map(|a| a.iter().map(|v| v.abs()).sum::<f64>())
                    .sum::<f64>())
        }
        RegSpec::WeightDecay(beta) => {
            let sum: f64 = weights
                .first_layer
                .iter()
                .zip(&weights.second_layer)
                .map(|(u, a)| {
                    let un = l2(u.view());
                    let an = l2(a.view());
                    an * an + un * un
                })
                .sum();
            Ok(beta / cubic_scale() * sum)
        }
        RegSpec::Cubic(beta) => {
            let sum: f64 = weights
                .first_layer
                .iter()
                .zip(&weights.second_layer)
                .map(|(u, a)| {
                    let un = l2(u.view());
                    let an = l2(a.view());
                    an.powi(3) + un.powi(3)
                })
                .sum();
            Ok(beta / cubic_scale() * sum)
        }
    }
}

/// Full training objective `loss(forward(...), targets) + regularizer`.
pub fn objective(
    weights: &NetworkWeights,
    inputs: &Inputs<'_>,
    targets: &Array2<f64>,
    act: PolyActivation,
    loss: Loss,
    reg: &RegSpec,
) -> Result<f64> {
    let pred = forward(weights, inputs, act)?;
    Ok(loss.total(&pred, targets)? + regularization_term(weights, reg)?)
}

/// Which scale-invariant regularizer to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleKind {
    Cubic,
    WeightDecay,
}

/// Per-neuron regularization after optimizing the neuron's internal
/// rescaling `t > 0`: `|alpha| ||u||^2` for the cubic penalty and
/// `|alpha|^{2/3} ||u||^{4/3}` for weight decay.
pub fn effective_regularization(alpha: f64, u_norm: f64, kind: RescaleKind) -> f64 {
    let a = alpha.abs();
    match kind {
        RescaleKind::Cubic => a * u_norm * u_norm,
        RescaleKind::WeightDecay => a.powf(2.0 / 3.0) * u_norm.powf(4.0 / 3.0),
    }
}

/// Extract the `K` patch matrices for a convolutional layer with square
/// filters of side `filter_side`, the given stride and zero padding.
///
/// For image data, patches are ordered row-major over output positions and
/// each patch is flattened row-major over the window with channels last,
/// giving columns of length `filter_side^2 * channels`. Datasets without an
/// image shape are treated as 1-D signals of length `d`.
pub fn extract_patches(
    data: &Dataset,
    filter_side: usize,
    stride: usize,
    padding: usize,
) -> Result<Vec<Array2<f64>>> {
    if filter_side == 0 || stride == 0 {
        return Err(Error::Shape("filter side and stride must be positive".to_string()));
    }
    let n = data.n();
    match data.image_shape {
        Some(ImageShape {
            height,
            width,
            channels,
        }) => {
            let ph = height + 2 * padding;
            let pw = width + 2 * padding;
            if filter_side > ph || filter_side > pw {
                return Err(Error::Shape(format!(
                    "filter {filter_side} larger than padded image {ph}x{pw}"
                )));
            }
            let out_h = (ph - filter_side) / stride + 1;
            let out_w = (pw - filter_side) / stride + 1;
            let flen = filter_side * filter_side * channels;
            let mut out = Vec::with_capacity(out_h * out_w);
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut patch = Array2::zeros((n, flen));
                    for dy in 0..filter_side {
                        for dx in 0..filter_side {
                            let y = oy * stride + dy;
                            let x = ox * stride + dx;
                            if y < padding || x < padding {
                                continue;
                            }
                            let (sy, sx) = (y - padding, x - padding);
                            if sy >= height || sx >= width {
                                continue;
                            }
                            for ch in 0..channels {
                                let src = (sy * width + sx) * channels + ch;
                                let dst = (dy * filter_side + dx) * channels + ch;
                                for i in 0..n {
                                    patch[[i, dst]] = data.x[[i, src]];
                                }
                            }
                        }
                    }
                    out.push(patch);
                }
            }
            Ok(out)
        }
        None => {
            let d = data.d();
            let pd = d + 2 * padding;
            if filter_side > pd {
                return Err(Error::Shape(format!(
                    "filter {filter_side} larger than padded signal length {pd}"
                )));
            }
            let k = (pd - filter_side) / stride + 1;
            let mut out = Vec::with_capacity(k);
            for pos in 0..k {
                let mut patch = Array2::zeros((n, filter_side));
                for t in 0..filter_side {
                    let idx = pos * stride + t;
                    if idx < padding || idx - padding >= d {
                        continue;
                    }
                    for i in 0..n {
                        patch[[i, t]] = data.x[[i, idx - padding]];
                    }
                }
                out.push(patch);
            }
            Ok(out)
        }
    }
}

pub use crate::activation::PolyActivation;

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit(v: Array1<f64>) -> Array1<f64> {
        let n = l2(v.view());
        v / n
    }

    fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
        unit(Array1::from_shape_fn(d, |_| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        }))
    }

    #[test]
    fn forward_single_quadratic_neuron() {
        let w = NetworkWeights::new(
            Arch::DenseScalar,
            vec![array![1.0, 0.0]],
            vec![array![1.0]],
            true,
        )
        .unwrap();
        let x = array![[2.0, 0.0]];
        let pred = forward(&w, &Inputs::Dense(&x), PolyActivation::quadratic()).unwrap();
        assert_eq!(pred[[0, 0]], 4.0);
    }

    #[test]
    fn forward_empty_network_is_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        for arch in [Arch::DenseScalar, Arch::DenseVector { classes: 3 }] {
            let w = NetworkWeights::empty(arch);
            let pred = forward(&w, &Inputs::Dense(&x), PolyActivation::quadratic()).unwrap();
            assert!(pred.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn forward_vector_outer_product() {
        // sigma(x'u) = 3 with alpha = (1,-1) gives the row (3,-3)
        let w = NetworkWeights::new(
            Arch::DenseVector { classes: 2 },
            vec![array![1.0]],
            vec![array![1.0, -1.0]],
            true,
        )
        .unwrap();
        let x = array![[3.0]];
        let act = PolyActivation::new(0.0, 1.0, 0.0).unwrap();
        let pred = forward(&w, &Inputs::Dense(&x), act).unwrap();
        assert_eq!(pred[[0, 0]], 3.0);
        assert_eq!(pred[[0, 1]], -3.0);
    }

    #[test]
    fn forward_matches_lifted_inner_product() {
        // <phi(x), psi> with phi = (a x x', b x, c) and
        // psi = (sum a_j u_j u_j', sum a_j u_j, sum a_j)
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 5;
        let m = 4;
        let act = PolyActivation::new(0.7, -0.3, 0.2).unwrap();
        let first: Vec<_> = (0..m).map(|_| random_unit(d, &mut rng)).collect();
        let second: Vec<_> = (0..m)
            .map(|_| array![rng.random_range(-1.0..1.0f64)])
            .collect();
        let w = NetworkWeights::new(Arch::DenseScalar, first.clone(), second.clone(), true).unwrap();
        let x = Array2::from_shape_fn((7, d), |_| rng.random_range(-1.0..1.0));
        let pred = forward(&w, &Inputs::Dense(&x), act).unwrap();

        let mut psi_mat = Array2::<f64>::zeros((d, d));
        let mut psi_vec = Array1::<f64>::zeros(d);
        let mut psi_scalar = 0.0;
        for (u, a) in first.iter().zip(&second) {
            let a = a[0];
            for r in 0..d {
                for c in 0..d {
                    psi_mat[[r, c]] += a * u[r] * u[c];
                }
                psi_vec[r] += a * u[r];
            }
            psi_scalar += a;
        }
        for i in 0..x.nrows() {
            let xi = x.row(i);
            let mut quad = 0.0;
            for r in 0..d {
                for c in 0..d {
                    quad += act.a * xi[r] * xi[c] * psi_mat[[r, c]];
                }
            }
            let lin: f64 = act.b * xi.dot(&psi_vec);
            let lifted = quad + lin + act.c * psi_scalar;
            assert!(
                (lifted - pred[[i, 0]]).abs() <= 1e-10 * pred[[i, 0]].abs().max(1.0),
                "sample {i}"
            );
        }
    }

    #[test]
    fn objective_examples() {
        let x = array![[1.0], [1.0]];
        let targets = array![[1.0], [1.0]];
        let w = NetworkWeights::empty(Arch::DenseScalar);
        let obj = objective(
            &w,
            &Inputs::Dense(&x),
            &targets,
            PolyActivation::quadratic(),
            Loss::Squared,
            &RegSpec::L1SecondLayer(1.0),
        )
        .unwrap();
        assert_eq!(obj, 2.0);

        // Huber on residuals (0.5, 2): 0.25 + 3 = 3.25
        assert_eq!(Loss::Huber.value(0.5), 0.25);
        assert_eq!(Loss::Huber.value(2.0), 3.0);
        let pred = array![[0.5], [2.0]];
        let zeros = array![[0.0], [0.0]];
        assert_eq!(Loss::Huber.total(&pred, &zeros).unwrap(), 3.25);

        // cubic with alpha = 1, ||u|| = 1 and beta = c adds exactly 2
        let w1 = NetworkWeights::new(
            Arch::DenseScalar,
            vec![array![1.0]],
            vec![array![1.0]],
            true,
        )
        .unwrap();
        let term = regularization_term(&w1, &RegSpec::Cubic(cubic_scale())).unwrap();
        assert!((term - 2.0).abs() < 1e-12);
    }

    #[test]
    fn l1_reg_requires_unit_norm_flag() {
        let w = NetworkWeights::new(
            Arch::DenseScalar,
            vec![array![2.0]],
            vec![array![1.0]],
            false,
        )
        .unwrap();
        assert!(matches!(
            regularization_term(&w, &RegSpec::L1SecondLayer(1.0)),
            Err(Error::Constraint(_))
        ));
    }

    fn brute_force_rescale(alpha: f64, u_norm: f64, kind: RescaleKind) -> f64 {
        // refine a log-spaced grid around the best t three times
        let c = cubic_scale();
        let f = |t: f64| match kind {
            RescaleKind::Cubic => (alpha.abs().powi(3) / t.powi(3) + u_norm.powi(3) * t.powf(1.5)) / c,
            RescaleKind::WeightDecay => (alpha * alpha / (t * t) + u_norm * u_norm * t) / c,
        };
        let mut lo: f64 = 1e-4;
        let mut hi: f64 = 1e4;
        let mut best_t = 1.0;
        for _ in 0..6 {
            let mut best = f64::INFINITY;
            for i in 0..=4000 {
                let t = lo * (hi / lo).powf(i as f64 / 4000.0);
                let v = f(t);
                if v < best {
                    best = v;
                    best_t = t;
                }
            }
            lo = best_t * 0.9;
            hi = best_t * 1.1;
        }
        f(best_t)
    }

    #[test]
    fn effective_regularization_examples() {
        assert!((effective_regularization(1.0, 1.0, RescaleKind::Cubic) - 1.0).abs() < 1e-12);
        assert!((effective_regularization(1.0, 1.0, RescaleKind::WeightDecay) - 1.0).abs() < 1e-12);

        let cubic = effective_regularization(8.0, 1.0, RescaleKind::Cubic);
        assert!((cubic - 8.0).abs() < 1e-12);
        assert!((brute_force_rescale(8.0, 1.0, RescaleKind::Cubic) - cubic).abs() < 1e-6);

        let wd = effective_regularization(1.0, 2.0, RescaleKind::WeightDecay);
        assert!((wd - 2f64.powf(4.0 / 3.0)).abs() < 1e-12);
        assert!((brute_force_rescale(1.0, 2.0, RescaleKind::WeightDecay) - wd).abs() < 1e-6);
    }

    #[test]
    fn scale_equivalence_chain() {
        // cubic objective at (u sqrt(t), alpha/t) with the optimal t equals
        // loss + beta * sum |alpha| ||u||^2
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let d = 4;
        let n = 6;
        let beta = 0.37;
        let act = PolyActivation::quadratic();
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        for _ in 0..20 {
            let m = 3;
            let first: Vec<_> = (0..m)
                .map(|_| {
                    Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0f64)) * 1.5
                })
                .collect();
            let second: Vec<_> = (0..m)
                .map(|_| array![rng.random_range(0.1..2.0f64) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }])
                .collect();
            let w = NetworkWeights::new(Arch::DenseScalar, first.clone(), second.clone(), false)
                .unwrap();

            let mut scaled_first = Vec::new();
            let mut scaled_second = Vec::new();
            let mut eff = 0.0;
            for (u, a) in first.iter().zip(&second) {
                let alpha = a[0];
                let un = l2(u.view());
                let t = 2f64.powf(2.0 / 9.0) * (alpha.abs() / un).powf(2.0 / 3.0);
                scaled_first.push(u * t.sqrt());
                scaled_second.push(array![alpha / t]);
                eff += alpha.abs() * un * un;
            }
            let ws =
                NetworkWeights::new(Arch::DenseScalar, scaled_first, scaled_second, false).unwrap();
            let cubic_obj = objective(
                &ws,
                &Inputs::Dense(&x),
                &targets,
                act,
                Loss::Squared,
                &RegSpec::Cubic(beta),
            )
            .unwrap();
            let pred = forward(&w, &Inputs::Dense(&x), act).unwrap();
            let reference = Loss::Squared.total(&pred, &targets).unwrap() + beta * eff;
            assert!(
                (cubic_obj - reference).abs() <= 1e-10 * reference.abs().max(1.0),
                "{cubic_obj} vs {reference}"
            );
        }
    }

    #[test]
    fn unit_norm_reduction_preserves_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let d = 5;
        let x = Array2::from_shape_fn((8, d), |_| rng.random_range(-1.0..1.0));
        let act = PolyActivation::quadratic();
        let first: Vec<_> = (0..3)
            .map(|_| Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0f64)) * 2.0)
            .collect();
        let second: Vec<_> = (0..3).map(|_| array![rng.random_range(-1.0..1.0f64)]).collect();
        let w = NetworkWeights::new(Arch::DenseScalar, first.clone(), second.clone(), false).unwrap();
        let reduced_first: Vec<_> = first.iter().map(|u| u / l2(u.view())).collect();
        let reduced_second: Vec<_> = first
            .iter()
            .zip(&second)
            .map(|(u, a)| {
                let n = l2(u.view());
                array![a[0] * n * n]
            })
            .collect();
        let wr = NetworkWeights::new(Arch::DenseScalar, reduced_first, reduced_second, true).unwrap();
        let p0 = forward(&w, &Inputs::Dense(&x), act).unwrap();
        let p1 = forward(&wr, &Inputs::Dense(&x), act).unwrap();
        for (a, b) in p0.iter().zip(p1.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn patch_counts() {
        let x3 = Array2::from_shape_fn((2, 9), |(i, j)| (i * 9 + j) as f64);
        let data = Dataset::new_scalar(x3, Array1::zeros(2))
            .unwrap()
            .with_image_shape(ImageShape {
                height: 3,
                width: 3,
                channels: 1,
            })
            .unwrap();
        let patches = extract_patches(&data, 2, 1, 0).unwrap();
        assert_eq!(patches.len(), 4);
        // top-left patch of sample 0 in row-major order
        assert_eq!(patches[0].row(0).to_vec(), vec![0.0, 1.0, 3.0, 4.0]);

        let x28 = Array2::zeros((1, 28 * 28));
        let data28 = Dataset::new_scalar(x28, Array1::zeros(1))
            .unwrap()
            .with_image_shape(ImageShape {
                height: 28,
                width: 28,
                channels: 1,
            })
            .unwrap();
        assert_eq!(extract_patches(&data28, 3, 1, 0).unwrap().len(), 676);
    }

    #[test]
    fn one_dimensional_patches_degenerate() {
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let data = Dataset::new_scalar(x.clone(), Array1::zeros(2)).unwrap();
        let patches = extract_patches(&data, 3, 1, 0).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0], x);
    }

    #[test]
    fn oversized_filter_errors() {
        let data = Dataset::new_scalar(array![[1.0, 2.0]], Array1::zeros(1)).unwrap();
        assert!(matches!(extract_patches(&data, 5, 1, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn pooling_with_unit_pool_matches_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 5;
        let flen = 3;
        let k = 4;
        let patches: Vec<Array2<f64>> = (0..k)
            .map(|_| Array2::from_shape_fn((n, flen), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let m = 2;
        let first: Vec<_> = (0..m).map(|_| random_unit(flen, &mut rng)).collect();
        let second: Vec<_> = (0..m)
            .map(|_| Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0)))
            .collect();
        let conv = NetworkWeights::new(
            Arch::Conv {
                filter_len: flen,
                patches: k,
            },
            first.clone(),
            second.clone(),
            true,
        )
        .unwrap();
        let pool = NetworkWeights::new(
            Arch::Pool {
                filter_len: flen,
                patches: k,
                pool: 1,
            },
            first,
            second,
            true,
        )
        .unwrap();
        let pc = forward(&conv, &Inputs::Patches(&patches), act).unwrap();
        let pp = forward(&pool, &Inputs::Patches(&patches), act).unwrap();
        for (a, b) in pc.iter().zip(pp.iter()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn pool_must_divide_patches() {
        let arch = Arch::Pool {
            filter_len: 2,
            patches: 5,
            pool: 2,
        };
        assert!(arch.second_layer_len().is_err());
    }

    #[test]
    fn compact_drops_zero_neurons() {
        let w = NetworkWeights::new(
            Arch::DenseScalar,
            vec![array![1.0], array![-1.0]],
            vec![array![0.0], array![2.0]],
            true,
        )
        .unwrap();
        let c = w.compact();
        assert_eq!(c.m(), 1);
        assert_eq!(c.second_layer[0][0], 2.0);
    }
}
