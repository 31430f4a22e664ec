//! Non-convex reference trainers: momentum (S)GD on the two-layer
//! objectives, plus a multi-restart projected-descent oracle used to
//! check at desk scale that the convex path is a global lower bound.

use crate::activation::PolyActivation;
use crate::error::{Error, Result};
use crate::model::{
    cubic_scale, forward, l2, objective, Arch, Dataset, Inputs, Loss, NetworkWeights, RegSpec,
};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Gradient-training parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Momentum coefficient; 0.9 matches the reference experiments.
    pub momentum: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
    pub reg: RegSpec,
    pub loss: Loss,
    /// Second-layer initialization scale; entries are drawn from
    /// `N(0, (init_scale / sqrt(m))^2)`.
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 200,
            batch_size: 0,
            seed: 0,
            reg: RegSpec::L1SecondLayer(0.1),
            loss: Loss::Squared,
            init_scale: 1.0,
        }
    }
}

/// One trajectory sample: the full-batch objective after an epoch.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectoryPoint {
    pub epoch: usize,
    pub wall_time_s: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub weights: NetworkWeights,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// First layer uniform on the unit sphere, second layer zero-mean
/// Gaussian scaled by `init_scale / sqrt(m)`.
pub fn init_weights(
    arch: Arch,
    input_dim: usize,
    m: usize,
    init_scale: f64,
    unit_norm: bool,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkWeights> {
    let alpha_len = arch.second_layer_len()?;
    let fdim = arch.first_layer_len(input_dim);
    let std = if m == 0 {
        0.0
    } else {
        init_scale / (m as f64).sqrt()
    };
    let mut first = Vec::with_capacity(m);
    let mut second = Vec::with_capacity(m);
    for _ in 0..m {
        let mut u =
            Array1::from_shape_fn(fdim, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = l2(u.view());
        if norm > 0.0 {
            u.mapv_inplace(|v| v / norm);
        } else {
            u[0] = 1.0;
        }
        first.push(u);
        second.push(Array1::from_shape_fn(alpha_len, |_| {
            std * rng.sample::<f64, _>(rand_distr::StandardNormal)
        }));
    }
    NetworkWeights::new(arch, first, second, unit_norm)
}

struct GradBuffers {
    du: Vec<Array1<f64>>,
    da: Vec<Array1<f64>>,
}

/// Analytic gradients of the objective on the given sample index set.
/// The loss part is summed over the batch rows only; the regularizer
/// gradient is always included in full.
fn gradients(
    weights: &NetworkWeights,
    inputs: &Inputs<'_>,
    targets: &Array2<f64>,
    act: PolyActivation,
    loss: Loss,
    reg: &RegSpec,
    batch: &[usize],
) -> Result<GradBuffers> {
    let m = weights.m();
    let alpha_len = weights.arch.second_layer_len()?;
    let mut du: Vec<Array1<f64>> = weights
        .first_layer
        .iter()
        .map(|u| Array1::zeros(u.len()))
        .collect();
    let mut da: Vec<Array1<f64>> = (0..m).map(|_| Array1::zeros(alpha_len)).collect();

    // residual derivatives on the batch (prediction width, not the
    // second-layer width: conv/pool predictions are scalar)
    let pred = forward(weights, inputs, act)?;
    let pred_dim = pred.ncols();
    let mut dl = Array2::<f64>::zeros((batch.len(), pred_dim));
    for (bi, &i) in batch.iter().enumerate() {
        for k in 0..pred_dim {
            dl[[bi, k]] = loss.deriv(pred[[i, k]] - targets[[i, k]]);
        }
    }

    match (weights.arch, inputs) {
        (Arch::DenseScalar, Inputs::Dense(x)) | (Arch::DenseVector { .. }, Inputs::Dense(x)) => {
            for j in 0..m {
                let u = &weights.first_layer[j];
                let alpha = &weights.second_layer[j];
                for (bi, &i) in batch.iter().enumerate() {
                    let xi = x.row(i);
                    let z = xi.dot(u);
                    let s = act.eval(z);
                    let sp = act.derivative(z);
                    let mut coeff = 0.0;
                    for k in 0..alpha_len {
                        da[j][k] += dl[[bi, k]] * s;
                        coeff += dl[[bi, k]] * alpha[k];
                    }
                    du[j].scaled_add(coeff * sp, &xi);
                }
            }
        }
        (Arch::Conv { .. }, Inputs::Patches(p)) => {
            for j in 0..m {
                let u = &weights.first_layer[j];
                let alpha = &weights.second_layer[j];
                for (k, pk) in p.iter().enumerate() {
                    for (bi, &i) in batch.iter().enumerate() {
                        let xi = pk.row(i);
                        let z = xi.dot(u);
                        da[j][k] += dl[[bi, 0]] * act.eval(z);
                        du[j].scaled_add(dl[[bi, 0]] * alpha[k] * act.derivative(z), &xi);
                    }
                }
            }
        }
        (Arch::Pool { patches, pool, .. }, Inputs::Patches(p)) => {
            let windows = patches / pool;
            let inv_p = 1.0 / pool as f64;
            for j in 0..m {
                let u = &weights.first_layer[j];
                let alpha = &weights.second_layer[j];
                for w in 0..windows {
                    for l in 0..pool {
                        let pk = &p[w * pool + l];
                        for (bi, &i) in batch.iter().enumerate() {
                            let xi = pk.row(i);
                            let z = xi.dot(u);
                            da[j][w] += dl[[bi, 0]] * act.eval(z) * inv_p;
                            du[j].scaled_add(
                                dl[[bi, 0]] * alpha[w] * act.derivative(z) * inv_p,
                                &xi,
                            );
                        }
                    }
                }
            }
        }
        _ => {
            return Err(Error::Shape(
                "architecture and input kind do not match".to_string(),
            ))
        }
    }

    // regularizer gradients
    match reg {
        RegSpec::L1SecondLayer(beta) => {
            // subgradient on alpha; the norm constraint on u is handled by
            // projection after the step
            for (grad, alpha) in da.iter_mut().zip(&weights.second_layer) {
                for (g, &a) in grad.iter_mut().zip(alpha.iter()) {
                    if a != 0.0 {
                        *g += beta * a.signum();
                    }
                }
            }
        }
        RegSpec::WeightDecay(beta) => {
            let s = beta / cubic_scale();
            for j in 0..m {
                da[j].scaled_add(2.0 * s, &weights.second_layer[j]);
                du[j].scaled_add(2.0 * s, &weights.first_layer[j]);
            }
        }
        RegSpec::Cubic(beta) => {
            let s = beta / cubic_scale();
            for j in 0..m {
                let an = l2(weights.second_layer[j].view());
                let un = l2(weights.first_layer[j].view());
                da[j].scaled_add(3.0 * s * an, &weights.second_layer[j]);
                du[j].scaled_add(3.0 * s * un, &weights.first_layer[j]);
            }
        }
    }
    Ok(GradBuffers { du, da })
}

/// Momentum (S)GD on the chosen objective. With `L1SecondLayer`
/// regularization every step is followed by normalizing each first-layer
/// vector back onto the unit sphere; the other penalties run
/// unconstrained. The trajectory records the full-batch objective per
/// epoch (entry 0 is the initial objective).
pub fn train_nonconvex(
    arch: Arch,
    inputs: &Inputs<'_>,
    targets: &Array2<f64>,
    act: PolyActivation,
    m: usize,
    config: &TrainConfig,
) -> Result<TrainResult> {
    if config.learning_rate <= 0.0 || !config.learning_rate.is_finite() {
        return Err(Error::InvalidInput("learning rate must be positive".to_string()));
    }
    if config.epochs == 0 {
        return Err(Error::InvalidInput("need at least one epoch".to_string()));
    }
    let n = inputs.n();
    if n == 0 {
        return Err(Error::Shape("empty input".to_string()));
    }
    let projected = matches!(config.reg, RegSpec::L1SecondLayer(_));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let input_dim = match inputs {
        Inputs::Dense(x) => x.ncols(),
        Inputs::Patches(p) => p.first().map_or(0, |m| m.ncols()),
    };
    let mut weights = init_weights(arch, input_dim, m, config.init_scale, projected, &mut rng)?;
    let mut vel_u: Vec<Array1<f64>> = weights
        .first_layer
        .iter()
        .map(|u| Array1::zeros(u.len()))
        .collect();
    let mut vel_a: Vec<Array1<f64>> = weights
        .second_layer
        .iter()
        .map(|a| Array1::zeros(a.len()))
        .collect();

    let start = Instant::now();
    let mut trajectory = Vec::with_capacity(config.epochs + 1);
    let obj0 = objective(&weights, inputs, targets, act, config.loss, &config.reg)?;
    trajectory.push(TrajectoryPoint {
        epoch: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective: obj0,
    });

    let full_batch: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        let batches: Vec<Vec<usize>> = if config.batch_size == 0 || config.batch_size >= n {
            vec![full_batch.clone()]
        } else {
            let mut idx = full_batch.clone();
            idx.shuffle(&mut rng);
            idx.chunks(config.batch_size).map(|c| c.to_vec()).collect()
        };
        for batch in &batches {
            let g = gradients(
                &weights,
                inputs,
                targets,
                act,
                config.loss,
                &config.reg,
                batch,
            )?;
            for j in 0..weights.m() {
                vel_u[j].mapv_inplace(|v| v * config.momentum);
                vel_u[j].scaled_add(-config.learning_rate, &g.du[j]);
                vel_a[j].mapv_inplace(|v| v * config.momentum);
                vel_a[j].scaled_add(-config.learning_rate, &g.da[j]);
                weights.first_layer[j] += &vel_u[j];
                weights.second_layer[j] += &vel_a[j];
                if projected {
                    let norm = l2(weights.first_layer[j].view());
                    if norm > 0.0 {
                        weights.first_layer[j].mapv_inplace(|v| v / norm);
                    }
                }
            }
        }
        let obj = objective(&weights, inputs, targets, act, config.loss, &config.reg)?;
        if !obj.is_finite() || obj > 1e12 {
            return Err(Error::Divergence {
                epoch,
                objective: obj,
            });
        }
        trajectory.push(TrajectoryPoint {
            epoch,
            wall_time_s: start.elapsed().as_secs_f64(),
            objective: obj,
        });
    }
    Ok(TrainResult {
        weights,
        trajectory,
    })
}

/// Multi-restart projected descent on the l1-regularized unit-norm
/// objective; returns the best final objective over all restarts.
/// Restart `r` uses seed `config.seed + r`; divergent restarts are
/// skipped. Intended for small instances (`d <= 4`, `n <= 50`).
pub fn brute_force_oracle(
    data: &Dataset,
    act: PolyActivation,
    beta: f64,
    m: usize,
    restarts: usize,
    config: &TrainConfig,
) -> Result<f64> {
    let y = data.y()?;
    let targets = y.insert_axis(ndarray::Axis(1)).to_owned();
    let inputs = Inputs::Dense(&data.x);
    let mut best = f64::INFINITY;
    let mut succeeded = 0usize;
    for r in 0..restarts {
        let cfg = TrainConfig {
            seed: config.seed.wrapping_add(r as u64),
            reg: RegSpec::L1SecondLayer(beta),
            ..config.clone()
        };
        match train_nonconvex(Arch::DenseScalar, &inputs, &targets, act, m, &cfg) {
            Ok(res) => {
                let last = res.trajectory.last().map(|t| t.objective).unwrap_or(f64::INFINITY);
                if last < best {
                    best = last;
                }
                succeeded += 1;
            }
            Err(Error::Divergence { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if succeeded == 0 {
        return Err(Error::Numerical(
            "every oracle restart diverged".to_string(),
        ));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::extract_patches;
    use ndarray::array;

    fn finite_difference_check(
        arch: Arch,
        inputs: &Inputs<'_>,
        targets: &Array2<f64>,
        act: PolyActivation,
        loss: Loss,
        reg: RegSpec,
        weights: &NetworkWeights,
    ) {
        let batch: Vec<usize> = (0..inputs.n()).collect();
        let g = gradients(weights, inputs, targets, act, loss, &reg, &batch).unwrap();
        let h = 1e-5;
        let eval = |w: &NetworkWeights| objective(w, inputs, targets, act, loss, &reg).unwrap();
        for j in 0..weights.m() {
            for t in 0..weights.first_layer[j].len() {
                let mut wp = weights.clone();
                wp.first_layer[j][t] += h;
                let mut wm = weights.clone();
                wm.first_layer[j][t] -= h;
                let fd = (eval(&wp) - eval(&wm)) / (2.0 * h);
                let an = g.du[j][t];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "du[{j}][{t}]: fd {fd} vs analytic {an} ({arch:?}, {loss:?})"
                );
            }
            for k in 0..weights.second_layer[j].len() {
                let mut wp = weights.clone();
                wp.second_layer[j][k] += h;
                let mut wm = weights.clone();
                wm.second_layer[j][k] -= h;
                let fd = (eval(&wp) - eval(&wm)) / (2.0 * h);
                let an = g.da[j][k];
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1.0),
                    "da[{j}][{k}]: fd {fd} vs analytic {an} ({arch:?}, {loss:?})"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 7;
        let d = 4;
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        for (arch, out_dim) in [
            (Arch::DenseScalar, 1usize),
            (Arch::DenseVector { classes: 3 }, 3),
        ] {
            let targets = Array2::from_shape_fn((n, out_dim), |_| rng.random_range(-1.0..1.0));
            for loss in [Loss::Squared, Loss::Huber, Loss::L1] {
                for reg in [
                    RegSpec::WeightDecay(0.3),
                    RegSpec::Cubic(0.3),
                ] {
                    let w = init_weights(arch, d, 3, 1.0, false, &mut rng).unwrap();
                    finite_difference_check(
                        arch,
                        &Inputs::Dense(&x),
                        &targets,
                        act,
                        loss,
                        reg,
                        &w,
                    );
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_conv_pool() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 5;
        let x = Array2::from_shape_fn((n, 6), |_| rng.random_range(-1.0..1.0));
        let data = Dataset::new_scalar(x, Array1::zeros(n)).unwrap();
        let patches = extract_patches(&data, 3, 1, 0).unwrap();
        let k = patches.len();
        assert_eq!(k, 4);
        let act = PolyActivation::new(0.2, -0.4, 0.1).unwrap();
        let targets = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        for arch in [
            Arch::Conv {
                filter_len: 3,
                patches: k,
            },
            Arch::Pool {
                filter_len: 3,
                patches: k,
                pool: 2,
            },
        ] {
            let w = init_weights(arch, 3, 2, 1.0, false, &mut rng).unwrap();
            finite_difference_check(
                arch,
                &Inputs::Patches(&patches),
                &targets,
                act,
                Loss::Squared,
                RegSpec::WeightDecay(0.2),
                &w,
            );
        }
    }

    #[test]
    fn one_gradient_step_matches_hand_derivative() {
        // single quadratic neuron: f(x) = alpha (x u)^2 on one sample
        let x = array![[2.0]];
        let targets = array![[1.0]];
        let act = PolyActivation::quadratic();
        let w = NetworkWeights::new(
            Arch::DenseScalar,
            vec![array![0.5]],
            vec![array![0.3]],
            false,
        )
        .unwrap();
        let g = gradients(
            &w,
            &Inputs::Dense(&x),
            &targets,
            act,
            Loss::Squared,
            &RegSpec::WeightDecay(0.0),
            &[0],
        )
        .unwrap();
        // pred = 0.3 * (2 * 0.5)^2 = 0.3, residual = -0.7
        // d/dalpha = 2 r * (xu)^2 = -1.4; d/du = 2 r * alpha * 2 (xu) x = -1.68
        assert!((g.da[0][0] + 1.4).abs() < 1e-12);
        assert!((g.du[0][0] + 1.68).abs() < 1e-12);
    }

    #[test]
    fn zero_everything_is_stationary() {
        let x = array![[1.0, -1.0], [0.5, 2.0]];
        let targets = array![[0.0], [0.0]];
        let act = PolyActivation::quadratic();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 20,
            init_scale: 0.0,
            reg: RegSpec::Cubic(0.0),
            ..TrainConfig::default()
        };
        let res = train_nonconvex(
            Arch::DenseScalar,
            &Inputs::Dense(&x),
            &targets,
            act,
            3,
            &cfg,
        )
        .unwrap();
        for p in &res.trajectory {
            assert_eq!(p.objective, 0.0);
        }
    }

    #[test]
    fn projection_keeps_unit_norm_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10;
        let d = 4;
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0));
        let cfg = TrainConfig {
            learning_rate: 0.02,
            epochs: 15,
            reg: RegSpec::L1SecondLayer(0.05),
            batch_size: 3,
            seed: 4,
            ..TrainConfig::default()
        };
        let res = train_nonconvex(
            Arch::DenseScalar,
            &Inputs::Dense(&x),
            &targets,
            PolyActivation::new(0.09, 0.5, 0.47).unwrap(),
            4,
            &cfg,
        )
        .unwrap();
        for u in &res.weights.first_layer {
            assert!((l2(u.view()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let x = array![[10.0, 10.0]];
        let targets = array![[0.0]];
        let cfg = TrainConfig {
            learning_rate: 10.0,
            epochs: 200,
            reg: RegSpec::WeightDecay(0.0),
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train_nonconvex(
            Arch::DenseScalar,
            &Inputs::Dense(&x),
            &targets,
            PolyActivation::quadratic(),
            2,
            &cfg,
        );
        assert!(matches!(out, Err(Error::Divergence { .. })));
    }

    #[test]
    fn training_is_deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0));
        let targets = Array2::from_shape_fn((8, 1), |_| rng.random_range(-1.0..1.0));
        let cfg = TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let a = train_nonconvex(Arch::DenseScalar, &Inputs::Dense(&x), &targets, act, 3, &cfg)
            .unwrap();
        let b = train_nonconvex(Arch::DenseScalar, &Inputs::Dense(&x), &targets, act, 3, &cfg)
            .unwrap();
        for (p, q) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(p.objective, q.objective);
        }
    }

    #[test]
    fn oracle_reaches_planted_fit_at_tiny_beta() {
        use crate::programs::ConvexProgram;
        use crate::solver::{solve, SolverConfig};
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let (data, _) =
            crate::cli::gen_planted(20, 2, 2, crate::cli::Transform::Gaussian, act, 3).unwrap();
        let beta = 1e-6;
        let prog = ConvexProgram::build_scalar(&data, act, beta, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            epochs: 300,
            seed: 11,
            ..TrainConfig::default()
        };
        let best = brute_force_oracle(&data, act, beta, 6, 200, &cfg).unwrap();
        // realizable instance: both sides sit near the planted fit
        assert!(best >= sol.objective - 1e-4, "lower bound violated");
        assert!(
            (best - sol.objective).abs() <= 1e-3,
            "oracle {best} vs convex {}",
            sol.objective
        );
    }

    #[test]
    fn convex_solution_lower_bounds_gradient_descent() {
        use crate::programs::ConvexProgram;
        use crate::solver::{solve, SolverConfig};
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let beta = 0.1;
        for inst in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(88_000 + inst);
            let n = 15;
            let d = 3;
            let x = Array2::from_shape_fn((n, d), |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let data = Dataset::new_scalar(x.clone(), y).unwrap();
            let prog = ConvexProgram::build_scalar(&data, act, beta, Loss::Squared).unwrap();
            let sol = solve(&prog, &SolverConfig::default()).unwrap();
            for seed in 0..3u64 {
                let cfg = TrainConfig {
                    learning_rate: 5e-3,
                    epochs: 120,
                    seed,
                    reg: RegSpec::L1SecondLayer(beta),
                    ..TrainConfig::default()
                };
                let res = train_nonconvex(
                    Arch::DenseScalar,
                    &Inputs::Dense(&x),
                    &data.targets,
                    act,
                    4,
                    &cfg,
                )
                .unwrap();
                let final_obj = res.trajectory.last().unwrap().objective;
                assert!(
                    sol.objective <= final_obj + 1e-5 * final_obj.max(1.0),
                    "instance {inst} seed {seed}: convex {} above GD {final_obj}",
                    sol.objective
                );
            }
        }
    }

    #[test]
    fn oracle_beats_nothing_below_zero_prediction_loss() {
        // with beta huge the best any network can do is predict zero
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
        let zero_loss: f64 = y.iter().map(|v| v * v).sum();
        let data = Dataset::new_scalar(x, y).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            epochs: 60,
            ..TrainConfig::default()
        };
        let best = brute_force_oracle(
            &data,
            PolyActivation::new(0.09, 0.5, 0.47).unwrap(),
            1e6,
            4,
            5,
            &cfg,
        )
        .unwrap();
        assert!(best + 1e-9 >= zero_loss, "best {best} vs zero loss {zero_loss}");
    }
}
