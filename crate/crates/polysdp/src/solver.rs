//! First-order splitting (ADMM) solver for the convex program family:
//! a convex loss composed with a linear operator plus a linear
//! regularization term, over products of PSD cones intersected with the
//! trace-coupling hyperplanes.
//!
//! The iteration is a three-block consensus splitting. The matrix-variable
//! update solves a regularized linear system through the Woodbury identity
//! on the prediction operator's Gram matrix, with the trace-coupling
//! equalities folded in through their own multipliers; the prediction
//! block applies the loss proximal operator in closed form; the cone block
//! projects every matrix onto PSD, alternating with the trace hyperplane
//! via Dykstra's method. When `use_gram` is set (scalar architecture,
//! squared loss) a two-block variant runs on the precomputed Gram form and
//! the per-iteration cost is independent of the sample count.

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, cholesky_solve, eigen_sym, lu_factor, lu_solve, moreau_split, numeric_rank,
    project_psd, LuFactors, SymMatrix, DEFAULT_RANK_TOL,
};
use crate::model::Loss;
use crate::programs::{gram_precompute_from, ConvexProgram, ProgramArch};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Solver parameters. Defaults match the tolerances used throughout the
/// test suite.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Initial ADMM penalty.
    pub rho: f64,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Over-relaxation factor in `[1, 1.8]`; 1 disables it.
    pub over_relaxation: f64,
    /// Rescale `rho` by 2 when the normalized residual ratio exceeds 10,
    /// at most every 50 iterations.
    pub adaptive_rho: bool,
    /// Relative eigenvalue tolerance for rank reports.
    pub rank_tol: f64,
    /// Use the precomputed Gram form of the squared loss (scalar
    /// architecture only); other programs fall back to the general path.
    pub use_gram: bool,
    /// Record an iteration-log entry every `log_every` iterations
    /// (0 disables logging).
    pub log_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iter: 50_000,
            eps_abs: 1e-8,
            eps_rel: 1e-6,
            over_relaxation: 1.0,
            adaptive_rho: true,
            rank_tol: DEFAULT_RANK_TOL,
            use_gram: false,
            log_every: 0,
        }
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// Solution of a convex program: the block pairs, the objective value
/// recomputed from those blocks, final residuals, per-pair numeric ranks
/// and the critical width `m* = sum of ranks`.
#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub pairs: Vec<(SymMatrix, SymMatrix)>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// `(rank Z_k, rank Z'_k)` per pair at the configured tolerance.
    pub ranks: Vec<(usize, usize)>,
    /// `sum_k rank(Z_k) + rank(Z'_k)`.
    pub m_star: usize,
    /// False when the solver stopped at `max_iter` with residuals above
    /// target but below the failure threshold (a convergence warning).
    pub converged: bool,
    pub iter_log: Vec<IterRecord>,
}

/// Componentwise proximal operator of `sigma * loss(. , y_i)` evaluated
/// at `v`: quadratic averaging for the squared loss, soft-thresholding
/// for l1, and the piecewise closed form for Huber.
pub fn prox_loss(loss: Loss, v: &Array1<f64>, y: &Array1<f64>, sigma: f64) -> Array1<f64> {
    Array1::from_iter(
        v.iter()
            .zip(y.iter())
            .map(|(&vi, &yi)| prox_loss_scalar(loss, vi, yi, sigma)),
    )
}

pub(crate) fn prox_loss_scalar(loss: Loss, v: f64, y: f64, sigma: f64) -> f64 {
    match loss {
        Loss::Squared => (v + 2.0 * sigma * y) / (1.0 + 2.0 * sigma),
        Loss::L1 => {
            let t = v - y;
            y + t.signum() * (t.abs() - sigma).max(0.0)
        }
        Loss::Huber => {
            let t = v - y;
            let x = if t.abs() <= 1.0 + 2.0 * sigma {
                t / (1.0 + 2.0 * sigma)
            } else {
                t - 2.0 * sigma * t.signum()
            };
            y + x
        }
    }
}

// ---------------------------------------------------------------------
// Block-vector arithmetic
// ---------------------------------------------------------------------

/// Stacked symmetric blocks `[Z_0, Z'_0, Z_1, Z'_1, ...]` with Frobenius
/// inner product.
#[derive(Debug, Clone)]
struct Blocks(Vec<Array2<f64>>);

impl Blocks {
    fn zeros(nb: usize, dim: usize) -> Self {
        Blocks((0..nb).map(|_| Array2::zeros((dim, dim))).collect())
    }

    fn from_pairs(pairs: &[(SymMatrix, SymMatrix)]) -> Self {
        let mut v = Vec::with_capacity(pairs.len() * 2);
        for (z, zp) in pairs {
            v.push(z.as_array().clone());
            v.push(zp.as_array().clone());
        }
        Blocks(v)
    }

    fn to_pairs(&self) -> Result<Vec<(SymMatrix, SymMatrix)>> {
        let mut out = Vec::with_capacity(self.0.len() / 2);
        for c in self.0.chunks(2) {
            out.push((
                SymMatrix::symmetrize(c[0].clone())?,
                SymMatrix::symmetrize(c[1].clone())?,
            ));
        }
        Ok(out)
    }

    fn dot(&self, other: &Blocks) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn add(&mut self, other: &Blocks) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    fn sub(&mut self, other: &Blocks) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a -= b;
        }
    }

    fn add_scaled(&mut self, other: &Blocks, t: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.scaled_add(t, b);
        }
    }

    fn scale(&mut self, t: f64) {
        for a in self.0.iter_mut() {
            *a *= t;
        }
    }

    fn combine(a: &Blocks, ta: f64, b: &Blocks, tb: f64) -> Blocks {
        let mut out = a.clone();
        out.scale(ta);
        out.add_scaled(b, tb);
        out
    }
}

// ---------------------------------------------------------------------
// Cone projections
// ---------------------------------------------------------------------

const CONE_FEAS_TOL: f64 = 1e-10;
const CONE_MAX_PROJECTIONS: usize = 100;

/// Project a symmetric matrix onto `{S >= 0, tr(S_1) = S_4}`.
///
/// The iteration alternates PSD projections with steps along the trace
/// hyperplane's normal `G = diag(I, -1)`: the intersection projection is
/// `P_psd(A - t G)` at the root of the monotone scalar function
/// `phi(t) = <G, P_psd(A - t G)>`, which a bracketed secant locates.
/// The output is exactly PSD with coupling residual at most
/// `1e-10 * max(1, ||A||_F)`; after 100 inner projections the best PSD
/// iterate so far is returned as a feasibility fallback.
pub fn project_trace_coupled_psd(a: &SymMatrix) -> Result<SymMatrix> {
    project_trace_coupled_warm(a, 0.0).map(|(s, _)| s)
}

/// Warm-started variant returning the hyperplane multiplier for reuse in
/// the next call on a nearby input.
pub(crate) fn project_trace_coupled_warm(a: &SymMatrix, t0: f64) -> Result<(SymMatrix, f64)> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".to_string()));
    }
    let dim = a.dim();
    let scale = a.frob_norm().max(1.0);
    let tol = CONE_FEAS_TOL * scale;
    let t0 = if t0.is_finite() { t0 } else { 0.0 };

    let shifted = |t: f64| -> Array2<f64> {
        let mut m = a.as_array().clone();
        for i in 0..dim - 1 {
            m[[i, i]] -= t;
        }
        m[[dim - 1, dim - 1]] += t;
        m
    };
    // eigen data of A - tG; phi is <G, PSD projection> read off the
    // eigenpairs without forming the projected matrix
    let mut v = Array2::zeros((dim, dim));
    let evals = std::cell::Cell::new(0usize);
    let phi_at = |t: f64, v: &mut Array2<f64>| -> (f64, Vec<f64>) {
        evals.set(evals.get() + 1);
        let d = crate::linalg::jacobi_raw(&shifted(t), v);
        let mut phi = 0.0;
        for (j, &lam) in d.iter().enumerate() {
            if lam > 0.0 {
                let mut w = -v[[dim - 1, j]] * v[[dim - 1, j]];
                for i in 0..dim - 1 {
                    w += v[[i, j]] * v[[i, j]];
                }
                phi += lam * w;
            }
        }
        (phi, d)
    };
    let reconstruct = |d: &[f64], v: &Array2<f64>| -> SymMatrix {
        let mut m = Array2::zeros((dim, dim));
        for (j, &lam) in d.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            for r in 0..dim {
                let vr = lam * v[[r, j]];
                for c in r..dim {
                    let val = vr * v[[c, j]];
                    m[[r, c]] += val;
                    if r != c {
                        m[[c, r]] += val;
                    }
                }
            }
        }
        SymMatrix::symmetrize(m).expect("square by construction")
    };

    let (phi0, d0) = phi_at(t0, &mut v);
    if phi0.abs() <= tol {
        return Ok((reconstruct(&d0, &v), t0));
    }

    // bracket the root by doubling away from t0; phi is nonincreasing
    let dir = if phi0 > 0.0 { 1.0 } else { -1.0 };
    let mut step = (phi0.abs() / dim as f64).max(1e-3 * scale);
    let mut lo = t0; // phi(lo) > 0
    let mut phi_lo = phi0;
    let mut hi = t0; // phi(hi) < 0
    let mut phi_hi = phi0;
    let mut best: Option<(f64, f64)> = Some((phi0.abs(), t0));
    let mut bracketed = false;
    while evals.get() < CONE_MAX_PROJECTIONS {
        let t = t0 + dir * step;
        let (phi, d) = phi_at(t, &mut v);
        if phi.abs() <= tol {
            return Ok((reconstruct(&d, &v), t));
        }
        if best.is_none_or(|(b, _)| phi.abs() < b) {
            best = Some((phi.abs(), t));
        }
        if phi > 0.0 {
            lo = t;
            phi_lo = phi;
        } else {
            hi = t;
            phi_hi = phi;
        }
        if phi.signum() != phi0.signum() {
            if phi0 > 0.0 {
                lo = t0;
                phi_lo = phi0;
            } else {
                hi = t0;
                phi_hi = phi0;
            }
            bracketed = true;
            break;
        }
        step *= 2.0;
    }

    if bracketed {
        // Illinois false position inside the bracket
        let mut side = 0i8;
        while evals.get() < CONE_MAX_PROJECTIONS {
            let mut t = lo - phi_lo * (hi - lo) / (phi_hi - phi_lo);
            if !t.is_finite() || t <= lo.min(hi) || t >= lo.max(hi) {
                t = 0.5 * (lo + hi);
            }
            let (phi, d) = phi_at(t, &mut v);
            if phi.abs() <= tol {
                return Ok((reconstruct(&d, &v), t));
            }
            if best.is_none_or(|(b, _)| phi.abs() < b) {
                best = Some((phi.abs(), t));
            }
            if phi > 0.0 {
                lo = t;
                phi_lo = phi;
                if side == 1 {
                    phi_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = t;
                phi_hi = phi;
                if side == -1 {
                    phi_lo *= 0.5;
                }
                side = -1;
            }
        }
    }

    // budget exhausted: return the PSD projection at the best multiplier
    let (_, t_best) = best.expect("at least one evaluation");
    let (_, d) = phi_at(t_best, &mut v);
    Ok((reconstruct(&d, &v), t_best))
}

fn project_blocks(w: &Blocks, trace_coupled: bool, mults: &mut [f64]) -> Result<Blocks> {
    let mut out = Vec::with_capacity(w.0.len());
    for (b, t) in w.0.iter().zip(mults.iter_mut()) {
        let sym = SymMatrix::symmetrize(b.clone())?;
        let proj = if trace_coupled {
            let (s, t_new) = project_trace_coupled_warm(&sym, *t)?;
            *t = t_new;
            s
        } else {
            project_psd(&sym)?
        };
        out.push(proj.into_array());
    }
    Ok(Blocks(out))
}

// ---------------------------------------------------------------------
// Shared driver pieces
// ---------------------------------------------------------------------

fn validate(program: &ConvexProgram, config: &SolverConfig) -> Result<()> {
    if !(config.eps_abs > 0.0 && config.eps_rel > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".to_string()));
    }
    if !(config.rho > 0.0 && config.rho.is_finite()) {
        return Err(Error::InvalidInput("rho must be positive".to_string()));
    }
    if !(1.0..=1.8).contains(&config.over_relaxation) {
        return Err(Error::InvalidInput(
            "over-relaxation factor must lie in [1, 1.8]".to_string(),
        ));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".to_string()));
    }
    if !program.is_finite() {
        return Err(Error::InvalidInput(
            "program data has non-finite entries".to_string(),
        ));
    }
    Ok(())
}

/// Trace-coupling inner product `<G, block>` of one block.
fn ghat_dot(block: &Array2<f64>) -> f64 {
    let dim = block.nrows();
    let mut v = -block[[dim - 1, dim - 1]];
    for i in 0..dim - 1 {
        v += block[[i, i]];
    }
    v
}

struct Frame {
    feats: Vec<Blocks>,
    chol: Array2<f64>,
}

impl Frame {
    fn apply_a(&self, w: &Blocks) -> Array1<f64> {
        Array1::from_iter(self.feats.iter().map(|f| f.dot(w)))
    }

    fn apply_at(&self, v: &Array1<f64>, nb: usize, dim: usize) -> Blocks {
        let mut out = Blocks::zeros(nb, dim);
        for (f, &c) in self.feats.iter().zip(v.iter()) {
            if c != 0.0 {
                out.add_scaled(f, c);
            }
        }
        out
    }

    /// `(I + A*A)^{-1} x` through the Woodbury identity.
    fn apply_p(&self, x: &Blocks, nb: usize, dim: usize) -> Blocks {
        let ax = self.apply_a(x);
        let sol = cholesky_solve(&self.chol, &ax);
        let mut out = x.clone();
        let corr = self.apply_at(&sol, nb, dim);
        out.sub(&corr);
        out
    }
}

fn build_frame(program: &ConvexProgram) -> Result<Frame> {
    let n_out = program.prediction_len();
    let mut feats = Vec::with_capacity(n_out);
    for t in 0..n_out {
        feats.push(Blocks::from_pairs(&program.basis_feature(t)?));
    }
    let mut gram = Array2::zeros((n_out, n_out));
    for i in 0..n_out {
        for j in i..n_out {
            let v = feats[i].dot(&feats[j]);
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
        gram[[i, i]] += 1.0;
    }
    let chol = cholesky(&gram)?;
    Ok(Frame { feats, chol })
}

/// Solve a convex program with the default cold start.
pub fn solve(program: &ConvexProgram, config: &SolverConfig) -> Result<ConvexSolution> {
    solve_warm(program, config, None)
}

/// Solve with an optional warm start taken from a previous solution's
/// blocks (used by regularization-path sweeps).
pub fn solve_warm(
    program: &ConvexProgram,
    config: &SolverConfig,
    warm: Option<&ConvexSolution>,
) -> Result<ConvexSolution> {
    validate(program, config)?;
    if config.use_gram && program.arch == ProgramArch::Scalar && program.loss == Loss::Squared {
        solve_gram_path(program, config, warm)
    } else {
        solve_general_path(program, config, warm)
    }
}

struct Finish {
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    converged: bool,
    iter_log: Vec<IterRecord>,
}

fn finish_solution(
    program: &ConvexProgram,
    config: &SolverConfig,
    s: Blocks,
    fin: Finish,
) -> Result<ConvexSolution> {
    let mut pairs = s.to_pairs()?;
    if program.arch == ProgramArch::Quadratic {
        // canonicalize to the Moreau split so that tr(Z1 + Z2) reports the
        // nuclear norm of Z1 - Z2 and the rank sum matches rank(Z)
        let (z, zp) = &pairs[0];
        let diff = SymMatrix::symmetrize(z.as_array() - zp.as_array())?;
        let (m1, m2) = moreau_split(&diff)?;
        pairs = vec![(m1, m2)];
    }
    let mut ranks = Vec::with_capacity(pairs.len());
    let mut m_star = 0;
    for (z, zp) in &pairs {
        let r = numeric_rank(z, config.rank_tol)?;
        let rp = numeric_rank(zp, config.rank_tol)?;
        ranks.push((r, rp));
        m_star += r + rp;
    }
    let objective = program.objective_of(&pairs)?;
    Ok(ConvexSolution {
        pairs,
        objective,
        primal_residual: fin.primal_residual,
        dual_residual: fin.dual_residual,
        iterations: fin.iterations,
        ranks,
        m_star,
        converged: fin.converged,
        iter_log: fin.iter_log,
    })
}

// ---------------------------------------------------------------------
// General path: loss prox + cone projection + Woodbury matrix update
// ---------------------------------------------------------------------

fn solve_general_path(
    program: &ConvexProgram,
    config: &SolverConfig,
    warm: Option<&ConvexSolution>,
) -> Result<ConvexSolution> {
    let nb = 2 * program.pair_count;
    let dim = program.block_dim;
    let n_out = program.prediction_len();
    let coupled = program.trace_coupled();
    let alpha = config.over_relaxation;
    let frame = build_frame(program)?;

    // trace-coupling equalities folded into the matrix update
    let eq = if coupled {
        let mut ys = Vec::with_capacity(nb);
        for b in 0..nb {
            let mut ghat = Blocks::zeros(nb, dim);
            for i in 0..dim - 1 {
                ghat.0[b][[i, i]] = 1.0;
            }
            ghat.0[b][[dim - 1, dim - 1]] = -1.0;
            ys.push(frame.apply_p(&ghat, nb, dim));
        }
        let mut neq = Array2::zeros((nb, nb));
        for a in 0..nb {
            for b in 0..nb {
                neq[[a, b]] = ghat_dot(&ys[b].0[a]);
            }
        }
        let neq_sym = (&neq + &neq.t()) * 0.5;
        Some((ys, cholesky(&neq_sym)?))
    } else {
        None
    };

    let reg = {
        let rm = program.regularization_matrix();
        let mut b = Blocks::zeros(nb, dim);
        for blk in b.0.iter_mut() {
            blk.assign(rm.as_array());
        }
        b
    };

    let targets: Array1<f64> = Array1::from_iter(program.targets.iter().cloned());
    let mut rho = config.rho;
    let mut s = Blocks::zeros(nb, dim);
    let mut u = Blocks::zeros(nb, dim);
    let mut y_aux: Array1<f64> = Array1::zeros(n_out);
    let mut lam: Array1<f64> = Array1::zeros(n_out);
    if let Some(prev) = warm {
        if prev.pairs.len() == program.pair_count
            && prev.pairs.iter().all(|(z, _)| z.dim() == dim)
        {
            s = Blocks::from_pairs(&prev.pairs);
            y_aux = frame.apply_a(&s);
        }
    }
    let mut iter_log = Vec::new();
    let mut last_adapt = 0usize;
    let mut fin: Option<Finish> = None;
    let mut cone_mults = vec![0.0f64; nb];

    for it in 1..=config.max_iter {
        // (i) matrix update: (I + A*A) W = A*(yhat - lam) + (S - U) - R/rho,
        // then the trace equalities through their multipliers
        let mut rhs = s.clone();
        rhs.sub(&u);
        let mut v = y_aux.clone();
        v -= &lam;
        rhs.add(&frame.apply_at(&v, nb, dim));
        rhs.add_scaled(&reg, -1.0 / rho);
        let mut w = frame.apply_p(&rhs, nb, dim);
        if let Some((ys, chol_eq)) = &eq {
            let c = Array1::from_iter(w.0.iter().map(ghat_dot));
            let mu = cholesky_solve(chol_eq, &c);
            for (b, &m) in ys.iter().zip(mu.iter()) {
                w.add_scaled(b, -m);
            }
        }
        let aw = frame.apply_a(&w);

        // (ii) prediction update: loss prox on the over-relaxed point
        let aw_hat = &aw * alpha + &(&y_aux * (1.0 - alpha));
        let y_old = y_aux.clone();
        y_aux = prox_loss(program.loss, &(&aw_hat + &lam), &targets, 1.0 / rho);
        lam += &(&aw_hat - &y_aux);

        // (iii) cone update on the over-relaxed point
        let w_hat = Blocks::combine(&w, alpha, &s, 1.0 - alpha);
        let s_old = s.clone();
        let mut arg = w_hat.clone();
        arg.add(&u);
        s = project_blocks(&arg, coupled, &mut cone_mults)?;
        u.add(&w_hat);
        u.sub(&s);

        // residuals of the consensus constraints (A(W), W) = (yhat, S)
        let mut pri = 0.0;
        for (a, b) in aw.iter().zip(y_aux.iter()) {
            pri += (a - b) * (a - b);
        }
        let mut ws_diff = w.clone();
        ws_diff.sub(&s);
        let r_pri = (pri + ws_diff.dot(&ws_diff)).sqrt();

        let mut dy = y_aux.clone();
        dy -= &y_old;
        let mut dual_vec = frame.apply_at(&dy, nb, dim);
        let mut ds = s.clone();
        ds.sub(&s_old);
        dual_vec.add(&ds);
        let r_dual = rho * dual_vec.norm();

        let fw_norm = (aw.iter().map(|x| x * x).sum::<f64>() + w.dot(&w)).sqrt();
        let z_norm = (y_aux.iter().map(|x| x * x).sum::<f64>() + s.dot(&s)).sqrt();
        let p_dim = ((n_out + nb * dim * dim) as f64).sqrt();
        let q_dim = ((nb * dim * dim) as f64).sqrt();
        let eps_pri = p_dim * config.eps_abs + config.eps_rel * fw_norm.max(z_norm);
        let mut atl = frame.apply_at(&lam, nb, dim);
        atl.add(&u);
        let eps_dua = q_dim * config.eps_abs + config.eps_rel * rho * atl.norm();

        if config.log_every > 0 && (it % config.log_every == 0 || it == 1) {
            let objective = program.objective_of(&s.to_pairs()?)?;
            iter_log.push(IterRecord {
                iteration: it,
                objective,
                primal_residual: r_pri,
                dual_residual: r_dual,
            });
        }

        if r_pri <= eps_pri && r_dual <= eps_dua {
            fin = Some(Finish {
                iterations: it,
                primal_residual: r_pri,
                dual_residual: r_dual,
                converged: true,
                iter_log: std::mem::take(&mut iter_log),
            });
            break;
        }

        if it == config.max_iter {
            let loose_pri = 1e-3 * fw_norm.max(z_norm).max(1.0);
            let loose_dua = 1e-3 * (rho * atl.norm()).max(1.0);
            if r_pri <= loose_pri && r_dual <= loose_dua {
                fin = Some(Finish {
                    iterations: it,
                    primal_residual: r_pri,
                    dual_residual: r_dual,
                    converged: false,
                    iter_log: std::mem::take(&mut iter_log),
                });
            } else {
                return Err(Error::Solve(format!(
                    "no convergence after {it} iterations: primal {r_pri:e}, dual {r_dual:e}"
                )));
            }
            break;
        }

        if config.adaptive_rho && it >= last_adapt + 50 {
            let rel_p = r_pri / eps_pri.max(1e-300);
            let rel_d = r_dual / eps_dua.max(1e-300);
            if rel_p > 10.0 * rel_d && rho < 1e10 {
                rho *= 2.0;
                lam /= 2.0;
                u.scale(0.5);
                last_adapt = it;
            } else if rel_d > 10.0 * rel_p && rho > 1e-8 {
                rho /= 2.0;
                lam *= 2.0;
                u.scale(2.0);
                last_adapt = it;
            }
        }
    }

    let fin = fin.expect("loop always sets a result or errors");
    finish_solution(program, config, s, fin)
}

// ---------------------------------------------------------------------
// Gram path: squared loss folded into the matrix update
// ---------------------------------------------------------------------

/// Index of `(i, j)` with `i <= j` in the scaled upper-triangle (svec)
/// coordinates of a `dim x dim` symmetric matrix.
fn svec_index(i: usize, j: usize, dim: usize) -> usize {
    debug_assert!(i <= j);
    i * dim - i * (i + 1) / 2 + j
}

fn svec_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

fn svec(m: &Array2<f64>) -> Array1<f64> {
    let dim = m.nrows();
    let mut v = Array1::zeros(svec_len(dim));
    let sqrt2 = std::f64::consts::SQRT_2;
    for i in 0..dim {
        for j in i..dim {
            v[svec_index(i, j, dim)] = if i == j { m[[i, i]] } else { sqrt2 * m[[i, j]] };
        }
    }
    v
}

fn smat(v: &[f64], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((dim, dim));
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in i..dim {
            let x = v[svec_index(i, j, dim)];
            if i == j {
                m[[i, i]] = x;
            } else {
                m[[i, j]] = x * inv_sqrt2;
                m[[j, i]] = x * inv_sqrt2;
            }
        }
    }
    m
}

/// Map svec coordinates of one `(d+1) x (d+1)` block to the lifted
/// coefficient vector `[vec(Z1), Z2, Z4]` of length `d^2 + d + 1`.
fn build_e0(d: usize) -> Array2<f64> {
    let dim = d + 1;
    let rows = d * d + d + 1;
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut e = Array2::zeros((rows, svec_len(dim)));
    for i in 0..d {
        for j in 0..d {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            e[[i * d + j, svec_index(a, b, dim)]] = if i == j { 1.0 } else { inv_sqrt2 };
        }
    }
    for i in 0..d {
        e[[d * d + i, svec_index(i, d, dim)]] = inv_sqrt2;
    }
    e[[d * d + d, svec_index(d, d, dim)]] = 1.0;
    e
}

fn solve_gram_path(
    program: &ConvexProgram,
    config: &SolverConfig,
    warm: Option<&ConvexSolution>,
) -> Result<ConvexSolution> {
    let dim = program.block_dim;
    let d = dim - 1;
    let x = program
        .dense_rows()
        .ok_or_else(|| Error::Solve("gram path requires the scalar program".to_string()))?;
    let y = Array1::from_iter(program.targets.iter().cloned());
    let gram = gram_precompute_from(x, &y, program.act)?;

    let sv = svec_len(dim);
    let e0 = build_e0(d);
    // E0' G E0 in svec coordinates of one block
    let ge0 = gram.g_mat.dot(&e0);
    let e0ge0 = e0.t().dot(&ge0);
    let lin0 = e0.t().dot(&gram.g_vec);

    let ghat = {
        let mut g = Array2::eye(dim);
        g[[d, d]] = -1.0;
        svec(&g)
    };
    let beta = program.beta;
    let corner = svec_index(d, d, dim);
    let alpha = config.over_relaxation;

    let kkt_factor = |rho: f64| -> Result<LuFactors> {
        let n = 2 * sv + 2;
        let mut k = Array2::zeros((n, n));
        for a in 0..sv {
            for b in 0..sv {
                let v = 2.0 * e0ge0[[a, b]];
                k[[a, b]] = v;
                k[[a + sv, b + sv]] = v;
                k[[a, b + sv]] = -v;
                k[[a + sv, b]] = -v;
            }
        }
        for a in 0..2 * sv {
            k[[a, a]] += rho;
        }
        for a in 0..sv {
            k[[a, 2 * sv]] = ghat[a];
            k[[2 * sv, a]] = ghat[a];
            k[[a + sv, 2 * sv + 1]] = ghat[a];
            k[[2 * sv + 1, a + sv]] = ghat[a];
        }
        lu_factor(&k)
    };

    let mut rho = config.rho;
    let mut kkt = kkt_factor(rho)?;

    let mut w = Array1::<f64>::zeros(2 * sv);
    let mut s = Array1::<f64>::zeros(2 * sv);
    let mut u = Array1::<f64>::zeros(2 * sv);
    if let Some(prev) = warm {
        if prev.pairs.len() == 1 && prev.pairs[0].0.dim() == dim {
            let (z, zp) = &prev.pairs[0];
            let a = svec(z.as_array());
            let b = svec(zp.as_array());
            for i in 0..sv {
                s[i] = a[i];
                s[i + sv] = b[i];
            }
            w = s.clone();
        }
    }

    let q_dim = (2 * sv) as f64;
    let mut iter_log = Vec::new();
    let mut last_adapt = 0usize;
    let mut fin: Option<Finish> = None;
    let mut cone_mults = [0.0f64; 2];

    let objective_of_svec = |v: &Array1<f64>| -> f64 {
        let z1 = &v.slice(ndarray::s![..sv]);
        let z2 = &v.slice(ndarray::s![sv..]);
        let diff = Array1::from_iter(z1.iter().zip(z2.iter()).map(|(a, b)| a - b));
        let zc = e0.dot(&diff);
        let quad = zc.dot(&gram.g_mat.dot(&zc)) - 2.0 * gram.g_vec.dot(&zc) + gram.y_norm_sq;
        quad + beta * (v[corner] + v[corner + sv])
    };

    for it in 1..=config.max_iter {
        // matrix update: (2 E'GE + rho I) W + equality multipliers
        let mut rhs = Array1::<f64>::zeros(2 * sv + 2);
        for i in 0..sv {
            rhs[i] = 2.0 * lin0[i] + rho * (s[i] - u[i]);
            rhs[i + sv] = -2.0 * lin0[i] + rho * (s[i + sv] - u[i + sv]);
        }
        rhs[corner] -= beta;
        rhs[corner + sv] -= beta;
        let sol = lu_solve(&kkt, &rhs);
        for i in 0..2 * sv {
            w[i] = sol[i];
        }

        // cone update
        let w_hat = &w * alpha + &(&s * (1.0 - alpha));
        let s_old = s.clone();
        let arg = &w_hat + &u;
        for (blk, range) in [(0usize, 0..sv), (1usize, sv..2 * sv)] {
            let m = smat(&arg.as_slice().unwrap()[range.clone()], dim);
            let (proj, t_new) =
                project_trace_coupled_warm(&SymMatrix::symmetrize(m)?, cone_mults[blk])?;
            cone_mults[blk] = t_new;
            let pv = svec(proj.as_array());
            for (off, i) in range.enumerate() {
                s[i] = pv[off];
            }
        }
        u += &(&w_hat - &s);

        let r_pri = (&w - &s).iter().map(|v| v * v).sum::<f64>().sqrt();
        let r_dual = rho * (&s - &s_old).iter().map(|v| v * v).sum::<f64>().sqrt();
        let w_norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s_norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u_norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let eps_pri = q_dim.sqrt() * config.eps_abs + config.eps_rel * w_norm.max(s_norm);
        let eps_dua = q_dim.sqrt() * config.eps_abs + config.eps_rel * rho * u_norm;

        if config.log_every > 0 && (it % config.log_every == 0 || it == 1) {
            iter_log.push(IterRecord {
                iteration: it,
                objective: objective_of_svec(&s),
                primal_residual: r_pri,
                dual_residual: r_dual,
            });
        }

        if r_pri <= eps_pri && r_dual <= eps_dua {
            fin = Some(Finish {
                iterations: it,
                primal_residual: r_pri,
                dual_residual: r_dual,
                converged: true,
                iter_log: std::mem::take(&mut iter_log),
            });
            break;
        }
        if it == config.max_iter {
            let loose = 1e-3 * w_norm.max(s_norm).max(1.0);
            let loose_d = 1e-3 * (rho * u_norm).max(1.0);
            if r_pri <= loose && r_dual <= loose_d {
                fin = Some(Finish {
                    iterations: it,
                    primal_residual: r_pri,
                    dual_residual: r_dual,
                    converged: false,
                    iter_log: std::mem::take(&mut iter_log),
                });
            } else {
                return Err(Error::Solve(format!(
                    "no convergence after {it} iterations: primal {r_pri:e}, dual {r_dual:e}"
                )));
            }
            break;
        }

        if config.adaptive_rho && it >= last_adapt + 50 {
            let rel_p = r_pri / eps_pri.max(1e-300);
            let rel_d = r_dual / eps_dua.max(1e-300);
            if rel_p > 10.0 * rel_d && rho < 1e10 {
                rho *= 2.0;
                u /= 2.0;
                kkt = kkt_factor(rho)?;
                last_adapt = it;
            } else if rel_d > 10.0 * rel_p && rho > 1e-8 {
                rho /= 2.0;
                u *= 2.0;
                kkt = kkt_factor(rho)?;
                last_adapt = it;
            }
        }
    }

    let fin = fin.expect("loop always sets a result or errors");
    let s_blocks = Blocks(vec![
        smat(&s.as_slice().unwrap()[..sv], dim),
        smat(&s.as_slice().unwrap()[sv..], dim),
    ]);
    finish_solution(program, config, s_blocks, fin)
}

// ---------------------------------------------------------------------
// Dual-feasibility diagnostic
// ---------------------------------------------------------------------

/// Spot check of dual feasibility for a solved scalar program: with
/// `v = -grad loss(yhat*)`, estimate `max_{||u||=1} |a u'(sum_i v_i x_i
/// x_i')u + b v'Xu + c v'1|` from the eigenvectors of the quadratic part
/// plus `samples` random unit directions. At an optimum this does not
/// exceed `beta` by more than the solver tolerance.
pub fn dual_feasibility_scalar(
    program: &ConvexProgram,
    solution: &ConvexSolution,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if program.arch != ProgramArch::Scalar {
        return Err(Error::InvalidInput(
            "dual feasibility check applies to the scalar program".to_string(),
        ));
    }
    let x = program
        .dense_rows()
        .ok_or_else(|| Error::Solve("missing design matrix".to_string()))?;
    let n = x.nrows();
    let d = x.ncols();
    let pred = program.predict(&solution.pairs)?;
    let v = Array1::from_iter(
        pred.column(0)
            .iter()
            .zip(program.targets.column(0).iter())
            .map(|(p, y)| -program.loss.deriv(p - y)),
    );
    let mut m = Array2::zeros((d, d));
    for i in 0..n {
        let xi = x.row(i);
        for r in 0..d {
            for c in 0..d {
                m[[r, c]] += program.act.a * v[i] * xi[r] * xi[c];
            }
        }
    }
    let q = x.t().dot(&v) * program.act.b;
    let s0 = program.act.c * v.sum();
    let g = |u: &Array1<f64>| -> f64 { (u.dot(&m.dot(u)) + q.dot(u) + s0).abs() };

    let mut best: f64 = 0.0;
    let eig = eigen_sym(&SymMatrix::symmetrize(m.clone())?)?;
    for j in 0..d {
        let u = eig.eigenvectors.column(j).to_owned();
        best = best.max(g(&u)).max(g(&(-u.clone())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let mut u =
            Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = u.iter().map(|t| t * t).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        u /= norm;
        best = best.max(g(&u));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::PolyActivation;
    use crate::model::Dataset;
    use crate::programs::lift_network;
    use ndarray::array;

    #[test]
    fn prox_squared_example() {
        let v = prox_loss(Loss::Squared, &array![0.0], &array![2.0], 1.0);
        assert!((v[0] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn prox_l1_fixed_point() {
        let y = array![1.5, -2.0, 0.0];
        let v = prox_loss(Loss::L1, &y, &y, 0.7);
        assert_eq!(v, y);
    }

    #[test]
    fn prox_huber_matches_numerical_minimization() {
        // golden-section bracketing, then bisection on the derivative of
        // the strongly convex 1-D objective to pin the argmin
        let oracle = |v: f64, y: f64, sigma: f64| -> f64 {
            let f = |z: f64| sigma * Loss::Huber.value(z - y) + 0.5 * (z - v) * (z - v);
            let mut lo = v.min(y) - 5.0;
            let mut hi = v.max(y) + 5.0;
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..40 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if f(m1) < f(m2) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let df = |z: f64| sigma * Loss::Huber.deriv(z - y) + (z - v);
            let mut lo = lo - 1.0;
            let mut hi = hi + 1.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if df(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v = rng.random_range(-4.0..4.0);
            let y = rng.random_range(-4.0..4.0);
            let sigma = rng.random_range(0.05..3.0);
            let ours = prox_loss_scalar(Loss::Huber, v, y, sigma);
            let reference = oracle(v, y, sigma);
            assert!(
                (ours - reference).abs() < 1e-8,
                "v={v} y={y} sigma={sigma}: {ours} vs {reference}"
            );
        }
    }

    #[test]
    fn woodbury_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((6, 3), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 0.1, Loss::Squared).unwrap();
        let frame = build_frame(&prog).unwrap();
        let nb = 2;
        let dim = 4;
        let mut x = Blocks::zeros(nb, dim);
        for b in x.0.iter_mut() {
            *b = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..1.0));
            *b = (&*b + &b.t()) * 0.5;
        }
        let px = frame.apply_p(&x, nb, dim);
        // (I + A*A) px should reproduce x
        let apx = frame.apply_a(&px);
        let mut back = frame.apply_at(&apx, nb, dim);
        back.add(&px);
        let mut diff = back;
        diff.sub(&x);
        assert!(diff.norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn trace_coupled_projection_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let dim = 5;
            let raw = Array2::from_shape_fn((dim, dim), |_| rng.random_range(-1.0..1.0));
            let sym = SymMatrix::symmetrize(raw).unwrap();
            let p = project_trace_coupled_psd(&sym).unwrap();
            let eig = eigen_sym(&p).unwrap();
            assert!(eig.eigenvalues[dim - 1] >= -1e-12);
            let resid = ghat_dot(p.as_array());
            assert!(resid.abs() <= 1e-9 * sym.frob_norm().max(1.0));
        }
    }

    #[test]
    fn closed_form_soft_threshold_instance() {
        // min (4z - 4)^2 + |z| has z* = 31/32
        let data = Dataset::new_scalar(array![[2.0]], array![4.0]).unwrap();
        let prog = ConvexProgram::build_quadratic(&data, 1.0, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        let z = sol.pairs[0].0.get(0, 0) - sol.pairs[0].1.get(0, 0);
        assert!((z - 31.0 / 32.0).abs() < 1e-5, "z = {z}");
        let pred = prog.predict(&sol.pairs).unwrap();
        assert!((pred[[0, 0]] - 3.875).abs() < 1e-4);
    }

    #[test]
    fn huge_beta_drives_blocks_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((8, 3), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 1e9, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        for (z, zp) in &sol.pairs {
            assert!(z.frob_norm() <= 1e-6, "Z norm {}", z.frob_norm());
            assert!(zp.frob_norm() <= 1e-6);
        }
        let zero_loss: f64 = data.targets.iter().map(|y| y * y).sum();
        assert!((sol.objective - zero_loss).abs() <= 1e-4 * zero_loss.max(1.0));
    }

    #[test]
    fn planted_network_is_an_upper_bound() {
        use crate::model::{forward, Arch, Inputs, NetworkWeights};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 50;
        let d = 6;
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let mut first = Vec::new();
        let mut second = Vec::new();
        for _ in 0..3 {
            let mut u =
                Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u /= norm;
            first.push(u);
            second.push(array![rng.random_range(-1.0..1.0f64)]);
        }
        let planted = NetworkWeights::new(Arch::DenseScalar, first, second, true).unwrap();
        let y = forward(&planted, &Inputs::Dense(&x), act)
            .unwrap()
            .column(0)
            .to_owned();
        let data = Dataset::new_scalar(x.clone(), y.clone()).unwrap();
        let beta = 0.1;
        let prog = ConvexProgram::build_scalar(&data, act, beta, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        let planted_obj = crate::model::objective(
            &planted,
            &Inputs::Dense(&x),
            &data.targets,
            act,
            Loss::Squared,
            &crate::model::RegSpec::L1SecondLayer(beta),
        )
        .unwrap();
        assert!(
            sol.objective <= planted_obj + 1e-6 * planted_obj.max(1.0),
            "convex {} vs planted {}",
            sol.objective,
            planted_obj
        );
        // the convex objective equals the program objective of the lifted
        // planted network or better
        let lifted = lift_network(&planted).unwrap();
        let lifted_obj = prog.objective_of(&lifted).unwrap();
        assert!(sol.objective <= lifted_obj + 1e-6 * lifted_obj.max(1.0));
    }

    #[test]
    fn objective_bookkeeping_matches_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((12, 4), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(12, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 0.05, Loss::Huber).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        let recomputed = prog.objective_of(&sol.pairs).unwrap();
        assert!((sol.objective - recomputed).abs() <= 1e-9 * recomputed.abs().max(1.0));
    }

    #[test]
    fn gram_path_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((20, 4), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(20, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 0.2, Loss::Squared).unwrap();
        let general = solve(&prog, &SolverConfig::default()).unwrap();
        let gram = solve(
            &prog,
            &SolverConfig {
                use_gram: true,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let rel = (general.objective - gram.objective).abs() / general.objective.abs().max(1.0);
        assert!(rel <= 1e-5, "objectives {} vs {}", general.objective, gram.objective);
    }

    #[test]
    fn objective_log_settles_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(15, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 0.1, Loss::Squared).unwrap();
        let sol = solve(
            &prog,
            &SolverConfig {
                log_every: 1,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        let objs: Vec<f64> = sol
            .iter_log
            .iter()
            .filter(|r| r.iteration > 100)
            .map(|r| r.objective)
            .collect();
        for w in objs.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-7 * w[0].abs().max(1.0),
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn solution_blocks_are_cone_feasible() {
        use crate::linalg::SymBlockMatrix;
        use crate::programs::{spectrahedron_member, SpectrahedronQuery};
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((10, 5), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(10, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let prog = ConvexProgram::build_scalar(&data, act, 0.1, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        for (z, zp) in &sol.pairs {
            for m in [z, zp] {
                let q = SpectrahedronQuery {
                    z: SymBlockMatrix::new(m.clone()).unwrap(),
                    t: f64::INFINITY,
                    tol: 1e-6,
                };
                assert!(spectrahedron_member(&q).unwrap());
            }
        }
    }

    #[test]
    fn dual_feasibility_within_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let data = Dataset::new_scalar(
            Array2::from_shape_fn((20, 4), |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(20, |_| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let beta = 0.1;
        let prog = ConvexProgram::build_scalar(&data, act, beta, Loss::Squared).unwrap();
        let sol = solve(&prog, &SolverConfig::default()).unwrap();
        let est = dual_feasibility_scalar(&prog, &sol, 10_000, 7).unwrap();
        assert!(est <= beta + 1e-4, "dual bound estimate {est} vs beta {beta}");
    }

    #[test]
    fn rejects_non_finite_data() {
        let data = Dataset::new_scalar(array![[f64::NAN]], array![1.0]).unwrap();
        let act = PolyActivation::quadratic();
        let prog = ConvexProgram::build_scalar(&data, act, 1.0, Loss::Squared).unwrap();
        assert!(matches!(
            solve(&prog, &SolverConfig::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let data = Dataset::new_scalar(array![[1.0]], array![1.0]).unwrap();
        let prog =
            ConvexProgram::build_scalar(&data, PolyActivation::quadratic(), 1.0, Loss::Squared)
                .unwrap();
        let cfg = SolverConfig {
            over_relaxation: 2.5,
            ..SolverConfig::default()
        };
        assert!(matches!(solve(&prog, &cfg), Err(Error::InvalidInput(_))));
    }
}
