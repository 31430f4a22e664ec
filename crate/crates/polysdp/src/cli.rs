//! Command-line front end: dataset I/O, synthetic data generation,
//! convex-vs-baseline comparisons, regularization sweeps and result
//! export. The binary in `main.rs` parses arguments and dispatches here.

use crate::activation::{fit_activation, relu, swish, PolyActivation};
use crate::baseline::{train_nonconvex, TrainConfig, TrainResult};
use crate::decomposition::{expand_solutions, network_from_solution, OrthoSource};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::{
    extract_patches, forward, objective, Arch, Dataset, Inputs, Loss, NetworkWeights, RegSpec,
};
use crate::programs::{ConvexProgram, ProgramArch};
use crate::solver::{solve_warm, ConvexSolution, SolverConfig};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

// ---------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------

/// Distribution of the synthetic data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Elementwise fourth power of i.i.d. standard normals (nonnegative,
    /// heavy-tailed).
    GaussPow4,
}

/// Generate a planted-teacher dataset: `X` from the chosen transform,
/// `y` the forward output of a hidden unit-norm network with `m_plant`
/// neurons and standard-normal second-layer weights. Returns the data
/// together with the planted weights.
pub fn gen_planted(
    n: usize,
    d: usize,
    m_plant: usize,
    transform: Transform,
    act: PolyActivation,
    seed: u64,
) -> Result<(Dataset, NetworkWeights)> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("need n >= 1 and d >= 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
    if transform == Transform::GaussPow4 {
        x.mapv_inplace(|v| v.powi(4));
    }
    let mut first = Vec::with_capacity(m_plant);
    let mut second = Vec::with_capacity(m_plant);
    for _ in 0..m_plant {
        let mut u =
            Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.mapv_inplace(|v| v / norm);
        } else {
            u[0] = 1.0;
        }
        first.push(u);
        second.push(ndarray::array![
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        ]);
    }
    let planted = NetworkWeights::new(Arch::DenseScalar, first, second, true)?;
    let y = forward(&planted, &Inputs::Dense(&x), act)?.column(0).to_owned();
    Ok((Dataset::new_scalar(x, y)?, planted))
}

// ---------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------

/// One-hot encoding convention for integer class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OneHot {
    /// Active entry 1, others 0.
    ZeroOne,
    /// Active entry +1, others -1.
    PlusMinus,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    /// Number of trailing target columns.
    pub target_cols: usize,
    /// Standardize each feature to mean 0 and unit variance; constant
    /// columns become 0.
    pub normalize: bool,
    /// One-hot encode a single label column into a target matrix.
    pub one_hot: Option<OneHot>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            target_cols: 1,
            normalize: false,
            one_hot: None,
        }
    }
}

/// Load a numeric CSV with the last column(s) as targets. An optional
/// header row is detected by failing to parse as numbers.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, opts)
}

pub fn parse_csv(text: &str, opts: &CsvOptions) -> Result<Dataset> {
    if opts.target_cols == 0 {
        return Err(Error::InvalidInput("need at least one target column".to_string()));
    }
    if opts.one_hot.is_some() && opts.target_cols != 1 {
        return Err(Error::InvalidInput(
            "one-hot encoding expects a single label column".to_string(),
        ));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    let mut first_data_line = true;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').map(|c| c.trim()).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        match parsed {
            Ok(vals) => {
                if rows.is_empty() {
                    width = vals.len();
                } else if vals.len() != width {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected {width} cells, found {}", vals.len()),
                    });
                }
                rows.push(vals);
                first_data_line = false;
            }
            Err(e) => {
                if first_data_line {
                    // header row
                    first_data_line = false;
                    continue;
                }
                let bad = cells
                    .iter()
                    .find(|c| c.parse::<f64>().is_err())
                    .copied()
                    .unwrap_or("");
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-numeric cell '{bad}': {e}"),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".to_string(),
        });
    }
    if width <= opts.target_cols {
        return Err(Error::InvalidInput(format!(
            "{width} columns cannot hold {} target column(s) plus features",
            opts.target_cols
        )));
    }
    let n = rows.len();
    let d = width - opts.target_cols;
    let mut x = Array2::zeros((n, d));
    let mut raw_targets = Array2::zeros((n, opts.target_cols));
    for (i, row) in rows.iter().enumerate() {
        for j in 0..d {
            x[[i, j]] = row[j];
        }
        for j in 0..opts.target_cols {
            raw_targets[[i, j]] = row[d + j];
        }
    }
    if opts.normalize {
        for j in 0..d {
            let mut col = x.column_mut(j);
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            if std <= 1e-12 {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - mean) / std);
            }
        }
    }
    let targets = match opts.one_hot {
        None => raw_targets,
        Some(encoding) => {
            let mut labels: Vec<f64> = raw_targets.column(0).to_vec();
            labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            labels.dedup();
            let classes = labels.len();
            let (active, inactive) = match encoding {
                OneHot::ZeroOne => (1.0, 0.0),
                OneHot::PlusMinus => (1.0, -1.0),
            };
            let mut t = Array2::from_elem((n, classes), inactive);
            for i in 0..n {
                let v = raw_targets[[i, 0]];
                let k = labels.iter().position(|l| *l == v).unwrap();
                t[[i, k]] = active;
            }
            t
        }
    };
    Dataset::new(x, targets)
}

/// Write a dataset as a plain numeric CSV (features then target columns).
pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = String::new();
    for i in 0..data.n() {
        let mut cells: Vec<String> = data.x.row(i).iter().map(|v| format!("{v}")).collect();
        cells.extend(data.targets.row(i).iter().map(|v| format!("{v}")));
        let _ = writeln!(out, "{}", cells.join(","));
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Architecture selection and program assembly
// ---------------------------------------------------------------------

/// Architecture requested on the command line, with the patch geometry
/// needed to build convolutional programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArchSpec {
    Scalar,
    Quadratic,
    Vector,
    Conv {
        filter: usize,
        stride: usize,
        padding: usize,
    },
    /// `pool = 0` selects global average pooling (`P = K`).
    Pool {
        filter: usize,
        stride: usize,
        padding: usize,
        pool: usize,
    },
}

impl ArchSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ArchSpec::Scalar => "scalar",
            ArchSpec::Quadratic => "quadratic",
            ArchSpec::Vector => "vector",
            ArchSpec::Conv { .. } => "conv",
            ArchSpec::Pool { .. } => "pool",
        }
    }
}

/// A program together with the inputs needed to evaluate reconstructed
/// networks on the same data.
pub struct PreparedProblem {
    pub program: ConvexProgram,
    pub patches: Option<Vec<Array2<f64>>>,
    pub targets: Array2<f64>,
}

impl PreparedProblem {
    pub fn inputs<'a>(&'a self, data: &'a Dataset) -> Inputs<'a> {
        match &self.patches {
            Some(p) => Inputs::Patches(p),
            None => Inputs::Dense(&data.x),
        }
    }
}

/// Build the convex program for the requested architecture.
pub fn prepare_problem(
    data: &Dataset,
    spec: ArchSpec,
    act: PolyActivation,
    beta: f64,
    loss: Loss,
) -> Result<PreparedProblem> {
    let targets = data.targets.clone();
    match spec {
        ArchSpec::Scalar => Ok(PreparedProblem {
            program: ConvexProgram::build_scalar(data, act, beta, loss)?,
            patches: None,
            targets,
        }),
        ArchSpec::Quadratic => Ok(PreparedProblem {
            program: ConvexProgram::build_quadratic(data, beta, loss)?,
            patches: None,
            targets,
        }),
        ArchSpec::Vector => Ok(PreparedProblem {
            program: ConvexProgram::build_vector(data, act, beta, loss)?,
            patches: None,
            targets,
        }),
        ArchSpec::Conv {
            filter,
            stride,
            padding,
        } => {
            let patches = extract_patches(data, filter, stride, padding)?;
            let y = data.y()?.to_owned();
            let program = ConvexProgram::build_conv(&patches, &y, act, beta, loss)?;
            Ok(PreparedProblem {
                program,
                patches: Some(patches),
                targets,
            })
        }
        ArchSpec::Pool {
            filter,
            stride,
            padding,
            pool,
        } => {
            let patches = extract_patches(data, filter, stride, padding)?;
            let y = data.y()?.to_owned();
            let p = if pool == 0 { patches.len() } else { pool };
            let program = ConvexProgram::build_pool(&patches, &y, act, beta, loss, p)?;
            Ok(PreparedProblem {
                program,
                patches: Some(patches),
                targets,
            })
        }
    }
}

// ---------------------------------------------------------------------
// Comparison runs and reports
// ---------------------------------------------------------------------

/// Report of one convex-vs-baseline comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ReportConfig,
    pub convex: ConvexReport,
    /// Objective of the decomposed network under the matching non-convex
    /// regularization.
    pub reconstructed_objective: f64,
    /// `|convex objective - reconstructed objective|`; always reported.
    pub duality_gap: f64,
    pub gap_tolerance: f64,
    pub gap_ok: bool,
    pub convex_accuracy: Option<f64>,
    pub baselines: Vec<BaselineReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportConfig {
    pub arch: String,
    pub n: usize,
    pub d: usize,
    pub out_dim: usize,
    pub act: PolyActivation,
    pub beta: f64,
    pub loss: String,
    pub baseline_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexReport {
    pub objective: f64,
    pub m_star: usize,
    pub ranks: Vec<(usize, usize)>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineReport {
    pub seed: u64,
    pub final_objective: f64,
    pub epochs: usize,
    pub accuracy: Option<f64>,
    pub wall_time_s: f64,
    pub diverged: bool,
}

pub struct CompareOutput {
    pub report: ExperimentReport,
    pub solution: ConvexSolution,
    pub weights: NetworkWeights,
    pub baseline_runs: Vec<Option<TrainResult>>,
}

/// Sign/argmax classification accuracy: binary labels are +-1 with
/// prediction sign (0 counts as +1); vector targets use row argmax.
pub fn classification_accuracy(pred: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let n = pred.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    if pred.ncols() == 1 {
        for i in 0..n {
            let s = if pred[[i, 0]] >= 0.0 { 1.0 } else { -1.0 };
            if s == targets[[i, 0]] {
                hits += 1;
            }
        }
    } else {
        for i in 0..n {
            let pa = argmax(pred.row(i));
            let ta = argmax(targets.row(i));
            if pa == ta {
                hits += 1;
            }
        }
    }
    hits as f64 / n as f64
}

fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// The regularization under which a decomposed network reproduces its
/// program's objective.
pub fn matching_regularization(arch: ProgramArch, beta: f64) -> RegSpec {
    let _ = arch;
    RegSpec::L1SecondLayer(beta)
}

/// What a comparison run should solve and against which baselines.
#[derive(Debug, Clone)]
pub struct CompareSpec {
    pub arch: ArchSpec,
    pub act: PolyActivation,
    pub beta: f64,
    pub loss: Loss,
    pub baseline_seeds: Vec<u64>,
    /// Compute classification accuracies (labels +-1 or one-hot rows).
    pub classify: bool,
    /// Override of `max(1e-5 |objective|, 10 * residual)`.
    pub gap_tol_override: Option<f64>,
}

/// Solve the convex program, reconstruct weights, run each baseline
/// seed, and assemble the report.
pub fn run_compare(
    data: &Dataset,
    spec: &CompareSpec,
    solver_cfg: &SolverConfig,
    baseline_cfg: &TrainConfig,
) -> Result<CompareOutput> {
    let CompareSpec {
        arch: arch_spec,
        act,
        beta,
        loss,
        ref baseline_seeds,
        classify,
        gap_tol_override,
    } = *spec;
    let prepared = prepare_problem(data, arch_spec, act, beta, loss)?;
    // the quadratic program fixes its own activation regardless of the
    // requested one; evaluation must match the program
    let eval_act = prepared.program.act;
    let t0 = Instant::now();
    let solution = solve_warm(&prepared.program, solver_cfg, None)?;
    let solve_time = t0.elapsed().as_secs_f64();
    let weights = network_from_solution(&prepared.program, &solution, 1e-6)?;

    let inputs = prepared.inputs(data);
    let reg = matching_regularization(prepared.program.arch, beta);
    let reconstructed_objective =
        objective(&weights, &inputs, &prepared.targets, eval_act, loss, &reg)?;
    let duality_gap = (solution.objective - reconstructed_objective).abs();
    let gap_tolerance = gap_tol_override.unwrap_or_else(|| {
        (1e-5 * solution.objective.abs())
            .max(10.0 * solution.primal_residual.max(solution.dual_residual))
    });
    let gap_ok = duality_gap <= gap_tolerance;

    let convex_accuracy = if classify {
        let pred = prepared.program.predict(&solution.pairs)?;
        Some(classification_accuracy(&pred, &prepared.targets))
    } else {
        None
    };

    let m_baseline = solution.m_star.max(1);
    let net_arch = prepared.program.arch.network_arch();
    let mut baselines = Vec::new();
    let mut baseline_runs = Vec::new();
    for &seed in baseline_seeds {
        let cfg = TrainConfig {
            seed,
            reg,
            loss,
            ..baseline_cfg.clone()
        };
        let tb = Instant::now();
        match train_nonconvex(net_arch, &inputs, &prepared.targets, eval_act, m_baseline, &cfg) {
            Ok(res) => {
                let accuracy = if classify {
                    let pred = forward(&res.weights, &inputs, eval_act)?;
                    Some(classification_accuracy(&pred, &prepared.targets))
                } else {
                    None
                };
                baselines.push(BaselineReport {
                    seed,
                    final_objective: res
                        .trajectory
                        .last()
                        .map(|t| t.objective)
                        .unwrap_or(f64::NAN),
                    epochs: cfg.epochs,
                    accuracy,
                    wall_time_s: tb.elapsed().as_secs_f64(),
                    diverged: false,
                });
                baseline_runs.push(Some(res));
            }
            Err(Error::Divergence { epoch, objective }) => {
                baselines.push(BaselineReport {
                    seed,
                    final_objective: objective,
                    epochs: epoch,
                    accuracy: None,
                    wall_time_s: tb.elapsed().as_secs_f64(),
                    diverged: true,
                });
                baseline_runs.push(None);
            }
            Err(e) => return Err(e),
        }
    }

    let report = ExperimentReport {
        config: ReportConfig {
            arch: arch_spec.label().to_string(),
            n: data.n(),
            d: data.d(),
            out_dim: data.out_dim(),
            act,
            beta,
            loss: format!("{loss:?}").to_lowercase(),
            baseline_seeds: baseline_seeds.to_vec(),
        },
        convex: ConvexReport {
            objective: solution.objective,
            m_star: solution.m_star,
            ranks: solution.ranks.clone(),
            iterations: solution.iterations,
            primal_residual: solution.primal_residual,
            dual_residual: solution.dual_residual,
            converged: solution.converged,
            wall_time_s: solve_time,
        },
        reconstructed_objective,
        duality_gap,
        gap_tolerance,
        gap_ok,
        convex_accuracy,
        baselines,
    };
    Ok(CompareOutput {
        report,
        solution,
        weights,
        baseline_runs,
    })
}

/// One point of a regularization sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub beta: f64,
    pub objective: f64,
    pub m_star: usize,
    pub iterations: usize,
}

/// Solve the same data over a list of `beta` values, warm-starting each
/// solve from the previous solution. The `m*` trend is exported for
/// inspection, not asserted.
pub fn sweep_beta(
    data: &Dataset,
    spec: ArchSpec,
    act: PolyActivation,
    betas: &[f64],
    loss: Loss,
    solver_cfg: &SolverConfig,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(betas.len());
    let mut prev: Option<ConvexSolution> = None;
    for &beta in betas {
        let prepared = prepare_problem(data, spec, act, beta, loss)?;
        let sol = solve_warm(&prepared.program, solver_cfg, prev.as_ref())?;
        out.push(SweepPoint {
            beta,
            objective: sol.objective,
            m_star: sol.m_star,
            iterations: sol.iterations,
        });
        prev = Some(sol);
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------

/// Serialized convex solution (matrices stored as row lists; JSON floats
/// round-trip exactly through the shortest-representation encoder).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub arch: ProgramArch,
    pub block_dim: usize,
    pub beta: f64,
    pub act: PolyActivation,
    pub objective: f64,
    pub m_star: usize,
    pub ranks: Vec<(usize, usize)>,
    pub pairs: Vec<SolutionPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionPair {
    pub z: Vec<Vec<f64>>,
    pub z_prime: Vec<Vec<f64>>,
}

fn matrix_rows(m: &SymMatrix) -> Vec<Vec<f64>> {
    m.as_array()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<SymMatrix> {
    let n = rows.len();
    let mut a = Array2::zeros((n, n));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::Shape("solution matrix is not square".to_string()));
        }
        for (j, v) in r.iter().enumerate() {
            a[[i, j]] = *v;
        }
    }
    SymMatrix::symmetrize(a)
}

impl SolutionFile {
    pub fn from_solution(program: &ConvexProgram, sol: &ConvexSolution) -> Self {
        Self {
            arch: program.arch,
            block_dim: program.block_dim,
            beta: program.beta,
            act: program.act,
            objective: sol.objective,
            m_star: sol.m_star,
            ranks: sol.ranks.clone(),
            pairs: sol
                .pairs
                .iter()
                .map(|(z, zp)| SolutionPair {
                    z: matrix_rows(z),
                    z_prime: matrix_rows(zp),
                })
                .collect(),
        }
    }

    pub fn pairs_matrices(&self) -> Result<Vec<(SymMatrix, SymMatrix)>> {
        self.pairs
            .iter()
            .map(|p| Ok((rows_matrix(&p.z)?, rows_matrix(&p.z_prime)?)))
            .collect()
    }
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Write a training trajectory as `epoch,wall_time_s,objective` rows.
pub fn write_trajectory_csv(path: &Path, result: &TrainResult) -> Result<()> {
    let mut out = String::from("epoch,wall_time_s,objective\n");
    for p in &result.trajectory {
        let _ = writeln!(out, "{},{},{}", p.epoch, p.wall_time_s, p.objective);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write the solver iteration log as CSV.
pub fn write_iterlog_csv(path: &Path, sol: &ConvexSolution) -> Result<()> {
    let mut out = String::from("iteration,objective,primal_residual,dual_residual\n");
    for r in &sol.iter_log {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iteration, r.objective, r.primal_residual, r.dual_residual
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write sweep points as `beta,objective,m_star,iterations` rows.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut out = String::from("beta,objective,m_star,iterations\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.beta, p.objective, p.m_star, p.iterations);
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------
// Config-file expansion
// ---------------------------------------------------------------------

/// Expand `--config FILE` into long flags: each non-comment `key = value`
/// line becomes `--key value...` (values split on whitespace) appended to
/// the argument list unless the flag is already present. Booleans use
/// `true`/`false`, where `true` appends the bare flag.
pub fn expand_config_args(args: Vec<String>) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let mut config_path: Option<String> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config_path = Some(it.next().ok_or_else(|| Error::InvalidInput(
                "--config needs a file path".to_string(),
            ))?);
        } else {
            out.push(a);
        }
    }
    let Some(path) = config_path else {
        return Ok(out);
    };
    let text = std::fs::read_to_string(&path)?;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty key".to_string(),
            });
        }
        let flag = format!("--{key}");
        if out.contains(&flag) {
            continue; // explicit flags win
        }
        match value {
            "true" => out.push(flag),
            "false" => {}
            _ => {
                out.push(flag);
                for piece in value.split_whitespace() {
                    out.push(piece.to_string());
                }
            }
        }
    }
    Ok(out)
}

/// Named activation targets accepted by `fit-activation`.
pub fn fit_named_target(name: &str, lo: f64, hi: f64, points: usize) -> Result<PolyActivation> {
    match name {
        "relu" => fit_activation(relu, lo, hi, points),
        "swish" => fit_activation(swish, lo, hi, points),
        other => Err(Error::InvalidInput(format!(
            "unknown target '{other}' (expected relu or swish)"
        ))),
    }
}

/// Expansion entry used by the `expand` subcommand: rebuild `Z` from a
/// saved quadratic solution and emit an `m`-neuron network.
pub fn expand_from_solution_file(file: &SolutionFile, m: usize, source: OrthoSource) -> Result<NetworkWeights> {
    if file.arch != ProgramArch::Quadratic {
        return Err(Error::InvalidInput(
            "expansion applies to quadratic-activation solutions".to_string(),
        ));
    }
    let pairs = file.pairs_matrices()?;
    let (z, zp) = &pairs[0];
    let diff = SymMatrix::symmetrize(z.as_array() - zp.as_array())?;
    expand_solutions(&diff, m, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_zero_width_gives_zero_targets() {
        let act = PolyActivation::new(0.09, 0.5, 0.47).unwrap();
        let (data, planted) = gen_planted(10, 3, 0, Transform::Gaussian, act, 1).unwrap();
        assert_eq!(planted.m(), 0);
        assert!(data.targets.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fourth_power_transform_is_nonnegative() {
        let act = PolyActivation::quadratic();
        let (data, _) = gen_planted(20, 5, 2, Transform::GaussPow4, act, 7).unwrap();
        assert!(data.x.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn planted_generation_is_deterministic() {
        let act = PolyActivation::quadratic();
        let (a, _) = gen_planted(5, 3, 2, Transform::Gaussian, act, 42).unwrap();
        let (b, _) = gen_planted(5, 3, 2, Transform::Gaussian, act, 42).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn csv_basics() {
        let data = parse_csv("1.0,2.0,3.0\n4.0,5.0,6.0\n", &CsvOptions::default()).unwrap();
        assert_eq!(data.n(), 2);
        assert_eq!(data.d(), 2);
        assert_eq!(data.targets[[1, 0]], 6.0);
    }

    #[test]
    fn csv_header_detected_and_skipped() {
        let data = parse_csv("a,b,label\n1,2,3\n", &CsvOptions::default()).unwrap();
        assert_eq!(data.n(), 1);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = parse_csv("1,2\n3,oops\n", &CsvOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        let ragged = parse_csv("1,2,3\n4,5\n", &CsvOptions::default()).unwrap_err();
        match ragged {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_normalization_zeroes_constant_columns() {
        let opts = CsvOptions {
            normalize: true,
            ..CsvOptions::default()
        };
        let data = parse_csv("5.0,1.0,0.0\n5.0,3.0,1.0\n5.0,5.0,0.0\n", &opts).unwrap();
        assert!(data.x.column(0).iter().all(|v| *v == 0.0));
        let mean: f64 = data.x.column(1).sum() / 3.0;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn csv_one_hot_has_one_active_entry_per_row() {
        let opts = CsvOptions {
            target_cols: 1,
            normalize: false,
            one_hot: Some(OneHot::ZeroOne),
        };
        let data = parse_csv("0.1,0\n0.2,1\n0.3,2\n0.4,1\n", &opts).unwrap();
        assert_eq!(data.out_dim(), 3);
        for i in 0..4 {
            let ones = data.targets.row(i).iter().filter(|v| **v == 1.0).count();
            assert_eq!(ones, 1);
        }
        assert_eq!(data.targets[[2, 2]], 1.0);
    }

    #[test]
    fn accuracy_conventions() {
        let pred = ndarray::array![[0.0], [-0.2], [0.7]];
        let y = ndarray::array![[1.0], [-1.0], [-1.0]];
        // sign(0) counts as +1
        let acc = classification_accuracy(&pred, &y);
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);

        let predm = ndarray::array![[0.1, 0.9], [0.8, 0.2]];
        let ym = ndarray::array![[0.0, 1.0], [0.0, 1.0]];
        assert!((classification_accuracy(&predm, &ym) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_expansion_appends_missing_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "beta = 0.5\nnormalize = true\nloss = huber\n").unwrap();
        let args = vec![
            "polysdp".to_string(),
            "train-convex".to_string(),
            "--config".to_string(),
            cfg.to_string_lossy().to_string(),
            "--beta".to_string(),
            "1.0".to_string(),
        ];
        let out = expand_config_args(args).unwrap();
        // explicit --beta wins; config adds the rest
        assert_eq!(out.iter().filter(|a| *a == "--beta").count(), 1);
        assert!(out.contains(&"--normalize".to_string()));
        let pos = out.iter().position(|a| a == "--loss").unwrap();
        assert_eq!(out[pos + 1], "huber");
    }
}
