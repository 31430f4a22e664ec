use clap::{Args, Parser, Subcommand};
use polysdp::cli::{
    self, ArchSpec, CompareOutput, CsvOptions, OneHot, SolutionFile, Transform,
};
use polysdp::decomposition::{network_from_solution, weights_from_pairs, OrthoSource};
use polysdp::model::{Dataset, ImageShape, Loss, NetworkWeights, RegSpec};
use polysdp::prelude::*;
use polysdp::solver::SolverConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Globally optimal training of two-layer polynomial-activation networks
/// via semidefinite programming, with a gradient baseline for comparison.
///
/// Every subcommand also accepts `--config FILE` with flat `key = value`
/// lines providing defaults for any long flag not given explicitly.
#[derive(Parser)]
#[command(name = "polysdp", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a degree-two polynomial to a named activation by least squares.
    FitActivation(FitActivationArgs),
    /// Generate a planted-teacher dataset as CSV.
    GenData(GenDataArgs),
    /// Solve the convex training program and decompose it into weights.
    TrainConvex(TrainConvexArgs),
    /// Train the non-convex baseline with momentum (S)GD.
    TrainBaseline(TrainBaselineArgs),
    /// Decompose a saved convex solution into network weights.
    Decompose(DecomposeArgs),
    /// Expand a quadratic-activation solution into a wider network.
    Expand(ExpandArgs),
    /// Solve convex and baseline problems on the same data and report.
    Compare(CompareArgs),
    /// Solve over a list of regularization weights with warm starts.
    SweepBeta(SweepBetaArgs),
}

#[derive(Args)]
struct FitActivationArgs {
    /// Target nonlinearity: relu or swish.
    #[arg(long)]
    target: String,
    /// Fit interval endpoints L U.
    #[arg(long, num_args = 2, allow_hyphen_values = true, default_values_t = [-5.0, 5.0])]
    range: Vec<f64>,
    /// Number of grid points (endpoints included).
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Optional JSON output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Planted teacher width.
    #[arg(long, default_value_t = 5)]
    m_plant: usize,
    /// Data distribution: gaussian or gauss-pow4.
    #[arg(long, default_value = "gaussian")]
    transform: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Activation coefficients a b c of the teacher.
    #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [0.09, 0.5, 0.47])]
    act: Vec<f64>,
    /// Output CSV path (features then the target column).
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON path for the planted weights.
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV (last column(s) are targets; header row optional).
    #[arg(long)]
    data: PathBuf,
    /// Number of trailing target columns.
    #[arg(long, default_value_t = 1)]
    target_cols: usize,
    /// Standardize features to zero mean and unit variance.
    #[arg(long, default_value_t = false)]
    normalize: bool,
    /// One-hot encode a single label column: zero-one or plus-minus.
    #[arg(long)]
    one_hot: Option<String>,
    /// Image geometry H W C for convolutional architectures.
    #[arg(long, num_args = 3)]
    image: Option<Vec<usize>>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let one_hot = match self.one_hot.as_deref() {
            None | Some("none") => None,
            Some("zero-one") => Some(OneHot::ZeroOne),
            Some("plus-minus") => Some(OneHot::PlusMinus),
            Some(other) => {
                return Err(Error::InvalidInput(format!(
                    "unknown one-hot mode '{other}'"
                )))
            }
        };
        let opts = CsvOptions {
            target_cols: self.target_cols,
            normalize: self.normalize,
            one_hot,
        };
        let mut data = cli::load_csv(&self.data, &opts)?;
        if let Some(hwc) = &self.image {
            data = data.with_image_shape(ImageShape {
                height: hwc[0],
                width: hwc[1],
                channels: hwc[2],
            })?;
        }
        Ok(data)
    }
}

#[derive(Args, Clone)]
struct ArchArgs {
    /// Architecture: scalar, quadratic, vector, conv, pool.
    #[arg(long, default_value = "scalar")]
    arch: String,
    /// Filter side for conv/pool.
    #[arg(long, default_value_t = 3)]
    filter: usize,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    padding: usize,
    /// Pool size for the pool architecture (0 = global average pooling).
    #[arg(long, default_value_t = 0)]
    pool: usize,
}

impl ArchArgs {
    fn spec(&self) -> Result<ArchSpec> {
        match self.arch.as_str() {
            "scalar" => Ok(ArchSpec::Scalar),
            "quadratic" => Ok(ArchSpec::Quadratic),
            "vector" => Ok(ArchSpec::Vector),
            "conv" => Ok(ArchSpec::Conv {
                filter: self.filter,
                stride: self.stride,
                padding: self.padding,
            }),
            "pool" => Ok(ArchSpec::Pool {
                filter: self.filter,
                stride: self.stride,
                padding: self.padding,
                pool: self.pool,
            }),
            other => Err(Error::InvalidInput(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    eps_abs: f64,
    #[arg(long, default_value_t = 1e-6)]
    eps_rel: f64,
    #[arg(long, default_value_t = 1.0)]
    over_relaxation: f64,
    /// Disable the adaptive penalty schedule.
    #[arg(long, default_value_t = false)]
    no_adaptive_rho: bool,
    #[arg(long, default_value_t = 1e-8)]
    rank_tol: f64,
    /// Use the precomputed Gram form (scalar architecture, squared loss).
    #[arg(long, default_value_t = false)]
    use_gram: bool,
    /// Write an iteration log (iteration, objective, residuals) here.
    #[arg(long)]
    iterlog: Option<PathBuf>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            rho: self.rho,
            max_iter: self.max_iter,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            over_relaxation: self.over_relaxation,
            adaptive_rho: !self.no_adaptive_rho,
            rank_tol: self.rank_tol,
            use_gram: self.use_gram,
            log_every: if self.iterlog.is_some() { 10 } else { 0 },
        }
    }
}

fn parse_act(act: &[f64]) -> Result<PolyActivation> {
    PolyActivation::new(act[0], act[1], act[2])
}

fn parse_loss(name: &str) -> Result<Loss> {
    match name {
        "squared" => Ok(Loss::Squared),
        "huber" => Ok(Loss::Huber),
        "l1" => Ok(Loss::L1),
        other => Err(Error::InvalidInput(format!("unknown loss '{other}'"))),
    }
}

#[derive(Args)]
struct TrainConvexArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [0.09, 0.5, 0.47])]
    act: Vec<f64>,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value = "squared")]
    loss: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Decomposition feasibility tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    solution_out: Option<PathBuf>,
    #[arg(long)]
    weights_out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Keep exit code 0 even when the duality gap exceeds tolerance.
    #[arg(long, default_value_t = false)]
    allow_gap: bool,
    /// Override the duality-gap tolerance.
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Compute classification accuracy (labels +-1 or one-hot rows).
    #[arg(long, default_value_t = false)]
    classify: bool,
}

#[derive(Args)]
struct TrainBaselineArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [0.09, 0.5, 0.47])]
    act: Vec<f64>,
    /// Network width.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    /// 0 = full batch.
    #[arg(long, default_value_t = 0)]
    batch_size: usize,
    /// Comma-separated restart seeds.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Regularizer: l1, weight-decay, cubic.
    #[arg(long, default_value = "l1")]
    reg: String,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    #[arg(long, default_value = "squared")]
    loss: String,
    /// Trajectory CSV path prefix (one file per seed).
    #[arg(long)]
    traj_out: Option<PathBuf>,
    /// JSON path for the best-seed weights.
    #[arg(long)]
    weights_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Saved solution JSON from train-convex.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpandArgs {
    /// Saved quadratic-activation solution JSON.
    #[arg(long)]
    solution: PathBuf,
    /// Target neuron count (even, at least 2d).
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the identity matrix (requires m = 2d) instead of a Haar draw.
    #[arg(long, default_value_t = false)]
    identity: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [0.09, 0.5, 0.47])]
    act: Vec<f64>,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value = "squared")]
    loss: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    init_scale: f64,
    #[arg(long, default_value = "0,1,2", value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = false)]
    classify: bool,
    #[arg(long, default_value_t = false)]
    allow_gap: bool,
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Output directory for report.json, weights.json, iterlog.csv and
    /// trajectory_<seed>.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SweepBetaArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    arch: ArchArgs,
    #[arg(long, num_args = 3, allow_hyphen_values = true, default_values_t = [0.09, 0.5, 0.47])]
    act: Vec<f64>,
    /// Comma-separated regularization weights.
    #[arg(long, value_delimiter = ',')]
    betas: Vec<f64>,
    #[arg(long, default_value = "squared")]
    loss: String,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let raw: Vec<String> = std::env::args().collect();
    let expanded = match cli::expand_config_args(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let parsed = match Cli::try_parse_from(expanded) {
        Ok(p) => p,
        Err(e) => {
            // clap reports usage problems with exit code 2, which matches
            // the validation-error convention
            e.exit()
        }
    };
    match dispatch(parsed) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli_args: Cli) -> Result<u8> {
    match cli_args.command {
        Command::FitActivation(a) => {
            let act = cli::fit_named_target(&a.target, a.range[0], a.range[1], a.points)?;
            println!("a = {}\nb = {}\nc = {}", act.a, act.b, act.c);
            if let Some(path) = a.out {
                cli::save_json(&path, &act)?;
            }
            Ok(0)
        }
        Command::GenData(a) => {
            let transform = match a.transform.as_str() {
                "gaussian" => Transform::Gaussian,
                "gauss-pow4" => Transform::GaussPow4,
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown transform '{other}'"
                    )))
                }
            };
            let act = parse_act(&a.act)?;
            let (data, planted) = cli::gen_planted(a.n, a.d, a.m_plant, transform, act, a.seed)?;
            cli::write_csv(&a.out, &data)?;
            if let Some(path) = a.weights_out {
                cli::save_json(&path, &planted)?;
            }
            println!("wrote {} samples of dimension {} to {}", a.n, a.d, a.out.display());
            Ok(0)
        }
        Command::TrainConvex(a) => {
            let data = a.data.load()?;
            let spec = a.arch.spec()?;
            let act = parse_act(&a.act)?;
            let loss = parse_loss(&a.loss)?;
            let cfg = a.solver.config();
            let prepared = cli::prepare_problem(&data, spec, act, a.beta, loss)?;
            let eval_act = prepared.program.act;
            let sol = solve(&prepared.program, &cfg)?;
            if let Some(path) = &a.solver.iterlog {
                cli::write_iterlog_csv(path, &sol)?;
            }
            let weights = network_from_solution(&prepared.program, &sol, a.tol)?;
            let inputs = prepared.inputs(&data);
            let rec = polysdp::model::objective(
                &weights,
                &inputs,
                &prepared.targets,
                eval_act,
                loss,
                &RegSpec::L1SecondLayer(a.beta),
            )?;
            let gap = (sol.objective - rec).abs();
            let gap_tol = a.gap_tol.unwrap_or_else(|| {
                (1e-5 * sol.objective.abs())
                    .max(10.0 * sol.primal_residual.max(sol.dual_residual))
            });
            println!(
                "objective {:.9e}  m* {}  iterations {}  gap {:.3e}",
                sol.objective, sol.m_star, sol.iterations, gap
            );
            if let Some(path) = a.solution_out {
                cli::save_json(&path, &SolutionFile::from_solution(&prepared.program, &sol))?;
            }
            if let Some(path) = a.weights_out {
                cli::save_json(&path, &weights)?;
            }
            if let Some(path) = a.report {
                let compare_spec = cli::CompareSpec {
                    arch: spec,
                    act,
                    beta: a.beta,
                    loss,
                    baseline_seeds: Vec::new(),
                    classify: a.classify,
                    gap_tol_override: a.gap_tol,
                };
                let out = cli::run_compare(
                    &data,
                    &compare_spec,
                    &cfg,
                    &polysdp::baseline::TrainConfig::default(),
                )?;
                cli::save_json(&path, &out.report)?;
            }
            if gap > gap_tol && !a.allow_gap {
                eprintln!("duality gap {gap:e} exceeds tolerance {gap_tol:e}");
                return Ok(4);
            }
            Ok(0)
        }
        Command::TrainBaseline(a) => {
            let data = a.data.load()?;
            let spec = a.arch.spec()?;
            let act = parse_act(&a.act)?;
            let loss = parse_loss(&a.loss)?;
            let reg = match a.reg.as_str() {
                "l1" => RegSpec::L1SecondLayer(a.beta),
                "weight-decay" => RegSpec::WeightDecay(a.beta),
                "cubic" => RegSpec::Cubic(a.beta),
                other => {
                    return Err(Error::InvalidInput(format!("unknown regularizer '{other}'")))
                }
            };
            let prepared = cli::prepare_problem(&data, spec, act, a.beta.max(1e-300), loss)?;
            let inputs = prepared.inputs(&data);
            let net_arch = prepared.program.arch.network_arch();
            let mut best: Option<(f64, NetworkWeights)> = None;
            for &seed in &a.seeds {
                let cfg = polysdp::baseline::TrainConfig {
                    learning_rate: a.lr,
                    momentum: a.momentum,
                    epochs: a.epochs,
                    batch_size: a.batch_size,
                    seed,
                    reg,
                    loss,
                    init_scale: a.init_scale,
                };
                let res = train_nonconvex(net_arch, &inputs, &prepared.targets, act, a.m, &cfg)?;
                let final_obj = res.trajectory.last().map(|t| t.objective).unwrap_or(f64::NAN);
                println!("seed {seed}: final objective {final_obj:.9e}");
                if let Some(prefix) = &a.traj_out {
                    let path = prefix.with_file_name(format!(
                        "{}_{}.csv",
                        prefix
                            .file_name()
                            .map(|s| s.to_string_lossy().to_string())
                            .unwrap_or_else(|| "trajectory".to_string()),
                        seed
                    ));
                    cli::write_trajectory_csv(&path, &res)?;
                }
                if best.as_ref().is_none_or(|(b, _)| final_obj < *b) {
                    best = Some((final_obj, res.weights));
                }
            }
            if let (Some(path), Some((_, w))) = (a.weights_out, best) {
                cli::save_json(&path, &w)?;
            }
            Ok(0)
        }
        Command::Decompose(a) => {
            let file: SolutionFile = cli::load_json(&a.solution)?;
            let pairs = file.pairs_matrices()?;
            let weights = if file.arch == polysdp::programs::ProgramArch::Quadratic {
                let diff = polysdp::linalg::SymMatrix::symmetrize(
                    pairs[0].0.as_array() - pairs[0].1.as_array(),
                )?;
                polysdp::decomposition::eigen_weights_quadratic(&diff, 1e-8)?
            } else {
                weights_from_pairs(&pairs, file.arch, a.tol)?
            };
            cli::save_json(&a.out, &weights)?;
            println!("decomposed into {} neurons", weights.m());
            Ok(0)
        }
        Command::Expand(a) => {
            let file: SolutionFile = cli::load_json(&a.solution)?;
            let source = if a.identity {
                OrthoSource::Identity
            } else {
                OrthoSource::Haar { seed: a.seed }
            };
            let weights = cli::expand_from_solution_file(&file, a.m, source)?;
            cli::save_json(&a.out, &weights)?;
            println!("expanded to {} neurons", weights.m());
            Ok(0)
        }
        Command::Compare(a) => {
            let data = a.data.load()?;
            let spec = a.arch.spec()?;
            let act = parse_act(&a.act)?;
            let loss = parse_loss(&a.loss)?;
            let mut cfg = a.solver.config();
            if cfg.log_every == 0 {
                cfg.log_every = 10;
            }
            let baseline_cfg = polysdp::baseline::TrainConfig {
                learning_rate: a.lr,
                momentum: a.momentum,
                epochs: a.epochs,
                batch_size: a.batch_size,
                init_scale: a.init_scale,
                loss,
                ..polysdp::baseline::TrainConfig::default()
            };
            let compare_spec = cli::CompareSpec {
                arch: spec,
                act,
                beta: a.beta,
                loss,
                baseline_seeds: a.seeds.clone(),
                classify: a.classify,
                gap_tol_override: a.gap_tol,
            };
            let out: CompareOutput = cli::run_compare(&data, &compare_spec, &cfg, &baseline_cfg)?;
            std::fs::create_dir_all(&a.out_dir)?;
            cli::save_json(&a.out_dir.join("report.json"), &out.report)?;
            cli::save_json(&a.out_dir.join("weights.json"), &out.weights)?;
            cli::write_iterlog_csv(&a.out_dir.join("iterlog.csv"), &out.solution)?;
            for (seed, run) in a.seeds.iter().zip(&out.baseline_runs) {
                if let Some(res) = run {
                    cli::write_trajectory_csv(
                        &a.out_dir.join(format!("trajectory_{seed}.csv")),
                        res,
                    )?;
                }
            }
            println!(
                "convex objective {:.9e}  m* {}  duality gap {:.3e}",
                out.report.convex.objective, out.report.convex.m_star, out.report.duality_gap
            );
            if !out.report.gap_ok && !a.allow_gap {
                eprintln!(
                    "duality gap {:e} exceeds tolerance {:e}",
                    out.report.duality_gap, out.report.gap_tolerance
                );
                return Ok(4);
            }
            Ok(0)
        }
        Command::SweepBeta(a) => {
            let data = a.data.load()?;
            let spec = a.arch.spec()?;
            let act = parse_act(&a.act)?;
            let loss = parse_loss(&a.loss)?;
            if a.betas.is_empty() {
                return Err(Error::InvalidInput("need at least one beta".to_string()));
            }
            let cfg = a.solver.config();
            let points = cli::sweep_beta(&data, spec, act, &a.betas, loss, &cfg)?;
            cli::write_sweep_csv(&a.out, &points)?;
            for p in &points {
                println!("beta {:>10.4e}  objective {:.7e}  m* {}", p.beta, p.objective, p.m_star);
            }
            Ok(0)
        }
    }
}
