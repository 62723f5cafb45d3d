//! `spca`: sparse loading extraction, covariance estimation, synthetic data
//! generation, and Monte Carlo experiments over CSV files.
//!
//! Exit codes: 0 on success, 2 for configuration problems (bad flags,
//! unreadable or malformed input, invalid parameters), 3 for numerical
//! failures inside a solver.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;

use spca::covest::{aoce, joce, CovEstConfig};
use spca::imrp::{hard_threshold, imrp, imrp_objective, ImrpConfig, Init};
use spca::io::{read_matrix_file, write_matrix, write_matrix_file};
use spca::matrix::{
    center_columns, sample_covariance, shrink, CovarianceMode, DataMatrix, SymmetricMatrix,
};
use spca::metrics::{column_cardinality, cpev_from_cov, min_offdiag_angle};
use spca::synth::{make_angle_model, make_recovery_model, sample};
use spca::Error;

use spca_cli::{run, write_csv, write_json, ExperimentSpec};

#[derive(Parser)]
#[command(
    name = "spca",
    version,
    about = "Sparse loading extraction and sparse-eigenvector covariance estimation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract sparse orthogonal loadings from a data or covariance CSV.
    Extract(ExtractArgs),
    /// Estimate a covariance matrix with penalized leading eigenvectors.
    Covest(CovestArgs),
    /// Draw synthetic datasets from the built-in covariance models.
    GenData(GenDataArgs),
    /// Replay a Monte Carlo experiment described by a JSON file.
    Experiment(ExperimentArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Extract(args) => extract_cmd(args),
        Cmd::Covest(args) => covest_cmd(args),
        Cmd::GenData(args) => gen_data_cmd(args),
        Cmd::Experiment(args) => experiment_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonFinite { .. } => 2,
            Error::Degenerate(_) | Error::Numerical(_) | Error::InfeasibleSpectrum { .. } => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Input problems (missing file, malformed CSV) are configuration errors.
fn read_input(path: &Path, skip_header: bool) -> Result<DMatrix<f64>, Failure> {
    read_matrix_file(path, skip_header).map_err(|e| Failure::config(e.to_string()))
}

fn write_output(path: &Path, m: &DMatrix<f64>) -> Result<(), Failure> {
    write_matrix_file(path, m).map_err(|e| Failure::config(e.to_string()))
}

fn write_summary(path: &Path, summary: &serde_json::Value) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary serializes");
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

/// `prefix` + `suffix` as a path, without touching the prefix's directory.
fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut os: OsString = prefix.as_os_str().to_os_string();
    os.push(suffix);
    PathBuf::from(os)
}

#[derive(Args)]
struct SolverFlags {
    /// Penalty sharpness exponent.
    #[arg(long)]
    p: Option<f64>,
    /// Penalty smoothing radius around zero.
    #[arg(long)]
    eps: Option<f64>,
    /// Hard-threshold level applied to the returned loadings.
    #[arg(long)]
    threshold: Option<f64>,
    /// Relative objective-change stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverFlags {
    fn apply_imrp(&self, cfg: &mut ImrpConfig) {
        if let Some(v) = self.p {
            cfg.penalty.p = v;
        }
        if let Some(v) = self.eps {
            cfg.penalty.eps = v;
        }
        if let Some(v) = self.threshold {
            cfg.penalty.threshold = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
    }

    fn apply_covest(&self, cfg: &mut CovEstConfig) {
        if let Some(v) = self.p {
            cfg.penalty.p = v;
        }
        if let Some(v) = self.eps {
            cfg.penalty.eps = v;
        }
        if let Some(v) = self.threshold {
            cfg.penalty.threshold = v;
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
    }
}

#[derive(Args)]
struct ExtractArgs {
    /// Data CSV, one sample per row; the gram matrix is formed internally.
    #[arg(long, value_name = "FILE", conflicts_with = "cov")]
    data: Option<PathBuf>,
    /// Symmetric covariance or gram CSV.
    #[arg(long, value_name = "FILE")]
    cov: Option<PathBuf>,
    /// Number of loading vectors.
    #[arg(long)]
    q: usize,
    /// Sparsity penalty weight shared by all columns.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Start from a seeded random frame instead of leading eigenvectors.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip a header row in the input CSV.
    #[arg(long)]
    header: bool,
    /// Keep only this many highest-variance data columns (requires --data).
    #[arg(long, value_name = "K")]
    top_var: Option<usize>,
    /// Subtract column means from the data (requires --data).
    #[arg(long)]
    center: bool,
    /// Output prefix; writes PREFIX.loadings.csv and PREFIX.summary.json.
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
}

fn extract_cmd(args: ExtractArgs) -> Result<(), Failure> {
    let mut selected: Option<Vec<usize>> = None;
    let s = match (&args.data, &args.cov) {
        (Some(path), None) => {
            let mut a = DataMatrix::new(read_input(path, args.header)?)?;
            if let Some(k) = args.top_var {
                let (sub, idx) = select_top_variance(&a, k)?;
                a = sub;
                selected = Some(idx);
            }
            if args.center {
                a = center_columns(&a);
            }
            sample_covariance(&a, CovarianceMode::ScaledGram)
        }
        (None, Some(path)) => {
            if args.center || args.top_var.is_some() {
                return Err(Failure::config(
                    "--center and --top-var operate on data columns; use --data",
                ));
            }
            SymmetricMatrix::new(read_input(path, args.header)?)?
        }
        _ => return Err(Failure::config("pass exactly one of --data and --cov")),
    };

    let mut cfg = ImrpConfig::uniform(args.q, args.rho);
    args.solver.apply_imrp(&mut cfg);
    if let Some(seed) = args.seed {
        cfg.init = Init::Random { seed };
    }
    let (u, trace) = imrp(&s, &cfg)?;
    let objective = imrp_objective(u.as_matrix(), &s, &cfg)?;
    let ut = hard_threshold(u.as_matrix(), cfg.penalty.threshold);

    write_output(&with_suffix(&args.out, ".loadings.csv"), &ut)?;
    let mut summary = json!({
        "m": s.m(),
        "q": args.q,
        "cpev": cpev_from_cov(&s, &ut)?,
        "cardinality": column_cardinality(&ut),
        "iterations": trace.iterations,
        "converged": trace.converged,
        "objective": objective,
    });
    if args.q >= 2 {
        summary["min_angle_degrees"] = json!(min_offdiag_angle(&ut)?);
    }
    if let Some(idx) = selected {
        summary["selected_columns"] = json!(idx);
    }
    write_summary(&with_suffix(&args.out, ".summary.json"), &summary)
}

/// Indices and submatrix of the `k` columns with the largest sample
/// variance; ties keep the lower index, selection preserves column order.
fn select_top_variance(a: &DataMatrix, k: usize) -> Result<(DataMatrix, Vec<usize>), Failure> {
    let m = a.m();
    if k == 0 || k > m {
        return Err(Failure::config(format!(
            "--top-var must lie in 1..={m}, got {k}"
        )));
    }
    let am = a.as_matrix();
    let n = a.n() as f64;
    let mut by_var: Vec<(usize, f64)> = (0..m)
        .map(|j| {
            let col = am.column(j);
            let mean = col.sum() / n;
            (j, col.iter().map(|x| (x - mean) * (x - mean)).sum())
        })
        .collect();
    by_var.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut keep: Vec<usize> = by_var[..k].iter().map(|&(j, _)| j).collect();
    keep.sort_unstable();
    let sub = DMatrix::from_fn(a.n(), k, |i, j| am[(i, keep[j])]);
    Ok((DataMatrix::new(sub)?, keep))
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Aoce,
    Joce,
}

#[derive(Args)]
struct CovestArgs {
    /// Data CSV, one sample per row.
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Estimator: alternating or joint eigenvalue/eigenvector updates.
    #[arg(long, value_enum)]
    algorithm: EstimatorArg,
    /// Number of penalized leading eigenvectors.
    #[arg(long)]
    q: usize,
    /// Sparsity penalty weight shared by the `q` leading columns.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[command(flatten)]
    solver: SolverFlags,
    /// Shrink the sample covariance toward the identity by this weight.
    #[arg(long, conflicts_with = "delta_grid")]
    delta: Option<f64>,
    /// Run once per shrinkage weight in this comma-separated list.
    #[arg(long, value_name = "D1,D2,...", value_delimiter = ',')]
    delta_grid: Vec<f64>,
    /// Subtract column means from the data.
    #[arg(long)]
    center: bool,
    /// Skip a header row in the input CSV.
    #[arg(long)]
    header: bool,
    /// Output prefix; writes PREFIX.sigma.csv, PREFIX.spectrum.csv, and
    /// PREFIX.summary.json (per-delta infixes under --delta-grid).
    #[arg(long, value_name = "PREFIX")]
    out: PathBuf,
}

fn covest_cmd(args: CovestArgs) -> Result<(), Failure> {
    let mut a = DataMatrix::new(read_input(&args.data, args.header)?)?;
    if args.center {
        a = center_columns(&a);
    }
    let (n, m) = (a.n(), a.m());
    let s = sample_covariance(&a, CovarianceMode::MeanNormalized);

    let deltas: Vec<Option<f64>> = if !args.delta_grid.is_empty() {
        args.delta_grid.iter().map(|&d| Some(d)).collect()
    } else {
        vec![args.delta]
    };
    if n < m && deltas.contains(&None) {
        return Err(Failure::config(format!(
            "{n} samples in {m} dimensions leave the sample covariance rank deficient; \
             pass --delta or --delta-grid to shrink it toward the identity"
        )));
    }

    let multi = deltas.len() > 1;
    let mut runs = Vec::new();
    for d in deltas {
        let input = match d {
            Some(d) => shrink(&s, d)?,
            None => s.clone(),
        };
        let mut cfg = CovEstConfig::uniform(args.q, args.rho);
        args.solver.apply_covest(&mut cfg);
        let (est, trace) = match args.algorithm {
            EstimatorArg::Aoce => aoce(&input, &cfg)?,
            EstimatorArg::Joce => joce(&input, &cfg)?,
        };

        let infix = match d.filter(|_| multi) {
            Some(d) => format!(".delta{d}"),
            None => String::new(),
        };
        write_output(
            &with_suffix(&args.out, &format!("{infix}.sigma.csv")),
            est.sigma_hat.as_matrix(),
        )?;
        let spectrum = DMatrix::from_column_slice(m, 1, &est.variances());
        write_output(&with_suffix(&args.out, &format!("{infix}.spectrum.csv")), &spectrum)?;
        runs.push(json!({
            "delta": d,
            "iterations": trace.iterations,
            "converged": trace.converged,
            "final_objective": trace.objective.last(),
            "objective_trace": trace.objective,
        }));
    }

    let algorithm = match args.algorithm {
        EstimatorArg::Aoce => "aoce",
        EstimatorArg::Joce => "joce",
    };
    let summary = json!({
        "algorithm": algorithm,
        "m": m,
        "n": n,
        "q": args.q,
        "rho": args.rho,
        "runs": runs,
    });
    write_summary(&with_suffix(&args.out, ".summary.json"), &summary)
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    /// Two planted sparse directions over the first twenty coordinates.
    Recovery,
    /// `k` planted sparse directions over the first ten coordinates.
    Angle,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Ambient dimension.
    #[arg(long)]
    m: usize,
    /// Number of samples (rows).
    #[arg(long)]
    n: usize,
    /// Planted directions; used by the angle model only.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Seed for the model and the draw (separated internally).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV for the samples.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also write the planted directions to this CSV.
    #[arg(long, value_name = "FILE")]
    truth: Option<PathBuf>,
    /// Write a `c0,c1,...` header row.
    #[arg(long)]
    header: bool,
}

fn gen_data_cmd(args: GenDataArgs) -> Result<(), Failure> {
    let model = match args.model {
        ModelArg::Recovery => make_recovery_model(args.m, args.seed)?,
        ModelArg::Angle => make_angle_model(args.m, args.k, args.seed)?,
    };
    let a = sample(&model, args.n, args.seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;

    let mut file = File::create(&args.out)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", args.out.display())))?;
    if args.header {
        let names: Vec<String> = (0..args.m).map(|j| format!("c{j}")).collect();
        writeln!(file, "{}", names.join(","))
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", args.out.display())))?;
    }
    write_matrix(&mut file, a.as_matrix()).map_err(|e| Failure::config(e.to_string()))?;

    if let Some(path) = &args.truth {
        write_output(path, &model.planted())?;
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment description.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the config's seed_base.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Fill the wall-time column (costs byte-for-byte reproducibility).
    #[arg(long)]
    timings: bool,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn experiment_cmd(args: ExperimentArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut spec: ExperimentSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", args.config.display())))?;
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.seed_base = s;
    }
    spec.validate()?;

    let records = run(&spec, args.timings)?;
    let emit = |w: &mut dyn Write| match args.format {
        FormatArg::Csv => write_csv(w, &records),
        FormatArg::Json => write_json(w, &records),
    };
    match &args.out {
        Some(path) => {
            let mut file = File::create(path)
                .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
            emit(&mut file)
        }
        None => emit(&mut std::io::stdout().lock()),
    }
    .map_err(|e| Failure::config(format!("cannot write results: {e}")))
}
