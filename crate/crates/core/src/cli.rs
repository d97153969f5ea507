//! Command-line front end.
//!
//! Every command writes `<out>.manifest.json` next to its main output. The
//! manifest records the fully resolved argument list, including the seed, so
//! `rgam replay <manifest>` reproduces the outputs exactly.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cv::{cv_fit, CvResult, LassoFitter, Metric};
use crate::data::{format_f64, read_numeric_csv, write_atomic, NumericTable};
use crate::dof::{estimate_df, DofConfig, GrandMeanFitter, IdentityFitter, OlsFitter, ResponseFitter, UnpenalizedRgam};
use crate::lasso::SolverOptions;
use crate::rgam::{fit_rgam, InitNonzero, RgamConfig, RgamFitter, RgamModel, Step1Lambda, Step3Scaling};
use crate::sim::{
    read_results_csv, run_benchmark, summarize, summary_to_csv, write_results_csv, BenchConfig, Method, Scenario,
};
use crate::{ColumnRef, Dataset, Family, RgamError, Scale};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Schema version of the JSON documents written by `cv` and `dof`.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rgam", version, about = "Reluctant generalized additive models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an RGAM path and write the model JSON plus a per-lambda report.
    ///
    /// Report CSV columns: lambda_index, lambda, deviance (mean training
    /// deviance), nonzero_linear, nonzero_nonlinear.
    Fit(FitArgs),
    /// Predict from a saved model.
    ///
    /// Output CSV has a single `prediction` column, one row per input row.
    Predict(PredictArgs),
    /// Cross-validate RGAM or the lasso over the lambda path.
    ///
    /// Writes the CV result as JSON and a CSV with columns lambda_index,
    /// lambda, mean, se, nonzero_linear, nonzero_nonlinear.
    Cv(CvArgs),
    /// Monte Carlo degrees of freedom of a fitting procedure.
    ///
    /// Writes JSON with df_hat, standard_error, replicates and seed. With
    /// --append-csv, also appends a row fitter, n, p, sigma, replicates, seed,
    /// df_hat, standard_error.
    Dof(DofArgs),
    /// Run the simulation benchmark.
    ///
    /// Output CSV columns: scenario, snr, method, replicate, seed,
    /// relative_test_error, test_mse, n_selected_features, n_selected_linear,
    /// n_selected_nonlinear, n_true_features_recovered, lambda_index, lambda,
    /// error.
    Bench(BenchArgs),
    /// Summarize benchmark results by scenario, SNR and method.
    ///
    /// Output CSV columns: scenario, snr, method, runs, failed, rel_error_q1,
    /// rel_error_median, rel_error_q3, median_selected, median_linear,
    /// median_nonlinear, median_recovered.
    Summarize(SummarizeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column name or 0-based index; defaults to the last column.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "gaussian")]
    pub family: Family,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Relative size of the non-linear columns; defaults to 0.6, or 0.8 with
    /// --init-nz none.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Degrees of freedom of each smoothing spline (at least 2).
    #[arg(long, default_value_t = crate::rgam::DEFAULT_DF, value_parser = parse_df)]
    pub df: f64,
    /// Features that always get a non-linear candidate: all, none, or a
    /// comma-separated list of 1-based column numbers.
    #[arg(long, default_value = "all")]
    pub init_nz: String,
    #[arg(long, default_value_t = crate::lasso::DEFAULT_NLAMBDA)]
    pub nlambda: usize,
    /// Smallest lambda as a fraction of the largest.
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
    /// Step-1 penalty: min, 1se, or a fixed value.
    #[arg(long, default_value = "min")]
    pub step1_lambda: String,
    #[arg(long, default_value_t = crate::rgam::DEFAULT_NFOLDS)]
    pub nfolds_step1: usize,
    /// Step-3 column scaling: preserve or restandardize.
    #[arg(long, default_value = "preserve")]
    pub step3_scaling: String,
}

impl ModelArgs {
    pub fn config(&self, seed: u64) -> crate::Result<RgamConfig> {
        let step1_lambda = match self.step1_lambda.as_str() {
            "min" => Step1Lambda::CvMin,
            "1se" => Step1Lambda::Cv1se,
            v => Step1Lambda::Fixed(v.parse().map_err(|_| {
                RgamError::InvalidConfig(format!("step1-lambda must be min, 1se or a number, got `{v}`"))
            })?),
        };
        let step3_scaling = match self.step3_scaling.as_str() {
            "preserve" => Step3Scaling::PreserveRelative,
            "restandardize" => Step3Scaling::Restandardize,
            v => {
                return Err(RgamError::InvalidConfig(format!(
                    "step3-scaling must be preserve or restandardize, got `{v}`"
                )))
            }
        };
        Ok(RgamConfig {
            gamma: self.gamma,
            df: self.df,
            init_nz: InitNonzero::parse_one_based(&self.init_nz)?,
            nfolds_step1: self.nfolds_step1,
            step1_lambda,
            nlambda: self.nlambda,
            lambda_min_ratio: self.lambda_min_ratio,
            step3_lambda: None,
            step3_scaling,
            tol: SolverOptions::default().tol,
            seed,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Report CSV path; defaults to `<out>.report.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Model JSON written by `fit` or `cv`.
    #[arg(long)]
    pub model: PathBuf,
    /// Feature CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Column to drop before predicting; when given, the mean deviance against
    /// it is also reported.
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, default_value = "response")]
    pub scale: Scale,
    #[arg(long, conflicts_with_all = ["lambda", "cv"])]
    pub lambda_index: Option<usize>,
    /// Penalty value; the nearest path point is used.
    #[arg(long, conflicts_with = "cv")]
    pub lambda: Option<f64>,
    /// CV result JSON from `cv`; selects the lambda by --rule.
    #[arg(long)]
    pub cv: Option<PathBuf>,
    /// min or 1se, used with --cv.
    #[arg(long, default_value = "min")]
    pub rule: String,
    /// Prediction CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CvMethod {
    Rgam,
    RgamSel,
    Lasso,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "rgam")]
    pub method: CvMethod,
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// deviance, mse or auc.
    #[arg(long, default_value = "deviance")]
    pub metric: Metric,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CV result JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// CV table CSV path; defaults to `<out>.csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also save the full-data model (the path the CV result refers to).
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DofFitter {
    Ols,
    Mean,
    Identity,
    Rgam,
    RgamSel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DofMean {
    /// The response column is taken as the true mean.
    Response,
    /// Least squares fitted values of the response.
    Ols,
    Zero,
}

#[derive(Debug, Clone, Args)]
pub struct DofArgs {
    /// Input CSV; the response column supplies the true mean.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum, default_value = "ols")]
    pub fitter: DofFitter,
    #[arg(long, value_enum, default_value = "response")]
    pub mu: DofMean,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Monte Carlo replicates (B).
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    /// Center fitted values at the true mean instead of zero.
    #[arg(long)]
    pub center_at_mu: bool,
    /// Fix the Step-1 penalty at zero for the RGAM fitters.
    #[arg(long)]
    pub unpenalized_step1: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV file to append a result row to (created with a header if absent).
    #[arg(long)]
    pub append_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated scenarios: linear, hier, nonlinear, nonhier, mixed,
    /// mixed_large.
    #[arg(long, value_delimiter = ',', default_value = "linear,hier,nonlinear,nonhier,mixed")]
    pub scenarios: Vec<Scenario>,
    /// Comma-separated signal-to-noise ratios.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    pub snr: Vec<f64>,
    #[arg(long, default_value_t = crate::sim::DEFAULT_REPLICATES)]
    pub replicates: usize,
    /// Comma-separated methods: null, lasso, rgam, rgam_sel.
    #[arg(long, value_delimiter = ',', default_value = "null,lasso,rgam,rgam_sel")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = 5)]
    pub nfolds: usize,
    /// Overrides each scenario's training size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Overrides each scenario's feature count.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = crate::sim::DEFAULT_N_TEST)]
    pub n_test: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Results CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// Results CSV from `bench`.
    #[arg(long)]
    pub input: PathBuf,
    /// Summary CSV output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Contents of `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, with the seed made explicit.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
}

/// Error from a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<RgamError> for CliError {
    fn from(e: RgamError) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

/// Maps a library error to a process exit code.
pub fn exit_code(e: &RgamError) -> i32 {
    match e {
        RgamError::InvalidConfig(_) => EXIT_USAGE,
        RgamError::DegenerateResponse
        | RgamError::Divergence { .. }
        | RgamError::NoConvergence { .. }
        | RgamError::DfOutOfRange { .. }
        | RgamError::DfSearch { .. } => EXIT_NUMERIC,
        RgamError::Replicate { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

fn parse_df(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 2.0 {
        Ok(v)
    } else {
        Err(format!("df must be at least 2, got {v}"))
    }
}

/// Parses and runs a command line (including the program name). Returns the
/// exit code; messages go to stdout and stderr.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, args) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn execute(command: Command, args: Vec<String>) -> std::result::Result<(), CliError> {
    match command {
        Command::Fit(a) => run_fit(a, args),
        Command::Predict(a) => run_predict(a, args),
        Command::Cv(a) => run_cv(a, args),
        Command::Dof(a) => run_dof(a, args),
        Command::Bench(a) => run_bench(a, args),
        Command::Summarize(a) => run_summarize(a, args),
        Command::Replay(a) => run_replay(a),
    }
}

/// Uses the given seed or draws and prints a fresh one; in the latter case the
/// seed is appended to the recorded arguments.
fn resolve_seed(seed: Option<u64>, args: &mut Vec<String>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            println!("seed: {s}");
            args.push("--seed".into());
            args.push(s.to_string());
            s
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_manifest(
    out: &Path,
    command: &str,
    args: Vec<String>,
    seed: Option<u64>,
    config: serde_json::Value,
    outputs: Vec<PathBuf>,
) -> crate::Result<()> {
    let m = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        args,
        seed,
        config,
        outputs,
    };
    write_atomic(manifest_path(out), serde_json::to_string_pretty(&m)?.as_bytes())
}

fn parse_column(s: &str) -> ColumnRef {
    match s.parse::<usize>() {
        Ok(i) => ColumnRef::Index(i),
        Err(_) => ColumnRef::Name(s.to_string()),
    }
}

fn column_index(table: &NumericTable, col: Option<&str>) -> crate::Result<usize> {
    match col {
        None if table.headers.is_empty() => Err(RgamError::InvalidInput("CSV has no columns".into())),
        None => Ok(table.headers.len() - 1),
        Some(s) => match parse_column(s) {
            ColumnRef::Index(i) if i < table.headers.len() => Ok(i),
            ColumnRef::Index(i) => Err(RgamError::MissingColumn(format!("#{i}"))),
            ColumnRef::Name(name) => table
                .headers
                .iter()
                .position(|h| *h == name)
                .ok_or(RgamError::MissingColumn(name)),
        },
    }
}

/// Splits a table into the features and the selected column.
fn split_table(table: &NumericTable, target: usize) -> (Array2<f64>, ndarray::Array1<f64>, Vec<String>) {
    let keep: Vec<usize> = (0..table.headers.len()).filter(|&j| j != target).collect();
    let x = table.values.select(Axis(1), &keep);
    let y = table.values.column(target).to_owned();
    let names = keep.iter().map(|&j| table.headers[j].clone()).collect();
    (x, y, names)
}

fn load_dataset(a: &DataArgs) -> crate::Result<Dataset> {
    let table = read_numeric_csv(&a.data)?;
    let target = column_index(&table, a.response.as_deref())?;
    let (x, y, names) = split_table(&table, target);
    Dataset::new(x, y, a.family)?.with_column_names(names)
}

fn report_csv(model: &RgamModel, d: &Dataset) -> crate::Result<String> {
    let mut out = String::from("lambda_index,lambda,deviance,nonzero_linear,nonzero_nonlinear\n");
    for (k, &lam) in model.lambda().values().iter().enumerate() {
        let mu = model.predict(d.x(), k, Scale::Response)?;
        let dev = d.family().mean_deviance(d.y_slice(), mu.as_slice().expect("contiguous"));
        out.push_str(&format!(
            "{k},{},{},{},{}\n",
            format_f64(lam),
            format_f64(dev),
            model.selected_linear(k).len(),
            model.selected_nonlinear(k).len()
        ));
    }
    Ok(out)
}

fn run_fit(a: FitArgs, mut args: Vec<String>) -> std::result::Result<(), CliError> {
    let seed = resolve_seed(a.seed, &mut args);
    let config = a.model.config(seed)?;
    let d = load_dataset(&a.data)?;
    config.validate(d.p())?;
    println!("gamma: {}", config.resolved_gamma());
    let model = fit_rgam(&d, &config)?;
    let report = a.report.clone().unwrap_or_else(|| with_suffix(&a.out, ".report.csv"));
    model.save(&a.out)?;
    write_atomic(&report, report_csv(&model, &d)?.as_bytes())?;
    let cfg = json!({
        "data": a.data.data,
        "family": a.data.family.as_str(),
        "rgam": config,
        "resolved_gamma": config.resolved_gamma(),
    });
    write_manifest(&a.out, "fit", args, Some(seed), cfg, vec![a.out.clone(), report])?;
    Ok(())
}

/// Index of the path point nearest to `lambda` on the log scale (absolute
/// scale when either value is zero).
pub fn nearest_lambda_index(path: &[f64], lambda: f64) -> usize {
    let dist = |v: f64| {
        if v > 0.0 && lambda > 0.0 {
            (v.ln() - lambda.ln()).abs()
        } else {
            (v - lambda).abs()
        }
    };
    (0..path.len())
        .min_by(|&i, &j| dist(path[i]).total_cmp(&dist(path[j])))
        .unwrap_or(0)
}

fn run_predict(a: PredictArgs, args: Vec<String>) -> std::result::Result<(), CliError> {
    let model = RgamModel::load(&a.model)?;
    let path = model.lambda().values().to_vec();
    let index = if let Some(i) = a.lambda_index {
        if i >= path.len() {
            return Err(usage(format!("lambda-index {i} out of range, the path has {} points", path.len())));
        }
        i
    } else if let Some(lam) = a.lambda {
        let i = nearest_lambda_index(&path, lam);
        if (path[i] - lam).abs() > 1e-10 * lam.abs().max(1e-300) {
            eprintln!("warning: lambda {lam} is not on the path; using index {i} (lambda {})", path[i]);
        }
        i
    } else if let Some(cv_path) = &a.cv {
        let text = std::fs::read_to_string(cv_path).map_err(|e| RgamError::io(cv_path, e))?;
        let cv = CvResult::from_json(&text)?;
        if cv.lambda.values() != path.as_slice() {
            return Err(RgamError::InvalidInput("the CV result was computed on a different lambda path".into()).into());
        }
        match a.rule.as_str() {
            "min" => cv.lambda_min_index,
            "1se" => cv.lambda_1se_index,
            r => return Err(usage(format!("rule must be min or 1se, got `{r}`"))),
        }
    } else {
        return Err(usage("choose the penalty with --lambda-index, --lambda or --cv"));
    };

    let table = read_numeric_csv(&a.data)?;
    let (x, y) = match a.response.as_deref() {
        Some(col) => {
            let target = column_index(&table, Some(col))?;
            let (x, y, _) = split_table(&table, target);
            (x, Some(y))
        }
        None => (table.values.clone(), None),
    };
    let pred = model.predict(x.view(), index, a.scale)?;
    let mut out = String::from("prediction\n");
    for v in &pred {
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
    write_atomic(&a.out, out.as_bytes())?;
    let mut deviance = None;
    if let Some(y) = &y {
        let mu = model.predict(x.view(), index, Scale::Response)?;
        let dev = model.family.mean_deviance(y.as_slice().expect("contiguous"), mu.as_slice().expect("contiguous"));
        println!("deviance: {dev}");
        deviance = Some(dev);
    }
    let cfg = json!({
        "model": a.model,
        "data": a.data,
        "lambda_index": index,
        "lambda": path[index],
        "scale": a.scale,
        "deviance": deviance,
    });
    write_manifest(&a.out, "predict", args, None, cfg, vec![a.out.clone()])?;
    Ok(())
}

fn run_cv(a: CvArgs, mut args: Vec<String>) -> std::result::Result<(), CliError> {
    let seed = resolve_seed(a.seed, &mut args);
    let mut config = a.model.config(seed)?;
    if a.method == CvMethod::RgamSel {
        config.init_nz = InitNonzero::None;
    }
    let d = load_dataset(&a.data)?;
    let csv = a.csv.clone().unwrap_or_else(|| with_suffix(&a.out, ".csv"));
    let mut outputs = vec![a.out.clone(), csv.clone()];
    let cv = match a.method {
        CvMethod::Lasso => {
            let fitter = LassoFitter {
                opts: SolverOptions::default(),
                nlambda: config.nlambda,
                min_ratio: config.lambda_min_ratio,
            };
            let fit = cv_fit(&d, &fitter, a.k, a.metric, seed)?;
            if a.model_out.is_some() {
                return Err(usage("--model-out is only available for the rgam methods"));
            }
            fit.cv
        }
        CvMethod::Rgam | CvMethod::RgamSel => {
            config.validate(d.p())?;
            let fit = cv_fit(&d, &RgamFitter { config: config.clone() }, a.k, a.metric, seed)?;
            if let Some(path) = &a.model_out {
                fit.model.save(path)?;
                outputs.push(path.clone());
            }
            fit.cv
        }
    };
    println!(
        "lambda_min: {} (index {}), lambda_1se: {} (index {})",
        cv.lambda_min(),
        cv.lambda_min_index,
        cv.lambda_1se(),
        cv.lambda_1se_index
    );
    let doc = json!({ "schema_version": OUTPUT_SCHEMA_VERSION, "cv": cv });
    write_atomic(&a.out, serde_json::to_string_pretty(&doc).map_err(RgamError::from)?.as_bytes())?;
    cv.write_csv(&csv)?;
    let cfg = json!({
        "data": a.data.data,
        "family": a.data.family.as_str(),
        "method": format!("{:?}", a.method).to_lowercase(),
        "k": a.k,
        "metric": a.metric.as_str(),
        "rgam": config,
    });
    write_manifest(&a.out, "cv", args, Some(seed), cfg, outputs)?;
    Ok(())
}

impl CvResult {
    /// Reads either a bare CV result or the document written by `rgam cv`.
    pub fn from_json(s: &str) -> crate::Result<CvResult> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let inner = v.get("cv").cloned().unwrap_or(v);
        Ok(serde_json::from_value(inner)?)
    }
}

fn run_dof(a: DofArgs, mut args: Vec<String>) -> std::result::Result<(), CliError> {
    let seed = resolve_seed(a.seed, &mut args);
    let table = read_numeric_csv(&a.data)?;
    let target = column_index(&table, a.response.as_deref())?;
    let (x, y, _) = split_table(&table, target);
    let mu = match a.mu {
        DofMean::Response => y.to_vec(),
        DofMean::Zero => vec![0.0; y.len()],
        DofMean::Ols => OlsFitter.fitted_values(x.view(), y.view())?.to_vec(),
    };
    let mut cfg = DofConfig::new(mu.clone(), a.sigma, a.replicates, seed);
    if a.center_at_mu {
        cfg.centering = Some(mu);
    }
    let rgam_fitter = |sel: bool| {
        let base = if sel { UnpenalizedRgam::rgam_sel(seed) } else { UnpenalizedRgam::rgam(seed) };
        if a.unpenalized_step1 {
            base.with_unpenalized_step1()
        } else {
            base
        }
    };
    let fitter: Box<dyn ResponseFitter> = match a.fitter {
        DofFitter::Ols => Box::new(OlsFitter),
        DofFitter::Mean => Box::new(GrandMeanFitter),
        DofFitter::Identity => Box::new(IdentityFitter),
        DofFitter::Rgam => Box::new(rgam_fitter(false)),
        DofFitter::RgamSel => Box::new(rgam_fitter(true)),
    };
    let est = estimate_df(fitter.as_ref(), x.view(), &cfg)?;
    let fitter_name = format!("{:?}", a.fitter).to_lowercase();
    println!("df_hat: {} (standard error {})", est.df_hat, est.standard_error);
    let doc = json!({
        "schema_version": OUTPUT_SCHEMA_VERSION,
        "fitter": fitter_name,
        "n": x.nrows(),
        "p": x.ncols(),
        "sigma": a.sigma,
        "df_hat": est.df_hat,
        "standard_error": est.standard_error,
        "replicates": est.replicates,
        "seed": est.seed,
    });
    write_atomic(&a.out, serde_json::to_string_pretty(&doc).map_err(RgamError::from)?.as_bytes())?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.append_csv {
        append_dof_row(path, &fitter_name, x.dim(), a.sigma, &est)?;
        outputs.push(path.clone());
    }
    let cfg = json!({
        "data": a.data,
        "fitter": fitter_name,
        "mu": format!("{:?}", a.mu).to_lowercase(),
        "sigma": a.sigma,
        "replicates": a.replicates,
        "center_at_mu": a.center_at_mu,
        "unpenalized_step1": a.unpenalized_step1,
    });
    write_manifest(&a.out, "dof", args, Some(seed), cfg, outputs)?;
    Ok(())
}

fn append_dof_row(
    path: &Path,
    fitter: &str,
    (n, p): (usize, usize),
    sigma: f64,
    est: &crate::dof::DofEstimate,
) -> crate::Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| RgamError::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str("fitter,n,p,sigma,replicates,seed,df_hat,standard_error\n");
    }
    text.push_str(&format!(
        "{fitter},{n},{p},{},{},{},{},{}\n",
        format_f64(sigma),
        est.replicates,
        est.seed,
        format_f64(est.df_hat),
        format_f64(est.standard_error)
    ));
    f.write_all(text.as_bytes()).map_err(|e| RgamError::io(path, e))
}

fn run_bench(a: BenchArgs, mut args: Vec<String>) -> std::result::Result<(), CliError> {
    let seed = resolve_seed(a.seed, &mut args);
    let cfg = BenchConfig {
        scenarios: a.scenarios.clone(),
        snrs: a.snr.clone(),
        methods: a.methods.clone(),
        replicates: a.replicates,
        nfolds: a.nfolds,
        n: a.n,
        p: a.p,
        n_test: a.n_test,
        seed,
    };
    let rows = run_benchmark(&cfg)?;
    write_results_csv(&rows, &a.out)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} rows written, {failed} failed", rows.len());
    let config = json!({
        "scenarios": cfg.scenarios.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "snrs": cfg.snrs,
        "methods": cfg.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
        "replicates": cfg.replicates,
        "nfolds": cfg.nfolds,
        "n": cfg.n,
        "p": cfg.p,
        "n_test": cfg.n_test,
    });
    write_manifest(&a.out, "bench", args, Some(seed), config, vec![a.out.clone()])?;
    Ok(())
}

fn run_summarize(a: SummarizeArgs, args: Vec<String>) -> std::result::Result<(), CliError> {
    let rows = read_results_csv(&a.input)?;
    let summary = summarize(&rows);
    let bytes = summary_to_csv(&summary)?;
    write_atomic(&a.out, &bytes)?;
    println!("{:<12} {:>5} {:<9} {:>7} {:>7} {:>7} {:>9}", "scenario", "snr", "method", "q1", "median", "q3", "recovered");
    for s in &summary {
        println!(
            "{:<12} {:>5} {:<9} {:>7.3} {:>7.3} {:>7.3} {:>9}",
            s.scenario.as_str(),
            s.snr,
            s.method.as_str(),
            s.rel_error_q1,
            s.rel_error_median,
            s.rel_error_q3,
            s.median_recovered
        );
    }
    let cfg = json!({ "input": a.input });
    write_manifest(&a.out, "summarize", args, None, cfg, vec![a.out.clone()])?;
    Ok(())
}

fn run_replay(a: ReplayArgs) -> std::result::Result<(), CliError> {
    let text = std::fs::read_to_string(&a.manifest).map_err(|e| RgamError::io(&a.manifest, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(RgamError::from)?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(RgamError::InvalidInput(format!(
            "manifest schema version {} is not supported",
            m.schema_version
        ))
        .into());
    }
    let argv = std::iter::once("rgam".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| usage(format!("manifest arguments do not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(usage("a manifest cannot replay another replay"));
    }
    execute(cli.command, m.args)
}
