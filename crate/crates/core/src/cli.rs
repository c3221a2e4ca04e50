//! The `fairbeam` command line: `gen`, `baseline`, `train`, `eval`, `sweep`
//! and `report`.
//!
//! Every flag can also come from a JSON file given with `--config`, using
//! the flag name as key (`"batch-size"` or `"batch_size"`); flags on the
//! command line win. Each command writes a manifest with the resolved
//! configuration. Exit codes: 0 success, 1 usage error, 2 runtime or data
//! error. Diagnostics go to standard error, data to files and standard
//! output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::autonet::ModelConfig;
use crate::baselines::{Baseline, Method};
use crate::channel::{generate_dataset, load_dataset, save_dataset, split_dataset, Dataset, ScenarioConfig};
use crate::error::Error;
use crate::sweep::{
    baseline_sweep, emit_reports, pair_table, pareto_sweep, reference_points, OperatingPoint, RunManifest,
    SweepEntry, TableRow,
};
use crate::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train, EvalSummary, Provenance, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "fairbeam", version, about = "Fairness-constrained multi-user downlink beamforming")]
pub struct Cli {
    /// JSON file with default values for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a channel dataset.
    Gen(GenArgs),
    /// Evaluate a closed-form beamformer on a dataset.
    Baseline(BaselineArgs),
    /// Train a network for one fairness target.
    Train(TrainArgs),
    /// Evaluate a trained checkpoint.
    Eval(EvalArgs),
    /// Sweep wSLNR exponents and network fairness targets, then write reports.
    Sweep(SweepArgs),
    /// Rewrite the report files from stored sweep results.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 16)]
    pub nt: usize,
    #[arg(long, default_value_t = 12)]
    pub nu: usize,
    #[arg(long, default_value_t = 50_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 500.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 35.0)]
    pub dmin: f64,
    #[arg(long, default_value_t = 2.0)]
    pub plexp: f64,
    /// Full-power SNR at the minimum distance (dB).
    #[arg(long, default_value_t = 33.0)]
    pub refsnr: f64,
    /// Total transmit power (W).
    #[arg(long, default_value_t = 10.0)]
    pub ptot: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output `.fbd` path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Dataset and its train/validation/test split.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Input `.fbd` dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.64,0.16,0.2")]
    pub split: String,
    #[arg(long, default_value_t = 7)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BaselineArgs {
    /// One of mrt, zf, slnr, wslnr.
    #[arg(long)]
    pub method: Option<String>,
    /// Weight exponent, required for wslnr.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Per-sample results CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optimization and architecture flags shared by `train` and `sweep`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.002)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.003)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda0: f64,
    #[arg(long, default_value_t = false)]
    pub freeze_lambda: bool,
    #[arg(long, default_value_t = 100)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub init_seed: u64,
    /// Embedding width as a multiple of the feature count.
    #[arg(long, default_value_t = 4)]
    pub emb_factor: usize,
    #[arg(long, default_value_t = 8)]
    pub n_att: usize,
    #[arg(long, default_value_t = 4)]
    pub n_head: usize,
}

impl TrainFlags {
    fn to_config(&self, j_lb: f64, n_t: usize) -> TrainConfig {
        TrainConfig {
            j_lb,
            batch_size: self.batch_size,
            lr: self.lr,
            eps: self.eps,
            eta: self.eta,
            lambda0: self.lambda0,
            freeze_lambda: self.freeze_lambda,
            max_epochs: self.max_epochs,
            grad_tol: self.grad_tol,
            seed: self.seed,
            model: ModelConfig::for_antennas(n_t, self.emb_factor, self.n_att, self.n_head, self.init_seed),
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Fairness target.
    #[arg(long, default_value_t = 0.8)]
    pub jlb: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    /// Output checkpoint (`.fbck`); history and summary are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Which part of the split to evaluate: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub subset: String,
    /// Per-sample results CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Comma-separated fairness targets.
    #[arg(long, default_value = "0.7,0.8,0.9")]
    pub jlb: String,
    /// Comma-separated wSLNR exponents, paired by position with the targets.
    #[arg(long, default_value = "0,0.5,1,2,5")]
    pub alpha: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `results.json` written by `sweep`.
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Everything `sweep` measured; `report` rebuilds the CSVs from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResults {
    pub meta: Value,
    pub points: Vec<OperatingPoint>,
    pub summaries: Vec<Option<EvalSummary>>,
    pub table: Vec<TableRow>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn dispatch(matches: &ArgMatches) -> CliResult<()> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return usage("--threads must be at least 1");
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::warn!("thread pool already initialized; --threads ignored");
        }
    }
    let file = match &cli.config {
        Some(p) => Some(read_config(p)?),
        None => None,
    };
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    match cli.command {
        Command::Gen(a) => cmd_gen(resolve(a, sub, file.as_ref())?),
        Command::Baseline(a) => cmd_baseline(resolve(a, sub, file.as_ref())?),
        Command::Train(a) => cmd_train(resolve(a, sub, file.as_ref())?),
        Command::Eval(a) => cmd_eval(resolve(a, sub, file.as_ref())?),
        Command::Sweep(a) => cmd_sweep(resolve(a, sub, file.as_ref())?),
        Command::Report(a) => cmd_report(resolve(a, sub, file.as_ref())?),
    }
}

fn read_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Runtime(Error::io(path, e)))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(m)) => Ok(m.into_iter().map(|(k, v)| (k.replace('-', "_"), v)).collect()),
        Ok(_) => usage(format!("{}: config must be a JSON object", path.display())),
        Err(e) => usage(format!("{}: invalid JSON: {e}", path.display())),
    }
}

/// Overlays config-file values on every argument not given on the command line.
fn resolve<A: Serialize + DeserializeOwned>(
    args: A,
    matches: &ArgMatches,
    file: Option<&Map<String, Value>>,
) -> CliResult<A> {
    let Some(file) = file else { return Ok(args) };
    let mut value = serde_json::to_value(&args).map_err(Error::from)?;
    let obj = value.as_object_mut().expect("arguments serialize to an object");
    for (k, v) in file {
        if !obj.contains_key(k) {
            log::warn!("config key '{k}' does not apply to this command");
            continue;
        }
        let from_cli = matches!(matches.value_source(k), Some(ValueSource::CommandLine));
        if !from_cli {
            obj.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config file: {e}")))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => usage(format!("--{flag} is required")),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_list(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => usage(format!("--{flag} expects comma-separated numbers, got '{s}'")),
    }
}

fn parse_split(s: &str) -> CliResult<(f64, f64, f64)> {
    match parse_list(s, "split")?.as_slice() {
        &[a, b, c] => Ok((a, b, c)),
        _ => usage(format!("--split expects three fractions, got '{s}'")),
    }
}

fn load_split(d: &DataArgs) -> CliResult<(Dataset, Dataset, Dataset, Dataset)> {
    let path = required(&d.data, "data")?;
    let fractions = parse_split(&d.split)?;
    let ds = load_dataset(path)?;
    let (tr, va, te) = split_dataset(&ds, fractions, d.split_seed).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok((ds, tr, va, te))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let out = required(&a.out, "out")?;
    if a.samples == 0 {
        return usage("--samples must be at least 1");
    }
    let cfg = ScenarioConfig {
        n_t: a.nt,
        n_u: a.nu,
        p_tot: a.ptot,
        radius: a.radius,
        d_min: a.dmin,
        pathloss_exponent: a.plexp,
        ref_snr_db: a.refsnr,
        seed: a.seed,
        ..ScenarioConfig::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = generate_dataset(&cfg, a.samples)?;
    save_dataset(&ds, out)?;
    let snr: Vec<f64> = ds
        .samples
        .iter()
        .flat_map(|s| s.h.iter().zip(&s.sigma2).map(|(h, n)| 10.0 * (cfg.p_tot * h.norm_sqr() / n).log10()))
        .collect();
    let summary = json!({
        "samples": ds.len(),
        "n_t": cfg.n_t,
        "n_u": cfg.n_u,
        "mean_snr_db": snr.iter().sum::<f64>() / snr.len() as f64,
        "sha256": ds.content_hash(),
    });
    let mut m = RunManifest::new("gen", to_json(&a));
    m.dataset_hashes.insert(out.display().to_string(), ds.content_hash());
    m.outputs = vec![out.display().to_string()];
    m.results = summary.clone();
    m.write(&with_suffix(out, ".manifest.json"))?;
    print_json(&summary);
    Ok(())
}

fn per_sample_csv(s: &EvalSummary) -> String {
    let n_u = s.user_rates.first().map_or(0, Vec::len);
    let mut out = String::from("sample,sum_rate,jain");
    for u in 0..n_u {
        let _ = write!(out, ",rate_{u}");
    }
    out.push('\n');
    for (i, rates) in s.user_rates.iter().enumerate() {
        let _ = write!(out, "{i},{},{}", s.stream_sum_rate[i], s.stream_jain[i]);
        for r in rates {
            let _ = write!(out, ",{r}");
        }
        out.push('\n');
    }
    out
}

fn write_file(path: &Path, body: &str) -> CliResult<()> {
    std::fs::write(path, body).map_err(|e| CliError::Runtime(Error::io(path, e)))
}

fn summary_json(s: &EvalSummary) -> Value {
    json!({
        "label": s.label,
        "samples": s.stream_sum_rate.len(),
        "mean_sum_rate": s.mean_sum_rate,
        "mean_jain": s.mean_jain,
    })
}

fn cmd_baseline(a: BaselineArgs) -> CliResult<()> {
    let Some(name) = &a.method else { return usage("--method is required (mrt, zf, slnr, wslnr)") };
    let method: Method = name.parse().map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let baseline = match (method, a.alpha) {
        (Method::Wslnr, None) => return usage("--method wslnr requires --alpha"),
        (Method::Wslnr, Some(al)) if !(al >= 0.0) => return usage(format!("--alpha must be >= 0, got {al}")),
        (Method::Wslnr, Some(al)) => Baseline::wslnr(al),
        (m, _) => Baseline::new(m),
    };
    let data = required(&a.data, "data")?;
    let out = required(&a.out, "out")?;
    let ds = load_dataset(data)?;
    if method == Method::Zf && ds.config.n_u > ds.config.n_t {
        return Err(CliError::Runtime(Error::RankDeficient(format!(
            "zero-forcing needs n_u <= n_t, but the dataset has {} users and {} antennas",
            ds.config.n_u, ds.config.n_t
        ))));
    }
    let s = evaluate(&baseline, &ds)?;
    write_file(out, &per_sample_csv(&s))?;
    let summary = summary_json(&s);
    let mut m = RunManifest::new("baseline", to_json(&a));
    m.dataset_hashes.insert(data.display().to_string(), ds.content_hash());
    m.outputs = vec![out.display().to_string()];
    m.results = summary.clone();
    m.write(&with_suffix(out, ".manifest.json"))?;
    print_json(&summary);
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let out = required(&a.out, "out")?;
    let (ds, tr, va, _) = load_split(&a.data)?;
    let cfg = a.train.to_config(a.jlb, ds.config.n_t);
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let outcome = train(&cfg, &tr, &va)?;
    let mut prov = Provenance::from_outcome(&cfg, &outcome);
    prov.train_hash = Some(tr.content_hash());
    prov.val_hash = Some(va.content_hash());
    save_checkpoint(out, &outcome.model, &prov)?;
    let history = with_suffix(out, ".history.csv");
    write_file(&history, &outcome.history.to_csv())?;
    let results = json!({
        "selected_epoch": outcome.selected_epoch,
        "epochs_run": outcome.history.epochs.len(),
        "feasible": outcome.feasible,
        "stopped_early": outcome.stopped_early,
        "lambda_final": outcome.dual.lambda,
        "val_sum_rate": prov.val_sum_rate,
        "val_jain": prov.val_jain,
        "epochs": outcome.history.epochs,
    });
    let summary = with_suffix(out, ".summary.json");
    write_file(&summary, &(serde_json::to_string_pretty(&results).map_err(Error::from)? + "\n"))?;
    let mut m = RunManifest::new("train", to_json(&a));
    m.config["resolved"] = to_json(&cfg);
    m.dataset_hashes.insert("data".into(), ds.content_hash());
    m.dataset_hashes.insert("train".into(), tr.content_hash());
    m.dataset_hashes.insert("val".into(), va.content_hash());
    m.outputs = [out.to_path_buf(), history, summary].iter().map(|p| p.display().to_string()).collect();
    m.results = json!({
        "selected_epoch": outcome.selected_epoch,
        "lambda_final": outcome.dual.lambda,
        "val_sum_rate": prov.val_sum_rate,
        "val_jain": prov.val_jain,
    });
    m.write(&with_suffix(out, ".manifest.json"))?;
    print_json(&m.results);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let ckpt = required(&a.checkpoint, "checkpoint")?;
    let out = required(&a.out, "out")?;
    let (ds, tr, va, te) = load_split(&a.data)?;
    let part = match a.subset.as_str() {
        "train" => tr,
        "val" => va,
        "test" => te,
        "all" => ds,
        other => return usage(format!("--subset must be train, val, test or all, got '{other}'")),
    };
    let (model, prov) = load_checkpoint(ckpt)?;
    if model.config.n_t != part.config.n_t {
        return Err(CliError::Runtime(Error::Dimension(format!(
            "checkpoint is for {} antennas, dataset has {}",
            model.config.n_t, part.config.n_t
        ))));
    }
    let s = evaluate(&model, &part)?;
    write_file(out, &per_sample_csv(&s))?;
    let mut summary = summary_json(&s);
    if let Some(p) = &prov {
        summary["j_lb"] = json!(p.dual.j_lb);
        summary["lambda_final"] = json!(p.dual.lambda);
    }
    let mut m = RunManifest::new("eval", to_json(&a));
    m.dataset_hashes.insert(a.subset.clone(), part.content_hash());
    m.outputs = vec![out.display().to_string()];
    m.results = summary.clone();
    m.write(&with_suffix(out, ".manifest.json"))?;
    print_json(&summary);
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let out = required(&a.out, "out")?.to_path_buf();
    let j_lbs = parse_list(&a.jlb, "jlb")?;
    let alphas = parse_list(&a.alpha, "alpha")?;
    if let Some(j) = j_lbs.iter().find(|j| !(0.0..1.0).contains(*j)) {
        return usage(format!("fairness targets must lie in [0, 1), got {j}"));
    }
    let (ds, tr, va, te) = load_split(&a.data)?;
    let base = a.train.to_config(j_lbs[0], ds.config.n_t);
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::Runtime(Error::io(&out, e)))?;

    let wslnr = baseline_sweep(&alphas, &te)?;
    let refs = if te.config.n_u <= te.config.n_t {
        reference_points(&te)
    } else {
        reference_points(&te).into_iter().filter(|e| e.point.method != "zf").collect()
    };
    let runs = pareto_sweep(&j_lbs, &tr, &va, &te, &base)?;
    let mut outputs = Vec::new();
    for r in &runs {
        if let Some(o) = &r.outcome {
            let knob = r.config.j_lb;
            let path = out.join(format!("dnn_jlb_{knob}.fbck"));
            save_checkpoint(&path, &o.model, &Provenance::from_outcome(&r.config, o))?;
            let hist = out.join(format!("dnn_jlb_{knob}.history.csv"));
            write_file(&hist, &o.history.to_csv())?;
            outputs.push(path.display().to_string());
            outputs.push(hist.display().to_string());
        }
    }
    let wpts: Vec<OperatingPoint> = wslnr.iter().map(|e| e.point.clone()).collect();
    let dpts: Vec<OperatingPoint> = runs.iter().map(|r| r.entry.point.clone()).collect();
    let table = pair_table(&wpts, &dpts);
    let entries: Vec<SweepEntry> = wslnr
        .into_iter()
        .chain(refs)
        .chain(runs.into_iter().map(|r| r.entry))
        .collect();
    let meta = json!({
        "command": "sweep",
        "test_samples": te.len(),
        "test_sha256": te.content_hash(),
        "scenario": to_json(&ds.config),
    });
    let results = SweepResults {
        meta: meta.clone(),
        points: entries.iter().map(|e| e.point.clone()).collect(),
        summaries: entries.iter().map(|e| e.summary.clone()).collect(),
        table: table.clone(),
    };
    let results_path = out.join("results.json");
    write_file(&results_path, &(serde_json::to_string(&results).map_err(Error::from)? + "\n"))?;
    outputs.push(results_path.display().to_string());
    for p in emit_reports(&entries, &table, &out, &meta)? {
        outputs.push(p.display().to_string());
    }
    let mut m = RunManifest::new("sweep", to_json(&a));
    m.config["resolved"] = to_json(&base);
    m.dataset_hashes.insert("data".into(), ds.content_hash());
    m.dataset_hashes.insert("train".into(), tr.content_hash());
    m.dataset_hashes.insert("val".into(), va.content_hash());
    m.dataset_hashes.insert("test".into(), te.content_hash());
    m.outputs = outputs;
    m.results = to_json(&results.points);
    m.write(&out.join("manifest.json"))?;
    print_json(&to_json(&table));
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let input = required(&a.results, "results")?;
    let out = required(&a.out, "out")?;
    let text = std::fs::read_to_string(input).map_err(|e| CliError::Runtime(Error::io(input, e)))?;
    let res: SweepResults = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(Error::format(input, format!("bad sweep results: {e}"))))?;
    if res.points.len() != res.summaries.len() {
        return Err(CliError::Runtime(Error::format(input, "points and summaries differ in length")));
    }
    let entries: Vec<SweepEntry> = res
        .points
        .into_iter()
        .zip(res.summaries)
        .map(|(point, summary)| SweepEntry { point, summary })
        .collect();
    let written = emit_reports(&entries, &res.table, out, &res.meta)?;
    let mut m = RunManifest::new("report", to_json(&a));
    m.outputs = written.iter().map(|p| p.display().to_string()).collect();
    m.write(&out.join("report_manifest.json"))?;
    Ok(())
}
