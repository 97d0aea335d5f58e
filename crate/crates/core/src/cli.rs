//! Command-line front end: `verify`, `train` and `bench`.
//!
//! Settings resolve as flag > JSON config file > built-in default. The seed
//! additionally falls back to `PRPL_SEED` before the default of 0.
//! Exit codes: 0 success, 1 failed check, 2 usage or configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::bench::{self, BenchConfig, Operation, ScalingReport, Structure};
use crate::equivalence::{self, DeltaSet, ReportLine, Tolerance};
use crate::error::{Error, Result};
use crate::losses::{LossKind, LossSpec};
use crate::replay::{SchemeConfig, SchemeKind};
use crate::rng::{derive_seed, seeded, unit_f64};
use crate::toyrl::{self, ChainMdp, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const SEED_ENV: &str = "PRPL_SEED";

/// Variance sweep exponents.
pub const SWEEP_EXPONENTS: [f64; 6] = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Parser)]
#[command(name = "prpl", version, about = "Prioritized replay toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the loss/sampling equivalences on random error sets.
    Verify(VerifyArgs),
    /// Tabular Q-learning on the chain MDP.
    Train(Box<TrainArgs>),
    /// Sum tree against linear-scan sampling.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Default,
    Atari,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat JSON file with defaults for this command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Add this offset to every left-hand expected gradient.
    #[arg(long)]
    pub perturb_grad: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyFile {
    seed: Option<u64>,
    output: Option<PathBuf>,
    datasets: Option<usize>,
    max_n: Option<usize>,
    perturb_grad: Option<f64>,
    format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    /// LAP hyper-parameter preset.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Priority exponent of the scheme.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Priority floor of LAP.
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Loss exponent for PAL / PER-equivalent losses.
    #[arg(long)]
    pub loss_alpha: Option<f64>,
    /// Huber / PAL knee.
    #[arg(long)]
    pub loss_kappa: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub target_copy_period: Option<usize>,
    #[arg(long)]
    pub buffer_capacity: Option<usize>,
    #[arg(long)]
    pub exploration_epsilon: Option<f64>,
    #[arg(long)]
    pub eval_period: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub n_states: Option<usize>,
    #[arg(long)]
    pub slip: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Write the final replay buffer snapshot here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    seed: Option<u64>,
    output: Option<PathBuf>,
    scheme: Option<String>,
    loss: Option<String>,
    preset: Option<Preset>,
    alpha: Option<f64>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    kappa: Option<f64>,
    loss_alpha: Option<f64>,
    loss_kappa: Option<f64>,
    tau: Option<f64>,
    steps: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    target_copy_period: Option<usize>,
    buffer_capacity: Option<usize>,
    exploration_epsilon: Option<f64>,
    eval_period: Option<usize>,
    eval_episodes: Option<usize>,
    n_states: Option<usize>,
    slip: Option<f64>,
    gamma: Option<f64>,
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',')]
    pub capacities: Option<Vec<usize>>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Comma-separated subset of sample,update,mixed.
    #[arg(long, value_delimiter = ',')]
    pub operations: Option<Vec<String>>,
    /// Comma-separated subset of sumtree,naive.
    #[arg(long, value_delimiter = ',')]
    pub structures: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Fail unless the mixed workload shows the expected scaling.
    #[arg(long)]
    pub assert_scaling: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchFile {
    seed: Option<u64>,
    output: Option<PathBuf>,
    capacities: Option<Vec<usize>>,
    batch_size: Option<usize>,
    iterations: Option<usize>,
    repetitions: Option<usize>,
    operations: Option<Vec<String>>,
    structures: Option<Vec<String>>,
    format: Option<Format>,
    assert_scaling: Option<bool>,
}

#[derive(Debug)]
enum Fail {
    Usage(String),
    Check(String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Audit(_) => Fail::Check(e.to_string()),
            other => Fail::Usage(other.to_string()),
        }
    }
}

impl From<io::Error> for Fail {
    fn from(e: io::Error) -> Self {
        Fail::Check(e.to_string())
    }
}

fn load_file<T: DeserializeOwned + Default>(path: Option<&Path>) -> std::result::Result<T, Fail> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fail::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Fail::Usage(format!("bad config {}: {e}", path.display())))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> std::result::Result<u64, Fail> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Fail::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn open_output(path: Option<&Path>) -> std::result::Result<Box<dyn Write>, Fail> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Fail::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Train(a) => cmd_train(*a),
        Command::Bench(a) => cmd_bench(a),
    };
    match outcome {
        Ok(code) => code,
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Fail::Check(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Resolved `verify` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    pub datasets: usize,
    pub max_n: usize,
    pub perturb_grad: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            datasets: 10_000,
            max_n: 1024,
            perturb_grad: 0.0,
        }
    }
}

const KAPPAS: [f64; 4] = [0.01, 0.1, 1.0, 3.0];

/// One randomized error set with the parameters its checks run at.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCase {
    pub ds: DeltaSet,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub tau: f64,
}

/// The `index`-th case of the corpus for `seed`, drawn from its own stream.
pub fn dataset_case(seed: u64, index: usize, max_n: usize) -> DatasetCase {
    let mut rng = seeded(derive_seed(seed, index as u64));
    let kappa = KAPPAS[crate::rng::below(&mut rng, KAPPAS.len() as u64) as usize];
    let alpha = 0.05 + 0.95 * unit_f64(&mut rng);
    let beta = unit_f64(&mut rng);
    let tau = if index.is_multiple_of(2) { 1.0 } else { 2.0 };
    let ds = equivalence::random_delta_set(&mut rng, max_n, kappa);
    DatasetCase { ds, alpha, beta, kappa, tau }
}

/// Every check for dataset `index`, in a fixed order.
pub fn verify_dataset(cfg: &VerifyConfig, index: usize) -> Result<Vec<ReportLine>> {
    let DatasetCase { ds, alpha, beta, kappa, tau } = dataset_case(cfg.seed, index, cfg.max_n);
    let n = ds.len();
    let base = json!({ "dataset": index, "n": n });
    let with = |extra: Value| {
        let mut p = base.clone();
        if let (Value::Object(m), Value::Object(e)) = (&mut p, extra) {
            m.extend(e);
        }
        p
    };
    let perturb = |r: equivalence::EquivalenceReport, tol| {
        if cfg.perturb_grad != 0.0 {
            r.perturbed(cfg.perturb_grad, tol)
        } else {
            r
        }
    };

    let mut out = Vec::with_capacity(10);
    let tol = Tolerance::new(1e-10, 1e-10);
    let r = equivalence::check_lap_pal(&ds, alpha, kappa, tol)?;
    out.push(ReportLine::equivalence(
        "lap_pal",
        with(json!({ "alpha": alpha, "kappa": kappa })),
        &perturb(r, tol),
    ));

    let tol = Tolerance::new(1e-12, 1e-12);
    let r = equivalence::check_mse_l1(&ds, tol)?;
    out.push(ReportLine::equivalence("mse_l1", base.clone(), &perturb(r, tol)));

    let tol = Tolerance::new(1e-10, 1e-10);
    let r = equivalence::check_per_equivalent_loss(&ds, tau, alpha, beta, tol)?;
    out.push(ReportLine::equivalence(
        "per_equivalent",
        with(json!({ "tau": tau, "alpha": alpha, "beta": beta })),
        &perturb(r, tol),
    ));
    let r = equivalence::check_per_huber_equivalent_loss(&ds, alpha, beta, tol)?;
    out.push(ReportLine::equivalence(
        "per_huber_equivalent",
        with(json!({ "alpha": alpha, "beta": beta })),
        &perturb(r, tol),
    ));

    for r in &equivalence::variance_sweep(&ds, &LossSpec::mse(), &SWEEP_EXPONENTS, 1e-12)? {
        out.push(ReportLine::variance("variance", base.clone(), r));
    }
    Ok(out)
}

/// All dataset checks, fanned out over the rayon pool; order is by dataset.
pub fn verify_all(cfg: &VerifyConfig) -> Result<Vec<ReportLine>> {
    let per: Vec<Vec<ReportLine>> = (0..cfg.datasets)
        .into_par_iter()
        .map(|i| verify_dataset(cfg, i))
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

pub fn write_report<W: Write>(lines: &[ReportLine], format: Format, mut w: W) -> io::Result<()> {
    if format == Format::Csv {
        writeln!(w, "{}", ReportLine::CSV_HEADER)?;
    }
    for l in lines {
        match format {
            Format::Json => writeln!(w, "{}", l.to_json())?,
            Format::Csv => writeln!(w, "{}", l.to_csv())?,
        }
    }
    w.flush()
}

fn cmd_verify(a: VerifyArgs) -> std::result::Result<i32, Fail> {
    let file: VerifyFile = load_file(a.common.config.as_deref())?;
    let d = VerifyConfig::default();
    let cfg = VerifyConfig {
        seed: resolve_seed(a.common.seed, file.seed)?,
        datasets: a.datasets.or(file.datasets).unwrap_or(d.datasets),
        max_n: a.max_n.or(file.max_n).unwrap_or(d.max_n),
        perturb_grad: a.perturb_grad.or(file.perturb_grad).unwrap_or(d.perturb_grad),
    };
    if cfg.max_n == 0 {
        return Err(Fail::Usage("max-n must be positive".into()));
    }
    if !cfg.perturb_grad.is_finite() {
        return Err(Fail::Usage("perturb-grad must be finite".into()));
    }
    let format = a.format.or(file.format).unwrap_or(Format::Json);
    let output = a.common.output.or(file.output);
    let mut w = open_output(output.as_deref())?;
    let lines = verify_all(&cfg).map_err(|e| Fail::Check(e.to_string()))?;
    write_report(&lines, format, &mut w)?;
    let failed = lines.iter().filter(|l| !l.pass).count();
    eprintln!("{} checks over {} datasets, {failed} failed", lines.len(), cfg.datasets);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, Fail> {
    s.parse().map_err(Fail::from)
}

fn cmd_train(a: TrainArgs) -> std::result::Result<i32, Fail> {
    let f: TrainFile = load_file(a.common.config.as_deref())?;
    let kind: SchemeKind = parse(a.scheme.as_deref().or(f.scheme.as_deref()).unwrap_or("uniform"))?;
    let preset = a.preset.or(f.preset).unwrap_or(Preset::Default);
    let mut scheme = match (kind, preset) {
        (SchemeKind::Lap, Preset::Atari) => SchemeConfig::lap_atari(),
        (_, Preset::Atari) => return Err(Fail::Usage("the atari preset applies to the lap scheme only".into())),
        (k, Preset::Default) => SchemeConfig::default_for(k),
    };
    if let Some(v) = a.alpha.or(f.alpha) {
        scheme.alpha = v;
    }
    if let Some(v) = a.beta.or(f.beta) {
        scheme.beta = v;
    }
    if let Some(v) = a.epsilon.or(f.epsilon) {
        scheme.epsilon = v;
    }
    if let Some(v) = a.kappa.or(f.kappa) {
        scheme.kappa = v;
    }

    let loss_kind: LossKind = parse(a.loss.as_deref().or(f.loss.as_deref()).unwrap_or("mse"))?;
    let loss_alpha = a.loss_alpha.or(f.loss_alpha);
    let loss_kappa = a.loss_kappa.or(f.loss_kappa).unwrap_or(1.0);
    let loss = match loss_kind {
        LossKind::L1 => LossSpec::l1(),
        LossKind::Mse => LossSpec::mse(),
        LossKind::Huber => LossSpec::huber(loss_kappa),
        LossKind::Pal => LossSpec::pal(loss_alpha.unwrap_or(SchemeConfig::lap().alpha), loss_kappa),
        LossKind::PerTau => {
            let per = SchemeConfig::per();
            LossSpec::per_tau(
                a.tau.or(f.tau).unwrap_or(2.0),
                loss_alpha.unwrap_or(per.alpha),
                a.beta.or(f.beta).unwrap_or(per.beta),
            )
        }
    };

    let d = TrainConfig::default();
    let cfg = TrainConfig {
        scheme,
        loss,
        steps: a.steps.or(f.steps).unwrap_or(d.steps),
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        learning_rate: a.learning_rate.or(f.learning_rate).unwrap_or(d.learning_rate),
        target_copy_period: a.target_copy_period.or(f.target_copy_period).unwrap_or(d.target_copy_period),
        buffer_capacity: a.buffer_capacity.or(f.buffer_capacity).unwrap_or(d.buffer_capacity),
        exploration_epsilon: a.exploration_epsilon.or(f.exploration_epsilon).unwrap_or(d.exploration_epsilon),
        seed: resolve_seed(a.common.seed, f.seed)?,
        eval_period: a.eval_period.or(f.eval_period).unwrap_or(d.eval_period),
        eval_episodes: a.eval_episodes.or(f.eval_episodes).unwrap_or(d.eval_episodes),
    };
    cfg.validate()?;
    let mdp = ChainMdp::new(
        a.n_states.or(f.n_states).unwrap_or(5),
        a.slip.or(f.slip).unwrap_or(0.1),
        a.gamma.or(f.gamma).unwrap_or(0.99),
    )?;
    let output = a.common.output.or(f.output);
    let checkpoint = a.checkpoint.or(f.checkpoint);
    let mut w = open_output(output.as_deref())?;

    let outcome = toyrl::train_full(&mdp, &cfg).map_err(|e| Fail::Check(e.to_string()))?;
    toyrl::write_eval_csv(&outcome.records, &mut w)?;
    w.flush()?;
    if let Some(path) = checkpoint {
        let file = File::create(&path).map_err(|e| Fail::Usage(format!("cannot create {}: {e}", path.display())))?;
        outcome.buffer.write_snapshot(BufWriter::new(file))?;
    }
    Ok(EXIT_OK)
}

fn cmd_bench(a: BenchArgs) -> std::result::Result<i32, Fail> {
    let f: BenchFile = load_file(a.common.config.as_deref())?;
    let d = BenchConfig::default();
    let operations = match a.operations.or(f.operations) {
        Some(v) => v.iter().map(|s| parse::<Operation>(s)).collect::<std::result::Result<_, _>>()?,
        None => d.operations.clone(),
    };
    let structures = match a.structures.or(f.structures) {
        Some(v) => v.iter().map(|s| parse::<Structure>(s)).collect::<std::result::Result<_, _>>()?,
        None => d.structures.clone(),
    };
    let cfg = BenchConfig {
        capacities: a.capacities.or(f.capacities).unwrap_or(d.capacities),
        batch_size: a.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        iterations: a.iterations.or(f.iterations).unwrap_or(d.iterations),
        repetitions: a.repetitions.or(f.repetitions).unwrap_or(d.repetitions),
        operations,
        structures,
        seed: resolve_seed(a.common.seed, f.seed)?,
    };
    cfg.validate()?;
    let assert_scaling = a.assert_scaling || f.assert_scaling.unwrap_or(false);
    let format = a.format.or(f.format).unwrap_or(Format::Csv);
    let output = a.common.output.or(f.output);
    let mut w = open_output(output.as_deref())?;

    let results = bench::run_bench(&cfg)?;
    match format {
        Format::Csv => bench::write_bench_csv(&results, &mut w)?,
        Format::Json => {
            for r in &results {
                writeln!(w, "{}", serde_json::to_string(r).expect("result serialises"))?;
            }
        }
    }
    w.flush()?;
    if assert_scaling {
        let report: ScalingReport = bench::scaling_report(&results, Operation::Mixed)?;
        eprintln!(
            "scaling {}..{}: sumtree x{:.2}, naive x{:.2}, sumtree faster: {}",
            report.small, report.large, report.sumtree_ratio, report.naive_ratio, report.sumtree_faster
        );
        if !report.pass() {
            return Ok(EXIT_FAILURE);
        }
    }
    Ok(EXIT_OK)
}
