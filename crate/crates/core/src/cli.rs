//! The `beatspace` command line: `ingest`, `train`, `analyze stats|sweep|corners`
//! and `report`. Every command writes CSV (and, where it draws, SVG) into an
//! output directory; reruns with identical inputs rewrite identical bytes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

pub mod svg;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::analysis::{
    self, corner_decode, embed_dataset, linear_grid, perturb_sweep, reconstruction_report,
    report_csv, significant_dims, AnalysisError, SweepBase, CORNER_SIGNS, DEFAULT_TAU,
};
use crate::dataset::{
    build_datasets, dataset_hash, epochs_to_csv_bytes, format_sample, manifest_dataset_hash,
    read_epochs_csv, render_manifest, synthetic_pair, BeatEpoch, DatasetError, PreprocessConfig,
    RecordSummary, TEST_PATIENTS, TRAIN_PATIENTS,
};
use crate::nncore::AdaDeltaConfig;
use crate::pipeline::{
    load_model, provenance_warning, save_model, train, ModelArtifact, PipelineError, TrainConfig,
    BETA_SWEEP,
};
use crate::vae::{ModelKind, VaeError, LATENT_DIM};
use crate::wfdb::{self, BeatLabel, WfdbError};
use svg::{Series, SvgFigure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<WfdbError> for CliError {
    fn from(e: WfdbError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Dsp { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::NegativeBeta(_) => CliError::Usage(e.to_string()),
            VaeError::Nn(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => CliError::Usage(e.to_string()),
            PipelineError::NonFiniteLoss { .. } => CliError::Numerical(e.to_string()),
            PipelineError::Model(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::EmptyDataset => CliError::Data(e.to_string()),
            AnalysisError::Model(inner) => inner.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "beatspace", version, about = "Interpretable linear embeddings of ECG beats")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn WFDB records (or synthetic beats) into train/test epoch CSVs.
    Ingest(IngestArgs),
    /// Train an AE or β-VAE on epoch CSVs.
    Train(TrainArgs),
    /// Inspect a trained model's latent space.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Reconstruction error per split and beat class.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory holding the .hea/.dat/.atr triples.
    #[arg(long, required_unless_present = "synthetic")]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Signal index used from each record.
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Add a 25 Hz lowpass ahead of decimation.
    #[arg(long)]
    pub extra_lowpass: bool,
    /// Generate N synthetic epochs per class and split instead of reading records.
    #[arg(long, value_name = "N", conflicts_with = "data_dir")]
    pub synthetic: Option<usize>,
    /// Per-sample noise for --synthetic.
    #[arg(long, default_value_t = 0.05)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Ae,
    BetaVae,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ae => ModelKind::Ae,
            ModelArg::BetaVae => ModelKind::BetaVae,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::BetaVae)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.95)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train one β-VAE per value in 0.01, 0.05, 0.1, 0.25, 0.5, 1.0.
    #[arg(long)]
    pub beta_sweep: bool,
    /// Significance threshold used in the sweep summary.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Per-dimension mean and std of the embedding.
    Stats(StatsArgs),
    /// Decode while moving one latent dimension over a grid.
    Sweep(SweepArgs),
    /// Decode the four (±2, ±2) corners of a latent plane.
    Corners(CornersArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Epoch CSV to embed.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Manifest to check provenance against (default: manifest.txt next to --data).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub epoch_index: usize,
    /// Hold the other dimensions at zero instead of the epoch's encoding.
    #[arg(long)]
    pub from_origin: bool,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 7)]
    pub grid_points: usize,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CornersArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Two latent dimensions, e.g. `0,3`.
    #[arg(long, value_parser = parse_dims)]
    pub dims: (usize, usize),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_dims(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated dimensions, got {s:?}"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("not a dimension index: {t:?}"))
    };
    Ok((parse(a)?, parse(b)?))
}

/// Parses `args` (including the program name) and runs the command, printing
/// errors to stderr. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Analyze(AnalyzeCommand::Stats(a)) => cmd_stats(a),
        Command::Analyze(AnalyzeCommand::Sweep(a)) => cmd_sweep(a),
        Command::Analyze(AnalyzeCommand::Corners(a)) => cmd_corners(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file", path.display())))
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_epochs(path: &Path) -> Result<(Vec<BeatEpoch>, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let epochs = read_epochs_csv(bytes.as_slice())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if epochs.is_empty() {
        return Err(CliError::Data(format!("{}: no epochs", path.display())));
    }
    Ok((epochs, bytes))
}

fn load_artifact(path: &Path) -> Result<ModelArtifact> {
    load_model(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Warns on stderr if the manifest beside the data disagrees with the hash
/// the model was trained on.
fn check_provenance(artifact: &ModelArtifact, data: &Path, manifest: Option<&Path>) {
    let path = match manifest {
        Some(p) => p.to_path_buf(),
        None => data
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("manifest.txt"),
    };
    let Ok(text) = fs::read_to_string(&path) else {
        if manifest.is_some() {
            eprintln!("warning: cannot read manifest {}", path.display());
        }
        return;
    };
    match manifest_dataset_hash(&text) {
        Some(hash) => {
            if let Some(w) = provenance_warning(artifact, &hash) {
                eprintln!("{w}");
            }
        }
        None => eprintln!("warning: {} has no dataset_hash", path.display()),
    }
}

fn example_figure(caption: &str, epochs: &[BeatEpoch]) -> SvgFigure {
    let mut fig = SvgFigure::new(caption, 2);
    for (label, color) in [(BeatLabel::Normal, "#1f77b4"), (BeatLabel::Paced, "#d62728")] {
        let series: Vec<Series> = epochs
            .iter()
            .filter(|e| e.label == label)
            .take(5)
            .map(|e| {
                Series::solid(
                    format!("{} #{}", e.patient_id, e.beat_index),
                    &e.samples,
                    color,
                )
            })
            .collect();
        let title = match label {
            BeatLabel::Normal => "Normal",
            BeatLabel::Paced => "Paced",
        };
        fig = fig.panel(title, series);
    }
    fig
}

pub fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let config = PreprocessConfig {
        channel: args.channel,
        extra_lowpass: args.extra_lowpass,
        ..PreprocessConfig::default()
    };
    let (train_set, test_set, summaries) = match (args.synthetic, &args.data_dir) {
        (Some(n), _) => {
            if n == 0 {
                return Err(CliError::Usage("--synthetic needs at least one epoch per class".into()));
            }
            if !(args.noise_sd >= 0.0 && args.noise_sd.is_finite()) {
                return Err(CliError::Usage(format!("--noise-sd must be >= 0, got {}", args.noise_sd)));
            }
            let train_set = synthetic_pair(n, args.noise_sd, args.seed);
            let test_set = synthetic_pair(n, args.noise_sd, args.seed.wrapping_add(1));
            let summary = |name: &str| RecordSummary {
                record: name.to_string(),
                normal: n,
                paced: n,
                ..Default::default()
            };
            (train_set, test_set, vec![summary("synthetic-train"), summary("synthetic-test")])
        }
        (None, Some(dir)) => {
            if !dir.is_dir() {
                return Err(CliError::Data(format!("{}: not a directory", dir.display())));
            }
            let names: Vec<&str> = TRAIN_PATIENTS.iter().chain(&TEST_PATIENTS).copied().collect();
            let missing: Vec<String> = names
                .iter()
                .filter(|n| {
                    ["hea", "dat", "atr"]
                        .iter()
                        .any(|ext| !dir.join(format!("{n}.{ext}")).is_file())
                })
                .map(|n| n.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(DatasetError::MissingRecords(missing).into());
            }
            let records = names
                .iter()
                .map(|n| wfdb::load_record(dir, n))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let built = build_datasets(&records, &config)?;
            (built.train.epochs, built.test.epochs, built.summaries)
        }
        (None, None) => return Err(CliError::Usage("either --data-dir or --synthetic is required".into())),
    };

    // Everything is computed before the first write, so a failure leaves
    // no partial output behind.
    let train_csv = epochs_to_csv_bytes(&train_set);
    let test_csv = epochs_to_csv_bytes(&test_set);
    let hash = dataset_hash(&train_csv, &test_csv);
    let manifest = render_manifest(&config, &hash, &summaries);
    let figure = example_figure("Example training epochs", &train_set).render();

    ensure_dir(&args.out)?;
    write_file(&args.out.join("train.csv"), &train_csv)?;
    write_file(&args.out.join("test.csv"), &test_csv)?;
    write_file(&args.out.join("manifest.txt"), manifest)?;
    write_file(&args.out.join("epochs.svg"), figure)?;
    println!(
        "ingested {} train and {} test epochs into {} (dataset {})",
        train_set.len(),
        test_set.len(),
        args.out.display(),
        &hash[..12]
    );
    Ok(())
}

fn train_config(args: &TrainArgs, kind: ModelKind, beta: f64) -> TrainConfig {
    TrainConfig {
        model_kind: kind,
        beta,
        epochs: args.epochs,
        batch_size: args.batch_size,
        adadelta: AdaDeltaConfig {
            rho: args.rho,
            epsilon: args.epsilon,
        },
        seed: args.seed,
    }
}

fn beta_label(beta: f64) -> String {
    format!("beta-{beta}")
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    require_file(&args.train)?;
    require_file(&args.test)?;
    let kind = ModelKind::from(args.model);
    if args.beta_sweep && kind == ModelKind::Ae {
        return Err(CliError::Usage("--beta-sweep applies to --model beta-vae only".into()));
    }
    let runs: Vec<f64> = if args.beta_sweep {
        BETA_SWEEP.to_vec()
    } else {
        vec![args.beta]
    };
    for &beta in &runs {
        train_config(args, kind, beta).validate()?;
    }
    let (train_set, train_bytes) = read_epochs(&args.train)?;
    let (test_set, test_bytes) = read_epochs(&args.test)?;
    let hash = dataset_hash(&train_bytes, &test_bytes);

    ensure_dir(&args.out)?;
    let mut summary = String::from("beta,l_r,d_kl,significant_dims\n");
    for &beta in &runs {
        let config = train_config(args, kind, beta);
        let (model, history) = train(&train_set, &test_set, &config)?;
        let dir = if args.beta_sweep {
            args.out.join(beta_label(beta))
        } else {
            args.out.clone()
        };
        ensure_dir(&dir)?;
        write_file(&dir.join("history.csv"), history.to_csv(kind))?;
        let last = history.epochs.last().expect("at least one epoch");
        if args.beta_sweep {
            let (_, stats) = embed_dataset(&model, &train_set)?;
            let sig = significant_dims(&stats, args.tau).len();
            let _ = writeln!(
                summary,
                "{beta},{},{},{sig}",
                format_sample(last.l_r),
                format_sample(last.d_kl)
            );
            println!(
                "beta {beta}: L_R {:.4}, D_KL {:.4}, {sig} significant dims (tau {})",
                last.l_r, last.d_kl, args.tau
            );
        } else {
            println!(
                "trained {} for {} epochs: loss {:.4}, L_R {:.4}{}",
                kind.name(),
                config.epochs,
                last.loss,
                last.l_r,
                if kind == ModelKind::BetaVae {
                    format!(", D_KL {:.4}", last.d_kl)
                } else {
                    String::new()
                }
            );
        }
        let artifact = ModelArtifact::new(model, config, hash.clone());
        save_model(&artifact, &dir.join("model.bin"))?;
    }
    if args.beta_sweep {
        write_file(&args.out.join("beta_sweep.csv"), summary)?;
    }
    Ok(())
}

pub fn cmd_stats(args: &StatsArgs) -> Result<()> {
    require_file(&args.model)?;
    require_file(&args.data)?;
    let artifact = load_artifact(&args.model)?;
    check_provenance(&artifact, &args.data, args.manifest.as_deref());
    let (epochs, _) = read_epochs(&args.data)?;
    let (_, stats) = embed_dataset(&artifact.model, &epochs)?;
    let is_vae = artifact.model.kind() == ModelKind::BetaVae;
    let tau = is_vae.then_some(args.tau);

    println!("dim  std(mu)   mean(mu)  significant");
    let sig = tau.map(|t| significant_dims(&stats, t));
    for d in stats.ranked() {
        let flag = match &sig {
            Some(list) if list.contains(&d) => "yes".to_string(),
            Some(_) => "no".to_string(),
            None => "n/a (AE)".to_string(),
        };
        println!(
            "{d:>3}  {:>8.4}  {:>8.4}  {flag}",
            stats.std_mu[d], stats.mean_mu[d]
        );
    }
    if let Some(list) = &sig {
        println!("{} significant dimension(s) at tau {}: {:?}", list.len(), args.tau, list);
    }
    ensure_dir(&args.out)?;
    write_file(&args.out.join("stats.csv"), stats.to_csv(tau))?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    require_file(&args.model)?;
    require_file(&args.data)?;
    if args.dim >= LATENT_DIM {
        return Err(CliError::Usage(format!(
            "--dim {} out of range 0..{LATENT_DIM}",
            args.dim
        )));
    }
    if args.grid_points == 0 {
        return Err(CliError::Usage("--grid-points must be positive".into()));
    }
    let artifact = load_artifact(&args.model)?;
    check_provenance(&artifact, &args.data, args.manifest.as_deref());
    let (epochs, _) = read_epochs(&args.data)?;
    let epoch = epochs.get(args.epoch_index).ok_or_else(|| {
        CliError::Usage(format!(
            "--epoch-index {} out of range 0..{}",
            args.epoch_index,
            epochs.len()
        ))
    })?;
    let base = if args.from_origin {
        SweepBase::Origin
    } else {
        SweepBase::Encoded
    };
    let grid = linear_grid(args.grid_min, args.grid_max, args.grid_points);
    let result = perturb_sweep(&artifact.model, epoch, args.dim, &grid, base)?;

    let caption = format!(
        "{}: dimension {} swept over [{}, {}] {}",
        artifact.model.kind().name(),
        args.dim,
        args.grid_min,
        args.grid_max,
        if args.from_origin {
            "from the origin".to_string()
        } else {
            format!("around epoch {} ({})", args.epoch_index, epoch.label)
        }
    );
    let mut fig = SvgFigure::new(caption, grid.len());
    for (v, decoded) in result.grid.iter().zip(&result.decoded) {
        let mut series = Vec::new();
        if base == SweepBase::Encoded {
            series.push(Series::dashed("input epoch", &epoch.samples, "#aaaaaa"));
        }
        series.push(Series::solid(format!("z{} = {v}", args.dim), decoded, "#1f77b4"));
        fig = fig.panel(format!("z{} = {v:.2}", args.dim), series);
    }
    let stem = if args.from_origin {
        format!("sweep_dim{}_origin", args.dim)
    } else {
        format!("sweep_dim{}_epoch{}", args.dim, args.epoch_index)
    };
    ensure_dir(&args.out)?;
    write_file(&args.out.join(format!("{stem}.csv")), result.to_csv())?;
    write_file(&args.out.join(format!("{stem}.svg")), fig.render())?;
    Ok(())
}

pub fn cmd_corners(args: &CornersArgs) -> Result<()> {
    require_file(&args.model)?;
    let artifact = load_artifact(&args.model)?;
    let result = corner_decode(&artifact.model, args.dims)?;
    let (a, b) = args.dims;
    let caption = format!(
        "{}: corners of the (z{a}, z{b}) plane, other dimensions zero",
        artifact.model.kind().name()
    );
    let mut fig = SvgFigure::new(caption, 2);
    for ((sa, sb), decoded) in CORNER_SIGNS.iter().zip(&result.decoded) {
        let title = format!(
            "z{a} = {}, z{b} = {}",
            sa * analysis::CORNER_VALUE,
            sb * analysis::CORNER_VALUE
        );
        fig = fig.panel(title.clone(), vec![Series::solid(title, decoded, "#1f77b4")]);
    }
    ensure_dir(&args.out)?;
    let stem = format!("corners_{a}_{b}");
    write_file(&args.out.join(format!("{stem}.csv")), result.to_csv())?;
    write_file(&args.out.join(format!("{stem}.svg")), fig.render())?;
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    for p in [&args.model, &args.train, &args.test] {
        require_file(p)?;
    }
    let artifact = load_artifact(&args.model)?;
    let (train_set, train_bytes) = read_epochs(&args.train)?;
    let (test_set, test_bytes) = read_epochs(&args.test)?;
    if let Some(w) = provenance_warning(&artifact, &dataset_hash(&train_bytes, &test_bytes)) {
        eprintln!("{w}");
    }
    let rows = reconstruction_report(&artifact.model, &[("train", &train_set), ("test", &test_set)])?;
    println!("split  class  count       L_R");
    for r in &rows {
        let class = r.class.map_or("all".to_string(), |c| c.tag().to_string());
        println!("{:<5}  {:<5}  {:>5}  {:>8.5}", r.split, class, r.count, r.l_r);
    }
    ensure_dir(&args.out)?;
    write_file(&args.out.join("report.csv"), report_csv(&rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parser() {
        assert_eq!(parse_dims("0,3"), Ok((0, 3)));
        assert_eq!(parse_dims(" 2 , 9"), Ok((2, 9)));
        assert!(parse_dims("1").is_err());
        assert!(parse_dims("a,1").is_err());
    }

    #[test]
    fn defaults_match_training_contract() {
        let cli = Cli::try_parse_from(["beatspace", "train", "--train", "a", "--test", "b", "--out", "o"]).unwrap();
        let Command::Train(t) = cli.command else { panic!() };
        let cfg = train_config(&t, t.model.into(), t.beta);
        assert_eq!(cfg, TrainConfig::default());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["beatspace", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["beatspace", "ingest", "--out", "x"]), EXIT_USAGE);
        assert_eq!(main_with_args(["beatspace", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_classes() {
        let e: CliError = PipelineError::NonFiniteLoss { epoch: 1, batch: 2 }.into();
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
        let e: CliError = PipelineError::Config("x".into()).into();
        assert_eq!(e.exit_code(), EXIT_USAGE);
        let e: CliError = DatasetError::MissingRecords(vec!["217".into()]).into();
        assert_eq!(e.exit_code(), EXIT_DATA);
        assert!(e.to_string().contains("217"));
        let e: CliError = AnalysisError::Dimension(12).into();
        assert_eq!(e.exit_code(), EXIT_USAGE);
    }
}
