use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ensemblekit::augment::{
    apply_pipeline, read_image, write_pnm, write_raw, AugmentConfig, AugmentError, Image,
};
use ensemblekit::ensemble::{
    average_probs, label_fusion_predict, plurality_vote, EnsembleError, Strategy, TieBreak,
};
use ensemblekit::fusion::{train, FusionError, FusionNetwork, TrainConfig};
use ensemblekit::harness::{
    check_published_rows, parse_published_rows, published_rows, write_run, HarnessError,
    RankedReport, ReportFormat, RunConfig, FUSION_NET_FILE, TRAINING_LOG_FILE,
};
use ensemblekit::metrics::{
    evaluate, reliability_bins, MetricsError, MetricsReport, DEFAULT_ECE_BINS,
};
use ensemblekit::predictions::{
    align_panel, load_prediction_set, PredictionError, PredictionPanel, PredictionSet,
};
use ensemblekit::rng::SplitMix64;
use ensemblekit::synthgen::{generate_calibrated_set, generate_panel, SynthError, SyntheticSpec};

const OUT_ENV: &str = "ENSEMBLEKIT_OUT";

/// Evaluate, ensemble and fuse binary classifier predictions.
#[derive(Debug, Parser)]
#[command(name = "ensemblekit", version)]
struct Cli {
    /// Seed for every stochastic step (overrides seeds in config files)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print AUC, F1, ECE and the overall score for each predictions file
    Metrics(MetricsArgs),
    /// Combine several models' predictions into one fused predictions file
    Ensemble(EnsembleArgs),
    /// Train the label-fusion network on several models' predictions
    FuseTrain(FuseTrainArgs),
    /// Resize, greyscale, normalize, flip and rotate an image
    Augment(AugmentArgs),
    /// Generate synthetic prediction files with known AUC
    Synth(SynthArgs),
    /// Evaluate models and all ensembles, and write a ranked report
    Report(ReportArgs),
    /// Recompute the overall score of published result rows
    CheckTables(CheckTablesArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricsFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Markdown,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Plurality,
    Averaging,
    LabelFusion,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TieArg {
    Positive,
    Negative,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Predictions files (CSV `sample_id,label,prob` or JSON)
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Number of equal-width ECE bins
    #[arg(long, default_value_t = DEFAULT_ECE_BINS)]
    bins: usize,
    /// Output format
    #[arg(long, value_enum, default_value_t = MetricsFormat::Text)]
    format: MetricsFormat,
    /// Also write reliability-diagram bins as JSON to this path
    #[arg(long, value_name = "PATH")]
    reliability: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Member predictions files, one per model
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// How member predictions are combined
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Trained fusion network (required for label-fusion)
    #[arg(long, value_name = "PATH")]
    net: Option<PathBuf>,
    /// Probability at or above which a member votes positive
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Outcome of an exact plurality tie
    #[arg(long, value_enum, default_value_t = TieArg::Positive)]
    tie_break: TieArg,
    /// Output CSV path (default: stdout)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseTrainArgs {
    /// Member predictions files, one per model (order fixes network inputs)
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Training config JSON (defaults apply to missing keys)
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for fusion_net.json and training_log.csv
    #[arg(long, env = OUT_ENV, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Input image (PGM/PPM, or .raw dump)
    input: PathBuf,
    /// Output image: .raw keeps normalized values, PGM/PPM are denormalized
    output: PathBuf,
    /// Augmentation config JSON; other flags override it
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output width in pixels [default: 224]
    #[arg(long)]
    width: Option<usize>,
    /// Output height in pixels [default: 224]
    #[arg(long)]
    height: Option<usize>,
    /// Maximum absolute rotation in degrees [default: 45]
    #[arg(long)]
    max_rotation: Option<f64>,
    /// Probability of a horizontal flip [default: 0.5]
    #[arg(long)]
    flip_h_prob: Option<f64>,
    /// Probability of a vertical flip [default: 0.5]
    #[arg(long)]
    flip_v_prob: Option<f64>,
    /// Keep colour channels instead of converting to greyscale
    #[arg(long)]
    no_greyscale: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Synthetic spec JSON (models, class sizes, correlation, seed)
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Directory for one CSV per model plus manifest.json
    #[arg(long, env = OUT_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Also write calibrated.csv with this many perfectly calibrated samples
    #[arg(long, value_name = "N")]
    calibrated: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run config JSON (inputs, bins, fusion settings, formats)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (default: config `output_dir`, then $ENSEMBLEKIT_OUT)
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckTablesArgs {
    /// CSV with `name,auc,f1,ece,overall` (default: bundled published rows)
    #[arg(long, value_name = "PATH")]
    rows: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = TableFormat::Text)]
    format: TableFormat,
}

/// Exit code 2 for bad input, 1 for everything else.
#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<PredictionError> for Failure {
    fn from(e: PredictionError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<FusionError> for Failure {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::NonFiniteGradient { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<EnsembleError> for Failure {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Fusion(f) => f.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<AugmentError> for Failure {
    fn from(e: AugmentError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Fusion(f) => f.into(),
            HarnessError::Ensemble(f) => f.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes)
        .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))
}

fn emit(text: &str) -> CmdResult {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Internal(format!("cannot write to stdout: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Model name for a predictions file: its file stem.
fn model_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_set(path: &Path) -> Result<PredictionSet<f64>, Failure> {
    load_prediction_set(path, &model_name(path))
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_panel(files: &[PathBuf]) -> Result<PredictionPanel<f64>, Failure> {
    let sets = files
        .iter()
        .map(|f| load_set(f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(align_panel(sets)?)
}

fn announce_seed(seed: u64) {
    eprintln!("seed: {seed}");
}

fn cmd_metrics(args: &MetricsArgs, seed: Option<u64>) -> CmdResult {
    announce_seed(seed.unwrap_or(0));
    let mut reports: Vec<MetricsReport<f64>> = Vec::new();
    let mut bins = serde_json::Map::new();
    for path in &args.files {
        let set = load_set(path)?;
        let report = evaluate(&set, args.bins)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        if args.reliability.is_some() {
            let stats = reliability_bins(&set.probs(), &set.labels(), args.bins)?;
            bins.insert(
                report.model_name.clone(),
                serde_json::to_value(stats).expect("bins serialize"),
            );
        }
        reports.push(report);
    }
    let out = match args.format {
        MetricsFormat::Text => reports
            .iter()
            .map(|r| format!("{}: {}\n", r.model_name, r.summary_line()))
            .collect::<String>(),
        MetricsFormat::Json => {
            serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n"
        }
        MetricsFormat::Csv => {
            let mut s = String::from("model,auc,f1,ece,overall\n");
            for r in &reports {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.model_name, r.auc, r.f1, r.ece, r.overall
                );
            }
            s
        }
    };
    if let Some(path) = &args.reliability {
        let body = serde_json::to_string_pretty(&bins).expect("bins serialize") + "\n";
        write_file(path, body)?;
    }
    emit(&out)
}

fn cmd_ensemble(args: &EnsembleArgs, seed: Option<u64>) -> CmdResult {
    announce_seed(seed.unwrap_or(0));
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Failure::Input(format!(
            "--threshold must lie in [0, 1] (got {})",
            args.threshold
        )));
    }
    let panel = load_panel(&args.files)?;
    let tie = match args.tie_break {
        TieArg::Positive => TieBreak::Positive,
        TieArg::Negative => TieBreak::Negative,
    };
    let output = match args.strategy {
        StrategyArg::Plurality => plurality_vote(&panel, args.threshold, tie)?,
        StrategyArg::Averaging => average_probs(&panel)?,
        StrategyArg::LabelFusion => {
            let path = args.net.as_deref().ok_or_else(|| {
                Failure::Input(format!(
                    "--net is required for {}",
                    Strategy::LabelFusion.name()
                ))
            })?;
            let net: FusionNetwork<f64> = FusionNetwork::from_json(&read_text(path)?)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            label_fusion_predict(&net, &panel)?
        }
    };
    let csv = output.fused.to_csv();
    match &args.out {
        Some(path) => write_file(path, csv),
        None => emit(&csv),
    }
}

fn cmd_fuse_train(args: &FuseTrainArgs, seed: Option<u64>) -> CmdResult {
    let mut cfg: TrainConfig = match &args.config {
        Some(path) => parse_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    announce_seed(cfg.seed);
    let panel = load_panel(&args.files)?;
    let trained = train(&panel, &cfg)?;
    write_file(
        &args.out_dir.join(FUSION_NET_FILE),
        trained.network.to_json() + "\n",
    )?;
    write_file(&args.out_dir.join(TRAINING_LOG_FILE), trained.log.to_csv())?;
    let best = trained.log.best();
    emit(&format!(
        "best epoch {}: val_auc={:.4} val_f1={:.4} val_ece={:.4} val_S={:.4}\n",
        best.epoch, best.val_auc, best.val_f1, best.val_ece, best.val_s
    ))
}

/// Undo per-channel standardisation so the result can be viewed as an image.
fn denormalize(img: &Image<f64>, mean: &[f64], std: &[f64]) -> Result<Image<f64>, Failure> {
    let pick = |v: &[f64], c: usize| if v.len() == 1 { v[0] } else { v[c] };
    Ok(Image::from_fn(
        img.width(),
        img.height(),
        img.channels(),
        |x, y, c| img.get(x, y, c) * pick(std, c) + pick(mean, c),
    )?)
}

fn cmd_augment(args: &AugmentArgs, seed: Option<u64>) -> CmdResult {
    let mut cfg: AugmentConfig = match &args.config {
        Some(path) => parse_json(path)?,
        None => AugmentConfig::default(),
    };
    if let Some(w) = args.width {
        cfg.width = w;
    }
    if let Some(h) = args.height {
        cfg.height = h;
    }
    if let Some(r) = args.max_rotation {
        cfg.max_rotation_deg = r;
    }
    if let Some(p) = args.flip_h_prob {
        cfg.flip_h_prob = p;
    }
    if let Some(p) = args.flip_v_prob {
        cfg.flip_v_prob = p;
    }
    if args.no_greyscale {
        cfg.greyscale = false;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    announce_seed(cfg.seed);
    cfg.validate()?;

    let img: Image<f64> = read_image(&args.input)
        .map_err(|e| Failure::Input(format!("{}: {e}", args.input.display())))?;
    let out = apply_pipeline(&img, &cfg, &mut SplitMix64::new(cfg.seed))?;
    let is_raw = args
        .output
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("raw"));
    let mut bytes = Vec::new();
    if is_raw {
        write_raw(&out, &mut bytes)?;
    } else {
        write_pnm(&denormalize(&out, &cfg.mean, &cfg.std)?, &mut bytes)?;
    }
    write_file(&args.output, bytes)
}

fn cmd_synth(args: &SynthArgs, seed: Option<u64>) -> CmdResult {
    let mut spec: SyntheticSpec = parse_json(&args.spec)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    announce_seed(spec.seed);
    let panel: PredictionPanel<f64> = generate_panel(&spec)?;
    let mut manifest = Vec::new();
    for (i, set) in panel.models().iter().enumerate() {
        let file = format!("{}.csv", set.model_name());
        write_file(&args.out_dir.join(&file), set.to_csv())?;
        manifest.push(serde_json::json!({
            "name": set.model_name(),
            "file": file,
            "theoretical_auc": spec.theoretical_auc(i),
        }));
    }
    let mut doc = serde_json::json!({ "spec": spec, "models": manifest });
    if let Some(n) = args.calibrated {
        let cal: PredictionSet<f64> = generate_calibrated_set(n, spec.seed)?;
        write_file(&args.out_dir.join("calibrated.csv"), cal.to_csv())?;
        doc["calibrated"] = serde_json::json!({ "file": "calibrated.csv", "n": n });
    }
    write_file(
        &args.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n",
    )?;
    let mut out = String::new();
    for m in &manifest {
        let _ = writeln!(
            out,
            "{}: theoretical auc {:.4}",
            m["name"].as_str().unwrap_or(""),
            m["theoretical_auc"]
        );
    }
    emit(&out)
}

fn cmd_report(args: &ReportArgs, seed: Option<u64>) -> CmdResult {
    let mut cfg = RunConfig::load(&args.config)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    announce_seed(cfg.effective_seed());
    let run = ensemblekit::harness::run_evaluation(&cfg)?;
    let dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from));
    if let Some(dir) = dir {
        let written =
            write_run(&run, &dir, &cfg.formats).map_err(|e| Failure::Internal(e.to_string()))?;
        for path in written {
            eprintln!("wrote {}", path.display());
        }
    }
    emit(&run.report.render(ReportFormat::Markdown))
}

fn cmd_check_tables(args: &CheckTablesArgs, seed: Option<u64>) -> CmdResult {
    announce_seed(seed.unwrap_or(0));
    let rows = match &args.rows {
        Some(path) => parse_published_rows(&read_text(path)?)?,
        None => published_rows(),
    };
    let out = match args.format {
        TableFormat::Text => {
            let mut s = String::new();
            for c in check_published_rows(&rows) {
                let status = if c.flagged { "FLAGGED" } else { "ok" };
                let _ = writeln!(
                    s,
                    "{:<20} printed {:.5} recomputed {:.5} diff {:+.5} {status}",
                    c.name,
                    c.printed,
                    c.recomputed,
                    c.printed - c.recomputed
                );
            }
            s
        }
        TableFormat::Markdown => RankedReport::from_published("Recomputed overall scores", &rows)
            .render(ReportFormat::Markdown),
        TableFormat::Csv => RankedReport::from_published("Recomputed overall scores", &rows)
            .render(ReportFormat::Csv),
        TableFormat::Json => {
            serde_json::to_string_pretty(&check_published_rows(&rows)).expect("checks serialize")
                + "\n"
        }
    };
    emit(&out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Metrics(a) => cmd_metrics(a, seed),
        Command::Ensemble(a) => cmd_ensemble(a, seed),
        Command::FuseTrain(a) => cmd_fuse_train(a, seed),
        Command::Augment(a) => cmd_augment(a, seed),
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Report(a) => cmd_report(a, seed),
        Command::CheckTables(a) => cmd_check_tables(a, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
