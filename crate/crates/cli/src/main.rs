use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmrag_core::config::AppConfig;
use dmrag_core::eval::{self, GroundTruth};
use dmrag_core::fusion::FusionBundle;
use dmrag_core::ingest::{self, CsvOptions, NormalizationStats};
use dmrag_core::memory::LtmStore;
use dmrag_core::pipeline::{Models, Pipeline, PipelineEvent};
use dmrag_core::synth::{self, SynthOptions};
use dmrag_core::LogisticModel;

#[derive(Parser)]
#[command(name = "dmrag", version, about = "Dual-memory retrieval-augmented analysis of network-flow logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the normalizer and logistic confidence model on labeled flows.
    TrainConfidence {
        #[command(flatten)]
        common: Common,
        /// Labeled training CSV.
        #[arg(long)]
        train: Option<PathBuf>,
        /// Output model JSON. The normalizer is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Normalizer output path (default: <out stem>.normalizer.json).
        #[arg(long)]
        normalizer: Option<PathBuf>,
    },
    /// Fit the Beta fusion models on the training split.
    FitFusion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        confidence_model: Option<PathBuf>,
        #[arg(long)]
        normalizer: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the dual-memory analysis loop over a CSV of flows.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        confidence_model: Option<PathBuf>,
        #[arg(long)]
        normalizer: Option<PathBuf>,
        #[arg(long)]
        fusion_model: Option<PathBuf>,
        /// Long-term memory snapshot; read if present, written after the run.
        #[arg(long)]
        ltm: Option<PathBuf>,
        /// Output JSONL, one record per input row.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Analyze only the first N rows.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Score predictions against labeled ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Report JSON; a text table is written alongside.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label in the text table.
        #[arg(long)]
        model_name: Option<String>,
    },
    /// Write a seeded synthetic flow table in the UNSW-NB15 column layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        rows: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        first_id: u64,
        /// Omit the attack_cat and label columns.
        #[arg(long)]
        unlabeled: bool,
    },
    /// Print version information.
    Version,
}

fn load_config(common: &Common) -> Result<AppConfig> {
    match &common.config {
        Some(path) => Ok(AppConfig::load(path)?),
        None => Ok(AppConfig::default()),
    }
}

fn pick(flag: Option<PathBuf>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| configured.clone()) {
        Some(p) => Ok(p),
        None => bail!("missing --{name} (or paths.{} in the config file)", name.replace('-', "_")),
    }
}

fn normalizer_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    model.with_file_name(format!("{stem}.normalizer.json"))
}

fn write_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn labeled_options(cfg: &AppConfig) -> CsvOptions {
    CsvOptions {
        column_map: cfg.columns.clone(),
        ..CsvOptions::labeled()
    }
}

fn train_confidence(common: Common, train: Option<PathBuf>, out: Option<PathBuf>, norm: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(&common)?;
    let train_path = pick(train, &cfg.paths.train, "train")?;
    let out = pick(out, &cfg.paths.confidence_model, "out")?;
    let norm_out = norm
        .or_else(|| cfg.paths.normalizer.clone())
        .unwrap_or_else(|| normalizer_path(&out));

    let records = ingest::parse_csv_with(&train_path, &labeled_options(&cfg))?;
    let (train_rows, val_rows) = ingest::split_dataset(records, cfg.train_fraction, cfg.train.seed);
    let stats = ingest::fit_normalizer(&train_rows)?;
    let train_set = ingest::normalize_all(&train_rows, &stats)?;
    let val_set = ingest::normalize_all(&val_rows, &stats)?;

    let outcome = dmrag_core::confidence::train(&train_set, &cfg.train)?;
    let mut model = outcome.model.clone();
    model.bind_normalizer(&stats)?;
    write_parent(&out)?;
    write_parent(&norm_out)?;
    stats.save(&norm_out)?;
    model.save(&out)?;

    println!("train rows: {}  validation rows: {}", train_set.len(), val_set.len());
    println!(
        "epochs: {}  converged: {}  final loss: {:.6}",
        outcome.epochs,
        outcome.converged,
        outcome.final_loss()
    );
    println!("train accuracy: {:.2}%", model.accuracy(&train_set)? * 100.0);
    if !val_set.is_empty() {
        println!("validation accuracy: {:.2}%", model.accuracy(&val_set)? * 100.0);
    }
    println!("model: {}", out.display());
    println!("normalizer: {}", norm_out.display());
    Ok(())
}

fn load_models(model_path: &Path, norm: Option<PathBuf>, cfg: &AppConfig) -> Result<(LogisticModel, NormalizationStats)> {
    let norm_path = norm
        .or_else(|| cfg.paths.normalizer.clone())
        .unwrap_or_else(|| normalizer_path(model_path));
    let model = LogisticModel::load(model_path)?;
    let stats = NormalizationStats::load(&norm_path)
        .with_context(|| format!("loading normalizer {}", norm_path.display()))?;
    model.check_normalizer(&stats)?;
    Ok((model, stats))
}

fn fit_fusion(
    common: Common,
    train: Option<PathBuf>,
    model: Option<PathBuf>,
    norm: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let train_path = pick(train, &cfg.paths.train, "train")?;
    let model_path = pick(model, &cfg.paths.confidence_model, "confidence-model")?;
    let out = pick(out, &cfg.paths.fusion_model, "out")?;
    let (model, stats) = load_models(&model_path, norm, &cfg)?;

    let records = ingest::parse_csv_with(&train_path, &labeled_options(&cfg))?;
    let (train_rows, _) = ingest::split_dataset(records, cfg.train_fraction, cfg.train.seed);
    let data = ingest::normalize_all(&train_rows, &stats)?;
    let names: Vec<String> = stats.feature_names().map(String::from).collect();
    let bundle = FusionBundle::fit(&data, &names, &model, cfg.fusion.fit_options())?;
    write_parent(&out)?;
    bundle.save(&out)?;

    let ch = &bundle.confidence.channels[0];
    println!("fitted on {} rows", data.len());
    println!("prior (attack): {:.4}", bundle.confidence.prior_anomalous);
    println!(
        "confidence channel: attack Beta({:.4}, {:.4})  normal Beta({:.4}, {:.4})",
        ch.anomalous.alpha, ch.anomalous.beta, ch.normal.alpha, ch.normal.beta
    );
    println!("feature channels: {}", bundle.features.channels.len());
    println!("fusion model: {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn analyze(
    common: Common,
    input: Option<PathBuf>,
    model: Option<PathBuf>,
    norm: Option<PathBuf>,
    fusion: Option<PathBuf>,
    ltm: Option<PathBuf>,
    out: Option<PathBuf>,
    limit: Option<usize>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let input = pick(input, &cfg.paths.input, "input")?;
    let model_path = pick(model, &cfg.paths.confidence_model, "confidence-model")?;
    let fusion_path = pick(fusion, &cfg.paths.fusion_model, "fusion-model")?;
    let ltm_path = pick(ltm, &cfg.paths.ltm, "ltm")?;
    let out = pick(out, &cfg.paths.out, "out")?;

    let (confidence, normalizer) = load_models(&model_path, norm, &cfg)?;
    let bundle = FusionBundle::load(&fusion_path)?;
    let embedder = cfg.embedder.build();
    let store = if ltm_path.exists() {
        LtmStore::load(&ltm_path)?
    } else {
        LtmStore::new(embedder.dimension(), embedder.id())
    };
    let backend = cfg.backend.build();
    log::info!("backend {}, embedder {}", backend.id(), embedder.id());

    let has_labels = ingest::csv_has_labels(&input, &cfg.columns)?;
    let opts = CsvOptions {
        has_labels,
        column_map: cfg.columns.clone(),
        limit,
    };
    let records = ingest::parse_csv_with(&input, &opts)?;

    let models = Models {
        normalizer,
        confidence,
        fusion: bundle.confidence,
    };
    let mut pipeline = Pipeline::new(cfg.pipeline.clone(), models, embedder, backend, store)?;
    write_parent(&out)?;
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = BufWriter::new(file);
    let mut fallbacks = 0usize;
    for record in &records {
        let result = pipeline.process(record)?;
        fallbacks += usize::from(result.used_fallback);
        serde_json::to_writer(&mut writer, &result)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;

    let compressions = pipeline.compression_events().count();
    let promotions = pipeline
        .events()
        .iter()
        .filter(|e| matches!(e, PipelineEvent::Promotion { .. }))
        .count();
    let store = pipeline.into_ltm();
    write_parent(&ltm_path)?;
    store.save(&ltm_path)?;

    println!("records: {}  fallbacks: {fallbacks}", records.len());
    println!("compressions: {compressions}  promotions: {promotions}  long-term entries: {}", store.len());
    println!("predictions: {}", out.display());
    println!("long-term memory: {}", ltm_path.display());
    Ok(())
}

fn evaluate(
    common: Common,
    pred: Option<PathBuf>,
    truth: Option<PathBuf>,
    out: Option<PathBuf>,
    model_name: Option<String>,
) -> Result<()> {
    let cfg = load_config(&common)?;
    let pred = pick(pred, &cfg.paths.pred, "pred")?;
    let truth_path = pick(truth, &cfg.paths.truth, "truth")?;
    let out = pick(out, &cfg.paths.report, "out")?;
    let name = model_name.unwrap_or_else(|| cfg.model_name.clone());

    let predictions = eval::read_predictions(&pred)?;
    let records = ingest::parse_csv_with(&truth_path, &labeled_options(&cfg))?;
    let truth: Vec<GroundTruth> = records
        .iter()
        .map(GroundTruth::try_from)
        .collect::<Result<_, _>>()?;
    let report = eval::compute_metrics(&predictions, &truth)?;
    write_parent(&out)?;
    eval::emit_report(&report, &out, &name)?;

    print!("{}", report.table(&name));
    if !report.undefined.is_empty() {
        println!("undefined (reported as 0): {}", report.undefined.join(", "));
    }
    println!("report: {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainConfidence {
            common,
            train,
            out,
            normalizer,
        } => train_confidence(common, train, out, normalizer),
        Command::FitFusion {
            common,
            train,
            confidence_model,
            normalizer,
            out,
        } => fit_fusion(common, train, confidence_model, normalizer, out),
        Command::Analyze {
            common,
            input,
            confidence_model,
            normalizer,
            fusion_model,
            ltm,
            out,
            limit,
        } => analyze(common, input, confidence_model, normalizer, fusion_model, ltm, out, limit),
        Command::Evaluate {
            common,
            pred,
            truth,
            out,
            model_name,
        } => evaluate(common, pred, truth, out, model_name),
        Command::Synth {
            out,
            rows,
            seed,
            first_id,
            unlabeled,
        } => {
            write_parent(&out)?;
            let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let opts = SynthOptions {
                rows,
                seed,
                first_id,
                labeled: !unlabeled,
                ..SynthOptions::default()
            };
            let attacks = synth::write_csv(file, &opts)?;
            println!("wrote {rows} rows ({attacks} attacks) to {}", out.display());
            Ok(())
        }
        Command::Version => {
            println!("dmrag {}", dmrag_core::VERSION);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
