//! Command-line workbench: generate channel-distorted datasets, train
//! the correction + classifier cascade (or its ablations), evaluate
//! bundles, and inspect any artifact file.
//!
//! Every command exits 0 on success; failures print exactly one
//! machine-parsable line (`error: ...`) to stderr and exit nonzero.
//! `MODREC_THREADS` caps the worker pool used by dataset generation —
//! output bytes never depend on it. Seeds come only from the config
//! file or flags, never the environment, so the resolved config is a
//! complete provenance record.

mod config;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use modrec_core::bundle::{load_bundle, save_bundle, BUNDLE_MAGIC};
use modrec_core::dataset::{generate, Dataset, GenConfig, DATASET_MAGIC};
use modrec_core::eval::{
    check_fingerprint, evaluate_truth_corrected, evaluate_unchecked, export_csv, export_json,
    gain_table, EvalReport,
};
use modrec_core::nn::param_count;
use modrec_core::trainer::{train, train_matrix, ModelBundle, TrainConfig};

use config::RunConfig;

// ---------------------------------------------------------------------------
// Argument surface

#[derive(Parser)]
#[command(
    name = "modrec",
    about = "Modulation-recognition workbench: synthetic datasets, \
             correction+classifier training, evaluation reports",
    version
)]
struct Cli {
    /// TOML run config; command-line flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a labeled dataset over the (scheme x SNR) grid.
    Gen(GenArgs),
    /// Train one model end-to-end and save its bundle.
    Train(TrainArgs),
    /// Train the full ablation matrix and tabulate accuracy gains.
    Ablate(AblateArgs),
    /// Evaluate a bundle on its dataset's test split.
    Eval(EvalArgs),
    /// Print a human-readable summary of a dataset or bundle file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output dataset path (overrides the config's `dataset`).
    #[arg(long, value_name = "FILE")]
    out: Option<String>,
    /// Comma-separated scheme names (default: all eight).
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    #[arg(long)]
    snr_min_db: Option<f64>,
    #[arg(long)]
    snr_max_db: Option<f64>,
    #[arg(long)]
    snr_step_db: Option<f64>,
    #[arg(long)]
    frames_per_cell: Option<usize>,
    #[arg(long)]
    gen_seed: Option<u64>,
    /// Skip the per-frame impairment truth blocks.
    #[arg(long)]
    no_truth: bool,
}

/// Training knobs shared by `train` and `ablate`.
#[derive(Args)]
struct FitArgs {
    /// Input dataset path (overrides the config's `dataset`).
    #[arg(long, value_name = "FILE")]
    dataset: Option<String>,
    /// Artifact directory (overrides the config's `out_dir`).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    /// SNR regime: non_negative | negative.
    #[arg(long)]
    regime: Option<String>,
    /// Offset pairs the estimator predicts.
    #[arg(long)]
    k: Option<usize>,
    /// Bypass-comparator depth rule: published | regime_matched.
    #[arg(long)]
    baseline_arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    fit: FitArgs,
    /// Correction mode: none | freq_only | phase_only | both.
    #[arg(long)]
    ablation: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained bundle to evaluate.
    #[arg(long, value_name = "FILE")]
    bundle: PathBuf,
    /// Dataset path (overrides the config's `dataset`).
    #[arg(long, value_name = "FILE")]
    dataset: Option<String>,
    /// Report directory (overrides the config's `out_dir`).
    #[arg(long, value_name = "DIR")]
    out_dir: Option<String>,
    /// Evaluate even when the dataset fingerprint does not match the
    /// one the bundle pinned at training time.
    #[arg(long)]
    force: bool,
    /// Replace the estimator's offsets with impairment-truth-derived
    /// ones (needs a dataset generated with truth storage).
    #[arg(long)]
    truth_corrected: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Dataset or bundle file.
    path: PathBuf,
}

// ---------------------------------------------------------------------------

fn main() {
    if let Err(err) = run() {
        // One machine-parsable line, full cause chain, nonzero exit.
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    init_thread_pool()?;
    let cli = Cli::parse();
    let config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => cmd_gen(config, args),
        Command::Train(args) => cmd_train(config, args),
        Command::Ablate(args) => cmd_ablate(config, args),
        Command::Eval(args) => cmd_eval(config, args),
        Command::Inspect(args) => cmd_inspect(&args.path),
    }
}

/// Honors `MODREC_THREADS` for generation parallelism. Results never
/// depend on the pool size; this is purely a resource cap.
fn init_thread_pool() -> Result<()> {
    if let Ok(raw) = std::env::var("MODREC_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .with_context(|| format!("MODREC_THREADS must be a positive integer, got {raw:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// gen

fn cmd_gen(mut config: RunConfig, args: GenArgs) -> Result<()> {
    if let Some(out) = args.out {
        config.dataset = out;
    }
    if let Some(schemes) = args.schemes {
        config.schemes = schemes;
    }
    apply(&mut config.snr_min_db, args.snr_min_db);
    apply(&mut config.snr_max_db, args.snr_max_db);
    apply(&mut config.snr_step_db, args.snr_step_db);
    apply(&mut config.frames_per_cell, args.frames_per_cell);
    apply(&mut config.gen_seed, args.gen_seed);
    if args.no_truth {
        config.store_truth = false;
    }

    let gen: GenConfig = config.gen_config()?;
    let dataset = generate(&gen)?;
    let path = Path::new(&config.dataset);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    dataset
        .save(path)
        .with_context(|| format!("writing dataset {}", path.display()))?;
    println!(
        "wrote {} ({} frames, {} schemes x {} SNRs, truth {}) fingerprint {}",
        path.display(),
        dataset.examples.len(),
        gen.schemes.len(),
        gen.snrs_db.len(),
        if gen.store_truth { "stored" } else { "omitted" },
        dataset.fingerprint()
    );
    Ok(())
}

fn apply<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

// ---------------------------------------------------------------------------
// train

fn apply_fit_args(config: &mut RunConfig, args: &FitArgs) {
    if let Some(d) = &args.dataset {
        config.dataset = d.clone();
    }
    if let Some(o) = &args.out_dir {
        config.out_dir = o.clone();
    }
    if let Some(r) = &args.regime {
        config.regime = r.clone();
    }
    if let Some(b) = &args.baseline_arch {
        config.baseline_arch = b.clone();
    }
    apply(&mut config.k, args.k);
    apply(&mut config.epochs, args.epochs);
    apply(&mut config.batch_size, args.batch_size);
    apply(&mut config.lr, args.lr);
    apply(&mut config.patience, args.patience);
    apply(&mut config.train_seed, args.train_seed);
    apply(&mut config.split_seed, args.split_seed);
}

fn load_dataset(config: &RunConfig) -> Result<Dataset> {
    Dataset::load(Path::new(&config.dataset))
        .with_context(|| format!("dataset {}", config.dataset))
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&config.out_dir);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    config.write_resolved(&dir)?;
    Ok(dir)
}

fn write_training_log(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let mut body = String::from("epoch,train_loss,val_accuracy\n");
    for row in &bundle.curve {
        body.push_str(&format!(
            "{},{},{}\n",
            row.epoch, row.train_loss, row.val_accuracy
        ));
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_train(mut config: RunConfig, args: TrainArgs) -> Result<()> {
    apply_fit_args(&mut config, &args.fit);
    if let Some(a) = args.ablation {
        config.ablation = a;
    }
    let train_config: TrainConfig = config.train_config()?;
    let dataset = load_dataset(&config)?;
    let dir = prepare_out_dir(&config)?;

    let mut bundle = train(&train_config, &dataset)?;
    let bundle_path = dir.join("model.mrb");
    save_bundle(&mut bundle, &bundle_path)?;
    write_training_log(&bundle, &dir.join("training_log.csv"))?;
    let best = &bundle.curve[bundle.best_epoch];
    println!(
        "trained {} epochs ({} regime, {} correction); best val accuracy {:.4} at epoch {}; wrote {}",
        bundle.curve.len(),
        train_config.regime,
        train_config.ablation,
        best.val_accuracy,
        bundle.best_epoch,
        bundle_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

fn cmd_ablate(mut config: RunConfig, args: AblateArgs) -> Result<()> {
    apply_fit_args(&mut config, &args.fit);
    let base: TrainConfig = config.train_config()?;
    let dataset = load_dataset(&config)?;
    let dir = prepare_out_dir(&config)?;

    let cells = train_matrix(&base, &dataset)?;
    // Evaluate every cell, then tabulate each regime's gains over its
    // own bypass baseline.
    let mut evaluated: Vec<(String, String, EvalReport)> = Vec::new();
    for mut cell in cells {
        let stem = format!("{}_{}", cell.regime.name(), cell.ablation.name());
        save_bundle(&mut cell.bundle, &dir.join(format!("{stem}.mrb")))?;
        write_training_log(&cell.bundle, &dir.join(format!("training_log_{stem}.csv")))?;
        let report = evaluate_unchecked(&mut cell.bundle, &dataset)?;
        evaluated.push((
            cell.regime.name().to_string(),
            cell.ablation.name().to_string(),
            report,
        ));
        println!(
            "{stem}: test accuracy {:.4} over {} frames",
            evaluated.last().unwrap().2.overall_accuracy,
            evaluated.last().unwrap().2.n_test
        );
    }

    for regime in ["non_negative", "negative"] {
        let baseline = evaluated
            .iter()
            .find(|(r, a, _)| r == regime && a == "none");
        let Some((_, _, baseline_report)) = baseline else {
            continue;
        };
        let mut body = String::from("snr_db,baseline");
        let arms: Vec<&(String, String, EvalReport)> = evaluated
            .iter()
            .filter(|(r, a, _)| r == regime && a != "none")
            .collect();
        for (_, arm, _) in &arms {
            body.push_str(&format!(",{arm},gain_{arm}"));
        }
        body.push('\n');
        let tables: Vec<_> = arms
            .iter()
            .map(|(_, _, report)| gain_table(report, baseline_report))
            .collect::<modrec_core::Result<_>>()?;
        for (i, row) in baseline_report.per_snr.iter().enumerate() {
            body.push_str(&format!("{},{}", row.snr_db, row.accuracy));
            for table in &tables {
                body.push_str(&format!(",{},{}", table[i].corrected, table[i].gain));
            }
            body.push('\n');
        }
        let path = dir.join(format!("gain_{regime}.csv"));
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

fn cmd_eval(mut config: RunConfig, args: EvalArgs) -> Result<()> {
    if let Some(d) = args.dataset {
        config.dataset = d;
    }
    if let Some(o) = args.out_dir {
        config.out_dir = o;
    }
    if args.force && args.truth_corrected {
        bail!(
            "--force cannot be combined with --truth-corrected \
             (truth lookup needs the exact pinned dataset)"
        );
    }
    let mut bundle = load_bundle(&args.bundle)?;
    let dataset = load_dataset(&config)?;
    if !args.force {
        check_fingerprint(&bundle, &dataset)?;
    }
    let dir = prepare_out_dir(&config)?;
    let report = if args.truth_corrected {
        evaluate_truth_corrected(&mut bundle, &dataset)?
    } else {
        evaluate_unchecked(&mut bundle, &dataset)?
    };
    export_json(&report, &dir.join("report.json"))?;
    let files = export_csv(&report, &dir)?;
    println!(
        "evaluated {} frames: overall accuracy {:.4} (chance {:.4}); wrote report.json, {}",
        report.n_test,
        report.overall_accuracy,
        report.chance_level,
        files.join(", ")
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect

fn cmd_inspect(path: &Path) -> Result<()> {
    let mut magic = [0u8; 8];
    {
        use std::io::Read;
        let mut file =
            std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        file.read_exact(&mut magic)
            .with_context(|| format!("{} is too short to carry a file signature", path.display()))?;
    }
    if &magic == DATASET_MAGIC {
        inspect_dataset(path)
    } else if &magic == BUNDLE_MAGIC {
        inspect_bundle(path)
    } else {
        bail!("{}: unknown magic {magic:02x?}", path.display());
    }
}

fn inspect_dataset(path: &Path) -> Result<()> {
    let dataset = Dataset::load(path)?;
    println!("dataset {}", path.display());
    println!("  fingerprint   {}", dataset.fingerprint());
    println!("  frames        {}", dataset.examples.len());
    println!("  master seed   {}", dataset.config.seed);
    println!(
        "  truth blocks  {}",
        if dataset.config.store_truth {
            "stored"
        } else {
            "omitted"
        }
    );
    println!(
        "  sample rate   {} Hz, {} samples/symbol, roll-off {}",
        dataset.config.channel.sample_rate, dataset.config.sps, dataset.config.rolloff
    );
    println!("  per-cell frame counts:");
    let mut counts = dataset.cell_counts();
    counts.sort_by(|a, b| {
        a.0.index()
            .cmp(&b.0.index())
            .then(a.1.partial_cmp(&b.1).expect("finite SNR"))
    });
    for (scheme, snr_db, n) in counts {
        println!("    {:<6} {:>6} dB  {n}", scheme.name(), snr_db);
    }
    Ok(())
}

fn inspect_bundle(path: &Path) -> Result<()> {
    let mut bundle = load_bundle(path)?;
    let config = &bundle.train_config;
    println!("model bundle {}", path.display());
    println!("  regime        {}", config.regime);
    println!("  correction    {}", config.ablation);
    println!("  offset pairs  {}", config.k);
    println!(
        "  classes       {}",
        bundle
            .schemes
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(",")
    );
    let trace = bundle.model.cnn.shape_trace();
    println!(
        "  shape trace   [{}]",
        trace
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("  parameters    {}", param_count(&mut bundle.model));
    println!(
        "  epochs run    {} (best epoch {}, val accuracy {:.4})",
        bundle.curve.len(),
        bundle.best_epoch,
        bundle.curve[bundle.best_epoch].val_accuracy
    );
    println!("  dataset       {}", bundle.dataset_fingerprint);
    Ok(())
}
