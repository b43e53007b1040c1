//! `tsync` — dataset generation, training, Monte-Carlo sweeps and
//! complexity reports for the two-stage timing synchronizer.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use tsync_core::config::RunConfig;
use tsync_core::error::{Error, Result};
use tsync_core::eval::{
    complexity_report, export_results, sweep, Method, COMPLEXITY_REFERENCE,
};
use tsync_core::frame::synthesize_frame;
use tsync_core::nn::{load_model, save_model, NetworkDims, NetworkModel};
use tsync_core::pipeline::{
    estimate_timing, generate_dataset, read_dataset, train, write_dataset,
};
use tsync_core::rng::{derive_seed, seeded_rng, stream};

#[derive(Parser)]
#[command(name = "tsync", version, about = "Two-stage OFDM timing-synchronization simulator")]
struct Cli {
    /// Configuration file (TOML); defaults are used when omitted.
    #[arg(long, global = true, env = "TSYNC_CONFIG")]
    config: Option<PathBuf>,

    /// Worker threads for trial-level parallelism (0 = automatic).
    /// Results are identical for any worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Master seed, overriding the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Configuration overrides, e.g. --set channel.l=24 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled training dataset and its metadata sidecar.
    Gen {
        /// Output dataset path.
        #[arg(long, default_value = "dataset.tsds")]
        out: PathBuf,
    },
    /// Train the refinement network on a generated dataset.
    Train {
        /// Input dataset path.
        #[arg(long, default_value = "dataset.tsds")]
        dataset: PathBuf,
        /// Output model path.
        #[arg(long, default_value = "model.tsnn")]
        out: PathBuf,
        /// Per-epoch loss CSV (defaults to <out>.loss.csv).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run the configured Monte-Carlo sweep and export CSVs plus a summary.
    Sweep {
        /// Trained model (required when the proposed method is selected).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory for CSVs and the JSON summary.
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Print the complexity accounting and measured per-estimate time.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = tsync_core::config::Seed(seed);
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    Ok(cfg)
}

fn echo_config(cfg: &RunConfig) {
    println!("# resolved configuration");
    for line in cfg.to_toml_string().lines() {
        println!("# {line}");
    }
}

fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let dspec = cfg.dataset_spec()?;
    let started = Instant::now();
    let ds = generate_dataset(&dspec)?;
    write_dataset(&ds, &dspec, out)?;
    println!(
        "wrote {} samples ({} features, {} classes) to {} in {:.1?}",
        ds.len(),
        ds.feature_len,
        ds.label_dim,
        out.display(),
        started.elapsed()
    );
    println!(
        "rejection rate: {:.3}% ({} rejected)",
        100.0 * ds.rejection.rate(),
        ds.rejection.rejected
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path, history: Option<&Path>) -> Result<()> {
    let ds = read_dataset(dataset)?;
    let frame = cfg.frame_spec()?;
    if ds.feature_len != frame.feature_len() || ds.label_dim != frame.ng {
        return Err(Error::Config(format!(
            "dataset shape {} -> {} does not match the configured frame ({} -> {})",
            ds.feature_len,
            ds.label_dim,
            frame.feature_len(),
            frame.ng
        )));
    }
    let dims = NetworkDims::from_frame(&frame);
    let tcfg = cfg.train_config()?;
    let mut rng = seeded_rng(derive_seed(tcfg.seed, &[stream::TRAIN_INIT]));
    let model = NetworkModel::init(dims, &mut rng);
    let started = Instant::now();
    let (trained, report) = train(&ds, model, &tcfg)?;
    save_model(&trained, out)?;

    let history_path = history
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("loss.csv"));
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for e in &report.history {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
    }
    std::fs::write(&history_path, csv)?;

    println!(
        "trained {} epochs in {:.1?}; best validation loss {:.6} at epoch {}",
        report.history.len(),
        started.elapsed(),
        report.best_val_loss,
        report.best_epoch
    );
    println!("model written to {}", out.display());
    println!("loss history written to {}", history_path.display());
    Ok(())
}

fn cmd_sweep(cfg: &RunConfig, model_path: Option<&Path>, out_dir: &Path) -> Result<()> {
    let spec = cfg.sweep_spec()?;
    let model = match model_path {
        Some(p) => Some(load_model(p)?),
        None => None,
    };
    if spec.methods.contains(&Method::Proposed) && model.is_none() {
        return Err(Error::Config(
            "the sweep includes the proposed method; pass --model <path>".into(),
        ));
    }
    let started = Instant::now();
    let result = sweep(&spec, model.as_ref())?;
    let files = export_results(&result, out_dir)?;
    println!("sweep of {} grid points finished in {:.1?}", result.points.len(), started.elapsed());
    for p in &result.points {
        println!(
            "  {:<14} snr {:>5} dB  l {:>2}  eta {:<4}  error_prob {:.4}",
            p.method.name(),
            p.snr_db,
            p.l,
            p.eta,
            p.error_prob()
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let frame = cfg.frame_spec()?;
    let dims = NetworkDims::from_frame(&frame);
    let report = complexity_report(&frame, &dims)?;
    println!("complexity accounting (complex multiplications):");
    println!(
        "  coarse stage: {} instrumented, {} by formula (nlag * n = {} * {})",
        report.coarse_instrumented, report.coarse_formula, report.nlag, report.n
    );
    println!(
        "  network terms: conv {:?}, dense {:?} (real multiplications)",
        report.conv_terms, report.dense_terms
    );
    println!("  expression total: {}", report.total);
    let (ref_nlag, ref_n, ref_ng, ref_total) = COMPLEXITY_REFERENCE;
    let ref_dims = NetworkDims::new(ref_n, ref_ng)?;
    let (conv, dense) = tsync_core::eval::network_complexity_terms(&ref_dims);
    let evaluated = tsync_core::eval::proposed_complexity_expression(ref_nlag, ref_n, &conv, &dense);
    println!(
        "  reference example (nlag = {ref_nlag}, n = {ref_n}, ng = {ref_ng}): expression \
         evaluates to {evaluated}; the transcribed reference total is {ref_total} \
         (difference {})",
        ref_total - evaluated
    );

    // measured per-estimate wall time over 10^3 inferences
    let channel = cfg.channel_spec()?;
    channel.validate_with(&frame)?;
    let mut rng = seeded_rng(derive_seed(cfg.seed.0, &[stream::REPORT]));
    let model = NetworkModel::init(dims, &mut rng);
    let runs = 1000;
    let mut elapsed = std::time::Duration::ZERO;
    for _ in 0..runs {
        let real = tsync_core::channel::draw_channel(&channel, &mut rng);
        let frame_sig = synthesize_frame(&frame, &mut rng)?;
        let y = tsync_core::channel::apply_channel(&frame_sig, &real, &frame, &mut rng)?;
        let started = Instant::now();
        let _ = estimate_timing(&y, &model, &frame)?;
        elapsed += started.elapsed();
    }
    println!(
        "measured per-estimate wall time: {:.1} us (mean over {runs} estimates)",
        elapsed.as_secs_f64() * 1e6 / runs as f64
    );
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    echo_config(&cfg);
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Gen { out } => cmd_gen(&cfg, out),
        Command::Train { dataset, out, history } => {
            cmd_train(&cfg, dataset, out, history.as_deref())
        }
        Command::Sweep { model, out_dir } => cmd_sweep(&cfg, model.as_deref(), out_dir),
        Command::Report => cmd_report(&cfg),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
