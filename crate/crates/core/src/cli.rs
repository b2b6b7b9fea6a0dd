//! Command-line entry points: dataset generation, training, benchmarking,
//! and report aggregation. Every command resolves its configuration from
//! defaults, an optional config document, and flags (flags win), then writes
//! a config snapshot next to its outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::{parse_kv_document, RunConfig};
use crate::data::{generate, load_csv, save_csv, split};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::mtl::{sweep, train_mtl, SchemeKind};
use crate::pipeline::{evaluate, train_fastcar};

#[derive(Debug, Parser)]
#[command(
    name = "fastcar",
    version,
    about = "Consolidated classification+regression training with hard-parameter-sharing baselines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset CSV
    Generate(GenerateCmd),
    /// Tune hybrid labels and train the consolidated single-task regressor
    TrainFastcar(TrainCmd),
    /// Train the two-head baseline under one loss weighting scheme
    TrainMtl(TrainMtlCmd),
    /// Run the consolidated model plus all four baseline schemes on one split
    Benchmark(TrainCmd),
    /// Summarize stored metrics documents
    Report(ReportCmd),
}

#[derive(Debug, Args)]
pub struct CommonFlags {
    /// Config document (flat `key = value` lines); flags override its keys
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed (drives data generation, splitting, and training)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct SynthFlags {
    /// Number of object classes
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Per-class label ranges as `lo:hi;lo:hi;...`
    #[arg(long)]
    pub class_ranges: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// Dataset CSV (defaults to `<out>/dataset.csv`)
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub scheduler_factor: Option<f64>,
    #[arg(long)]
    pub scheduler_patience: Option<usize>,
    #[arg(long)]
    pub grad_threshold: Option<f64>,
    #[arg(long)]
    pub shrink_factor: Option<f64>,
    #[arg(long)]
    pub max_label_iterations: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateCmd {
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    pub synth: SynthFlags,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct TrainMtlCmd {
    /// Loss weighting scheme: ew, uw, dwa, or gls
    #[arg(long)]
    pub scheme: String,
    #[command(flatten)]
    pub common: CommonFlags,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct ReportCmd {
    /// Directory holding metrics documents (defaults to the output directory)
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonFlags,
}

fn resolve(
    common: &CommonFlags,
    synth: Option<&SynthFlags>,
    train: Option<&TrainFlags>,
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_document(&parse_kv_document(&text)?)?;
    }
    let mut explicit_ranges = false;
    if let Some(s) = synth {
        if let Some(v) = s.classes {
            cfg.apply_key("classes", &v.to_string(), &mut explicit_ranges)?;
        }
        if let Some(v) = s.samples_per_class {
            cfg.apply_key("samples_per_class", &v.to_string(), &mut explicit_ranges)?;
        }
        if let Some(v) = s.feature_dim {
            cfg.apply_key("feature_dim", &v.to_string(), &mut explicit_ranges)?;
        }
        if let Some(v) = s.noise_sigma {
            cfg.apply_key("noise_sigma", &v.to_string(), &mut explicit_ranges)?;
        }
        if let Some(v) = &s.class_ranges {
            cfg.apply_key("class_ranges", v, &mut explicit_ranges)?;
        }
    }
    if let Some(t) = train {
        if let Some(v) = t.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = t.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = t.weight_decay {
            cfg.train.weight_decay = v;
        }
        if let Some(v) = t.scheduler_factor {
            cfg.train.scheduler_factor = v;
        }
        if let Some(v) = t.scheduler_patience {
            cfg.train.scheduler_patience = v;
        }
        if let Some(v) = t.grad_threshold {
            cfg.train.grad_threshold = v;
        }
        if let Some(v) = t.shrink_factor {
            cfg.train.shrink_factor = v;
        }
        if let Some(v) = t.max_label_iterations {
            cfg.train.max_label_iterations = v;
        }
        if let Some(v) = t.margin {
            cfg.train.margin = v;
        }
        if let Some(v) = t.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = &t.data {
            cfg.data_path = Some(v.clone());
        }
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if common.force {
        cfg.force = true;
    }
    // Keep derived default bands in sync when only the class count changed.
    if !explicit_ranges && cfg.synth.class_ranges.len() != cfg.synth.n_classes {
        cfg.synth.class_ranges = crate::data::default_class_bands(cfg.synth.n_classes);
    }
    Ok(cfg)
}

fn write_snapshot(cfg: &RunConfig, name: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join(name), cfg.snapshot())?;
    Ok(())
}

fn dataset_path(cfg: &RunConfig) -> PathBuf {
    cfg.data_path
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("dataset.csv"))
}

fn load_dataset(cfg: &RunConfig) -> Result<Vec<crate::data::LabeledSample>> {
    let path = dataset_path(cfg);
    if !path.exists() {
        return Err(Error::InvalidConfig(format!(
            "dataset {} not found; run `fastcar generate` first or pass --data",
            path.display()
        )));
    }
    load_csv(&path)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(cmd) => cmd_generate(&cmd),
        Command::TrainFastcar(cmd) => cmd_train_fastcar(&cmd),
        Command::TrainMtl(cmd) => cmd_train_mtl(&cmd),
        Command::Benchmark(cmd) => cmd_benchmark(&cmd),
        Command::Report(cmd) => cmd_report(&cmd),
    }
}

fn cmd_generate(cmd: &GenerateCmd) -> Result<()> {
    let cfg = resolve(&cmd.common, Some(&cmd.synth), None)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let path = cfg.out_dir.join("dataset.csv");
    if path.exists() && !cfg.force {
        return Err(Error::OutputExists(path));
    }
    let samples = generate(&cfg.synth)?;
    save_csv(&path, &samples)?;
    write_snapshot(&cfg, "generate_config.txt")?;
    println!(
        "wrote {} samples ({} classes, feature dim {}) to {}",
        samples.len(),
        cfg.synth.n_classes,
        cfg.synth.feature_dim,
        path.display()
    );
    Ok(())
}

fn cmd_train_fastcar(cmd: &TrainCmd) -> Result<()> {
    let cfg = resolve(&cmd.common, Some(&cmd.synth), Some(&cmd.train))?;
    let samples = load_dataset(&cfg)?;
    let (train, val, test) = split(&samples, cfg.train.seed)?;
    let run = train_fastcar(&train, &val, &cfg.train)?;
    let report = evaluate(&run.model, &run.spec, &test, run.log.wall_clock_seconds)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        cfg.out_dir.join("metrics_fastcar.txt"),
        report.to_document(cfg.train.seed, &cfg.hash()),
    )?;
    std::fs::write(cfg.out_dir.join("transform_spec.txt"), run.spec.to_document())?;
    checkpoint::save(
        &cfg.out_dir.join("checkpoint.txt"),
        &run.model,
        &run.optimizer,
        &run.scheduler,
    )?;
    std::fs::write(cfg.out_dir.join("training_log.csv"), run.log.to_csv())?;
    write_snapshot(&cfg, "train_fastcar_config.txt")?;
    println!(
        "fastcar: accuracy {:.2}%  mape {:.2}%  within-8% {:.3}  label scale {}  ({:.1}s)",
        report.accuracy_pct,
        report.mape_pct,
        report.within_8pct_fraction,
        run.grad_report.final_scale,
        report.wall_clock_seconds
    );
    Ok(())
}

fn cmd_train_mtl(cmd: &TrainMtlCmd) -> Result<()> {
    let kind = SchemeKind::parse(&cmd.scheme)?;
    let cfg = resolve(&cmd.common, Some(&cmd.synth), Some(&cmd.train))?;
    let samples = load_dataset(&cfg)?;
    let (train, val, test) = split(&samples, cfg.train.seed)?;
    let (_, report, log) = train_mtl(&train, &val, &test, &cfg.train, kind)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(
        cfg.out_dir.join(format!("metrics_mtl_{kind}.txt")),
        report.to_document(cfg.train.seed, &cfg.hash()),
    )?;
    std::fs::write(
        cfg.out_dir.join(format!("training_log_mtl_{kind}.csv")),
        log.to_csv(),
    )?;
    write_snapshot(&cfg, &format!("train_mtl_{kind}_config.txt"))?;
    println!(
        "mtl {kind}: accuracy {:.2}%  mape {:.2}%  range collapse {}  ({:.1}s)",
        report.accuracy_pct, report.mape_pct, report.range_collapse, report.wall_clock_seconds
    );
    Ok(())
}

fn cmd_benchmark(cmd: &TrainCmd) -> Result<()> {
    let cfg = resolve(&cmd.common, Some(&cmd.synth), Some(&cmd.train))?;
    let samples = load_dataset(&cfg)?;
    let (train, val, test) = split(&samples, cfg.train.seed)?;

    let mut warnings = 0usize;
    let fastcar_outcome: std::result::Result<MetricsReport, String> =
        train_fastcar(&train, &val, &cfg.train)
            .and_then(|run| evaluate(&run.model, &run.spec, &test, run.log.wall_clock_seconds))
            .map_err(|e| e.to_string());
    if let Err(msg) = &fastcar_outcome {
        eprintln!("warning: fastcar failed: {msg}");
        warnings += 1;
    }

    let table = sweep(&train, &val, &test, &cfg.train, &SchemeKind::ALL)?;
    for row in &table.rows {
        if let Err(msg) = &row.outcome {
            eprintln!("warning: scheme {} failed: {msg}", row.scheme);
            warnings += 1;
        }
    }

    let mut bench_csv = String::from("model,accuracy_pct,mape_pct,wall_clock_s\n");
    let mut push_row = |name: &str, outcome: &std::result::Result<MetricsReport, String>| {
        match outcome {
            Ok(r) => {
                let _ = writeln!(
                    bench_csv,
                    "{name},{:.4},{:.4},{:.4}",
                    r.accuracy_pct, r.mape_pct, r.wall_clock_seconds
                );
            }
            Err(_) => {
                let _ = writeln!(bench_csv, "{name},nan,nan,nan");
            }
        }
    };
    push_row("fastcar", &fastcar_outcome);
    for row in &table.rows {
        push_row(&format!("mtl_{}", row.scheme), &row.outcome);
    }

    let mut summary = String::new();
    if let Some((mean, std)) = table.runtime_mean_std() {
        let _ = writeln!(summary, "mtl_family_runtime_s = {mean:.2}±{std:.2}");
    }
    if let Ok(r) = &fastcar_outcome {
        let _ = writeln!(summary, "fastcar_runtime_s = {:.2}", r.wall_clock_seconds);
    }
    let _ = writeln!(summary, "warnings = {warnings}");

    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("benchmark.csv"), &bench_csv)?;
    std::fs::write(cfg.out_dir.join("heatmap.csv"), table.to_heatmap_csv())?;
    std::fs::write(cfg.out_dir.join("summary.txt"), &summary)?;
    write_snapshot(&cfg, "benchmark_config.txt")?;
    print!("{bench_csv}{summary}");
    if warnings > 0 {
        eprintln!("benchmark finished with {warnings} warning(s)");
    }
    Ok(())
}

fn cmd_report(cmd: &ReportCmd) -> Result<()> {
    let cfg = resolve(&cmd.common, None, None)?;
    let dir = cmd.dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("metrics") && n.ends_with(".txt"))
        })
        .collect();
    entries.sort();
    for path in entries {
        let text = std::fs::read_to_string(&path)?;
        match MetricsReport::from_document(&text) {
            Ok((report, _, _)) => {
                rows.push((file_stem(&path), report));
            }
            Err(e) => eprintln!("warning: skipping {}: {e}", path.display()),
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no readable metrics documents in {}",
            dir.display()
        )));
    }
    println!(
        "{:<24} {:>12} {:>14} {:>10} {:>10} {:>10}",
        "model", "accuracy_pct", "mse", "mape_pct", "within_8%", "wall_s"
    );
    for (name, r) in &rows {
        println!(
            "{name:<24} {:>12.4} {:>14.4} {:>10.4} {:>10.4} {:>10.2}{}",
            r.accuracy_pct,
            r.mse,
            r.mape_pct,
            r.within_8pct_fraction,
            r.wall_clock_seconds,
            if r.range_collapse { "  [range collapse]" } else { "" }
        );
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("metrics")
        .to_string()
}
