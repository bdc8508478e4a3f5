//! Command-line driver: plan the experiment matrix, materialize datasets,
//! emit trainer configs, ingest prediction dumps, evaluate, and render
//! report tables. All state lives under the config's output root; every
//! command is re-runnable and produces byte-identical outputs for identical
//! inputs, regardless of `--jobs`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use detlab::augment::{self, SampleOrigin};
use detlab::datamix::{self, Dataset};
use detlab::harness::{self, ExperimentConfig, RunRecord};

#[derive(Parser)]
#[command(
    name = "detlab",
    about = "Dataset augmentation, synthetic-share mixing, and detection evaluation harness",
    version
)]
struct Cli {
    /// Experiment config file (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,

    /// Override the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core). Outputs are identical for
    /// any value.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the run matrix (models x inits x conditions) and write one
    /// record per run.
    Plan,
    /// Split the base dataset, then materialize each run's training
    /// dataset and record its fingerprint.
    Prepare,
    /// Emit the flat key=value trainer config for every prepared run.
    EmitConfig,
    /// Materialize an offline-augmented copy of a dataset.
    AugmentOffline {
        /// Source dataset directory (default: the prepared training split).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Destination directory.
        #[arg(long)]
        output: PathBuf,
        /// Augmented variants per image.
        #[arg(long, default_value_t = 1)]
        variants: usize,
    },
    /// Ingest prediction dumps and evaluate them against the test split.
    Evaluate {
        /// Directory holding per-run prediction subdirectories
        /// (default: paths.predictions_root from the config).
        #[arg(long)]
        predictions_root: Option<PathBuf>,
    },
    /// Render the mAP50 / mAP50-95 tables from evaluated runs.
    Report,
    /// Per-column improvement summary against the no-augmentation baseline.
    Stats,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("rayon thread pool already initialized")?;
    }

    let mut config = ExperimentConfig::load(&cli.config)
        .with_context(|| format!("loading config {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }

    match cli.command {
        Command::Plan => plan(&config),
        Command::Prepare => prepare(&config),
        Command::EmitConfig => emit_config(&config),
        Command::AugmentOffline {
            input,
            output,
            variants,
        } => augment_offline(&config, input.as_deref(), &output, variants),
        Command::Evaluate { predictions_root } => {
            evaluate(&config, predictions_root.as_deref())
        }
        Command::Report => report(&config),
        Command::Stats => stats(&config),
    }
}

fn output_root(config: &ExperimentConfig) -> &Path {
    &config.paths.output_root
}

fn plan(config: &ExperimentConfig) -> Result<()> {
    let runs = harness::plan_experiments(config)?;
    for run in &runs {
        harness::save_record(run, output_root(config))?;
    }
    println!("planned {} runs under {}", runs.len(), output_root(config).display());
    for run in &runs {
        println!("  {}", run.run_id);
    }
    Ok(())
}

fn load_planned_runs(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let runs = harness::load_records(output_root(config))?;
    if runs.is_empty() {
        bail!("no run records found; run `detlab plan` first");
    }
    Ok(runs)
}

fn prepare(config: &ExperimentConfig) -> Result<()> {
    let mut runs = load_planned_runs(config)?;
    let classes = datamix::load_classes(&config.paths.dataset_root)?;
    let dataset = datamix::load_dataset(&config.paths.dataset_root, &classes)?;
    let spec = config.split.to_spec(config.seed);
    let splits = harness::prepare_splits(&dataset, &spec, output_root(config))?;
    println!(
        "split {}: train {} / val {} / test {}",
        dataset.name,
        splits.train.len(),
        splits.val.len(),
        splits.test.len()
    );

    let needs_pool = runs
        .iter()
        .any(|r| matches!(r.condition, harness::Condition::Synthetic(_)));
    let pool = if needs_pool {
        let root = config
            .paths
            .synthetic_root
            .as_ref()
            .context("synthetic conditions need paths.synthetic_root")?;
        let mut pool = datamix::load_dataset(root, &classes)?;
        for sample in pool.samples.iter_mut() {
            sample.origin = SampleOrigin::Synthetic;
        }
        Some(pool)
    } else {
        None
    };

    for run in runs.iter_mut() {
        harness::prepare_run_dataset(run, &splits, pool.as_ref(), output_root(config), config.seed)?;
        harness::save_record(run, output_root(config))?;
        println!(
            "  {} -> {} ({})",
            run.run_id,
            run.dataset_path.as_deref().unwrap_or("-"),
            &run.dataset_fingerprint.as_deref().unwrap_or("-")[..12.min(
                run.dataset_fingerprint.as_deref().unwrap_or("-").len()
            )]
        );
    }
    Ok(())
}

fn emit_config(config: &ExperimentConfig) -> Result<()> {
    let runs = load_planned_runs(config)?;
    for run in &runs {
        if run.dataset_path.is_none() {
            bail!(
                "run '{}' has no prepared dataset; run `detlab prepare` first",
                run.run_id
            );
        }
        let path = harness::emit_trainer_config(run, config, output_root(config))?;
        println!("  {}", path.display());
    }
    Ok(())
}

fn augment_offline(
    config: &ExperimentConfig,
    input: Option<&Path>,
    output: &Path,
    variants: usize,
) -> Result<()> {
    let default_input = output_root(config).join("splits/train");
    let input = input.unwrap_or(&default_input);
    let classes = datamix::load_classes(input)?;
    let dataset = datamix::load_dataset(input, &classes)?;
    let policy = config.augment.to_policy();
    let materialized = augment::materialize_offline(&dataset, &policy, variants, config.seed)?;
    datamix::write_dataset(&materialized, output)?;
    println!(
        "materialized {} samples ({} originals x {} variants) into {}",
        materialized.len(),
        dataset.len(),
        variants + 1,
        output.display()
    );
    Ok(())
}

fn load_test_split(config: &ExperimentConfig) -> Result<Dataset> {
    let test_dir = output_root(config).join("splits/test");
    if !test_dir.is_dir() {
        bail!("missing {}; run `detlab prepare` first", test_dir.display());
    }
    let classes = datamix::load_classes(&test_dir)?;
    Ok(datamix::load_dataset(&test_dir, &classes)?)
}

fn evaluate(config: &ExperimentConfig, predictions_root: Option<&Path>) -> Result<()> {
    let mut runs = load_planned_runs(config)?;
    let root = match predictions_root {
        Some(path) => path.to_path_buf(),
        None => config
            .paths
            .predictions_root
            .clone()
            .context("pass --predictions-root or set paths.predictions_root")?,
    };
    let test = load_test_split(config)?;
    let mut evaluated = 0usize;
    for run in runs.iter_mut() {
        let dir = root.join(&run.run_id);
        if !dir.is_dir() {
            println!("  {}: no predictions, skipped", run.run_id);
            continue;
        }
        let detections = harness::ingest_predictions(&dir, &test)?;
        harness::evaluate_run(run, &detections, &test, &dir.to_string_lossy())?;
        harness::save_record(run, output_root(config))?;
        let report = run.report.as_ref().expect("just evaluated");
        let run_dir = output_root(config).join("runs").join(&run.run_id);
        harness::write_atomic(&run_dir.join("report.txt"), report.to_kv_text().as_bytes())?;
        let csv = format!(
            "{}\n{}\n",
            detlab::evalmetrics::EvalReport::csv_header(),
            report.to_csv_row()
        );
        harness::write_atomic(&run_dir.join("report.csv"), csv.as_bytes())?;
        println!(
            "  {}: mAP50 {:.3}  mAP50-95 {:.3}",
            run.run_id, report.map50, report.map50_95
        );
        evaluated += 1;
    }
    println!("evaluated {evaluated} runs");
    Ok(())
}

fn report(config: &ExperimentConfig) -> Result<()> {
    let records = harness::load_records(output_root(config))?;
    let tables = harness::render_report(&records, config)?;
    harness::write_report_files(&tables, output_root(config))?;
    println!("mAP50\n{}", tables.map50.to_text());
    println!("mAP50-95\n{}", tables.map50_95.to_text());
    println!(
        "wrote report_map50.csv / report_map5095.csv under {}",
        output_root(config).display()
    );
    Ok(())
}

fn stats(config: &ExperimentConfig) -> Result<()> {
    let records = harness::load_records(output_root(config))?;
    let tables = harness::render_report(&records, config)?;
    let rows = harness::run_stats(&tables)?;
    let csv = harness::stats_to_csv(&rows);
    harness::write_atomic(&output_root(config).join("stats.csv"), csv.as_bytes())?;
    for row in &rows {
        println!(
            "{} {}: baseline {:.3}, best {:.3} ({}), delta {:+.3} ({:+.1}%)",
            row.metric,
            row.column,
            row.baseline,
            row.best_value,
            row.best_condition,
            row.abs_delta,
            row.rel_delta * 100.0
        );
    }
    Ok(())
}
