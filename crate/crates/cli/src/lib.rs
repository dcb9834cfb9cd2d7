//! Argument handling and stage dispatch for the `ded-monitor` binary.
//!
//! All real work lives in the `ded-monitor` library; each subcommand
//! resolves the effective configuration, reads its input artifacts, calls
//! one pipeline stage, and prints a short summary. Exit codes: 0 success,
//! 2 configuration error (including usage), 3 data error, 4 anything else.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use ded_monitor::io::{read_feature_table, read_manifest, DatasetManifest, PipelineConfig};
use ded_monitor::io::PipelineConfigFile;
use ded_monitor::ml::MetricsReport;
use ded_monitor::pipeline::{
    self, ae_feature_table, extract_from_manifest, fused_table, load_reports, load_training,
    run_eval_stage, run_fusion_stage, run_pipeline, run_report_stage, run_training_stage,
    specimens_from_tables, vision_feature_table,
};
use ded_monitor::synth::{generate_dataset, ProfileName};
use ded_monitor::{parallel, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    /// Desk-scale timing: 36 s specimens, minutes for the full dataset.
    Desk,
    /// Full-scale timing: 220 s specimens, for fidelity runs.
    #[value(name = "paper_scale")]
    PaperScale,
}

impl From<ProfileArg> for ProfileName {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => ProfileName::Desk,
            ProfileArg::PaperScale => ProfileName::PaperScale,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ded-monitor",
    version,
    about = "Multimodal acoustic + melt-pool monitoring pipeline for laser DED"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON configuration file; flags below override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Root generator seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Named timing profile.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,

    /// Output directory (default: current directory).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: one per logical CPU).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and its manifest into --out.
    Synth,
    /// Extract per-layer AE features from a dataset into a CSV.
    Ae {
        /// Dataset directory containing manifest.json.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Extract per-layer melt-pool features from a dataset into a CSV.
    Vision {
        /// Dataset directory containing manifest.json.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Align both feature CSVs, rank and select features, and write the
    /// prepared train/test tables.
    Fuse {
        /// Directory containing ae_features.csv and vision_features.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Grid-search every model family on the fused table and fit the best.
    Train {
        /// Directory containing fused_features.csv.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Run the modality ablation and write one metrics report per cell.
    Eval {
        /// Directory containing fused_features.csv (and training.json to
        /// reuse searched hyperparameters).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Render the comparison and per-condition feature summary CSVs.
    Report {
        /// Directory containing fused_features.csv and reports/.
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Everything: synth, extract, fuse, train, eval, report.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let profile = cli.profile.map(Into::into);
    match &cli.config {
        Some(path) => PipelineConfig::load(path, profile, cli.seed),
        None => PipelineConfig::resolve(PipelineConfigFile::default(), profile, cli.seed),
    }
}

/// Data-consuming commands follow the dataset's recorded profile when no
/// config or profile flag says otherwise, so segmentation timing always
/// matches the data being read.
fn config_for_dataset(cli: &Cli, manifest: &DatasetManifest) -> Result<PipelineConfig> {
    if cli.config.is_none() && cli.profile.is_none() {
        let mut profile = manifest.profile.clone();
        if let Some(seed) = cli.seed {
            profile.seed = seed;
        }
        let config = PipelineConfig::from_synth_profile(profile);
        config.validate()?;
        Ok(config)
    } else {
        load_config(cli)
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn print_warnings(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn print_report_table(reports: &[MetricsReport]) {
    println!(
        "{:<20} {:<12} {:>8} {:>9} {:>8} {:>8} {:>8}",
        "model", "modality", "accuracy", "precision", "recall", "f1", "auc"
    );
    for r in reports {
        println!(
            "{:<20} {:<12} {:>8.3} {:>9.3} {:>8.3} {:>8.3} {:>8.3}",
            r.model.map_or("unknown", |m| m.as_str()),
            r.modality.map_or("unknown", |m| m.as_str()),
            r.accuracy,
            r.precision,
            r.recall,
            r.f1,
            r.auc_roc,
        );
    }
}

fn read_dataset(dir: &Path) -> Result<DatasetManifest> {
    read_manifest(&dir.join(pipeline::MANIFEST_FILE))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be >= 1".into()));
        }
        parallel::configure_threads(jobs);
    }
    let out = out_dir(&cli);

    match &cli.command {
        Command::Synth => {
            let config = load_config(&cli)?;
            let stamp = pipeline::stamp_for(&config)?;
            let manifest = generate_dataset(&config.profile, stamp, &out)?;
            println!(
                "wrote {} specimens ({} profile, seed {}) under {}",
                manifest.specimens.len(),
                manifest.profile.name.as_str(),
                manifest.profile.seed,
                out.display()
            );
        }
        Command::Ae { data } => {
            let manifest = read_dataset(data)?;
            let config = config_for_dataset(&cli, &manifest)?;
            let extracted = extract_from_manifest(&manifest, data, &config)?;
            print_warnings(&extracted.warnings);
            let table = ae_feature_table(&extracted.specimens)?;
            let path = out.join(pipeline::AE_TABLE_FILE);
            pipeline::write_stamped_table(&path, &table, &pipeline::stamp_for(&config)?)?;
            println!("wrote {} AE feature rows to {}", table.n_rows(), path.display());
        }
        Command::Vision { data } => {
            let manifest = read_dataset(data)?;
            let config = config_for_dataset(&cli, &manifest)?;
            let extracted = extract_from_manifest(&manifest, data, &config)?;
            print_warnings(&extracted.warnings);
            let table = vision_feature_table(&extracted.specimens)?;
            let path = out.join(pipeline::VISION_TABLE_FILE);
            pipeline::write_stamped_table(&path, &table, &pipeline::stamp_for(&config)?)?;
            println!(
                "wrote {} vision feature rows to {}",
                table.n_rows(),
                path.display()
            );
        }
        Command::Fuse { data } => {
            let config = load_config(&cli)?;
            let ae = read_feature_table(&data.join(pipeline::AE_TABLE_FILE))?;
            let vision = read_feature_table(&data.join(pipeline::VISION_TABLE_FILE))?;
            let specimens = specimens_from_tables(&ae, &vision)?;
            let fused = fused_table(&specimens)?;
            pipeline::write_stamped_table(
                &out.join(pipeline::FUSED_TABLE_FILE),
                &fused,
                &pipeline::stamp_for(&config)?,
            )?;
            let prepared = run_fusion_stage(&fused, &config, &out)?;
            print_warnings(&prepared.warnings);
            println!(
                "fused {} layer samples; selected {} features; train/test = {}/{} rows",
                fused.n_rows(),
                prepared.selected.len(),
                prepared.train.n_rows(),
                prepared.test.n_rows()
            );
        }
        Command::Train { data } => {
            let config = load_config(&cli)?;
            let fused = read_feature_table(&data.join(pipeline::FUSED_TABLE_FILE))?;
            let training = run_training_stage(&fused, &config, &out)?;
            for (kind, outcome) in &training.searches {
                let best_acc = outcome
                    .points
                    .iter()
                    .map(|p| p.mean_accuracy)
                    .fold(f64::NEG_INFINITY, f64::max);
                println!(
                    "{}: searched {} candidates, best CV accuracy {:.3}",
                    kind.as_str(),
                    outcome.points.len(),
                    best_acc
                );
            }
        }
        Command::Eval { data } => {
            let config = load_config(&cli)?;
            let fused = read_feature_table(&data.join(pipeline::FUSED_TABLE_FILE))?;
            let specs = match load_training(data)? {
                Some(training) => training.best_specs(),
                None => Vec::new(),
            };
            let outcome = run_eval_stage(&fused, &specs, &config, &out)?;
            print_warnings(&outcome.warnings);
            print_report_table(&outcome.reports);
        }
        Command::Report { data } => {
            let config = load_config(&cli)?;
            let fused = read_feature_table(&data.join(pipeline::FUSED_TABLE_FILE))?;
            let reports = load_reports(data)?;
            run_report_stage(&fused, &reports, &config, &out)?;
            println!(
                "wrote {} and {} under {}",
                pipeline::COMPARISON_FILE,
                pipeline::FEATURE_SUMMARY_FILE,
                out.display()
            );
        }
        Command::Pipeline => {
            let config = load_config(&cli)?;
            let summary = run_pipeline(&config, &out)?;
            print_warnings(&summary.warnings);
            println!(
                "dataset: {} specimens; feature rows: {} AE, {} vision, {} fused",
                summary.manifest.specimens.len(),
                summary.ae_rows,
                summary.vision_rows,
                summary.fused_rows
            );
            print_report_table(&summary.outcome.reports);
        }
    }
    Ok(())
}
