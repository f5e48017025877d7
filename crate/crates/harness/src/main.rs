use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use retassess::config::ExperimentConfig;
use retassess::grid::Coordinate;
use retassess::results::{read_results, HEADER};
use retassess::run::{evaluate, master_seed, prepare, ModelContext};
use retassess::summary;
use retassess::{exit_code, run_grid, ModelSpec, UsageError, EXIT_USAGE};
use retassess_core::dataset::{load_dataset, save_gray50};
use retassess_core::sta::{analyze_validity, write_reports, DEFAULT_Z_THRESHOLD};
use retassess_core::{Adjust, CombineMode, DatasetKind};
use retassess_learn::{train, ClassifierKind, ClassifierSpec, Dataset};

#[derive(Parser)]
#[command(name = "retassess", version, about = "Functional assessment of retinal models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset to a grayscale Gray50 file.
    Convert {
        #[arg(long)]
        dataset: DatasetKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Find the valid neurons of a model and write the reports as JSON.
    Sta {
        #[arg(long)]
        model: ModelSpec,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        rows: usize,
        #[arg(long, default_value_t = DEFAULT_Z_THRESHOLD)]
        z_threshold: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the feature matrix of one grid point.
    Features {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train and evaluate one grid coordinate and print its result row.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        classifier: ClassifierKind,
        /// Also save the model trained with the first seed.
        #[arg(long)]
        save_model: Option<PathBuf>,
    },
    /// Run the full grid, appending to (and resuming) a results CSV.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the grid for several models and relate their MSE to accuracy.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summary tables from a results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set budget=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct PointArgs {
    #[arg(long)]
    seed: u64,
    /// Model spec; defaults to the first configured model.
    #[arg(long)]
    model: Option<ModelSpec>,
    #[arg(long, default_value_t = 1)]
    split: usize,
    #[arg(long, default_value = "no")]
    adjust: Adjust,
    #[arg(long, default_value = "none")]
    combine: CombineMode,
    #[arg(long, default_value = "no")]
    valid: String,
}

impl ConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text)?;
        }
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--set {o:?}: expected KEY=VALUE")))?;
            cfg.set(k, v)?;
        }
        if seed.is_some() {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PointArgs {
    fn resolve(&self, cfg: &mut ExperimentConfig) -> Result<Coordinate> {
        let model = match &self.model {
            Some(m) => m.clone(),
            None => cfg.models.first().cloned().ok_or_else(|| UsageError("no model configured".into()))?,
        };
        cfg.models = vec![model.clone()];
        let valid = match self.valid.as_str() {
            "yes" => true,
            "no" => false,
            v => return Err(UsageError(format!("--valid must be yes or no, got {v:?}")).into()),
        };
        let coord = Coordinate {
            model: model.name,
            split: self.split,
            adjust: self.adjust,
            combine: self.combine,
            valid,
            classifier: ClassifierKind::RandomForest,
        };
        coord.pipeline().validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(coord)
    }
}

fn point_context(config: &ConfigArgs, point: &PointArgs) -> Result<(ExperimentConfig, Coordinate)> {
    let mut cfg = config.load(Some(point.seed))?;
    let coord = point.resolve(&mut cfg)?;
    Ok((cfg, coord))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Convert { dataset, input, output } => {
            let set = load_dataset(dataset, &input)?;
            save_gray50(&set.to_gray(), &output)?;
            println!("wrote {} images to {}", set.len(), output.display());
        }
        Command::Sta { model, seed, rows, z_threshold, output } => {
            let m = model.build(seed)?;
            let reports = analyze_validity(m.as_ref(), rows, seed, z_threshold)?;
            write_reports(&output, &reports)?;
            let valid = reports.iter().filter(|r| r.valid).count();
            println!("{valid} of {} neurons valid", reports.len());
        }
        Command::Features { config, point, output } => {
            let (cfg, coord) = point_context(&config, &point)?;
            let data = prepare(&cfg)?;
            let ctx = ModelContext::build(&cfg.models[0], &cfg, &data, coord.valid)?;
            let responses = ctx.responses(&data, coord.split, coord.adjust)?;
            let m = ctx.features(&responses, &data.dataset, &coord)?;
            m.save(&output)?;
            println!("{} x {} written to {}", m.n_samples(), m.n_features(), output.display());
        }
        Command::Train { config, point, classifier, save_model } => {
            let (cfg, mut coord) = point_context(&config, &point)?;
            coord.classifier = classifier;
            let master = master_seed(&cfg)?;
            let data = prepare(&cfg)?;
            let ctx = ModelContext::build(&cfg.models[0], &cfg, &data, coord.valid)?;
            let responses = ctx.responses(&data, coord.split, coord.adjust)?;
            let m = ctx.features(&responses, &data.dataset, &coord)?;
            let row = evaluate(&ctx, &data, &m, &coord, master)?;
            println!("{HEADER}\n{}", row.to_csv());
            if let Some(path) = save_model {
                let train_set = Dataset::from_matrix(&m)?.select(&data.train);
                let model = train(&ClassifierSpec::new(classifier), &train_set, coord.training_seed(master))?;
                model.save(&path)?;
            }
        }
        Command::Run { config, seed, out } => {
            let cfg = config.load(Some(seed))?;
            write_file(&retassess::results::sidecar(&out, ".config"), &cfg.to_text())?;
            let report = run_grid(&cfg, &out)?;
            println!(
                "{} rows in {} ({} resumed, {} failed this run)",
                report.rows.len(),
                out.display(),
                report.resumed,
                report.failures.len()
            );
        }
        Command::Compare { config, seed, out } => {
            let cfg = config.load(Some(seed))?;
            if cfg.models.len() < 2 {
                return Err(UsageError("compare needs at least two models".into()).into());
            }
            let report = run_grid(&cfg, &out)?;
            let cmp = summary::compare_models(&report.rows);
            write_file(&retassess::results::sidecar(&out, ".compare.csv"), &cmp.table())?;
            for (m, mse) in &cmp.models {
                println!("{m}: MSE {mse}");
            }
            println!(
                "accuracy anti-monotone in MSE at {:.1}% of {} grid points",
                100.0 * cmp.anti_monotone_fraction(),
                cmp.points.len()
            );
        }
        Command::Report { results, out_dir } => {
            let rows = read_results(&results)?;
            anyhow::ensure!(!rows.is_empty(), "{} holds no rows", results.display());
            std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
            write_file(&out_dir.join("accuracy_vs_features.csv"), &summary::accuracy_vs_features(&rows))?;
            let mut best = String::from(HEADER);
            best.push('\n');
            for r in summary::max_per_dataset(&rows) {
                best.push_str(&r.to_csv());
                best.push('\n');
            }
            write_file(&out_dir.join("max_accuracy.csv"), &best)?;
            let gains = summary::split_gain_table(&summary::split_gains(&rows));
            write_file(&out_dir.join("split_gain.csv"), &gains)?;
            print!("{gains}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
