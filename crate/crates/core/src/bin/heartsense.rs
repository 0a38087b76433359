use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use heartsense::aeho::{run_aeho, AehoConfig};
use heartsense::dataio::{preprocess, write_csv};
use heartsense::mcfa::{optimize_continuous, McfaConfig};
use heartsense::metrics::{compute_metrics, prevalence_sweep, report_kv, report_table, ConfusionMatrix};
use heartsense::pipeline::{
    evaluate, evaluation_report, load_dataset, predict_dataset, predict_stream, select_features, train_pipeline,
    write_training_artifacts, ExperimentConfig, TrainedModel,
};
use heartsense::{Bounds, Error, Result};

#[derive(Parser)]
#[command(
    name = "heartsense",
    version,
    about = "Heart-disease risk classifier",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides any config key, e.g. `--set mcfa.generations=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Kv,
    Both,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Optimizer {
    Mcfa,
    Aeho,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Benchmark {
    Sphere,
    Rastrigin,
    Rosenbrock,
    Ackley,
}

impl Benchmark {
    /// Objective to minimize; every one has its minimum 0 at the origin
    /// except Rosenbrock (at all ones).
    fn value(self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        let n = x.len() as f64;
        match self {
            Benchmark::Sphere => x.iter().map(|v| v * v).sum(),
            Benchmark::Rastrigin => 10.0 * n + x.iter().map(|v| v * v - 10.0 * (2.0 * PI * v).cos()).sum::<f64>(),
            Benchmark::Rosenbrock => x
                .windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum(),
            Benchmark::Ackley => {
                let s1 = x.iter().map(|v| v * v).sum::<f64>() / n;
                let s2 = x.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
                -20.0 * (-0.2 * s1.sqrt()).exp() - s2.exp() + 20.0 + std::f64::consts::E
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Impute and deduplicate a CSV; writes the cleaned CSV.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs feature selection only and prints the chosen attributes.
    SelectFeatures(ConfigArgs),
    /// Trains a model; writes model and reports into the output directory.
    Train(ConfigArgs),
    /// Cross-validates the configuration (or a saved model's) with its mask fixed.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Use this model's mask and settings instead of training first.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Scores a CSV: one `row,label,score` line per record.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Scores JSON lines from standard input (or --input) to standard output.
    Stream {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Metrics of a model on a labelled CSV.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
        /// Also print predictive values over this many prevalence levels.
        #[arg(long)]
        sweep: Option<usize>,
    },
    /// Runs the optimizers on a benchmark function.
    BenchOpt {
        #[arg(long, value_enum, default_value = "both")]
        optimizer: Optimizer,
        #[arg(long, value_enum, default_value = "sphere")]
        function: Benchmark,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 200)]
        generations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            return match e.kind() {
                DisplayHelp | DisplayVersion => {
                    let _ = e.print();
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{}", e.render());
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn write_out(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn run(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    match command {
        Command::Preprocess { data, k, out } => {
            let ds = load_dataset(&data)?;
            let (clean, report) = preprocess(&ds, k)?;
            match out {
                Some(p) => {
                    write_out(&p, &write_csv(&clean))?;
                    print!("{}", report.render());
                }
                None => {
                    print!("{}", write_csv(&clean));
                    eprint!("{}", report.render());
                }
            }
        }
        Command::SelectFeatures(args) => {
            let config = args.load()?;
            let ds = load_dataset(&config.dataset_path())?;
            let (clean, _) = preprocess(&ds, config.preprocess.k_neighbors)?;
            let sel = select_features(&clean, &config)?;
            let names: Vec<&str> = sel.mask.indices().iter().map(|&j| clean.schema[j].name()).collect();
            println!("mask={}", sel.mask);
            println!("selected_count={}", names.len());
            println!("selected={}", names.join(","));
            println!("best_fitness={}", sel.best_fitness);
            println!("evaluations={}", sel.evaluations);
            let mut hist = String::new();
            for (g, v) in sel.history.iter().enumerate() {
                hist.push_str(&format!("{} {v}\n", g + 1));
            }
            write_out(&config.output_path().join("selection_history.txt"), &hist)?;
        }
        Command::Train(args) => {
            let config = args.load()?;
            let run = train_pipeline(&config)?;
            let dir = config.output_path();
            for p in write_training_artifacts(&run, &dir)? {
                println!("wrote {}", p.display());
            }
            let acc = run.training_metrics.accuracy.unwrap_or(f64::NAN);
            println!(
                "selected={}",
                run.model
                    .selected()
                    .iter()
                    .map(|a| a.name())
                    .collect::<Vec<_>>()
                    .join(",")
            );
            println!("train.accuracy={acc}");
        }
        Command::Evaluate { config, model, folds } => {
            let cfg = config.load()?;
            let model = match model {
                Some(p) => TrainedModel::load(p)?,
                None => train_pipeline(&cfg)?.model,
            };
            let ds = load_dataset(&cfg.dataset_path())?;
            let ev = evaluate(&model, &ds, folds.unwrap_or(cfg.folds))?;
            let text = evaluation_report(&ev);
            write_out(&cfg.output_path().join("evaluation.txt"), &text)?;
            print!("{text}");
        }
        Command::Predict { model, data } => {
            let model = TrainedModel::load(model)?;
            let ds = load_dataset(&data)?;
            let mut out = BufWriter::new(stdout.lock());
            writeln!(out, "row,label,score")?;
            let mut failed = 0;
            for (row, p) in predict_dataset(&model, &ds)?.into_iter().enumerate() {
                match p {
                    Ok(p) => writeln!(out, "{row},{},{}", p.label.value(), p.score)?,
                    Err(e) => {
                        failed += 1;
                        eprintln!("row {row}: {e}");
                    }
                }
            }
            out.flush()?;
            if failed > 0 {
                return Err(Error::InvalidArgument(format!("{failed} rows could not be scored")));
            }
        }
        Command::Stream { model, input } => {
            let model = TrainedModel::load(model)?;
            let source: Box<dyn BufRead> = match input {
                Some(p) => Box::new(BufReader::new(std::fs::File::open(p)?)),
                None => Box::new(std::io::stdin().lock()),
            };
            let summary = predict_stream(&model, source, BufWriter::new(stdout.lock()))?;
            eprintln!(
                "processed={} normal={} abnormal={} malformed={}",
                summary.processed, summary.normal, summary.abnormal, summary.malformed
            );
        }
        Command::Report {
            model,
            data,
            format,
            sweep,
        } => {
            let model = TrainedModel::load(model)?;
            let ds = load_dataset(&data)?;
            let mut cm = ConfusionMatrix::default();
            for (row, p) in predict_dataset(&model, &ds)?.into_iter().enumerate() {
                cm.add(p?.label, ds.records[row].label());
            }
            let m = compute_metrics(&cm)?;
            let rows = [("model".to_string(), m)];
            if matches!(format, Format::Table | Format::Both) {
                print!("{}", report_table(&rows));
            }
            if matches!(format, Format::Kv | Format::Both) {
                print!("{}", report_kv(&rows));
            }
            if let Some(n) = sweep {
                let (Some(sens), Some(spec)) = (m.sensitivity, m.specificity) else {
                    return Err(Error::InvalidArgument("sensitivity or specificity undefined".into()));
                };
                let grid: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
                println!("prevalence ppv npv");
                for p in prevalence_sweep(sens, spec, &grid)? {
                    println!("{} {} {}", p.prevalence, p.ppv, p.npv);
                }
            }
        }
        Command::BenchOpt {
            optimizer,
            function,
            dim,
            generations,
            seed,
        } => {
            if dim == 0 {
                return Err(Error::InvalidArgument("dim must be >= 1".into()));
            }
            let bounds = Bounds::new(-5.0, 5.0)?;
            if optimizer != Optimizer::Aeho {
                let cfg = McfaConfig {
                    generations,
                    seed,
                    bounds,
                    ..Default::default()
                };
                let out = optimize_continuous(|x| -function.value(x), dim, &cfg)?;
                println!("mcfa.best={}", -out.best.fitness);
            }
            if optimizer != Optimizer::Mcfa {
                let cfg = AehoConfig {
                    max_generations: generations,
                    seed,
                    bounds,
                    ..Default::default()
                };
                let out = run_aeho(|x| -function.value(x), dim, &cfg)?;
                println!("aeho.best={}", -out.best.fitness);
            }
        }
    }
    Ok(())
}
