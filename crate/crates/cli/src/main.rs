use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use chameleon_core::attack::{self, AttackKind};
use chameleon_core::harness::{self, ExperimentConfig, GameOutcome, Knob, SweepRow};
use chameleon_core::metrics::{self, MetricReport};
use chameleon_core::theory;
use chameleon_core::Error;
use clap::{Args, Parser, Subcommand};

/// Label-only membership inference with adaptive poisoning.
#[derive(Parser, Debug)]
#[command(name = "chameleon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal-attack TPR as a function of the number of poisoned replicas.
    Theory {
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Target false positive rate.
        #[arg(long, default_value_t = 0.05)]
        fpr: f64,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        /// Write the curve as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the privacy game with adaptive poisoning.
    Run(RunArgs),
    /// Run the game with a fixed replica count per challenge point.
    Static {
        #[command(flatten)]
        run: RunArgs,
        /// Replica counts to sweep, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        k: Vec<usize>,
    },
    /// Sweep one hyperparameter.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// One of t_p, m, k_max, t_nb, neighborhood_size.
        #[arg(long)]
        knob: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Shadow-model budget for a configuration, or the recorded cost of a finished run.
    Cost {
        #[arg(long, conflicts_with = "run_dir")]
        config: Option<PathBuf>,
        /// Directory of a finished run.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Recompute metrics from a score CSV.
    Metrics {
        scores: PathBuf,
        /// Write the metric CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML experiment configuration; built-in desk-scale defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// 64 target models and 500 challenge points.
    #[arg(long)]
    full_scale: bool,
    /// Poison each challenge point with its own single-point search.
    #[arg(long)]
    game_strict: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.full_scale {
            cfg = cfg.full_scale();
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.game_strict |= self.game_strict;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_reports(reports: &[MetricReport]) -> Result<(), Error> {
    metrics::write_reports_csv(io::stdout().lock(), reports)
}

fn summarize(outcome: &GameOutcome) -> Result<(), Error> {
    print_reports(&outcome.reports)?;
    eprintln!(
        "shadow models {}, target accuracy {:.4}, results in {}",
        outcome.cost.shadow_models,
        outcome.target_accuracy,
        outcome.out_dir.display()
    );
    Ok(())
}

fn print_sweep(label: &str, rows: &[SweepRow]) -> Result<(), Error> {
    harness::write_sweep_csv(io::stdout().lock(), label, rows)
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Theory { tau, classes, fpr, k_max, out } => {
            let curve = theory::tpr_vs_k_curve(tau, classes, fpr, 0..=k_max)?;
            theory::write_curve_csv(open_out(&out)?, &curve)
        }
        Command::Run(args) => summarize(&harness::run_privacy_game(&args.load()?)?),
        Command::Static { run, k } => {
            let cfg = run.load()?;
            let outcomes = harness::run_static_sweep(&cfg, &k)?;
            for (k, o) in &outcomes {
                eprintln!("k = {k}: shadow models {}, target accuracy {:.4}", o.cost.shadow_models, o.target_accuracy);
            }
            let rows: Vec<_> = outcomes
                .iter()
                .flat_map(|(_, o)| o.reports.iter().cloned())
                .collect();
            print_reports(&rows)
        }
        Command::Ablate { run, knob, values } => {
            let knob: Knob = knob.parse()?;
            let cfg = run.load()?;
            print_sweep(knob.name(), &harness::run_ablation(&cfg, knob, &values)?)
        }
        Command::Cost { config, run_dir } => {
            if let Some(dir) = run_dir {
                let text = fs::read_to_string(dir.join("cost.csv"))?;
                print!("{text}");
                return Ok(());
            }
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            let p = &cfg.poison;
            println!("quantity,value");
            println!("shadow_model_budget,{}", p.max_models());
            println!("models_per_iteration,{}", 2 * p.m);
            println!("target_models,{}", cfg.num_target_models);
            println!("queries_per_challenge,{}", cfg.neighborhood.size + 1);
            Ok(())
        }
        Command::Metrics { scores, out } => {
            let records = attack::read_scores_csv(File::open(&scores)?)?;
            let mut kinds: Vec<AttackKind> = records.iter().map(|r| r.attack).collect();
            kinds.sort_unstable();
            kinds.dedup();
            if kinds.is_empty() {
                return Err(Error::EmptyInput("score file"));
            }
            let reports = kinds
                .into_iter()
                .map(|k| {
                    let (inside, outside) = attack::split_by_truth(&records, k);
                    metrics::report(k.name(), &inside, &outside)
                })
                .collect::<Result<Vec<_>, _>>()?;
            metrics::write_reports_csv(open_out(&out)?, &reports)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
