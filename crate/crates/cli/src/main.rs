use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use eprop::data::{load_split, Split};
use eprop::harness::{
    default_threshold, evaluate_accuracy, persist, run_trial, write_critical, write_records, CellSummary,
    Experiment, ExperimentConfig,
};
use eprop::uncertainty::UncertaintyPlan;
use eprop::{checkpoint, oracle, LayerSpec};

#[derive(Parser)]
#[command(name = "eprop", version, about = "Equilibrium Propagation on simulated resistive networks")]
struct Cli {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset root holding <dataset>/{train,t10k}-*-ubyte files.
    #[arg(long, global = true, env = "EPROP_DATA_DIR")]
    data_dir: Option<PathBuf>,

    /// Log level (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single network and save its record and checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Measurement noise standard deviation.
        #[arg(long)]
        sigma: Option<f64>,
        /// Measurements averaged per phase.
        #[arg(long)]
        samples: Option<usize>,
        /// Trial index (selects the derived seed).
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Accuracy against measurement noise.
    SweepSigma {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Accuracy against noise for several sample counts, with critical sigma.
    SweepSamples {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Mean accuracy over a (beta, eta_eff) grid for each grid sigma.
    SweepGrid {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eta_effs: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        grid_sigmas: Option<Vec<f64>>,
    },
    /// Test accuracy of a saved checkpoint.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value = "mnist")]
        dataset: String,
        #[arg(long, default_value_t = 500.0)]
        gamma: f64,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Evaluate on the first n test examples only.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Sample count needed to bring a noise level under a critical one.
    Plan {
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        sigma_crit: f64,
    },
    /// Compare EP updates against finite-difference gradients on toy circuits.
    #[command(hide = true)]
    Validate {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1e-2)]
        beta: f64,
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: Option<String>,
    /// Layer widths, e.g. 1568,1024,10.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Relaxation sweeps per phase.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Parameter updates per trial.
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Convergence threshold on test accuracy; defaults per dataset.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    train_subset: Option<usize>,
    #[arg(long)]
    test_subset: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
}

fn base_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => Ok(ExperimentConfig::load(p)?),
        None => Ok(ExperimentConfig::default()),
    }
}

impl RunArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
            if self.threshold.is_none() {
                cfg.threshold = default_threshold(d);
            }
        }
        if let Some(l) = &self.layers {
            cfg.layers = LayerSpec::new(l.clone())?;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(beta => beta, eta => eta, gamma => gamma, steps => relaxation_steps,
             batch => batch_size, iters => iterations, seed => base_seed,
             threshold => threshold, eval_interval => eval_interval);
        if self.train_subset.is_some() {
            cfg.train_subset = self.train_subset;
        }
        if self.test_subset.is_some() {
            cfg.test_subset = self.test_subset;
        }
        Ok(())
    }
}

impl SweepArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = &self.sigmas {
            cfg.sigmas = s.clone();
        }
        if let Some(n) = &self.samples {
            cfg.samples = n.clone();
        }
    }
}

fn load_experiment(cli_data: &Option<PathBuf>, cfg: ExperimentConfig) -> Result<Experiment> {
    let mut cfg = cfg;
    if cfg.data_dir.is_none() {
        cfg.data_dir = cli_data.clone();
    }
    cfg.validate()?;
    Experiment::load(cfg).context("loading dataset")
}

fn prepare_out(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()).with_context(|| format!("writing {}", path.display()))
}

fn print_cells(cells: &[CellSummary]) {
    println!("sigma,n_samples,beta,eta_eff,mean_acc,max_acc,conv_rate");
    for c in cells {
        println!(
            "{:e},{},{},{:e},{:.4},{:.4},{:.3}",
            c.sigma, c.n_samples, c.beta, c.eta_eff, c.mean_acc, c.max_acc, c.conv_rate
        );
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log).parse_default_env().init();
    let cfg_path = cli.config.as_deref();

    match &cli.command {
        Command::Train {
            run,
            sigma,
            samples,
            trial,
        } => {
            let mut cfg = base_config(cfg_path)?;
            run.apply(&mut cfg)?;
            // without a config file the default sigma grid is not a sensible single value
            let from_file = cfg_path.and_then(|_| cfg.sigmas.first().copied());
            let sigma = sigma.or(from_file).unwrap_or(0.0);
            let n = samples.or_else(|| cfg.samples.first().copied()).unwrap_or(1);
            cfg.sigmas = vec![sigma];
            cfg.samples = vec![n];
            let exp = load_experiment(&cli.data_dir, cfg)?;
            prepare_out(&run.out, &exp.config)?;
            let settings = exp.config.settings(sigma, n, exp.config.beta, exp.config.eta);
            let (record, params) = run_trial(&settings, *trial, &exp.train, &exp.test)?;
            write_records(std::slice::from_ref(&record), &run.out.join("train.jsonl"))?;
            checkpoint::save(&params, &run.out.join("params.epnp"))?;
            println!(
                "final_accuracy {:.4} max_accuracy {:.4} converged {}",
                record.final_accuracy, record.max_accuracy, record.converged
            );
            if let Some(e) = &record.error {
                println!("stopped early: {e}");
            }
        }
        Command::SweepSigma { run, sweep } | Command::SweepSamples { run, sweep } => {
            let mut cfg = base_config(cfg_path)?;
            run.apply(&mut cfg)?;
            sweep.apply(&mut cfg);
            let exp = load_experiment(&cli.data_dir, cfg)?;
            prepare_out(&run.out, &exp.config)?;
            if matches!(cli.command, Command::SweepSigma { .. }) {
                let result = exp.sweep_sigma()?;
                persist(&result.records, &result.cells, &run.out, "sweep_sigma")?;
                print_cells(&result.cells);
            } else {
                let (result, critical) = exp.sweep_samples()?;
                persist(&result.records, &result.cells, &run.out, "sweep_samples")?;
                write_critical(&critical, &run.out.join("critical_sigma.csv"))?;
                print_cells(&result.cells);
                for c in &critical {
                    match c.sigma {
                        Some(s) => println!("N={} critical sigma {s:e}", c.n_samples),
                        None => println!("N={} critical sigma: none reached threshold", c.n_samples),
                    }
                }
            }
        }
        Command::SweepGrid {
            run,
            trials,
            betas,
            eta_effs,
            grid_sigmas,
        } => {
            let mut cfg = base_config(cfg_path)?;
            run.apply(&mut cfg)?;
            if let Some(t) = trials {
                cfg.trials = *t;
            }
            if let Some(b) = betas {
                cfg.grid.betas = b.clone();
            }
            if let Some(e) = eta_effs {
                cfg.grid.eta_effs = e.clone();
            }
            if let Some(s) = grid_sigmas {
                cfg.grid.sigmas = s.clone();
            }
            let exp = load_experiment(&cli.data_dir, cfg)?;
            prepare_out(&run.out, &exp.config)?;
            let result = exp.sweep_grid()?;
            persist(&result.records, &result.cells, &run.out, "sweep_grid")?;
            print_cells(&result.cells);
        }
        Command::Eval {
            checkpoint: path,
            dataset,
            gamma,
            steps,
            limit,
        } => {
            let params = checkpoint::load(path)?;
            let root = match &cli.data_dir {
                Some(d) => d.clone(),
                None => base_config(cfg_path)?
                    .data_root()
                    .context("no data directory: pass --data-dir or set EPROP_DATA_DIR")?,
            };
            let mut test = load_split(&root, dataset, Split::Test)?;
            if let Some(n) = limit {
                test = test.head(*n);
            }
            let acc = evaluate_accuracy(&params, &test, *gamma, *steps)?;
            println!("accuracy {acc:.4} on {} examples", test.len());
        }
        Command::Plan { sigma, sigma_crit } => {
            let plan = UncertaintyPlan::new(*sigma, *sigma_crit)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Validate {
            instances,
            beta,
            h,
            seed,
        } => {
            let report = oracle::gradient_fidelity(*instances, *beta, *seed, *h)?;
            let worst = report.cosines.iter().copied().fold(f64::INFINITY, f64::min);
            println!(
                "instances {} pass fraction {:.3} (cosine >= {}) worst cosine {:.4}",
                report.cosines.len(),
                report.pass_fraction(),
                report.threshold,
                worst
            );
            if report.pass_fraction() < 0.95 {
                bail!("gradient fidelity below 95%");
            }
        }
    }
    Ok(())
}
