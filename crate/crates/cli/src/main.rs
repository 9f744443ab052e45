use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use override_lab::dual_learner::Weighting;
use override_lab::experiment::commands::{cmd_audit, cmd_simulate, cmd_train, dataset_file, CONFIG_FILE};
use override_lab::experiment::reproduce::{reproduce, EXPERIMENTS};
use override_lab::experiment::scenarios::canonical;
use override_lab::experiment::LabConfig;
use override_lab::LabError;

const EXIT_VALIDATION: u8 = 2;
const EXIT_VERDICT: u8 = 3;

#[derive(Parser)]
#[command(name = "override-lab", version, about = "Simulate, train and audit capability-aware override learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario, used when no --config is given.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long, env = "OVERRIDE_LAB_OUT")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Naive,
    Kappa,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit reward and capability models to a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV or a directory written by `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
        /// Alternation rounds; 0 keeps the cold start.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Stratified rates, concordance and monitors for a dataset.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Training output directory (or its summary.json) for estimated capability.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a named experiment end to end and write a verdict.
    Reproduce {
        /// One of fig1, identifiability, flywheel, stacking, amplification, tiers, monitors.
        #[arg(long)]
        scenario: String,
        #[arg(long, env = "OVERRIDE_LAB_OUT")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Config from --config, else --scenario, else the config saved next to a dataset.
fn load_config(common: &Common, dataset: Option<&Path>) -> Result<LabConfig> {
    let cfg = match (&common.config, &common.scenario) {
        (Some(path), _) => LabConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (None, Some(name)) => canonical(name)?,
        (None, None) => {
            let saved = dataset
                .map(dataset_file)
                .and_then(|f| f.parent().map(|p| p.join(CONFIG_FILE)))
                .filter(|p| p.exists());
            match saved {
                Some(path) => LabConfig::load(&path).with_context(|| format!("loading {}", path.display()))?,
                None => bail!(LabError::Config("one of --config or --scenario is required".into())),
            }
        }
    };
    Ok(match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load_config(&common, None)?;
            let data = cmd_simulate(&cfg, &common.out)?;
            println!(
                "simulated {} interactions from {} clinicians into {}",
                data.records.len(),
                data.truth.clinicians.len(),
                common.out.display()
            );
            Ok(0)
        }
        Command::Train {
            common,
            dataset,
            weighting,
            rounds,
        } => {
            let mut cfg = load_config(&common, Some(&dataset))?;
            if let Some(w) = weighting {
                cfg.training.weighting = match w {
                    WeightingArg::Naive => Weighting::Naive,
                    WeightingArg::Kappa => Weighting::Kappa,
                };
            }
            if let Some(r) = rounds {
                cfg.training.max_rounds = r;
            }
            let summary = cmd_train(&dataset, &cfg, &common.out)?;
            println!(
                "trained {} records: {:?} after {} rounds",
                summary.records, summary.status, summary.iterations
            );
            match &summary.anchor {
                Some(a) if !a.pass => {
                    eprintln!(
                        "anchor validation failed: concordance {:.3} below {:.3}",
                        a.concordance, a.threshold
                    );
                    Ok(EXIT_VERDICT)
                }
                Some(a) => {
                    println!("anchor concordance {:.3}", a.concordance);
                    Ok(0)
                }
                None => Ok(0),
            }
        }
        Command::Audit { common, dataset, trace } => {
            let cfg = load_config(&common, Some(&dataset))?;
            let report = cmd_audit(&dataset, trace.as_deref(), &cfg, &common.out)?;
            match &report.note {
                Some(note) => println!("{note}"),
                None => println!(
                    "audited {} records (capability from {}); {} clinicians flagged for low decision entropy",
                    report.records,
                    report.kappa_source,
                    report.monitors.automation_flags.len()
                ),
            }
            Ok(0)
        }
        Command::Reproduce { scenario, out, seed } => {
            if !EXPERIMENTS.contains(&scenario.as_str()) {
                bail!(LabError::Unknown {
                    kind: "experiment",
                    name: scenario,
                });
            }
            let verdict = reproduce(&scenario, &out, seed)?;
            for c in &verdict.checks {
                let value = c.value.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
                println!(
                    "{} {}: {} (expected {})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    value,
                    c.expected
                );
            }
            println!("{}: {}", verdict.experiment, if verdict.pass { "PASS" } else { "FAIL" });
            Ok(if verdict.pass { 0 } else { EXIT_VERDICT })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let validation = err.chain().any(|e| e.downcast_ref::<LabError>().is_some_and(LabError::is_validation));
            ExitCode::from(if validation { EXIT_VALIDATION } else { 1 })
        }
    }
}
