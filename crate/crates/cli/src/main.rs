use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use upload_select::baselines::TemplateSpec;
use upload_select::config::{ConfigOverrides, CONFIG_ENV};
use upload_select::pauli::greedy_group;
use upload_select::report::{comparison_table, render};
use upload_select::{pipeline, PauliString, RunConfig, RunReport, Strategy};

#[derive(Parser)]
#[command(name = "upload-select", version, about = "Pair-adaptive upload-circuit selection on Pauli features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy and write tasks.jsonl + summary.toml.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for the report.
        #[arg(long, short, default_value = "report")]
        out: PathBuf,
    },
    /// Run several strategies on the same split and print an aggregate table.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated strategy names (at least two).
        #[arg(long, value_delimiter = ',', required = true)]
        strategies: Vec<String>,
        /// Write one report per strategy under this directory.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Group Pauli strings (one per line) into jointly measurable sets.
    Group { file: PathBuf },
    /// Pretty-print a report directory.
    Inspect { dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML config file; flags override its values.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    /// Name of the label column.
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    prefix_rounds: Option<usize>,
    #[arg(long)]
    tau_acc: Option<f64>,
    #[arg(long)]
    tau_cos: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Total shot budget per sample.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    probe_iterations: Option<usize>,
    #[arg(long)]
    probe_rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_cost: Option<f64>,
    #[arg(long)]
    lambda_fisher: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    cv_folds: Option<usize>,
    /// Template `NAME:BLOCK+BLOCK`; repeat to replace the library.
    #[arg(long = "template")]
    templates: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            ConfigOverrides::from_file(path)?.apply(&mut cfg)?;
        }
        let templates = if self.templates.is_empty() {
            None
        } else {
            Some(
                self.templates
                    .iter()
                    .map(|t| t.parse::<TemplateSpec>())
                    .collect::<Result<Vec<_>, _>>()?,
            )
        };
        ConfigOverrides {
            dataset: self.dataset.clone(),
            label: self.label.clone(),
            strategy: self.strategy.clone(),
            n: self.n,
            k: self.k,
            m: self.m,
            max_rounds: self.max_rounds,
            prefix_rounds: self.prefix_rounds,
            tau_acc: self.tau_acc,
            tau_cos: self.tau_cos,
            alpha: self.alpha,
            shots: self.shots,
            trials: self.trials,
            probe_iterations: self.probe_iterations,
            probe_rho: self.probe_rho,
            seed: self.seed,
            lambda_cost: self.lambda_cost,
            lambda_fisher: self.lambda_fisher,
            beta: self.beta,
            gamma: self.gamma,
            test_fraction: self.test_fraction,
            cv_folds: self.cv_folds,
            templates,
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }
}

fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    report
        .write(dir)
        .with_context(|| format!("writing report to {}", dir.display()))
}

fn group_file(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut paulis: Vec<PauliString> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let p: PauliString = line
            .parse()
            .with_context(|| format!("{}:{}: bad Pauli string `{line}`", path.display(), i + 1))?;
        if let Some(first) = paulis.first() {
            if first.n() != p.n() {
                bail!("{}:{}: `{line}` has {} qubits, expected {}", path.display(), i + 1, p.n(), first.n());
            }
        }
        paulis.push(p);
    }
    let groups = greedy_group(&paulis);
    println!("{} strings, {} groups", paulis.len(), groups.len());
    for (i, g) in groups.iter().enumerate() {
        let members: Vec<String> = g.members().iter().map(ToString::to_string).collect();
        println!("group {i:>2}  basis {}  {}", g.basis(), members.join(" "));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cfg, out } => {
            let cfg = cfg.resolve()?;
            let report = pipeline::run(&cfg)?;
            write_report(&report, &out)?;
            print!("{}", comparison_table(std::slice::from_ref(&report)));
            for t in report.tasks.iter().filter(|t| t.error.is_some()) {
                eprintln!("task {} failed: {}", t.pair, t.error.as_deref().unwrap_or(""));
            }
        }
        Command::Compare { cfg, strategies, out } => {
            if strategies.len() < 2 {
                bail!("compare needs at least two strategies");
            }
            let cfg = cfg.resolve()?;
            let strategies = strategies
                .iter()
                .map(|s| s.parse::<Strategy>())
                .collect::<Result<Vec<_>, _>>()?;
            let reports = pipeline::compare(&cfg, &strategies)?;
            if let Some(dir) = out {
                for r in &reports {
                    write_report(r, &dir.join(r.config.strategy.name()))?;
                }
            }
            print!("{}", comparison_table(&reports));
        }
        Command::Group { file } => group_file(&file)?,
        Command::Inspect { dir } => {
            let report = RunReport::read(&dir).with_context(|| format!("reading report in {}", dir.display()))?;
            print!("{}", render(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
