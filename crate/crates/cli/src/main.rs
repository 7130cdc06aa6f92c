use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dner_cli::config::{EnsembleMode, Overrides, RunConfig};
use dner_cli::pipeline;

#[derive(Parser)]
#[command(
    name = "dner",
    version,
    about = "Ensemble discontinuous NER outputs and score them"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    gold: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// voting, arbitrated or both.
    #[arg(long, global = true)]
    mode: Option<EnsembleMode>,
    /// Minimum number of models that must agree on an entity.
    #[arg(long, global = true)]
    threshold: Option<usize>,
    /// Drop arbitrated entities that no model proposed.
    #[arg(long, global = true)]
    strict_union: bool,
    /// live, mock:majority, mock:union, mock:echo_first or mock:<script>.
    #[arg(long, global = true)]
    client: Option<String>,
    /// Scripted mock responses (JSONL).
    #[arg(long, global = true)]
    mock_script: Option<PathBuf>,
    #[arg(long, global = true)]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    model_name: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// System used as the baseline for relative improvements.
    #[arg(long, global = true)]
    baseline: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert every model output to uniform records aligned with gold.
    Normalize,
    /// Fuse normalized outputs by voting and/or arbitration.
    Ensemble,
    /// Score systems against gold, or check published values with --values.
    Evaluate {
        /// `id=path`; repeatable. Defaults to normalized and fused outputs.
        #[arg(long = "system", value_parser = parse_system)]
        systems: Vec<(String, PathBuf)>,
        /// CSV of system,dataset,precision,recall,f1 to report on instead.
        #[arg(long)]
        values: Option<PathBuf>,
    },
    /// Corpus statistics of the gold file.
    Stats,
    /// Tables, ranks and improvements from a values CSV.
    Report {
        #[arg(long)]
        values: PathBuf,
    },
}

fn parse_system(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((id, path)) if !id.is_empty() && !path.is_empty() => {
            Ok((id.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected id=path, got {s:?}")),
    }
}

impl Global {
    fn overrides(&self) -> Overrides {
        Overrides {
            gold: self.gold.clone(),
            dataset: self.dataset.clone(),
            mode: self.mode,
            threshold: self.threshold,
            strict_union: self.strict_union,
            client: self.client.clone(),
            mock_script: self.mock_script.clone(),
            endpoint: self.endpoint.clone(),
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            concurrency: self.concurrency,
            out: self.out.clone(),
            baseline: self.baseline.clone(),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&cli.global.overrides())?;
    cfg.validate().context("invalid configuration")?;

    match cli.command {
        Command::Normalize => {
            let (summaries, staged) = pipeline::normalize(&cfg)?;
            staged.commit()?;
            for s in summaries {
                println!("{s}");
            }
        }
        Command::Ensemble => {
            let (s, staged) = pipeline::ensemble(&cfg, None)?;
            staged.commit()?;
            println!("records: {}", s.records);
            if let Some(n) = s.voting_entities {
                println!("voting: {n} entities");
            }
            if let Some(n) = s.arbitrated_entities {
                println!(
                    "arbitrated: {n} entities, {} records fell back to voting, {} items rejected",
                    s.fallbacks, s.rejected_items
                );
            }
        }
        Command::Evaluate {
            systems,
            values: None,
        } => {
            let (result, staged) = pipeline::evaluate(&cfg, &systems)?;
            staged.commit()?;
            for m in &result.metrics {
                println!(
                    "{}: P {:.2} R {:.2} F1 {:.2}",
                    m.system, m.precision, m.recall, m.f1
                );
            }
        }
        Command::Evaluate {
            values: Some(values),
            ..
        }
        | Command::Report { values } => {
            let (result, staged) = pipeline::report_values(&cfg, &values)?;
            staged.commit()?;
            println!(
                "{} rows, {} with F1 inconsistent with P and R",
                result.checked,
                result.inconsistent.len()
            );
            for c in &result.inconsistent {
                println!(
                    "  {} {}: printed {:.2}, computed {:.2}",
                    c.system, c.dataset, c.printed_f1, c.computed_f1
                );
            }
        }
        Command::Stats => {
            let (s, staged) = pipeline::stats(&cfg)?;
            staged.commit()?;
            println!("documents {}", s.documents);
            println!("sentences {}", s.sentences);
            println!("tokens {}", s.tokens);
            println!("entities {}", s.entities);
            println!(
                "discontinuous {} ({:.2}%)",
                s.discontinuous_entities,
                100.0 * s.discontinuous_fraction()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
