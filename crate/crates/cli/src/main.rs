use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lcqa::collection::Level;
use lcqa::eval::ContextMode;
use lcqa::pipeline::{export_split, ExportFormat, Pipeline, PipelineConfig, Stage, StageOutcome};
use lcqa::template::Split;

#[derive(Parser)]
#[command(name = "lcqa", version, about = "Synthesize and evaluate long-context question answering benchmarks")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "lcqa.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus and compute token counts.
    Ingest,
    /// Build citation clusters and plan collections per level.
    Assemble,
    /// Derive the three metadata tables for every collection.
    BuildDb,
    /// Select and instantiate query templates, recording gold answers.
    Generate,
    /// Convert queries to questions and keep round-trip consistent ones.
    Validate,
    /// Query the configured models and score their answers.
    Evaluate(EvalArgs),
    /// Aggregate scores, failure patterns and dataset statistics.
    Report,
    /// Write one split for evaluation or reasoning fine-tuning.
    Export(ExportArgs),
    /// Print the plotting data produced by `report`.
    PlotData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several stages in order; defaults to every stage that is configured.
    Run {
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
    },
    /// Check the configuration without running anything.
    Check,
}

#[derive(Args, Default)]
struct EvalArgs {
    #[arg(long, value_delimiter = ',')]
    mode: Vec<ContextMode>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Vec<Level>,
    /// Only evaluate these configured models.
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
    /// Replaces the endpoint base URL of every selected model.
    #[arg(long)]
    base_url: Option<String>,
    #[arg(long)]
    max_inflight: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "eval_jsonl")]
    format: ExportFormat,
    #[arg(long)]
    out: PathBuf,
}

fn apply_eval_overrides(cfg: &mut PipelineConfig, a: &EvalArgs) -> Result<()> {
    let e = &mut cfg.evaluation;
    if !a.mode.is_empty() {
        e.context_modes = a.mode.clone();
    }
    if let Some(s) = a.samples {
        e.samples = s;
    }
    if !a.levels.is_empty() {
        e.levels = a.levels.clone();
    }
    if !a.model.is_empty() {
        for name in &a.model {
            if !e.models.iter().any(|m| &m.name == name) {
                bail!("model `{name}` is not configured under [[evaluation.models]]");
            }
        }
        e.models.retain(|m| a.model.contains(&m.name));
    }
    for m in &mut e.models {
        if let Some(u) = &a.base_url {
            m.endpoint.base_url = u.clone();
        }
        if let Some(n) = a.max_inflight {
            m.endpoint.max_inflight = n;
        }
    }
    Ok(())
}

fn run_stages(p: &Pipeline, stages: &[Stage]) -> Result<()> {
    let (manifest, outcomes) = p.run(stages)?;
    for (s, o) in outcomes {
        let status = match o {
            StageOutcome::Ran => "done",
            StageOutcome::UpToDate => "up to date",
        };
        println!("{s}: {status}");
    }
    println!("{} artifacts recorded in {}", manifest.artifacts().len(), p.path("manifest.json").display());
    Ok(())
}

fn main_inner() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = PipelineConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = cli.output_dir {
        cfg.output_dir = std::env::current_dir()?.join(o);
    }
    let single = |s: Stage| vec![s];
    let stages = match &cli.command {
        Command::Ingest => single(Stage::Ingest),
        Command::Assemble => single(Stage::Assemble),
        Command::BuildDb => single(Stage::BuildDb),
        Command::Generate => single(Stage::Generate),
        Command::Validate => single(Stage::Validate),
        Command::Evaluate(a) => {
            apply_eval_overrides(&mut cfg, a)?;
            single(Stage::Evaluate)
        }
        Command::Report => single(Stage::Report),
        Command::Run { stages } if !stages.is_empty() => stages.clone(),
        Command::Run { .. } => {
            if cfg.evaluation.models.is_empty() {
                log::warn!("no evaluation models configured; running the generation stages only");
                Stage::GENERATION.to_vec()
            } else {
                Stage::ALL.to_vec()
            }
        }
        Command::Check => {
            cfg.validate(&Stage::ALL)?;
            println!("configuration ok");
            return Ok(());
        }
        Command::Export(a) => {
            cfg.validate(&[])?;
            let p = Pipeline::new(cfg);
            let n = export_split(&p, a.split, a.format, &a.out)?;
            println!("wrote {n} {} instances to {}", a.split, a.out.display());
            return Ok(());
        }
        Command::PlotData { out } => {
            cfg.validate(&[])?;
            let p = Pipeline::new(cfg);
            if !p.path("reports/plot_data.json").exists() {
                bail!("no plot data yet; run `lcqa report` first");
            }
            let text = serde_json::to_string_pretty(&p.plot_data()?)?;
            match out {
                Some(path) => {
                    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?
                }
                None => println!("{text}"),
            }
            return Ok(());
        }
    };
    run_stages(&Pipeline::new(cfg), &stages)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
