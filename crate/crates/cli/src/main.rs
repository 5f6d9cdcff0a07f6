// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use promptlens::perturb::{PerturbKind, TemplateFamily};
use promptlens::target::TargetSelector;
use promptlens_cli::{
    cmd_analyze, cmd_anova, cmd_corr, cmd_dump_traces, cmd_perturb, cmd_pss, cmd_steer, Outcome,
    RunConfig, Source,
};

/// Prompt-sensitivity diagnostics for decoder-only transformers.
#[derive(Parser)]
#[command(name = "promptlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer Taylor profile of anchor-vs-variant prompt pairs.
    Analyze(Common),
    /// Per-question sensitivity scores over the prompt columns.
    Pss(Common),
    /// Template/question variance shares of the target logit.
    Anova(Common),
    /// Replace layer states with the anchor's and measure the remaining gap.
    Steer(Common),
    /// Generate prompt variants with edit logs as JSON lines.
    Perturb(Common),
    /// Write per-prompt trace files with gradients at every layer.
    DumpTraces(Common),
    /// Fit run-level PSS against the mean upper bound.
    Corr {
        /// Output directory of an earlier analyze + pss run (repeatable).
        #[arg(long = "run", required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON model configuration for the reference model.
    #[arg(long, conflicts_with = "traces")]
    model_config: Option<PathBuf>,
    /// Directory of trace files produced by dump-traces or an adapter.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// JSON-lines items {question, options, answer_index}; built-in toy items if omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// meaning12, seed, first, latter, fewer or more.
    #[arg(long, default_value = "meaning12")]
    templates: TemplateFamily,
    /// first, latter, fewer, more, typo, orth or para.
    #[arg(long)]
    perturb: Option<PerturbKind>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// correct, incorrect, number or token:ID.
    #[arg(long, default_value = "correct")]
    target: TargetSelector,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Paraphrase cache file (default: OUT/paraphrase_cache.jsonl).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Use the offline synonym table instead of the paraphrase service.
    #[arg(long)]
    stub_paraphrase: bool,
}

impl From<Common> for RunConfig {
    fn from(c: Common) -> Self {
        let source = match (c.model_config, c.traces) {
            (Some(p), _) => Some(Source::Model(p)),
            (None, Some(d)) => Some(Source::Traces(d)),
            (None, None) => None,
        };
        RunConfig {
            source,
            dataset: c.dataset,
            templates: c.templates,
            perturb: c.perturb,
            k: c.k,
            target: c.target,
            seed: c.seed,
            out: c.out,
            cache: c.cache,
            stub_paraphrase: c.stub_paraphrase,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(c) => cmd_analyze(&c.into()),
        Command::Pss(c) => cmd_pss(&c.into()),
        Command::Anova(c) => cmd_anova(&c.into()),
        Command::Steer(c) => cmd_steer(&c.into()),
        Command::Perturb(c) => cmd_perturb(&c.into()),
        Command::DumpTraces(c) => cmd_dump_traces(&c.into()),
        Command::Corr { runs, out } => cmd_corr(&runs, &out),
    };
    match result {
        Ok(Outcome { written, failures }) => {
            for path in &written {
                println!("{}", path.display());
            }
            for f in &failures {
                eprintln!("skipped: {f}");
            }
            if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
