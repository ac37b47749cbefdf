//! Command-line front end: `synth`, `train`, `eval`, `ablate`, `heatmap`.
//!
//! Failures print one line `error kind=<kind> msg="<message>"` to stderr
//! and exit nonzero (2 for configuration and parse errors, 3 for file
//! errors, 1 otherwise).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2ue::config::RunConfig;
use d2ue::pipeline;
use d2ue::Error;

#[derive(Parser)]
#[command(name = "d2ue", version, about = "Diversified deep-ensemble anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark into the data directory.
    Synth,
    /// Train an ensemble on the train split.
    Train,
    /// Score the test split and write metrics and per-image scores.
    Eval,
    /// Train and score every ablation variant over the seed list.
    Ablate,
    /// Export per-method anomaly maps of selected test images as PGM.
    Heatmap {
        /// Comma-separated test image ids, e.g. test_0000,test_0050.
        #[arg(long)]
        ids: Option<String>,
    },
}

#[derive(Args)]
struct Overrides {
    /// `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Comma-separated seed list for `ablate`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// ens_recon, output_unc or dsu.
    #[arg(long, global = true)]
    method: Option<String>,
    /// cka, euclidean, manhattan, cosine, pearson or none.
    #[arg(long, global = true)]
    similarity: Option<String>,
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn resolve(cli: &Cli) -> d2ue::Result<RunConfig> {
    let o = &cli.overrides;
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("seed", o.seed.clone()),
        ("seeds", o.seeds.clone()),
        ("method", o.method.clone()),
        ("similarity", o.similarity.clone()),
        ("lambda", o.lambda.clone()),
        ("out", o.out.as_ref().map(|p| p.display().to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    if let Command::Heatmap { ids: Some(ids) } = &cli.command {
        cfg.set("heatmap_ids", ids)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> d2ue::Result<()> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Synth => println!("{}", pipeline::cmd_synth(&cfg)?.display()),
        Command::Train => println!("{}", pipeline::cmd_train(&cfg)?.display()),
        Command::Eval => {
            let m = pipeline::cmd_eval(&cfg)?;
            println!("method={} auroc={} ap={}", cfg.method, m.auroc, m.ap);
        }
        Command::Ablate => {
            let rows = pipeline::cmd_ablate(&cfg)?;
            for s in pipeline::summarize(&rows) {
                println!(
                    "{} auroc={:.4}±{:.4} ap={:.4}±{:.4}",
                    s.variant, s.auroc_mean, s.auroc_std, s.ap_mean, s.ap_std
                );
            }
        }
        Command::Heatmap { .. } => {
            for p in pipeline::cmd_heatmap(&cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
            eprintln!("error kind={} msg=\"{msg}\"", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
