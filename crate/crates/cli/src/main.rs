use std::path::PathBuf;
use std::process::ExitCode;

use bangbang_core::{commands, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Bang-bang optimal control with immersed-interface solvers.
#[derive(Debug, Parser)]
#[command(name = "bangbang", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; defaults describe the switching benchmark.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config entry, e.g. `--set mesh.steps=4096` (repeatable).
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for random initial controls (overrides `optimizer.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Reference {
    PaperExact,
    Continuous,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the state equation; writes state.csv and interfaces.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Solve state and adjoint; writes adjoint.csv and gradient.csv.
    Adjoint {
        #[command(flatten)]
        common: Common,
    },
    /// IIM versus Euler error table; writes convergence.csv.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list of N_t values.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        reference: Option<Reference>,
    },
    /// State, adjoint and gradient errors per level; writes gradcheck.csv.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        /// Forward-difference step.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Trust-region optimization; writes result.json, trace.csv and state.csv.
    Optimize {
        #[command(flatten)]
        common: Common,
    },
}

fn levels_override(levels: &[usize]) -> String {
    let list: Vec<String> = levels.iter().map(ToString::to_string).collect();
    format!("mesh.levels=[{}]", list.join(", "))
}

fn run(cli: Cli) -> bangbang_core::Result<String> {
    let (common, mut extra) = match &cli.command {
        Command::Simulate { common } | Command::Adjoint { common } | Command::Optimize { common } => {
            (common, Vec::new())
        }
        Command::Converge { common, levels, reference } => {
            let mut extra = Vec::new();
            if let Some(l) = levels {
                extra.push(levels_override(l));
            }
            if let Some(r) = reference {
                let name = match r {
                    Reference::PaperExact => "paper-exact",
                    Reference::Continuous => "continuous",
                };
                extra.push(format!("solver.reference=\"{name}\""));
            }
            (common, extra)
        }
        Command::Gradcheck { common, levels, eps } => {
            let mut extra = Vec::new();
            if let Some(l) = levels {
                extra.push(levels_override(l));
            }
            if let Some(e) = eps {
                extra.push(format!("solver.eps={e:e}"));
            }
            (common, extra)
        }
    };
    if let Some(seed) = common.seed {
        extra.push(format!("optimizer.seed={seed}"));
    }
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    let cfg = RunConfig::load(common.config.as_deref(), &overrides)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output.directory.clone());

    let output = match cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, &out)?,
        Command::Adjoint { .. } => commands::adjoint(&cfg, &out)?,
        Command::Converge { .. } => commands::converge(&cfg, &out)?,
        Command::Gradcheck { .. } => commands::gradcheck(&cfg, &out)?,
        Command::Optimize { .. } => commands::optimize(&cfg, &out)?,
    };
    let mut text = output.summary;
    for f in &output.files {
        text.push_str(&format!("\nwrote {}", f.display()));
    }
    Ok(text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
