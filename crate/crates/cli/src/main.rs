use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use vif_ancova_cli::commands::{self, RegimeChoice};
use vif_ancova_cli::{emit, CliError, Outcome, ScenarioConfig};

#[derive(Parser)]
#[command(name = "vif-ancova", version, about = "Covariate adjustment under different conditioning regimes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the nine cells of the regime-by-estimator summary table.
    Table1(Common),
    /// VIF, R^2 and both estimated variances for a data file.
    Vif {
        #[command(flatten)]
        common: Common,
        /// CSV with columns y, z, x_1..x_K.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run one conditioning regime or a variance decomposition.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        regime: Option<String>,
        /// Require exact enumeration (conditional-eps only).
        #[arg(long)]
        enumerate: bool,
        /// candidates:N, draw, or file:PATH.
        #[arg(long)]
        freeze_from: Option<String>,
    },
    /// Draw one rerandomized assignment and report its balance.
    Rerand(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file; the bundled default is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Text,
}

fn load(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut config = ScenarioConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        config.output.dir = Some(out.clone());
    }
    if let Some(f) = common.format {
        config.output.format = match f {
            OutputFormat::Csv => "csv",
            OutputFormat::Text => "text",
        }
        .into();
    }
    Ok(config)
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let (config, outcome) = match cli.command {
        Command::Table1(common) => {
            let config = load(&common)?;
            let outcome = commands::table1(&config)?;
            (config, outcome)
        }
        Command::Vif { common, data } => {
            let mut config = load(&common)?;
            if data.is_some() {
                config.vif.data = data;
            }
            let outcome = commands::vif_report(&config)?;
            (config, outcome)
        }
        Command::Simulate {
            common,
            regime,
            enumerate,
            freeze_from,
        } => {
            let mut config = load(&common)?;
            if regime.is_some() {
                config.simulate.regime = regime;
            }
            config.simulate.enumerate |= enumerate;
            if freeze_from.is_some() {
                config.simulate.freeze_from = freeze_from;
            }
            let choice: RegimeChoice = commands::resolve_simulate(&mut config)?;
            let outcome = commands::simulate(&config, choice)?;
            (config, outcome)
        }
        Command::Rerand(common) => {
            let config = load(&common)?;
            let outcome = commands::rerand(&config)?;
            (config, outcome)
        }
    };
    config.format()?;
    emit(&config, &outcome)?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Table1(_) => "table1",
        Command::Vif { .. } => "vif",
        Command::Simulate { .. } => "simulate",
        Command::Rerand(_) => "rerand",
    };
    let code = match execute(cli) {
        Ok(outcome) => {
            for line in &outcome.notes {
                eprintln!("{line}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::Usage(_)) {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
