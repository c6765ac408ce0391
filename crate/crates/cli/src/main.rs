use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use geoflock::config::{preset_json, read_config_file, ConfigFile};
use geoflock::oracle::{oracle_phi, validate_kernel};
use geoflock::{runner, Error, SimConfig, PRESET_NAMES};

const EXIT_ERROR: u8 = 1;
const EXIT_CLAIMS: u8 = 2;
const EXIT_NON_FINITE: u8 = 3;

/// Velocity-alignment simulations on flat quotient manifolds.
#[derive(Parser)]
#[command(name = "geoflock", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the shipped presets, or print one as JSON.
    Presets {
        #[arg(long)]
        preset: Option<String>,
    },
    /// Integrate a scenario and write series.csv, manifest.json and
    /// optionally particles.jsonl.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
        /// Exit with status 2 if an applicable limit claim is not met.
        #[arg(long)]
        assert_claims: bool,
        #[arg(long, default_value_t = 1)]
        lanes: usize,
    },
    /// Report whether the kernel's orbit sums converge on the manifold.
    ValidateKernel {
        #[command(flatten)]
        source: Source,
    },
    /// Brute-force orbit sum over translations in [-window, window].
    OraclePhi {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        window: i64,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Configuration file (a run manifest also works).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> anyhow::Result<ConfigFile> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                read_config_file(path).with_context(|| format!("reading {}", path.display()))
            }
            (None, Some(name)) => geoflock::preset(name).ok_or_else(|| unknown_preset(name)),
            (None, None) => Err(anyhow!("either --config or --preset is required")),
        }
    }
}

fn unknown_preset(name: &str) -> anyhow::Error {
    anyhow!(
        "unknown preset `{name}`; available: {}",
        PRESET_NAMES.join(", ")
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            let non_finite = matches!(err.downcast_ref::<Error>(), Some(Error::NonFinite { .. }));
            ExitCode::from(if non_finite {
                EXIT_NON_FINITE
            } else {
                EXIT_ERROR
            })
        }
    }
}

fn execute(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Presets { preset: None } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Presets { preset: Some(name) } => {
            let text = preset_json(&name).ok_or_else(|| unknown_preset(&name))?;
            print!("{text}");
            Ok(0)
        }
        Command::Run {
            source,
            out,
            assert_claims,
            lanes,
        } => {
            let config = SimConfig::try_from(source.load()?)?;
            let manifest = runner::run(&config, &out, lanes)?;
            let last = &manifest.final_record;
            println!(
                "t = {}  energy = {:.6e}  velocity_diameter = {:.6e}  max_abs_v2 = {:.6e}",
                last.time, last.energy, last.velocity_diameter, last.max_abs_second_component
            );
            for claim in &manifest.claims.claims {
                println!(
                    "{:<20} final {:.3e} (threshold {:.1e}) slope {}  {:?}",
                    claim.claim.to_string(),
                    claim.final_value,
                    claim.threshold,
                    claim
                        .decay_slope
                        .map_or("n/a".into(), |s| format!("{s:.4}")),
                    claim.status
                );
            }
            println!("{}", manifest.claims.self_interaction);
            println!("wrote {}", out.display());
            Ok(if assert_claims && !manifest.claims.all_met() {
                EXIT_CLAIMS
            } else {
                0
            })
        }
        Command::ValidateKernel { source } => {
            let file = source.load()?;
            let report = validate_kernel(&file.kernel()?, &file.manifold_spec()?);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.summable { 0 } else { EXIT_ERROR })
        }
        Command::OraclePhi {
            source,
            x,
            y,
            window,
        } => {
            let file = source.load()?;
            let value = oracle_phi(&file.manifold_spec()?, &file.kernel()?, &x, &y, window)?;
            println!("{value:.17e}");
            Ok(0)
        }
    }
}
