//! `mfmc`: run the built-in microfluidic circuit scenarios.

mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfmc::scenario::{self, parse_bits, GridConfig, Scenario, ScenarioConfig, ValidateConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use mfmc::Error;

#[derive(Parser)]
#[command(name = "mfmc", version, about = "Microfluidic molecular-communication circuit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON scenario configuration (defaults to the published parameters).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV files, manifest and plots.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG line chart per signal.
    #[arg(long)]
    plot: bool,
    /// Seed for randomized validation cases.
    #[arg(long)]
    seed: Option<u64>,
    /// Root under which `<scenario>/` output directories are created.
    #[arg(long, env = "MFMC_OUT_DIR", default_value = "mfmc-runs", hide = true)]
    out_root: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// AND gate truth table, ThL window and dilution check.
    AndGate {
        #[command(flatten)]
        common: Common,
        /// Injected ThL level.
        #[arg(long)]
        thl: Option<f64>,
    },
    /// QCSK transmitter (2:4 decoder) for one or all bit pairs.
    QcskTx {
        #[command(flatten)]
        common: Common,
        /// Bit pair b2b1, e.g. 10.
        #[arg(long)]
        bits: Option<String>,
    },
    /// QCSK receiver for received levels 0..3.
    QcskRx {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: Option<usize>,
    },
    /// Transmitter followed by receiver.
    Link {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bits: Option<String>,
    },
    /// Analytical pipeline against the finite-difference solver.
    Validate {
        /// cd-channel, reaction or kernel.
        case: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Names of the built-in scenarios.
    List,
    /// Print the default configuration of a scenario as JSON.
    DumpDefaults {
        scenario: String,
        /// Validation case, for `validate`.
        #[arg(long)]
        case: Option<String>,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric { .. } | Error::Convergence { .. } | Error::Alignment { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn load(name: &str, common: &Common) -> Result<ScenarioConfig, Failure> {
    let mut config = match &common.config {
        None => scenario::dump_defaults(name)?,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let config = parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            if config.scenario.name() != name {
                return Err(Failure::Config(format!(
                    "{}: configuration is for scenario {:?}, not {name:?}",
                    path.display(),
                    config.scenario.name()
                )));
            }
            config
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Config file layout for one scenario. Parsing into the concrete
/// parameter type (rather than through the tagged enum) keeps serde_json's
/// line and column pointing at the offending key.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Typed<P> {
    #[allow(dead_code)]
    scenario: String,
    params: P,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<String>,
}

#[derive(Deserialize)]
struct Head {
    scenario: String,
}

fn parse_config(text: &str) -> Result<ScenarioConfig, String> {
    fn typed<P: DeserializeOwned>(text: &str, wrap: fn(P) -> Scenario) -> Result<ScenarioConfig, String> {
        let t: Typed<P> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        Ok(ScenarioConfig { scenario: wrap(t.params), grid: t.grid, seed: t.seed, output_dir: t.output_dir })
    }
    let head: Head = serde_json::from_str(text).map_err(|e| e.to_string())?;
    match head.scenario.as_str() {
        "and-gate" => typed(text, Scenario::AndGate),
        "qcsk-tx" => typed(text, Scenario::QcskTx),
        "qcsk-rx" => typed(text, Scenario::QcskRx),
        "link" => typed(text, Scenario::Link),
        "validate" => typed(text, Scenario::Validate),
        other => Err(format!("unknown scenario {other:?}; expected one of {:?}", scenario::SCENARIOS)),
    }
}

fn out_dir(config: &ScenarioConfig, common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| common.out_root.join(config.scenario.name()))
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    let (config, common) = match cli.command {
        Command::List => {
            let mut out = std::io::stdout().lock();
            for name in scenario::list_scenarios() {
                if writeln!(out, "{name}").is_err() {
                    break;
                }
            }
            return Ok(true);
        }
        Command::DumpDefaults { scenario: name, case } => {
            let mut config = scenario::dump_defaults(&name)?;
            if let Some(case) = case {
                let Scenario::Validate(v) = &mut config.scenario else {
                    return Err(Failure::Config("--case applies to the validate scenario only".into()));
                };
                *v = ValidateConfig::default_for(&case)?;
            }
            let json = serde_json::to_string_pretty(&config).expect("configuration serializes");
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{json}");
            return Ok(true);
        }
        Command::AndGate { common, thl } => {
            let mut c = load("and-gate", &common)?;
            if let (Some(x), Scenario::AndGate(g)) = (thl, &mut c.scenario) {
                g.thl0 = x;
            }
            (c, common)
        }
        Command::QcskTx { common, bits } => {
            let mut c = load("qcsk-tx", &common)?;
            if let (Some(b), Scenario::QcskTx(t)) = (bits, &mut c.scenario) {
                parse_bits(&b)?;
                t.bits = vec![b];
            }
            (c, common)
        }
        Command::QcskRx { common, level } => {
            let mut c = load("qcsk-rx", &common)?;
            if let (Some(l), Scenario::QcskRx(r)) = (level, &mut c.scenario) {
                r.levels = vec![l];
            }
            (c, common)
        }
        Command::Link { common, bits } => {
            let mut c = load("link", &common)?;
            if let (Some(b), Scenario::Link(l)) = (bits, &mut c.scenario) {
                parse_bits(&b)?;
                l.bits = vec![b];
            }
            (c, common)
        }
        Command::Validate { case, common } => {
            let mut c = load("validate", &common)?;
            if let (Some(case), Scenario::Validate(v)) = (case, &mut c.scenario) {
                if common.config.is_none() {
                    *v = ValidateConfig::default_for(&case)?;
                } else if v.name() != case {
                    return Err(Failure::Config(format!("configuration holds validation case {:?}, not {case:?}", v.name())));
                }
            }
            (c, common)
        }
    };
    let dir = out_dir(&config, &common);
    let report = scenario::run(&config)?;
    output::write_run(&dir, &config, &report, common.plot).map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
    let _ = output::print_table(&mut std::io::stdout().lock(), &dir, &report);
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        // Ran to completion but at least one check failed.
        Ok(false) => ExitCode::from(3),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("numeric failure: {m}");
            ExitCode::from(2)
        }
    }
}

