use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use iodine_cli::config::{load, ConfigError};
use iodine_cli::run::{parse_scenarios, run};

const CONFIG_ERROR: u8 = 1;
const RUNTIME_ERROR: u8 = 2;
const CHECK_FAILURE: u8 = 3;

/// Simulate and analyse an iodine-stabilised laser and its comb measurement.
#[derive(Parser, Debug)]
#[command(name = "iodine", version)]
struct Args {
    /// Comma-separated scenario names, or `all`.
    #[arg(long, default_value = "all")]
    scenario: String,
    /// TOML configuration file. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "IODINE_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override one key, e.g. `--set cell.pressure=0.33`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Exit with status 3 if any reference check fails.
    #[arg(long)]
    check: bool,
    /// Report warnings and the effective configuration, then exit.
    #[arg(long)]
    validate: bool,
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("config error: {e}");
    ExitCode::from(CONFIG_ERROR)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let loaded = match load(args.config.as_deref(), &args.overrides) {
        Ok(l) => l,
        Err(e) => return config_error(e),
    };
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    if args.validate {
        println!("{} warning(s)", loaded.warnings.len());
        print!("{}", loaded.config.to_toml());
        return ExitCode::SUCCESS;
    }
    let scenarios = match parse_scenarios(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let mut runtime_failed = false;
    let mut checks_failed = false;
    for r in run(&scenarios, &loaded.config, args.seed, &args.out, args.jobs) {
        match r {
            Ok(rec) => {
                for c in &rec.checks {
                    let mark = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{mark} {}: {} = {} (expected {})",
                        rec.scenario, c.name, c.value, c.expected
                    );
                }
                checks_failed |= !rec.passed();
                println!("wrote {}", rec.dir.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                runtime_failed = true;
            }
        }
    }
    if runtime_failed {
        ExitCode::from(RUNTIME_ERROR)
    } else if args.check && checks_failed {
        ExitCode::from(CHECK_FAILURE)
    } else {
        ExitCode::SUCCESS
    }
}
