//! `evcs` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use evcs_core::mitigate::{Method, Strategy};

use crate::commands::{self, AgentChoice, Prepared};
use crate::config::{attack_preset, ScenarioConfig};
use crate::{write_atomic, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "evcs", version, about = "EV charging station attack and mitigation studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve plant parameters and write a config with them pinned.
    Calibrate {
        /// Config to start from; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Attack preset: none, type1-diff, type1-sim, type2-diff, type2-sim.
        #[arg(long)]
        attack: Option<String>,
        /// Strategy applied to all three channels.
        #[arg(long)]
        strategy: Option<Method>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train agents and write bundles plus episode-return traces.
    Train {
        /// pv, bes, ev, or all (curriculum).
        #[arg(long)]
        agent: AgentChoice,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One scenario: time series, stats and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// All listed strategies on the configured attack.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', default_value = "legacy_only,brute_force,clone,td3")]
        strategies: Vec<Method>,
    },
    /// Recompute stats from a written time series.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Unmitigated series supplying the attack rows.
        #[arg(long)]
        companion: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), HarnessError> {
    let say = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(|e| HarnessError::Io(e.to_string()));
    match cmd {
        Command::Calibrate { config, attack, strategy, out: path } => {
            let mut cfg = match config {
                Some(p) => ScenarioConfig::load(&p)?,
                None => ScenarioConfig::default(),
            };
            if let Some(a) = attack {
                cfg.attack = attack_preset(&a)?;
            }
            if let Some(m) = strategy {
                cfg.strategy = Strategy::uniform(m);
            }
            cfg.validate()?;
            let solved = commands::calibrate(&cfg)?;
            commands::write_config(&solved, &path)?;
            say(out, format!("wrote {}", path.display()))
        }
        Command::Train { agent, config, seed } => {
            let p = Prepared::load(&config)?;
            let seed = seed.unwrap_or(p.config.seed);
            for r in commands::train(&p, agent, seed)? {
                say(out, format!("{} episodes={} divergences={} final_avg={} bundle={}", r.agent, r.episodes, r.divergences, r.final_moving_avg, r.dir.display()))?;
            }
            Ok(())
        }
        Command::Run { config } => {
            let p = Prepared::load(&config)?;
            for f in commands::run(&p)?.files {
                say(out, format!("wrote {}", f.display()))?;
            }
            Ok(())
        }
        Command::Compare { config, strategies } => {
            let p = Prepared::load(&config)?;
            for f in commands::compare(&p, &strategies)?.files {
                say(out, format!("wrote {}", f.display()))?;
            }
            Ok(())
        }
        Command::Stats { input, companion, output } => {
            let bytes = commands::stats_from_files(&input, companion.as_deref())?;
            match output {
                Some(path) => {
                    write_atomic(&path, &bytes)?;
                    say(out, format!("wrote {}", path.display()))
                }
                None => out.write_all(&bytes).map_err(|e| HarnessError::Io(e.to_string())),
            }
        }
    }
}

/// Parse `args` (program name first) and execute. Failures print one
/// `error[<kind>]: <message>` line to stderr.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), e.to_string().replace('\n', " "));
            1
        }
    }
}
