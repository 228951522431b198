use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use coinsensus::check::{self, CheckSpec, Injector, Target};
use coinsensus::config::{parse_bits, parse_view_selection, ConfigError, RunArgs};
use coinsensus::report::{hex, RunReport};
use coinsensus::sweep::{self, SweepSpec};
use coinsensus::tracefile;
use coinsensus_core::sim;

#[derive(Parser)]
#[command(
    name = "coinsensus",
    version,
    about = "Simulate and check randomized binary Byzantine consensus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one run and print its result as JSON.
    Run {
        #[command(flatten)]
        args: RunArgs,
        /// JSON config file; its fields override flags.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the JSONL trace.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Many seeded runs per grid cell, summarized.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        /// First seed; defaults to --seed, then 0.
        #[arg(long)]
        seed_start: Option<u64>,
        /// Grid axis `field=v1,v2,...`; repeatable.
        #[arg(long)]
        vary: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explore every interleaving of one broadcast instance at n = 4, t = 1.
    Check {
        #[arg(long, value_enum)]
        target: CheckTarget,
        /// Inputs of p0..p2; for `sbc` all of them broadcast.
        #[arg(long)]
        inputs: Option<String>,
        /// `sbc`: values of the processes that broadcast.
        #[arg(long)]
        inputs_true: Option<String>,
        /// `sbc`: values of the processes that only listen.
        #[arg(long)]
        inputs_false: Option<String>,
        #[arg(long, value_enum, default_value_t = CheckByz::Equivocate)]
        byz: CheckByz,
        /// Most messages p3 may inject; defaults to 6 (bv, sbc) or 2 (sbv).
        #[arg(long)]
        budget: Option<usize>,
        /// union | first-quorum
        #[arg(long, default_value = "union")]
        view_selection: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a run's JSONL trace, or replay one and compare.
    Trace {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required_unless_present = "verify", conflicts_with = "verify")]
        out: Option<PathBuf>,
        /// Replay this trace file from its header.
        #[arg(long)]
        verify: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckTarget {
    Bv,
    Sbv,
    Sbc,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckByz {
    Equivocate,
    Silent,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn merged(args: RunArgs, config: Option<&Path>) -> Result<RunArgs, ConfigError> {
    match config {
        Some(path) => Ok(args.overridden_by(&RunArgs::from_file(path)?)),
        None => Ok(args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// `Ok(false)` means the command ran but found a failure.
fn dispatch(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run {
            args,
            config,
            out,
            trace_out,
        } => {
            let mut cfg = merged(args, config.as_deref())?.build()?;
            cfg.record_trace = trace_out.is_some();
            let result = sim::run(&cfg).map_err(ConfigError::from)?;
            if let Some(path) = &trace_out {
                tracefile::write(path, &result)?;
            }
            let report = RunReport::new(&cfg, &result);
            emit(out.as_deref(), &json(&report)?)?;
            Ok(report.ok())
        }
        Cmd::Sweep {
            args,
            config,
            runs,
            seed_start,
            vary,
            format,
            out,
        } => {
            let base = merged(args, config.as_deref())?;
            let spec = SweepSpec {
                seed_start: seed_start.or(base.seed).unwrap_or(0),
                base,
                runs,
                vary: vary
                    .iter()
                    .map(|v| sweep::parse_vary(v))
                    .collect::<Result<_, _>>()?,
            };
            let cells = sweep::sweep(&spec)?;
            let text = match format {
                Format::Json => json(&cells)?,
                Format::Csv => sweep::to_csv(&cells),
            };
            emit(out.as_deref(), &text)?;
            Ok(cells.iter().all(|c| c.violations == 0 && c.timeouts == 0))
        }
        Cmd::Check {
            target,
            inputs,
            inputs_true,
            inputs_false,
            byz,
            budget,
            view_selection,
            out,
        } => {
            let target = match target {
                CheckTarget::Bv => Target::Bv,
                CheckTarget::Sbv => Target::Sbv,
                CheckTarget::Sbc => Target::Sbc,
            };
            let mut list = Vec::new();
            if let Some(s) = &inputs {
                list.extend(parse_bits(s)?.into_iter().map(|v| (v, true)));
            }
            if let Some(s) = &inputs_true {
                list.extend(parse_bits(s)?.into_iter().map(|v| (v, true)));
            }
            if let Some(s) = &inputs_false {
                if target != Target::Sbc {
                    return Err(
                        ConfigError("--inputs-false applies to --target sbc only".into()).into(),
                    );
                }
                list.extend(parse_bits(s)?.into_iter().map(|v| (v, false)));
            }
            let spec = CheckSpec {
                target,
                inputs: list,
                injector: match byz {
                    CheckByz::Equivocate => Injector::Equivocate,
                    CheckByz::Silent => Injector::Silent,
                },
                budget: budget.unwrap_or(if target == Target::Sbv { 2 } else { 6 }),
                selection: parse_view_selection(&view_selection)?,
            };
            spec.validate().map_err(|e| ConfigError(e.to_string()))?;
            let report = check::check(&spec)?;
            emit(out.as_deref(), &json(&report)?)?;
            Ok(report.passed())
        }
        Cmd::Trace {
            args,
            config,
            out,
            verify,
        } => {
            if let Some(path) = verify {
                let v = tracefile::verify(&path)?;
                println!(
                    "{} lines, file digest {}, replay digest {}: {}",
                    v.lines,
                    hex(v.file_digest),
                    hex(v.replay_digest),
                    match v.first_difference {
                        None if v.matches() => "identical".to_owned(),
                        None => "digest differs".to_owned(),
                        Some(i) => format!("first difference at line {}", i + 1),
                    }
                );
                return Ok(v.matches());
            }
            let Some(out) = out else {
                bail!("--out is required")
            };
            let mut cfg = merged(args, config.as_deref())?.build()?;
            cfg.record_trace = true;
            let result = sim::run(&cfg).map_err(ConfigError::from)?;
            tracefile::write(&out, &result)?;
            println!("{} {}", hex(result.trace_digest), out.display());
            Ok(result.safety_ok && !result.timed_out)
        }
    }
}
