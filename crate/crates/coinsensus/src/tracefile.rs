//! JSONL trace files: writing, and replaying a file from its header.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use coinsensus_core::coin::CoinConfig;
use coinsensus_core::sim::sched::SchedulerKind;
use coinsensus_core::sim::{self, trace, RunConfig, RunResult};
use coinsensus_core::{ProcessId, ProcessSet, SystemParams};
use serde_json::Value;

use crate::config::{parse_algorithm, parse_byz, parse_split, parse_view_selection};

/// Writes the trace of `result`, which must have been run with
/// `record_trace` set.
pub fn write(path: &Path, result: &RunResult) -> Result<()> {
    let lines = result
        .trace
        .as_ref()
        .ok_or_else(|| anyhow!("run was not recorded"))?;
    let file =
        std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    for line in lines {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn field<'a>(v: &'a Value, k: &str) -> Result<&'a Value> {
    v.get(k).ok_or_else(|| anyhow!("header lacks \"{k}\""))
}

fn num(v: &Value, k: &str) -> Result<u64> {
    field(v, k)?
        .as_u64()
        .ok_or_else(|| anyhow!("header \"{k}\" is not a number"))
}

fn text<'a>(v: &'a Value, k: &str) -> Result<&'a str> {
    field(v, k)?
        .as_str()
        .ok_or_else(|| anyhow!("header \"{k}\" is not a string"))
}

fn nums(v: &Value, k: &str) -> Result<Vec<u64>> {
    field(v, k)?
        .as_array()
        .ok_or_else(|| anyhow!("header \"{k}\" is not a list"))?
        .iter()
        .map(|x| {
            x.as_u64()
                .ok_or_else(|| anyhow!("header \"{k}\" holds a non-number"))
        })
        .collect()
}

fn pids(v: &Value, k: &str) -> Result<ProcessSet> {
    Ok(nums(v, k)?
        .into_iter()
        .map(|p| ProcessId(p as u16))
        .collect())
}

/// Rebuilds the configuration recorded in a trace header line.
pub fn config_from_header(line: &str) -> Result<RunConfig> {
    let h: Value = serde_json::from_str(line).context("header is not JSON")?;
    if text(&h, "kind")? != "start" || num(&h, "seq")? != 0 {
        bail!("first line is not a start record");
    }
    let n = num(&h, "n")? as usize;
    let params = SystemParams::new(n, num(&h, "t")? as usize)?.with_faulty(pids(&h, "faulty")?)?;
    let proposals = nums(&h, "proposals")?
        .into_iter()
        .map(|b| coinsensus_core::BinValue::from_bit(b == 1))
        .collect();
    let scheduler = match text(&h, "scheduler")? {
        "fifo" => SchedulerKind::Fifo,
        "random" => SchedulerKind::Random,
        "lifo" => SchedulerKind::Lifo,
        "delay-target" => SchedulerKind::DelayTarget {
            targets: pids(&h, "targets")?,
        },
        other => bail!("unknown scheduler {other}"),
    };
    let mut coin = match text(&h, "coin")? {
        "weak" => CoinConfig::weak(num(&h, "d")? as u32),
        "strong" => CoinConfig::strong(),
        other => bail!("unknown coin {other}"),
    };
    coin.split = parse_split(text(&h, "split")?)?;
    let mut byzantine = BTreeMap::new();
    for b in field(&h, "byzantine")?
        .as_array()
        .ok_or_else(|| anyhow!("header \"byzantine\" is not a list"))?
    {
        let strategy = text(b, "strategy")?;
        if strategy == "scripted" {
            bail!("scripted runs cannot be replayed from a trace alone");
        }
        byzantine.insert(ProcessId(num(b, "pid")? as u16), parse_byz(strategy, None)?);
    }
    let cfg = RunConfig {
        params,
        algorithm: parse_algorithm(text(&h, "algorithm")?)?,
        coin,
        proposals,
        scheduler,
        delay_cap: Some(num(&h, "delay_cap")?),
        byzantine,
        seed: num(&h, "seed")?,
        max_rounds: num(&h, "max_rounds")? as u32,
        view_selection: parse_view_selection(text(&h, "view_selection")?)?,
        record_trace: true,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verification {
    pub lines: usize,
    pub file_digest: u64,
    pub replay_digest: u64,
    /// First differing line, 0-based, if the texts differ.
    pub first_difference: Option<usize>,
}

impl Verification {
    pub fn matches(&self) -> bool {
        self.first_difference.is_none() && self.file_digest == self.replay_digest
    }
}

/// Replays the run described by the file's header and compares the result
/// line by line.
pub fn verify(path: &Path) -> Result<Verification> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let lines: Vec<&str> = text.lines().collect();
    let header = lines
        .first()
        .ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let cfg = config_from_header(header)?;
    let replay = sim::run(&cfg)?;
    let again = replay.trace.unwrap_or_default();
    let first_difference = (0..lines.len().max(again.len()))
        .find(|i| lines.get(*i).copied() != again.get(*i).map(String::as_str));
    Ok(Verification {
        lines: lines.len(),
        file_digest: trace::digest_lines(lines.iter().copied()),
        replay_digest: replay.trace_digest,
        first_difference,
    })
}
