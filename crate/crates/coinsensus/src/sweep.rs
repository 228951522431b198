//! Monte-Carlo sweeps over a grid of configurations.

use std::fmt::Write as _;

use coinsensus_core::sim::{self, trace, RunResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConfigError, RunArgs};
use crate::report::hex;

/// Fields a sweep may vary, by their flag names.
pub const VARY_FIELDS: [&str; 11] = [
    "algo",
    "n",
    "proposals",
    "byz",
    "sched",
    "coin",
    "coin-d",
    "split-strategy",
    "view-selection",
    "max-rounds",
    "delay-cap",
];

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: RunArgs,
    pub runs: u64,
    pub seed_start: u64,
    /// Cartesian grid; the first field varies slowest.
    pub vary: Vec<(String, Vec<String>)>,
}

/// Parses `field=v1,v2,...`.
pub fn parse_vary(s: &str) -> Result<(String, Vec<String>), ConfigError> {
    let (field, values) = s
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("--vary expects field=v1,v2,..., got '{s}'")))?;
    if !VARY_FIELDS.contains(&field) {
        return Err(ConfigError(format!(
            "cannot vary '{field}' (one of {})",
            VARY_FIELDS.join(", ")
        )));
    }
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_owned())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(ConfigError(format!("--vary {field} has no values")));
    }
    Ok((field.to_owned(), values))
}

fn set_field(args: &mut RunArgs, field: &str, value: &str) -> Result<(), ConfigError> {
    let num = |v: &str| {
        v.parse::<u64>()
            .map_err(|_| ConfigError(format!("{field}: '{v}' is not a number")))
    };
    match field {
        "algo" => args.algo = Some(value.into()),
        "n" => {
            let n = num(value)? as usize;
            args.n = Some(n);
            // t and the faulty set follow n unless pinned by the base.
            args.t = None;
            args.faulty = None;
        }
        "proposals" => args.proposals = Some(value.into()),
        "byz" => args.byz = Some(value.into()),
        "sched" => args.sched = Some(value.into()),
        "coin" => args.coin = Some(value.into()),
        "coin-d" => args.coin_d = Some(num(value)? as u32),
        "split-strategy" => args.split_strategy = Some(value.into()),
        "view-selection" => args.view_selection = Some(value.into()),
        "max-rounds" => args.max_rounds = Some(num(value)? as u32),
        "delay-cap" => args.delay_cap = Some(num(value)?),
        other => return Err(ConfigError(format!("cannot vary '{other}'"))),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellStats {
    /// `field=value` pairs joined by `;`, or `base` for an empty grid.
    pub cell_id: String,
    pub runs: u64,
    pub mean_round: Option<f64>,
    pub p50: Option<u32>,
    pub p95: Option<u32>,
    pub max: Option<u32>,
    /// `histogram[r]`: runs decided in round `r`; `histogram[0]`: undecided.
    pub histogram: Vec<u64>,
    /// Violations of any kind, summed over runs.
    pub violations: u64,
    /// Agreement and validity violations only.
    pub consensus_failures: u64,
    pub timeouts: u64,
    /// Per round index: least and most broadcasts by one non-faulty process.
    pub bcast_min: Vec<u32>,
    pub bcast_max: Vec<u32>,
    pub coin_leaks: u64,
    pub max_delay: u64,
    /// FNV-1a over the per-run digests in seed order.
    pub digest: String,
}

impl CellStats {
    fn new(cell_id: String) -> Self {
        CellStats {
            cell_id,
            runs: 0,
            mean_round: None,
            p50: None,
            p95: None,
            max: None,
            histogram: vec![0],
            violations: 0,
            consensus_failures: 0,
            timeouts: 0,
            bcast_min: Vec::new(),
            bcast_max: Vec::new(),
            coin_leaks: 0,
            max_delay: 0,
            digest: String::new(),
        }
    }
}

/// What a sweep keeps from one run.
struct Summary {
    round: Option<u32>,
    violations: u64,
    consensus_failures: u64,
    timed_out: bool,
    /// Per round index: min and max over non-faulty processes.
    bcast: Vec<(u32, u32)>,
    coin_leaks: u64,
    max_delay: u64,
    digest: u64,
}

fn summarize(r: &RunResult) -> Summary {
    let mut bcast: Vec<(u32, u32)> = Vec::new();
    for rounds in r.broadcasts.iter().filter(|b| !b.is_empty()) {
        for (i, c) in rounds.iter().enumerate() {
            match bcast.get_mut(i) {
                Some((lo, hi)) => {
                    *lo = (*lo).min(*c);
                    *hi = (*hi).max(*c);
                }
                None => bcast.push((*c, *c)),
            }
        }
    }
    Summary {
        round: r.decision_round(),
        violations: r.violations.len() as u64,
        consensus_failures: r.consensus_failures() as u64,
        timed_out: r.timed_out,
        bcast,
        coin_leaks: r.coin_leaks,
        max_delay: r.max_delay,
        digest: r.trace_digest,
    }
}

/// Every cell of the grid as `(cell id, args)`.
pub fn cells(spec: &SweepSpec) -> Result<Vec<(String, RunArgs)>, ConfigError> {
    let mut out = vec![(String::new(), spec.base.clone())];
    for (field, values) in &spec.vary {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for (id, args) in &out {
            for v in values {
                let mut a = args.clone();
                set_field(&mut a, field, v)?;
                let id = if id.is_empty() {
                    format!("{field}={v}")
                } else {
                    format!("{id};{field}={v}")
                };
                next.push((id, a));
            }
        }
        out = next;
    }
    if spec.vary.is_empty() {
        out[0].0 = "base".into();
    }
    Ok(out)
}

/// Runs every cell. The first configuration error aborts the sweep.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<CellStats>, ConfigError> {
    if spec.runs == 0 {
        return Err(ConfigError("a sweep needs at least one run".into()));
    }
    let cells = cells(spec)?;
    // Validate every cell before spending time on any of them.
    for (_, args) in &cells {
        RunArgs {
            seed: Some(spec.seed_start),
            ..args.clone()
        }
        .build()?;
    }
    cells
        .into_iter()
        .map(|(id, args)| run_cell(id, &args, spec.runs, spec.seed_start))
        .collect()
}

pub fn run_cell(
    id: String,
    args: &RunArgs,
    runs: u64,
    seed_start: u64,
) -> Result<CellStats, ConfigError> {
    let summaries: Vec<Summary> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let cfg = RunArgs {
                seed: Some(seed_start.wrapping_add(i)),
                ..args.clone()
            }
            .build()?;
            Ok(summarize(&sim::run(&cfg)?))
        })
        .collect::<Result<_, ConfigError>>()?;
    let mut cell = CellStats::new(id);
    let mut digest = trace::FNV_OFFSET;
    for s in &summaries {
        cell.runs += 1;
        let slot = s.round.unwrap_or(0) as usize;
        if cell.histogram.len() <= slot {
            cell.histogram.resize(slot + 1, 0);
        }
        cell.histogram[slot] += 1;
        cell.violations += s.violations;
        cell.consensus_failures += s.consensus_failures;
        cell.timeouts += u64::from(s.timed_out);
        for (i, (lo, hi)) in s.bcast.iter().enumerate() {
            if i < cell.bcast_min.len() {
                cell.bcast_min[i] = cell.bcast_min[i].min(*lo);
                cell.bcast_max[i] = cell.bcast_max[i].max(*hi);
            } else {
                cell.bcast_min.push(*lo);
                cell.bcast_max.push(*hi);
            }
        }
        cell.coin_leaks += s.coin_leaks;
        cell.max_delay = cell.max_delay.max(s.max_delay);
        digest = trace::fnv1a(digest, &s.digest.to_le_bytes());
    }
    cell.mean_round = crate::stats::mean_round(&cell.histogram);
    cell.p50 = crate::stats::percentile(&cell.histogram, 0.5);
    cell.p95 = crate::stats::percentile(&cell.histogram, 0.95);
    cell.max = crate::stats::max_round(&cell.histogram);
    cell.digest = hex(digest);
    Ok(cell)
}

pub const CSV_HEADER: &str =
    "cell-id,runs,mean_round,p50,p95,max,violations,timeouts,bcast_min,bcast_max";

/// One row per cell. Per-round broadcast bounds are `;`-separated.
pub fn to_csv(cells: &[CellStats]) -> String {
    fn opt<T: ToString>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    fn list(v: &[u32]) -> String {
        v.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
    }
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "\"{}\",{},{},{},{},{},{},{},{},{}",
            c.cell_id,
            c.runs,
            opt(c.mean_round.map(|m| format!("{m:.4}"))),
            opt(c.p50),
            opt(c.p95),
            opt(c.max),
            c.violations,
            c.timeouts,
            list(&c.bcast_min),
            list(&c.bcast_max),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(runs: u64, vary: &[&str]) -> SweepSpec {
        SweepSpec {
            base: RunArgs::default(),
            runs,
            seed_start: 1,
            vary: vary.iter().map(|v| parse_vary(v).unwrap()).collect(),
        }
    }

    #[test]
    fn grid_order_and_ids() {
        let ids: Vec<String> = cells(&spec(1, &["algo=weak,strong", "n=4,7"]))
            .unwrap()
            .into_iter()
            .map(|c| c.0)
            .collect();
        assert_eq!(
            ids,
            [
                "algo=weak;n=4",
                "algo=weak;n=7",
                "algo=strong;n=4",
                "algo=strong;n=7"
            ]
        );
        assert_eq!(cells(&spec(1, &[])).unwrap()[0].0, "base");
        assert!(parse_vary("seed=1,2").is_err());
        assert!(parse_vary("algo").is_err());
    }

    #[test]
    fn histogram_mass_equals_runs() {
        let cells = sweep(&spec(50, &["algo=weak,weak-opt,strong"])).unwrap();
        for c in &cells {
            assert_eq!(c.histogram.iter().sum::<u64>(), 50);
            assert_eq!(c.violations, 0);
            assert_eq!(c.bcast_min.len(), c.bcast_max.len());
        }
    }

    #[test]
    fn first_config_error_wins() {
        let err = sweep(&spec(5, &["coin-d=2,1"])).unwrap_err();
        assert!(err.to_string().contains("d >= 2"), "{err}");
        assert!(sweep(&spec(0, &[])).is_err());
    }

    #[test]
    fn csv_shape() {
        let csv = to_csv(&sweep(&spec(10, &[])).unwrap());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next().unwrap().split(',').count(), 10);
        assert!(lines.next().is_none());
    }
}
