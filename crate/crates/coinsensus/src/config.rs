//! Run configuration from flags and JSON files.
//!
//! [`RunArgs`] is shared by the command line and config files: every field
//! is optional, a file's fields win over flags, and [`RunArgs::build`] turns
//! the result into a validated [`RunConfig`].

use std::collections::BTreeMap;
use std::path::Path;

use clap::Args;
use coinsensus_core::coin::{CoinConfig, SplitStrategy};
use coinsensus_core::sbv::ViewSelection;
use coinsensus_core::sim::byzantine::{ByzStrategy, ScriptEntry};
use coinsensus_core::sim::sched::SchedulerKind;
use coinsensus_core::sim::{Algorithm, RunConfig, DEFAULT_MAX_ROUNDS};
use coinsensus_core::{
    BinValue, EstValue, InstanceTag, Payload, Phase, ProcessId, ProcessSet, Round, SystemParams,
    ValueSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// A bad configuration. The CLI maps this to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl From<coinsensus_core::Error> for ConfigError {
    fn from(e: coinsensus_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Args, Deserialize, Clone, Debug, Default, PartialEq, Eq)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// weak | weak-opt | strong
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Defaults to the largest t with 3t < n.
    #[arg(long)]
    pub t: Option<usize>,
    /// Comma list of 0/1 with `<v>x<k>` repeats (`1,1,0`, `1x7`, `0x2,1x2`),
    /// or `split` (alternating, the default) or `random`.
    #[arg(long)]
    pub proposals: Option<String>,
    /// Faulty process indices; defaults to the last t.
    #[arg(long, value_delimiter = ',')]
    pub faulty: Option<Vec<u16>>,
    /// crash | mute | equivocate | mirror | scripted
    #[arg(long)]
    pub byz: Option<String>,
    /// fifo | random | lifo | delay-target
    #[arg(long)]
    pub sched: Option<String>,
    /// Processes whose messages delay-target holds back; defaults to p0.
    #[arg(long, value_delimiter = ',')]
    pub delay_targets: Option<Vec<u16>>,
    /// Fairness cap in deliveries; defaults to 64 n^2.
    #[arg(long)]
    pub delay_cap: Option<u64>,
    /// weak | strong; defaults to strong for the strong algorithm.
    #[arg(long)]
    pub coin: Option<String>,
    /// Weak coin parameter d (>= 2).
    #[arg(long)]
    pub coin_d: Option<u32>,
    /// estimate-opposing | fair-bit | half-half
    #[arg(long)]
    pub split_strategy: Option<String>,
    #[arg(long, env = "COINSENSUS_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_rounds: Option<u32>,
    /// union | first-quorum
    #[arg(long)]
    pub view_selection: Option<String>,
    /// Messages for the `scripted` strategy; config files only.
    #[arg(skip)]
    pub script: Option<Vec<ScriptLine>>,
}

/// One scripted injection as written in a config file.
#[derive(Deserialize, Clone, Debug, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ScriptLine {
    pub at_tick: u64,
    /// Recipients; empty or absent means every correct process.
    #[serde(default)]
    pub to: Vec<u16>,
    /// BVAL | AUX | SVAL | AUXSET | AUXBIN
    pub kind: String,
    pub round: u32,
    /// Phase of BVAL/AUX stage tags.
    #[serde(default)]
    pub phase: u8,
    /// `0`, `1`, `"bot"`, or a list of those for AUXSET.
    pub value: serde_json::Value,
}

impl RunArgs {
    pub fn from_file(path: &Path) -> Result<RunArgs, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    /// `self` with every field set in `other` replaced.
    pub fn overridden_by(&self, other: &RunArgs) -> RunArgs {
        macro_rules! pick {
            ($($f:ident),*) => { RunArgs { $($f: other.$f.clone().or_else(|| self.$f.clone()),)* } };
        }
        pick!(
            algo,
            n,
            t,
            proposals,
            faulty,
            byz,
            sched,
            delay_targets,
            delay_cap,
            coin,
            coin_d,
            split_strategy,
            seed,
            max_rounds,
            view_selection,
            script
        )
    }

    pub fn build(&self) -> Result<RunConfig, ConfigError> {
        let algorithm = parse_algorithm(self.algo.as_deref().unwrap_or("weak"))?;
        let n = self.n.unwrap_or(4);
        let t = self.t.unwrap_or(n.saturating_sub(1) / 3);
        let params = SystemParams::new(n, t)?;
        let faulty: ProcessSet = match &self.faulty {
            Some(list) => {
                let mut set = ProcessSet::EMPTY;
                for p in list {
                    if usize::from(*p) >= n {
                        return err(format!("faulty process p{p} out of range for n = {n}"));
                    }
                    set.insert(ProcessId(*p));
                }
                set
            }
            None => (n - t..n).map(ProcessId::from).collect(),
        };
        let params = params.with_faulty(faulty)?;
        let seed = self.seed.unwrap_or(0);
        let proposals = parse_proposals(self.proposals.as_deref().unwrap_or("split"), n, seed)?;
        let strategy = parse_byz(
            self.byz.as_deref().unwrap_or("crash"),
            self.script.as_deref(),
        )?;
        let scheduler = parse_sched(
            self.sched.as_deref().unwrap_or("fifo"),
            self.delay_targets.as_deref(),
            n,
        )?;
        let coin = self.coin_config(algorithm)?;
        let view_selection =
            parse_view_selection(self.view_selection.as_deref().unwrap_or("union"))?;
        let cfg = RunConfig {
            params,
            algorithm,
            coin,
            proposals,
            scheduler,
            delay_cap: self.delay_cap,
            byzantine: faulty
                .iter()
                .map(|p| (p, strategy.clone()))
                .collect::<BTreeMap<_, _>>(),
            seed,
            max_rounds: self.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS),
            view_selection,
            record_trace: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn coin_config(&self, algorithm: Algorithm) -> Result<CoinConfig, ConfigError> {
        let kind = self
            .coin
            .as_deref()
            .unwrap_or(if algorithm == Algorithm::Strong {
                "strong"
            } else {
                "weak"
            });
        let mut coin = match kind {
            "weak" => CoinConfig::weak(self.coin_d.unwrap_or(2)),
            "strong" => {
                if self.coin_d.is_some() {
                    return err("--coin-d applies to the weak coin only");
                }
                CoinConfig::strong()
            }
            other => return err(format!("unknown coin '{other}' (weak | strong)")),
        };
        if let Some(s) = &self.split_strategy {
            coin.split = parse_split(s)?;
        }
        Ok(coin)
    }
}

pub fn parse_algorithm(s: &str) -> Result<Algorithm, ConfigError> {
    Algorithm::ALL
        .into_iter()
        .find(|a| a.name() == s)
        .map_or_else(
            || {
                err(format!(
                    "unknown algorithm '{s}' (weak | weak-opt | strong)"
                ))
            },
            Ok,
        )
}

pub fn parse_bit(s: &str) -> Result<BinValue, ConfigError> {
    match s.trim() {
        "0" => Ok(BinValue::Zero),
        "1" => Ok(BinValue::One),
        other => err(format!("'{other}' is not a binary value")),
    }
}

/// Parses a comma list of bits with `<v>x<k>` repeats.
pub fn parse_bits(s: &str) -> Result<Vec<BinValue>, ConfigError> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        match item.split_once('x') {
            Some((v, k)) => {
                let v = parse_bit(v)?;
                let k: usize = k
                    .parse()
                    .map_err(|_| ConfigError(format!("bad repeat count in '{item}'")))?;
                out.extend(std::iter::repeat(v).take(k));
            }
            None => out.push(parse_bit(item)?),
        }
    }
    Ok(out)
}

pub fn parse_proposals(s: &str, n: usize, seed: u64) -> Result<Vec<BinValue>, ConfigError> {
    let values = match s {
        "split" => (0..n).map(|i| BinValue::from_bit(i % 2 == 1)).collect(),
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7072_6f70);
            (0..n).map(|_| BinValue::from_bit(rng.random())).collect()
        }
        list => parse_bits(list)?,
    };
    if values.len() != n {
        return err(format!("{} proposals given for n = {n}", values.len()));
    }
    Ok(values)
}

pub fn parse_byz(s: &str, script: Option<&[ScriptLine]>) -> Result<ByzStrategy, ConfigError> {
    Ok(match s {
        "crash" => ByzStrategy::Crash,
        "mute" => ByzStrategy::Mute,
        "equivocate" => ByzStrategy::Equivocate,
        "mirror" => ByzStrategy::Mirror,
        "scripted" => {
            let Some(lines) = script else {
                return err("the scripted strategy needs a \"script\" list in a config file");
            };
            ByzStrategy::Scripted(lines.iter().map(script_entry).collect::<Result<_, _>>()?)
        }
        other => return err(format!("unknown Byzantine strategy '{other}'")),
    })
}

fn json_est(v: &serde_json::Value) -> Result<EstValue, ConfigError> {
    match v {
        serde_json::Value::Number(x) if x.as_u64() == Some(0) => Ok(EstValue::Zero),
        serde_json::Value::Number(x) if x.as_u64() == Some(1) => Ok(EstValue::One),
        serde_json::Value::String(s) if s == "bot" => Ok(EstValue::Bot),
        other => err(format!("bad script value {other}")),
    }
}

fn script_entry(line: &ScriptLine) -> Result<ScriptEntry, ConfigError> {
    let round = Round(line.round);
    let phase = if line.phase == 0 {
        Phase::Zero
    } else {
        Phase::One
    };
    let stage = InstanceTag::Stage { round, phase };
    let payload = match line.kind.as_str() {
        "BVAL" => Payload::Bval {
            tag: stage,
            value: json_est(&line.value)?,
        },
        "AUX" => Payload::Aux {
            tag: stage,
            value: json_est(&line.value)?,
        },
        "SVAL" => Payload::Sval {
            tag: InstanceTag::Est { round },
            value: json_est(&line.value)?,
        },
        "AUXSET" => {
            let serde_json::Value::Array(items) = &line.value else {
                return err("AUXSET needs a list value");
            };
            let set: ValueSet = items.iter().map(json_est).collect::<Result<_, _>>()?;
            Payload::AuxSet { round, set }
        }
        "AUXBIN" => {
            let value = json_est(&line.value)?
                .as_bin()
                .ok_or_else(|| ConfigError("AUXBIN needs 0 or 1".into()))?;
            Payload::AuxBin { round, value }
        }
        other => return err(format!("unknown message kind '{other}'")),
    };
    Ok(ScriptEntry {
        at_tick: line.at_tick,
        to: line.to.iter().map(|p| ProcessId(*p)).collect(),
        payload,
    })
}

pub fn parse_sched(
    s: &str,
    targets: Option<&[u16]>,
    n: usize,
) -> Result<SchedulerKind, ConfigError> {
    Ok(match s {
        "fifo" => SchedulerKind::Fifo,
        "random" => SchedulerKind::Random,
        "lifo" => SchedulerKind::Lifo,
        "delay-target" => {
            let list = targets.unwrap_or(&[0]);
            if let Some(p) = list.iter().find(|p| usize::from(**p) >= n) {
                return err(format!("delay target p{p} out of range for n = {n}"));
            }
            SchedulerKind::DelayTarget {
                targets: list.iter().map(|p| ProcessId(*p)).collect(),
            }
        }
        other => return err(format!("unknown scheduler '{other}'")),
    })
}

pub fn parse_split(s: &str) -> Result<SplitStrategy, ConfigError> {
    [
        SplitStrategy::EstimateOpposing,
        SplitStrategy::FairBit,
        SplitStrategy::HalfHalf,
    ]
    .into_iter()
    .find(|x| x.name() == s)
    .map_or_else(|| err(format!("unknown split strategy '{s}'")), Ok)
}

pub fn parse_view_selection(s: &str) -> Result<ViewSelection, ConfigError> {
    [ViewSelection::Union, ViewSelection::FirstQuorum]
        .into_iter()
        .find(|x| x.name() == s)
        .map_or_else(|| err(format!("unknown view selection '{s}'")), Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposal_forms() {
        use BinValue::{One as I, Zero as O};
        assert_eq!(parse_proposals("1,1,0,1", 4, 0).unwrap(), vec![I, I, O, I]);
        assert_eq!(parse_proposals("1x4", 4, 0).unwrap(), vec![I; 4]);
        assert_eq!(parse_proposals("0x2,1x2", 4, 0).unwrap(), vec![O, O, I, I]);
        assert_eq!(parse_proposals("split", 4, 0).unwrap(), vec![O, I, O, I]);
        assert_eq!(
            parse_proposals("random", 7, 3).unwrap(),
            parse_proposals("random", 7, 3).unwrap()
        );
        assert!(parse_proposals("1x3", 4, 0).is_err());
        assert!(parse_proposals("2,1,1,1", 4, 0).is_err());
    }

    #[test]
    fn defaults_build() {
        let cfg = RunArgs::default().build().unwrap();
        assert_eq!((cfg.params.n(), cfg.params.t()), (4, 1));
        assert_eq!(cfg.algorithm, Algorithm::Weak);
        assert!(cfg.params.is_faulty(ProcessId(3)));
    }

    #[test]
    fn bad_resilience_mentions_the_bound() {
        let args = RunArgs {
            n: Some(3),
            t: Some(1),
            ..RunArgs::default()
        };
        assert!(args
            .build()
            .unwrap_err()
            .to_string()
            .contains("t < n/3 violated"));
    }

    #[test]
    fn strong_rejects_weak_coin() {
        let args = RunArgs {
            algo: Some("strong".into()),
            coin_d: Some(2),
            ..RunArgs::default()
        };
        assert!(args.build().is_err());
        let args = RunArgs {
            algo: Some("strong".into()),
            coin: Some("weak".into()),
            ..RunArgs::default()
        };
        assert!(args.build().is_err());
    }

    #[test]
    fn file_fields_override_flags() {
        let flags = RunArgs {
            n: Some(7),
            seed: Some(1),
            ..RunArgs::default()
        };
        let file: RunArgs = serde_json::from_str(r#"{"seed": 9, "algo": "strong"}"#).unwrap();
        let merged = flags.overridden_by(&file);
        assert_eq!(merged.n, Some(7));
        assert_eq!(merged.seed, Some(9));
        assert_eq!(merged.algo.as_deref(), Some("strong"));
        assert!(serde_json::from_str::<RunArgs>(r#"{"sede": 9}"#).is_err());
    }

    #[test]
    fn script_lines_parse() {
        let file: RunArgs = serde_json::from_str(
            r#"{"byz": "scripted", "script": [
                {"at_tick": 0, "kind": "BVAL", "round": 1, "value": 0},
                {"at_tick": 2, "to": [1], "kind": "AUXSET", "round": 1, "value": [0, "bot"]}
            ]}"#,
        )
        .unwrap();
        let cfg = file.build().unwrap();
        let ByzStrategy::Scripted(entries) = &cfg.byzantine[&ProcessId(3)] else {
            panic!()
        };
        assert_eq!(entries.len(), 2);
    }
}
