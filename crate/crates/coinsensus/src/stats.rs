//! Statistics over decision-round histograms.
//!
//! Histograms are indexed by round: `hist[r]` counts runs that decided in
//! round `r`, and `hist[0]` counts runs that never decided.

use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn decided(hist: &[u64]) -> u64 {
    hist.iter().skip(1).sum()
}

/// Mean decision round over runs that decided.
pub fn mean_round(hist: &[u64]) -> Option<f64> {
    let total = decided(hist);
    if total == 0 {
        return None;
    }
    let sum: f64 = hist
        .iter()
        .enumerate()
        .skip(1)
        .map(|(r, c)| r as f64 * *c as f64)
        .sum();
    Some(sum / total as f64)
}

/// Nearest-rank percentile of the decision round, `q` in (0, 1].
pub fn percentile(hist: &[u64], q: f64) -> Option<u32> {
    let total = decided(hist);
    if total == 0 {
        return None;
    }
    let rank = ((q * total as f64).ceil() as u64).clamp(1, total);
    let mut seen = 0;
    for (r, c) in hist.iter().enumerate().skip(1) {
        seen += c;
        if seen >= rank {
            return Some(r as u32);
        }
    }
    None
}

pub fn max_round(hist: &[u64]) -> Option<u32> {
    hist.iter()
        .enumerate()
        .skip(1)
        .rev()
        .find(|(_, c)| **c > 0)
        .map(|(r, _)| r as u32)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Goodness of fit of the decided rounds against `P(R = r) = p (1-p)^(r-1)`.
///
/// Bins are merged left to right until each expects at least 5 runs; the
/// last bin takes the whole upper tail.
pub fn chi_square_geometric(hist: &[u64], p: f64) -> Option<ChiSquare> {
    let total = decided(hist) as f64;
    if total == 0.0 {
        return None;
    }
    let expected_at = |r: usize| total * p * (1.0 - p).powi(r as i32 - 1);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut r = 1;
    // Stop opening new bins once the remaining tail expects fewer than 5.
    while total * (1.0 - p).powi(r as i32 - 1) >= 10.0 {
        obs += hist.get(r).copied().unwrap_or(0) as f64;
        exp += expected_at(r);
        if exp >= 5.0 {
            bins.push((obs, exp));
            (obs, exp) = (0.0, 0.0);
        }
        r += 1;
    }
    let tail_obs: f64 = hist.iter().skip(r).map(|c| *c as f64).sum();
    let tail_exp = total * (1.0 - p).powi(r as i32 - 1);
    bins.push((obs + tail_obs, exp + tail_exp));
    if bins.len() < 2 {
        return None;
    }
    let statistic = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).ok()?;
    Some(ChiSquare {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    })
}

/// Fraction of all runs still undecided after round `r`. Runs that never
/// decided count as surviving forever.
pub fn survival(hist: &[u64], r: u32) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let done: u64 = hist
        .iter()
        .enumerate()
        .skip(1)
        .take(r as usize)
        .map(|(_, c)| c)
        .sum();
    (total - done) as f64 / total as f64
}

/// Per-round decay factor of the survival curve: `exp(b)` for the least
/// squares line `ln S(r) = a + b r` over `r` in `lo..=hi` with `S(r) > 0`.
pub fn survival_decay(hist: &[u64], lo: u32, hi: u32) -> Option<f64> {
    let points: Vec<(f64, f64)> = (lo..=hi)
        .map(|r| (r as f64, survival(hist, r)))
        .filter(|(_, s)| *s > 0.0)
        .map(|(r, s)| (r, s.ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Some((sxy / sxx).exp())
}
