//! Range / IQR / median summaries per signal and phase.
//!
//! Quantiles interpolate linearly between order statistics at position
//! `(n - 1) * p`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("phase '{phase}' of signal '{signal}' has no samples")]
    EmptyPhase { signal: String, phase: Phase },
    #[error("signal '{0}' contains a non-finite sample")]
    NonFinite(String),
    #[error("series has {series} samples but the phase mask has {mask}")]
    LengthMismatch { series: usize, mask: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Normal,
    Attack,
    Mitigation,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Normal, Phase::Attack, Phase::Mitigation];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Normal => "normal",
            Phase::Attack => "attack",
            Phase::Mitigation => "mitigation",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Invariant: `min <= q1 <= median <= q3 <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// `p`-quantile of `values`, reordering it in place.
fn quantile_select(values: &mut [f64], p: f64) -> f64 {
    let pos = (values.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    let (_, &mut a, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
    if frac == 0.0 {
        return a;
    }
    let b = upper.iter().copied().min_by(f64::total_cmp).expect("frac > 0 implies lo < n - 1");
    a + frac * (b - a)
}

/// Summary of a non-empty finite sample.
pub fn summarize(signal: &str, phase: Phase, samples: &[f64]) -> Result<Summary, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyPhase { signal: signal.to_string(), phase });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite(signal.to_string()));
    }
    let mut v = samples.to_vec();
    let min = v.iter().copied().min_by(f64::total_cmp).unwrap_or(f64::NAN);
    let max = v.iter().copied().max_by(f64::total_cmp).unwrap_or(f64::NAN);
    let q1 = quantile_select(&mut v, 0.25);
    let median = quantile_select(&mut v, 0.5);
    let q3 = quantile_select(&mut v, 0.75);
    Ok(Summary { n: samples.len(), min, q1, median, q3, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub signal: String,
    pub phase: Phase,
    pub summary: Summary,
}

/// Per-signal, per-phase summaries in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub rows: Vec<StatsRow>,
}

impl RunStats {
    pub fn get(&self, signal: &str, phase: Phase) -> Option<&Summary> {
        self.rows.iter().find(|r| r.signal == signal && r.phase == phase).map(|r| &r.summary)
    }
}

/// Summarize the samples of `series` selected by `mask` for each phase.
pub fn compute_stats(signal: &str, series: &[f64], phases: &[(Phase, &[bool])]) -> Result<RunStats, StatsError> {
    let mut out = RunStats::default();
    for &(phase, mask) in phases {
        if mask.len() != series.len() {
            return Err(StatsError::LengthMismatch { series: series.len(), mask: mask.len() });
        }
        let picked: Vec<f64> = series.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| *x).collect();
        let summary = summarize(signal, phase, &picked)?;
        out.rows.push(StatsRow { signal: signal.to_string(), phase, summary });
    }
    Ok(out)
}

/// Order used for deterministic output of rows.
pub fn row_order(a: &StatsRow, b: &StatsRow) -> Ordering {
    a.signal.cmp(&b.signal).then(a.phase.cmp(&b.phase))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[f64]) -> Summary {
        summarize("x", Phase::Normal, v).unwrap()
    }

    #[test]
    fn small_examples() {
        let a = s(&[3.0, 1.0, 2.0]);
        assert_eq!((a.median, a.min, a.max), (2.0, 1.0, 3.0));
        let b = s(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((b.q1, b.median, b.q3), (1.75, 2.5, 3.25));
        let c = s(&[4.5; 7]);
        assert_eq!((c.min, c.q1, c.median, c.q3, c.max), (4.5, 4.5, 4.5, 4.5, 4.5));
        let one = s(&[9.0]);
        assert_eq!((one.q1, one.q3), (9.0, 9.0));
    }

    #[test]
    fn empty_phase_is_an_error() {
        let err = compute_stats("p_pv", &[1.0, 2.0], &[(Phase::Attack, &[false, false])]).unwrap_err();
        assert_eq!(err, StatsError::EmptyPhase { signal: "p_pv".into(), phase: Phase::Attack });
        assert!(matches!(compute_stats("p", &[1.0], &[(Phase::Normal, &[true, true])]), Err(StatsError::LengthMismatch { .. })));
        assert!(matches!(summarize("p", Phase::Normal, &[1.0, f64::NAN]), Err(StatsError::NonFinite(_))));
    }

    #[test]
    fn masks_select_samples() {
        let st = compute_stats("v", &[1.0, 10.0, 2.0, 20.0], &[(Phase::Normal, &[true, false, true, false]), (Phase::Attack, &[false, true, false, true])]).unwrap();
        assert_eq!(st.get("v", Phase::Normal).unwrap().median, 1.5);
        assert_eq!(st.get("v", Phase::Attack).unwrap().max, 20.0);
        assert!(st.get("v", Phase::Mitigation).is_none());
    }
}
