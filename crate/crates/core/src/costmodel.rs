//! Closed-form visual-token estimates and measured usage accounting.
//!
//! The dense baseline costs `round(T_v * r_s) * t_f` tokens: every sampled
//! frame is tiled and encoded. The agent loop is bounded by
//! `N * per_step`. [`TokenLedger`] records what a run actually spent.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{RequestKind, Role, Usage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("zero denominator: cannot compare against a zero-token estimate")]
    ZeroDenominator,
    #[error("estimate overflows 64-bit token count")]
    Overflow,
}

/// Tokens for one frame split into `tiles` tiles plus a fixed base cost.
pub fn tokens_per_frame(tiles: u64, per_tile: u64, base: u64) -> u64 {
    tiles * per_tile + base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CostInputs {
    Dense { duration_s: f64, sample_fps: f64, tokens_per_frame: u64, frames: u64 },
    Agent { steps: u64, per_step: u64 },
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub label: String,
    pub total_tokens: u64,
    /// True when `total_tokens` is a ceiling rather than an expected value.
    pub upper_bound: bool,
    pub inputs: CostInputs,
}

impl CostEstimate {
    /// A bare total, e.g. a measured figure to compare against.
    pub fn measured(label: impl Into<String>, total_tokens: u64) -> Self {
        CostEstimate { label: label.into(), total_tokens, upper_bound: false, inputs: CostInputs::Measured }
    }
}

/// Dense-sampling cost. The frame count `duration_s * sample_fps` is rounded
/// half-up before multiplying, so the total is an exact integer.
pub fn estimate_dvd(duration_s: f64, sample_fps: f64, tokens_per_frame: u64) -> Result<CostEstimate, CostError> {
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(CostError::NonPositive("duration_s"));
    }
    if sample_fps.is_nan() || sample_fps <= 0.0 {
        return Err(CostError::NonPositive("sample_fps"));
    }
    if tokens_per_frame == 0 {
        return Err(CostError::NonPositive("tokens_per_frame"));
    }
    let exact = duration_s * sample_fps;
    if !exact.is_finite() || exact >= u64::MAX as f64 {
        return Err(CostError::Overflow);
    }
    let frames = (exact + 0.5).floor() as u64;
    let total_tokens = frames.checked_mul(tokens_per_frame).ok_or(CostError::Overflow)?;
    Ok(CostEstimate {
        label: "dense".into(),
        total_tokens,
        upper_bound: false,
        inputs: CostInputs::Dense { duration_s, sample_fps, tokens_per_frame, frames },
    })
}

/// Agent-loop ceiling: `steps * per_step`.
pub fn estimate_arm(steps: u64, per_step: u64) -> Result<CostEstimate, CostError> {
    if steps == 0 {
        return Err(CostError::NonPositive("steps"));
    }
    Ok(CostEstimate {
        label: "agent".into(),
        total_tokens: steps.checked_mul(per_step).ok_or(CostError::Overflow)?,
        upper_bound: true,
        inputs: CostInputs::Agent { steps, per_step },
    })
}

/// How many times cheaper the smaller estimate is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub larger: u64,
    pub smaller: u64,
    /// `larger / smaller` rounded half-up to an integer.
    pub k: u64,
    /// `larger / smaller` rounded half-up to hundredths.
    pub ratio_hundredths: u64,
}

impl Comparison {
    /// `1/k`.
    pub fn fraction(&self) -> String {
        format!("1/{}", self.k)
    }

    /// Raw ratio with two decimals, e.g. `49.73`.
    pub fn raw_ratio(&self) -> String {
        format!("{}.{:02}", self.ratio_hundredths / 100, self.ratio_hundredths % 100)
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (raw {})", self.fraction(), self.raw_ratio())
    }
}

/// Compares two totals using integer arithmetic only.
pub fn compare_totals(a: u64, b: u64) -> Result<Comparison, CostError> {
    let (larger, smaller) = if a >= b { (a, b) } else { (b, a) };
    if smaller == 0 {
        return Err(CostError::ZeroDenominator);
    }
    let (l, s) = (larger as u128, smaller as u128);
    let k = (2 * l + s) / (2 * s);
    let hundredths = (200 * l + s) / (2 * s);
    Ok(Comparison {
        larger,
        smaller,
        k: u64::try_from(k).map_err(|_| CostError::Overflow)?,
        ratio_hundredths: u64::try_from(hundredths).map_err(|_| CostError::Overflow)?,
    })
}

pub fn compare(a: &CostEstimate, b: &CostEstimate) -> Result<Comparison, CostError> {
    compare_totals(a.total_tokens, b.total_tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub step: u32,
    pub role: Role,
    pub kind: RequestKind,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub image_count: u32,
}

/// Append-only per-call usage for one run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLedger {
    entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, step: u32, role: Role, kind: RequestKind, usage: Usage, image_count: u32) {
        self.entries.push(LedgerEntry {
            step,
            role,
            kind,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            image_count,
        });
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub per_role: BTreeMap<Role, u64>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub grand_total: u64,
}

pub fn tally(ledger: &TokenLedger) -> Tally {
    let mut t = Tally::default();
    for e in ledger.entries() {
        let sum = e.prompt_tokens + e.completion_tokens;
        *t.per_role.entry(e.role).or_default() += sum;
        t.prompt_tokens += e.prompt_tokens;
        t.completion_tokens += e.completion_tokens;
        t.grand_total += sum;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_frame() {
        assert_eq!(tokens_per_frame(6, 170, 85), 1105);
        assert_eq!(tokens_per_frame(0, 170, 85), 85);
        assert_eq!(tokens_per_frame(4, 170, 85), 765);
    }

    #[test]
    fn dense_estimates() {
        assert_eq!(estimate_dvd(1800.0, 2.0, 1105).unwrap().total_tokens, 3_978_000);
        assert_eq!(estimate_dvd(0.5, 2.0, 1105).unwrap().total_tokens, 1105);
        assert_eq!(estimate_dvd(3600.0, 2.0, 1105).unwrap().total_tokens, 7_956_000);
        assert_eq!(estimate_dvd(0.25, 2.0, 10).unwrap().total_tokens, 10);
        assert!(estimate_dvd(0.0, 2.0, 1105).is_err());
        assert!(estimate_dvd(10.0, -1.0, 1105).is_err());
        assert!(estimate_dvd(f64::NAN, 1.0, 1).is_err());
    }

    #[test]
    fn agent_estimates() {
        let e = estimate_arm(10, 8000).unwrap();
        assert_eq!(e.total_tokens, 80_000);
        assert!(e.upper_bound);
        assert_eq!(estimate_arm(1, 8000).unwrap().total_tokens, 8000);
        assert_eq!(estimate_arm(3, 8000).unwrap().total_tokens, 24_000);
        assert!(estimate_arm(0, 8000).is_err());
    }

    #[test]
    fn comparisons() {
        let c = compare_totals(3_978_000, 80_000).unwrap();
        assert_eq!((c.fraction().as_str(), c.raw_ratio().as_str()), ("1/50", "49.73"));
        let c = compare_totals(64_210_000, 1_890_000).unwrap();
        assert_eq!((c.fraction().as_str(), c.raw_ratio().as_str()), ("1/34", "33.97"));
        assert_eq!(compare_totals(7, 7).unwrap().fraction(), "1/1");
        assert_eq!(compare_totals(80_000, 3_978_000).unwrap().k, 50);
        assert_eq!(compare_totals(5, 0), Err(CostError::ZeroDenominator));
    }

    #[test]
    fn tallies() {
        let mut l = TokenLedger::new();
        assert_eq!(tally(&l).grand_total, 0);
        l.record(1, Role::Controller, RequestKind::Controller, Usage::new(5000, 200), 5);
        l.record(1, Role::Understanding, RequestKind::SceneCaption, Usage::new(6000, 300), 5);
        let t = tally(&l);
        assert_eq!(t.grand_total, 11_500);
        assert_eq!(t.per_role[&Role::Controller], 5200);
        assert_eq!(t.per_role[&Role::Understanding], 6300);
    }
}
