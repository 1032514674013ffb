//! Per-dataset training quotas and their realization as index schedules.
//!
//! - balanced: every dataset gets the same share of a fixed total.
//! - weighted: shares fall linearly with rank, the best-ranked dataset
//!   getting four times the share of the worst.
//! - concat: every dataset keeps its native length.
//!
//! Integer quotas use largest-remainder apportionment over exact integer
//! weights, so balanced and weighted plans always sum to the requested total.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("no datasets to plan")]
    Empty,
    #[error("total {total} is smaller than the {count} datasets")]
    TotalTooSmall { total: u64, count: usize },
    #[error("dataset '{0}' must have a native length of at least 1")]
    InvalidLength(String),
    #[error("dataset '{0}' must have a rank of at least 1")]
    InvalidRank(String),
    #[error("rank {0} is used by more than one dataset")]
    DuplicateRank(u32),
    #[error("dataset name '{0}' appears more than once")]
    DuplicateName(String),
    #[error("unknown strategy '{0}' (expected balanced, weighted or concat)")]
    UnknownStrategy(String),
    #[error("the {0} strategy needs a total length")]
    MissingTotal(Strategy),
    #[error("malformed dataset spec JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub native_length: u64,
    /// 1-based position in the benchmark ranking.
    pub rank: u32,
}

impl DatasetSpec {
    pub fn new(name: impl Into<String>, native_length: u64, rank: u32) -> Self {
        Self {
            name: name.into(),
            native_length,
            rank,
        }
    }
}

pub fn parse_specs(text: &str) -> Result<Vec<DatasetSpec>, SamplingError> {
    let specs: Vec<DatasetSpec> = serde_json::from_str(text)?;
    validate_specs(&specs)?;
    Ok(specs)
}

pub fn load_specs(path: &Path) -> Result<Vec<DatasetSpec>, SamplingError> {
    parse_specs(&std::fs::read_to_string(path)?)
}

fn validate_specs(specs: &[DatasetSpec]) -> Result<(), SamplingError> {
    let mut names = HashSet::new();
    let mut ranks = HashSet::new();
    for s in specs {
        if s.native_length == 0 {
            return Err(SamplingError::InvalidLength(s.name.clone()));
        }
        if s.rank == 0 {
            return Err(SamplingError::InvalidRank(s.name.clone()));
        }
        if !names.insert(s.name.as_str()) {
            return Err(SamplingError::DuplicateName(s.name.clone()));
        }
        if !ranks.insert(s.rank) {
            return Err(SamplingError::DuplicateRank(s.rank));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Balanced,
    Weighted,
    Concat,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Balanced => "balanced",
            Strategy::Weighted => "weighted",
            Strategy::Concat => "concat",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balanced" => Ok(Strategy::Balanced),
            "weighted" => Ok(Strategy::Weighted),
            "concat" => Ok(Strategy::Concat),
            _ => Err(SamplingError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Ok,
    /// A weighted plan over a single dataset has no 4:1 ratio to honor and
    /// was computed as balanced instead.
    FellBackToBalanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub name: String,
    pub rank: u32,
    pub native_length: u64,
    pub target_length: u64,
}

/// Target instance counts per dataset, in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub strategy: Strategy,
    pub status: PlanStatus,
    pub total: u64,
    pub entries: Vec<PlanEntry>,
}

impl SamplingPlan {
    pub fn targets(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.target_length).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }
}

/// Largest-remainder (Hamilton) apportionment of `total` in proportion to
/// integer `weights`. Equal remainders favour the earlier entry.
pub fn apportion(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut quotas = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let exact = total as u128 * w as u128;
        quotas.push((exact / sum) as u64);
        remainders.push((exact % sum, i));
    }
    let assigned: u64 = quotas.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take((total - assigned) as usize) {
        quotas[i] += 1;
    }
    quotas
}

fn ranked(specs: &[DatasetSpec]) -> Result<Vec<DatasetSpec>, SamplingError> {
    validate_specs(specs)?;
    let mut sorted = specs.to_vec();
    sorted.sort_by_key(|s| s.rank);
    Ok(sorted)
}

fn build(strategy: Strategy, status: PlanStatus, specs: Vec<DatasetSpec>, targets: Vec<u64>) -> SamplingPlan {
    let entries: Vec<PlanEntry> = specs
        .into_iter()
        .zip(targets)
        .map(|(s, t)| PlanEntry {
            name: s.name,
            rank: s.rank,
            native_length: s.native_length,
            target_length: t,
        })
        .collect();
    SamplingPlan {
        strategy,
        status,
        total: entries.iter().map(|e| e.target_length).sum(),
        entries,
    }
}

fn check_total(total: u64, count: usize) -> Result<(), SamplingError> {
    if count == 0 {
        return Err(SamplingError::Empty);
    }
    if total < count as u64 {
        return Err(SamplingError::TotalTooSmall { total, count });
    }
    Ok(())
}

/// Equal quotas (up to ±1) summing exactly to `total`.
pub fn plan_balanced(specs: &[DatasetSpec], total: u64) -> Result<SamplingPlan, SamplingError> {
    check_total(total, specs.len())?;
    let specs = ranked(specs)?;
    let targets = apportion(total, &vec![1; specs.len()]);
    Ok(build(Strategy::Balanced, PlanStatus::Ok, specs, targets))
}

/// Integer weights of an arithmetic sequence from 4 down to 1 over `n` rank
/// positions, scaled by `n - 1`: position `i` gets `4(n-1) - 3i`.
///
/// Positions are rank order, not rank values, so gaps in the ranks do not
/// change the sequence.
pub fn arithmetic_weights(n: usize) -> Vec<u64> {
    let n = n as u64;
    (0..n).map(|i| 4 * (n - 1) - 3 * i).collect()
}

/// Quotas falling linearly with rank from 4× to 1×, summing exactly to `total`.
pub fn plan_weighted(specs: &[DatasetSpec], total: u64) -> Result<SamplingPlan, SamplingError> {
    check_total(total, specs.len())?;
    if specs.len() == 1 {
        let mut plan = plan_balanced(specs, total)?;
        plan.strategy = Strategy::Weighted;
        plan.status = PlanStatus::FellBackToBalanced;
        return Ok(plan);
    }
    let specs = ranked(specs)?;
    let targets = apportion(total, &arithmetic_weights(specs.len()));
    Ok(build(Strategy::Weighted, PlanStatus::Ok, specs, targets))
}

/// Every dataset at its native length.
pub fn plan_concat(specs: &[DatasetSpec]) -> Result<SamplingPlan, SamplingError> {
    let specs = ranked(specs)?;
    let targets = specs.iter().map(|s| s.native_length).collect();
    Ok(build(Strategy::Concat, PlanStatus::Ok, specs, targets))
}

/// Dispatches on `strategy`. Balanced and weighted plans need a total.
pub fn plan(strategy: Strategy, specs: &[DatasetSpec], total: Option<u64>) -> Result<SamplingPlan, SamplingError> {
    match (strategy, total) {
        (Strategy::Concat, _) => plan_concat(specs),
        (Strategy::Balanced, Some(t)) => plan_balanced(specs, t),
        (Strategy::Weighted, Some(t)) => plan_weighted(specs, t),
        (s, None) => Err(SamplingError::MissingTotal(s)),
    }
}

/// Concrete instance indices for one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchedule {
    pub name: String,
    pub indices: Vec<u64>,
}

/// Draws `target` indices from `0..native`.
///
/// Whole shuffled passes over the dataset come first, then a uniform subsample
/// without replacement for the remainder, so every index appears either
/// `⌊target/native⌋` or `⌊target/native⌋ + 1` times.
pub fn realize_indices(native: u64, target: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut out = Vec::with_capacity(target as usize);
    if native == 0 {
        return out;
    }
    for _ in 0..target / native {
        let mut pass: Vec<u64> = (0..native).collect();
        pass.shuffle(rng);
        out.extend(pass);
    }
    let rem = (target % native) as usize;
    if rem > 0 {
        out.extend(index::sample(rng, native as usize, rem).into_iter().map(|i| i as u64));
    }
    out
}

/// Realizes every quota of `plan` with a generator seeded from `seed`;
/// the same plan and seed always give the same schedule.
pub fn realize_schedule(plan: &SamplingPlan, seed: u64) -> Vec<DatasetSchedule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    plan.entries
        .iter()
        .map(|e| DatasetSchedule {
            name: e.name.clone(),
            indices: realize_indices(e.native_length, e.target_length, &mut rng),
        })
        .collect()
}

#[cfg(test)]
mod tests;
