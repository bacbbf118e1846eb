//! Two-stage stratified subset sampling.
//!
//! Domain targets are set first by floor plus largest remainder on
//! `budget * count(d) / total`; each domain's target is then split across
//! its tasks the same way. Records are drawn without replacement inside each
//! (domain, task) cell with a seeded ChaCha generator. Ties in remainders go
//! to the lexicographically smaller key.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::QARecord;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubsetError {
    #[error("budget {budget} exceeds population of {population} records")]
    BudgetTooLarge { budget: u64, population: u64 },
}

/// Splits `n` across `weights` in proportion: floor shares, then one extra
/// unit to each of the largest remainders. Ties go to the lower index.
/// Requires `n <= sum(weights)` and a non-zero sum when `n > 0`.
pub fn largest_remainder(weights: &[u64], n: u64) -> Vec<u64> {
    let total: u128 = weights.iter().map(|&w| w as u128).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let n = n as u128;
    let mut shares: Vec<u64> = weights.iter().map(|&w| (n * w as u128 / total) as u64).collect();
    let assigned: u128 = shares.iter().map(|&s| s as u128).sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Stable sort keeps index order among equal remainders.
    order.sort_by_key(|&i| std::cmp::Reverse(n * weights[i] as u128 % total));
    for &i in order.iter().take((n - assigned) as usize) {
        shares[i] += 1;
    }
    shares
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellAllocation {
    pub domain: String,
    pub task: String,
    pub available: u64,
    pub allocated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPlan {
    pub budget: u64,
    pub seed: u64,
    pub population: u64,
    pub domain_targets: BTreeMap<String, u64>,
    pub cells: Vec<CellAllocation>,
    /// Samples moved by the final balancing pass.
    pub balancing_moves: u64,
    /// Selected record ids in dataset order.
    pub selected: Vec<String>,
}

impl SubsetPlan {
    pub fn total_allocated(&self) -> u64 {
        self.cells.iter().map(|c| c.allocated).sum()
    }
}

/// Moves single samples from over-full to under-full cells of the same
/// domain until every cell is within its availability and the total equals
/// `budget`. Returns the number of moves.
fn balance(cells: &mut [CellAllocation], budget: u64) -> u64 {
    let mut moves = 0;
    loop {
        let total: u64 = cells.iter().map(|c| c.allocated).sum();
        let over = cells.iter().position(|c| c.allocated > c.available);
        let spare = |cells: &[CellAllocation]| cells.iter().position(|c| c.allocated < c.available);
        match (over, total.cmp(&budget)) {
            (Some(i), _) => {
                cells[i].allocated -= 1;
                if total <= budget {
                    if let Some(j) = spare(cells) {
                        cells[j].allocated += 1;
                    }
                }
            }
            (None, std::cmp::Ordering::Less) => match spare(cells) {
                Some(j) => cells[j].allocated += 1,
                None => return moves,
            },
            (None, std::cmp::Ordering::Greater) => {
                let i = cells.iter().rposition(|c| c.allocated > 0).expect("total > 0");
                cells[i].allocated -= 1;
            }
            (None, std::cmp::Ordering::Equal) => return moves,
        }
        moves += 1;
    }
}

/// Plans and draws a stratified subset of `budget` records.
pub fn stratified_subset(
    records: &[QARecord],
    budget: u64,
    seed: u64,
) -> Result<(SubsetPlan, Vec<QARecord>), SubsetError> {
    let population = records.len() as u64;
    if budget > population {
        return Err(SubsetError::BudgetTooLarge { budget, population });
    }

    let mut by_cell: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_cell.entry((r.domain.as_str(), r.task.as_str())).or_default().push(i);
    }
    let mut domain_counts: BTreeMap<&str, u64> = BTreeMap::new();
    for ((d, _), members) in &by_cell {
        *domain_counts.entry(d).or_default() += members.len() as u64;
    }

    let domains: Vec<&str> = domain_counts.keys().copied().collect();
    let weights: Vec<u64> = domain_counts.values().copied().collect();
    let targets = largest_remainder(&weights, budget);
    let domain_targets: BTreeMap<String, u64> =
        domains.iter().zip(&targets).map(|(d, &n)| (d.to_string(), n)).collect();

    let mut cells = Vec::new();
    for (d, &target) in domains.iter().zip(&targets) {
        let tasks: Vec<(&str, u64)> =
            by_cell.iter().filter(|((cd, _), _)| cd == d).map(|((_, t), m)| (*t, m.len() as u64)).collect();
        let split = largest_remainder(&tasks.iter().map(|t| t.1).collect::<Vec<_>>(), target);
        for ((task, available), allocated) in tasks.into_iter().zip(split) {
            cells.push(CellAllocation { domain: d.to_string(), task: task.to_owned(), available, allocated });
        }
    }
    let balancing_moves = balance(&mut cells, budget);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = Vec::with_capacity(budget as usize);
    for cell in &cells {
        let members = &by_cell[&(cell.domain.as_str(), cell.task.as_str())];
        let picks = sample(&mut rng, members.len(), cell.allocated as usize);
        chosen.extend(picks.into_iter().map(|k| members[k]));
    }
    chosen.sort_unstable();

    let subset: Vec<QARecord> = chosen.iter().map(|&i| records[i].clone()).collect();
    let plan = SubsetPlan {
        budget,
        seed,
        population,
        domain_targets,
        cells,
        balancing_moves,
        selected: subset.iter().map(|r| r.id.clone()).collect(),
    };
    Ok((plan, subset))
}
