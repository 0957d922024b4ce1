//! Pairwise-preference ranking and agreement statistics: Bradley-Terry
//! strength fitting by minorization-maximization, Fleiss' kappa, Spearman
//! rank correlation, and Latin-square rater assignment.

use crate::judge::Dimension;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::Hash;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("wins matrix must have a zero diagonal")]
    NonZeroDiagonal,
    #[error("system {0} is not in the wins matrix")]
    UnknownSystem(String),
    #[error("comparison graph is disconnected and epsilon is zero")]
    DisconnectedGraph,
    #[error("Bradley-Terry fit did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("every item must be rated by the same number (>= 2) of raters")]
    RaggedTable,
    #[error("score vectors differ in length or are shorter than 2")]
    LengthMismatch,
    #[error("rank correlation is undefined for constant scores")]
    ConstantInput,
    #[error("not enough rater capacity: item {0} cannot be assigned")]
    InsufficientCapacity(String),
}

/// Pairwise win counts: `wins[i][j]` is how often system i beat system j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinsMatrix {
    pub dimension: Dimension,
    pub systems: Vec<String>,
    pub wins: Vec<Vec<f64>>,
}

impl WinsMatrix {
    pub fn zeros(dimension: Dimension, systems: Vec<String>) -> Self {
        let n = systems.len();
        Self {
            dimension,
            systems,
            wins: vec![vec![0.0; n]; n],
        }
    }

    pub fn index_of(&self, system: &str) -> Result<usize, RankingError> {
        self.systems
            .iter()
            .position(|s| s == system)
            .ok_or_else(|| RankingError::UnknownSystem(system.to_string()))
    }

    pub fn add_win(&mut self, winner: &str, loser: &str, amount: f64) -> Result<(), RankingError> {
        let w = self.index_of(winner)?;
        let l = self.index_of(loser)?;
        self.wins[w][l] += amount;
        Ok(())
    }

    fn validate(&self) -> Result<(), RankingError> {
        for (i, row) in self.wins.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(RankingError::NonZeroDiagonal);
            }
        }
        Ok(())
    }
}

/// Fitted Bradley-Terry strengths, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthVector {
    pub systems: Vec<String>,
    pub strengths: Vec<f64>,
    pub iterations: usize,
}

impl StrengthVector {
    /// (system, strength) pairs sorted by descending strength.
    pub fn ranking(&self) -> Vec<(String, f64)> {
        let mut pairs: Vec<(String, f64)> = self
            .systems
            .iter()
            .cloned()
            .zip(self.strengths.iter().copied())
            .collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        pairs
    }

    pub fn strength_of(&self, system: &str) -> Option<f64> {
        self.systems
            .iter()
            .position(|s| s == system)
            .map(|i| self.strengths[i])
    }
}

/// Strong connectivity of the directed graph with an edge i -> j whenever
/// `w[i][j] > 0`: reachability from node 0 along edges and along reversed
/// edges.
fn strongly_connected(w: &[Vec<f64>]) -> bool {
    let n = w.len();
    if n <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let connected = if forward { w[i][j] > 0.0 } else { w[j][i] > 0.0 };
                if connected && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Fit Bradley-Terry strengths by minorization-maximization.
///
/// `epsilon` is a pseudo-count added to every ordered pair so that the fit
/// stays finite when some system never wins; with `epsilon = 0` the
/// comparison graph must be strongly connected. Iteration stops when the
/// largest relative strength change drops below `tol`.
pub fn fit_bradley_terry(
    matrix: &WinsMatrix,
    epsilon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<StrengthVector, RankingError> {
    matrix.validate()?;
    let n = matrix.systems.len();
    if n == 0 {
        return Err(RankingError::LengthMismatch);
    }
    if n == 1 {
        return Ok(StrengthVector {
            systems: matrix.systems.clone(),
            strengths: vec![1.0],
            iterations: 0,
        });
    }
    let mut w = matrix.wins.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i][j] += epsilon;
            }
        }
    }
    if epsilon == 0.0 && !strongly_connected(&w) {
        return Err(RankingError::DisconnectedGraph);
    }

    let total_wins: Vec<f64> = (0..n).map(|i| w[i].iter().sum()).collect();
    let mut p = vec![1.0 / n as f64; n];
    for iter in 0..max_iter {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut denom = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let pair_games = w[i][j] + w[j][i];
                if pair_games > 0.0 {
                    denom += pair_games / (p[i] + p[j]);
                }
            }
            next[i] = if denom > 0.0 { total_wins[i] / denom } else { p[i] };
        }
        let sum: f64 = next.iter().sum();
        for v in &mut next {
            *v /= sum;
        }
        let delta = p
            .iter()
            .zip(&next)
            .map(|(old, new)| (new - old).abs() / old)
            .fold(0.0f64, f64::max);
        p = next;
        if delta < tol {
            return Ok(StrengthVector {
                systems: matrix.systems.clone(),
                strengths: p,
                iterations: iter + 1,
            });
        }
    }
    Err(RankingError::NotConverged(max_iter))
}

/// Fleiss' kappa over an item-by-rater table of categorical labels. Every
/// item must carry the same number of raters.
pub fn fleiss_kappa<C: Eq + Hash + Clone>(table: &[Vec<C>]) -> Result<f64, RankingError> {
    if table.is_empty() {
        return Err(RankingError::RaggedTable);
    }
    let raters = table[0].len();
    if raters < 2 || table.iter().any(|row| row.len() != raters) {
        return Err(RankingError::RaggedTable);
    }
    let n_items = table.len() as f64;
    let k = raters as f64;

    let mut category_totals: HashMap<C, f64> = HashMap::new();
    let mut agreement_sum = 0.0;
    for row in table {
        let mut counts: HashMap<&C, f64> = HashMap::new();
        for label in row {
            *counts.entry(label).or_insert(0.0) += 1.0;
            *category_totals.entry(label.clone()).or_insert(0.0) += 1.0;
        }
        let sum_sq: f64 = counts.values().map(|c| c * c).sum();
        agreement_sum += (sum_sq - k) / (k * (k - 1.0));
    }
    let p_bar = agreement_sum / n_items;
    let p_e: f64 = category_totals
        .values()
        .map(|total| (total / (n_items * k)).powi(2))
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        // Everyone used a single category everywhere: perfect agreement.
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Ranks with ties averaged.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: Pearson correlation of average-tie ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, RankingError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(RankingError::LengthMismatch);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mean_x = rx.iter().sum::<f64>() / n;
    let mean_y = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..x.len() {
        let dx = rx[i] - mean_x;
        let dy = ry[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(RankingError::ConstantInput);
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// An item to be rated, keyed by the writing prompt it involves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub prompt_id: String,
}

/// Items per rater after Latin-square assignment.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub per_rater: HashMap<String, Vec<String>>,
}

/// Assign every item to a rater such that no rater sees the same writing
/// prompt twice and nobody exceeds `per_rater_cap` items. Items sharing a
/// prompt rotate through the rater list Latin-square style, each prompt
/// group starting at a different offset to balance load.
pub fn latin_square_assign(
    raters: &[String],
    items: &[EvalItem],
    per_rater_cap: usize,
) -> Result<Assignment, RankingError> {
    let mut assignment = Assignment::default();
    let mut load: HashMap<&str, usize> = HashMap::new();
    let mut prompts_seen: HashMap<&str, Vec<&str>> = HashMap::new();

    let mut prompt_order: Vec<&str> = Vec::new();
    for item in items {
        if !prompt_order.contains(&item.prompt_id.as_str()) {
            prompt_order.push(&item.prompt_id);
        }
    }

    for (prompt_idx, prompt_id) in prompt_order.iter().enumerate() {
        let group: Vec<&EvalItem> = items.iter().filter(|i| i.prompt_id == *prompt_id).collect();
        for (offset, item) in group.iter().enumerate() {
            let start = prompt_idx + offset;
            let chosen = (0..raters.len()).map(|k| &raters[(start + k) % raters.len()]).find(|r| {
                load.get(r.as_str()).copied().unwrap_or(0) < per_rater_cap
                    && !prompts_seen
                        .get(r.as_str())
                        .is_some_and(|seen| seen.contains(prompt_id))
            });
            let Some(rater) = chosen else {
                return Err(RankingError::InsufficientCapacity(item.id.clone()));
            };
            *load.entry(rater).or_insert(0) += 1;
            prompts_seen.entry(rater).or_default().push(prompt_id);
            assignment
                .per_rater
                .entry(rater.clone())
                .or_default()
                .push(item.id.clone());
        }
    }
    Ok(assignment)
}
