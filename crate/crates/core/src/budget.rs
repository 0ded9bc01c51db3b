//! Finite-shot modeling: shot allocation over measurement groups, the
//! Gaussian finite-sampling surrogate and the budget-aware ranking.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::FeatureMatrix;
use crate::probe::{fit_probe, task_accuracy, ProbeConfig, ProbeError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BudgetError {
    #[error("budget of {shots} shots cannot cover {groups} measurement groups")]
    BudgetTooSmall { shots: u64, groups: usize },
    #[error("at least one measurement group is required")]
    NoGroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetParams {
    pub shots: u64,
    pub beta: f64,
    pub gamma: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BudgetParams {
    fn default() -> Self {
        Self {
            shots: 2048,
            beta: 1.0,
            gamma: 0.1,
            trials: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEvaluation {
    pub groups: usize,
    pub shots_per_group: u64,
    pub realized_shots: u64,
    pub noisy_acc: f64,
    pub var_penalty: f64,
    pub budget_score: f64,
}

/// `⌊B / G⌋`, at least one shot per group.
pub fn shots_per_group(shots: u64, groups: usize) -> Result<u64, BudgetError> {
    if groups == 0 {
        return Err(BudgetError::NoGroups);
    }
    let per = shots / groups as u64;
    if per < 1 {
        return Err(BudgetError::BudgetTooSmall { shots, groups });
    }
    Ok(per)
}

/// `(1 − a²) / N_shot`.
pub fn shot_variance(a: f64, n_shot: u64) -> f64 {
    ((1.0 - a * a) / n_shot as f64).max(0.0)
}

/// Counter-based standard normal source.
///
/// Each draw is addressed by `(trial, row, column)`: ChaCha8 keyed by the
/// run seed, stream = trial, word position derived from the coordinate.
/// Values therefore do not depend on evaluation order or thread count.
#[derive(Debug)]
pub struct NoiseStream {
    key: [u8; 32],
    seed: u64,
    draws: AtomicU64,
}

impl Clone for NoiseStream {
    fn clone(&self) -> Self {
        Self {
            key: self.key,
            seed: self.seed,
            draws: AtomicU64::new(self.draws()),
        }
    }
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut key);
        Self {
            key,
            seed,
            draws: AtomicU64::new(0),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of normals drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws.load(AtomicOrdering::Relaxed)
    }

    /// Standard normal for one coordinate (Box-Muller on two 53-bit uniforms).
    pub fn normal(&self, trial: u64, row: usize, column: usize) -> f64 {
        self.draws.fetch_add(1, AtomicOrdering::Relaxed);
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial);
        let coord = ((row as u128) << 32) | column as u128;
        // two u64 = four 32-bit words per coordinate
        rng.set_word_pos(coord * 4);
        let to_unit = |x: u64| ((x >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
        let u1 = to_unit(rng.next_u64());
        let u2 = to_unit(rng.next_u64());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Adds `N(0, (1 − f²)/N_shot)` to every entry. `row_ids` and `col_ids`
/// give the global coordinates that key the noise. Entries are not clipped.
pub fn perturb_features(
    f: &FeatureMatrix,
    n_shot: u64,
    stream: &NoiseStream,
    trial: u64,
    row_ids: &[usize],
    col_ids: &[usize],
) -> FeatureMatrix {
    assert_eq!(row_ids.len(), f.nrows(), "row id count");
    assert_eq!(col_ids.len(), f.ncols(), "column id count");
    f.map_entries(|r, c, v| {
        let var = shot_variance(v, n_shot);
        if var == 0.0 {
            v
        } else {
            v + var.sqrt() * stream.normal(trial, row_ids[r], col_ids[c])
        }
    })
}

/// Selected features of one binary task, with their global coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TaskFeatures<'a> {
    pub train: &'a FeatureMatrix,
    pub train_rows: &'a [usize],
    pub train_labels: &'a [bool],
    pub test: &'a FeatureMatrix,
    pub test_rows: &'a [usize],
    pub test_labels: &'a [bool],
    pub columns: &'a [usize],
}

/// Mean test accuracy over `trials` rounds of perturbing both splits and
/// refitting the probe.
pub fn noisy_accuracy(
    task: &TaskFeatures<'_>,
    n_shot: u64,
    trials: usize,
    stream: &NoiseStream,
    probe: &ProbeConfig,
) -> Result<f64, ProbeError> {
    let mut total = 0.0;
    for trial in 0..trials as u64 {
        let train = perturb_features(task.train, n_shot, stream, trial, task.train_rows, task.columns);
        let test = perturb_features(task.test, n_shot, stream, trial, task.test_rows, task.columns);
        let model = fit_probe(&train, task.train_labels, probe)?;
        total += task_accuracy(&model, &test, task.test_labels)?;
    }
    Ok(total / trials.max(1) as f64)
}

/// Mean of `(1 − f²)/N_shot` over every entry.
pub fn variance_penalty(f: &FeatureMatrix, n_shot: u64) -> f64 {
    let count = f.as_slice().len();
    if count == 0 {
        return 0.0;
    }
    f.as_slice().iter().map(|&v| (1.0 - v * v) / n_shot as f64).sum::<f64>() / count as f64
}

/// `J − β·VarPenalty − γ·G/d`.
pub fn budget_score(fisher: f64, var_penalty: f64, groups: usize, d: usize, beta: f64, gamma: f64) -> f64 {
    fisher - beta * var_penalty - gamma * groups as f64 / d as f64
}

/// Ranking keys of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankEntry {
    pub noisy_acc: f64,
    pub budget_score: f64,
    pub ideal_acc: f64,
    pub groups: usize,
    pub length: usize,
}

/// `Less` means `a` ranks ahead: higher noisy accuracy, then budget score,
/// then ideal accuracy, then fewer groups, then the shorter sequence.
pub fn rank_cmp(a: &RankEntry, b: &RankEntry) -> Ordering {
    b.noisy_acc
        .total_cmp(&a.noisy_acc)
        .then_with(|| b.budget_score.total_cmp(&a.budget_score))
        .then_with(|| b.ideal_acc.total_cmp(&a.ideal_acc))
        .then_with(|| a.groups.cmp(&b.groups))
        .then_with(|| a.length.cmp(&b.length))
}

/// Candidate indices, best first. Full ties keep insertion order.
pub fn pair_rank(candidates: &[RankEntry]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| rank_cmp(&candidates[i], &candidates[j]));
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shot_allocation() {
        assert_eq!(shots_per_group(2048, 4).unwrap(), 512);
        assert_eq!(shots_per_group(2048, 3).unwrap() * 3, 2046);
        assert_eq!(shots_per_group(2048, 1).unwrap(), 2048);
        assert_eq!(
            shots_per_group(2, 3).unwrap_err(),
            BudgetError::BudgetTooSmall { shots: 2, groups: 3 }
        );
    }

    #[test]
    fn variance_examples() {
        assert_eq!(shot_variance(0.0, 512), 1.0 / 512.0);
        assert_eq!(shot_variance(1.0, 77), 0.0);
        assert!((shot_variance(0.5, 100) - 0.0075).abs() < 1e-15);
    }

    #[test]
    fn penalty_examples() {
        let ones = FeatureMatrix::new(2, 2, vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(variance_penalty(&ones, 512), 0.0);
        let zeros = FeatureMatrix::new(2, 2, vec![0.0; 4]);
        assert_eq!(variance_penalty(&zeros, 512), 1.0 / 512.0);
        assert_eq!(variance_penalty(&zeros, 1024) * 2.0, variance_penalty(&zeros, 512));
    }

    #[test]
    fn score_examples() {
        assert_eq!(budget_score(2.5, 0.3, 4, 12, 0.0, 0.0), 2.5);
        assert!((budget_score(2.0, 0.5, 4, 12, 1.0, 0.1) - 1.466_666_666_666_666_7).abs() < 1e-12);
        assert!(budget_score(1.0, 0.1, 5, 12, 1.0, 0.1) < budget_score(1.0, 0.1, 4, 12, 1.0, 0.1));
    }

    #[test]
    fn unit_entries_are_never_perturbed() {
        let f = FeatureMatrix::new(1, 3, vec![1.0, -1.0, 0.2]);
        let s = NoiseStream::new(3);
        let out = perturb_features(&f, 16, &s, 0, &[5], &[0, 1, 2]);
        assert_eq!(out.get(0, 0), 1.0);
        assert_eq!(out.get(0, 1), -1.0);
        assert_ne!(out.get(0, 2), 0.2);
    }

    #[test]
    fn huge_shot_count_leaves_features_unchanged() {
        let f = FeatureMatrix::new(1, 2, vec![0.3, -0.4]);
        let out = perturb_features(&f, 1 << 60, &NoiseStream::new(1), 0, &[0], &[0, 1]);
        for (a, b) in out.as_slice().iter().zip(f.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_is_addressed_by_coordinate() {
        let s = NoiseStream::new(42);
        let a = s.normal(1, 10, 3);
        let _ = s.normal(0, 0, 0);
        assert_eq!(s.normal(1, 10, 3), a);
        assert_ne!(s.normal(2, 10, 3), a);
        assert_ne!(s.normal(1, 11, 3), a);
        assert_ne!(NoiseStream::new(43).normal(1, 10, 3), a);
        assert_eq!(s.draws(), 5);
    }

    #[test]
    fn rank_examples() {
        let base = RankEntry {
            noisy_acc: 0.9,
            budget_score: 1.0,
            ideal_acc: 0.9,
            groups: 5,
            length: 2,
        };
        let fewer_groups = RankEntry { groups: 3, ..base };
        assert_eq!(pair_rank(&[base, fewer_groups]), [1, 0]);
        assert_eq!(pair_rank(&[base]), [0]);
        let better_noisy = RankEntry {
            noisy_acc: 0.95,
            budget_score: -10.0,
            ideal_acc: 0.1,
            groups: 50,
            length: 3,
        };
        assert_eq!(pair_rank(&[base, better_noisy]), [1, 0]);
        assert_eq!(pair_rank(&[base, base]), [0, 1]);
    }
}
