//! Per-coordinate class-pair scores, Top-m sparse readout selection and the
//! Fisher / class-mean cosine diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{FeatureMatrix, PauliFamily};

/// Denominator guard of the discriminative score.
pub const SCORE_EPSILON: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscriminationError {
    #[error("both classes must be present in the scored rows")]
    SingleClass,
    #[error("labels ({labels}) do not match feature rows ({rows})")]
    LengthMismatch { labels: usize, rows: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub lambda_cost: f64,
    pub lambda_fisher: f64,
    pub m: usize,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            lambda_cost: 0.1,
            lambda_fisher: 1e-3,
            m: 12,
        }
    }
}

/// Selected family columns, highest penalized score first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseReadout {
    pub columns: Vec<usize>,
    pub scores: Vec<f64>,
}

impl SparseReadout {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

fn check(f: &FeatureMatrix, labels: &[bool]) -> Result<(), DiscriminationError> {
    if labels.len() != f.nrows() {
        return Err(DiscriminationError::LengthMismatch {
            labels: labels.len(),
            rows: f.nrows(),
        });
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(DiscriminationError::SingleClass);
    }
    Ok(())
}

/// Population mean and standard deviation of column `c` over rows with
/// `labels == class`.
fn class_moments(f: &FeatureMatrix, labels: &[bool], class: bool, c: usize) -> (f64, f64) {
    let vals: Vec<f64> = f
        .column(c)
        .zip(labels)
        .filter(|(_, &y)| y == class)
        .map(|(v, _)| v)
        .collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `s_j = |μ_a − μ_b| / (σ_a + σ_b + ε)` for every column.
pub fn disc_scores(f: &FeatureMatrix, labels: &[bool]) -> Result<Vec<f64>, DiscriminationError> {
    check(f, labels)?;
    Ok((0..f.ncols())
        .map(|c| {
            let (ma, sa) = class_moments(f, labels, false, c);
            let (mb, sb) = class_moments(f, labels, true, c);
            (ma - mb).abs() / (sa + sb + SCORE_EPSILON)
        })
        .collect())
}

/// Subtracts `λ_cost · w(P_j) / max_ℓ w(P_ℓ)`.
pub fn penalize(scores: &[f64], family: &PauliFamily, lambda_cost: f64) -> Vec<f64> {
    let max_w = family.max_weight().max(1) as f64;
    scores
        .iter()
        .zip(family.members())
        .map(|(s, p)| s - lambda_cost * p.weight() as f64 / max_w)
        .collect()
}

/// The `m` highest scores; equal scores keep the lower column index.
pub fn select_top_m(penalized: &[f64], m: usize) -> SparseReadout {
    let mut order: Vec<usize> = (0..penalized.len()).collect();
    order.sort_by(|&i, &j| penalized[j].total_cmp(&penalized[i]).then(i.cmp(&j)));
    order.truncate(m.min(penalized.len()));
    SparseReadout {
        scores: order.iter().map(|&i| penalized[i]).collect(),
        columns: order,
    }
}

/// `Tr[(S_W + λI)^{-1} S_B]` with `1/N` scatter normalization.
pub fn fisher_score(f: &FeatureMatrix, labels: &[bool], lambda: f64) -> Result<f64, DiscriminationError> {
    check(f, labels)?;
    let d = f.ncols();
    let n = f.nrows() as f64;
    let overall: Vec<f64> = (0..d).map(|c| f.column(c).sum::<f64>() / n).collect();
    let mut s_w = DMatrix::<f64>::zeros(d, d);
    let mut s_b = DMatrix::<f64>::zeros(d, d);
    for class in [false, true] {
        let rows: Vec<&[f64]> = f
            .rows()
            .zip(labels)
            .filter(|(_, &y)| y == class)
            .map(|(r, _)| r)
            .collect();
        let nc = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / nc).collect();
        for r in &rows {
            for a in 0..d {
                let da = r[a] - mean[a];
                for b in 0..d {
                    s_w[(a, b)] += da * (r[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                s_b[(a, b)] += nc * (mean[a] - overall[a]) * (mean[b] - overall[b]);
            }
        }
    }
    s_w /= n;
    s_b /= n;
    for i in 0..d {
        s_w[(i, i)] += lambda;
    }
    let solved = match s_w.clone().cholesky() {
        Some(ch) => ch.solve(&s_b),
        None => s_w
            .lu()
            .solve(&s_b)
            .unwrap_or_else(|| DMatrix::zeros(d, d)),
    };
    Ok(solved.trace())
}

/// Cosine of the two class-mean feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCosine {
    pub value: f64,
    /// A class mean was the zero vector; `value` is then 0.
    pub degenerate: bool,
}

pub fn class_mean_cosine(f: &FeatureMatrix, labels: &[bool]) -> Result<MeanCosine, DiscriminationError> {
    check(f, labels)?;
    let d = f.ncols();
    let mean_of = |class: bool| -> Vec<f64> {
        let rows: Vec<&[f64]> = f
            .rows()
            .zip(labels)
            .filter(|(_, &y)| y == class)
            .map(|(r, _)| r)
            .collect();
        let nc = rows.len() as f64;
        (0..d).map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / nc).collect()
    };
    let (a, b) = (mean_of(false), mean_of(true));
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(MeanCosine {
            value: 0.0,
            degenerate: true,
        });
    }
    Ok(MeanCosine {
        value: (dot / (na * nb)).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::enumerate_family;

    fn col(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::new(values.len(), 1, values.to_vec())
    }

    #[test]
    fn score_examples() {
        let labels = [false, false, true, true];
        assert_eq!(disc_scores(&col(&[1.0, -1.0, 1.0, -1.0]), &labels).unwrap(), [0.0]);
        let s = disc_scores(&col(&[1.0, 1.0, 0.0, 0.0]), &labels).unwrap()[0];
        assert!((s - 1e8).abs() < 1e-3);
        let s = disc_scores(&col(&[1.5, 0.5, 0.5, -0.5]), &labels).unwrap()[0];
        assert!((s - 1.0 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn scores_need_both_classes() {
        assert_eq!(
            disc_scores(&col(&[1.0, 2.0]), &[true, true]).unwrap_err(),
            DiscriminationError::SingleClass
        );
    }

    #[test]
    fn penalty_examples() {
        let fam = enumerate_family(4, 2, &[]).unwrap();
        let raw = vec![0.5; fam.len()];
        assert_eq!(penalize(&raw, &fam, 0.0), raw);
        let pen = penalize(&raw, &fam, 0.1);
        assert!((pen[0] - 0.45).abs() < 1e-15);
        assert!((pen[65] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn top_m_examples() {
        let scores = [0.1, 0.9, 0.5, 0.9];
        let all = select_top_m(&scores, 10);
        assert_eq!(all.columns, [1, 3, 2, 0]);
        assert_eq!(select_top_m(&[0.2; 5], 3).columns, [0, 1, 2]);
        let r = select_top_m(&(0..66).map(|i| (i * 37 % 66) as f64).collect::<Vec<_>>(), 12);
        assert_eq!(r.len(), 12);
        let mut cols = r.columns.clone();
        cols.dedup();
        assert_eq!(cols.len(), 12);
        assert!(r.scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn fisher_examples() {
        let labels = [false, false, true, true];
        let j = fisher_score(&col(&[-1.0, -1.0, 1.0, 1.0]), &labels, 1e-3).unwrap();
        assert!((j - 1000.0).abs() < 1e-9);
        let j = fisher_score(&col(&[-1.0, 1.0, -1.0, 1.0]), &labels, 1e-3).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn cosine_examples() {
        let labels = [false, true];
        let same = FeatureMatrix::new(2, 2, vec![1.0, 2.0, 1.0, 2.0]);
        assert!((class_mean_cosine(&same, &labels).unwrap().value - 1.0).abs() < 1e-15);
        let opposite = FeatureMatrix::new(2, 2, vec![1.0, 2.0, -1.0, -2.0]);
        assert!((class_mean_cosine(&opposite, &labels).unwrap().value + 1.0).abs() < 1e-15);
        let ortho = FeatureMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 3.0]);
        assert_eq!(class_mean_cosine(&ortho, &labels).unwrap().value, 0.0);
        let zero = FeatureMatrix::new(2, 2, vec![0.0, 0.0, 0.0, 3.0]);
        let c = class_mean_cosine(&zero, &labels).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.value, 0.0);
    }
}
