//! Dataset ingestion, stratified splitting, standardization + PCA angle
//! encoding and one-vs-one task construction.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::AngleVector;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row} has {got} fields, header has {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("dataset needs at least two samples")]
    EmptyDataset,
    #[error("class `{0}` has too few samples to place one in each split")]
    ClassTooSmall(String),
    #[error("test fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("all features are constant on the training split")]
    DegenerateCovariance,
    #[error("expected a feature vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labelled samples. Labels are class indices `0..C` in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Builds a dataset from rows and string labels.
    pub fn from_parts(
        features: Vec<Vec<f64>>,
        labels: &[String],
        feature_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let mut class_names: Vec<String> = Vec::new();
        let labels = labels
            .iter()
            .map(|l| match class_names.iter().position(|c| c == l) {
                Some(i) => i,
                None => {
                    class_names.push(l.clone());
                    class_names.len() - 1
                }
            })
            .collect::<Vec<_>>();
        if labels.len() < 2 {
            return Err(DataError::EmptyDataset);
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            class_names,
        })
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    read_csv(file, label_column)
}

/// Parses CSV text with a header row. Every non-label column must be numeric.
pub fn read_csv<R: std::io::Read>(reader: R, label_column: &str) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = i + 2;
        if record.len() != header.len() {
            return Err(DataError::RaggedRow {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        let mut x = Vec::with_capacity(feature_names.len());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| DataError::NonNumericFeature {
                row,
                column: header[j].clone(),
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonNumericFeature {
                    row,
                    column: header[j].clone(),
                    value: field.to_string(),
                });
            }
            x.push(v);
        }
        features.push(x);
        labels.push(record[label_idx].to_string());
    }
    Dataset::from_parts(features, &labels, feature_names)
}

/// Row indices of a train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split: every class keeps at least one sample on each side.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<Split, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidFraction(test_fraction));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in by_class {
        if rows.len() < 2 {
            return Err(DataError::ClassTooSmall(ds.class_names[class].clone()));
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Standardizer, PCA projection and angle scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub mu: Vec<f64>,
    pub sd: Vec<f64>,
    pub pca_mean: Vec<f64>,
    /// `d × p`, column `j` is the `j`-th principal direction.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub scales: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
    pub p: usize,
}

impl EncoderModel {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Qubits that only ever receive padded zero angles.
    pub fn padded_qubits(&self) -> Vec<usize> {
        (self.p..self.n).collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mu.iter().zip(&self.sd))
            .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }

    /// `z(x) = W_pᵀ (standardize(x) − μ)`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, DataError> {
        if x.len() != self.dim() {
            return Err(DataError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let centered: Vec<f64> = self
            .standardize(x)
            .iter()
            .zip(&self.pca_mean)
            .map(|(v, m)| v - m)
            .collect();
        Ok((0..self.p)
            .map(|j| {
                self.components
                    .column(j)
                    .iter()
                    .zip(&centered)
                    .map(|(w, c)| w * c)
                    .sum()
            })
            .collect())
    }
}

/// Fits standardization, PCA (eigendecomposition of the training covariance)
/// and the per-coordinate angle scales `s_j = max_train |z_j|`.
pub fn fit_encoder(train: &[&[f64]], n: usize, alpha: f64) -> Result<EncoderModel, DataError> {
    let n_train = train.len();
    if n_train < 2 {
        return Err(DataError::EmptyDataset);
    }
    let d = train[0].len();
    for x in train {
        if x.len() != d {
            return Err(DataError::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let nf = n_train as f64;
    let mu: Vec<f64> = (0..d).map(|j| train.iter().map(|x| x[j]).sum::<f64>() / nf).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let var = train.iter().map(|x| (x[j] - mu[j]).powi(2)).sum::<f64>() / nf;
            let s = var.sqrt();
            // relative threshold: a feature that varies only by rounding noise is constant
            if s <= 1e-12 * (1.0 + mu[j].abs()) {
                0.0
            } else {
                s
            }
        })
        .collect();
    if sd.iter().all(|&s| s == 0.0) {
        return Err(DataError::DegenerateCovariance);
    }

    let standardized: Vec<Vec<f64>> = train
        .iter()
        .map(|x| {
            x.iter()
                .zip(mu.iter().zip(&sd))
                .map(|(&v, (&m, &s))| if s > 0.0 { (v - m) / s } else { 0.0 })
                .collect()
        })
        .collect();
    let pca_mean: Vec<f64> = (0..d)
        .map(|j| standardized.iter().map(|x| x[j]).sum::<f64>() / nf)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in &standardized {
        for a in 0..d {
            let da = x[a] - pca_mean[a];
            for b in a..d {
                cov[(a, b)] += da * (x[b] - pca_mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (nf - 1.0);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let p = n.min(d).min(n_train - 1);
    let mut components = DMatrix::<f64>::zeros(d, p);
    let mut eigenvalues = Vec::with_capacity(p);
    for (slot, &src) in order.iter().take(p).enumerate() {
        let mut v = eig.eigenvectors.column(src).clone_owned();
        // sign convention: the largest-magnitude entry is positive
        let pivot = v
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() + 1e-12 { (i, x) } else { best })
            .0;
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        components.set_column(slot, &v);
        eigenvalues.push(eig.eigenvalues[src]);
    }

    let mut model = EncoderModel {
        mu,
        sd,
        pca_mean,
        components,
        eigenvalues,
        scales: vec![0.0; p],
        alpha,
        n,
        p,
    };
    let mut scales = vec![0.0f64; p];
    for x in train {
        let z = model.project(x)?;
        for (s, v) in scales.iter_mut().zip(z) {
            *s = s.max(v.abs());
        }
    }
    model.scales = scales;
    Ok(model)
}

/// `θ_j = clip(α z_j / s_j, −π, π)` for `j < p`, zero padding above.
pub fn encode_angles(model: &EncoderModel, x: &[f64]) -> Result<AngleVector, DataError> {
    let z = model.project(x)?;
    let mut theta = vec![0.0; model.n];
    for (j, (zj, &s)) in z.iter().zip(&model.scales).enumerate() {
        theta[j] = if s > 0.0 {
            (model.alpha * zj / s).clamp(-PI, PI)
        } else {
            0.0
        };
    }
    Ok(AngleVector::new(theta).expect("clipped angles are in range"))
}

/// One binary task between classes `class_a < class_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTask {
    pub class_a: usize,
    pub class_b: usize,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

impl PairTask {
    /// Binary targets for `rows`: `true` for `class_b`.
    pub fn targets(&self, ds: &Dataset, rows: &[usize]) -> Vec<bool> {
        rows.iter().map(|&r| ds.labels[r] == self.class_b).collect()
    }

    pub fn label(&self, ds: &Dataset) -> String {
        format!("{}|{}", ds.class_names[self.class_a], ds.class_names[self.class_b])
    }
}

/// All `C(C−1)/2` one-vs-one tasks, in `(a, b)` lexicographic order.
pub fn make_pair_tasks(ds: &Dataset, split: &Split) -> Result<Vec<PairTask>, DataError> {
    let c = ds.num_classes();
    if c < 2 {
        return Err(DataError::TooFewClasses(c));
    }
    let mut tasks = Vec::with_capacity(c * (c - 1) / 2);
    for a in 0..c {
        for b in a + 1..c {
            let keep = |rows: &[usize]| -> Vec<usize> {
                rows.iter()
                    .copied()
                    .filter(|&r| ds.labels[r] == a || ds.labels[r] == b)
                    .collect()
            };
            tasks.push(PairTask {
                class_a: a,
                class_b: b,
                train_rows: keep(&split.train),
                test_rows: keep(&split.test),
            });
        }
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(rows: &[(&[f64], &str)]) -> Dataset {
        let features = rows.iter().map(|(x, _)| x.to_vec()).collect();
        let labels: Vec<String> = rows.iter().map(|(_, l)| l.to_string()).collect();
        let d = rows[0].0.len();
        Dataset::from_parts(features, &labels, (0..d).map(|j| format!("f{j}")).collect()).unwrap()
    }

    #[test]
    fn csv_parsing_and_errors() {
        let text = "a,b,label\n1,2,x\n3,4,y\n5,6,x\n";
        let ds = read_csv(text.as_bytes(), "label").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.class_names, ["x", "y"]);
        assert_eq!(ds.labels, [0, 1, 0]);

        assert!(matches!(read_csv(text.as_bytes(), "species"), Err(DataError::MissingLabelColumn(_))));
        let bad = "a,label\n1,x\nfoo,y\n";
        match read_csv(bad.as_bytes(), "label") {
            Err(DataError::NonNumericFeature { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_csv("a,label\n1,x\n".as_bytes(), "label"), Err(DataError::EmptyDataset)));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let rows: Vec<(Vec<f64>, String)> = (0..30)
            .map(|i| (vec![i as f64], format!("c{}", i % 3)))
            .collect();
        let ds = Dataset::from_parts(
            rows.iter().map(|r| r.0.clone()).collect(),
            &rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>(),
            vec!["v".into()],
        )
        .unwrap();
        let s1 = split(&ds, 0.3, 7).unwrap();
        let s2 = split(&ds, 0.3, 7).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.test.len(), 9);
        assert_eq!(s1.train.len(), 21);
        assert_ne!(split(&ds, 0.3, 8).unwrap(), s1);
        assert!(matches!(split(&ds, 1.0, 0), Err(DataError::InvalidFraction(_))));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let ds = toy(&[(&[0.0], "a"), (&[1.0], "a"), (&[2.0], "b")]);
        assert!(matches!(split(&ds, 0.3, 0), Err(DataError::ClassTooSmall(c)) if c == "b"));
    }

    #[test]
    fn padding_when_dimension_is_small() {
        let ds = toy(&[
            (&[0.0, 1.0], "a"),
            (&[1.0, 0.5], "a"),
            (&[2.0, 3.0], "b"),
            (&[3.0, 1.0], "b"),
        ]);
        let rows: Vec<&[f64]> = ds.features.iter().map(Vec::as_slice).collect();
        let enc = fit_encoder(&rows, 4, PI / 2.0).unwrap();
        assert_eq!(enc.p, 2);
        assert_eq!(enc.padded_qubits(), [2, 3]);
        let theta = encode_angles(&enc, &ds.features[0]).unwrap();
        assert_eq!(&theta.as_slice()[2..], &[0.0, 0.0]);
    }

    #[test]
    fn p_limited_by_training_size() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 5.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert_eq!(fit_encoder(&refs, 4, PI / 2.0).unwrap().p, 1);
    }

    #[test]
    fn extreme_training_sample_maps_to_alpha() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let enc = fit_encoder(&refs, 2, PI / 2.0).unwrap();
        for j in 0..enc.p {
            let best = rows
                .iter()
                .max_by(|a, b| enc.project(a).unwrap()[j].abs().total_cmp(&enc.project(b).unwrap()[j].abs()))
                .unwrap();
            let t = encode_angles(&enc, best).unwrap().as_slice()[j];
            assert!((t.abs() - PI / 2.0).abs() < 1e-12);
        }
        for r in &rows {
            for &t in encode_angles(&enc, r).unwrap().as_slice() {
                assert!(t.abs() <= PI / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn clip_engages_far_outside_training_range() {
        let rows: Vec<Vec<f64>> = vec![vec![-1.0], vec![1.0], vec![0.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let enc = fit_encoder(&refs, 1, PI / 2.0).unwrap();
        // z_0 = 3 s_0 → 3π/2 → π
        let x = enc.mu[0] + 3.0 * enc.sd[0] * enc.scales[0] / enc.components[(0, 0)];
        let t = encode_angles(&enc, &[x]).unwrap().as_slice()[0];
        assert_eq!(t, PI);
    }

    #[test]
    fn constant_features() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 2.0], vec![1.0, 4.0], vec![1.0, 6.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let enc = fit_encoder(&refs, 2, PI / 2.0).unwrap();
        assert_eq!(enc.sd[0], 0.0);
        let mean_point = [1.0, 4.0];
        assert!(encode_angles(&enc, &mean_point).unwrap().as_slice().iter().all(|t| t.abs() < 1e-12));

        let flat: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0]];
        let refs: Vec<&[f64]> = flat.iter().map(Vec::as_slice).collect();
        assert!(matches!(fit_encoder(&refs, 2, 1.0), Err(DataError::DegenerateCovariance)));
    }

    #[test]
    fn dimension_mismatch() {
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let enc = fit_encoder(&refs, 2, 1.0).unwrap();
        assert!(matches!(encode_angles(&enc, &[1.0]), Err(DataError::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn pair_task_counts() {
        let three = toy(&[(&[0.0], "a"), (&[1.0], "b"), (&[2.0], "c"), (&[0.1], "a"), (&[1.1], "b"), (&[2.1], "c")]);
        let s = split(&three, 0.5, 0).unwrap();
        let tasks = make_pair_tasks(&three, &s).unwrap();
        assert_eq!(tasks.len(), 3);
        for t in &tasks {
            assert!(t.class_a < t.class_b);
            for &r in t.train_rows.iter().chain(&t.test_rows) {
                assert!(three.labels[r] == t.class_a || three.labels[r] == t.class_b);
            }
        }
        let two = toy(&[(&[0.0], "a"), (&[1.0], "b"), (&[0.2], "a"), (&[1.2], "b")]);
        let s = split(&two, 0.5, 0).unwrap();
        assert_eq!(make_pair_tasks(&two, &s).unwrap().len(), 1);
    }

    #[test]
    fn task_count_for_reference_class_counts() {
        let total: usize = [3usize, 3, 2, 10, 10, 10, 26, 4, 2].iter().map(|c| c * (c - 1) / 2).sum();
        assert_eq!(total, 474);
    }
}
