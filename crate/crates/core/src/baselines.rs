//! Comparators: template-library cross-validation and exhaustive
//! kernel-target-alignment selection.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::FeatureMatrix;
use crate::probe::{fit_probe, task_accuracy, ProbeConfig, ProbeError};
use crate::search::{EvalError, Evaluator, TaskSummary};
use crate::sim::{GateBlock, SimError, StateVector, UploadSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("template library is empty")]
    EmptyLibrary,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("no cross-validation fold could be fitted")]
    NoUsableFold,
    #[error("exhaustive enumeration supports depth 1..=3, got {0}")]
    DepthOutOfRange(usize),
    #[error("malformed template `{0}`; expected NAME:BLOCK+BLOCK")]
    MalformedTemplate(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

/// A named library entry, written `NAME:BLOCK+BLOCK` in config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct TemplateSpec {
    pub name: String,
    pub sequence: UploadSequence,
}

impl TemplateSpec {
    pub fn new(name: &str, blocks: &[GateBlock]) -> Self {
        Self {
            name: name.to_string(),
            sequence: UploadSequence::new(blocks.to_vec()),
        }
    }
}

impl fmt::Display for TemplateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.name, self.sequence)
    }
}

impl FromStr for TemplateSpec {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, seq) = s
            .split_once(':')
            .ok_or_else(|| BaselineError::MalformedTemplate(s.to_string()))?;
        let sequence: UploadSequence = seq
            .parse()
            .map_err(|_| BaselineError::MalformedTemplate(s.to_string()))?;
        if name.trim().is_empty() || sequence.is_empty() {
            return Err(BaselineError::MalformedTemplate(s.to_string()));
        }
        Ok(Self {
            name: name.trim().to_string(),
            sequence,
        })
    }
}

impl From<TemplateSpec> for String {
    fn from(t: TemplateSpec) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TemplateSpec {
    type Error = BaselineError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub fn default_templates() -> Vec<TemplateSpec> {
    use GateBlock::*;
    vec![
        TemplateSpec::new("rx", &[Rx]),
        TemplateSpec::new("ry", &[Ry]),
        TemplateSpec::new("rz", &[Rz]),
        TemplateSpec::new("ry_cz", &[Ry, CzRing]),
        TemplateSpec::new("ry_cnot", &[Ry, CnotRing]),
        TemplateSpec::new("ry_cz_ry", &[Ry, CzRing, Ry]),
        TemplateSpec::new("rz_crz", &[Rz, CrzRing]),
        TemplateSpec::new("rx_cry", &[Rx, CryRing]),
    ]
}

/// Library entry with its position in the hardware-cost ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub sequence: UploadSequence,
    pub cost_rank: usize,
}

/// Assigns unique cost ranks: total block cost, then library position.
pub fn build_library(specs: &[TemplateSpec]) -> Vec<Template> {
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by_key(|&i| (specs[i].sequence.hardware_cost(), i));
    let mut rank = vec![0; specs.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    specs
        .iter()
        .zip(rank)
        .map(|(s, cost_rank)| Template {
            name: s.name.clone(),
            sequence: s.sequence.clone(),
            cost_rank,
        })
        .collect()
}

/// Symmetric fidelity kernel `K_ij = |⟨ψ_i|ψ_j⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
}

impl KernelMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: &self.values * c,
        }
    }
}

pub fn fidelity_kernel(states: &[StateVector]) -> KernelMatrix {
    let n = states.len();
    let mut values = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        values[(i, i)] = 1.0;
        for j in 0..i {
            let k = states[i].inner(&states[j]).norm_sqr().min(1.0);
            values[(i, j)] = k;
            values[(j, i)] = k;
        }
    }
    KernelMatrix { values }
}

/// Alignment of the double-centered kernel with `yyᵀ`, `y ∈ {−1, +1}`.
/// A kernel that centers to zero aligns to 0.
pub fn centered_kta(k: &KernelMatrix, labels: &[bool]) -> f64 {
    let n = k.len();
    assert_eq!(labels.len(), n, "label count");
    if n == 0 {
        return 0.0;
    }
    let m = &k.values;
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let total = row_means.iter().sum::<f64>() / nf;
    let y: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let mut inner = 0.0;
    let mut norm_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            // column means equal row means by symmetry
            let c = m[(i, j)] - row_means[i] - row_means[j] + total;
            inner += c * y[i] * y[j];
            norm_sq += c * c;
        }
    }
    let norm = norm_sq.sqrt();
    if norm <= 1e-12 * nf {
        return 0.0;
    }
    // ‖yyᵀ‖_F = N
    (inner / (norm * nf)).clamp(-1.0, 1.0)
}

fn task_kta(ev: &Evaluator<'_>, seq: &UploadSequence, task: usize) -> Result<f64, SimError> {
    let problem = ev.problem();
    let t = &problem.tasks[task];
    let states = problem.states(seq, &t.train_rows)?;
    Ok(centered_kta(&fidelity_kernel(&states), &t.targets(&problem.dataset, &t.train_rows)))
}

/// Stratified fold index per row, shuffled within each class.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in [false, true] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng);
        for (pos, r) in rows.into_iter().enumerate() {
            assignment[r] = pos % folds;
        }
    }
    assignment
}

/// Mean held-out accuracy. Folds whose training part lacks a class are skipped.
pub fn cv_accuracy(
    f: &FeatureMatrix,
    labels: &[bool],
    folds: usize,
    seed: u64,
    probe: &ProbeConfig,
) -> Result<f64, BaselineError> {
    let assignment = stratified_folds(labels, folds, seed);
    let mut total = 0.0;
    let mut used = 0;
    for fold in 0..folds {
        let held: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == fold).collect();
        let kept: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != fold).collect();
        if held.is_empty() {
            continue;
        }
        let y_kept: Vec<bool> = kept.iter().map(|&i| labels[i]).collect();
        let y_held: Vec<bool> = held.iter().map(|&i| labels[i]).collect();
        let model = match fit_probe(&f.select_rows(&kept), &y_kept, probe) {
            Ok(m) => m,
            Err(ProbeError::SingleClass) => continue,
            Err(e) => return Err(e.into()),
        };
        total += task_accuracy(&model, &f.select_rows(&held), &y_held)?;
        used += 1;
    }
    if used == 0 {
        return Err(BaselineError::NoUsableFold);
    }
    Ok(total / used as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateScore {
    pub template: Template,
    pub cv_acc: f64,
    pub kta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineChoice {
    pub sequence: UploadSequence,
    pub template: Option<Template>,
    pub summary: std::sync::Arc<TaskSummary>,
    /// Candidates scored to make the choice.
    pub candidates: usize,
}

/// Index of the best template: CV accuracy, then KTA, then lower cost rank.
pub fn pick_template(scores: &[TemplateScore]) -> Option<usize> {
    (0..scores.len()).min_by(|&i, &j| {
        let (a, b) = (&scores[i], &scores[j]);
        b.cv_acc
            .total_cmp(&a.cv_acc)
            .then(b.kta.total_cmp(&a.kta))
            .then(a.template.cost_rank.cmp(&b.template.cost_rank))
    })
}

/// The evaluator must use the full family in the ideal regime.
pub fn template_cv_select(
    ev: &Evaluator<'_>,
    task: usize,
    library: &[Template],
    folds: usize,
    seed: u64,
) -> Result<BaselineChoice, BaselineError> {
    if library.is_empty() {
        return Err(BaselineError::EmptyLibrary);
    }
    if folds < 2 {
        return Err(BaselineError::TooFewFolds(folds));
    }
    let problem = ev.problem();
    let t = &problem.tasks[task];
    let y_train = t.targets(&problem.dataset, &t.train_rows);
    let probe = ev.settings().probe;
    let scores = library
        .par_iter()
        .map(|tpl| -> Result<TemplateScore, BaselineError> {
            let f = ev.features(&tpl.sequence)?.select_rows(&t.train_rows);
            Ok(TemplateScore {
                template: tpl.clone(),
                cv_acc: cv_accuracy(&f, &y_train, folds, seed, &probe)?,
                kta: task_kta(ev, &tpl.sequence, task)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = pick_template(&scores).expect("library is non-empty");
    let template = scores[best].template.clone();
    Ok(BaselineChoice {
        sequence: template.sequence.clone(),
        summary: ev.evaluate(&template.sequence, task)?,
        template: Some(template),
        candidates: library.len(),
    })
}

/// Every sequence of length `1..=depth`, shorter first, then library order.
pub fn enumerate_sequences(depth: usize) -> Vec<UploadSequence> {
    let mut out = Vec::new();
    let mut layer = vec![UploadSequence::empty()];
    for _ in 0..depth {
        layer = layer
            .iter()
            .flat_map(|s| GateBlock::LIBRARY.iter().map(move |&g| s.extended(g)))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Highest training-split KTA over all sequences up to `depth`; ties go to
/// lower hardware cost, then shorter length, then enumeration order.
pub fn kta_exact_select(ev: &Evaluator<'_>, task: usize, depth: usize) -> Result<BaselineChoice, BaselineError> {
    if !(1..=3).contains(&depth) {
        return Err(BaselineError::DepthOutOfRange(depth));
    }
    let candidates = enumerate_sequences(depth);
    let ktas = candidates
        .par_iter()
        .map(|s| task_kta(ev, s, task))
        .collect::<Result<Vec<f64>, _>>()?;
    let best = (0..candidates.len())
        .min_by(|&i, &j| {
            ktas[j]
                .total_cmp(&ktas[i])
                .then(candidates[i].hardware_cost().cmp(&candidates[j].hardware_cost()))
                .then(candidates[i].len().cmp(&candidates[j].len()))
                .then(i.cmp(&j))
        })
        .expect("enumeration is non-empty");
    let sequence = candidates[best].clone();
    Ok(BaselineChoice {
        summary: ev.evaluate(&sequence, task)?,
        sequence,
        template: None,
        candidates: candidates.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn plus() -> StateVector {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_amplitudes(1, vec![Complex64::new(h, 0.0), Complex64::new(h, 0.0)]).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let zero = StateVector::zero(1).unwrap();
        let same = fidelity_kernel(&[zero.clone(), zero.clone()]);
        assert!(same.values().iter().all(|&v| v == 1.0));
        let one = StateVector::from_amplitudes(1, vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]).unwrap();
        let ortho = fidelity_kernel(&[zero.clone(), one]);
        assert_eq!(ortho.values(), &DMatrix::identity(2, 2));
        let half = fidelity_kernel(&[zero, plus()]);
        assert!((half.values()[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn alignment_examples() {
        let y = [true, true, false, false];
        let ideal = DMatrix::from_fn(4, 4, |i, j| if y[i] == y[j] { 1.0 } else { 0.0 });
        let k = KernelMatrix { values: ideal };
        assert!((centered_kta(&k, &y) - 1.0).abs() < 1e-12);
        let flipped: Vec<bool> = y.iter().map(|b| !b).collect();
        assert!((centered_kta(&k, &flipped) - centered_kta(&k, &y)).abs() < 1e-15);
        let constant = KernelMatrix {
            values: DMatrix::from_element(4, 4, 0.7),
        };
        assert_eq!(centered_kta(&constant, &y), 0.0);
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(enumerate_sequences(1).len(), 8);
        assert_eq!(enumerate_sequences(3).len(), 584);
        let seqs = enumerate_sequences(2);
        assert_eq!(seqs[8].to_string(), "RX+RX");
        assert_eq!(seqs[9].to_string(), "RX+RY");
    }

    #[test]
    fn library_cost_ranks_are_unique() {
        let lib = build_library(&default_templates());
        let mut ranks: Vec<usize> = lib.iter().map(|t| t.cost_rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (0..8).collect::<Vec<_>>());
        assert_eq!(lib[0].cost_rank, 0);
        assert_eq!(lib[7].cost_rank, 7);
    }

    #[test]
    fn template_tie_breaks() {
        let lib = build_library(&default_templates()[..2]);
        let s = |i: usize, cv: f64, kta: f64| TemplateScore {
            template: lib[i].clone(),
            cv_acc: cv,
            kta,
        };
        assert_eq!(pick_template(&[s(0, 0.9, 0.1), s(1, 0.8, 0.9)]), Some(0));
        assert_eq!(pick_template(&[s(0, 0.9, 0.6), s(1, 0.9, 0.4)]), Some(0));
        assert_eq!(pick_template(&[s(1, 0.9, 0.5), s(0, 0.9, 0.5)]), Some(1));
        assert_eq!(pick_template(&[s(0, 0.5, 0.5)]), Some(0));
    }

    #[test]
    fn template_text_form() {
        let t: TemplateSpec = "reup:RY+CZ_RING+RY".parse().unwrap();
        assert_eq!(t.sequence.len(), 3);
        assert_eq!(t.to_string(), "reup:RY+CZ_RING+RY");
        assert!("noseq".parse::<TemplateSpec>().is_err());
        assert!("x:".parse::<TemplateSpec>().is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<bool> = (0..23).map(|i| i % 3 == 0).collect();
        let a = stratified_folds(&labels, 5, 1);
        for fold in 0..5 {
            let pos = (0..23).filter(|&i| a[i] == fold && labels[i]).count();
            assert!((1..=2).contains(&pos));
        }
        assert_eq!(a, stratified_folds(&labels, 5, 1));
    }
}
