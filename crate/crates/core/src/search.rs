//! Shared global prefix search, hard-pair detection and pair-specific
//! continuation.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{
    budget_score, noisy_accuracy, pair_rank, rank_cmp, shots_per_group, variance_penalty, BudgetError,
    BudgetEvaluation, BudgetParams, NoiseStream, RankEntry, TaskFeatures,
};
use crate::config::{Regime, RunConfig, Strategy};
use crate::data::{encode_angles, fit_encoder, make_pair_tasks, split, DataError, Dataset, EncoderModel, PairTask, Split};
use crate::discrimination::{
    class_mean_cosine, disc_scores, fisher_score, penalize, select_top_m, DiscriminationError, MeanCosine,
    ScoreParams,
};
use crate::pauli::{enumerate_family, feature_matrix, greedy_group, FeatureMatrix, PauliError, PauliFamily, PauliString};
use crate::probe::{fit_probe, task_accuracy, ProbeConfig, ProbeError};
use crate::sim::{encode, AngleVector, GateBlock, SimError, StateVector, UploadSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Discrimination(#[from] DiscriminationError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
}

/// Data, encoder, angles and tasks shared by every strategy.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dataset: Dataset,
    pub split: Split,
    pub encoder: EncoderModel,
    /// One angle vector per dataset row; the encoder only saw training rows.
    pub angles: Vec<AngleVector>,
    pub tasks: Vec<PairTask>,
    pub family: PauliFamily,
    pub n: usize,
}

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

impl Problem {
    pub fn prepare(dataset: Dataset, cfg: &RunConfig) -> Result<Self, PrepareError> {
        let split = split(&dataset, cfg.test_fraction, cfg.seed)?;
        let train: Vec<&[f64]> = split.train.iter().map(|&r| dataset.features[r].as_slice()).collect();
        let encoder = fit_encoder(&train, cfg.n, cfg.alpha)?;
        let angles = dataset
            .features
            .iter()
            .map(|x| encode_angles(&encoder, x))
            .collect::<Result<Vec<_>, _>>()?;
        let tasks = make_pair_tasks(&dataset, &split)?;
        let family = enumerate_family(cfg.n, cfg.k, &encoder.padded_qubits())?;
        Ok(Self {
            dataset,
            split,
            encoder,
            angles,
            tasks,
            family,
            n: cfg.n,
        })
    }

    pub fn states(&self, seq: &UploadSequence, rows: &[usize]) -> Result<Vec<StateVector>, SimError> {
        rows.iter().map(|&r| encode(seq, &self.angles[r], self.n)).collect()
    }
}

/// Parameters of one search run, derived from a [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub regime: Regime,
    pub full_family: bool,
    pub pair_adaptive: bool,
    pub max_rounds: usize,
    /// Shared rounds; equals `max_rounds` for global strategies.
    pub prefix_rounds: usize,
    pub tau_acc: f64,
    pub tau_cos: f64,
    pub score: ScoreParams,
    pub probe: ProbeConfig,
    pub budget: BudgetParams,
}

impl SearchSettings {
    pub fn for_strategy(cfg: &RunConfig, strategy: Strategy) -> Self {
        let pair_adaptive = strategy.pair_adaptive();
        Self {
            regime: strategy.regime(),
            full_family: strategy.full_family(),
            pair_adaptive,
            max_rounds: cfg.max_rounds,
            prefix_rounds: if pair_adaptive { cfg.prefix_rounds } else { cfg.max_rounds },
            tau_acc: cfg.tau_acc,
            tau_cos: cfg.tau_cos,
            score: cfg.score_params(),
            probe: cfg.probe_config(),
            budget: cfg.budget_params(),
        }
    }
}

/// Everything measured for one `(sequence, task)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSummary {
    pub task: usize,
    pub sequence: UploadSequence,
    /// Family columns of the readout, in selection order.
    pub columns: Vec<usize>,
    pub scores: Vec<f64>,
    pub paulis: Vec<PauliString>,
    pub groups: usize,
    pub ideal_acc: f64,
    pub fisher: f64,
    pub cosine: MeanCosine,
    /// Present when evaluated in the budget regime.
    pub budget: Option<BudgetEvaluation>,
}

impl TaskSummary {
    /// Selection objective of the regime.
    pub fn phi(&self, regime: Regime) -> f64 {
        match (regime, &self.budget) {
            (Regime::Budget, Some(b)) => b.noisy_acc,
            _ => self.ideal_acc,
        }
    }

    pub fn rank_entry(&self) -> RankEntry {
        let b = self.budget.as_ref();
        RankEntry {
            noisy_acc: b.map_or(self.ideal_acc, |b| b.noisy_acc),
            budget_score: b.map_or(self.fisher, |b| b.budget_score),
            ideal_acc: self.ideal_acc,
            groups: self.groups,
            length: self.sequence.len(),
        }
    }
}

/// Caching evaluator. Feature matrices cover every dataset row and the whole
/// family, so one build serves all tasks.
pub struct Evaluator<'p> {
    problem: &'p Problem,
    settings: SearchSettings,
    noise: NoiseStream,
    features: Mutex<HashMap<UploadSequence, Arc<FeatureMatrix>>>,
    summaries: Mutex<HashMap<(UploadSequence, usize), Arc<TaskSummary>>>,
    feature_builds: AtomicUsize,
    summary_builds: AtomicUsize,
}

impl<'p> Evaluator<'p> {
    pub fn new(problem: &'p Problem, settings: SearchSettings) -> Self {
        Self {
            problem,
            noise: NoiseStream::new(settings.budget.seed),
            settings,
            features: Mutex::new(HashMap::new()),
            summaries: Mutex::new(HashMap::new()),
            feature_builds: AtomicUsize::new(0),
            summary_builds: AtomicUsize::new(0),
        }
    }

    pub fn problem(&self) -> &'p Problem {
        self.problem
    }

    pub fn settings(&self) -> &SearchSettings {
        &self.settings
    }

    pub fn noise(&self) -> &NoiseStream {
        &self.noise
    }

    /// Distinct sequences whose feature matrix was built.
    pub fn feature_builds(&self) -> usize {
        self.feature_builds.load(AtomicOrdering::Relaxed)
    }

    /// Distinct `(sequence, task)` pairs evaluated.
    pub fn summary_builds(&self) -> usize {
        self.summary_builds.load(AtomicOrdering::Relaxed)
    }

    pub fn features(&self, seq: &UploadSequence) -> Result<Arc<FeatureMatrix>, SimError> {
        if let Some(f) = self.features.lock().expect("cache lock").get(seq) {
            return Ok(Arc::clone(f));
        }
        let all: Vec<usize> = (0..self.problem.dataset.len()).collect();
        let states = self.problem.states(seq, &all)?;
        let built = Arc::new(feature_matrix(&states, &self.problem.family));
        let mut cache = self.features.lock().expect("cache lock");
        let entry = cache.entry(seq.clone()).or_insert_with(|| {
            self.feature_builds.fetch_add(1, AtomicOrdering::Relaxed);
            built
        });
        Ok(Arc::clone(entry))
    }

    /// Evaluates `seq` on task `task` in the evaluator's regime.
    pub fn evaluate(&self, seq: &UploadSequence, task: usize) -> Result<Arc<TaskSummary>, EvalError> {
        let key = (seq.clone(), task);
        if let Some(s) = self.summaries.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let summary = Arc::new(self.summarize(seq, task)?);
        let mut cache = self.summaries.lock().expect("cache lock");
        let entry = cache.entry(key).or_insert_with(|| {
            self.summary_builds.fetch_add(1, AtomicOrdering::Relaxed);
            summary
        });
        Ok(Arc::clone(entry))
    }

    fn summarize(&self, seq: &UploadSequence, task_idx: usize) -> Result<TaskSummary, EvalError> {
        let problem = self.problem;
        let task = &problem.tasks[task_idx];
        let f = self.features(seq)?;
        let train_all = f.select_rows(&task.train_rows);
        let y_train = task.targets(&problem.dataset, &task.train_rows);
        let y_test = task.targets(&problem.dataset, &task.test_rows);
        let penalized = penalize(&disc_scores(&train_all, &y_train)?, &problem.family, self.settings.score.lambda_cost);
        let (columns, scores) = if self.settings.full_family {
            ((0..problem.family.len()).collect::<Vec<_>>(), penalized)
        } else {
            let r = select_top_m(&penalized, self.settings.score.m);
            (r.columns, r.scores)
        };
        let train = train_all.select_cols(&columns);
        let test = f.select_rows(&task.test_rows).select_cols(&columns);
        let model = fit_probe(&train, &y_train, &self.settings.probe)?;
        let ideal_acc = task_accuracy(&model, &test, &y_test)?;
        let fisher = fisher_score(&train, &y_train, self.settings.score.lambda_fisher)?;
        let cosine = class_mean_cosine(&train, &y_train)?;
        let paulis: Vec<PauliString> = columns.iter().map(|&c| problem.family.get(c).clone()).collect();
        let groups = greedy_group(&paulis).len();
        let mut summary = TaskSummary {
            task: task_idx,
            sequence: seq.clone(),
            columns,
            scores,
            paulis,
            groups,
            ideal_acc,
            fisher,
            cosine,
            budget: None,
        };
        if self.settings.regime == Regime::Budget {
            summary.budget = Some(self.assess_budget(&summary)?);
        }
        Ok(summary)
    }

    /// Finite-shot evaluation of an already selected readout.
    pub fn assess_budget(&self, summary: &TaskSummary) -> Result<BudgetEvaluation, EvalError> {
        let problem = self.problem;
        let task = &problem.tasks[summary.task];
        let b = &self.settings.budget;
        let n_shot = shots_per_group(b.shots, summary.groups)?;
        let f = self.features(&summary.sequence)?;
        let train = f.select_rows(&task.train_rows).select_cols(&summary.columns);
        let test = f.select_rows(&task.test_rows).select_cols(&summary.columns);
        let y_train = task.targets(&problem.dataset, &task.train_rows);
        let y_test = task.targets(&problem.dataset, &task.test_rows);
        let tf = TaskFeatures {
            train: &train,
            train_rows: &task.train_rows,
            train_labels: &y_train,
            test: &test,
            test_rows: &task.test_rows,
            test_labels: &y_test,
            columns: &summary.columns,
        };
        let noisy_acc = noisy_accuracy(&tf, n_shot, b.trials, &self.noise, &self.settings.probe)?;
        let var_penalty = variance_penalty(&train, n_shot);
        Ok(BudgetEvaluation {
            groups: summary.groups,
            shots_per_group: n_shot,
            realized_shots: n_shot * summary.groups as u64,
            noisy_acc,
            var_penalty,
            budget_score: budget_score(
                summary.fisher,
                var_penalty,
                summary.groups,
                summary.columns.len(),
                b.beta,
                b.gamma,
            ),
        })
    }

    /// Needs pair-specific refinement at its current encoder.
    pub fn is_hard(&self, summary: &TaskSummary) -> bool {
        summary.phi(self.settings.regime) < self.settings.tau_acc
            || (!summary.cosine.degenerate && summary.cosine.value >= self.settings.tau_cos)
    }
}

/// Candidate extensions of `incumbent`, in library order.
pub fn extensions(incumbent: &UploadSequence) -> Vec<UploadSequence> {
    GateBlock::LIBRARY.iter().map(|&g| incumbent.extended(g)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalRound {
    pub incumbent: UploadSequence,
    pub mean_phi: f64,
    pub candidate_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalOutcome {
    pub prefix: UploadSequence,
    pub rounds: Vec<GlobalRound>,
    /// Distinct candidate sequences scored.
    pub sequences: usize,
    /// `(sequence, task)` evaluations.
    pub evaluations: usize,
    /// Tasks dropped because a candidate could not be evaluated on them.
    pub failed: BTreeMap<usize, String>,
}

/// Greedy forward search of one encoder shared by `tasks`, scored by the
/// mean objective over tasks. Runs `rounds` rounds and returns the last
/// incumbent.
pub fn global_prefix_search(ev: &Evaluator<'_>, tasks: &[usize], rounds: usize) -> GlobalOutcome {
    let regime = ev.settings().regime;
    let mut active: Vec<usize> = tasks.to_vec();
    let mut failed = BTreeMap::new();
    let mut incumbent = UploadSequence::empty();
    let mut history = Vec::new();
    let mut sequences = 0;
    let mut evaluations = 0;
    for _ in 0..rounds {
        if active.is_empty() {
            break;
        }
        let candidates = extensions(&incumbent);
        sequences += candidates.len();
        // build shared features first so parallel evaluation never races on them
        candidates.par_iter().for_each(|c| {
            let _ = ev.features(c);
        });
        let jobs: Vec<(usize, usize)> = (0..candidates.len())
            .flat_map(|c| active.iter().map(move |&t| (c, t)))
            .collect();
        evaluations += jobs.len();
        let results: Vec<Result<f64, EvalError>> = jobs
            .par_iter()
            .map(|&(c, t)| ev.evaluate(&candidates[c], t).map(|s| s.phi(regime)))
            .collect();
        let mut table: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (&(c, t), r) in jobs.iter().zip(results) {
            match r {
                Ok(v) => {
                    table.insert((c, t), v);
                }
                Err(e) => {
                    failed.entry(t).or_insert_with(|| e.to_string());
                }
            }
        }
        active.retain(|t| !failed.contains_key(t));
        if active.is_empty() {
            break;
        }
        let means: Vec<f64> = (0..candidates.len())
            .map(|c| active.iter().map(|&t| table[&(c, t)]).sum::<f64>() / active.len() as f64)
            .collect();
        // equal lengths within a round: ties go to library order
        let mut best = 0;
        for (i, m) in means.iter().enumerate() {
            if *m > means[best] {
                best = i;
            }
        }
        incumbent = candidates[best].clone();
        history.push(GlobalRound {
            incumbent: incumbent.clone(),
            mean_phi: means[best],
            candidate_means: means,
        });
    }
    GlobalOutcome {
        prefix: incumbent,
        rounds: history,
        sequences,
        evaluations,
        failed,
    }
}

/// Result of refining one task after the shared prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub task: usize,
    pub is_hard: bool,
    pub prefix_summary: Arc<TaskSummary>,
    pub final_summary: Arc<TaskSummary>,
    pub rounds_run: usize,
    pub evaluations: usize,
}

fn round_winner(regime: Regime, evaluated: &[Arc<TaskSummary>]) -> Option<usize> {
    if evaluated.is_empty() {
        return None;
    }
    match regime {
        Regime::Ideal => {
            let mut best = 0;
            for (i, s) in evaluated.iter().enumerate() {
                let b = &evaluated[best];
                if s.ideal_acc > b.ideal_acc || (s.ideal_acc == b.ideal_acc && s.sequence.len() < b.sequence.len()) {
                    best = i;
                }
            }
            Some(best)
        }
        Regime::Budget => {
            let entries: Vec<RankEntry> = evaluated.iter().map(|s| s.rank_entry()).collect();
            pair_rank(&entries).first().copied()
        }
    }
}

fn improves(regime: Regime, challenger: &TaskSummary, incumbent: &TaskSummary) -> bool {
    match regime {
        Regime::Ideal => challenger.ideal_acc > incumbent.ideal_acc,
        Regime::Budget => rank_cmp(&challenger.rank_entry(), &incumbent.rank_entry()).is_lt(),
    }
}

/// Pair-specific continuation from the prefix. Stops when the objective
/// reaches `τ_acc`, when a round brings no improvement, or after round `R`.
pub fn continue_pair(ev: &Evaluator<'_>, task: usize, prefix: &Arc<TaskSummary>) -> PairOutcome {
    let s = *ev.settings();
    let is_hard = ev.is_hard(prefix);
    let mut incumbent = Arc::clone(prefix);
    let mut rounds_run = 0;
    let mut evaluations = 0;
    if is_hard {
        for _ in s.prefix_rounds + 1..=s.max_rounds {
            if incumbent.phi(s.regime) >= s.tau_acc {
                break;
            }
            let candidates = extensions(&incumbent.sequence);
            rounds_run += 1;
            evaluations += candidates.len();
            // candidates that cannot be evaluated are not eligible
            let evaluated: Vec<Arc<TaskSummary>> =
                candidates.iter().filter_map(|c| ev.evaluate(c, task).ok()).collect();
            match round_winner(s.regime, &evaluated) {
                Some(w) if improves(s.regime, &evaluated[w], &incumbent) => {
                    incumbent = Arc::clone(&evaluated[w]);
                }
                _ => break,
            }
        }
    }
    PairOutcome {
        task,
        is_hard,
        prefix_summary: Arc::clone(prefix),
        final_summary: incumbent,
        rounds_run,
        evaluations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub global: GlobalOutcome,
    /// One entry per task; `Err` holds the failure message.
    pub pairs: Vec<Result<PairOutcome, String>>,
    pub continuation_evaluations: usize,
}

/// Global phase on all tasks, then (for pair-adaptive settings) continuation
/// on each hard task in parallel.
pub fn run_search(ev: &Evaluator<'_>) -> SearchOutcome {
    let s = *ev.settings();
    let all: Vec<usize> = (0..ev.problem().tasks.len()).collect();
    let global = global_prefix_search(ev, &all, s.prefix_rounds);
    let pairs: Vec<Result<PairOutcome, String>> = all
        .par_iter()
        .map(|&t| {
            if let Some(e) = global.failed.get(&t) {
                return Err(e.clone());
            }
            let prefix = ev.evaluate(&global.prefix, t).map_err(|e| e.to_string())?;
            if s.pair_adaptive {
                Ok(continue_pair(ev, t, &prefix))
            } else {
                Ok(PairOutcome {
                    task: t,
                    is_hard: ev.is_hard(&prefix),
                    final_summary: Arc::clone(&prefix),
                    prefix_summary: prefix,
                    rounds_run: 0,
                    evaluations: 0,
                })
            }
        })
        .collect();
    let continuation_evaluations = pairs.iter().flatten().map(|p| p.evaluations).sum();
    SearchOutcome {
        global,
        pairs,
        continuation_evaluations,
    }
}
