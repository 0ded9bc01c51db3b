//! End-to-end runs: load, prepare, select per strategy, assemble the report.

use rayon::prelude::*;

use crate::baselines::{build_library, kta_exact_select, template_cv_select, BaselineChoice};
use crate::config::{RunConfig, Strategy};
use crate::data::load_csv;
use crate::report::{Aggregates, Counters, DatasetInfo, RunReport, TaskOutcome, TaskRecord, FORMAT_VERSION};
use crate::search::{run_search, Evaluator, PairOutcome, Problem, SearchSettings, TaskSummary};
use crate::Error;

/// Validates `cfg`, loads its dataset and runs its strategy.
pub fn run(cfg: &RunConfig) -> Result<RunReport, Error> {
    cfg.validate()?;
    let ds = load_csv(&cfg.dataset, &cfg.label)?;
    let problem = Problem::prepare(ds, cfg)?;
    Ok(run_strategy(&problem, cfg, cfg.strategy))
}

/// Runs several strategies on one prepared split.
pub fn compare(cfg: &RunConfig, strategies: &[Strategy]) -> Result<Vec<RunReport>, Error> {
    cfg.validate()?;
    for &s in strategies {
        RunConfig { strategy: s, ..cfg.clone() }.validate()?;
    }
    let ds = load_csv(&cfg.dataset, &cfg.label)?;
    let problem = Problem::prepare(ds, cfg)?;
    Ok(strategies.iter().map(|&s| run_strategy(&problem, cfg, s)).collect())
}

fn dataset_info(problem: &Problem) -> DatasetInfo {
    DatasetInfo {
        samples: problem.dataset.len(),
        features: problem.dataset.dim(),
        class_names: problem.dataset.class_names.clone(),
        train_size: problem.split.train.len(),
        test_size: problem.split.test.len(),
        components: problem.encoder.p,
        family_size: problem.family.len(),
    }
}

fn outcome(
    ev: &Evaluator<'_>,
    summary: &TaskSummary,
    prefix: &crate::sim::UploadSequence,
    is_hard: Option<bool>,
    rounds_run: usize,
    evaluations: usize,
    template: Option<String>,
) -> Result<TaskOutcome, String> {
    let budget = match &summary.budget {
        Some(b) => b.clone(),
        None => ev.assess_budget(summary).map_err(|e| e.to_string())?,
    };
    Ok(TaskOutcome {
        sequence: summary.sequence.clone(),
        prefix: prefix.clone(),
        template,
        paulis: summary.paulis.clone(),
        groups: summary.groups,
        shots_per_group: budget.shots_per_group,
        realized_shots: budget.realized_shots,
        ideal_acc: summary.ideal_acc,
        noisy_acc: budget.noisy_acc,
        var_penalty: budget.var_penalty,
        budget_score: budget.budget_score,
        fisher: summary.fisher,
        cosine: summary.cosine.value,
        cosine_degenerate: summary.cosine.degenerate,
        is_hard,
        rounds_run,
        evaluations,
    })
}

fn record(problem: &Problem, index: usize, result: Result<TaskOutcome, String>) -> TaskRecord {
    let t = &problem.tasks[index];
    let (outcome, error) = match result {
        Ok(o) => (Some(o), None),
        Err(e) => (None, Some(e)),
    };
    TaskRecord {
        index,
        pair: t.label(&problem.dataset),
        class_a: t.class_a,
        class_b: t.class_b,
        train_size: t.train_rows.len(),
        test_size: t.test_rows.len(),
        error,
        outcome,
    }
}

/// Runs `strategy` on a prepared problem. Per-task failures are recorded
/// in the report rather than aborting the run.
pub fn run_strategy(problem: &Problem, cfg: &RunConfig, strategy: Strategy) -> RunReport {
    let config = RunConfig {
        strategy,
        ..cfg.clone()
    };
    let ev = Evaluator::new(problem, SearchSettings::for_strategy(&config, strategy));
    let mut counters = Counters::default();
    let (prefix, results): (Option<_>, Vec<Result<TaskOutcome, String>>) = if strategy.is_baseline() {
        let library = build_library(&config.templates);
        let choices: Vec<Result<BaselineChoice, String>> = (0..problem.tasks.len())
            .into_par_iter()
            .map(|t| {
                let r = match strategy {
                    Strategy::TemplateCv => template_cv_select(&ev, t, &library, config.cv_folds, config.seed),
                    _ => kta_exact_select(&ev, t, config.max_rounds),
                };
                r.map_err(|e| e.to_string())
            })
            .collect();
        counters.baseline_candidates = choices.iter().flatten().map(|c| c.candidates).sum();
        counters.search_noise_draws = ev.noise().draws();
        let empty = crate::sim::UploadSequence::empty();
        let results = choices
            .into_par_iter()
            .map(|c| {
                let c = c?;
                let name = c.template.as_ref().map(|t| t.name.clone());
                outcome(&ev, &c.summary, &empty, None, 0, c.candidates, name)
            })
            .collect();
        (None, results)
    } else {
        let search = run_search(&ev);
        counters.global_sequences = search.global.sequences;
        counters.global_evaluations = search.global.evaluations;
        counters.continuation_evaluations = search.continuation_evaluations;
        counters.search_noise_draws = ev.noise().draws();
        let prefix = search.global.prefix.clone();
        let results = search
            .pairs
            .into_par_iter()
            .map(|p: Result<PairOutcome, String>| {
                let p = p?;
                outcome(
                    &ev,
                    &p.final_summary,
                    &prefix,
                    Some(p.is_hard),
                    p.rounds_run,
                    p.evaluations,
                    None,
                )
            })
            .collect();
        (Some(search.global.prefix), results)
    };
    counters.feature_builds = ev.feature_builds();
    let tasks: Vec<TaskRecord> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| record(problem, i, r))
        .collect();
    RunReport {
        format_version: FORMAT_VERSION,
        aggregates: Aggregates::from_tasks(strategy, &tasks),
        config,
        dataset: dataset_info(problem),
        prefix,
        tasks,
        counters,
    }
}
