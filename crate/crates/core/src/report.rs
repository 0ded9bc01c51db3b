//! Run reports: per-task records as JSON lines plus a flat TOML summary.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{RunConfig, Strategy};
use crate::pauli::PauliString;
use crate::sim::UploadSequence;

pub const FORMAT_VERSION: u32 = 1;
pub const TASKS_FILE: &str = "tasks.jsonl";
pub const SUMMARY_FILE: &str = "summary.toml";
/// Accuracy target of the 95% rate.
pub const RATE_TARGET: f64 = 0.95;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{file} line {line}: {source}")]
    Json {
        file: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("summary: {0}")]
    TomlRead(#[from] toml::de::Error),
    #[error("summary: {0}")]
    TomlWrite(#[from] toml::ser::Error),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("{0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub samples: usize,
    pub features: usize,
    pub class_names: Vec<String>,
    pub train_size: usize,
    pub test_size: usize,
    /// PCA components actually used (`p ≤ n`).
    pub components: usize,
    /// Family size after excluding padded qubits.
    pub family_size: usize,
}

/// Metrics of one successfully evaluated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub sequence: UploadSequence,
    pub prefix: UploadSequence,
    pub template: Option<String>,
    pub paulis: Vec<PauliString>,
    pub groups: usize,
    pub shots_per_group: u64,
    pub realized_shots: u64,
    pub ideal_acc: f64,
    pub noisy_acc: f64,
    pub var_penalty: f64,
    pub budget_score: f64,
    pub fisher: f64,
    pub cosine: f64,
    pub cosine_degenerate: bool,
    /// Absent for baselines, which have no prefix.
    pub is_hard: Option<bool>,
    pub rounds_run: usize,
    /// Pair-specific candidate evaluations (continuation or baseline scoring).
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub index: usize,
    pub pair: String,
    pub class_a: usize,
    pub class_b: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub error: Option<String>,
    pub outcome: Option<TaskOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    /// Distinct sequences scored by the shared global phase.
    pub global_sequences: usize,
    pub global_evaluations: usize,
    pub continuation_evaluations: usize,
    pub baseline_candidates: usize,
    pub feature_builds: usize,
    /// Normal draws consumed while selecting circuits.
    pub search_noise_draws: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub task_count: usize,
    pub failed_tasks: usize,
    pub mean_ideal_acc: f64,
    pub mean_noisy_acc: f64,
    pub rate95_ideal: f64,
    pub rate95_noisy: f64,
    /// Rate on the accuracy the strategy ranks by (`ranking_metric`).
    pub rate95_ranking: f64,
    pub ranking_metric: String,
    pub mean_length: f64,
    pub mean_paulis: f64,
    pub mean_groups: f64,
    pub mean_shots_per_group: f64,
    pub hard_tasks: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

impl Aggregates {
    pub fn from_tasks(strategy: Strategy, tasks: &[TaskRecord]) -> Self {
        let ok: Vec<&TaskOutcome> = tasks.iter().filter_map(|t| t.outcome.as_ref()).collect();
        let rate = |f: fn(&TaskOutcome) -> f64| mean(ok.iter().map(|o| if f(o) >= RATE_TARGET { 1.0 } else { 0.0 }));
        let rate95_ideal = rate(|o| o.ideal_acc);
        let rate95_noisy = rate(|o| o.noisy_acc);
        let budget = strategy.regime() == crate::config::Regime::Budget;
        Self {
            task_count: tasks.len(),
            failed_tasks: tasks.len() - ok.len(),
            mean_ideal_acc: mean(ok.iter().map(|o| o.ideal_acc)),
            mean_noisy_acc: mean(ok.iter().map(|o| o.noisy_acc)),
            rate95_ideal,
            rate95_noisy,
            rate95_ranking: if budget { rate95_noisy } else { rate95_ideal },
            ranking_metric: if budget { "noisy" } else { "ideal" }.to_string(),
            mean_length: mean(ok.iter().map(|o| o.sequence.len() as f64)),
            mean_paulis: mean(ok.iter().map(|o| o.paulis.len() as f64)),
            mean_groups: mean(ok.iter().map(|o| o.groups as f64)),
            mean_shots_per_group: mean(ok.iter().map(|o| o.shots_per_group as f64)),
            hard_tasks: ok.iter().filter(|o| o.is_hard == Some(true)).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub config: RunConfig,
    pub dataset: DatasetInfo,
    /// Shared sequence of the global phase; absent for baselines.
    pub prefix: Option<UploadSequence>,
    pub tasks: Vec<TaskRecord>,
    pub aggregates: Aggregates,
    pub counters: Counters,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header { format_version: u32, config: RunConfig },
    Task(TaskRecord),
}

/// Flat summary document: config echo, dataset info, aggregates and
/// counters share one namespace.
#[derive(Serialize, Deserialize)]
struct Summary {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prefix: Option<UploadSequence>,
    samples: usize,
    features: usize,
    class_names: Vec<String>,
    train_size: usize,
    test_size: usize,
    components: usize,
    family_size: usize,
    #[serde(flatten)]
    aggregates: Aggregates,
    #[serde(flatten)]
    counters: Counters,
    #[serde(flatten)]
    config: RunConfig,
}

impl RunReport {
    pub fn tasks_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Line::Header {
            format_version: self.format_version,
            config: self.config.clone(),
        };
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for t in &self.tasks {
            out.push_str(&serde_json::to_string(&Line::Task(t.clone())).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn summary_toml(&self) -> Result<String, ReportError> {
        let d = &self.dataset;
        let s = Summary {
            format_version: self.format_version,
            prefix: self.prefix.clone(),
            samples: d.samples,
            features: d.features,
            class_names: d.class_names.clone(),
            train_size: d.train_size,
            test_size: d.test_size,
            components: d.components,
            family_size: d.family_size,
            aggregates: self.aggregates.clone(),
            counters: self.counters.clone(),
            config: self.config.clone(),
        };
        Ok(toml::to_string(&s)?)
    }

    /// Writes `tasks.jsonl` and `summary.toml` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), ReportError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join(TASKS_FILE))?;
        f.write_all(self.tasks_jsonl().as_bytes())?;
        fs::write(dir.join(SUMMARY_FILE), self.summary_toml()?)?;
        Ok(())
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self, ReportError> {
        let dir = dir.as_ref();
        let summary: Summary = toml::from_str(&fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
        if summary.format_version != FORMAT_VERSION {
            return Err(ReportError::Version(summary.format_version));
        }
        let file = fs::File::open(dir.join(TASKS_FILE))?;
        let mut header = None;
        let mut tasks = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|source| ReportError::Json {
                file: TASKS_FILE.to_string(),
                line: i + 1,
                source,
            })?;
            match parsed {
                Line::Header { format_version, config } => {
                    if format_version != FORMAT_VERSION {
                        return Err(ReportError::Version(format_version));
                    }
                    header = Some(config);
                }
                Line::Task(t) => tasks.push(t),
            }
        }
        let config = header.ok_or_else(|| ReportError::Malformed("tasks file has no header".into()))?;
        if config != summary.config {
            return Err(ReportError::Malformed("config echo differs between files".into()));
        }
        Ok(Self {
            format_version: summary.format_version,
            config,
            dataset: DatasetInfo {
                samples: summary.samples,
                features: summary.features,
                class_names: summary.class_names,
                train_size: summary.train_size,
                test_size: summary.test_size,
                components: summary.components,
                family_size: summary.family_size,
            },
            prefix: summary.prefix,
            tasks,
            aggregates: summary.aggregates,
            counters: summary.counters,
        })
    }
}

/// Aggregate table in the column order Ideal, Noisy, 95% rate, Len, Paulis,
/// Groups.
pub fn comparison_table(reports: &[RunReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<28} {:>9} {:>9} {:>9} {:>6} {:>7} {:>7}  {}\n",
        "strategy", "ideal", "noisy", "95%rate", "len", "paulis", "groups", "rate on"
    ));
    for r in reports {
        let a = &r.aggregates;
        out.push_str(&format!(
            "{:<28} {:>9.4} {:>9.4} {:>9.4} {:>6.2} {:>7.2} {:>7.2}  {}\n",
            r.config.strategy.name(),
            a.mean_ideal_acc,
            a.mean_noisy_acc,
            a.rate95_ranking,
            a.mean_length,
            a.mean_paulis,
            a.mean_groups,
            a.ranking_metric
        ));
    }
    out
}

/// Human-readable listing of a report.
pub fn render(report: &RunReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    out.push_str(&format!("dataset   {} (label `{}`)\n", c.dataset, c.label));
    out.push_str(&format!(
        "strategy  {}  seed {}  n={} k={} m={} R={} R0={}\n",
        c.strategy, c.seed, c.n, c.k, c.m, c.max_rounds, c.prefix_rounds
    ));
    if let Some(p) = &report.prefix {
        out.push_str(&format!("prefix    {p}\n"));
    }
    out.push('\n');
    for t in &report.tasks {
        match (&t.outcome, &t.error) {
            (Some(o), _) => out.push_str(&format!(
                "{:<32} {:<28} ideal {:.4} noisy {:.4} paulis {:>2} groups {:>2}{}\n",
                t.pair,
                o.sequence.to_string(),
                o.ideal_acc,
                o.noisy_acc,
                o.paulis.len(),
                o.groups,
                if o.is_hard == Some(true) { "  hard" } else { "" }
            )),
            (None, Some(e)) => out.push_str(&format!("{:<32} FAILED: {e}\n", t.pair)),
            (None, None) => out.push_str(&format!("{:<32} (no result)\n", t.pair)),
        }
    }
    out.push('\n');
    out.push_str(&comparison_table(std::slice::from_ref(report)));
    out
}
