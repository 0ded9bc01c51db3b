//! Run configuration: defaults, flat key-value file format and validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{default_templates, TemplateSpec};
use crate::budget::BudgetParams;
use crate::discrimination::ScoreParams;
use crate::probe::ProbeConfig;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "UPLOAD_SELECT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("unknown strategy `{given}`; valid strategies: {}", Strategy::NAMES.join(", "))]
    UnknownStrategy { given: String },
    #[error("config file {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    FullGlobalIdeal,
    SparseGlobalIdeal,
    SparsePairAdaptiveIdeal,
    SparsePairAdaptiveBudget,
    FullPairAdaptiveIdeal,
    TemplateCv,
    KtaExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Ideal,
    Budget,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::FullGlobalIdeal,
        Strategy::SparseGlobalIdeal,
        Strategy::SparsePairAdaptiveIdeal,
        Strategy::SparsePairAdaptiveBudget,
        Strategy::FullPairAdaptiveIdeal,
        Strategy::TemplateCv,
        Strategy::KtaExact,
    ];

    pub const NAMES: [&'static str; 7] = [
        "full_global_ideal",
        "sparse_global_ideal",
        "sparse_pair_adaptive_ideal",
        "sparse_pair_adaptive_budget",
        "full_pair_adaptive_ideal",
        "template_cv",
        "kta_exact",
    ];

    pub fn name(self) -> &'static str {
        Self::NAMES[self as usize]
    }

    pub fn full_family(self) -> bool {
        matches!(
            self,
            Strategy::FullGlobalIdeal | Strategy::FullPairAdaptiveIdeal | Strategy::TemplateCv | Strategy::KtaExact
        )
    }

    /// Pair-specific continuation after the shared prefix.
    pub fn pair_adaptive(self) -> bool {
        matches!(
            self,
            Strategy::SparsePairAdaptiveIdeal | Strategy::SparsePairAdaptiveBudget | Strategy::FullPairAdaptiveIdeal
        )
    }

    pub fn regime(self) -> Regime {
        if self == Strategy::SparsePairAdaptiveBudget {
            Regime::Budget
        } else {
            Regime::Ideal
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Strategy::TemplateCv | Strategy::KtaExact)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Strategy::NAMES
            .iter()
            .position(|&n| n == s)
            .map(|i| Strategy::ALL[i])
            .ok_or_else(|| ConfigError::UnknownStrategy { given: s.to_string() })
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = ConfigError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Every knob that affects results. Serialized verbatim into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub label: String,
    pub strategy: Strategy,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub max_rounds: usize,
    pub prefix_rounds: usize,
    pub tau_acc: f64,
    pub tau_cos: f64,
    pub alpha: f64,
    pub shots: u64,
    pub trials: usize,
    pub probe_iterations: usize,
    /// Ridge strength of the probe; absent means `1 / N_train`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_rho: Option<f64>,
    pub seed: u64,
    pub lambda_cost: f64,
    pub lambda_fisher: f64,
    pub beta: f64,
    pub gamma: f64,
    pub test_fraction: f64,
    pub cv_folds: usize,
    pub templates: Vec<TemplateSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            label: "label".to_string(),
            strategy: Strategy::SparsePairAdaptiveIdeal,
            n: 4,
            k: 2,
            m: 12,
            max_rounds: 3,
            prefix_rounds: 1,
            tau_acc: 0.95,
            tau_cos: 0.99,
            alpha: std::f64::consts::FRAC_PI_2,
            shots: 2048,
            trials: 5,
            probe_iterations: 100,
            probe_rho: None,
            seed: 0,
            lambda_cost: 0.1,
            lambda_fisher: 1e-3,
            beta: 1.0,
            gamma: 0.1,
            test_fraction: 0.3,
            cv_folds: 5,
            templates: default_templates(),
        }
    }
}

/// Optional overrides, as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub dataset: Option<String>,
    pub label: Option<String>,
    pub strategy: Option<String>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub max_rounds: Option<usize>,
    pub prefix_rounds: Option<usize>,
    pub tau_acc: Option<f64>,
    pub tau_cos: Option<f64>,
    pub alpha: Option<f64>,
    pub shots: Option<u64>,
    pub trials: Option<usize>,
    pub probe_iterations: Option<usize>,
    pub probe_rho: Option<f64>,
    pub seed: Option<u64>,
    pub lambda_cost: Option<f64>,
    pub lambda_fisher: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub test_fraction: Option<f64>,
    pub cv_folds: Option<usize>,
    pub templates: Option<Vec<TemplateSpec>>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Applies every `Some` field; later calls win.
    pub fn apply(self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        set!(dataset, label, n, k, m, max_rounds, prefix_rounds, tau_acc, tau_cos, alpha, shots, trials,
             probe_iterations, seed, lambda_cost, lambda_fisher, beta, gamma, test_fraction, cv_folds, templates);
        if let Some(rho) = self.probe_rho {
            cfg.probe_rho = Some(rho);
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s.parse()?;
        }
        Ok(())
    }
}

/// False for NaN.
fn non_negative(v: f64) -> bool {
    v >= 0.0
}

fn positive(v: f64) -> bool {
    v > 0.0
}

impl RunConfig {
    /// Lists every violated constraint at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut bad = Vec::new();
        if self.n == 0 || self.n > crate::sim::MAX_QUBITS {
            bad.push(format!("n must be in 1..={}, got {}", crate::sim::MAX_QUBITS, self.n));
        }
        if self.k < 1 || self.k > self.n {
            bad.push(format!("k must be in 1..=n, got {}", self.k));
        }
        if self.m < 1 {
            bad.push("m must be at least 1".to_string());
        }
        if self.max_rounds < 1 {
            bad.push("max_rounds must be at least 1".to_string());
        }
        if self.prefix_rounds < 1 || self.prefix_rounds > self.max_rounds {
            bad.push(format!(
                "prefix_rounds must be in 1..=max_rounds ({}), got {}",
                self.max_rounds, self.prefix_rounds
            ));
        }
        if !(self.tau_acc > 0.0 && self.tau_acc <= 1.0) {
            bad.push(format!("tau_acc must be in (0, 1], got {}", self.tau_acc));
        }
        if !(-1.0..=1.0).contains(&self.tau_cos) {
            bad.push(format!("tau_cos must be in [-1, 1], got {}", self.tau_cos));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            bad.push(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.shots < 1 {
            bad.push("shots must be at least 1".to_string());
        }
        if self.trials < 1 {
            bad.push("trials must be at least 1".to_string());
        }
        if self.probe_iterations < 1 {
            bad.push("probe_iterations must be at least 1".to_string());
        }
        if let Some(rho) = self.probe_rho {
            if !non_negative(rho) {
                bad.push(format!("probe_rho must be non-negative, got {rho}"));
            }
        }
        if !non_negative(self.lambda_cost) {
            bad.push(format!("lambda_cost must be non-negative, got {}", self.lambda_cost));
        }
        if !positive(self.lambda_fisher) {
            bad.push(format!("lambda_fisher must be positive, got {}", self.lambda_fisher));
        }
        if !non_negative(self.beta) {
            bad.push(format!("beta must be non-negative, got {}", self.beta));
        }
        if !non_negative(self.gamma) {
            bad.push(format!("gamma must be non-negative, got {}", self.gamma));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            bad.push(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        if self.cv_folds < 2 {
            bad.push(format!("cv_folds must be at least 2, got {}", self.cv_folds));
        }
        if self.strategy == Strategy::KtaExact && self.max_rounds > 3 {
            bad.push(format!("kta_exact enumerates up to 3 rounds, got max_rounds={}", self.max_rounds));
        }
        if self.strategy == Strategy::TemplateCv && self.templates.is_empty() {
            bad.push("template_cv needs a non-empty template library".to_string());
        }
        if self.dataset.is_empty() {
            bad.push("dataset path is required".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(bad))
        }
    }

    pub fn score_params(&self) -> ScoreParams {
        ScoreParams {
            lambda_cost: self.lambda_cost,
            lambda_fisher: self.lambda_fisher,
            m: self.m,
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            iterations: self.probe_iterations,
            rho: self.probe_rho,
        }
    }

    pub fn budget_params(&self) -> BudgetParams {
        BudgetParams {
            shots: self.shots,
            beta: self.beta,
            gamma: self.gamma,
            trials: self.trials,
            seed: self.seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = RunConfig::default();
        assert_eq!((c.n, c.k, c.m, c.max_rounds), (4, 2, 12, 3));
        assert_eq!(c.tau_acc, 0.95);
        assert_eq!(c.shots, 2048);
        assert_eq!(c.trials, 5);
        assert_eq!(c.probe_iterations, 100);
        assert_eq!(crate::pauli::family_size(c.n, c.k), 66);
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = RunConfig {
            k: 9,
            prefix_rounds: 5,
            tau_acc: 0.0,
            ..RunConfig::default()
        };
        match c.validate() {
            Err(ConfigError::Invalid(list)) => {
                assert_eq!(list.len(), 4, "{list:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_strategy_lists_valid_names() {
        let err = "fancy".parse::<Strategy>().unwrap_err().to_string();
        for name in Strategy::NAMES {
            assert!(err.contains(name));
        }
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
    }

    #[test]
    fn file_overrides_apply() {
        let o = ConfigOverrides::from_toml_str(
            "dataset = \"x.csv\"\nstrategy = \"kta_exact\"\nm = 8\ntau_cos = 0.9\n",
            "inline",
        )
        .unwrap();
        let mut c = RunConfig::default();
        o.apply(&mut c).unwrap();
        assert_eq!(c.strategy, Strategy::KtaExact);
        assert_eq!(c.m, 8);
        assert_eq!(c.tau_cos, 0.9);
        assert_eq!(c.dataset, "x.csv");
        assert!(ConfigOverrides::from_toml_str("bogus = 1", "inline").is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let c = RunConfig {
            dataset: "iris.csv".into(),
            probe_rho: Some(0.25),
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
