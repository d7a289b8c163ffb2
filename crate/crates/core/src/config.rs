//! Experiment configuration.
//!
//! The file format is flat `key = value` text. Blank lines and lines
//! starting with `#` are ignored, and unknown keys are errors. Lists are
//! comma separated; a budget grid may also be written `start:end:step`.
//!
//! ```text
//! synthetic = 747
//! seed = 7
//! delta = 10
//! budgets = 25:250:25
//! eps_dt = 0.05, 0.1, 0.25, disabled
//! benefits = uniform(0.5, 1.5)
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::alloc::{BnbOptions, Solver};
use crate::datagen::{DoseAssignment, GenConfig};
use crate::error::{Error, Result};
use crate::estimators::{MaxFeatures, RfConfig};
use crate::metrics::budget_grid;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(usize),
    Csv {
        path: PathBuf,
        has_header: bool,
        skip_columns: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Oracle,
    Rf,
    Binned,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Rf => "rf",
            EstimatorKind::Binned => "binned",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(EstimatorKind::Oracle),
            "rf" | "rf_slearner" => Ok(EstimatorKind::Rf),
            "binned" | "binned_slearner" => Ok(EstimatorKind::Binned),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenefitSpec {
    Ones,
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub seed: u64,
    pub treatment_noise_variance: f64,
    pub outcome_noise_variance: f64,
    pub gamma_scale: f64,
    pub protected_feature: usize,
    pub randomized_doses: bool,
    pub delta: usize,
    /// Estimators compared in the first experiment.
    pub estimators: Vec<EstimatorKind>,
    /// Estimator used by the other experiments.
    pub estimator: EstimatorKind,
    pub rf: RfConfig,
    /// Alternative max depths tried by cross-validation; empty skips it.
    pub cv_max_depths: Vec<Option<usize>>,
    pub cv_folds: usize,
    pub binned_bins: usize,
    pub binned_k: usize,
    pub mise_grid_points: usize,
    pub budgets: Vec<f64>,
    pub auuc_caps: Vec<f64>,
    pub auuc_step: f64,
    pub eps_dt: Vec<Option<f64>>,
    pub eps_do: Vec<Option<f64>>,
    pub gammas: Vec<f64>,
    pub fairness_budget: f64,
    pub benefits: BenefitSpec,
    pub benefit_seed: u64,
    pub solver: Solver,
    pub node_limit: usize,
    /// Relative optimality gap for branch-and-bound.
    pub mip_gap: f64,
    pub time_limit_secs: Option<f64>,
    pub scalability_factors: Vec<usize>,
    pub scalability_budget: f64,
    pub jitter_sd: f64,
    /// Largest instance size the exact solver is timed on in the
    /// scalability run.
    pub exact_max_n: usize,
    pub deltas: Vec<usize>,
    pub delta_budget: f64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(747),
            seed: 0,
            treatment_noise_variance: 0.25,
            outcome_noise_variance: 0.25,
            gamma_scale: 0.1,
            protected_feature: crate::datagen::DEFAULT_PROTECTED_FEATURE,
            randomized_doses: false,
            delta: 10,
            estimators: vec![
                EstimatorKind::Oracle,
                EstimatorKind::Rf,
                EstimatorKind::Binned,
            ],
            estimator: EstimatorKind::Rf,
            rf: RfConfig::default(),
            cv_max_depths: Vec::new(),
            cv_folds: 5,
            binned_bins: 10,
            binned_k: 10,
            mise_grid_points: 101,
            budgets: (1..=10).map(|k| 25.0 * k as f64).collect(),
            auuc_caps: vec![140.0, 250.0],
            auuc_step: 10.0,
            eps_dt: vec![
                Some(0.01),
                Some(0.05),
                Some(0.1),
                Some(0.25),
                Some(0.5),
                None,
            ],
            eps_do: vec![
                Some(0.01),
                Some(0.05),
                Some(0.1),
                Some(0.25),
                Some(0.5),
                None,
            ],
            gammas: vec![0.0, 1.0, 5.0, 10.0],
            fairness_budget: 100.0,
            benefits: BenefitSpec::Uniform { lo: 0.5, hi: 1.5 },
            benefit_seed: 1,
            solver: Solver::Exact,
            node_limit: 1_000_000,
            mip_gap: 1e-6,
            time_limit_secs: Some(60.0),
            scalability_factors: vec![1, 2, 4, 8],
            scalability_budget: 100.0,
            jitter_sd: 0.01,
            exact_max_n: 1500,
            deltas: vec![1, 2, 5, 10, 20],
            delta_budget: 100.0,
            out_dir: PathBuf::from("results"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}")))
}

fn parse_list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_eps(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "disabled" || v == "none" {
        return Ok(None);
    }
    let e: f64 = parse_num(key, v)?;
    if !(0.0..=1.0).contains(&e) {
        return Err(Error::Config(format!("{key}: slack {e} outside [0, 1]")));
    }
    Ok(Some(e))
}

fn parse_depth(key: &str, v: &str) -> Result<Option<usize>> {
    if v == "none" || v == "unlimited" {
        Ok(None)
    } else {
        parse_num(key, v).map(Some)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got '{v}'"
        ))),
    }
}

fn parse_budgets(key: &str, v: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let start = parse_num(key, parts[0])?;
        let end = parse_num(key, parts[1])?;
        let step = parse_num(key, parts[2])?;
        return budget_grid(start, end, step).map_err(|e| Error::Config(format!("{key}: {e}")));
    }
    parse_list(key, v, |s| parse_num(key, s))
}

fn parse_benefits(key: &str, v: &str) -> Result<BenefitSpec> {
    if v == "ones" {
        return Ok(BenefitSpec::Ones);
    }
    let inner = v
        .strip_prefix("uniform(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| Error::Config(format!("{key}: expected 'ones' or 'uniform(lo, hi)'")))?;
    let bounds = parse_list(key, inner, |s| parse_num::<f64>(key, s))?;
    if bounds.len() != 2 || !(bounds[0] < bounds[1]) {
        return Err(Error::Config(format!(
            "{key}: need uniform(lo, hi) with lo < hi"
        )));
    }
    Ok(BenefitSpec::Uniform {
        lo: bounds[0],
        hi: bounds[1],
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "disabled".into(), |x| x.to_string())
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut csv_path: Option<PathBuf> = None;
        let mut has_header = false;
        let mut skip_columns = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "synthetic" => cfg.data = DataSource::Synthetic(parse_num(key, v)?),
                "data" => csv_path = Some(PathBuf::from(v)),
                "data_has_header" => has_header = parse_bool(key, v)?,
                "data_skip_columns" => skip_columns = parse_num(key, v)?,
                "seed" => cfg.seed = parse_num(key, v)?,
                "treatment_noise_variance" => cfg.treatment_noise_variance = parse_num(key, v)?,
                "outcome_noise_variance" => cfg.outcome_noise_variance = parse_num(key, v)?,
                "gamma_scale" => cfg.gamma_scale = parse_num(key, v)?,
                "protected_feature" => cfg.protected_feature = parse_num(key, v)?,
                "randomized_doses" => cfg.randomized_doses = parse_bool(key, v)?,
                "delta" => cfg.delta = parse_num(key, v)?,
                "estimators" => cfg.estimators = parse_list(key, v, str::parse)?,
                "estimator" => cfg.estimator = v.parse()?,
                "rf_n_trees" => cfg.rf.n_trees = parse_num(key, v)?,
                "rf_max_depth" => cfg.rf.max_depth = parse_depth(key, v)?,
                "rf_min_samples_leaf" => cfg.rf.min_samples_leaf = parse_num(key, v)?,
                "rf_max_features" => {
                    cfg.rf.max_features = match v {
                        "sqrt" => MaxFeatures::Sqrt,
                        "log2" => MaxFeatures::Log2,
                        "all" => MaxFeatures::All,
                        n => MaxFeatures::Count(parse_num(key, n)?),
                    }
                }
                "rf_bootstrap" => cfg.rf.bootstrap = parse_bool(key, v)?,
                "cv_max_depths" => cfg.cv_max_depths = parse_list(key, v, |s| parse_depth(key, s))?,
                "cv_folds" => cfg.cv_folds = parse_num(key, v)?,
                "binned_bins" => cfg.binned_bins = parse_num(key, v)?,
                "binned_k" => cfg.binned_k = parse_num(key, v)?,
                "mise_grid_points" => cfg.mise_grid_points = parse_num(key, v)?,
                "budgets" => cfg.budgets = parse_budgets(key, v)?,
                "auuc_caps" => cfg.auuc_caps = parse_list(key, v, |s| parse_num(key, s))?,
                "auuc_step" => cfg.auuc_step = parse_num(key, v)?,
                "eps_dt" => cfg.eps_dt = parse_list(key, v, |s| parse_eps(key, s))?,
                "eps_do" => cfg.eps_do = parse_list(key, v, |s| parse_eps(key, s))?,
                "gammas" => cfg.gammas = parse_list(key, v, |s| parse_num(key, s))?,
                "fairness_budget" => cfg.fairness_budget = parse_num(key, v)?,
                "benefits" => cfg.benefits = parse_benefits(key, v)?,
                "benefit_seed" => cfg.benefit_seed = parse_num(key, v)?,
                "solver" => cfg.solver = v.parse()?,
                "node_limit" => cfg.node_limit = parse_num(key, v)?,
                "mip_gap" => cfg.mip_gap = parse_num(key, v)?,
                "time_limit_secs" => {
                    cfg.time_limit_secs = match v {
                        "none" => None,
                        s => Some(parse_num(key, s)?),
                    }
                }
                "scalability_factors" => {
                    cfg.scalability_factors = parse_list(key, v, |s| parse_num(key, s))?
                }
                "scalability_budget" => cfg.scalability_budget = parse_num(key, v)?,
                "jitter_sd" => cfg.jitter_sd = parse_num(key, v)?,
                "exact_max_n" => cfg.exact_max_n = parse_num(key, v)?,
                "deltas" => cfg.deltas = parse_list(key, v, |s| parse_num(key, s))?,
                "delta_budget" => cfg.delta_budget = parse_num(key, v)?,
                "out" => cfg.out_dir = PathBuf::from(v),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        if let Some(path) = csv_path {
            cfg.data = DataSource::Csv {
                path,
                has_header,
                skip_columns,
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.context(format!("reading {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::Config("delta must be >= 1".into()));
        }
        if self.budgets.is_empty() || self.budgets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "budgets must be a non-empty ascending grid".into(),
            ));
        }
        if self.budgets.iter().any(|&b| b < 0.0) {
            return Err(Error::Config("budgets must be >= 0".into()));
        }
        if !(self.auuc_step > 0.0) {
            return Err(Error::Config("auuc_step must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mip_gap) {
            return Err(Error::Config("mip_gap must lie in [0, 1)".into()));
        }
        if self.deltas.contains(&0) {
            return Err(Error::Config("deltas must be >= 1".into()));
        }
        if self.scalability_factors.contains(&0) {
            return Err(Error::Config("scalability factors must be >= 1".into()));
        }
        if let DataSource::Synthetic(n) = self.data {
            if n < 2 {
                return Err(Error::Config("synthetic data needs at least 2 rows".into()));
            }
        }
        self.rf
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.gen_config(0.0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn gen_config(&self, gamma: f64) -> GenConfig {
        GenConfig {
            seed: self.seed,
            treatment_noise_variance: self.treatment_noise_variance,
            outcome_noise_variance: self.outcome_noise_variance,
            gamma,
            gamma_scale: self.gamma_scale,
            protected_feature: self.protected_feature,
            dose_assignment: if self.randomized_doses {
                DoseAssignment::Randomized
            } else {
                DoseAssignment::Confounded
            },
        }
    }

    pub fn bnb_options(&self) -> BnbOptions {
        BnbOptions {
            node_limit: self.node_limit,
            time_limit: self.time_limit_secs.map(Duration::from_secs_f64),
            rel_gap: self.mip_gap,
        }
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Synthetic(n) => put("synthetic", n.to_string()),
            DataSource::Csv {
                path,
                has_header,
                skip_columns,
            } => {
                put("data", path.display().to_string());
                put("data_has_header", has_header.to_string());
                put("data_skip_columns", skip_columns.to_string());
            }
        }
        put("seed", self.seed.to_string());
        put(
            "treatment_noise_variance",
            self.treatment_noise_variance.to_string(),
        );
        put(
            "outcome_noise_variance",
            self.outcome_noise_variance.to_string(),
        );
        put("gamma_scale", self.gamma_scale.to_string());
        put("protected_feature", self.protected_feature.to_string());
        put("randomized_doses", self.randomized_doses.to_string());
        put("delta", self.delta.to_string());
        put("estimators", join(&self.estimators, |e| e.name().into()));
        put("estimator", self.estimator.name().into());
        put("rf_n_trees", self.rf.n_trees.to_string());
        let depth = |d: &Option<usize>| d.map_or_else(|| "none".into(), |v| v.to_string());
        put("rf_max_depth", depth(&self.rf.max_depth));
        put("rf_min_samples_leaf", self.rf.min_samples_leaf.to_string());
        put(
            "rf_max_features",
            match self.rf.max_features {
                MaxFeatures::Sqrt => "sqrt".into(),
                MaxFeatures::Log2 => "log2".into(),
                MaxFeatures::All => "all".into(),
                MaxFeatures::Count(k) => k.to_string(),
            },
        );
        put("rf_bootstrap", self.rf.bootstrap.to_string());
        if !self.cv_max_depths.is_empty() {
            put("cv_max_depths", join(&self.cv_max_depths, depth));
        }
        put("cv_folds", self.cv_folds.to_string());
        put("binned_bins", self.binned_bins.to_string());
        put("binned_k", self.binned_k.to_string());
        put("mise_grid_points", self.mise_grid_points.to_string());
        put("budgets", join(&self.budgets, f64::to_string));
        put("auuc_caps", join(&self.auuc_caps, f64::to_string));
        put("auuc_step", self.auuc_step.to_string());
        put("eps_dt", join(&self.eps_dt, |e| fmt_opt(*e)));
        put("eps_do", join(&self.eps_do, |e| fmt_opt(*e)));
        put("gammas", join(&self.gammas, f64::to_string));
        put("fairness_budget", self.fairness_budget.to_string());
        put(
            "benefits",
            match self.benefits {
                BenefitSpec::Ones => "ones".into(),
                BenefitSpec::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            },
        );
        put("benefit_seed", self.benefit_seed.to_string());
        put("solver", self.solver.name().into());
        put("node_limit", self.node_limit.to_string());
        put("mip_gap", self.mip_gap.to_string());
        put(
            "time_limit_secs",
            self.time_limit_secs
                .map_or_else(|| "none".into(), |t| t.to_string()),
        );
        put(
            "scalability_factors",
            join(&self.scalability_factors, usize::to_string),
        );
        put("scalability_budget", self.scalability_budget.to_string());
        put("jitter_sd", self.jitter_sd.to_string());
        put("exact_max_n", self.exact_max_n.to_string());
        put("deltas", join(&self.deltas, usize::to_string));
        put("delta_budget", self.delta_budget.to_string());
        put("out", self.out_dir.display().to_string());
        s
    }

    /// SHA-256 of the canonical text form, in hex.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .fold(String::new(), |mut acc, b| {
                let _ = write!(acc, "{b:02x}");
                acc
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "\
# comment
synthetic = 120
seed = 3   # trailing note
budgets = 10:50:10
eps_dt = 0.1, disabled
benefits = uniform(0.5, 1.5)
rf_max_depth = none
cv_max_depths = 1, none
solver = bnb
time_limit_secs = none
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.data, DataSource::Synthetic(120));
        assert_eq!(cfg.budgets, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(cfg.eps_dt, vec![Some(0.1), None]);
        assert_eq!(cfg.rf.max_depth, None);
        assert_eq!(cfg.solver, Solver::BranchAndBound);
        assert_eq!(cfg.time_limit_secs, None);
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("colour = blue").is_err());
        assert!(ExperimentConfig::parse("budgets = 50, 10").is_err());
        assert!(ExperimentConfig::parse("eps_do = 1.5").is_err());
        assert!(ExperimentConfig::parse("delta = 0").is_err());
        assert!(ExperimentConfig::parse("just words").is_err());
        assert!(ExperimentConfig::parse("benefits = normal(0,1)").is_err());
    }

    #[test]
    fn csv_source() {
        let cfg = ExperimentConfig::parse("data = x.csv\ndata_skip_columns = 5").unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Csv {
                path: "x.csv".into(),
                has_header: false,
                skip_columns: 5
            }
        );
    }
}
