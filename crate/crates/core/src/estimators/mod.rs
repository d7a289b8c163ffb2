//! Conditional average dose-response (CADR) estimators.
//!
//! Every estimator maps `(dose, covariates)` to an expected outcome in
//! `[0, 1]`. Dose effects are read off the fitted surface on the grid
//! `{0, 1/delta, ..., 1}` and stored as a [`CadeMatrix`].

mod binned;
pub(crate) mod cade;
mod forest;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use binned::{fit_binned_slearner, BinnedSLearner};
pub use cade::{cade_matrix, ground_truth_cade, mise, CadeMatrix, Provenance};
pub use forest::{
    cross_validate_rf, fit_rf_slearner, MaxFeatures, RandomForest, RegressionTree, RfConfig,
};

use crate::datagen::GroundTruth;
use crate::error::{Error, Result};

/// A fitted dose-response surface `mu(s, x)`.
pub trait DoseResponse: Sync {
    fn predict(&self, dose: f64, x: &[f64]) -> f64;
}

/// Model persistence format version.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// The estimators this crate can fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Estimator {
    /// Returns the true dose response; the full-information benchmark.
    Oracle { ground_truth: GroundTruth },
    /// S-learner with a random forest over `x` and the dose.
    RfSlearner(RandomForest),
    /// Per-dose-stratum nearest-neighbour averages.
    BinnedSlearner(BinnedSLearner),
}

/// Wraps a frozen ground truth as an estimator.
pub fn oracle_estimator(gt: &GroundTruth) -> Result<Estimator> {
    if !gt.is_frozen() {
        return Err(Error::Validation(
            "oracle estimator needs a frozen ground truth".into(),
        ));
    }
    Ok(Estimator::Oracle {
        ground_truth: gt.clone(),
    })
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Oracle { .. } => "oracle",
            Estimator::RfSlearner(_) => "rf",
            Estimator::BinnedSlearner(_) => "binned",
        }
    }

    /// Writes the model as versioned JSON.
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let envelope = serde_json::json!({
            "format": "dosealloc-estimator",
            "version": MODEL_FORMAT_VERSION,
            "model": self,
        });
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, &envelope)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)?;
        if value["format"] != "dosealloc-estimator" {
            return Err(Error::Validation("not a dosealloc estimator file".into()));
        }
        let version = value["version"].as_u64().unwrap_or(0);
        if version != u64::from(MODEL_FORMAT_VERSION) {
            return Err(Error::Validation(format!(
                "unsupported model format version {version}"
            )));
        }
        let est: Estimator = serde_json::from_value(value["model"].take())?;
        if let Estimator::Oracle { ground_truth } = &est {
            oracle_estimator(ground_truth)?;
        }
        Ok(est)
    }
}

impl DoseResponse for Estimator {
    fn predict(&self, dose: f64, x: &[f64]) -> f64 {
        let raw = match self {
            Estimator::Oracle { ground_truth } => ground_truth
                .true_cadr(dose, x, ground_truth.protected_of(x))
                .expect("oracle is built from a frozen ground truth"),
            Estimator::RfSlearner(rf) => rf.predict_dose(dose, x),
            Estimator::BinnedSlearner(b) => b.predict_with_diagnostics(dose, x).0,
        };
        raw.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, synth_covariates, GenConfig};

    #[test]
    fn oracle_matches_truth_and_persists() {
        let cov = synth_covariates(60, 1).unwrap();
        let (_, gt) = generate_dataset(&cov, &GenConfig::default()).unwrap();
        let est = oracle_estimator(&gt).unwrap();
        let x = cov.row(5);
        let a = gt.protected_of(x);
        assert_eq!(est.predict(0.3, x), gt.true_cadr(0.3, x, a).unwrap());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.json");
        est.save_json(&path).unwrap();
        assert_eq!(Estimator::load_json(&path).unwrap(), est);
    }

    #[test]
    fn unfrozen_oracle_rejected() {
        let mut gt = {
            let cov = synth_covariates(20, 1).unwrap();
            generate_dataset(&cov, &GenConfig::default()).unwrap().1
        };
        gt.normalization = None;
        assert!(oracle_estimator(&gt).is_err());
    }
}
