//! Dose-stratified nearest-neighbour S-learner.

use serde::{Deserialize, Serialize};

use super::{DoseResponse, Estimator};
use crate::datagen::{Dataset, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stratum {
    /// Standardized covariates, row-major.
    features: Vec<f64>,
    outcomes: Vec<f64>,
    mean: f64,
}

/// Splits `[0, 1]` into equal-width dose strata and averages the outcomes
/// of the `k` nearest training rows inside the query's stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSLearner {
    k: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    global_mean: f64,
    strata: Vec<Stratum>,
}

impl BinnedSLearner {
    pub fn n_bins(&self) -> usize {
        self.strata.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of strata with no training rows.
    pub fn empty_strata(&self) -> Vec<usize> {
        (0..self.strata.len())
            .filter(|&b| self.strata[b].outcomes.is_empty())
            .collect()
    }

    /// Training mean of the outcomes in stratum `b`, if it has any rows.
    pub fn stratum_mean(&self, b: usize) -> Option<f64> {
        let s = &self.strata[b];
        (!s.outcomes.is_empty()).then_some(s.mean)
    }

    pub fn bin_of(&self, dose: f64) -> usize {
        bin_index(dose, self.strata.len())
    }

    /// Returns the prediction and whether it fell back to the global mean.
    pub fn predict_with_diagnostics(&self, dose: f64, x: &[f64]) -> (f64, bool) {
        let stratum = &self.strata[self.bin_of(dose)];
        let n = stratum.outcomes.len();
        if n == 0 {
            return (self.global_mean, true);
        }
        if self.k >= n {
            return (stratum.mean, false);
        }
        let z: Vec<f64> = (0..N_FEATURES)
            .map(|j| (x[j] - self.center[j]) / self.scale[j])
            .collect();
        let mut dist: Vec<(f64, usize)> = stratum
            .features
            .chunks_exact(N_FEATURES)
            .enumerate()
            .map(|(i, row)| {
                let d = row
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(self.k - 1, cmp);
        let sum: f64 = dist[..self.k]
            .iter()
            .map(|&(_, i)| stratum.outcomes[i])
            .sum();
        (sum / self.k as f64, false)
    }
}

impl DoseResponse for BinnedSLearner {
    fn predict(&self, dose: f64, x: &[f64]) -> f64 {
        self.predict_with_diagnostics(dose, x).0.clamp(0.0, 1.0)
    }
}

fn bin_index(dose: f64, bins: usize) -> usize {
    let b = (dose.clamp(0.0, 1.0) * bins as f64).floor() as usize;
    b.min(bins - 1)
}

pub fn fit_binned_slearner(data: &Dataset, dose_bins: usize, k: usize) -> Result<Estimator> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if dose_bins < 1 {
        return Err(Error::InvalidArgument("dose_bins must be >= 1".into()));
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let n = data.len() as f64;
    let mut center = vec![0.0; N_FEATURES];
    let mut scale = vec![1.0; N_FEATURES];
    for j in 0..N_FEATURES {
        let mean = data.covariates.column(j).sum::<f64>() / n;
        let var = data
            .covariates
            .column(j)
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n;
        center[j] = mean;
        if var > 0.0 {
            scale[j] = var.sqrt();
        }
    }
    let mut strata: Vec<Stratum> = (0..dose_bins)
        .map(|_| Stratum {
            features: Vec::new(),
            outcomes: Vec::new(),
            mean: 0.0,
        })
        .collect();
    for (i, x) in data.covariates.rows().enumerate() {
        let s = &mut strata[bin_index(data.doses[i], dose_bins)];
        s.features
            .extend((0..N_FEATURES).map(|j| (x[j] - center[j]) / scale[j]));
        s.outcomes.push(data.outcomes[i]);
    }
    for s in &mut strata {
        if !s.outcomes.is_empty() {
            s.mean = s.outcomes.iter().sum::<f64>() / s.outcomes.len() as f64;
        }
    }
    let learner = BinnedSLearner {
        k,
        center,
        scale,
        global_mean: data.outcomes.iter().sum::<f64>() / n,
        strata,
    };
    let empty = learner.empty_strata();
    if !empty.is_empty() {
        log::warn!("binned s-learner: empty dose strata {empty:?} fall back to the global mean");
    }
    Ok(Estimator::BinnedSlearner(learner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, synth_covariates, GenConfig};

    fn dataset(n: usize) -> Dataset {
        let cov = synth_covariates(n, 9).unwrap();
        generate_dataset(&cov, &GenConfig::default()).unwrap().0
    }

    fn inner(e: &Estimator) -> &BinnedSLearner {
        match e {
            Estimator::BinnedSlearner(b) => b,
            _ => unreachable!(),
        }
    }

    #[test]
    fn one_bin_all_neighbours_is_global_mean() {
        let data = dataset(50);
        let est = fit_binned_slearner(&data, 1, 50).unwrap();
        let mean = data.outcomes.iter().sum::<f64>() / 50.0;
        for x in data.covariates.rows().take(5) {
            assert!((est.predict(0.9, x) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_stratum_falls_back() {
        let mut data = dataset(40);
        data.doses.iter_mut().for_each(|s| *s *= 0.4);
        let est = fit_binned_slearner(&data, 4, 3).unwrap();
        let b = inner(&est);
        assert_eq!(b.empty_strata(), vec![2, 3]);
        let mean = data.outcomes.iter().sum::<f64>() / 40.0;
        let (v, flagged) = b.predict_with_diagnostics(0.9, data.covariates.row(0));
        assert!(flagged);
        assert!((v - mean).abs() < 1e-12);
        assert!(!b.predict_with_diagnostics(0.1, data.covariates.row(0)).1);
    }

    #[test]
    fn nearest_neighbour_of_training_row_is_itself() {
        let data = dataset(60);
        let est = fit_binned_slearner(&data, 1, 1).unwrap();
        for i in 0..10 {
            let p = inner(&est)
                .predict_with_diagnostics(0.5, data.covariates.row(i))
                .0;
            assert_eq!(p, data.outcomes[i]);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let data = dataset(10);
        assert!(fit_binned_slearner(&data, 3, 0).is_err());
        assert!(fit_binned_slearner(&data, 0, 1).is_err());
    }

    #[test]
    fn dose_one_lands_in_last_bin() {
        assert_eq!(bin_index(1.0, 10), 9);
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.25, 4), 1);
    }
}
