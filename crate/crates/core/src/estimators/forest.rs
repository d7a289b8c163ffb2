//! CART regression trees and a bagged random forest S-learner.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DoseResponse, Estimator};
use crate::datagen::{Dataset, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (n_features as f64).log2().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfConfig {
    pub n_trees: usize,
    /// `None` grows trees until the leaf-size limit.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: Some(15),
            min_samples_leaf: 2,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidArgument(
                "min_samples_leaf must be >= 1".into(),
            ));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(Error::InvalidArgument("max_features must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree grown by variance reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, input: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if input[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        samples: Vec<usize>,
        cfg: &RfConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n_features = inputs[0].len();
        let mtry = cfg.max_features.resolve(n_features);
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stack = vec![(0usize, samples, 0usize)];
        let mut features: Vec<usize> = (0..n_features).collect();
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        while let Some((slot, idx, depth)) = stack.pop() {
            let n = idx.len() as f64;
            let sum: f64 = idx.iter().map(|&i| targets[i]).sum();
            let mean = sum / n;
            let pure = idx.iter().all(|&i| targets[i] == targets[idx[0]]);
            let depth_ok = cfg.max_depth.is_none_or(|d| depth < d);
            if pure || !depth_ok || idx.len() < 2 * cfg.min_samples_leaf {
                nodes[slot] = Node::Leaf { value: mean };
                continue;
            }
            // Partial Fisher-Yates picks `mtry` candidate features.
            for k in 0..mtry {
                let j = rng.random_range(k..n_features);
                features.swap(k, j);
            }
            let parent_score = sum * sum / n;
            let mut best: Option<(f64, usize, f64)> = None;
            for &f in &features[..mtry] {
                pairs.clear();
                pairs.extend(idx.iter().map(|&i| (inputs[i][f], targets[i])));
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                let leaf = cfg.min_samples_leaf;
                let mut left_sum = 0.0;
                for k in 1..pairs.len() {
                    left_sum += pairs[k - 1].1;
                    if k < leaf || pairs.len() - k < leaf || pairs[k - 1].0 == pairs[k].0 {
                        continue;
                    }
                    let nl = k as f64;
                    let nr = n - nl;
                    let right_sum = sum - left_sum;
                    let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                    if best.is_none_or(|(b, _, _)| score > b) {
                        let (lo, hi) = (pairs[k - 1].0, pairs[k].0);
                        let mut thr = 0.5 * (lo + hi);
                        if thr >= hi {
                            thr = lo;
                        }
                        best = Some((score, f, thr));
                    }
                }
            }
            match best {
                Some((score, feature, threshold))
                    if score >= parent_score - 1e-12 * parent_score.abs() =>
                {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| inputs[i][feature] <= threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    let right = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
                _ => nodes[slot] = Node::Leaf { value: mean },
            }
        }
        Self { nodes }
    }
}

/// Bagged regression trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: RfConfig,
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    /// Fits on arbitrary inputs. Rows are put in a canonical order first,
    /// so the result does not depend on the order they were supplied in.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], cfg: &RfConfig) -> Result<Self> {
        cfg.validate()?;
        if inputs.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot fit a forest on no rows".into(),
            ));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch(
                "inputs and targets differ in length".into(),
            ));
        }
        let width = inputs[0].len();
        if width == 0 || inputs.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch(
                "ragged or empty input rows".into(),
            ));
        }
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.sort_by(|&a, &b| {
            inputs[a]
                .iter()
                .zip(&inputs[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(targets[a].total_cmp(&targets[b]))
        });
        let inputs: Vec<Vec<f64>> = order.iter().map(|&i| inputs[i].clone()).collect();
        let targets: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
        let n = inputs.len();

        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(t as u64);
                let samples: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit(&inputs, &targets, samples, cfg, &mut rng)
            })
            .collect();
        Ok(Self {
            config: cfg.clone(),
            trees,
        })
    }

    pub fn predict(&self, input: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(input)).sum::<f64>() / self.trees.len() as f64
    }

    /// Prediction for covariates `x` (25 columns) at `dose`.
    pub fn predict_dose(&self, dose: f64, x: &[f64]) -> f64 {
        let mut input = [0.0; N_FEATURES + 1];
        input[..N_FEATURES].copy_from_slice(&x[..N_FEATURES]);
        input[N_FEATURES] = dose;
        self.predict(&input)
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}

impl DoseResponse for RandomForest {
    fn predict(&self, dose: f64, x: &[f64]) -> f64 {
        self.predict_dose(dose, x).clamp(0.0, 1.0)
    }
}

pub(crate) fn slearner_inputs(data: &Dataset) -> Vec<Vec<f64>> {
    data.covariates
        .rows()
        .zip(&data.doses)
        .map(|(x, &s)| {
            let mut v = x.to_vec();
            v.push(s);
            v
        })
        .collect()
}

/// Fits a random-forest S-learner on `(x, s) -> y`.
pub fn fit_rf_slearner(data: &Dataset, cfg: &RfConfig) -> Result<Estimator> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    if data.len() < 2 * cfg.min_samples_leaf {
        return Err(Error::InvalidArgument(format!(
            "{} rows is fewer than twice min_samples_leaf ({})",
            data.len(),
            cfg.min_samples_leaf
        )));
    }
    let rf = RandomForest::fit(&slearner_inputs(data), &data.outcomes, cfg)?;
    Ok(Estimator::RfSlearner(rf))
}

/// Picks the grid point with the lowest mean held-out factual MSE.
/// Ties go to the earlier grid entry.
pub fn cross_validate_rf(
    data: &Dataset,
    grid: &[RfConfig],
    folds: usize,
    seed: u64,
) -> Result<RfConfig> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    if folds < 2 || folds > data.len() {
        return Err(Error::InvalidArgument(format!(
            "folds must be in [2, {}], got {folds}",
            data.len()
        )));
    }
    if grid.len() == 1 {
        return Ok(grid[0].clone());
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; data.len()];
        for (pos, &i) in idx.iter().enumerate() {
            f[i] = pos % folds;
        }
        f
    };
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|k| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != k).collect();
            let test: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == k).collect();
            (data.select(&train), data.select(&test))
        })
        .collect();

    let mut best: Option<(f64, usize)> = None;
    for (g, cfg) in grid.iter().enumerate() {
        let mut total = 0.0;
        for (train, test) in &splits {
            let est = fit_rf_slearner(train, cfg)?;
            let mse = test
                .covariates
                .rows()
                .zip(&test.doses)
                .zip(&test.outcomes)
                .map(|((x, &s), &y)| (est.predict(s, x) - y).powi(2))
                .sum::<f64>()
                / test.len() as f64;
            total += mse;
        }
        let score = total / folds as f64;
        log::debug!("cv grid point {g}: mse {score:.6}");
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, g));
        }
    }
    Ok(grid[best.expect("non-empty grid").1].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, synth_covariates, GenConfig};

    fn dataset(n: usize, seed: u64) -> Dataset {
        let cov = synth_covariates(n, seed).unwrap();
        generate_dataset(
            &cov,
            &GenConfig {
                seed,
                ..GenConfig::default()
            },
        )
        .unwrap()
        .0
    }

    fn small_cfg() -> RfConfig {
        RfConfig {
            n_trees: 20,
            ..RfConfig::default()
        }
    }

    #[test]
    fn constant_target() {
        let mut data = dataset(60, 1);
        data.outcomes.iter_mut().for_each(|y| *y = 0.7);
        let est = fit_rf_slearner(&data, &small_cfg()).unwrap();
        for x in data.covariates.rows().take(10) {
            for s in [0.0, 0.33, 1.0] {
                assert!((est.predict(s, x) - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = dataset(80, 2);
        let a = fit_rf_slearner(&data, &small_cfg()).unwrap();
        let b = fit_rf_slearner(&data, &small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invariant_to_row_order() {
        let data = dataset(80, 3);
        let mut order: Vec<usize> = (0..80).collect();
        order.reverse();
        order.swap(3, 40);
        let shuffled = data.select(&order);
        let a = fit_rf_slearner(&data, &small_cfg()).unwrap();
        let b = fit_rf_slearner(&shuffled, &small_cfg()).unwrap();
        for x in data.covariates.rows().take(10) {
            assert_eq!(a.predict(0.4, x), b.predict(0.4, x));
        }
    }

    #[test]
    fn too_few_rows() {
        let data = dataset(3, 4);
        assert!(fit_rf_slearner(&data, &small_cfg()).is_err());
        let empty = data.select(&[]);
        assert!(fit_rf_slearner(&empty, &small_cfg()).is_err());
    }

    #[test]
    fn single_split_threshold_is_midpoint() {
        let inputs = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let targets = vec![0.0, 0.0, 1.0, 1.0];
        let cfg = RfConfig {
            n_trees: 1,
            bootstrap: false,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            ..RfConfig::default()
        };
        let rf = RandomForest::fit(&inputs, &targets, &cfg).unwrap();
        assert_eq!(rf.predict(&[1.49]), 0.0);
        assert_eq!(rf.predict(&[1.51]), 1.0);
        assert_eq!(rf.trees()[0].n_leaves(), 2);
    }

    #[test]
    fn max_features_resolution() {
        assert_eq!(MaxFeatures::Sqrt.resolve(26), 5);
        assert_eq!(MaxFeatures::Log2.resolve(26), 4);
        assert_eq!(MaxFeatures::Count(40).resolve(26), 26);
    }

    #[test]
    fn cv_edge_cases() {
        let data = dataset(40, 5);
        let one = vec![small_cfg()];
        assert_eq!(cross_validate_rf(&data, &one, 5, 1).unwrap(), small_cfg());
        let two = vec![small_cfg(), small_cfg()];
        assert_eq!(cross_validate_rf(&data, &two, 3, 1).unwrap(), small_cfg());
        assert!(cross_validate_rf(&data, &one, 1, 1).is_err());
        assert!(cross_validate_rf(&data, &one, 41, 1).is_err());
        assert!(cross_validate_rf(&data, &[], 3, 1).is_err());
    }
}
