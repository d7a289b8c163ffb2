use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    covariates::CovariateTable, dose_grid, BINARY_1, BINARY_2, DEFAULT_PROTECTED_FEATURE,
    N_FEATURES,
};
use crate::error::{Error, Result};

/// Smallest magnitude allowed for a denominator in the response formulas.
const DENOMINATOR_FLOOR: f64 = 1e-6;

/// How observed doses are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoseAssignment {
    /// Dose depends on covariates through the logistic score.
    Confounded,
    /// Dose is `U(0, 1)` independent of covariates.
    Randomized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub treatment_noise_variance: f64,
    pub outcome_noise_variance: f64,
    /// Amplifies the treatment-effect gap between protected groups.
    pub gamma: f64,
    pub gamma_scale: f64,
    /// 1-based column of the protected attribute; must be in the first binary set.
    pub protected_feature: usize,
    pub dose_assignment: DoseAssignment,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            treatment_noise_variance: 0.25,
            outcome_noise_variance: 0.25,
            gamma: 0.0,
            gamma_scale: 0.1,
            protected_feature: DEFAULT_PROTECTED_FEATURE,
            dose_assignment: DoseAssignment::Confounded,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.treatment_noise_variance)
            || !finite_nonneg(self.outcome_noise_variance)
        {
            return Err(Error::InvalidArgument(
                "noise variances must be >= 0".into(),
            ));
        }
        if !finite_nonneg(self.gamma) {
            return Err(Error::InvalidArgument("gamma must be >= 0".into()));
        }
        if !self.gamma_scale.is_finite() {
            return Err(Error::InvalidArgument("gamma_scale must be finite".into()));
        }
        if self.protected_feature == 0 || !BINARY_1.contains(&(self.protected_feature - 1)) {
            return Err(Error::InvalidArgument(format!(
                "protected feature {} is not in the first binary set",
                self.protected_feature
            )));
        }
        Ok(())
    }

    pub(crate) fn protected_index(&self) -> usize {
        self.protected_feature - 1
    }
}

/// Dataset-level centering constants of the two binary feature sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConstants {
    pub c1: f64,
    pub c2: f64,
}

impl GeneratorConstants {
    pub fn from_covariates(cov: &CovariateTable) -> Self {
        let n = cov.n_rows() as f64;
        let set_mean = |set: &[usize]| {
            cov.rows()
                .map(|r| set.iter().map(|&c| r[c]).sum::<f64>() / set.len() as f64)
                .sum::<f64>()
                / n
        };
        Self {
            c1: set_mean(&BINARY_1),
            c2: set_mean(&BINARY_2),
        }
    }
}

fn guard(denominator: f64) -> (f64, bool) {
    if denominator.abs() < DENOMINATOR_FLOOR {
        (DENOMINATOR_FLOOR.copysign(denominator), true)
    } else {
        (denominator, false)
    }
}

fn centered_set_mean(x: &[f64], set: &[usize], center: f64) -> f64 {
    set.iter().map(|&c| x[c] - center).sum::<f64>() / set.len() as f64
}

/// A realized dose together with whether a near-zero denominator was floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoseDraw {
    pub dose: f64,
    pub guarded: bool,
}

/// Noiseless dose score before the logistic squash.
fn dose_score(x: &[f64], consts: &GeneratorConstants) -> (f64, bool) {
    let (d1, g1) = guard(1.0 + x[1]);
    let hi = x[2].max(x[4]).max(x[5]);
    let lo = x[2].min(x[4]).min(x[5]);
    let (d2, g2) = guard(0.2 + lo);
    let score =
        x[0] / d1 + hi / d2 + (5.0 * centered_set_mean(x, &BINARY_2, consts.c2)).tanh() - 2.0;
    (score, g1 || g2)
}

/// Observed dose for covariate row `x` given a realized treatment-noise draw.
pub fn assign_dose(x: &[f64], consts: &GeneratorConstants, noise: f64) -> DoseDraw {
    let (score, guarded) = dose_score(x, consts);
    DoseDraw {
        dose: logistic(2.0 * (score + noise)),
        guarded,
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Noiseless outcome surface before group scaling and normalization.
///
/// Returns the value and whether a denominator had to be floored.
pub fn base_response(s: f64, x: &[f64], consts: &GeneratorConstants) -> (f64, bool) {
    let (den, guarded) = guard(0.5 + 5.0 * x[1].min(x[2]).min(x[4]));
    let modifier = (5.0 * centered_set_mean(x, &BINARY_1, consts.c1)).tanh()
        + (0.2 * (x[0] - x[5])).exp() / den;
    (
        (3.0 * std::f64::consts::PI * s).sin() / (1.2 - s) * modifier,
        guarded,
    )
}

/// Frozen affine map from raw outcomes to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub y_min: f64,
    pub y_max: f64,
}

impl Normalization {
    pub fn new(y_min: f64, y_max: f64) -> Result<Self> {
        if !(y_max > y_min) || !y_min.is_finite() || !y_max.is_finite() {
            return Err(Error::Validation(format!(
                "degenerate outcome range [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { y_min, y_max })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        ((raw - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0)
    }
}

/// Parameters of the data-generating process, queryable for the true
/// dose-response of any covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub constants: GeneratorConstants,
    pub gamma: f64,
    pub gamma_scale: f64,
    /// 0-based protected column.
    pub protected_index: usize,
    pub normalization: Option<Normalization>,
}

impl GroundTruth {
    pub fn unfrozen(constants: GeneratorConstants, cfg: &GenConfig) -> Self {
        Self {
            constants,
            gamma: cfg.gamma,
            gamma_scale: cfg.gamma_scale,
            protected_index: cfg.protected_index(),
            normalization: None,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.normalization.is_some()
    }

    fn frozen(&self) -> Result<&Normalization> {
        self.normalization
            .as_ref()
            .ok_or_else(|| Error::Validation("ground truth normalization is not frozen".into()))
    }

    pub fn group_factor(&self, a: u8) -> f64 {
        1.0 + self.gamma * self.gamma_scale * f64::from(a)
    }

    fn raw_mean(&self, s: f64, x: &[f64], a: u8) -> f64 {
        base_response(s, x, &self.constants).0 * self.group_factor(a)
    }

    /// Raw and normalized outcome for one draw of outcome noise.
    pub fn gen_outcome(&self, x: &[f64], s: f64, a: u8, noise: f64) -> Result<(f64, f64)> {
        let norm = self.frozen()?;
        let raw = self.raw_mean(s, x, a) + noise;
        Ok((raw, norm.apply(raw)))
    }

    /// Expected normalized outcome at dose `s`, clamped to `[0, 1]`.
    pub fn true_cadr(&self, s: f64, x: &[f64], a: u8) -> Result<f64> {
        Ok(self.frozen()?.apply(self.raw_mean(s, x, a)))
    }

    /// True dose effects on the grid `{0, 1/delta, ..., 1}`; entry 0 is exactly 0.
    pub fn true_cade_vector(&self, x: &[f64], a: u8, delta: usize) -> Result<Vec<f64>> {
        if delta < 1 {
            return Err(Error::InvalidArgument("delta must be >= 1".into()));
        }
        let base = self.true_cadr(0.0, x, a)?;
        let mut out = Vec::with_capacity(delta + 1);
        out.push(0.0);
        for s in dose_grid(delta).into_iter().skip(1) {
            out.push(self.true_cadr(s, x, a)? - base);
        }
        Ok(out)
    }

    /// Protected attribute of a covariate row.
    pub fn protected_of(&self, x: &[f64]) -> u8 {
        u8::from(x[self.protected_index] != 0.0)
    }
}

/// Covariates with one factual dose and outcome per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub covariates: CovariateTable,
    pub doses: Vec<f64>,
    pub outcomes: Vec<f64>,
    pub protected: Vec<u8>,
    /// Rows whose formulas hit the denominator floor.
    pub guarded_rows: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.doses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doses.is_empty()
    }

    /// Writes `x1..x25,a,s,y` with round-trip float precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=N_FEATURES).map(|c| format!("x{c}")).collect();
        writeln!(w, "{},a,s,y", header.join(","))?;
        for (i, row) in self.covariates.rows().enumerate() {
            for v in row {
                write!(w, "{v},")?;
            }
            writeln!(
                w,
                "{},{},{}",
                self.protected[i], self.doses[i], self.outcomes[i]
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let rows = idx
            .iter()
            .map(|&i| {
                let mut r = [0.0; N_FEATURES];
                r.copy_from_slice(self.covariates.row(i));
                r
            })
            .collect();
        Dataset {
            covariates: CovariateTable::from_rows(rows).expect("rows come from a valid table"),
            doses: idx.iter().map(|&i| self.doses[i]).collect(),
            outcomes: idx.iter().map(|&i| self.outcomes[i]).collect(),
            protected: idx.iter().map(|&i| self.protected[i]).collect(),
            guarded_rows: 0,
        }
    }
}

/// Reads a dataset previously written by [`Dataset::save_csv`].
///
/// Covariates are taken as-is; no re-standardization happens.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let mut rows = Vec::new();
    let (mut doses, mut outcomes, mut protected) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let row_no = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != N_FEATURES + 3 {
            return Err(Error::Validation(format!(
                "row {row_no}: expected {} columns, found {}",
                N_FEATURES + 3,
                rec.len()
            )));
        }
        let field = |c: usize| -> Result<f64> {
            rec[c].trim().parse::<f64>().map_err(|e| Error::Parse {
                row: row_no,
                column: c + 1,
                message: e.to_string(),
            })
        };
        let mut row = [0.0; N_FEATURES];
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = field(c)?;
        }
        rows.push(row);
        let a = field(N_FEATURES)?;
        if a != 0.0 && a != 1.0 {
            return Err(Error::Validation(format!(
                "row {row_no}: protected value {a}"
            )));
        }
        protected.push(a as u8);
        doses.push(field(N_FEATURES + 1)?);
        outcomes.push(field(N_FEATURES + 2)?);
    }
    Ok(Dataset {
        covariates: CovariateTable::from_rows(rows)?,
        doses,
        outcomes,
        protected,
        guarded_rows: 0,
    })
}

fn noise_dist(variance: f64) -> Option<Normal<f64>> {
    (variance > 0.0).then(|| Normal::new(0.0, variance.sqrt()).expect("valid sd"))
}

/// Simulates doses and outcomes for every covariate row.
///
/// The outcome normalization is frozen from the realized noisy outcomes, so
/// the generated `y` spans `[0, 1]` exactly.
pub fn generate_dataset(cov: &CovariateTable, cfg: &GenConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    if cov.n_rows() == 0 {
        return Err(Error::InvalidArgument("empty covariate table".into()));
    }
    let consts = GeneratorConstants::from_covariates(cov);
    let mut gt = GroundTruth::unfrozen(consts, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let t_noise = noise_dist(cfg.treatment_noise_variance);
    let y_noise = noise_dist(cfg.outcome_noise_variance);

    let n = cov.n_rows();
    let mut doses = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut protected = Vec::with_capacity(n);
    let mut guarded_rows = 0;
    for x in cov.rows() {
        // Two draws per row regardless of mode keep the streams aligned.
        let u: f64 = rng.random();
        let tn = t_noise.map_or(0.0, |d| d.sample(&mut rng));
        let yn = y_noise.map_or(0.0, |d| d.sample(&mut rng));
        let (s, g_dose) = match cfg.dose_assignment {
            DoseAssignment::Confounded => {
                let draw = assign_dose(x, &consts, tn);
                (draw.dose, draw.guarded)
            }
            DoseAssignment::Randomized => (u, false),
        };
        let a = gt.protected_of(x);
        let (base, g_out) = base_response(s, x, &consts);
        if g_dose || g_out {
            guarded_rows += 1;
        }
        doses.push(s);
        raw.push(base * gt.group_factor(a) + yn);
        protected.push(a);
    }
    if guarded_rows > 0 {
        log::warn!("{guarded_rows} rows hit the denominator floor");
    }
    let y_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let y_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > y_min) {
        return Err(Error::Validation(
            "generated outcomes have zero range; cannot normalize".into(),
        ));
    }
    let norm = Normalization::new(y_min, y_max)?;
    gt.normalization = Some(norm);
    let outcomes = raw.iter().map(|&r| norm.apply(r)).collect();
    Ok((
        Dataset {
            covariates: cov.clone(),
            doses,
            outcomes,
            protected,
            guarded_rows,
        },
        gt,
    ))
}
