use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{is_binary_column, CONTINUOUS, N_FEATURES};
use crate::error::{Error, Result};

/// An `N x 25` covariate matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    n_rows: usize,
    features: Vec<f64>,
}

impl CovariateTable {
    /// Builds a table from raw rows without any preprocessing.
    ///
    /// Binary columns must hold only 0 or 1.
    pub fn from_rows(rows: Vec<[f64; N_FEATURES]>) -> Result<Self> {
        let n_rows = rows.len();
        let features: Vec<f64> = rows.into_iter().flatten().collect();
        let table = Self { n_rows, features };
        table.check_binary()?;
        Ok(table)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * N_FEATURES..(i + 1) * N_FEATURES]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(N_FEATURES)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[col])
    }

    /// Z-scores the continuous columns using the sample standard deviation.
    pub fn standardize_continuous(&mut self) -> Result<()> {
        if self.n_rows < 2 {
            return Err(Error::InvalidArgument(
                "standardization needs at least two rows".into(),
            ));
        }
        let n = self.n_rows as f64;
        for &col in CONTINUOUS.iter() {
            let mean = self.column(col).sum::<f64>() / n;
            let var = self.column(col).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            if !(sd > 1e-12) {
                return Err(Error::ZeroVariance { column: col + 1 });
            }
            for i in 0..self.n_rows {
                let v = &mut self.features[i * N_FEATURES + col];
                *v = (*v - mean) / sd;
            }
        }
        Ok(())
    }

    fn check_binary(&self) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            for (col, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Validation(format!(
                        "non-finite value at row {}, column {}",
                        i + 1,
                        col + 1
                    )));
                }
                if is_binary_column(col) && v != 0.0 && v != 1.0 {
                    return Err(Error::Validation(format!(
                        "binary column {} has value {} at row {}",
                        col + 1,
                        v,
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How to read a covariate CSV.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub has_header: bool,
    /// Leading columns to ignore before the 25 features.
    pub skip_columns: usize,
}

/// Reads a covariate CSV and standardizes its continuous columns.
pub fn load_covariates(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<CovariateTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_covariates(file, opts)
}

pub(crate) fn parse_covariates<R: std::io::Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let first_data_row = if opts.has_header { 2 } else { 1 };
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row_no = i + first_data_row;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        let needed = opts.skip_columns + N_FEATURES;
        if record.len() < needed {
            return Err(Error::Validation(format!(
                "row {row_no} has {} columns, need at least {needed}",
                record.len()
            )));
        }
        let mut row = [0.0; N_FEATURES];
        for (k, slot) in row.iter_mut().enumerate() {
            let column = opts.skip_columns + k;
            let field = &record[column];
            *slot = field.parse::<f64>().map_err(|e| Error::Parse {
                row: row_no,
                column: column + 1,
                message: format!("{field:?}: {e}"),
            })?;
        }
        rows.push(row);
    }
    let mut table = CovariateTable::from_rows(rows)?;
    table.standardize_continuous()?;
    Ok(table)
}

/// Draws a synthetic covariate table with the IHDP column layout.
///
/// Continuous columns are standard normal (then z-scored), binary columns
/// are Bernoulli with a per-column rate drawn from `U(0.2, 0.8)`.
pub fn synth_covariates(n: usize, seed: u64) -> Result<CovariateTable> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic covariates need n >= 2, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = Uniform::new(0.2, 0.8).expect("valid range");
    let rates: Vec<f64> = (0..N_FEATURES).map(|_| rate.sample(&mut rng)).collect();
    let normal = Normal::new(0.0, 1.0).expect("valid sd");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = [0.0; N_FEATURES];
        for (col, v) in row.iter_mut().enumerate() {
            *v = if is_binary_column(col) {
                f64::from(u8::from(rng.random::<f64>() < rates[col]))
            } else {
                normal.sample(&mut rng)
            };
        }
        rows.push(row);
    }
    let mut table = CovariateTable::from_rows(rows)?;
    table.standardize_continuous()?;
    Ok(table)
}

/// Grows a table by `factor`: the original rows are kept and
/// `(factor - 1) * N` rows are resampled with replacement, with Gaussian
/// jitter of standard deviation `jitter_sd` on continuous columns.
pub fn oversample_covariates(
    table: &CovariateTable,
    factor: usize,
    jitter_sd: f64,
    seed: u64,
) -> Result<CovariateTable> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "oversampling factor must be >= 1".into(),
        ));
    }
    if !(jitter_sd > 0.0) && factor > 1 {
        return Err(Error::InvalidArgument(
            "jitter must be positive so resampled rows stay unique".into(),
        ));
    }
    let n = table.n_rows();
    let mut features = table.features.clone();
    features.reserve(n * (factor - 1) * N_FEATURES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if factor > 1 {
        let jitter = Normal::new(0.0, jitter_sd).expect("valid sd");
        for _ in 0..n * (factor - 1) {
            let src = rng.random_range(0..n);
            let mut row = [0.0; N_FEATURES];
            row.copy_from_slice(table.row(src));
            for &col in CONTINUOUS.iter() {
                row[col] += jitter.sample(&mut rng);
            }
            features.extend_from_slice(&row);
        }
    }
    Ok(CovariateTable {
        n_rows: n * factor,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_rows(n_cols: usize, rows: &[Vec<f64>]) -> String {
        rows.iter()
            .map(|r| {
                assert_eq!(r.len(), n_cols);
                r.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn sample_row(i: usize) -> Vec<f64> {
        (0..N_FEATURES)
            .map(|c| {
                if is_binary_column(c) {
                    ((i + c) % 2) as f64
                } else {
                    (i * 3 + c) as f64 * 0.7 + (i % 3) as f64
                }
            })
            .collect()
    }

    #[test]
    fn loads_and_standardizes() {
        let rows: Vec<Vec<f64>> = (0..10).map(sample_row).collect();
        let text = csv_rows(N_FEATURES, &rows);
        let t = parse_covariates(text.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(t.n_rows(), 10);
        for &c in CONTINUOUS.iter() {
            let mean = t.column(c).sum::<f64>() / 10.0;
            let var = t.column(c).map(|v| (v - mean).powi(2)).sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
        // binary columns untouched
        assert_eq!(t.row(3)[3], ((3 + 3) % 2) as f64);
    }

    #[test]
    fn header_and_skip_columns() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let mut r = vec![99.0, 98.0];
                r.extend(sample_row(i));
                r
            })
            .collect();
        let header = (0..N_FEATURES + 2)
            .map(|c| format!("c{c}"))
            .collect::<Vec<_>>()
            .join(",");
        let text = format!("{header}\n{}", csv_rows(N_FEATURES + 2, &rows));
        let opts = LoadOptions {
            has_header: true,
            skip_columns: 2,
        };
        let t = parse_covariates(text.as_bytes(), &opts).unwrap();
        assert_eq!(t.n_rows(), 4);
    }

    #[test]
    fn too_few_columns_is_validation_error() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| sample_row(i)[..24].to_vec()).collect();
        let text = csv_rows(24, &rows);
        let err = parse_covariates(text.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");
    }

    #[test]
    fn non_binary_value_rejected() {
        let mut rows: Vec<Vec<f64>> = (0..3).map(sample_row).collect();
        rows[1][6] = 2.0;
        let text = csv_rows(N_FEATURES, &rows);
        let err = parse_covariates(text.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("binary column 7"), "{err}");
    }

    #[test]
    fn constant_continuous_column_reported() {
        let mut rows: Vec<Vec<f64>> = (0..5).map(sample_row).collect();
        for r in rows.iter_mut() {
            r[0] = 4.2;
        }
        let text = csv_rows(N_FEATURES, &rows);
        let err = parse_covariates(text.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { column: 1 }), "{err}");
    }

    #[test]
    fn malformed_number_has_location() {
        let mut text = csv_rows(N_FEATURES, &(0..3).map(sample_row).collect::<Vec<_>>());
        text = text.replacen("0.7", "zz", 1);
        let err = parse_covariates(text.as_bytes(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert!(column >= 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_covariates(747, 1).unwrap();
        let b = synth_covariates(747, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_covariates(747, 2).unwrap());
    }

    #[test]
    fn synth_shape() {
        let t = synth_covariates(2, 5).unwrap();
        assert_eq!(t.n_rows(), 2);
        for row in t.rows() {
            assert_eq!(row.len(), 25);
            for c in 0..N_FEATURES {
                if is_binary_column(c) {
                    assert!(row[c] == 0.0 || row[c] == 1.0);
                }
            }
        }
        assert!(synth_covariates(1, 5).is_err());
    }

    #[test]
    fn synth_continuous_means_near_zero() {
        let t = synth_covariates(1000, 7).unwrap();
        for &c in CONTINUOUS.iter() {
            let mean = t.column(c).sum::<f64>() / 1000.0;
            assert!(mean.abs() < 0.15);
        }
    }

    #[test]
    fn oversample_keeps_originals_and_jitters() {
        let t = synth_covariates(50, 3).unwrap();
        let same = oversample_covariates(&t, 1, 0.01, 9).unwrap();
        assert_eq!(same, t);
        let big = oversample_covariates(&t, 4, 0.01, 9).unwrap();
        assert_eq!(big.n_rows(), 200);
        assert_eq!(big.row(17), t.row(17));
        let mut rows: Vec<Vec<u64>> = big
            .rows()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 200);
        for r in big.rows().skip(50) {
            for c in 0..N_FEATURES {
                if is_binary_column(c) {
                    assert!(r[c] == 0.0 || r[c] == 1.0);
                }
            }
        }
    }
}
