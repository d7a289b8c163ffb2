use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::DoseResponse;
use crate::datagen::{dose_grid, CovariateTable, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Estimated,
    GroundTruth,
}

/// `N x (delta + 1)` dose effects on the grid `{0, 1/delta, ..., 1}`.
///
/// Column 0 is identically zero and every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CadeMatrix {
    n_rows: usize,
    delta: usize,
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl CadeMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let n_rows = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 {
            return Err(Error::DimensionMismatch(
                "a dose-effect row needs at least two doses".into(),
            ));
        }
        let mut values = Vec::with_capacity(n_rows * width);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row[0] != 0.0 {
                return Err(Error::Validation(format!(
                    "row {i}: effect at dose 0 must be 0, got {}",
                    row[0]
                )));
            }
            if let Some(v) = row.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!(
                    "row {i}: effect {v} outside [-1, 1]"
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            n_rows,
            delta: width - 1,
            values,
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn n_doses(&self) -> usize {
        self.delta + 1
    }

    pub fn doses(&self) -> Vec<f64> {
        dose_grid(self.delta)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_doses();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.values[i * self.n_doses() + d]
    }

    /// Writes `entity,dose_0.0,...,dose_1.0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = self.doses().iter().map(|d| format!("dose_{d:?}")).collect();
        writeln!(w, "entity,{}", header.join(","))?;
        for i in 0..self.n_rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_file(path.as_ref(), |w| self.write_csv(w))
    }

    /// Reads the format written by [`CadeMatrix::write_csv`].
    pub fn load_csv(path: impl AsRef<Path>, provenance: Provenance) -> Result<Self> {
        let rows = read_entity_matrix(path.as_ref())?;
        Self::from_rows(rows, provenance)
    }
}

pub(crate) fn write_matrix_file(
    path: &Path,
    f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads an `entity,<values...>` CSV with a header row; entities must be `0..N` in order.
pub(crate) fn read_entity_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row_no = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        let parse = |c: usize| -> Result<f64> {
            rec[c].parse::<f64>().map_err(|e| Error::Parse {
                row: row_no,
                column: c + 1,
                message: e.to_string(),
            })
        };
        let entity = parse(0)?;
        if entity != i as f64 {
            return Err(Error::Validation(format!(
                "row {row_no}: expected entity {i}, found {entity}"
            )));
        }
        rows.push((1..rec.len()).map(parse).collect::<Result<Vec<_>>>()?);
    }
    Ok(rows)
}

/// Dose effects `clamp(mu(D_d, x) - mu(0, x), -1, 1)` for every row.
pub fn cade_matrix<E: DoseResponse + ?Sized>(
    est: &E,
    cov: &CovariateTable,
    delta: usize,
) -> Result<CadeMatrix> {
    if delta < 1 {
        return Err(Error::InvalidArgument("delta must be >= 1".into()));
    }
    let grid = dose_grid(delta);
    let rows: Vec<Vec<f64>> = (0..cov.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = cov.row(i);
            let base = est.predict(0.0, x);
            let mut row = Vec::with_capacity(grid.len());
            row.push(0.0);
            row.extend(
                grid[1..]
                    .iter()
                    .map(|&s| (est.predict(s, x) - base).clamp(-1.0, 1.0)),
            );
            row
        })
        .collect();
    CadeMatrix::from_rows(rows, Provenance::Estimated)
}

/// The true dose-effect matrix.
pub fn ground_truth_cade(
    gt: &GroundTruth,
    cov: &CovariateTable,
    delta: usize,
) -> Result<CadeMatrix> {
    let rows = (0..cov.n_rows())
        .map(|i| {
            let x = cov.row(i);
            gt.true_cade_vector(x, gt.protected_of(x), delta)
        })
        .collect::<Result<Vec<_>>>()?;
    CadeMatrix::from_rows(rows, Provenance::GroundTruth)
}

/// Mean integrated squared error between the estimate and the true
/// dose response, integrated over `[0, 1]` by the composite trapezoid rule
/// on `grid_points` equally spaced doses.
pub fn mise<E: DoseResponse + ?Sized>(
    est: &E,
    gt: &GroundTruth,
    cov: &CovariateTable,
    grid_points: usize,
) -> Result<f64> {
    if grid_points < 2 {
        return Err(Error::InvalidArgument(
            "MISE needs at least 2 grid points".into(),
        ));
    }
    if !gt.is_frozen() {
        return Err(Error::Validation(
            "ground truth normalization is not frozen".into(),
        ));
    }
    if cov.n_rows() == 0 {
        return Err(Error::InvalidArgument("no rows to evaluate".into()));
    }
    let h = 1.0 / (grid_points - 1) as f64;
    let per_row: Vec<f64> = (0..cov.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = cov.row(i);
            let a = gt.protected_of(x);
            let sq: Vec<f64> = (0..grid_points)
                .map(|k| {
                    let s = k as f64 * h;
                    let truth = gt.true_cadr(s, x, a).expect("checked frozen");
                    (truth - est.predict(s, x)).powi(2)
                })
                .collect();
            let inner: f64 = sq[1..grid_points - 1].iter().sum();
            h * (0.5 * (sq[0] + sq[grid_points - 1]) + inner)
        })
        .collect();
    Ok(per_row.iter().sum::<f64>() / cov.n_rows() as f64)
}
