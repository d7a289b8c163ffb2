//! Problem files: `cade.csv`, `cost.csv` and `meta.csv` in one directory.
//!
//! `meta.csv` has columns `entity,b,a,budget,eps_dt,eps_do`. The budget and
//! slack columns repeat the same value on every row; a slack of `disabled`
//! (or an empty cell) turns the constraint pair off.

use std::io::Write;
use std::path::Path;

use super::{AllocationProblem, CostMatrix, Fairness};
use crate::error::{Error, Result};
use crate::estimators::{cade, CadeMatrix, Provenance};

pub fn save_problem(prob: &AllocationProblem, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    prob.cade.save_csv(dir.join("cade.csv"))?;
    prob.costs.save_csv(dir.join("cost.csv"))?;
    let eps = |e: Option<f64>| e.map_or_else(|| "disabled".to_string(), |v| v.to_string());
    cade::write_matrix_file(&dir.join("meta.csv"), |w| {
        writeln!(w, "entity,b,a,budget,eps_dt,eps_do")?;
        for i in 0..prob.n_entities() {
            writeln!(
                w,
                "{i},{},{},{},{},{}",
                prob.benefits[i],
                prob.groups[i],
                prob.budget,
                eps(prob.fairness.eps_dt),
                eps(prob.fairness.eps_do)
            )?;
        }
        Ok(())
    })
}

fn parse_eps(cell: &str, row: usize, column: usize) -> Result<Option<f64>> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("disabled") {
        return Ok(None);
    }
    cell.parse::<f64>().map(Some).map_err(|e| Error::Parse {
        row,
        column,
        message: e.to_string(),
    })
}

pub fn load_problem(dir: impl AsRef<Path>) -> Result<AllocationProblem> {
    let dir = dir.as_ref();
    let t = CadeMatrix::load_csv(dir.join("cade.csv"), Provenance::Estimated)?;
    let cost_path = dir.join("cost.csv");
    let costs = if cost_path.exists() {
        CostMatrix::load_csv(&cost_path)?
    } else {
        CostMatrix::proportional(t.n_rows(), t.delta())
    };
    let meta_path = dir.join("meta.csv");
    let file = std::fs::File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: 0,
            message: e.to_string(),
        })?
        .clone();
    let expected = ["entity", "b", "a", "budget", "eps_dt", "eps_do"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Validation(format!(
            "meta.csv header must be {}",
            expected.join(",")
        )));
    }
    let mut benefits = Vec::new();
    let mut groups = Vec::new();
    let mut shared: Option<(f64, Option<f64>, Option<f64>)> = None;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        let num = |c: usize| -> Result<f64> {
            rec[c].parse::<f64>().map_err(|e| Error::Parse {
                row,
                column: c + 1,
                message: e.to_string(),
            })
        };
        if num(0)? != k as f64 {
            return Err(Error::Validation(format!(
                "meta.csv row {row}: entities must be 0..N in order"
            )));
        }
        benefits.push(num(1)?);
        let a = num(2)?;
        if a != 0.0 && a != 1.0 {
            return Err(Error::Validation(format!(
                "meta.csv row {row}: group must be 0 or 1"
            )));
        }
        groups.push(a as u8);
        let this = (
            num(3)?,
            parse_eps(&rec[4], row, 5)?,
            parse_eps(&rec[5], row, 6)?,
        );
        match shared {
            None => shared = Some(this),
            Some(s) if s == this => {}
            Some(_) => {
                return Err(Error::Validation(format!(
                    "meta.csv row {row}: budget and slacks must match the first row"
                )))
            }
        }
    }
    let (budget, eps_dt, eps_do) =
        shared.ok_or_else(|| Error::Validation("meta.csv has no rows".into()))?;
    AllocationProblem::new(
        t,
        costs,
        benefits,
        budget,
        groups,
        Fairness::new(eps_dt, eps_do),
    )
}
