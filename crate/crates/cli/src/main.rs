use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dosealloc::alloc::{load_problem, save_problem, Policy};
use dosealloc::config::{DataSource, EstimatorKind, ExperimentConfig};
use dosealloc::estimators::{cade_matrix, mise};
use dosealloc::experiments::{self as exp, Table};
use dosealloc::{AllocationProblem, CostMatrix, Fairness, SolveReport, Solver};

#[derive(Parser)]
#[command(
    name = "dosealloc",
    version,
    about = "Dose allocation under budget and fairness constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Covariate CSV (IHDP layout, 25 feature columns).
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use N synthetic covariate rows instead of a CSV.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Covariate CSV has a header row.
    #[arg(long, requires = "data")]
    header: bool,
    /// Leading columns to skip in the covariate CSV.
    #[arg(long, value_name = "K", requires = "data")]
    skip_columns: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a semi-synthetic dataset and its true effect matrix.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Confounding amplifier for the protected group.
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
    /// Fit an estimator and write its effect matrix as an allocation problem.
    Fit {
        #[command(flatten)]
        common: Common,
        /// oracle, rf or binned; defaults to the config's estimator.
        #[arg(long)]
        estimator: Option<EstimatorKind>,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
    /// Solve an allocation problem written by `fit`.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Directory with cade.csv, meta.csv and optionally cost.csv.
        #[arg(long, value_name = "DIR")]
        problem: PathBuf,
        #[arg(long)]
        budget: Option<f64>,
        /// greedy, dp, bnb or exact; defaults to the config's solver.
        #[arg(long)]
        solver: Option<Solver>,
        /// Dose-disparity slack, a number or `disabled`.
        #[arg(long, value_parser = parse_eps)]
        eps_dt: Option<Slack>,
        /// Outcome-disparity slack, a number or `disabled`.
        #[arg(long, value_parser = parse_eps)]
        eps_do: Option<Slack>,
    },
    /// Estimator comparison: MISE and normalized AUUC.
    Exp1 {
        #[command(flatten)]
        common: Common,
    },
    /// Fairness slack grid over the confounding levels.
    Exp2 {
        #[command(flatten)]
        common: Common,
    },
    /// Cost-sensitive versus cost-insensitive policies.
    Exp3 {
        #[command(flatten)]
        common: Common,
    },
    /// Solver wall times on oversampled data.
    Scalability {
        #[command(flatten)]
        common: Common,
    },
    /// Policy value across dose-grid resolutions.
    DeltaSweep {
        #[command(flatten)]
        common: Common,
    },
}

/// A slack value; `None` means the constraint is disabled.
#[derive(Debug, Clone, Copy)]
struct Slack(Option<f64>);

fn parse_eps(s: &str) -> std::result::Result<Slack, String> {
    if s.eq_ignore_ascii_case("disabled") {
        return Ok(Slack(None));
    }
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err("slack must lie in [0, 1]".into());
    }
    Ok(Slack(Some(v)))
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = c.synthetic {
        cfg.data = DataSource::Synthetic(n);
    }
    if let Some(path) = &c.data {
        cfg.data = DataSource::Csv {
            path: path.clone(),
            has_header: c.header,
            skip_columns: c.skip_columns.unwrap_or(0),
        };
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn write_all(cfg: &ExperimentConfig, name: &str, tables: &[Table]) -> Result<()> {
    let paths = exp::write_tables(cfg, name, tables)
        .with_context(|| format!("writing results to {}", cfg.out_dir.display()))?;
    report(&paths);
    Ok(())
}

fn generate(cfg: &ExperimentConfig, gamma: f64) -> Result<()> {
    let prep = exp::prepare(cfg, gamma)?;
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data_path = dir.join("dataset.csv");
    prep.data.save_csv(&data_path)?;
    let t_path = dir.join("cade_true.csv");
    prep.t_true.save_csv(&t_path)?;
    let meta = exp::metadata(cfg, "generate");
    let meta_path = dir.join("dataset.meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")?;
    report(&[data_path, t_path, meta_path]);
    Ok(())
}

fn fit(cfg: &ExperimentConfig, kind: EstimatorKind, gamma: f64) -> Result<()> {
    let prep = exp::prepare(cfg, gamma)?;
    let est = exp::fit_estimator(kind, &prep, cfg)?;
    let cov = &prep.data.covariates;
    let m = mise(&est, &prep.truth, cov, cfg.mise_grid_points)?;
    let t_hat = cade_matrix(&est, cov, cfg.delta)?;
    let n = t_hat.n_rows();
    let prob = AllocationProblem::new(
        t_hat,
        CostMatrix::proportional(n, cfg.delta),
        vec![1.0; n],
        cfg.fairness_budget,
        prep.data.protected.clone(),
        Fairness::none(),
    )?;
    let dir = &cfg.out_dir;
    let problem_dir = dir.join("problem");
    save_problem(&prob, &problem_dir)?;
    let model = dir.join(format!("model_{}.json", kind.name()));
    est.save_json(&model)?;
    let t_path = dir.join("cade_true.csv");
    prep.t_true.save_csv(&t_path)?;
    println!("estimator {} mise {m:.6}", kind.name());
    report(&[model, problem_dir, t_path]);
    Ok(())
}

fn allocate(
    cfg: &ExperimentConfig,
    dir: &Path,
    budget: Option<f64>,
    solver: Option<Solver>,
    eps_dt: Option<Slack>,
    eps_do: Option<Slack>,
) -> Result<()> {
    let mut prob =
        load_problem(dir).with_context(|| format!("loading problem from {}", dir.display()))?;
    if let Some(b) = budget {
        prob = prob.with_budget(b)?;
    }
    let mut fairness = prob.fairness.clone();
    if let Some(e) = eps_dt {
        fairness.eps_dt = e.0;
    }
    if let Some(e) = eps_do {
        fairness.eps_do = e.0;
    }
    prob = AllocationProblem { fairness, ..prob };
    let cfg = ExperimentConfig {
        solver: solver.unwrap_or(cfg.solver),
        ..cfg.clone()
    };
    let rep: SolveReport = exp::solve_configured(&cfg, &prob)?;
    for w in &rep.warnings {
        log::warn!("{w}");
    }
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let policy_path = out.join("policy.csv");
    write_policy(&rep.policy, &policy_path)?;
    let report_path = out.join("solve_report.csv");
    std::fs::write(
        &report_path,
        format!("{}\n{}\n", SolveReport::CSV_HEADER, rep.csv_row()),
    )?;
    println!(
        "status {} objective {} cost {} nodes {}",
        rep.status.as_str(),
        rep.objective,
        rep.cost,
        rep.nodes
    );
    report(&[policy_path, report_path]);
    Ok(())
}

fn write_policy(p: &Policy, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common, gamma } => generate(&load_config(&common)?, gamma),
        Command::Fit {
            common,
            estimator,
            gamma,
        } => {
            let cfg = load_config(&common)?;
            fit(&cfg, estimator.unwrap_or(cfg.estimator), gamma)
        }
        Command::Allocate {
            common,
            problem,
            budget,
            solver,
            eps_dt,
            eps_do,
        } => allocate(
            &load_config(&common)?,
            &problem,
            budget,
            solver,
            eps_dt,
            eps_do,
        ),
        Command::Exp1 { common } => {
            let cfg = load_config(&common)?;
            let r = exp::run_exp1(&cfg)?;
            for row in &r.rows {
                println!(
                    "{:<8} mise {:.4} auuc greedy {:?} exact {:?}",
                    row.estimator, row.mise, row.auuc_greedy, row.auuc_exact
                );
            }
            write_all(&cfg, "exp1", &r.tables())
        }
        Command::Exp2 { common } => {
            let cfg = load_config(&common)?;
            let r = exp::run_exp2(&cfg)?;
            let limits: usize = r.cells.iter().map(|c| c.limit_solves).sum();
            if limits > 0 {
                log::warn!("{limits} solves stopped at a node or time limit");
            }
            write_all(&cfg, "exp2", &r.tables())
        }
        Command::Exp3 { common } => {
            let cfg = load_config(&common)?;
            write_all(&cfg, "exp3", &exp::run_exp3(&cfg)?.tables())
        }
        Command::Scalability { common } => {
            let cfg = load_config(&common)?;
            let rows = exp::run_scalability(&cfg)?;
            write_all(&cfg, "scalability", &[exp::scalability_table(&rows)])
        }
        Command::DeltaSweep { common } => {
            let cfg = load_config(&common)?;
            let rows = exp::run_delta_sweep(&cfg)?;
            write_all(&cfg, "delta_sweep", &[exp::delta_table(&rows)])
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = match &cli.command {
        Command::Generate { common, .. }
        | Command::Fit { common, .. }
        | Command::Allocate { common, .. }
        | Command::Exp1 { common }
        | Command::Exp2 { common }
        | Command::Exp3 { common }
        | Command::Scalability { common }
        | Command::DeltaSweep { common } => common.verbose,
    };
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
