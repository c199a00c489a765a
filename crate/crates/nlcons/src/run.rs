//! Scenario execution: integrate every initial state, write per-trajectory
//! files, aggregate verdicts into one report.

use std::path::{Path, PathBuf};

use log::{info, warn};
use nlcons_core::analysis::{classify_scenario, convergence_verdict, limit_set_for, AnalysisError, PERRON_TOLERANCE};
use nlcons_core::graph::{left_perron, GraphError, LeftPerronVector};
use nlcons_core::integrator::{chatter_slack, integrate, IntegratorError};
use nlcons_core::lyapunov::{evaluate_lyapunov, LyapunovError};
use thiserror::Error;

use crate::batch::par_map_ordered;
use crate::format::{DocumentFormat, FormatError};
use crate::output::{
    default_events_path, indexed_path, write_events_csv, write_lyapunov_csv, write_trajectory_csv, OutputError,
    RunReport, TrajectoryReport,
};
use crate::scenario::{Overrides, ResolvedScenario, Scenario, ScenarioError};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("left Perron vector: {0}")]
    Perron(#[from] GraphError),
    #[error("initial condition {index}: {source}")]
    Integrate { index: usize, source: IntegratorError },
    #[error("initial condition {index}: {source}")]
    Lyapunov { index: usize, source: LyapunovError },
    #[error("initial condition {index}: {source}")]
    Analysis { index: usize, source: AnalysisError },
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Report(#[from] FormatError),
}

impl RunError {
    /// Every error exits with the usage/parse status; only failed verdicts
    /// produce the assertion status.
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub overrides: Overrides,
    /// Base for output paths; defaults to the scenario file's directory.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: RunReport,
    /// Every file written, in a fixed order.
    pub written: Vec<PathBuf>,
}

fn scenario_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn run_scenario(path: &Path, opts: &RunOptions) -> Result<RunOutcome, RunError> {
    let mut scenario = Scenario::from_path(path)?;
    scenario.apply(&opts.overrides);
    let base = scenario_dir(path);
    let resolved = scenario.resolve(&base)?;
    let out_dir = opts.out_dir.clone().unwrap_or(base);
    run_resolved(&resolved, &out_dir)
}

/// Relative output names of one trajectory, in write order.
struct TrajectoryFiles {
    trajectory: Option<PathBuf>,
    events: Option<PathBuf>,
    lyapunov: Option<PathBuf>,
}

fn files_for(res: &ResolvedScenario, index: usize) -> TrajectoryFiles {
    let count = res.initials.len();
    let o = &res.outputs;
    let events = o
        .events_csv
        .clone()
        .or_else(|| o.trajectory_csv.as_deref().map(default_events_path));
    TrajectoryFiles {
        trajectory: o.trajectory_csv.as_deref().map(|p| indexed_path(p, index, count)),
        events: events.map(|p| indexed_path(&p, index, count)),
        lyapunov: o.lyapunov_csv.as_deref().map(|p| indexed_path(p, index, count)),
    }
}

pub fn run_resolved(res: &ResolvedScenario, out_dir: &Path) -> Result<RunOutcome, RunError> {
    let sys = &res.system;
    let cfg = &res.config;
    let class = classify_scenario(sys);
    let w: Option<LeftPerronVector> = if sys.structure().strongly_connected {
        Some(left_perron(sys.laplacian(), PERRON_TOLERANCE)?)
    } else {
        None
    };
    info!(
        "{} nodes, class {:?}, {} initial states, dt {}, t_end {}",
        sys.dim(),
        class,
        res.initials.len(),
        cfg.dt,
        cfg.t_end
    );

    let reports = par_map_ordered(&res.initials, |index, x0| {
        let traj = integrate(sys, x0, cfg).map_err(|source| RunError::Integrate { index, source })?;
        let files = files_for(res, index);
        let mut written = Vec::new();
        if let Some(rel) = &files.trajectory {
            write_trajectory_csv(&out_dir.join(rel), &traj)?;
            written.push(rel.clone());
        }
        if let Some(rel) = &files.events {
            write_events_csv(&out_dir.join(rel), &traj.events)?;
            written.push(rel.clone());
        }
        if let Some(rel) = &files.lyapunov {
            let trace = evaluate_lyapunov(sys, &traj, w.as_ref()).map_err(|source| RunError::Lyapunov { index, source })?;
            write_lyapunov_csv(&out_dir.join(rel), &trace)?;
            written.push(rel.clone());
        }
        let verdict = convergence_verdict(sys, &traj, cfg, w.as_ref()).map_err(|source| RunError::Analysis { index, source })?;
        Ok::<_, RunError>(TrajectoryReport {
            index,
            initial_state: x0.clone(),
            steps: traj.len(),
            events: traj.events.len(),
            passed: verdict.passed(),
            verdict,
            files: written,
        })
    })?;

    for r in &reports {
        if r.passed {
            info!("initial condition {}: pass (entry time {:?})", r.index, r.verdict.entry_time);
        } else {
            warn!(
                "initial condition {}: FAIL (in limit set {}, lyapunov {})",
                r.index, r.verdict.in_limit_set, r.verdict.lyapunov_pass
            );
        }
    }
    let passed = reports.iter().all(|r| r.passed);
    let report = RunReport {
        scenario_class: class,
        limit_set_kind: limit_set_for(class),
        asserted: reports.first().is_some_and(|r| r.verdict.asserted),
        nodes: sys.dim(),
        dt: cfg.dt,
        t_end: cfg.t_end,
        chatter_slack_max: res
            .initials
            .iter()
            .map(|x0| chatter_slack(sys, cfg, x0))
            .fold(0.0, f64::max),
        passed,
        trajectories: reports,
    };

    let mut written: Vec<PathBuf> = report
        .trajectories
        .iter()
        .flat_map(|r| r.files.iter().map(|f| out_dir.join(f)))
        .collect();
    if let Some(rel) = &res.outputs.report {
        let full = out_dir.join(rel);
        let text = DocumentFormat::from_path(&full)?.render(&report)?;
        if let Some(dir) = full.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|source| FormatError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&full, text).map_err(|source| FormatError::Io {
            path: full.clone(),
            source,
        })?;
        written.push(full);
    }
    Ok(RunOutcome {
        exit_code: if passed { EXIT_PASS } else { EXIT_ASSERTION },
        report,
        written,
    })
}
