//! Limit-set membership, scenario classification and convergence verdicts.

use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{left_perron, GraphError, LeftPerronVector};
use crate::inclusion::ConsensusSystem;
use crate::integrator::{chatter_slack, IntegratorConfig, Trajectory};
use crate::lyapunov::{
    evaluate_lyapunov, max_coordinate, min_coordinate, monotonicity_report, LyapunovError, MonotonicityReport,
};
use crate::nonlinearity::{
    filippov_interval_snapped, intersect_intervals, FilippovInterval, Nonlinearity, SNAP_TOLERANCE,
};

/// Boundary snap applied by the verdict membership tests.
pub const MEMBERSHIP_SNAP: f64 = 1e-9;
/// Residual tolerance used when a verdict has to compute `w` itself.
pub const PERRON_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("system is not homogeneous")]
    NotHomogeneous,
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
    #[error(transparent)]
    Perron(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScenarioClass {
    /// Strongly connected, heterogeneous nonlinearities allowed.
    StronglyConnected,
    /// Spanning tree with one shared nonlinearity.
    SpanningTreeHomogeneous,
    /// Spanning tree with identical unbiased symmetric quantizers.
    SpanningTreeQuantized,
    /// No convergence result applies; simulated without a verdict.
    Unsupported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LimitSetKind {
    D1,
    D2,
    Q,
}

fn snapped_intervals(sys: &ConsensusSystem, x: &[f64], band: f64) -> Vec<FilippovInterval> {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| filippov_interval_snapped(sys.nonlinearity(i), xi, band))
        .collect()
}

/// Some `a·𝟙` lies in the product of the coordinate intervals.
pub fn in_d1(sys: &ConsensusSystem, x: &[f64]) -> bool {
    in_d1_snapped(sys, x, 0.0)
}

pub fn in_d1_snapped(sys: &ConsensusSystem, x: &[f64], band: f64) -> bool {
    d1_gap_snapped(sys, x, band) <= 0.0
}

/// `max lo − min hi` over the coordinate intervals; non-positive exactly on
/// the set.
pub fn d1_gap(sys: &ConsensusSystem, x: &[f64]) -> f64 {
    d1_gap_snapped(sys, x, 0.0)
}

fn d1_gap_snapped(sys: &ConsensusSystem, x: &[f64], band: f64) -> f64 {
    let iv = snapped_intervals(sys, x, band);
    let lo = iv.iter().map(|i| i.lo).fold(f64::NEG_INFINITY, f64::max);
    let hi = iv.iter().map(|i| i.hi).fold(f64::INFINITY, f64::min);
    lo - hi
}

/// The intervals at the extreme coordinates intersect.
pub fn in_d2(sys: &ConsensusSystem, x: &[f64]) -> Result<bool, AnalysisError> {
    in_d2_snapped(sys, x, 0.0)
}

pub fn in_d2_snapped(sys: &ConsensusSystem, x: &[f64], band: f64) -> Result<bool, AnalysisError> {
    if !sys.is_homogeneous() {
        return Err(AnalysisError::NotHomogeneous);
    }
    if x.is_empty() {
        return Ok(true);
    }
    let f = sys.nonlinearity(0);
    let a = filippov_interval_snapped(f, min_coordinate(x), band);
    let b = filippov_interval_snapped(f, max_coordinate(x), band);
    Ok(matches!(intersect_intervals(&[a, b]), Ok(Some(_))))
}

/// Some integer `k` with every `xᵢ ∈ [(k − ½)Δ, (k + ½)Δ]`.
pub fn in_q(delta: f64, x: &[f64]) -> bool {
    in_q_snapped(delta, x, 0.0)
}

pub fn in_q_snapped(delta: f64, x: &[f64], band: f64) -> bool {
    if x.is_empty() {
        return true;
    }
    // Same relative snap the quantizer applies to its own cell boundaries.
    let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let b = (band + SNAP_TOLERANCE * scale) / delta;
    let lo = libm::ceil(x.iter().map(|v| v / delta - 0.5).fold(f64::NEG_INFINITY, f64::max) - b);
    let hi = libm::floor(x.iter().map(|v| v / delta + 0.5).fold(f64::INFINITY, f64::min) + b);
    lo <= hi
}

/// Common `Δ` when every node uses the same unbiased symmetric quantizer.
pub fn shared_symmetric_delta(sys: &ConsensusSystem) -> Option<f64> {
    let mut delta = None;
    for f in sys.nonlinearities() {
        match f.descriptor() {
            Some(Nonlinearity::Symmetric { delta: d, bias: 0.0 }) => match delta {
                None => delta = Some(d),
                Some(prev) if prev == d => {}
                Some(_) => return None,
            },
            _ => return None,
        }
    }
    delta
}

pub fn classify_scenario(sys: &ConsensusSystem) -> ScenarioClass {
    let s = sys.structure();
    if s.has_spanning_tree && shared_symmetric_delta(sys).is_some() {
        ScenarioClass::SpanningTreeQuantized
    } else if s.has_spanning_tree && sys.is_homogeneous() {
        ScenarioClass::SpanningTreeHomogeneous
    } else if s.strongly_connected {
        ScenarioClass::StronglyConnected
    } else {
        ScenarioClass::Unsupported
    }
}

pub fn limit_set_for(class: ScenarioClass) -> LimitSetKind {
    match class {
        ScenarioClass::SpanningTreeQuantized => LimitSetKind::Q,
        ScenarioClass::SpanningTreeHomogeneous => LimitSetKind::D2,
        ScenarioClass::StronglyConnected | ScenarioClass::Unsupported => LimitSetKind::D1,
    }
}

/// Membership in `kind` with boundary snap `band`. `D2` falls back to `D1`
/// and `Q` to `D2` when the system does not carry the required structure.
pub fn in_limit_set(sys: &ConsensusSystem, kind: LimitSetKind, x: &[f64], band: f64) -> bool {
    match kind {
        LimitSetKind::Q => match shared_symmetric_delta(sys) {
            Some(d) => in_q_snapped(d, x, band),
            None => in_limit_set(sys, LimitSetKind::D2, x, band),
        },
        LimitSetKind::D2 => in_d2_snapped(sys, x, band).unwrap_or_else(|_| in_d1_snapped(sys, x, band)),
        LimitSetKind::D1 => in_d1_snapped(sys, x, band),
    }
}

/// Index from which every recorded state is in the set.
pub fn entry_index(sys: &ConsensusSystem, traj: &Trajectory, kind: LimitSetKind, band: f64) -> Option<usize> {
    let mut entry = None;
    for (k, x) in traj.states.iter().enumerate().rev() {
        if in_limit_set(sys, kind, x, band) {
            entry = Some(k);
        } else {
            break;
        }
    }
    entry
}

/// Recorded states outside the set after the first one inside it.
pub fn invariance_violations(sys: &ConsensusSystem, traj: &Trajectory, kind: LimitSetKind, band: f64) -> usize {
    let mut inside = false;
    let mut violations = 0;
    for x in &traj.states {
        let now = in_limit_set(sys, kind, x, band);
        if inside && !now {
            violations += 1;
        }
        inside |= now;
    }
    violations
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub scenario_class: ScenarioClass,
    /// Whether the class carries a convergence claim that this report checks.
    pub asserted: bool,
    pub in_limit_set: bool,
    pub limit_set_kind: LimitSetKind,
    pub entry_time: Option<f64>,
    pub terminal_spread: f64,
    pub final_state: Vec<f64>,
    pub lyapunov: MonotonicityReport,
    /// Pass flag over the sequences the class asserts: `V₁` for strongly
    /// connected heterogeneous systems, `V` and `W` otherwise.
    pub lyapunov_pass: bool,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        !self.asserted || (self.in_limit_set && self.lyapunov_pass)
    }
}

pub fn convergence_verdict(
    sys: &ConsensusSystem,
    traj: &Trajectory,
    cfg: &IntegratorConfig,
    w: Option<&LeftPerronVector>,
) -> Result<ConvergenceReport, AnalysisError> {
    let (Some(x0), Some(last)) = (traj.states.first(), traj.final_state()) else {
        return Err(AnalysisError::EmptyTrajectory);
    };
    let class = classify_scenario(sys);
    let kind = limit_set_for(class);
    let computed;
    let w = match (w, class) {
        (Some(w), _) => Some(w),
        (None, ScenarioClass::StronglyConnected) => {
            computed = left_perron(sys.laplacian(), PERRON_TOLERANCE)?;
            Some(&computed)
        }
        _ => None,
    };
    let trace = evaluate_lyapunov(sys, traj, w)?;
    let slack = chatter_slack(sys, cfg, x0);
    let lyapunov = monotonicity_report(&trace, slack);
    let lyapunov_pass = match class {
        ScenarioClass::StronglyConnected => lyapunov.v1.is_some_and(|c| c.pass),
        _ => lyapunov.v.pass && lyapunov.w.pass,
    };
    let entry = entry_index(sys, traj, kind, MEMBERSHIP_SNAP);
    Ok(ConvergenceReport {
        scenario_class: class,
        asserted: class != ScenarioClass::Unsupported,
        in_limit_set: entry.is_some(),
        limit_set_kind: kind,
        entry_time: entry.map(|k| traj.times[k]),
        terminal_spread: max_coordinate(last) - min_coordinate(last),
        final_state: last.to_vec(),
        lyapunov,
        lyapunov_pass,
    })
}
