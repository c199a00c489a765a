//! `V = max xᵢ`, `W = −min xᵢ` and `V₁ = wᵀF(x)` along trajectories.

use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::LeftPerronVector;
use crate::inclusion::ConsensusSystem;
use crate::integrator::Trajectory;
use crate::nonlinearity::NonlinearityError;

/// Tolerance for membership in the argmax/argmin sets.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LyapunovError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("weight vector has {got} entries, system has {expected}")]
    WeightLength { expected: usize, got: usize },
    #[error("primitive of coordinate {coordinate}: {source}")]
    Primitive {
        coordinate: usize,
        source: NonlinearityError,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LyapunovTrace {
    pub times: Vec<f64>,
    pub v_max: Vec<f64>,
    pub w_neg_min: Vec<f64>,
    pub v1: Option<Vec<f64>>,
    pub argmax_sets: Vec<Vec<usize>>,
    pub argmin_sets: Vec<Vec<usize>>,
}

pub fn max_coordinate(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_coordinate(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn argmax_set(x: &[f64]) -> Vec<usize> {
    let m = max_coordinate(x);
    (0..x.len()).filter(|&i| x[i] >= m - TIE_TOLERANCE).collect()
}

pub fn argmin_set(x: &[f64]) -> Vec<usize> {
    let m = min_coordinate(x);
    (0..x.len()).filter(|&i| x[i] <= m + TIE_TOLERANCE).collect()
}

/// `Σᵢ wᵢ·Fᵢ(xᵢ)`.
pub fn v1_value(sys: &ConsensusSystem, w: &[f64], x: &[f64]) -> Result<f64, LyapunovError> {
    let mut acc = 0.0;
    for (i, (&wi, &xi)) in w.iter().zip(x).enumerate() {
        let p = sys
            .nonlinearity(i)
            .primitive(xi)
            .map_err(|source| LyapunovError::Primitive { coordinate: i, source })?;
        acc += wi * p;
    }
    Ok(acc)
}

pub fn evaluate_lyapunov(
    sys: &ConsensusSystem,
    traj: &Trajectory,
    w: Option<&LeftPerronVector>,
) -> Result<LyapunovTrace, LyapunovError> {
    if traj.is_empty() {
        return Err(LyapunovError::EmptyTrajectory);
    }
    if let Some(w) = w {
        if w.w.len() != sys.dim() {
            return Err(LyapunovError::WeightLength {
                expected: sys.dim(),
                got: w.w.len(),
            });
        }
    }
    let v1 = match w {
        Some(w) => Some(
            traj.states
                .iter()
                .map(|x| v1_value(sys, &w.w, x))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    Ok(LyapunovTrace {
        times: traj.times.clone(),
        v_max: traj.states.iter().map(|x| max_coordinate(x)).collect(),
        w_neg_min: traj.states.iter().map(|x| -min_coordinate(x)).collect(),
        v1,
        argmax_sets: traj.states.iter().map(|x| argmax_set(x)).collect(),
        argmin_sets: traj.states.iter().map(|x| argmin_set(x)).collect(),
    })
}

/// Forward-increase check of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceCheck {
    /// `max_k seq[k+1] − seq[k]`; zero for sequences shorter than two.
    pub max_increase: f64,
    /// First `k` with `seq[k+1] − seq[k] > slack`.
    pub first_violation: Option<usize>,
    pub pass: bool,
}

pub fn check_sequence(seq: &[f64], slack: f64) -> SequenceCheck {
    let mut max_increase = if seq.len() < 2 { 0.0 } else { f64::NEG_INFINITY };
    let mut first_violation = None;
    for (k, w) in seq.windows(2).enumerate() {
        let inc = w[1] - w[0];
        if inc > max_increase {
            max_increase = inc;
        }
        if first_violation.is_none() && inc > slack {
            first_violation = Some(k);
        }
    }
    SequenceCheck {
        max_increase,
        first_violation,
        pass: first_violation.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MonotonicityReport {
    pub slack: f64,
    pub v: SequenceCheck,
    pub w: SequenceCheck,
    pub v1: Option<SequenceCheck>,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.v.pass && self.w.pass && self.v1.is_none_or(|c| c.pass)
    }
}

pub fn monotonicity_report(trace: &LyapunovTrace, slack: f64) -> MonotonicityReport {
    MonotonicityReport {
        slack,
        v: check_sequence(&trace.v_max, slack),
        w: check_sequence(&trace.w_neg_min, slack),
        v1: trace.v1.as_deref().map(|s| check_sequence(s, slack)),
    }
}
