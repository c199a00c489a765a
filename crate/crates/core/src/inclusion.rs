//! The differential inclusion `ẋ ∈ −L·⨉ᵢ 𝓕[fᵢ](xᵢ)` and concrete selections
//! from its right-hand side.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{analyze_structure, laplacian, LaplacianMatrix, StructureReport, WeightedDigraph};
use crate::linalg::{symmetric_eigen, DenseMatrix, Lu};
use crate::nonlinearity::{filippov_interval, FilippovInterval, MonotoneFn, Nonlinearity};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InclusionError {
    #[error("expected {expected} nonlinearities (one per node), got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("nonlinearity {index}: {source}")]
    InvalidNonlinearity {
        index: usize,
        source: crate::nonlinearity::NonlinearityError,
    },
    #[error("state has {got} coordinates, system has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// `ẋ = −L·f(x)` on a fixed digraph.
#[derive(Debug, Clone)]
pub struct ConsensusSystem {
    graph: WeightedDigraph,
    laplacian: LaplacianMatrix,
    structure: StructureReport,
    nonlinearities: Vec<Arc<dyn MonotoneFn>>,
    homogeneous: bool,
}

impl ConsensusSystem {
    pub fn new(graph: WeightedDigraph, nonlinearities: Vec<Arc<dyn MonotoneFn>>) -> Result<Self, InclusionError> {
        let n = graph.node_count();
        if nonlinearities.len() != n {
            return Err(InclusionError::CountMismatch {
                expected: n,
                got: nonlinearities.len(),
            });
        }
        let homogeneous = is_homogeneous(&nonlinearities);
        let laplacian = laplacian(&graph);
        let structure = analyze_structure(&graph);
        Ok(Self {
            graph,
            laplacian,
            structure,
            nonlinearities,
            homogeneous,
        })
    }

    /// Every node measures through the same shared function.
    pub fn homogeneous(graph: WeightedDigraph, f: Arc<dyn MonotoneFn>) -> Self {
        let n = graph.node_count();
        Self::new(graph, vec![f; n]).expect("one function per node by construction")
    }

    pub fn from_descriptors(graph: WeightedDigraph, descriptors: Vec<Nonlinearity>) -> Result<Self, InclusionError> {
        let mut fns: Vec<Arc<dyn MonotoneFn>> = Vec::with_capacity(descriptors.len());
        for (index, d) in descriptors.into_iter().enumerate() {
            d.validate()
                .map_err(|source| InclusionError::InvalidNonlinearity { index, source })?;
            fns.push(Arc::new(d));
        }
        Self::new(graph, fns)
    }

    pub fn dim(&self) -> usize {
        self.graph.node_count()
    }

    pub fn graph(&self) -> &WeightedDigraph {
        &self.graph
    }

    pub fn laplacian(&self) -> &LaplacianMatrix {
        &self.laplacian
    }

    pub fn structure(&self) -> &StructureReport {
        &self.structure
    }

    pub fn nonlinearities(&self) -> &[Arc<dyn MonotoneFn>] {
        &self.nonlinearities
    }

    pub fn nonlinearity(&self, i: usize) -> &dyn MonotoneFn {
        self.nonlinearities[i].as_ref()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<(), InclusionError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(InclusionError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            })
        }
    }

    /// `−L·ν`.
    pub fn flow(&self, nu: &[f64]) -> Vec<f64> {
        self.laplacian.apply(nu).into_iter().map(|v| -v).collect()
    }
}

/// Built-ins compare by descriptor; black-box functions only count as
/// identical when they are the same shared instance.
fn is_homogeneous(fns: &[Arc<dyn MonotoneFn>]) -> bool {
    let Some(first) = fns.first() else {
        return true;
    };
    match first.descriptor() {
        Some(d) => fns.iter().all(|f| f.descriptor().as_ref() == Some(&d)),
        None => fns.iter().all(|f| Arc::ptr_eq(f, first)),
    }
}

/// A measurable selection `ν ∈ ⨉𝓕[fᵢ](xᵢ)` and the velocity it induces.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionState {
    pub nu: Vec<f64>,
    /// Coordinates held on a discontinuity surface by equivalent control.
    pub sliding_mask: Vec<bool>,
    /// `−L·ν`.
    pub derivative: Vec<f64>,
}

pub fn set_valued_rhs(sys: &ConsensusSystem, x: &[f64]) -> Vec<FilippovInterval> {
    x.iter()
        .zip(&sys.nonlinearities)
        .map(|(&xi, f)| filippov_interval(f.as_ref(), xi))
        .collect()
}

/// Midpoint of every interval; exact values at continuity points.
pub fn nominal_selection(sys: &ConsensusSystem, x: &[f64]) -> SelectionState {
    let intervals = set_valued_rhs(sys, x);
    nominal_from_intervals(sys, &intervals)
}

pub(crate) fn nominal_from_intervals(sys: &ConsensusSystem, intervals: &[FilippovInterval]) -> SelectionState {
    let nu: Vec<f64> = intervals.iter().map(FilippovInterval::midpoint).collect();
    let derivative = sys.flow(&nu);
    SelectionState {
        sliding_mask: vec![false; nu.len()],
        nu,
        derivative,
    }
}

/// Equivalent-control selection on the `active` coordinates.
///
/// Solves `(L·ν)ᵢ = 0` for every active `i`, with inactive coordinates held
/// at their nominal values, then keeps each solved value inside its
/// interval. A value that would leave its interval is clamped to the
/// nearest endpoint and the remaining active coordinates are re-solved;
/// the clamped coordinate crosses its surface rather than sliding. Active
/// coordinates with degenerate intervals are treated as inactive.
pub fn sliding_selection(sys: &ConsensusSystem, x: &[f64], active: &[bool]) -> SelectionState {
    let intervals = set_valued_rhs(sys, x);
    sliding_from_intervals(sys, &intervals, active)
}

pub(crate) fn sliding_from_intervals(
    sys: &ConsensusSystem,
    intervals: &[FilippovInterval],
    active: &[bool],
) -> SelectionState {
    let n = intervals.len();
    let mut nu: Vec<f64> = intervals.iter().map(FilippovInterval::midpoint).collect();
    let mut mask = vec![false; n];
    let mut free: Vec<usize> = (0..n)
        .filter(|&i| active.get(i).copied().unwrap_or(false) && !intervals[i].is_degenerate())
        .collect();
    let l = sys.laplacian();
    while !free.is_empty() {
        let solved = solve_tangency(l, &nu, &free, intervals);
        let worst = free
            .iter()
            .zip(&solved)
            .map(|(&i, &s)| {
                let iv = intervals[i];
                let tol = 1e-12 * iv.lo.abs().max(iv.hi.abs()).max(1.0);
                (i, s, (iv.lo - s).max(s - iv.hi) - tol)
            })
            .filter(|t| t.2 > 0.0)
            .max_by(|a, b| a.2.total_cmp(&b.2));
        match worst {
            None => {
                for (&i, &s) in free.iter().zip(&solved) {
                    nu[i] = intervals[i].clamp(s);
                    mask[i] = true;
                }
                break;
            }
            Some((i, s, _)) => {
                nu[i] = intervals[i].clamp(s);
                free.retain(|&j| j != i);
            }
        }
    }
    let derivative = sys.flow(&nu);
    SelectionState {
        nu,
        sliding_mask: mask,
        derivative,
    }
}

/// Tikhonov weight for singular tangency systems.
const REGULARISATION: f64 = 1e-12;

/// Solves `L[free, free]·ν_free = −L[free, rest]·ν_rest`. Singular systems
/// (a closed class of the graph entirely inside `free`) get the regularised
/// least-squares solution closest to the interval midpoints.
fn solve_tangency(l: &LaplacianMatrix, nu: &[f64], free: &[usize], intervals: &[FilippovInterval]) -> Vec<f64> {
    let k = free.len();
    let mut in_free = vec![usize::MAX; nu.len()];
    for (pos, &i) in free.iter().enumerate() {
        in_free[i] = pos;
    }
    let mut a = DenseMatrix::zeros(k, k);
    let mut rhs = vec![0.0; k];
    for (row, &i) in free.iter().enumerate() {
        for &(j, lij) in l.sparse_row(i) {
            match in_free[j] {
                usize::MAX => rhs[row] -= lij * nu[j],
                col => a[(row, col)] = lij,
            }
        }
    }
    let scale = a.max_abs().max(1.0);
    let lu = Lu::factor(&a);
    if lu.min_pivot() > 1e-12 * scale {
        return lu.solve(&rhs);
    }
    // min ‖A·δ − b′‖² + λ‖δ‖², δ = ν − m, b′ = rhs − A·m, via the spectrum of
    // AᵀA. Components below the relative cut are treated as null directions.
    let m: Vec<f64> = free.iter().map(|&i| intervals[i].midpoint()).collect();
    let am = a.mul_vec(&m);
    let b: Vec<f64> = rhs.iter().zip(&am).map(|(r, q)| r - q).collect();
    let at = a.transpose();
    let ata = at.mul(&a);
    let atb = at.mul_vec(&b);
    let (vals, vecs) = symmetric_eigen(&ata);
    let top = vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let mut delta = vec![0.0; k];
    for (c, &e) in vals.iter().enumerate() {
        if e <= 1e-10 * top {
            continue;
        }
        let coef: f64 = (0..k).map(|r| vecs[(r, c)] * atb[r]).sum::<f64>() / (e + REGULARISATION);
        for r in 0..k {
            delta[r] += coef * vecs[(r, c)];
        }
    }
    m.iter().zip(&delta).map(|(mi, di)| mi + di).collect()
}
