//! Communication topology: weighted digraphs, their Laplacian and incidence
//! matrices, strongly connected structure, and the left Perron vector of the
//! Laplacian.
//!
//! Orientation convention: an edge `source → target` means `target` receives
//! information from `source`, and sets the adjacency entry
//! `a[target][source]`. Laplacian rows therefore belong to receivers.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::{norm_inf, symmetric_eigen, DenseMatrix, Lu};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("edge ({from}, {to}) references a node outside 0..{n}")]
    IndexOutOfRange {
        from: usize,
        to: usize,
        n: usize,
    },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({from}, {to}) has non-positive weight {weight}")]
    NonPositiveWeight {
        from: usize,
        to: usize,
        weight: f64,
    },
    #[error("duplicate edge ({from}, {to})")]
    DuplicateEdge { from: usize, to: usize },
    #[error("expected {expected} node labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("left null-vector solve did not converge (residual {residual:e})")]
    SolverDidNotConverge { residual: f64 },
}

/// A directed edge carrying information from `source` to `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Immutable, validated weighted digraph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDigraph {
    n: usize,
    edges: Vec<Edge>,
    labels: Option<Vec<String>>,
}

/// Validates and builds a digraph. Edges come back sorted by `(source, target)`.
pub fn build_graph(n: usize, edges: &[(usize, usize, f64)]) -> Result<WeightedDigraph, GraphError> {
    if n == 0 {
        return Err(GraphError::Empty);
    }
    let mut out = Vec::with_capacity(edges.len());
    for &(source, target, weight) in edges {
        if source >= n || target >= n {
            return Err(GraphError::IndexOutOfRange { from: source, to: target, n });
        }
        if source == target {
            return Err(GraphError::SelfLoop(source));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(GraphError::NonPositiveWeight {
                from: source,
                to: target,
                weight,
            });
        }
        out.push(Edge {
            source,
            target,
            weight,
        });
    }
    out.sort_by_key(|e| (e.source, e.target));
    if let Some(w) = out
        .windows(2)
        .find(|w| (w[0].source, w[0].target) == (w[1].source, w[1].target))
    {
        return Err(GraphError::DuplicateEdge {
            from: w[0].source,
            to: w[0].target,
        });
    }
    Ok(WeightedDigraph {
        n,
        edges: out,
        labels: None,
    })
}

impl WeightedDigraph {
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, GraphError> {
        if labels.len() != self.n {
            return Err(GraphError::LabelCount {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Dense adjacency with `a[(target, source)] = weight`.
    pub fn adjacency(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            a[(e.target, e.source)] = e.weight;
        }
        a
    }

    /// In-degree `Σ_j a_ij` of every node.
    pub fn in_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for e in &self.edges {
            d[e.target] += e.weight;
        }
        d
    }

    pub fn max_in_degree(&self) -> f64 {
        self.in_degrees().into_iter().fold(0.0, f64::max)
    }

    /// True when every edge has a reverse edge of equal weight.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| {
            self.edges
                .binary_search_by_key(&(e.target, e.source), |f| (f.source, f.target))
                .map(|k| self.edges[k].weight == e.weight)
                .unwrap_or(false)
        })
    }

    fn out_neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for e in &self.edges {
            out[e.source].push(e.target);
        }
        out
    }
}

/// Graph Laplacian `L = Δ − A` together with the pieces it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    matrix: DenseMatrix,
    degrees: Vec<f64>,
    adjacency: DenseMatrix,
    /// Nonzero entries per row in ascending column order.
    sparse_rows: Vec<Vec<(usize, f64)>>,
}

impl LaplacianMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn sparse_row(&self, i: usize) -> &[(usize, f64)] {
        &self.sparse_rows[i]
    }

    /// `L·v`, summing each row over its nonzeros in column order. This
    /// visits the same products as the dense row sum, so results agree
    /// with `matrix().mul_vec(v)` bit for bit.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.sparse_rows
            .iter()
            .map(|row| row.iter().map(|&(j, l)| l * v[j]).sum())
            .collect()
    }

    /// `(L·v)_i` for a single row.
    pub fn apply_row(&self, i: usize, v: &[f64]) -> f64 {
        self.sparse_rows[i].iter().map(|&(j, l)| l * v[j]).sum()
    }
}

pub fn laplacian(g: &WeightedDigraph) -> LaplacianMatrix {
    let n = g.n;
    let adjacency = g.adjacency();
    let degrees = g.in_degrees();
    let mut matrix = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            matrix[(i, j)] = if i == j { degrees[i] } else { 0.0 } - adjacency[(i, j)];
        }
    }
    let sparse_rows = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| matrix[(i, j)] != 0.0)
                .map(|j| (j, matrix[(i, j)]))
                .collect()
        })
        .collect();
    LaplacianMatrix {
        matrix,
        degrees,
        adjacency,
        sparse_rows,
    }
}

/// Signed `n × m` incidence matrix: `+1` at an edge's origin, `−1` at its
/// destination. Column order follows [`WeightedDigraph::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    pub matrix: DenseMatrix,
}

pub fn incidence(g: &WeightedDigraph) -> IncidenceMatrix {
    let mut b = DenseMatrix::zeros(g.n, g.edges.len());
    for (k, e) in g.edges.iter().enumerate() {
        b[(e.source, k)] = 1.0;
        b[(e.target, k)] = -1.0;
    }
    IncidenceMatrix { matrix: b }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StructureReport {
    pub strongly_connected: bool,
    pub has_spanning_tree: bool,
    /// Nodes that reach every other node; empty without a spanning tree.
    pub root_set: Vec<usize>,
    /// Strongly connected components in topological order of the
    /// condensation (source components first). Each component is sorted.
    pub scc_decomposition: Vec<Vec<usize>>,
}

/// Iterative Tarjan SCC. Components are emitted sinks-first.
fn tarjan(n: usize, out: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSEEN: usize = usize::MAX;
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0usize;
    // (node, position in its out-list)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < out[v].len() {
                let w = out[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

fn structure_from_out_lists(n: usize, out: &[Vec<usize>]) -> StructureReport {
    let mut comps = tarjan(n, out);
    comps.reverse();
    let mut comp_of = vec![0usize; n];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    let mut has_incoming = vec![false; comps.len()];
    for (v, targets) in out.iter().enumerate() {
        for &w in targets {
            if comp_of[v] != comp_of[w] {
                has_incoming[comp_of[w]] = true;
            }
        }
    }
    let sources: Vec<usize> = (0..comps.len()).filter(|&c| !has_incoming[c]).collect();
    let has_spanning_tree = sources.len() == 1;
    let root_set = if has_spanning_tree {
        comps[sources[0]].clone()
    } else {
        Vec::new()
    };
    StructureReport {
        strongly_connected: comps.len() == 1,
        has_spanning_tree,
        root_set,
        scc_decomposition: comps,
    }
}

pub fn analyze_structure(g: &WeightedDigraph) -> StructureReport {
    structure_from_out_lists(g.n, &g.out_neighbours())
}

/// Positive left null vector of a strongly connected Laplacian.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LeftPerronVector {
    /// Entries strictly positive, summing to one.
    pub w: Vec<f64>,
    /// `‖wᵀL‖_∞`.
    pub residual: f64,
    /// Smallest eigenvalue of the symmetric part of `Lᵀ·diag(w)`.
    pub psd_certificate: f64,
}

const DENSE_FALLBACK_MAX_N: usize = 64;

/// Computes `w > 0` with `wᵀL = 0`, `Σw = 1`.
///
/// Inverse iteration on `Lᵀ` with a tiny shift, projecting previous
/// iterates onto the simplex. If that leaves a residual above `tol` the
/// bordered system `[Lᵀ with last row replaced by 1ᵀ]·w = e_n` is solved
/// directly (n ≤ 64).
pub fn left_perron(l: &LaplacianMatrix, tol: f64) -> Result<LeftPerronVector, GraphError> {
    let n = l.dim();
    let out: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&i| i != j && l.entry(i, j) < 0.0).collect())
        .collect();
    if !structure_from_out_lists(n, &out).strongly_connected {
        return Err(GraphError::NotStronglyConnected);
    }
    if n == 1 {
        return Ok(LeftPerronVector {
            w: vec![1.0],
            residual: 0.0,
            psd_certificate: l.entry(0, 0),
        });
    }
    let lt = l.matrix().transpose();
    let scale = lt.max_abs().max(1.0);
    let mut shifted = lt.clone();
    for i in 0..n {
        shifted[(i, i)] += 1e-10 * scale;
    }
    let lu = Lu::factor(&shifted);
    let mut w = vec![1.0 / n as f64; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..8 {
        let y = lu.solve(&w);
        let sum: f64 = y.iter().sum();
        if !sum.is_finite() || sum == 0.0 {
            break;
        }
        w = y.iter().map(|v| v / sum).collect();
        let res = norm_inf(&l.matrix().vec_mul(&w));
        let positive = w.iter().all(|&x| x > 0.0);
        if positive && best.as_ref().is_none_or(|(_, r)| res < *r) {
            best = Some((w.clone(), res));
        }
        if positive && res <= tol * 1e-2 {
            break;
        }
    }
    let accepted = match best {
        Some((w, res)) if res <= tol => Some(w),
        _ => None,
    };
    let w = match accepted {
        Some(w) => w,
        None if n <= DENSE_FALLBACK_MAX_N => {
            let mut bordered = lt;
            for j in 0..n {
                bordered[(n - 1, j)] = 1.0;
            }
            let mut rhs = vec![0.0; n];
            rhs[n - 1] = 1.0;
            let w = Lu::factor(&bordered).solve(&rhs);
            let sum: f64 = w.iter().sum();
            w.into_iter().map(|v| v / sum).collect()
        }
        None => {
            return Err(GraphError::SolverDidNotConverge {
                residual: norm_inf(&l.matrix().vec_mul(&w)),
            })
        }
    };
    let residual = norm_inf(&l.matrix().vec_mul(&w));
    if residual > tol || w.iter().any(|&x| !(x > 0.0)) {
        return Err(GraphError::SolverDidNotConverge { residual });
    }
    let psd_certificate = psd_certificate(l, &w);
    Ok(LeftPerronVector {
        w,
        residual,
        psd_certificate,
    })
}

/// Smallest eigenvalue of `(Lᵀ·diag(w) + diag(w)·L) / 2`.
pub fn psd_certificate(l: &LaplacianMatrix, w: &[f64]) -> f64 {
    let n = l.dim();
    let mut s = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // (Lᵀ W)_ij = L_ji w_j,  (W L)_ij = w_i L_ij
            s[(i, j)] = 0.5 * (l.entry(j, i) * w[j] + w[i] * l.entry(i, j));
        }
    }
    let (vals, _) = symmetric_eigen(&s);
    vals.first().copied().unwrap_or(0.0)
}
