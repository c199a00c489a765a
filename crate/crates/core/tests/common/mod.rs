#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

pub type EdgeList = Vec<(usize, usize, f64)>;

pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, p: f64) -> EdgeList {
    let mut edges = Vec::new();
    for s in 0..n {
        for t in 0..n {
            if s != t && rng.gen_bool(p) {
                edges.push((s, t, rng.gen_range(0.5..2.0)));
            }
        }
    }
    edges
}

fn add_missing(edges: &mut EdgeList, extra: EdgeList) {
    for e in extra {
        if !edges.iter().any(|&(s, t, _)| s == e.0 && t == e.1) {
            edges.push(e);
        }
    }
}

/// Random Hamiltonian cycle plus sparse extra edges.
pub fn random_strongly_connected<R: Rng>(rng: &mut R, n: usize) -> EdgeList {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: EdgeList = (0..n)
        .map(|k| (order[k], order[(k + 1) % n], rng.gen_range(0.5..2.0)))
        .collect();
    let extra = random_digraph(rng, n, 1.5 / n as f64);
    add_missing(&mut edges, extra);
    edges
}

/// Random out-tree from a random root plus sparse extra edges.
pub fn random_spanning_tree<R: Rng>(rng: &mut R, n: usize) -> EdgeList {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: EdgeList = (1..n)
        .map(|k| (order[rng.gen_range(0..k)], order[k], rng.gen_range(0.5..2.0)))
        .collect();
    let extra = random_digraph(rng, n, 1.0 / n as f64);
    add_missing(&mut edges, extra);
    edges
}

/// `reach[s][t]`: t reachable from s (reflexive).
pub fn bfs_reach(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<bool>> {
    let mut out = vec![Vec::new(); n];
    for &(s, t, _) in edges {
        out[s].push(t);
    }
    (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &v in &out[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            seen
        })
        .collect()
}

pub fn oracle_roots(reach: &[Vec<bool>]) -> Vec<usize> {
    (0..reach.len()).filter(|&s| reach[s].iter().all(|&r| r)).collect()
}

pub fn oracle_strongly_connected(reach: &[Vec<bool>]) -> bool {
    reach.iter().all(|row| row.iter().all(|&r| r))
}
