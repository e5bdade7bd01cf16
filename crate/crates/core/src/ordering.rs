//! Greedy elimination orderings on undirected graphs. Shared by the chordal
//! extension of the grid graph and the fill-reducing ordering of KKT
//! matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingHeuristic {
    #[default]
    MinDegree,
    MinFill,
}

/// Result of a symbolic elimination.
#[derive(Clone, Debug)]
pub struct Elimination {
    /// `order[k]` is the vertex eliminated at step `k`.
    pub order: Vec<usize>,
    /// Edges added by elimination, as `(min, max)` pairs.
    pub fill: Vec<(usize, usize)>,
    /// For each vertex, its neighbours in the filled graph that are
    /// eliminated after it.
    pub later_neighbors: Vec<Vec<usize>>,
}

/// Eliminates every vertex greedily; ties go to the smallest index so the
/// result is deterministic.
pub fn eliminate(adjacency: &[Vec<usize>], heuristic: OrderingHeuristic) -> Elimination {
    let n = adjacency.len();
    let mut adj: Vec<BTreeSet<usize>> = adjacency
        .iter()
        .enumerate()
        .map(|(v, a)| a.iter().copied().filter(|&u| u != v).collect())
        .collect();
    for v in 0..n {
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for u in nb {
            adj[u].insert(v);
        }
    }

    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut fill = Vec::new();
    let mut later = vec![Vec::new(); n];

    let priority = |adj: &[BTreeSet<usize>], v: usize| match heuristic {
        OrderingHeuristic::MinDegree => adj[v].len(),
        OrderingHeuristic::MinFill => fill_count(adj, v),
    };
    let mut key: Vec<usize> = (0..n).map(|v| priority(&adj, v)).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (key[v], v)).collect();

    while let Some(&(_, v)) = queue.iter().next() {
        queue.remove(&(key[v], v));
        alive[v] = false;
        order.push(v);
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        later[v] = nb.clone();
        for (a_pos, &a) in nb.iter().enumerate() {
            adj[a].remove(&v);
            for &b in &nb[a_pos + 1..] {
                if adj[a].insert(b) {
                    adj[b].insert(a);
                    fill.push((a.min(b), a.max(b)));
                }
            }
        }
        adj[v].clear();
        // Refresh priorities of affected vertices.
        let mut touched: BTreeSet<usize> = nb.iter().copied().collect();
        if heuristic == OrderingHeuristic::MinFill {
            for &a in &nb {
                touched.extend(adj[a].iter().copied());
            }
        }
        for u in touched {
            if !alive[u] {
                continue;
            }
            let k = priority(&adj, u);
            if k != key[u] {
                queue.remove(&(key[u], u));
                key[u] = k;
                queue.insert((k, u));
            }
        }
    }
    for l in &mut later {
        l.sort_unstable();
    }
    Elimination {
        order,
        fill,
        later_neighbors: later,
    }
}

fn fill_count(adj: &[BTreeSet<usize>], v: usize) -> usize {
    let nb: Vec<usize> = adj[v].iter().copied().collect();
    let mut missing = 0;
    for (i, &a) in nb.iter().enumerate() {
        for &b in &nb[i + 1..] {
            if !adj[a].contains(&b) {
                missing += 1;
            }
        }
    }
    missing
}
