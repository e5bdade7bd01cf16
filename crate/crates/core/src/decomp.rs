//! Chordal extension and clique tree of the grid graph, and the principal
//! minor index sets of each determinant-hierarchy level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::DecompError;
use crate::netmodel::Network;
use crate::ordering::{eliminate, OrderingHeuristic};

/// Chordal extension of the grid graph with its maximal cliques arranged in
/// a tree. Bus references are positions in `Network::buses`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CliqueTree {
    pub cliques: Vec<Vec<usize>>,
    pub tree_edges: Vec<(usize, usize)>,
    pub fill_edges: Vec<(usize, usize)>,
    pub elimination_order: Vec<usize>,
}

/// A principal minor of `W`, given by a sorted node subset of one clique.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MinorSet {
    pub clique_index: usize,
    pub nodes: Vec<usize>,
}

/// Sorted, deduplicated bus-position pairs joined by at least one branch.
pub fn grid_edges(net: &Network) -> Vec<(usize, usize)> {
    let set: BTreeSet<(usize, usize)> = net
        .branches
        .iter()
        .map(|b| {
            let (f, t) = (net.idx(b.from), net.idx(b.to));
            (f.min(t), f.max(t))
        })
        .collect();
    set.into_iter().collect()
}

pub fn clique_tree(net: &Network) -> Result<CliqueTree, DecompError> {
    clique_tree_with(net, OrderingHeuristic::MinDegree)
}

pub fn clique_tree_with(
    net: &Network,
    heuristic: OrderingHeuristic,
) -> Result<CliqueTree, DecompError> {
    let comps = net.components();
    if comps.len() > 1 {
        let desc: Vec<String> = comps
            .iter()
            .map(|c| {
                let ids: Vec<String> = c.iter().map(|&i| net.buses[i].id.to_string()).collect();
                format!("{{{}}}", ids.join(","))
            })
            .collect();
        return Err(DecompError::Disconnected(desc.join(" ")));
    }
    let n = net.n_buses();
    let mut adj = vec![Vec::new(); n];
    for (a, b) in grid_edges(net) {
        adj[a].push(b);
        adj[b].push(a);
    }
    let elim = eliminate(&adj, heuristic);

    // Candidate cliques {v} + later neighbours; keep the maximal ones.
    let mut candidates: Vec<Vec<usize>> = elim
        .order
        .iter()
        .map(|&v| {
            let mut c = elim.later_neighbors[v].clone();
            c.push(v);
            c.sort_unstable();
            c
        })
        .collect();
    candidates.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    for c in candidates {
        if !cliques.iter().any(|k| is_subset(&c, k)) {
            cliques.push(c);
        }
    }
    cliques.sort();

    let tree_edges = max_weight_spanning_tree(&cliques);
    let mut fill_edges = elim.fill.clone();
    fill_edges.sort_unstable();
    let ct = CliqueTree {
        cliques,
        tree_edges,
        fill_edges,
        elimination_order: elim.order,
    };
    ct.check_running_intersection(n)?;
    Ok(ct)
}

fn is_subset(small: &[usize], big: &[usize]) -> bool {
    small.iter().all(|x| big.binary_search(x).is_ok())
}

fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.binary_search(x).is_ok()).count()
}

/// Kruskal on clique-intersection weights; heavier edges first, ties by
/// index.
fn max_weight_spanning_tree(cliques: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let m = cliques.len();
    let mut edges = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let w = intersection_size(&cliques[i], &cliques[j]);
            if w > 0 {
                edges.push((w, i, j));
            }
        }
    }
    edges.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut tree = Vec::new();
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.push((i, j));
        }
    }
    tree
}

impl CliqueTree {
    /// For every bus, the cliques containing it must induce a connected
    /// subtree.
    pub fn check_running_intersection(&self, n_buses: usize) -> Result<(), DecompError> {
        let m = self.cliques.len();
        let mut adj = vec![Vec::new(); m];
        for &(a, b) in &self.tree_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for bus in 0..n_buses {
            let holders: Vec<usize> = (0..m)
                .filter(|&c| self.cliques[c].binary_search(&bus).is_ok())
                .collect();
            let Some(&start) = holders.first() else {
                return Err(DecompError::RunningIntersection(bus));
            };
            let mut seen = BTreeSet::from([start]);
            let mut stack = vec![start];
            while let Some(c) = stack.pop() {
                for &d in &adj[c] {
                    if self.cliques[d].binary_search(&bus).is_ok() && seen.insert(d) {
                        stack.push(d);
                    }
                }
            }
            if seen.len() != holders.len() {
                return Err(DecompError::RunningIntersection(bus));
            }
        }
        Ok(())
    }

    /// All distinct within-clique bus pairs `(i, j)` with `i < j`.
    pub fn clique_pairs(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for c in &self.cliques {
            for (k, &a) in c.iter().enumerate() {
                for &b in &c[k + 1..] {
                    set.insert((a, b));
                }
            }
        }
        set.into_iter().collect()
    }

    pub fn largest_clique(&self) -> usize {
        self.cliques.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Graphviz rendering; clique labels use bus ids from `net`.
    pub fn to_dot(&self, net: &Network) -> String {
        let mut s = String::from("graph clique_tree {\n  node [shape=box];\n");
        for (k, c) in self.cliques.iter().enumerate() {
            let ids: Vec<String> = c.iter().map(|&i| net.buses[i].id.to_string()).collect();
            let _ = writeln!(s, "  c{k} [label=\"{{{}}}\"];", ids.join(","));
        }
        for &(a, b) in &self.tree_edges {
            let _ = writeln!(s, "  c{a} -- c{b};");
        }
        s.push_str("}\n");
        s
    }
}

/// Principal minors of sizes `2..=level` over every clique, deduplicated by
/// node set. The first clique containing a subset owns it.
pub fn enumerate_minors(ct: &CliqueTree, level: usize) -> Result<Vec<MinorSet>, DecompError> {
    if !(2..=3).contains(&level) {
        return Err(DecompError::UnsupportedLevel(level));
    }
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for (ci, c) in ct.cliques.iter().enumerate() {
        for size in 2..=level.min(c.len()) {
            for subset in combinations(c, size) {
                seen.entry(subset).or_insert(ci);
            }
        }
    }
    let mut out: Vec<MinorSet> = seen
        .into_iter()
        .map(|(nodes, clique_index)| MinorSet {
            clique_index,
            nodes,
        })
        .collect();
    out.sort_by(|a, b| {
        a.nodes
            .len()
            .cmp(&b.nodes.len())
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
    Ok(out)
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > items.len() {
        return out;
    }
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        while i > 0 {
            i -= 1;
            if idx[i] != i + items.len() - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        if idx[i] == i + items.len() - k {
            return out;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
