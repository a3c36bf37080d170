//! Label-correcting shortest paths.
//!
//! Link costs may be negative (merged origin dummies carry `-T_0`), so a
//! FIFO label-correcting search is used instead of Dijkstra.

use std::collections::VecDeque;

use crate::error::{MaasError, Result};

#[derive(Debug, Clone)]
pub struct Digraph {
    n_nodes: usize,
    tails: Vec<usize>,
    heads: Vec<usize>,
    out: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(n_nodes: usize, tails: Vec<usize>, heads: Vec<usize>) -> Self {
        let mut out = vec![Vec::new(); n_nodes];
        for (a, &t) in tails.iter().enumerate() {
            out[t].push(a);
        }
        Self { n_nodes, tails, heads, out }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_links(&self) -> usize {
        self.tails.len()
    }

    pub fn tail(&self, a: usize) -> usize {
        self.tails[a]
    }

    pub fn head(&self, a: usize) -> usize {
        self.heads[a]
    }

    pub fn out_links(&self, node: usize) -> &[usize] {
        &self.out[node]
    }
}

#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
}

impl ShortestPathTree {
    pub fn reaches(&self, node: usize) -> bool {
        self.dist[node].is_finite()
    }

    /// Link sequence from the source to `node`, if reachable.
    pub fn path_to(&self, g: &Digraph, node: usize) -> Option<Vec<usize>> {
        if !self.reaches(node) {
            return None;
        }
        let mut links = Vec::new();
        let mut cur = node;
        while cur != self.source {
            let a = self.pred[cur]?;
            links.push(a);
            cur = g.tail(a);
            if links.len() > g.n_nodes() {
                return None;
            }
        }
        links.reverse();
        Some(links)
    }
}

/// Shortest paths from `source` with per-link `cost`; links with
/// `allowed[a] == false` are skipped.
pub fn shortest_paths(
    g: &Digraph,
    cost: &[f64],
    allowed: Option<&[bool]>,
    source: usize,
) -> Result<ShortestPathTree> {
    let n = g.n_nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut in_queue = vec![false; n];
    let mut relaxations = vec![0usize; n];
    let mut queue = VecDeque::new();
    dist[source] = 0.0;
    queue.push_back(source);
    in_queue[source] = true;
    while let Some(i) = queue.pop_front() {
        in_queue[i] = false;
        for &a in g.out_links(i) {
            if allowed.is_some_and(|m| !m[a]) {
                continue;
            }
            let j = g.head(a);
            let cand = dist[i] + cost[a];
            if cand < dist[j] - 1e-12 * (1.0 + cand.abs()) {
                dist[j] = cand;
                pred[j] = Some(a);
                relaxations[j] += 1;
                if relaxations[j] > n {
                    return Err(MaasError::NegativeCycle(source.to_string()));
                }
                if !in_queue[j] {
                    in_queue[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(ShortestPathTree { source, dist, pred })
}

/// Nodes reachable from any of `sources` through allowed links.
pub fn reachable_from(g: &Digraph, allowed: Option<&[bool]>, sources: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; g.n_nodes()];
    let mut stack: Vec<usize> = sources.to_vec();
    for &s in sources {
        seen[s] = true;
    }
    while let Some(i) = stack.pop() {
        for &a in g.out_links(i) {
            if allowed.is_some_and(|m| !m[a]) {
                continue;
            }
            let j = g.head(a);
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Nodes from which any of `targets` is reachable through allowed links.
pub fn reaching(g: &Digraph, allowed: Option<&[bool]>, targets: &[usize]) -> Vec<bool> {
    let mut incoming = vec![Vec::new(); g.n_nodes()];
    for a in 0..g.n_links() {
        if allowed.is_none_or(|m| m[a]) {
            incoming[g.head(a)].push(a);
        }
    }
    let mut seen = vec![false; g.n_nodes()];
    let mut stack: Vec<usize> = targets.to_vec();
    for &t in targets {
        seen[t] = true;
    }
    while let Some(j) = stack.pop() {
        for &a in &incoming[j] {
            let i = g.tail(a);
            if !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen
}

/// True if the allowed subgraph contains a directed cycle.
pub fn has_cycle(g: &Digraph, allowed: &[bool]) -> bool {
    let n = g.n_nodes();
    let mut indeg = vec![0usize; n];
    for a in 0..g.n_links() {
        if allowed[a] {
            indeg[g.head(a)] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut removed = 0;
    while let Some(i) = stack.pop() {
        removed += 1;
        for &a in g.out_links(i) {
            if !allowed[a] {
                continue;
            }
            let j = g.head(a);
            indeg[j] -= 1;
            if indeg[j] == 0 {
                stack.push(j);
            }
        }
    }
    removed < n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handles_negative_links() {
        // 0 -(-1)-> 1 -(3)-> 2, 0 -(2.5)-> 2
        let g = Digraph::new(3, vec![0, 1, 0], vec![1, 2, 2]);
        let t = shortest_paths(&g, &[-1.0, 3.0, 2.5], None, 0).unwrap();
        assert!((t.dist[2] - 2.0).abs() < 1e-12);
        assert_eq!(t.path_to(&g, 2).unwrap(), vec![0, 1]);
    }

    #[test]
    fn respects_mask() {
        let g = Digraph::new(3, vec![0, 1, 0], vec![1, 2, 2]);
        let mask = [true, true, false];
        let t = shortest_paths(&g, &[1.0, 1.0, 0.1], Some(&mask), 0).unwrap();
        assert!((t.dist[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detects_negative_cycle() {
        let g = Digraph::new(2, vec![0, 1], vec![1, 0]);
        assert!(shortest_paths(&g, &[-1.0, -1.0], None, 0).is_err());
    }

    #[test]
    fn cycle_detection() {
        let g = Digraph::new(3, vec![0, 1, 2], vec![1, 2, 0]);
        assert!(has_cycle(&g, &[true, true, true]));
        assert!(!has_cycle(&g, &[true, true, false]));
    }
}
