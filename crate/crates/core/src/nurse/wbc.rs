//! Weighted betweenness centrality baseline (Brandes accumulation, edge
//! length `1 / weight`).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::ccn::{Ccn, NodeIx};

/// Relative tolerance under which two path lengths count as equal.
const TIE: f64 = 1e-9;

#[derive(PartialEq)]
struct Item(f64, NodeIx);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE * a.abs().max(b.abs())
}

/// Undirected betweenness of every node (each unordered pair counted once).
/// Pairs in different components contribute nothing.
pub fn weighted_betweenness(g: &Ccn) -> Vec<f64> {
    let n = g.node_count();
    let mut bc = vec![0.0; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut sigma = vec![0.0f64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<NodeIx>> = vec![Vec::new(); n];
    let mut settled = vec![false; n];
    for s in 0..n {
        dist.fill(f64::INFINITY);
        sigma.fill(0.0);
        delta.fill(0.0);
        settled.fill(false);
        preds.iter_mut().for_each(Vec::clear);
        let mut order = Vec::new();
        dist[s] = 0.0;
        sigma[s] = 1.0;
        let mut heap = BinaryHeap::from([Item(0.0, s)]);
        while let Some(Item(d, u)) = heap.pop() {
            if settled[u] || d > dist[u] {
                continue;
            }
            settled[u] = true;
            order.push(u);
            for &(v, w) in g.neighbors(u) {
                if settled[v] {
                    continue;
                }
                let nd = d + 1.0 / w as f64;
                if dist[v].is_finite() && same(nd, dist[v]) {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                } else if nd < dist[v] {
                    dist[v] = nd;
                    sigma[v] = sigma[u];
                    preds[v].clear();
                    preds[v].push(u);
                    heap.push(Item(nd, v));
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc.iter_mut().for_each(|b| *b /= 2.0);
    bc
}

/// The top `k` nodes by weighted betweenness, ties by id.
pub fn wbc_baseline(g: &Ccn, k: usize) -> Vec<(String, f64)> {
    let bc = weighted_betweenness(g);
    let mut idx: Vec<NodeIx> = (0..g.node_count()).collect();
    idx.sort_by(|&a, &b| bc[b].total_cmp(&bc[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (g.name(i).to_owned(), bc[i])).collect()
}
