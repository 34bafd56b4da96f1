//! Breakage of the network as nodes are removed in decreasing order of a
//! centrality key.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ccn::{density, Ccn, NodeIx};
use crate::error::{Error, Result};
use crate::kcore::{coreness, mode_degree, CoreMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKey {
    WeightedDegree,
    UnweightedDegree,
    WeightedCoreness,
    UnweightedCoreness,
}

impl OrderKey {
    pub const ALL: [OrderKey; 4] = [
        OrderKey::WeightedDegree,
        OrderKey::UnweightedDegree,
        OrderKey::WeightedCoreness,
        OrderKey::UnweightedCoreness,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderKey::WeightedDegree => "weighted_degree",
            OrderKey::UnweightedDegree => "unweighted_degree",
            OrderKey::WeightedCoreness => "weighted_coreness",
            OrderKey::UnweightedCoreness => "unweighted_coreness",
        }
    }
}

impl fmt::Display for OrderKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OrderKey::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown order key {s:?}")))
    }
}

/// Upper bounds of the component-size buckets; the last bucket is open.
pub const BUCKET_LIMITS: [usize; 4] = [1, 10, 100, 1000];
pub const BUCKET_LABELS: [&str; 5] = ["1", "2-10", "11-100", "101-1000", ">1000"];

pub fn bucket_of(size: usize) -> usize {
    BUCKET_LIMITS
        .iter()
        .position(|&lim| size <= lim)
        .unwrap_or(BUCKET_LIMITS.len())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemovalPoint {
    pub fraction_removed: f64,
    pub removed: usize,
    pub largest_component: usize,
    pub component_count: usize,
    pub buckets: [usize; 5],
    /// Density of the subgraph induced by the removed nodes.
    pub removed_density: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemovalCurve {
    pub order_key: OrderKey,
    pub order: Vec<NodeIx>,
    pub points: Vec<RemovalPoint>,
}

/// Nodes by descending key, ties by ascending id.
pub fn removal_order(g: &Ccn, key: OrderKey) -> Vec<NodeIx> {
    let values: Vec<u64> = match key {
        OrderKey::WeightedDegree => (0..g.node_count())
            .map(|i| mode_degree(g, i, CoreMode::Weighted))
            .collect(),
        OrderKey::UnweightedDegree => (0..g.node_count())
            .map(|i| mode_degree(g, i, CoreMode::Unweighted))
            .collect(),
        OrderKey::WeightedCoreness => coreness(g, CoreMode::Weighted).values().to_vec(),
        OrderKey::UnweightedCoreness => coreness(g, CoreMode::Unweighted).values().to_vec(),
    };
    // ids sort like indexes because nodes are stored in id order
    let mut order: Vec<NodeIx> = (0..g.node_count()).collect();
    order.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
    order
}

struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns the two old sizes and the new root when a merge happens.
    fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize, usize)> {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return None;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        let old = (self.size[ra], self.size[rb]);
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        Some((old.0, old.1, ra))
    }
}

/// Removal counts recorded for `n` nodes: 0 and every multiple of the step
/// rounded to a whole node, ending at `n`.
fn checkpoints(n: usize, step: f64) -> Vec<usize> {
    let steps = (1.0 / step - 1e-9).ceil() as usize;
    let mut out: Vec<usize> = (0..=steps)
        .map(|j| (((j as f64) * step).min(1.0) * n as f64).round() as usize)
        .map(|r| r.min(n))
        .collect();
    out.push(n);
    out.dedup();
    out
}

pub fn removal_curve(g: &Ccn, key: OrderKey, step_fraction: f64) -> Result<RemovalCurve> {
    if !(step_fraction > 0.0 && step_fraction <= 0.05) {
        return Err(Error::InvalidArgument(format!(
            "step fraction must be in (0, 0.05], got {step_fraction}"
        )));
    }
    let order = removal_order(g, key);
    let n = order.len();
    let marks = checkpoints(n, step_fraction);

    let mut position = vec![0usize; n];
    for (p, &u) in order.iter().enumerate() {
        position[u] = p;
    }

    // edges inside the removed prefix, for each prefix length
    let mut removed_edges = vec![0usize; n + 1];
    for (p, &u) in order.iter().enumerate() {
        let back = g.neighbors(u).iter().filter(|&&(v, _)| position[v] < p).count();
        removed_edges[p + 1] = removed_edges[p] + back;
    }

    // Re-insert nodes from the back so the remaining graph only ever grows.
    let mut dsu = Dsu::new(n);
    let mut alive = vec![false; n];
    let mut buckets = [0usize; 5];
    let (mut comps, mut largest) = (0usize, 0usize);
    let mut points = Vec::with_capacity(marks.len());
    let mut next_mark = marks.len();
    let record = |removed: usize, buckets: &[usize; 5], comps: usize, largest: usize| RemovalPoint {
        fraction_removed: if n == 0 { 0.0 } else { removed as f64 / n as f64 },
        removed,
        largest_component: largest,
        component_count: comps,
        buckets: *buckets,
        removed_density: density(removed, removed_edges[removed]),
    };
    for p in (0..=n).rev() {
        if p < n {
            let u = order[p];
            alive[u] = true;
            comps += 1;
            buckets[bucket_of(1)] += 1;
            largest = largest.max(1);
            for &(v, _) in g.neighbors(u) {
                if !alive[v] {
                    continue;
                }
                if let Some((sa, sb, root)) = dsu.union(u, v) {
                    buckets[bucket_of(sa)] -= 1;
                    buckets[bucket_of(sb)] -= 1;
                    let merged = dsu.size[root];
                    buckets[bucket_of(merged)] += 1;
                    largest = largest.max(merged);
                    comps -= 1;
                }
            }
        }
        if next_mark > 0 && marks[next_mark - 1] == p {
            points.push(record(p, &buckets, comps, largest));
            next_mark -= 1;
        }
    }
    points.reverse();
    Ok(RemovalCurve {
        order_key: key,
        order,
        points,
    })
}

impl RemovalCurve {
    /// First point where the largest component holds less than half of the
    /// remaining nodes.
    pub fn disintegration_point(&self) -> Option<&RemovalPoint> {
        let n = self.order.len();
        self.points
            .iter()
            .find(|p| p.removed < n && 2 * p.largest_component < n - p.removed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "order_key,fraction_removed,removed,largest_component,component_count,\
             bucket_1,bucket_2_10,bucket_11_100,bucket_101_1000,bucket_gt_1000,removed_density\n",
        );
        for p in &self.points {
            let b = p.buckets;
            let _ = writeln!(
                s,
                "{},{:?},{},{},{},{},{},{},{},{},{:?}",
                self.order_key,
                p.fraction_removed,
                p.removed,
                p.largest_component,
                p.component_count,
                b[0],
                b[1],
                b[2],
                b[3],
                b[4],
                p.removed_density
            );
        }
        s
    }

    /// `series,x,y` rows for the largest-component and removed-density curves.
    pub fn long_rows(&self, out: &mut String) {
        for p in &self.points {
            let _ = writeln!(
                out,
                "{}:largest_component,{:?},{}",
                self.order_key, p.fraction_removed, p.largest_component
            );
        }
        for p in &self.points {
            let _ = writeln!(
                out,
                "{}:removed_density,{:?},{:?}",
                self.order_key, p.fraction_removed, p.removed_density
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccn::test_graphs::*;

    /// Components of the graph minus the first `r` nodes of `order`, with a
    /// fresh BFS.
    pub(crate) fn bfs_profile(g: &Ccn, order: &[NodeIx], r: usize) -> (usize, usize, [usize; 5]) {
        let mut gone = vec![false; g.node_count()];
        for &u in &order[..r] {
            gone[u] = true;
        }
        let mut seen = gone.clone();
        let (mut count, mut largest, mut buckets) = (0, 0, [0; 5]);
        for s in 0..g.node_count() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut stack = vec![s];
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &(v, _) in g.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            count += 1;
            largest = largest.max(size);
            buckets[bucket_of(size)] += 1;
        }
        (count, largest, buckets)
    }

    #[test]
    fn path_center_first() {
        let g = unit(&[("a", "b"), ("b", "c")]);
        let c = removal_curve(&g, OrderKey::UnweightedDegree, 0.05).unwrap();
        assert_eq!(c.order[0], g.index_of("b").unwrap());
        let one = c.points.iter().find(|p| p.removed == 1).unwrap();
        assert_eq!((one.component_count, one.largest_component), (2, 1));
    }

    #[test]
    fn clique_shrinks_by_one() {
        let g = weighted(
            &clique("k", 5)
                .iter()
                .map(|(a, b, w)| (a.as_str(), b.as_str(), *w))
                .collect::<Vec<_>>(),
        );
        let c = removal_curve(&g, OrderKey::WeightedDegree, 0.05).unwrap();
        let sizes: Vec<_> = c.points.iter().map(|p| (p.removed, p.largest_component)).collect();
        assert_eq!(sizes, vec![(0, 5), (1, 4), (2, 3), (3, 2), (4, 1), (5, 0)]);
        assert!(c.points.iter().take(5).skip(2).all(|p| p.removed_density == 1.0));
    }

    #[test]
    fn buckets() {
        assert_eq!(
            [1, 2, 10, 11, 100, 101, 1000, 1001].map(bucket_of),
            [0, 1, 1, 2, 2, 3, 3, 4]
        );
    }

    #[test]
    fn step_is_validated() {
        let g = triangle();
        assert!(removal_curve(&g, OrderKey::WeightedDegree, 0.0).is_err());
        assert!(removal_curve(&g, OrderKey::WeightedDegree, 0.06).is_err());
    }

    #[test]
    fn checkpoints_cover_range() {
        let c = checkpoints(220, 0.05);
        assert_eq!(c.first(), Some(&0));
        assert_eq!(c.last(), Some(&220));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.len(), 21);
    }

    #[test]
    fn disintegration_of_hub_with_triangles() {
        let mut e = vec![];
        for t in ["a", "b", "c"] {
            e.push((format!("{t}0"), format!("{t}1"), 1));
            e.push((format!("{t}1"), format!("{t}2"), 1));
            e.push((format!("{t}0"), format!("{t}2"), 1));
            e.push((format!("{t}0"), "h".to_owned(), 1));
        }
        let g = Ccn::from_edges(Vec::<String>::new(), e).unwrap();
        let c = removal_curve(&g, OrderKey::UnweightedDegree, 0.05).unwrap();
        // the three attachment points go first; h then sits alone
        assert_eq!(c.disintegration_point().unwrap().removed, 3);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graph() -> impl Strategy<Value = Ccn> {
            proptest::collection::vec((0u8..15, 0u8..15, 1u64..5), 0..40).prop_map(|es| {
                let nodes: Vec<String> = (0..15).map(|i| format!("n{i:02}")).collect();
                let mut seen = std::collections::BTreeSet::new();
                let edges: Vec<_> = es
                    .into_iter()
                    .filter(|(a, b, _)| a != b)
                    .filter(|(a, b, _)| seen.insert((*a.min(b), *a.max(b))))
                    .map(|(a, b, w)| (nodes[a as usize].clone(), nodes[b as usize].clone(), w))
                    .collect();
                Ccn::from_edges(nodes, edges).unwrap()
            })
        }

        proptest! {
            #[test]
            fn agrees_with_bfs(g in graph(), k in 0usize..4, step in 0.01f64..0.05) {
                let c = removal_curve(&g, OrderKey::ALL[k], step).unwrap();
                prop_assert!(c.points.windows(2).all(|w| w[0].fraction_removed < w[1].fraction_removed));
                prop_assert!(c.points.windows(2).all(|w| w[0].largest_component >= w[1].largest_component));
                for p in &c.points {
                    let (count, largest, buckets) = bfs_profile(&g, &c.order, p.removed);
                    prop_assert_eq!((p.component_count, p.largest_component, p.buckets), (count, largest, buckets));
                    let sub = g.induced_subgraph(&c.order[..p.removed]);
                    prop_assert_eq!(p.removed_density, sub.density());
                }
            }
        }
    }
}
