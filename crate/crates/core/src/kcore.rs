//! Weighted and unweighted k-core decomposition by peeling.
//!
//! In weighted mode a node's degree is the sum of its incident edge weights.
//! Weights are integers, so every threshold `k` is an integer as well.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ccn::{Ccn, NodeIx};
use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoreMode {
    Weighted,
    Unweighted,
}

impl FromStr for CoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "weighted" => Ok(CoreMode::Weighted),
            "unweighted" => Ok(CoreMode::Unweighted),
            other => Err(Error::InvalidArgument(format!("unknown core mode {other:?}"))),
        }
    }
}

fn edge_value(mode: CoreMode, w: u64) -> u64 {
    match mode {
        CoreMode::Weighted => w,
        CoreMode::Unweighted => 1,
    }
}

/// Degree of `ix` under `mode`.
pub fn mode_degree(g: &Ccn, ix: NodeIx, mode: CoreMode) -> u64 {
    match mode {
        CoreMode::Weighted => g.weighted_degree(ix),
        CoreMode::Unweighted => g.degree(ix) as u64,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorenessMap {
    values: Vec<u64>,
    mode: CoreMode,
    max_coreness: u64,
    peel_order: Vec<NodeIx>,
}

impl CorenessMap {
    pub fn get(&self, ix: NodeIx) -> u64 {
        self.values[ix]
    }

    /// Coreness per node, in node index order.
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn mode(&self) -> CoreMode {
        self.mode
    }

    pub fn max_coreness(&self) -> u64 {
        self.max_coreness
    }

    /// Order in which peeling removed the nodes (ties by node id).
    pub fn peel_order(&self) -> &[NodeIx] {
        &self.peel_order
    }

    /// Nodes with coreness at least `k`, in index order.
    pub fn at_least(&self, k: u64) -> Vec<NodeIx> {
        (0..self.values.len()).filter(|&i| self.values[i] >= k).collect()
    }

    /// `user_id<TAB>coreness` lines by descending coreness, then id.
    pub fn to_tsv(&self, g: &Ccn) -> String {
        let mut order: Vec<NodeIx> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[b].cmp(&self.values[a]).then(a.cmp(&b)));
        let mut out = String::new();
        for i in order {
            let _ = writeln!(out, "{}\t{}", g.name(i), self.values[i]);
        }
        out
    }
}

/// Maximal node set whose induced subgraph has every (mode-)degree `>= k`,
/// found by deleting violators until a fixpoint. Returned in index order.
pub fn k_core(g: &Ccn, k: u64, mode: CoreMode) -> Vec<NodeIx> {
    let n = g.node_count();
    let mut deg: Vec<u64> = (0..n).map(|i| mode_degree(g, i, mode)).collect();
    let mut alive = vec![true; n];
    let mut queue: VecDeque<NodeIx> = (0..n).filter(|&i| deg[i] < k).collect();
    for &i in &queue {
        alive[i] = false;
    }
    while let Some(u) = queue.pop_front() {
        for &(v, w) in g.neighbors(u) {
            if !alive[v] {
                continue;
            }
            deg[v] -= edge_value(mode, w);
            if deg[v] < k {
                alive[v] = false;
                queue.push_back(v);
            }
        }
    }
    (0..n).filter(|&i| alive[i]).collect()
}

/// Coreness of every node: the largest `k` whose k-core contains it.
pub fn coreness(g: &Ccn, mode: CoreMode) -> CorenessMap {
    let (values, peel_order) = match mode {
        CoreMode::Unweighted => peel_buckets(g),
        CoreMode::Weighted => peel_ordered(g),
    };
    let max_coreness = values.iter().copied().max().unwrap_or(0);
    CorenessMap {
        values,
        mode,
        max_coreness,
        peel_order,
    }
}

/// `k_core(g, max_coreness, mode)`.
pub fn degeneracy_core(g: &Ccn, mode: CoreMode) -> Vec<NodeIx> {
    let cm = coreness(g, mode);
    if cm.max_coreness() == 0 {
        return Vec::new();
    }
    k_core(g, cm.max_coreness(), mode)
}

fn peel_ordered(g: &Ccn) -> (Vec<u64>, Vec<NodeIx>) {
    let n = g.node_count();
    let mut deg: Vec<u64> = (0..n).map(|i| g.weighted_degree(i)).collect();
    let mut heap: BTreeSet<(u64, NodeIx)> = (0..n).map(|i| (deg[i], i)).collect();
    let mut removed = vec![false; n];
    let mut core = vec![0; n];
    let mut order = Vec::with_capacity(n);
    let mut level = 0;
    while let Some((d, u)) = heap.pop_first() {
        level = level.max(d);
        core[u] = level;
        removed[u] = true;
        order.push(u);
        for &(v, w) in g.neighbors(u) {
            if removed[v] {
                continue;
            }
            heap.remove(&(deg[v], v));
            deg[v] -= w;
            heap.insert((deg[v], v));
        }
    }
    (core, order)
}

/// Bucket-queue peeling for unit edge values. Each bucket is ordered so the
/// smallest node id leaves first.
fn peel_buckets(g: &Ccn) -> (Vec<u64>, Vec<NodeIx>) {
    let n = g.node_count();
    let mut deg: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
    let max_deg = deg.iter().copied().max().unwrap_or(0);
    let mut buckets: Vec<BTreeSet<NodeIx>> = vec![BTreeSet::new(); max_deg + 1];
    for i in 0..n {
        buckets[deg[i]].insert(i);
    }
    let mut removed = vec![false; n];
    let mut core = vec![0; n];
    let mut order = Vec::with_capacity(n);
    let mut level = 0usize;
    let mut cursor = 0usize;
    for _ in 0..n {
        while buckets[cursor].is_empty() {
            cursor += 1;
        }
        let u = buckets[cursor].pop_first().expect("non-empty bucket");
        level = level.max(cursor);
        core[u] = level as u64;
        removed[u] = true;
        order.push(u);
        for &(v, _) in g.neighbors(u) {
            if removed[v] {
                continue;
            }
            buckets[deg[v]].remove(&v);
            deg[v] -= 1;
            buckets[deg[v]].insert(v);
            cursor = cursor.min(deg[v]);
        }
    }
    (core, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccn::test_graphs::*;

    #[test]
    fn triangle_cores() {
        let g = triangle();
        assert_eq!(k_core(&g, 2, CoreMode::Unweighted), vec![0, 1, 2]);
        assert!(k_core(&g, 3, CoreMode::Unweighted).is_empty());
        assert_eq!(k_core(&g, 0, CoreMode::Unweighted).len(), 3);
    }

    #[test]
    fn star_coreness_is_one() {
        let g = unit(&[("c", "l1"), ("c", "l2"), ("c", "l3"), ("c", "l4"), ("c", "l5")]);
        let cm = coreness(&g, CoreMode::Weighted);
        assert!(cm.values().iter().all(|&c| c == 1));
        assert_eq!(cm.max_coreness(), 1);
    }

    #[test]
    fn k4_coreness_is_three() {
        let g = Ccn::from_edges(Vec::<String>::new(), clique("n", 4)).unwrap();
        let cm = coreness(&g, CoreMode::Weighted);
        assert_eq!(cm.values(), &[3, 3, 3, 3]);
    }

    #[test]
    fn degeneracy_core_of_k4_with_pendant() {
        let mut e = clique("n", 4);
        e.push(("n0".into(), "p".into(), 1));
        let g = Ccn::from_edges(Vec::<String>::new(), e).unwrap();
        let core: Vec<&str> = degeneracy_core(&g, CoreMode::Unweighted)
            .into_iter()
            .map(|i| g.name(i))
            .collect();
        assert_eq!(core, vec!["n0", "n1", "n2", "n3"]);
    }

    #[test]
    fn edgeless_degeneracy_core_is_empty() {
        let g = Ccn::from_edges(vec!["a", "b"], Vec::<(&str, &str, u64)>::new()).unwrap();
        assert!(degeneracy_core(&g, CoreMode::Weighted).is_empty());
        assert_eq!(coreness(&g, CoreMode::Weighted).values(), &[0, 0]);
    }

    #[test]
    fn weighted_peeling_example() {
        // a-b heavy (5), c hangs off b with weight 1.
        let g = weighted(&[("a", "b", 5), ("b", "c", 1)]);
        let cm = coreness(&g, CoreMode::Weighted);
        assert_eq!(cm.values(), &[5, 5, 1]);
        let cu = coreness(&g, CoreMode::Unweighted);
        assert_eq!(cu.values(), &[1, 1, 1]);
    }

    #[test]
    fn tsv_sorted_by_coreness_then_id() {
        let g = weighted(&[("b", "a", 5), ("b", "c", 1)]);
        let cm = coreness(&g, CoreMode::Weighted);
        assert_eq!(cm.to_tsv(&g), "a\t5\nb\t5\nc\t1\n");
    }

    #[test]
    fn peel_order_breaks_ties_by_id() {
        let g = Ccn::from_edges(Vec::<String>::new(), clique("n", 4)).unwrap();
        assert_eq!(coreness(&g, CoreMode::Unweighted).peel_order(), &[0, 1, 2, 3]);
        assert_eq!(coreness(&g, CoreMode::Weighted).peel_order(), &[0, 1, 2, 3]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn graph_strategy() -> impl Strategy<Value = Ccn> {
            (2usize..10).prop_flat_map(|n| {
                proptest::collection::vec((0..n, 0..n, 1u64..5), 0..25).prop_map(move |raw| {
                    let mut seen = std::collections::BTreeMap::new();
                    for (a, b, w) in raw {
                        if a != b {
                            seen.insert((a.min(b), a.max(b)), w);
                        }
                    }
                    Ccn::from_edges(
                        (0..n).map(|i| format!("v{i}")).collect::<Vec<_>>(),
                        seen.into_iter()
                            .map(|((a, b), w)| (format!("v{a}"), format!("v{b}"), w))
                            .collect::<Vec<_>>(),
                    )
                    .unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn membership_iff_coreness(g in graph_strategy()) {
                for mode in [CoreMode::Weighted, CoreMode::Unweighted] {
                    let cm = coreness(&g, mode);
                    let mut prev: Option<Vec<NodeIx>> = None;
                    for k in 0..=cm.max_coreness() + 1 {
                        let core = k_core(&g, k, mode);
                        prop_assert_eq!(&core, &cm.at_least(k));
                        if let Some(p) = &prev {
                            prop_assert!(core.iter().all(|x| p.contains(x)));
                        }
                        prev = Some(core);
                    }
                    for i in 0..g.node_count() {
                        prop_assert!(cm.get(i) <= mode_degree(&g, i, mode));
                        if g.degree(i) == 0 {
                            prop_assert_eq!(cm.get(i), 0);
                        }
                    }
                }
            }

            #[test]
            fn unit_weights_modes_coincide(g in graph_strategy()) {
                let unit = Ccn::from_edges(
                    g.nodes().to_vec(),
                    g.edges().map(|(a, b, _)| (g.name(a).to_string(), g.name(b).to_string(), 1)).collect::<Vec<_>>(),
                ).unwrap();
                let w = coreness(&unit, CoreMode::Weighted);
                let u = coreness(&unit, CoreMode::Unweighted);
                prop_assert_eq!(w.values(), u.values());
            }

            #[test]
            fn relabeling_invariance(g in graph_strategy(), salt in 0u64..1000) {
                // reverse-ish relabel: new name sorts in a different order
                let rename = |s: &str| format!("{:04}-{}", (s[1..].parse::<u64>().unwrap() * 7 + salt) % 1000, s);
                let h = Ccn::from_edges(
                    g.nodes().iter().map(|s| rename(s)).collect::<Vec<_>>(),
                    g.edges().map(|(a, b, w)| (rename(g.name(a)), rename(g.name(b)), w)).collect::<Vec<_>>(),
                ).unwrap();
                for mode in [CoreMode::Weighted, CoreMode::Unweighted] {
                    let cg = coreness(&g, mode);
                    let ch = coreness(&h, mode);
                    for i in 0..g.node_count() {
                        let j = h.index_of(&rename(g.name(i))).unwrap();
                        prop_assert_eq!(cg.get(i), ch.get(j));
                    }
                }
            }
        }
    }
}
