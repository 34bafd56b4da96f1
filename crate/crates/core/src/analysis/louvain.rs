//! Weighted Louvain community detection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::ccn::{Ccn, NodeIx};
use crate::error::{Error, Result};
use crate::seed;

/// Partition of a graph's nodes. `assignment[i]` is the community of node `i`
/// of the graph it was computed on; communities are numbered by their
/// smallest member.
#[derive(Clone, Debug, PartialEq)]
pub struct CommunitySet {
    pub nodes: Vec<String>,
    pub assignment: Vec<usize>,
    pub modularity: f64,
}

impl CommunitySet {
    pub fn community_count(&self) -> usize {
        self.assignment.iter().max().map_or(0, |m| m + 1)
    }

    pub fn members(&self) -> Vec<Vec<NodeIx>> {
        let mut out = vec![Vec::new(); self.community_count()];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }

    pub fn community_of(&self, user_id: &str) -> Option<usize> {
        self.nodes
            .binary_search_by(|n| n.as_str().cmp(user_id))
            .ok()
            .map(|i| self.assignment[i])
    }

    /// `user_id<TAB>community` lines in id order.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("# modularity={:?}\n", self.modularity);
        for (n, c) in self.nodes.iter().zip(&self.assignment) {
            let _ = writeln!(s, "{n}\t{c}");
        }
        s
    }

    /// Reads a file written by [`CommunitySet::to_tsv`].
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut cs = CommunitySet {
            nodes: Vec::new(),
            assignment: Vec::new(),
            modularity: 0.0,
        };
        for (i, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(q) = rest.trim().strip_prefix("modularity=") {
                    cs.modularity = q.parse().map_err(|_| bad(i + 1, format!("bad modularity {q:?}")))?;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (node, c) = line
                .split_once('\t')
                .ok_or_else(|| bad(i + 1, format!("expected user_id<TAB>community, got {line:?}")))?;
            let c: usize = c
                .trim()
                .parse()
                .map_err(|_| bad(i + 1, format!("bad community {c:?}")))?;
            if cs.nodes.last().is_some_and(|last| last.as_str() >= node) {
                return Err(bad(i + 1, format!("{node:?} out of order or repeated")));
            }
            cs.nodes.push(node.to_owned());
            cs.assignment.push(c);
        }
        Ok(cs)
    }
}

/// Weighted modularity of `assignment` on `g`; 0 for an edgeless graph.
pub fn modularity(g: &Ccn, assignment: &[usize]) -> f64 {
    let m2 = 2.0 * g.total_weight() as f64;
    if m2 == 0.0 {
        return 0.0;
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut total: BTreeMap<usize, f64> = BTreeMap::new();
    for (a, b, w) in g.edges() {
        if assignment[a] == assignment[b] {
            *internal.entry(assignment[a]).or_default() += 2.0 * w as f64;
        }
    }
    for (i, &c) in assignment.iter().enumerate() {
        *total.entry(c).or_default() += g.weighted_degree(i) as f64;
    }
    total
        .iter()
        .map(|(c, tot)| internal.get(c).copied().unwrap_or(0.0) / m2 - (tot / m2).powi(2))
        .sum()
}

/// Working graph for one aggregation level.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
}

impl Level {
    fn from_ccn(g: &Ccn) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = (0..g.node_count())
            .map(|i| g.neighbors(i).iter().map(|&(j, w)| (j, w as f64)).collect())
            .collect();
        let degree = adj.iter().map(|a| a.iter().map(|x| x.1).sum()).collect();
        Level {
            self_loops: vec![0.0; adj.len()],
            adj,
            degree,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Local moving. Returns the community of each node and whether any node
    /// moved.
    fn local_moves(&self, m2: f64, order: &[usize]) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut weight_to = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &u in order {
                let cu = comm[u];
                let ku = self.degree[u];
                for &(v, w) in &self.adj[u] {
                    let c = comm[v];
                    if weight_to[c] == 0.0 {
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }
                tot[cu] -= ku;
                let gain = |c: usize, w_in: f64| w_in - tot[c] * ku / m2;
                let mut best = cu;
                let mut best_gain = gain(cu, weight_to[cu]);
                touched.sort_unstable();
                for &c in &touched {
                    let g = gain(c, weight_to[c]);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += ku;
                if best != cu {
                    comm[u] = best;
                    moved = true;
                }
                for c in touched.drain(..) {
                    weight_to[c] = 0.0;
                }
            }
            if !moved {
                break;
            }
            moved_any = true;
        }
        (comm, moved_any)
    }

    fn aggregate(&self, comm: &[usize]) -> (Level, Vec<usize>) {
        // dense renumbering in first-seen order
        let mut remap = vec![usize::MAX; self.len()];
        let mut k = 0;
        for &c in comm {
            if remap[c] == usize::MAX {
                remap[c] = k;
                k += 1;
            }
        }
        let label: Vec<usize> = comm.iter().map(|&c| remap[c]).collect();
        let mut links: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        let mut self_loops = vec![0.0; k];
        let mut degree = vec![0.0; k];
        for u in 0..self.len() {
            let cu = label[u];
            self_loops[cu] += self.self_loops[u];
            degree[cu] += self.degree[u];
            for &(v, w) in &self.adj[u] {
                let cv = label[v];
                if cu == cv {
                    // each internal edge is seen from both ends
                    self_loops[cu] += w;
                } else {
                    *links[cu].entry(cv).or_default() += w;
                }
            }
        }
        let adj = links.into_iter().map(|m| m.into_iter().collect()).collect();
        (
            Level {
                adj,
                self_loops,
                degree,
            },
            label,
        )
    }
}

/// Seeded Louvain on weighted modularity. Each level visits its nodes in a
/// seeded shuffled order; the result is deterministic for a fixed seed.
pub fn louvain(g: &Ccn, seed_value: u64) -> CommunitySet {
    let n = g.node_count();
    let m2 = 2.0 * g.total_weight() as f64;
    let mut assignment: Vec<usize> = (0..n).collect();
    if m2 > 0.0 {
        let mut rng = seed::rng(seed_value, "louvain");
        let mut level = Level::from_ccn(g);
        loop {
            let mut order: Vec<usize> = (0..level.len()).collect();
            order.shuffle(&mut rng);
            let (comm, moved) = level.local_moves(m2, &order);
            if !moved {
                break;
            }
            let (next, label) = level.aggregate(&comm);
            for a in &mut assignment {
                *a = label[*a];
            }
            level = next;
        }
    }
    let assignment = canonical(&assignment);
    CommunitySet {
        nodes: g.nodes().to_vec(),
        modularity: modularity(g, &assignment),
        assignment,
    }
}

/// Renumbers communities by their smallest member.
pub(crate) fn canonical(assignment: &[usize]) -> Vec<usize> {
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    assignment
        .iter()
        .map(|&c| {
            let k = remap.len();
            *remap.entry(c).or_insert(k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccn::test_graphs::*;

    fn two_k5() -> Ccn {
        let mut edges = clique("a", 5);
        edges.extend(clique("b", 5));
        edges.push(("a0".into(), "b0".into(), 1));
        Ccn::from_edges(Vec::<String>::new(), edges).unwrap()
    }

    /// Best modularity change from moving a single node to another community.
    fn best_single_move(g: &Ccn, assignment: &[usize]) -> f64 {
        let base = modularity(g, assignment);
        let k = assignment.iter().max().unwrap() + 2;
        let mut best = f64::NEG_INFINITY;
        for u in 0..assignment.len() {
            for c in 0..k {
                if c == assignment[u] {
                    continue;
                }
                let mut a = assignment.to_vec();
                a[u] = c;
                best = best.max(modularity(g, &a) - base);
            }
        }
        best
    }

    #[test]
    fn tsv_round_trip() {
        let g = two_k5();
        let cs = louvain(&g, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        std::fs::write(&path, cs.to_tsv()).unwrap();
        assert_eq!(CommunitySet::read_tsv(&path).unwrap(), cs);
    }

    #[test]
    fn two_cliques_split() {
        let g = two_k5();
        let cs = louvain(&g, 1);
        assert_eq!(cs.community_count(), 2);
        let a = cs.community_of("a0").unwrap();
        for i in 0..5 {
            assert_eq!(cs.community_of(&format!("a{i}")), Some(a));
            assert_ne!(cs.community_of(&format!("b{i}")), Some(a));
        }
        assert!((cs.modularity - modularity(&g, &cs.assignment)).abs() < 1e-9);
        assert!(best_single_move(&g, &cs.assignment) <= 1e-12);
        let one = vec![0; 10];
        let singles: Vec<usize> = (0..10).collect();
        assert!(cs.modularity > modularity(&g, &one));
        assert!(cs.modularity > modularity(&g, &singles));
    }

    #[test]
    fn single_clique_is_one_community() {
        let g = Ccn::from_edges(Vec::<String>::new(), clique("k", 6)).unwrap();
        let cs = louvain(&g, 3);
        assert_eq!(cs.community_count(), 1);
        assert!(cs.modularity.abs() < 1e-12);
    }

    #[test]
    fn modularity_hand_value() {
        // two disjoint unit edges split into their own communities: 2*(1/2 - 1/4)
        let g = unit(&[("a", "b"), ("c", "d")]);
        assert!((modularity(&g, &[0, 0, 1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn seed_determinism() {
        let g = two_k5();
        assert_eq!(louvain(&g, 9), louvain(&g, 9));
    }

    #[test]
    fn edgeless_is_singletons() {
        let g = Ccn::from_edges(vec!["x", "y"], Vec::<(&str, &str, u64)>::new()).unwrap();
        let cs = louvain(&g, 0);
        assert_eq!(cs.assignment, vec![0, 1]);
        assert_eq!(cs.modularity, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn stored_modularity_matches(es in proptest::collection::vec((0u8..12, 0u8..12, 1u64..6), 1..40), s in 0u64..50) {
                let mut seen = std::collections::BTreeSet::new();
                let edges: Vec<_> = es
                    .into_iter()
                    .filter(|(a, b, _)| a != b && seen.insert((*a.min(b), *a.max(b))))
                    .map(|(a, b, w)| (format!("n{a:02}"), format!("n{b:02}"), w))
                    .collect();
                prop_assume!(!edges.is_empty());
                let g = Ccn::from_edges(Vec::<String>::new(), edges).unwrap();
                let cs = louvain(&g, s);
                prop_assert_eq!(cs.assignment.len(), g.node_count());
                prop_assert!((cs.modularity - modularity(&g, &cs.assignment)).abs() < 1e-9);
                prop_assert!(cs.modularity <= 1.0 && cs.modularity >= -0.5);
                // never worse than leaving everything in one community
                prop_assert!(cs.modularity >= -1e-12);
            }
        }
    }
}
