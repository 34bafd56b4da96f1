//! The Collusive Commenting Network: an undirected user graph whose integer
//! edge weights aggregate per-video co-comment counts.
//!
//! For users `a`, `b` and video `v`, the inter-user comment count is
//! `min(comments(a, v), comments(b, v))`. The edge weight sums it over every
//! video uploaded by neither `a` nor `b`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Node handle. Nodes are indexed in lexicographic order of their user ids,
/// so index order and id order agree.
pub type NodeIx = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ccn {
    nodes: Vec<String>,
    index: HashMap<String, NodeIx>,
    adjacency: Vec<Vec<(NodeIx, u64)>>,
    edges: BTreeMap<(NodeIx, NodeIx), u64>,
}

impl Ccn {
    /// Builds a graph from node ids and weighted edges. Endpoints that are
    /// not listed in `nodes` are added. Self-loops, zero weights and repeated
    /// pairs are rejected.
    pub fn from_edges<N, E, S>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator<Item = S>,
        E: IntoIterator<Item = (S, S, u64)>,
        S: Into<String>,
    {
        let edges: Vec<(String, String, u64)> = edges.into_iter().map(|(a, b, w)| (a.into(), b.into(), w)).collect();
        let mut names: BTreeSet<String> = nodes.into_iter().map(Into::into).collect();
        for (a, b, _) in &edges {
            names.insert(a.clone());
            names.insert(b.clone());
        }
        let nodes: Vec<String> = names.into_iter().collect();
        let index: HashMap<String, NodeIx> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

        let mut map = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop on {a:?}")));
            }
            if w == 0 {
                return Err(Error::InvalidArgument(format!("zero-weight edge {a:?} -- {b:?}")));
            }
            let (i, j) = ordered(index[&a], index[&b]);
            if map.insert((i, j), w).is_some() {
                return Err(Error::InvalidArgument(format!("repeated edge {a:?} -- {b:?}")));
            }
        }
        Ok(Self::assemble(nodes, index, map))
    }

    fn assemble(nodes: Vec<String>, index: HashMap<String, NodeIx>, edges: BTreeMap<(NodeIx, NodeIx), u64>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (&(i, j), &w) in &edges {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ccn {
            nodes,
            index,
            adjacency,
            edges,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// User ids in index order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn name(&self, ix: NodeIx) -> &str {
        &self.nodes[ix]
    }

    pub fn index_of(&self, user_id: &str) -> Option<NodeIx> {
        self.index.get(user_id).copied()
    }

    /// Neighbours of `ix` with edge weights, sorted by neighbour index.
    pub fn neighbors(&self, ix: NodeIx) -> &[(NodeIx, u64)] {
        &self.adjacency[ix]
    }

    pub fn degree(&self, ix: NodeIx) -> usize {
        self.adjacency[ix].len()
    }

    pub fn weighted_degree(&self, ix: NodeIx) -> u64 {
        self.adjacency[ix].iter().map(|&(_, w)| w).sum()
    }

    /// Weight of the edge between `a` and `b`; 0 when absent.
    pub fn weight(&self, a: NodeIx, b: NodeIx) -> u64 {
        if a == b {
            return 0;
        }
        self.edges.get(&ordered(a, b)).copied().unwrap_or(0)
    }

    pub fn weight_by_name(&self, a: &str, b: &str) -> u64 {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.weight(i, j),
            _ => 0,
        }
    }

    /// Edges as `(a, b, w)` with `a < b`, in index order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeIx, NodeIx, u64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    /// Sum of all edge weights.
    pub fn total_weight(&self) -> u64 {
        self.edges.values().sum()
    }

    /// Subgraph induced by `members`, with its own (re-based) node indexes.
    pub fn induced_subgraph(&self, members: &[NodeIx]) -> Ccn {
        let keep: BTreeSet<NodeIx> = members.iter().copied().collect();
        let nodes: Vec<String> = keep.iter().map(|&i| self.nodes[i].clone()).collect();
        let remap: HashMap<NodeIx, NodeIx> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut edges = BTreeMap::new();
        for &old in &keep {
            for &(nb, w) in &self.adjacency[old] {
                if old < nb {
                    if let Some(&j) = remap.get(&nb) {
                        edges.insert((remap[&old], j), w);
                    }
                }
            }
        }
        Ccn::assemble(nodes, index, edges)
    }

    /// Copy with every edge weight multiplied by `factor`.
    pub fn scale_weights(&self, factor: u64) -> Result<Ccn> {
        if factor == 0 {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        let edges = self.edges.iter().map(|(&k, &w)| (k, w * factor)).collect();
        Ok(Ccn::assemble(self.nodes.clone(), self.index.clone(), edges))
    }

    /// Connected components as sorted node lists, largest first (ties broken
    /// by smallest member).
    pub fn components(&self) -> Vec<Vec<NodeIx>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    /// Unweighted edge density `2|E| / (|N|(|N|-1))`; 0 for fewer than two nodes.
    pub fn density(&self) -> f64 {
        density(self.node_count(), self.edge_count())
    }

    /// Writes the `# ccn v1` edge list. Isolated nodes follow the edges as
    /// `# isolated<TAB>user_id` comment lines.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("# ccn v1\n");
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "{}\t{}\t{}", self.nodes[a], self.nodes[b], w);
        }
        for (i, name) in self.nodes.iter().enumerate() {
            if self.adjacency[i].is_empty() {
                let _ = writeln!(out, "# isolated\t{name}");
            }
        }
        out
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn read_edge_list(path: &Path) -> Result<Ccn> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if i == 0 {
                if line.trim_end() != "# ccn v1" {
                    return Err(parse_err(1, "missing `# ccn v1` header".into()));
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix("# isolated\t") {
                nodes.push(rest.to_owned());
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(a), Some(b), Some(w), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(i + 1, "expected user_a<TAB>user_b<TAB>weight".into()));
            };
            let w: u64 = w
                .parse()
                .map_err(|e| parse_err(i + 1, format!("bad weight {w:?}: {e}")))?;
            edges.push((a.to_owned(), b.to_owned(), w));
        }
        Ccn::from_edges(nodes, edges).map_err(|e| match e {
            Error::InvalidArgument(m) => parse_err(0, m),
            e => e,
        })
    }
}

fn ordered(a: NodeIx, b: NodeIx) -> (NodeIx, NodeIx) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn density(nodes: usize, edges: usize) -> f64 {
    if nodes < 2 {
        return 0.0;
    }
    2.0 * edges as f64 / (nodes as f64 * (nodes as f64 - 1.0))
}

/// `min(comments(a, v), comments(b, v))`.
pub fn iucc(d: &Dataset, user_a: &str, user_b: &str, video_id: &str) -> Result<u64> {
    distinct(user_a, user_b)?;
    Ok(d.comment_count(user_a, video_id).min(d.comment_count(user_b, video_id)))
}

/// Aggregated IUCC of `a` and `b` over all videos uploaded by neither.
pub fn edge_weight(d: &Dataset, user_a: &str, user_b: &str) -> Result<u64> {
    distinct(user_a, user_b)?;
    let videos: BTreeSet<&str> = d.comments_by(user_a).map(|c| c.video_id.as_str()).collect();
    let mut total = 0;
    for vid in videos {
        let Some(video) = d.video(vid) else { continue };
        if video.uploader_user_id == user_a || video.uploader_user_id == user_b {
            continue;
        }
        total += iucc(d, user_a, user_b, vid)?;
    }
    Ok(total)
}

fn distinct(a: &str, b: &str) -> Result<()> {
    if a == b {
        return Err(Error::InvalidArgument(format!(
            "IUCC needs two distinct users, got {a:?} twice"
        )));
    }
    Ok(())
}

/// Builds the network from a validated dataset.
///
/// Nodes are all users with at least one comment on a qualifying video
/// (`is_collusive` when `collusive_only`, otherwise every video). Users
/// without any co-comment edge stay in the graph with degree 0.
pub fn build_ccn(d: &Dataset, collusive_only: bool) -> Ccn {
    let qualifying: Vec<_> = d
        .videos()
        .iter()
        .filter(|v| !collusive_only || v.is_collusive)
        .collect();

    let per_video: Vec<(&str, Vec<(&str, u64)>)> = qualifying
        .iter()
        .map(|v| (v.uploader_user_id.as_str(), d.commenter_counts(&v.video_id)))
        .filter(|(_, c)| !c.is_empty())
        .collect();

    let names: BTreeSet<&str> = per_video.iter().flat_map(|(_, c)| c.iter().map(|&(u, _)| u)).collect();
    let nodes: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let index: HashMap<String, NodeIx> = nodes.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();

    let mut acc: HashMap<(NodeIx, NodeIx), u64> = HashMap::new();
    for (uploader, commenters) in &per_video {
        let eligible: Vec<(NodeIx, u64)> = commenters
            .iter()
            .filter(|(u, _)| u != uploader)
            .map(|&(u, n)| (index[u], n))
            .collect();
        for (x, &(a, na)) in eligible.iter().enumerate() {
            for &(b, nb) in &eligible[x + 1..] {
                *acc.entry(ordered(a, b)).or_default() += na.min(nb);
            }
        }
    }
    let edges: BTreeMap<_, _> = acc.into_iter().filter(|&(_, w)| w > 0).collect();
    Ccn::assemble(nodes, index, edges)
}

/// Topological summary of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub avg_edge_weight: Option<f64>,
    pub max_edge_weight: Option<u64>,
    pub min_edge_weight: Option<u64>,
    pub avg_weighted_degree: Option<f64>,
    pub max_weighted_degree: Option<u64>,
    pub min_weighted_degree: Option<u64>,
    pub density: Option<f64>,
    pub avg_clustering: Option<f64>,
    /// Unweighted diameter of the largest connected component.
    pub diameter: Option<usize>,
}

impl GraphStats {
    /// `name=value` lines; absent statistics are written as `NA`.
    pub fn to_kv(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "NA".to_owned(), ToString::to_string)
        }
        let rows = [
            ("nodes", self.nodes.to_string()),
            ("edges", self.edges.to_string()),
            ("avg_edge_weight", opt(&self.avg_edge_weight)),
            ("max_edge_weight", opt(&self.max_edge_weight)),
            ("min_edge_weight", opt(&self.min_edge_weight)),
            ("avg_weighted_degree", opt(&self.avg_weighted_degree)),
            ("max_weighted_degree", opt(&self.max_weighted_degree)),
            ("min_weighted_degree", opt(&self.min_weighted_degree)),
            ("density", opt(&self.density)),
            ("avg_clustering", opt(&self.avg_clustering)),
            ("diameter", opt(&self.diameter)),
        ];
        rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

pub fn graph_stats(g: &Ccn) -> GraphStats {
    let n = g.node_count();
    let m = g.edge_count();
    let weights: Vec<u64> = g.edges().map(|(_, _, w)| w).collect();
    let wdeg: Vec<u64> = (0..n).map(|i| g.weighted_degree(i)).collect();

    let mean_u = |xs: &[u64]| (!xs.is_empty()).then(|| xs.iter().sum::<u64>() as f64 / xs.len() as f64);

    GraphStats {
        nodes: n,
        edges: m,
        avg_edge_weight: mean_u(&weights),
        max_edge_weight: weights.iter().copied().max(),
        min_edge_weight: weights.iter().copied().min(),
        avg_weighted_degree: mean_u(&wdeg),
        max_weighted_degree: wdeg.iter().copied().max(),
        min_weighted_degree: wdeg.iter().copied().min(),
        density: (n >= 2).then(|| g.density()),
        avg_clustering: (n > 0).then(|| average_clustering(g)),
        diameter: g.components().first().map(|lcc| diameter(g, lcc)),
    }
}

/// Mean local clustering coefficient over all nodes (nodes with degree < 2
/// contribute 0).
pub fn average_clustering(g: &Ccn) -> f64 {
    let n = g.node_count();
    if n == 0 {
        return 0.0;
    }
    let mut mark = vec![false; n];
    let mut sum = 0.0;
    for i in 0..n {
        let k = g.degree(i);
        if k < 2 {
            continue;
        }
        for &(j, _) in g.neighbors(i) {
            mark[j] = true;
        }
        let mut links = 0usize;
        for &(j, _) in g.neighbors(i) {
            links += g.neighbors(j).iter().filter(|(x, _)| mark[*x]).count();
        }
        for &(j, _) in g.neighbors(i) {
            mark[j] = false;
        }
        // each triangle through i is seen from both of its other endpoints
        sum += links as f64 / (k as f64 * (k as f64 - 1.0));
    }
    sum / n as f64
}

fn diameter(g: &Ccn, component: &[NodeIx]) -> usize {
    let mut dist = vec![usize::MAX; g.node_count()];
    let mut best = 0;
    for &s in component {
        for &v in component {
            dist[v] = usize::MAX;
        }
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            best = best.max(dist[u]);
            for &(v, _) in g.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    best
}


#[cfg(test)]
mod tests {
    use super::test_graphs::*;
    use super::*;
    use crate::data::fixtures::from_counts;

    #[test]
    fn iucc_is_min_of_counts() {
        let d = from_counts(
            &["a", "b", "c", "x"],
            &[("v", "x")],
            &[("a", "v", 3), ("b", "v", 5), ("c", "v", 2)],
        );
        assert_eq!(iucc(&d, "a", "b", "v").unwrap(), 3);
        assert_eq!(iucc(&d, "x", "b", "v").unwrap(), 0);
        assert!(iucc(&d, "c", "c", "v").is_err());
        let d2 = from_counts(&["a", "b"], &[("v", "a")], &[("a", "v", 2), ("b", "v", 2)]);
        assert_eq!(iucc(&d2, "a", "b", "v").unwrap(), 2);
    }

    #[test]
    fn edge_weight_three_user_two_video_fixture() {
        // c uploads both videos; a and b co-comment 2x on v1 and 1x on v2.
        let d = from_counts(
            &["a", "b", "c"],
            &[("v1", "c"), ("v2", "c")],
            &[
                ("a", "v1", 2),
                ("b", "v1", 2),
                ("a", "v2", 1),
                ("b", "v2", 3),
                ("c", "v2", 1),
            ],
        );
        assert_eq!(edge_weight(&d, "a", "b").unwrap(), 3);
        assert_eq!(edge_weight(&d, "b", "a").unwrap(), 3);
        // c uploaded both videos, so nothing counts for pairs with c
        assert_eq!(edge_weight(&d, "a", "c").unwrap(), 0);
        assert!(edge_weight(&d, "a", "a").is_err());
    }

    #[test]
    fn own_video_is_excluded() {
        let d = from_counts(&["a", "b"], &[("v", "a")], &[("a", "v", 4), ("b", "v", 4)]);
        assert_eq!(edge_weight(&d, "a", "b").unwrap(), 0);
        let g = build_ccn(&d, true);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn no_shared_videos() {
        let d = from_counts(
            &["a", "b", "x"],
            &[("v1", "x"), ("v2", "x")],
            &[("a", "v1", 1), ("b", "v2", 1)],
        );
        assert_eq!(edge_weight(&d, "a", "b").unwrap(), 0);
        let g = build_ccn(&d, true);
        assert_eq!((g.node_count(), g.edge_count()), (2, 0));
    }

    #[test]
    fn three_cocommenters_form_unit_triangle() {
        let d = from_counts(
            &["a", "b", "c", "x"],
            &[("v", "x")],
            &[("a", "v", 1), ("b", "v", 1), ("c", "v", 1)],
        );
        let g = build_ccn(&d, true);
        assert_eq!(g.nodes(), &["a", "b", "c"]);
        assert_eq!(g.edge_count(), 3);
        assert!(g.edges().all(|(_, _, w)| w == 1));
        for (a, b) in [("a", "b"), ("a", "c"), ("b", "c")] {
            assert_eq!(g.weight_by_name(a, b), edge_weight(&d, a, b).unwrap());
        }
    }

    #[test]
    fn collusive_only_filters_videos() {
        let mut d = from_counts(
            &["a", "b", "x"],
            &[("v1", "x"), ("v2", "x")],
            &[("a", "v1", 1), ("b", "v1", 1), ("a", "v2", 2), ("b", "v2", 2)],
        );
        let mut videos = d.videos().to_vec();
        videos[1].is_collusive = false;
        d = Dataset::new(d.users().to_vec(), videos, d.comments().to_vec()).unwrap();
        assert_eq!(build_ccn(&d, true).weight_by_name("a", "b"), 1);
        assert_eq!(build_ccn(&d, false).weight_by_name("a", "b"), 3);
    }

    #[test]
    fn stats_triangle_and_path() {
        let s = graph_stats(&triangle());
        assert_eq!(s.density, Some(1.0));
        assert_eq!(s.avg_clustering, Some(1.0));
        assert_eq!(s.diameter, Some(1));
        assert_eq!(s.min_weighted_degree, Some(2));
        assert_eq!(s.max_weighted_degree, Some(2));

        let p = graph_stats(&unit(&[("a", "b"), ("b", "c")]));
        assert!((p.density.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.diameter, Some(2));
        assert_eq!(p.avg_clustering, Some(0.0));
    }

    #[test]
    fn stats_empty_graph() {
        let g = Ccn::from_edges(Vec::<String>::new(), Vec::<(String, String, u64)>::new()).unwrap();
        let s = graph_stats(&g);
        assert_eq!((s.nodes, s.edges), (0, 0));
        assert!(s.avg_edge_weight.is_none() && s.density.is_none() && s.diameter.is_none());
        assert!(s.to_kv().contains("density=NA\n"));
    }

    #[test]
    fn diameter_uses_largest_component() {
        let g = unit(&[("a", "b"), ("b", "c"), ("c", "d"), ("x", "y")]);
        assert_eq!(graph_stats(&g).diameter, Some(3));
    }

    #[test]
    fn edge_list_round_trip_keeps_isolated_nodes() {
        let g = Ccn::from_edges(
            vec!["z".to_string()],
            vec![("b".to_string(), "a".to_string(), 4), ("c".into(), "a".into(), 1)],
        )
        .unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "# ccn v1\na\tb\t4\na\tc\t1\n# isolated\tz\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ccn.tsv");
        g.write_edge_list(&p).unwrap();
        assert_eq!(Ccn::read_edge_list(&p).unwrap(), g);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(Ccn::from_edges(Vec::<&str>::new(), vec![("a", "a", 1)]).is_err());
        assert!(Ccn::from_edges(Vec::<&str>::new(), vec![("a", "b", 0)]).is_err());
        assert!(Ccn::from_edges(Vec::<&str>::new(), vec![("a", "b", 1), ("b", "a", 2)]).is_err());
    }

    #[test]
    fn weighted_degree_sum_is_twice_total_weight() {
        let g = weighted(&[("a", "b", 3), ("b", "c", 5), ("c", "d", 1), ("a", "d", 2)]);
        let s: u64 = (0..g.node_count()).map(|i| g.weighted_degree(i)).sum();
        assert_eq!(s, 2 * g.total_weight());
    }

    #[test]
    fn induced_subgraph_rebases() {
        let g = weighted(&[("a", "b", 3), ("b", "c", 5), ("c", "d", 1)]);
        let sub = g.induced_subgraph(&[1, 2, 3]);
        assert_eq!(sub.nodes(), &["b", "c", "d"]);
        assert_eq!(sub.weight_by_name("b", "c"), 5);
        assert_eq!(sub.edge_count(), 2);
    }
}
