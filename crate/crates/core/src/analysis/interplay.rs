//! How the core interacts with the periphery communities.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::analysis::louvain::CommunitySet;
use crate::ccn::Ccn;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::korse::CorePartition;

/// Communities at or below this size are flagged in the interplay table.
pub const SMALL_COMMUNITY: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VideoCategory {
    CoreCore,
    CorePeriphery,
    PeripheryPeriphery,
    Uncommented,
}

impl VideoCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            VideoCategory::CoreCore => "core_core",
            VideoCategory::CorePeriphery => "core_periphery",
            VideoCategory::PeripheryPeriphery => "periphery_periphery",
            VideoCategory::Uncommented => "uncommented",
        }
    }
}

impl fmt::Display for VideoCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category of every video from the labels of its commenters that appear in
/// the partition.
pub fn categorize_videos(d: &Dataset, p: &CorePartition) -> BTreeMap<String, VideoCategory> {
    d.videos()
        .iter()
        .map(|v| {
            let (mut core, mut periphery) = (false, false);
            for (u, _) in d.commenter_counts(&v.video_id) {
                if p.is_core(u) {
                    core = true;
                } else if p.contains(u) {
                    periphery = true;
                }
            }
            let cat = match (core, periphery) {
                (true, false) => VideoCategory::CoreCore,
                (true, true) => VideoCategory::CorePeriphery,
                (false, true) => VideoCategory::PeripheryPeriphery,
                (false, false) => VideoCategory::Uncommented,
            };
            (v.video_id.clone(), cat)
        })
        .collect()
}

pub fn category_counts(cats: &BTreeMap<String, VideoCategory>) -> BTreeMap<VideoCategory, usize> {
    let mut out: BTreeMap<VideoCategory, usize> = [
        VideoCategory::CoreCore,
        VideoCategory::CorePeriphery,
        VideoCategory::PeripheryPeriphery,
        VideoCategory::Uncommented,
    ]
    .into_iter()
    .map(|c| (c, 0))
    .collect();
    for c in cats.values() {
        *out.entry(*c).or_default() += 1;
    }
    out
}

/// Largest connected component of the periphery-induced subgraph.
pub fn periphery_lcc(g: &Ccn, p: &CorePartition) -> Ccn {
    let periphery = g.induced_subgraph(&p.periphery_indices(g));
    let comps = periphery.components();
    match comps.first() {
        Some(c) => periphery.induced_subgraph(c),
        None => periphery,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterplayRow {
    pub community: usize,
    pub size: usize,
    pub avg_weighted_degree: f64,
    pub weighted_size: u64,
    pub wcs: f64,
    pub small: bool,
}

/// Internal weight, average internal weighted degree and normalized weighted
/// cut set to the core for every community.
pub fn interplay_table(g: &Ccn, p: &CorePartition, communities: &CommunitySet) -> Result<Vec<InterplayRow>> {
    let k = communities.community_count();
    let mut size = vec![0usize; k];
    let mut internal = vec![0u64; k];
    let mut cut = vec![0u64; k];
    let mut of = vec![None; g.node_count()];
    for (name, &c) in communities.nodes.iter().zip(&communities.assignment) {
        if p.is_core(name) {
            return Err(Error::InvalidArgument(format!(
                "community {c} contains core node {name}"
            )));
        }
        let ix = g
            .index_of(name)
            .ok_or_else(|| Error::InvalidArgument(format!("community node {name} not in graph")))?;
        of[ix] = Some(c);
        size[c] += 1;
    }
    for (a, b, w) in g.edges() {
        match (of[a], of[b]) {
            (Some(x), Some(y)) if x == y => internal[x] += w,
            (Some(x), None) if p.is_core(g.name(b)) => cut[x] += w,
            (None, Some(y)) if p.is_core(g.name(a)) => cut[y] += w,
            _ => {}
        }
    }
    Ok((0..k)
        .map(|c| InterplayRow {
            community: c,
            size: size[c],
            avg_weighted_degree: 2.0 * internal[c] as f64 / size[c] as f64,
            weighted_size: internal[c],
            wcs: cut[c] as f64 / size[c] as f64,
            small: size[c] <= SMALL_COMMUNITY,
        })
        .collect())
}

pub fn interplay_csv(rows: &[InterplayRow]) -> String {
    let mut s = String::from("community,size,avg_weighted_degree,weighted_size,wcs,small\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{:?},{},{:?},{}",
            r.community, r.size, r.avg_weighted_degree, r.weighted_size, r.wcs, r.small
        );
    }
    s
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidArgument("pearson of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlations of wcs with weighted size and with average weighted degree
/// over communities larger than [`SMALL_COMMUNITY`].
pub fn interplay_correlations(rows: &[InterplayRow]) -> Result<(f64, f64)> {
    let large: Vec<&InterplayRow> = rows.iter().filter(|r| !r.small).collect();
    let wcs: Vec<f64> = large.iter().map(|r| r.wcs).collect();
    let ws: Vec<f64> = large.iter().map(|r| r.weighted_size as f64).collect();
    let deg: Vec<f64> = large.iter().map(|r| r.avg_weighted_degree).collect();
    Ok((pearson(&wcs, &ws)?, pearson(&wcs, &deg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::louvain::canonical;
    use crate::ccn::test_graphs::*;
    use crate::data::fixtures::*;

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &[3.0, 5.0, 7.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(pearson(&xs, &[1.0, 1.0, 1.0]).is_err());
        assert!(pearson(&xs, &[1.0]).is_err());
    }

    #[test]
    fn categories() {
        let d = from_counts(
            &["c1", "c2", "p1", "x"],
            &[("v1", "x"), ("v2", "x"), ("v3", "x"), ("v4", "x")],
            &[
                ("c1", "v1", 1),
                ("c2", "v1", 2),
                ("c1", "v2", 1),
                ("p1", "v2", 1),
                ("p1", "v3", 1),
            ],
        );
        let p = CorePartition::from_labels(vec!["c1", "c2"], vec!["c1", "c2", "p1"]);
        let cats = categorize_videos(&d, &p);
        assert_eq!(cats["v1"], VideoCategory::CoreCore);
        assert_eq!(cats["v2"], VideoCategory::CorePeriphery);
        assert_eq!(cats["v3"], VideoCategory::PeripheryPeriphery);
        assert_eq!(cats["v4"], VideoCategory::Uncommented);
        let counts = category_counts(&cats);
        assert_eq!(counts.values().sum::<usize>(), d.videos().len());
    }

    fn five_node() -> (Ccn, CorePartition) {
        // core {c1, c2}; community {p1, p2} with internal weight 4 and 6 to core
        let g = weighted(&[("c1", "c2", 9), ("p1", "p2", 4), ("p1", "c1", 6), ("q", "c2", 1)]);
        let p = CorePartition::from_labels(vec!["c1", "c2"], g.nodes().to_vec());
        (g, p)
    }

    fn communities(g: &Ccn, groups: &[&[&str]]) -> CommunitySet {
        let mut nodes: Vec<String> = groups.iter().flat_map(|c| c.iter().map(|s| s.to_string())).collect();
        nodes.sort();
        let assignment: Vec<usize> = nodes
            .iter()
            .map(|n| groups.iter().position(|c| c.contains(&n.as_str())).unwrap())
            .collect();
        let sub = g.induced_subgraph(&nodes.iter().map(|n| g.index_of(n).unwrap()).collect::<Vec<_>>());
        let assignment = canonical(&assignment);
        CommunitySet {
            modularity: crate::analysis::louvain::modularity(&sub, &assignment),
            nodes,
            assignment,
        }
    }

    #[test]
    fn hand_computed_row() {
        let (g, p) = five_node();
        let cs = communities(&g, &[&["p1", "p2"], &["q"]]);
        let rows = interplay_table(&g, &p, &cs).unwrap();
        let r = rows.iter().find(|r| r.size == 2).unwrap();
        assert_eq!(r.weighted_size, 4);
        assert_eq!(r.avg_weighted_degree, 4.0);
        assert_eq!(r.wcs, 3.0);
        assert!(r.small);
        let q = rows.iter().find(|r| r.size == 1).unwrap();
        assert_eq!((q.weighted_size, q.wcs), (0, 1.0));
    }

    #[test]
    fn core_member_in_community_is_error() {
        let (g, p) = five_node();
        let cs = communities(&g, &[&["p1", "c1"]]);
        assert!(interplay_table(&g, &p, &cs).is_err());
    }

    #[test]
    fn no_core_edges_gives_zero_wcs() {
        let g = weighted(&[("c1", "c2", 1), ("a", "b", 2)]);
        let p = CorePartition::from_labels(vec!["c1", "c2"], g.nodes().to_vec());
        let rows = interplay_table(&g, &p, &communities(&g, &[&["a", "b"]])).unwrap();
        assert_eq!(rows[0].wcs, 0.0);
    }

    #[test]
    fn lcc_of_periphery() {
        let g = weighted(&[
            ("c1", "a", 1),
            ("a", "b", 1),
            ("b", "e", 1),
            ("x", "y", 1),
            ("c1", "x", 1),
        ]);
        let p = CorePartition::from_labels(vec!["c1"], g.nodes().to_vec());
        let l = periphery_lcc(&g, &p);
        assert_eq!(l.nodes(), &["a", "b", "e"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn pearson_affine(xs in proptest::collection::vec(-100f64..100.0, 2..30), a in 0.1f64..10.0, b in -5f64..5.0, neg in any::<bool>()) {
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                prop_assume!(xs.iter().any(|x| (x - mean).abs() > 1e-6));
                let a = if neg { -a } else { a };
                let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let r = pearson(&xs, &ys).unwrap();
                prop_assert!((r - a.signum()).abs() < 1e-9);
            }
        }
    }
}
