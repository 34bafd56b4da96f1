//! Core/periphery partitioning by a weighted-coreness threshold sweep.
//!
//! A candidate core at threshold `t` is every node with weighted coreness
//! `>= t`. Each candidate is scored by
//!
//! ```text
//! wicci = k_const * (W_C / W_G) * density(G_C)^beta
//! ```
//!
//! where `W_C` is the internal edge weight of the candidate, `W_G` the total
//! edge weight of the network and `density` the unweighted edge density of
//! the induced candidate subgraph. The candidate with the largest score is
//! the core; ties go to the largest threshold.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::ccn::{density, Ccn, NodeIx};
use crate::error::{Error, Result};
use crate::kcore::{coreness, CoreMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WicciParams {
    beta: f64,
    k_const: f64,
}

impl WicciParams {
    pub fn new(beta: f64, k_const: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        if !(k_const > 0.0 && k_const.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "proportionality constant must be positive, got {k_const}"
            )));
        }
        Ok(WicciParams { beta, k_const })
    }

    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(beta, 1.0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn k_const(&self) -> f64 {
        self.k_const
    }

    fn score(&self, weight_fraction: f64, density: f64) -> f64 {
        self.k_const * weight_fraction * density.powf(self.beta)
    }
}

impl Default for WicciParams {
    fn default() -> Self {
        WicciParams {
            beta: 1.0,
            k_const: 1.0,
        }
    }
}

/// Index of the internal core collusive activity for `core_nodes`.
/// Cores with fewer than two nodes score 0.
pub fn wicci(g: &Ccn, core_nodes: &[NodeIx], params: &WicciParams) -> Result<f64> {
    let total = g.total_weight();
    if total == 0 {
        return Err(Error::EdgelessGraph);
    }
    let members: BTreeSet<NodeIx> = core_nodes.iter().copied().collect();
    if members.len() < 2 {
        return Ok(0.0);
    }
    let (mut internal_weight, mut internal_edges) = (0u64, 0usize);
    for &u in &members {
        for &(v, w) in g.neighbors(u) {
            if u < v && members.contains(&v) {
                internal_weight += w;
                internal_edges += 1;
            }
        }
    }
    let frac = internal_weight as f64 / total as f64;
    Ok(params.score(frac, density(members.len(), internal_edges)))
}

/// One evaluated threshold of the sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub threshold: u64,
    pub core_size: usize,
    pub density: f64,
    pub weight_fraction: f64,
    pub wicci: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorePartition {
    pub core: BTreeSet<String>,
    pub periphery: BTreeSet<String>,
    pub core_threshold: u64,
    pub max_coreness: u64,
    pub normalized_threshold: f64,
    pub peak_wicci: f64,
    pub core_density: f64,
    /// Thresholds from `max_coreness` down to 1.
    pub sweep_trace: Vec<SweepRow>,
    /// The whole node set scored as a candidate (threshold 0).
    pub whole_graph: Option<SweepRow>,
}

impl CorePartition {
    /// Partition built from explicit labels (e.g. planted ground truth).
    pub fn from_labels<S, T>(core: impl IntoIterator<Item = S>, all_nodes: impl IntoIterator<Item = T>) -> Self
    where
        S: Into<String>,
        T: Into<String>,
    {
        let core: BTreeSet<String> = core.into_iter().map(Into::into).collect();
        let periphery = all_nodes
            .into_iter()
            .map(Into::into)
            .filter(|n| !core.contains(n))
            .collect();
        CorePartition {
            core,
            periphery,
            core_threshold: 0,
            max_coreness: 0,
            normalized_threshold: 0.0,
            peak_wicci: 0.0,
            core_density: 0.0,
            sweep_trace: Vec::new(),
            whole_graph: None,
        }
    }

    pub fn is_core(&self, user_id: &str) -> bool {
        self.core.contains(user_id)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.core.contains(user_id) || self.periphery.contains(user_id)
    }

    /// Core/periphery node indexes in `g` (ids absent from `g` are skipped).
    pub fn core_indices(&self, g: &Ccn) -> Vec<NodeIx> {
        let mut v: Vec<NodeIx> = self.core.iter().filter_map(|n| g.index_of(n)).collect();
        v.sort_unstable();
        v
    }

    pub fn periphery_indices(&self, g: &Ccn) -> Vec<NodeIx> {
        let mut v: Vec<NodeIx> = self.periphery.iter().filter_map(|n| g.index_of(n)).collect();
        v.sort_unstable();
        v
    }

    /// `user_id<TAB>{core|periphery}` lines in id order, then a `# key=value`
    /// summary block.
    pub fn to_tsv(&self) -> String {
        let mut labelled: Vec<(&str, &str)> = self
            .core
            .iter()
            .map(|n| (n.as_str(), "core"))
            .chain(self.periphery.iter().map(|n| (n.as_str(), "periphery")))
            .collect();
        labelled.sort_unstable();
        let mut out = String::new();
        for (n, l) in labelled {
            let _ = writeln!(out, "{n}\t{l}");
        }
        let _ = writeln!(out, "# threshold={}", self.core_threshold);
        let _ = writeln!(out, "# max_coreness={}", self.max_coreness);
        let _ = writeln!(out, "# normalized_threshold={}", self.normalized_threshold);
        let _ = writeln!(out, "# peak_wicci={}", self.peak_wicci);
        let _ = writeln!(out, "# core_size={}", self.core.len());
        let _ = writeln!(out, "# core_density={}", self.core_density);
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Reads a partition file. The sweep trace is not stored and comes back
    /// empty.
    pub fn read_tsv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut p = CorePartition::from_labels(Vec::<String>::new(), Vec::<String>::new());
        let bad = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix("# ") {
                let Some((k, v)) = kv.split_once('=') else { continue };
                let num = |v: &str| v.parse::<f64>().map_err(|e| bad(i + 1, e.to_string()));
                match k {
                    "threshold" => p.core_threshold = num(v)? as u64,
                    "max_coreness" => p.max_coreness = num(v)? as u64,
                    "normalized_threshold" => p.normalized_threshold = num(v)?,
                    "peak_wicci" => p.peak_wicci = num(v)?,
                    "core_density" => p.core_density = num(v)?,
                    _ => {}
                }
                continue;
            }
            match line.split_once('\t') {
                Some((id, "core")) => {
                    p.core.insert(id.to_owned());
                }
                Some((id, "periphery")) | Some((id, "compromised")) => {
                    p.periphery.insert(id.to_owned());
                }
                _ => return Err(bad(i + 1, format!("expected user_id<TAB>core|periphery, got {line:?}"))),
            }
        }
        if let Some(dup) = p.core.intersection(&p.periphery).next() {
            return Err(bad(0, format!("{dup:?} labelled both core and periphery")));
        }
        Ok(p)
    }
}

/// Sweeps weighted-coreness thresholds from the maximum down to 1 and keeps
/// the candidate core with the largest index.
pub fn korse(g: &Ccn, params: &WicciParams) -> Result<CorePartition> {
    let total = g.total_weight();
    if total == 0 {
        return Err(Error::EdgelessGraph);
    }
    let cm = coreness(g, CoreMode::Weighted);
    let max_c = cm.max_coreness();

    // Nodes by descending coreness; the candidate at threshold t is a prefix.
    let mut stack: Vec<NodeIx> = (0..g.node_count()).collect();
    stack.sort_by(|&a, &b| cm.get(b).cmp(&cm.get(a)).then(a.cmp(&b)));

    let mut in_core = vec![false; g.node_count()];
    let (mut internal_weight, mut internal_edges, mut size) = (0u64, 0usize, 0usize);
    let mut next = 0;
    let mut trace = Vec::with_capacity(max_c as usize);
    let mut best: Option<(usize, usize)> = None; // (trace row, prefix length)

    let absorb = |u: NodeIx, in_core: &mut [bool], w: &mut u64, e: &mut usize| {
        for &(v, wt) in g.neighbors(u) {
            if in_core[v] {
                *w += wt;
                *e += 1;
            }
        }
        in_core[u] = true;
    };

    for threshold in (1..=max_c).rev() {
        while next < stack.len() && cm.get(stack[next]) >= threshold {
            absorb(stack[next], &mut in_core, &mut internal_weight, &mut internal_edges);
            size += 1;
            next += 1;
        }
        let dens = density(size, internal_edges);
        let frac = internal_weight as f64 / total as f64;
        let score = if size < 2 { 0.0 } else { params.score(frac, dens) };
        trace.push(SweepRow {
            threshold,
            core_size: size,
            density: dens,
            weight_fraction: frac,
            wicci: score,
        });
        if best.is_none_or(|(row, _)| score > trace[row].wicci) {
            best = Some((trace.len() - 1, size));
        }
    }

    while next < stack.len() {
        absorb(stack[next], &mut in_core, &mut internal_weight, &mut internal_edges);
        size += 1;
        next += 1;
    }
    let whole_density = density(size, internal_edges);
    let whole_graph = SweepRow {
        threshold: 0,
        core_size: size,
        density: whole_density,
        weight_fraction: 1.0,
        wicci: params.score(1.0, whole_density),
    };

    let (row, prefix) = best.expect("an edge implies max coreness >= 1");
    let chosen = trace[row];
    let core: BTreeSet<String> = stack[..prefix].iter().map(|&i| g.name(i).to_owned()).collect();
    let periphery = stack[prefix..].iter().map(|&i| g.name(i).to_owned()).collect();
    Ok(CorePartition {
        core,
        periphery,
        core_threshold: chosen.threshold,
        max_coreness: max_c,
        normalized_threshold: chosen.threshold as f64 / max_c as f64,
        peak_wicci: chosen.wicci,
        core_density: chosen.density,
        sweep_trace: trace,
        whole_graph: Some(whole_graph),
    })
}

/// Plot-ready row of the threshold sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub norm_threshold: f64,
    pub core_size: usize,
    pub density: f64,
    pub weight_fraction: f64,
    pub wicci: f64,
}

/// Density, weight-fraction and index curves by ascending normalized
/// threshold. The threshold-0 (whole graph) row is included; consecutive
/// thresholds selecting the same node set collapse into the lowest one.
pub fn sweep_curves(partition: &CorePartition) -> Vec<CurveRow> {
    let max_c = partition.max_coreness.max(1) as f64;
    let mut rows: Vec<SweepRow> = partition.sweep_trace.clone();
    rows.extend(partition.whole_graph);
    rows.sort_by_key(|r| r.threshold);
    let mut out: Vec<CurveRow> = Vec::new();
    let mut last_size = None;
    for r in rows {
        // candidate sets are nested, so equal size means the same set
        if last_size == Some(r.core_size) {
            continue;
        }
        last_size = Some(r.core_size);
        out.push(CurveRow {
            norm_threshold: r.threshold as f64 / max_c,
            core_size: r.core_size,
            density: r.density,
            weight_fraction: r.weight_fraction,
            wicci: r.wicci,
        });
    }
    out
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("norm_threshold,core_size,density,weight_fraction,wicci\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.norm_threshold, r.core_size, r.density, r.weight_fraction, r.wicci
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccn::test_graphs::*;
    use crate::kcore::k_core;

    fn all(g: &Ccn) -> Vec<NodeIx> {
        (0..g.node_count()).collect()
    }

    #[test]
    fn params_validate() {
        assert!(WicciParams::new(0.0, 1.0).is_err());
        assert!(WicciParams::new(1.0, -1.0).is_err());
        assert!(WicciParams::new(f64::NAN, 1.0).is_err());
        assert!(WicciParams::new(2.0, 1.0).is_ok());
    }

    #[test]
    fn whole_graph_with_beta_one_is_density() {
        let g = unit(&[("a", "b"), ("b", "c"), ("c", "d")]);
        let w = wicci(&g, &all(&g), &WicciParams::default()).unwrap();
        assert_eq!(w, g.density());
    }

    #[test]
    fn singleton_core_is_zero() {
        let g = triangle();
        assert_eq!(wicci(&g, &[1], &WicciParams::default()).unwrap(), 0.0);
        assert_eq!(wicci(&g, &[], &WicciParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn triangle_plus_pendant() {
        let g = unit(&[("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")]);
        let w = wicci(&g, &[0, 1, 2], &WicciParams::default()).unwrap();
        assert!((w - 0.75).abs() < 1e-15);
    }

    #[test]
    fn edgeless_is_error() {
        let g = Ccn::from_edges(vec!["a", "b"], Vec::<(&str, &str, u64)>::new()).unwrap();
        assert!(matches!(
            wicci(&g, &[0, 1], &WicciParams::default()),
            Err(Error::EdgelessGraph)
        ));
        assert!(matches!(korse(&g, &WicciParams::default()), Err(Error::EdgelessGraph)));
    }

    #[test]
    fn k5_single_level() {
        let g = Ccn::from_edges(Vec::<String>::new(), clique("n", 5)).unwrap();
        let p = korse(&g, &WicciParams::default()).unwrap();
        assert_eq!(p.core.len(), 5);
        assert_eq!(p.core_threshold, 4);
        assert_eq!(p.normalized_threshold, 1.0);
        assert_eq!(p.peak_wicci, 1.0);
        assert!(p.periphery.is_empty());
        let curves = sweep_curves(&p);
        assert_eq!(curves.len(), 1);
        assert_eq!(curves[0].density, 1.0);
        assert_eq!(curves[0].weight_fraction, 1.0);
    }

    #[test]
    fn heavy_clique_with_light_tail() {
        let mut e: Vec<(String, String, u64)> = clique("c", 5).into_iter().map(|(a, b, _)| (a, b, 10)).collect();
        for i in 0..10 {
            e.push((format!("p{i}"), format!("p{}", (i + 1) % 10), 1));
        }
        e.push(("c0".into(), "p0".into(), 1));
        let g = Ccn::from_edges(Vec::<String>::new(), e).unwrap();
        let p = korse(&g, &WicciParams::default()).unwrap();
        let core: Vec<&str> = p.core.iter().map(String::as_str).collect();
        assert_eq!(core, vec!["c0", "c1", "c2", "c3", "c4"]);
        assert_eq!(p.core_density, 1.0);
        assert_eq!(p.core.len() + p.periphery.len(), g.node_count());
    }

    #[test]
    fn candidates_match_k_core_and_are_nested() {
        let g = weighted(&[
            ("a", "b", 4),
            ("b", "c", 3),
            ("a", "c", 2),
            ("c", "d", 1),
            ("d", "e", 2),
            ("e", "f", 1),
        ]);
        let p = korse(&g, &WicciParams::default()).unwrap();
        let mut last = 0;
        for row in &p.sweep_trace {
            assert_eq!(row.core_size, k_core(&g, row.threshold, CoreMode::Weighted).len());
            assert!(row.core_size >= last);
            last = row.core_size;
        }
        let peak = p.sweep_trace.iter().map(|r| r.wicci).fold(0.0, f64::max);
        assert_eq!(peak, p.peak_wicci);
    }

    #[test]
    fn tsv_round_trip() {
        let g = unit(&[("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")]);
        let p = korse(&g, &WicciParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partition.tsv");
        p.write_tsv(&path).unwrap();
        let back = CorePartition::read_tsv(&path).unwrap();
        assert_eq!(back.core, p.core);
        assert_eq!(back.periphery, p.periphery);
        assert_eq!(back.core_threshold, p.core_threshold);
        assert_eq!(back.peak_wicci, p.peak_wicci);
        assert_eq!(back.normalized_threshold, p.normalized_threshold);
    }

    #[test]
    fn curves_zero_row_has_full_weight() {
        let g = unit(&[("a", "b"), ("b", "c"), ("a", "c"), ("c", "d")]);
        let p = korse(&g, &WicciParams::default()).unwrap();
        let c = sweep_curves(&p);
        assert_eq!(c[0].norm_threshold, 0.0);
        assert_eq!(c[0].weight_fraction, 1.0);
        assert!(curves_csv(&c).starts_with("norm_threshold,core_size,density,weight_fraction,wicci\n"));
    }
}
