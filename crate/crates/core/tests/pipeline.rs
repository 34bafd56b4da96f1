//! Whole-pipeline properties on planted data.

use std::collections::BTreeSet;

use korse_core::analysis::{
    case_study_report, categorize_videos, category_counts, interplay_table, louvain, periphery_lcc, removal_curve,
    OrderKey,
};
use korse_core::ccn::{build_ccn, Ccn};
use korse_core::data::Dataset;
use korse_core::embedding::StubEmbedder;
use korse_core::features::{extract_all, read_features_csv, write_features_csv, FeatureConfig};
use korse_core::korse::{korse, CorePartition, WicciParams};
use korse_core::synth::{generate, read_labels, SynthConfig, SynthOutput};

fn planted(out: &SynthOutput) -> CorePartition {
    CorePartition::from_labels(out.core_users(), out.labels.keys().cloned())
}

#[test]
fn files_round_trip_through_every_stage() {
    let out = generate(&SynthConfig::default()).unwrap();
    assert!(out.dataset.validate().is_empty());
    let dir = tempfile::tempdir().unwrap();
    out.write_dir(dir.path()).unwrap();

    let d = Dataset::ingest_dir(dir.path()).unwrap();
    assert_eq!(d.comments(), out.dataset.comments());
    assert_eq!(read_labels(&dir.path().join("labels.tsv")).unwrap(), out.labels);

    let g = build_ccn(&d, true);
    assert_eq!(g.to_edge_list(), build_ccn(&out.dataset, true).to_edge_list());
    let edges = dir.path().join("ccn.tsv");
    g.write_edge_list(&edges).unwrap();
    let g2 = Ccn::read_edge_list(&edges).unwrap();
    assert_eq!(g2.to_edge_list(), g.to_edge_list());

    let p = korse(&g2, &WicciParams::default()).unwrap();
    let part = dir.path().join("partition.tsv");
    p.write_tsv(&part).unwrap();
    let p2 = CorePartition::read_tsv(&part).unwrap();
    assert_eq!((&p2.core, &p2.periphery), (&p.core, &p.periphery));

    let stub = StubEmbedder::new(16, 1).unwrap();
    let rows = extract_all(&d, Some(&p2), &stub, &FeatureConfig::default()).unwrap();
    let feats = dir.path().join("features.csv");
    write_features_csv(&feats, &rows).unwrap();
    assert_eq!(read_features_csv(&feats).unwrap(), rows);
}

#[test]
fn comment_ratios_converge_to_the_multipliers() {
    let cfg = SynthConfig {
        n_core: 200,
        n_compromised: 600,
        n_videos: 2000,
        core_pool_videos: 60,
        seed: 11,
        ..SynthConfig::default()
    };
    let out = generate(&cfg).unwrap();
    let r = case_study_report(&out.dataset, &planted(&out)).unwrap();
    let within = |got: Option<f64>, want: f64| (got.unwrap() - want).abs() <= 0.1 * want;
    assert!(
        within(r.comment_ratio, cfg.core_contribution_multiplier),
        "{:?}",
        r.comment_ratio
    );
    assert!(
        within(r.per_video_ratio, cfg.per_video_aggression_multiplier),
        "{:?}",
        r.per_video_ratio
    );
}

#[test]
fn symmetric_behaviour_gives_unit_ratios() {
    let cfg = SynthConfig {
        n_core: 100,
        n_compromised: 300,
        n_videos: 1200,
        core_pool_videos: 60,
        core_contribution_multiplier: 1.0,
        per_video_aggression_multiplier: 1.0,
        self_comment_multiplier_compromised: 1.0,
        core_upload_multiplier: 1.0,
        core_duration_multiplier: 1.0,
        seed: 2,
        ..SynthConfig::default()
    };
    let out = generate(&cfg).unwrap();
    let r = case_study_report(&out.dataset, &planted(&out)).unwrap();
    for v in [r.comment_ratio, r.per_video_ratio] {
        assert!((v.unwrap() - 1.0).abs() <= 0.1, "{r:?}");
    }
}

#[test]
fn network_outlives_the_core() {
    let out = generate(&SynthConfig::default()).unwrap();
    let g = build_ccn(&out.dataset, true);
    let core: BTreeSet<usize> = out.core_users().iter().map(|u| g.index_of(u).unwrap()).collect();
    let curve = removal_curve(&g, OrderKey::WeightedDegree, 1.0 / g.node_count() as f64).unwrap();
    let exhausted = curve.order.iter().rposition(|u| core.contains(u)).unwrap() + 1;
    let after_core = &curve.points[exhausted];
    assert!(2 * after_core.largest_component >= g.node_count() - exhausted);
    let point = curve
        .disintegration_point()
        .expect("the network eventually disintegrates");
    assert!(point.removed > exhausted, "{} vs {exhausted}", point.removed);
}

#[test]
fn interplay_accounting() {
    let out = generate(&SynthConfig::default()).unwrap();
    let g = build_ccn(&out.dataset, true);
    let p = korse(&g, &WicciParams::default()).unwrap();

    let counts = category_counts(&categorize_videos(&out.dataset, &p));
    assert_eq!(counts.values().sum::<usize>(), out.dataset.videos().len());

    let lcc = periphery_lcc(&g, &p);
    let cs = louvain(&lcc, 0);
    let rows = interplay_table(&g, &p, &cs).unwrap();
    let periphery = g.induced_subgraph(&p.periphery_indices(&g));
    assert!(rows.iter().map(|r| r.weighted_size).sum::<u64>() <= periphery.total_weight());
    assert_eq!(rows.iter().map(|r| r.size).sum::<usize>(), lcc.node_count());
    assert!(rows.iter().any(|r| r.wcs > 0.0));
}
