//! Subcommand implementations. Each reads its inputs from files, writes its
//! outputs into the run directory and returns summary lines for stdout.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use korse_core::analysis::{
    case_study_report, categorize_videos, category_counts, interplay_correlations, interplay_csv, interplay_table,
    louvain, periphery_lcc, removal_curve, CommunitySet, OrderKey,
};
use korse_core::ccn::{build_ccn, graph_stats, Ccn};
use korse_core::data::Dataset;
use korse_core::embedding::{EmbeddingProvider, FileEmbedder, StubEmbedder};
use korse_core::features::{extract_all, read_features_csv, write_features_csv, FeatureConfig, FeatureVector};
use korse_core::kcore::{coreness, CoreMode};
use korse_core::korse::{curves_csv, korse, sweep_curves, CorePartition, WicciParams};
use korse_core::nurse::eval::curve_csvs;
use korse_core::nurse::{
    ablations, evaluate, evaluate_with, train, weighted_betweenness, EvalMode, EvalReport, NurseConfig, NurseModel,
};
use korse_core::synth::{generate, read_labels, SynthConfig};

use crate::error::CliError;
use crate::run::Run;

pub type Lines = Vec<String>;

pub const REPORT: &str = "ingest_report.txt";
pub const GRAPH: &str = "ccn.tsv";
pub const GRAPH_STATS: &str = "ccn_stats.txt";
pub const CORENESS: &str = "coreness.tsv";
pub const PARTITION: &str = "partition.tsv";
pub const SWEEP: &str = "sweep.csv";
pub const BREAKAGE_CURVES: &str = "breakage_curves.csv";
pub const BREAKAGE_SUMMARY: &str = "breakage_summary.txt";
pub const COMMUNITIES: &str = "communities.tsv";
pub const VIDEO_CATEGORIES: &str = "video_categories.csv";
pub const INTERPLAY: &str = "interplay.csv";
pub const INTERPLAY_SUMMARY: &str = "interplay_summary.txt";
pub const CASE_STUDY: &str = "case_study.txt";
pub const BENEFICIARIES: &str = "beneficiaries.csv";
pub const FEATURES: &str = "features.csv";
pub const MODEL: &str = "model.json";
pub const TRAIN_SUMMARY: &str = "train_summary.txt";
pub const PREDICTIONS: &str = "predictions.tsv";
pub const ABLATION: &str = "ablation.csv";
pub const WBC_RANKING: &str = "wbc_ranking.tsv";
pub const RECOVERY: &str = "recovery.txt";

fn load_dataset(run: &mut Run, dir: &Path) -> Result<Dataset, CliError> {
    run.data_dir(dir)?;
    let d = Dataset::ingest_dir(dir)?;
    let violations = d.validate();
    if let Some(first) = violations.first() {
        return Err(CliError::Validation(format!(
            "{} integrity violations, first: {first} (run ingest-check for the full list)",
            violations.len()
        )));
    }
    Ok(d)
}

fn load_graph(run: &mut Run, path: &Path) -> Result<Ccn, CliError> {
    Ok(Ccn::read_edge_list(&run.input(path)?)?)
}

fn load_partition(run: &mut Run, path: &Path) -> Result<CorePartition, CliError> {
    Ok(CorePartition::read_tsv(&run.input(path)?)?)
}

fn load_features(run: &mut Run, path: &Path, labelled: bool) -> Result<Vec<FeatureVector>, CliError> {
    let rows = read_features_csv(&run.input(path)?)?;
    if rows.is_empty() {
        return Err(CliError::Validation(format!("{} has no rows", path.display())));
    }
    if labelled {
        if let Some(r) = rows.iter().find(|r| r.label.is_none()) {
            return Err(CliError::Validation(format!(
                "{}: {} has no label (extract features with --partition)",
                path.display(),
                r.user_id
            )));
        }
    }
    Ok(rows)
}

fn eval_setup(run: &mut Run) -> Result<(EvalMode, usize, u64), CliError> {
    let mode: EvalMode = run.get("eval_mode")?;
    let folds = run.get("folds")?;
    for s in ["eval-undersample", "eval-folds"] {
        run.stage(s)?;
    }
    Ok((mode, folds, run.seed()?))
}

fn nurse_config(run: &mut Run, dim: usize) -> Result<NurseConfig, CliError> {
    let mut cfg = NurseConfig::new(dim);
    cfg.epochs = run.get("epochs")?;
    cfg.learning_rate = run.get("learning_rate")?;
    cfg.momentum = run.get("momentum")?;
    cfg.batch_size = run.get("batch_size")?;
    cfg.class_weighted = run.get("class_weighted")?;
    cfg.seed = run.seed()?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_eval(run: &mut Run, prefix: &str, method: &str, r: &EvalReport) -> Result<(), CliError> {
    run.write(&format!("{prefix}.csv"), r.to_csv())?;
    run.write(&format!("{prefix}_summary.txt"), r.summary_kv())?;
    let (f1, auc) = curve_csvs(&[(method.to_owned(), r)]);
    run.write(&format!("{prefix}_curves_f1.csv"), f1)?;
    run.write(&format!("{prefix}_curves_auc.csv"), auc)?;
    Ok(())
}

fn eval_lines(method: &str, r: &EvalReport) -> Lines {
    vec![format!(
        "{method}: mode={} folds={} mean_auc={:.4} break_even_f1={:.4} f1_at_half={:.4}",
        r.mode,
        r.folds.len(),
        r.mean_auc,
        r.mean_break_even.f1,
        r.mean_f1_at_half
    )]
}

pub fn ingest_check(run: &mut Run, data: &Path) -> Result<Lines, CliError> {
    run.data_dir(data)?;
    let d = Dataset::ingest_dir(data)?;
    let violations = d.validate();
    let mut report = format!(
        "users={}\nvideos={}\ncomments={}\nviolations={}\n",
        d.users().len(),
        d.videos().len(),
        d.comments().len(),
        violations.len()
    );
    for v in &violations {
        let _ = writeln!(report, "{v}");
    }
    run.write(REPORT, &report)?;
    if !violations.is_empty() {
        return Err(CliError::Validation(format!(
            "{} integrity violations, see {REPORT}",
            violations.len()
        )));
    }
    Ok(report.lines().take(4).map(str::to_owned).collect())
}

pub fn build_ccn_cmd(run: &mut Run, data: &Path) -> Result<Lines, CliError> {
    let d = load_dataset(run, data)?;
    let collusive_only = run.get("collusive_only")?;
    info!("building network from {} comments", d.comments().len());
    let g = build_ccn(&d, collusive_only);
    g.write_edge_list(&run.out_path(GRAPH))?;
    run.wrote(GRAPH);
    let stats = graph_stats(&g).to_kv();
    run.write(GRAPH_STATS, &stats)?;
    Ok(vec![format!("nodes={} edges={}", g.node_count(), g.edge_count())])
}

pub fn kcore_cmd(run: &mut Run, graph: &Path) -> Result<Lines, CliError> {
    let g = load_graph(run, graph)?;
    let mode: CoreMode = run.get("core_mode")?;
    let cm = coreness(&g, mode);
    run.write(CORENESS, cm.to_tsv(&g))?;
    Ok(vec![format!("max_coreness={}", cm.max_coreness())])
}

fn beta_file(beta: f64) -> String {
    format!("sweep_beta_{beta}.csv")
}

pub fn korse_cmd(run: &mut Run, graph: &Path) -> Result<Lines, CliError> {
    let g = load_graph(run, graph)?;
    let beta = run.get("beta")?;
    let k_const = run.get("k_const")?;
    let p = korse(&g, &WicciParams::new(beta, k_const)?)?;
    p.write_tsv(&run.out_path(PARTITION))?;
    run.wrote(PARTITION);
    run.write(SWEEP, curves_csv(&sweep_curves(&p)))?;
    let extra: String = run.get("sweep_betas")?;
    for b in extra.split(',').map(str::trim).filter(|b| !b.is_empty()) {
        let b: f64 = b
            .parse()
            .map_err(|_| CliError::Usage(format!("bad sweep_betas entry {b:?}")))?;
        let pb = korse(&g, &WicciParams::new(b, k_const)?)?;
        run.write(&beta_file(b), curves_csv(&sweep_curves(&pb)))?;
    }
    Ok(vec![format!(
        "core={} threshold={} normalized_threshold={:.4} peak_wicci={:.4} core_density={:.4}",
        p.core.len(),
        p.core_threshold,
        p.normalized_threshold,
        p.peak_wicci,
        p.core_density
    )])
}

pub fn breakage_cmd(run: &mut Run, graph: &Path) -> Result<Lines, CliError> {
    let g = load_graph(run, graph)?;
    let step = run.get("breakage_step")?;
    let mut long = String::from("series,x,y\n");
    let mut summary = String::new();
    let mut lines = Vec::new();
    for key in OrderKey::ALL {
        let curve = removal_curve(&g, key, step)?;
        run.write(&format!("breakage_{key}.csv"), curve.to_csv())?;
        curve.long_rows(&mut long);
        let point = curve.disintegration_point();
        let at = point.map_or("none".to_owned(), |p| format!("{:?}", p.fraction_removed));
        let _ = writeln!(summary, "{key}.disintegration_fraction={at}");
        lines.push(format!("{key}: disintegrates at {at}"));
    }
    run.write(BREAKAGE_CURVES, long)?;
    run.write(BREAKAGE_SUMMARY, summary)?;
    Ok(lines)
}

pub fn communities_cmd(run: &mut Run, graph: &Path, partition: &Path) -> Result<Lines, CliError> {
    let g = load_graph(run, graph)?;
    let p = load_partition(run, partition)?;
    let lcc = periphery_lcc(&g, &p);
    let seed = run.seed()?;
    run.stage("louvain")?;
    let cs = louvain(&lcc, seed);
    run.write(COMMUNITIES, cs.to_tsv())?;
    Ok(vec![format!(
        "periphery_lcc={} communities={} modularity={:.4}",
        lcc.node_count(),
        cs.community_count(),
        cs.modularity
    )])
}

pub fn interplay_cmd(
    run: &mut Run,
    data: &Path,
    graph: &Path,
    partition: &Path,
    communities: &Path,
) -> Result<Lines, CliError> {
    let d = load_dataset(run, data)?;
    let g = load_graph(run, graph)?;
    let p = load_partition(run, partition)?;
    let cs = CommunitySet::read_tsv(&run.input(communities)?)?;

    let cats = categorize_videos(&d, &p);
    let mut csv = String::from("video_id,category\n");
    for (v, c) in &cats {
        let _ = writeln!(csv, "{v},{c}");
    }
    run.write(VIDEO_CATEGORIES, csv)?;

    let rows = interplay_table(&g, &p, &cs)?;
    run.write(INTERPLAY, interplay_csv(&rows))?;

    let mut summary = String::new();
    for (c, n) in category_counts(&cats) {
        let _ = writeln!(summary, "videos.{c}={n}");
    }
    let corr = interplay_correlations(&rows);
    match &corr {
        Ok((ws, deg)) => {
            let _ = writeln!(summary, "pearson_wcs_weighted_size={ws:?}");
            let _ = writeln!(summary, "pearson_wcs_avg_weighted_degree={deg:?}");
        }
        Err(e) => {
            let _ = writeln!(summary, "pearson_wcs_weighted_size=unavailable");
            let _ = writeln!(summary, "pearson_wcs_avg_weighted_degree=unavailable");
            info!("correlations unavailable: {e}");
        }
    }
    run.write(INTERPLAY_SUMMARY, &summary)?;
    Ok(summary.lines().map(str::to_owned).collect())
}

pub fn case_study_cmd(run: &mut Run, data: &Path, partition: &Path) -> Result<Lines, CliError> {
    let d = load_dataset(run, data)?;
    let p = load_partition(run, partition)?;
    let r = case_study_report(&d, &p)?;
    run.write(CASE_STUDY, r.to_kv())?;
    let mut csv = String::from("rank,user_id,mean_collusive_comments_per_video,is_core\n");
    for (i, (u, m)) in r.beneficiary_ranking.iter().enumerate() {
        let _ = writeln!(csv, "{},{u},{m:?},{}", i + 1, p.is_core(u));
    }
    run.write(BENEFICIARIES, csv)?;
    Ok(r.to_kv().lines().map(str::to_owned).collect())
}

pub fn features_cmd(
    run: &mut Run,
    data: &Path,
    partition: Option<&Path>,
    embeddings: Option<&Path>,
) -> Result<Lines, CliError> {
    let d = load_dataset(run, data)?;
    let p = partition.map(|p| load_partition(run, p)).transpose()?;
    let provider: Box<dyn EmbeddingProvider> = match embeddings {
        Some(path) => Box::new(FileEmbedder::load(&run.input(path)?)?),
        None => {
            let dim = run.get("embedding_dim")?;
            Box::new(StubEmbedder::new(dim, run.stage("stub-embedding")?)?)
        }
    };
    let cfg = FeatureConfig {
        sfe_cap: run.get("sfe_cap")?,
    };
    info!("extracting features with {}-dimensional embeddings", provider.dim());
    let rows = extract_all(&d, p.as_ref(), provider.as_ref(), &cfg)?;
    write_features_csv(&run.out_path(FEATURES), &rows)?;
    run.wrote(FEATURES);
    let core = rows.iter().filter(|r| r.label.is_some_and(|l| l.is_core())).count();
    Ok(vec![format!(
        "users={} labelled_core={core} dim={}",
        rows.len(),
        provider.dim()
    )])
}

pub fn nurse_train_cmd(run: &mut Run, features: &Path) -> Result<Lines, CliError> {
    let rows = load_features(run, features, true)?;
    let cfg = nurse_config(run, rows[0].tfe.len())?;
    run.stage("nurse-init")?;
    run.stage("nurse-train")?;
    let model = train(&rows, &cfg)?;
    model.save(&run.out_path(MODEL))?;
    run.wrote(MODEL);
    let summary = format!("best_epoch={}\nbest_loss={:?}\n", model.best_epoch, model.best_loss);
    run.write(TRAIN_SUMMARY, &summary)?;
    Ok(summary.lines().map(str::to_owned).collect())
}

pub fn nurse_eval_cmd(run: &mut Run, features: &Path, model: Option<&Path>) -> Result<Lines, CliError> {
    let model_path = model
        .ok_or_else(|| CliError::Input("nurse-eval needs a trained model (--model, written by nurse-train)".into()))?;
    let model = NurseModel::load(&run.input(model_path)?)?;
    let rows = load_features(run, features, true)?;
    let mut preds = String::from("user_id\tscore\n");
    for r in &rows {
        let _ = writeln!(preds, "{}\t{:?}", r.user_id, model.predict(r)?);
    }
    run.write(PREDICTIONS, preds)?;
    let (mode, folds, seed) = eval_setup(run)?;
    for (k, v) in [
        ("model.epochs", model.config.epochs.to_string()),
        ("model.learning_rate", model.config.learning_rate.to_string()),
        ("model.momentum", model.config.momentum.to_string()),
        ("model.batch_size", model.config.batch_size.to_string()),
        ("model.class_weighted", model.config.class_weighted.to_string()),
    ] {
        run.record_config(k.into(), v);
    }
    let report = evaluate(&rows, &model.config, mode, folds, seed)?;
    write_eval(run, "eval", "NURSE", &report)?;
    Ok(eval_lines("NURSE", &report))
}

pub fn ablate_cmd(run: &mut Run, features: &Path) -> Result<Lines, CliError> {
    let rows = load_features(run, features, true)?;
    let cfg = nurse_config(run, rows[0].tfe.len())?;
    let (mode, folds, seed) = eval_setup(run)?;
    let reports = ablations(&rows, &cfg, mode, folds, seed)?;
    let mut csv = String::from("branches,mean_auc,mean_break_even_f1,mean_f1_at_half,pooled_auc\n");
    let mut lines = Vec::new();
    for (b, r) in &reports {
        let _ = writeln!(
            csv,
            "{},{:?},{:?},{:?},{:?}",
            b.label(),
            r.mean_auc,
            r.mean_break_even.f1,
            r.mean_f1_at_half,
            r.pooled_auc
        );
        lines.extend(eval_lines(&b.label(), r));
    }
    run.write(ABLATION, csv)?;
    let named: Vec<(String, &EvalReport)> = reports.iter().map(|(b, r)| (b.label(), r)).collect();
    let (f1, auc) = curve_csvs(&named);
    run.write("ablation_curves_f1.csv", f1)?;
    run.write("ablation_curves_auc.csv", auc)?;
    Ok(lines)
}

pub fn baseline_wbc_cmd(run: &mut Run, graph: &Path, features: Option<&Path>) -> Result<Lines, CliError> {
    let g = load_graph(run, graph)?;
    let bc = weighted_betweenness(&g);
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.sort_by(|&a, &b| bc[b].total_cmp(&bc[a]).then(a.cmp(&b)));
    let mut tsv = String::from("user_id\tbetweenness\n");
    for &i in &order {
        let _ = writeln!(tsv, "{}\t{:?}", g.name(i), bc[i]);
    }
    run.write(WBC_RANKING, tsv)?;
    let Some(features) = features else {
        return Ok(vec![format!("ranked {} users", g.node_count())]);
    };
    let rows = load_features(run, features, true)?;
    let (mode, folds, seed) = eval_setup(run)?;
    let report = evaluate_with(&rows, mode, folds, seed, |fold| {
        Ok(fold
            .test
            .iter()
            .map(|r| g.index_of(&r.user_id).map_or(0.0, |i| bc[i]))
            .collect())
    })?;
    write_eval(run, "wbc_eval", "WBC", &report)?;
    Ok(eval_lines("WBC", &report))
}

pub fn synth_cmd(run: &mut Run) -> Result<Lines, CliError> {
    let mut cfg = SynthConfig {
        seed: run.seed()?,
        ..SynthConfig::default()
    };
    let entries: Vec<(String, String)> = run
        .settings()
        .synth_entries()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    for (k, v) in entries {
        if k == "seed" {
            return Err(CliError::Usage(
                "set the generator seed with --seed, not synth.seed".into(),
            ));
        }
        cfg.set(&k, &v)?;
    }
    for line in cfg.to_kv().lines() {
        if let Some((k, v)) = line.split_once('=') {
            if k != "seed" {
                run.record_config(format!("synth.{k}"), v.to_owned());
            }
        }
    }
    run.stage("synth")?;
    let out = generate(&cfg)?;
    let dir = run.out_path("");
    out.write_dir(&dir)?;
    for f in [
        "comments.jsonl",
        "videos.jsonl",
        "users.jsonl",
        "labels.tsv",
        "synth_meta",
    ] {
        run.wrote(f);
    }
    Ok(vec![format!(
        "users={} videos={} comments={} planted_core={}",
        out.dataset.users().len(),
        out.dataset.videos().len(),
        out.dataset.comments().len(),
        out.core_users().len()
    )])
}

/// Precision, recall and F1 of the recovered core against planted labels.
pub fn recovery(run: &mut Run, labels: &Path, partition: &Path) -> Result<Lines, CliError> {
    let planted: BTreeSet<String> = read_labels(&run.input(labels)?)?
        .into_iter()
        .filter(|(_, l)| l.is_core())
        .map(|(u, _)| u)
        .collect();
    let p = load_partition(run, partition)?;
    let tp = p.core.intersection(&planted).count();
    let precision = if p.core.is_empty() {
        0.0
    } else {
        tp as f64 / p.core.len() as f64
    };
    let recall = if planted.is_empty() {
        0.0
    } else {
        tp as f64 / planted.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let body = format!(
        "planted_core={}\nrecovered_core={}\ntrue_positives={tp}\nprecision={precision:?}\nrecall={recall:?}\nf1={f1:?}\n",
        planted.len(),
        p.core.len()
    );
    run.write(RECOVERY, &body)?;
    Ok(vec![format!(
        "planted-core recovery: precision={precision:.4} recall={recall:.4} f1={f1:.4}"
    )])
}

/// Labels file used by `pipeline`: the flag, else `labels.tsv` beside the data.
pub fn pipeline_labels(data: &Path, flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_owned).or_else(|| {
        let p = data.join("labels.tsv");
        p.is_file().then_some(p)
    })
}
