//! Ranking evaluation with stratified k-fold cross-validation.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::nurse::model::{Branches, NurseConfig};
use crate::nurse::train::train;
use crate::seed;

/// Probability that a random positive outranks a random negative, ties
/// counted one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // average 1-based ranks over tie groups
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Area under the single-cutoff ROC curve of flagging the top `k`:
    /// `(TPR + TNR) / 2`.
    pub cutoff_auc: f64,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Descending score order, ties by the supplied id order (input position).
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Precision, recall and F1 of the top `k` for every `k` in `1..=n`.
pub fn metrics_at_k(scores: &[f64], labels: &[bool]) -> Vec<KMetrics> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut tp = 0.0;
    ranking(scores)
        .into_iter()
        .enumerate()
        .map(|(i, ix)| {
            if labels[ix] {
                tp += 1.0;
            }
            let k = i + 1;
            let precision = tp / k as f64;
            let recall = if pos > 0.0 { tp / pos } else { 0.0 };
            let fp = k as f64 - tp;
            let tpr = recall;
            let tnr = if neg > 0.0 { (neg - fp) / neg } else { 0.0 };
            KMetrics {
                k,
                precision,
                recall,
                f1: f1(precision, recall),
                cutoff_auc: (tpr + tnr) / 2.0,
            }
        })
        .collect()
}

/// F1 of predicting core when the score is at least 0.5.
pub fn f1_at_half(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (s, &l) in scores.iter().zip(labels) {
        match (*s >= 0.5, l) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    f1(p, r)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Majority class undersampled to 1:1.
    Balanced,
    /// Every user, with class-weighted training loss.
    Complete,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Balanced => "balanced",
            EvalMode::Complete => "complete",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" | "balanced_1to1" => Ok(EvalMode::Balanced),
            "complete" => Ok(EvalMode::Complete),
            other => Err(Error::InvalidArgument(format!("unknown evaluation mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_size: usize,
    pub positives: usize,
    pub auc: f64,
    pub at_k: Vec<KMetrics>,
    /// Metrics at `k` = number of positives in the fold.
    pub break_even: KMetrics,
    pub f1_at_half: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub folds: Vec<FoldReport>,
    pub mean_auc: f64,
    pub mean_break_even: KMetrics,
    pub mean_f1_at_half: f64,
    /// Out-of-fold scores of every evaluated user, ranked together.
    pub pooled_auc: f64,
    pub pooled_at_k: Vec<KMetrics>,
    pub pooled_break_even: KMetrics,
    pub user_ids: Vec<String>,
    pub oof_scores: Vec<f64>,
}

/// Fold training and test sets handed to a scorer.
pub struct FoldData<'a> {
    pub fold: usize,
    pub seed: u64,
    pub train: Vec<&'a FeatureVector>,
    pub test: Vec<&'a FeatureVector>,
}

fn is_core(fv: &FeatureVector) -> Result<bool> {
    fv.label
        .map(|l| l.is_core())
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no label", fv.user_id)))
}

/// Users (sorted by id, optionally undersampled) and their fold numbers.
pub fn assign_folds(
    features: &[FeatureVector],
    mode: EvalMode,
    folds: usize,
    seed_value: u64,
) -> Result<(Vec<&FeatureVector>, Vec<usize>, usize)> {
    let mut rows: Vec<&FeatureVector> = features.iter().collect();
    rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, fv) in rows.iter().enumerate() {
        if is_core(fv)? {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    if mode == EvalMode::Balanced {
        let mut rng = seed::rng(seed_value, "eval-undersample");
        let keep = pos.len().min(neg.len());
        let major = if pos.len() > neg.len() { &mut pos } else { &mut neg };
        major.shuffle(&mut rng);
        major.truncate(keep);
        major.sort_unstable();
    }
    let k = folds.min(pos.len()).min(neg.len());
    if k < 2 {
        return Err(Error::Stratification(format!(
            "{} positives and {} negatives cannot fill two folds",
            pos.len(),
            neg.len()
        )));
    }
    if k < folds {
        log::warn!("reducing {folds} folds to {k} to keep both classes in every fold");
    }
    let mut rng = seed::rng(seed_value, "eval-folds");
    let mut fold_of = vec![usize::MAX; rows.len()];
    let mut dealt = 0;
    for class in [&mut pos, &mut neg] {
        class.shuffle(&mut rng);
        for &i in class.iter() {
            fold_of[i] = dealt % k;
            dealt += 1;
        }
    }
    let keep: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] != usize::MAX).collect();
    let selected = keep.iter().map(|&i| rows[i]).collect();
    let assignment = keep.iter().map(|&i| fold_of[i]).collect();
    Ok((selected, assignment, k))
}

fn mean_metrics(ms: &[KMetrics]) -> KMetrics {
    let n = ms.len() as f64;
    let avg = |f: fn(&KMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
    let precision = avg(|m| m.precision);
    let recall = avg(|m| m.recall);
    KMetrics {
        k: (ms.iter().map(|m| m.k).sum::<usize>() as f64 / n).round() as usize,
        precision,
        recall,
        // recomputed so the stored triple stays consistent
        f1: f1(precision, recall),
        cutoff_auc: avg(|m| m.cutoff_auc),
    }
}

/// Cross-validates an arbitrary scorer. The scorer returns one core score per
/// test user, higher meaning more likely core.
pub fn evaluate_with<F>(
    features: &[FeatureVector],
    mode: EvalMode,
    folds: usize,
    seed_value: u64,
    scorer: F,
) -> Result<EvalReport>
where
    F: Fn(&FoldData<'_>) -> Result<Vec<f64>> + Sync,
{
    let (rows, fold_of, k) = assign_folds(features, mode, folds, seed_value)?;
    let labels: Vec<bool> = rows.iter().map(|fv| is_core(fv)).collect::<Result<_>>()?;

    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let test_ix: Vec<usize> = (0..rows.len()).filter(|&i| fold_of[i] == f).collect();
            let data = FoldData {
                fold: f,
                seed: seed::derive(seed_value, &format!("fold-{f}")),
                train: (0..rows.len()).filter(|&i| fold_of[i] != f).map(|i| rows[i]).collect(),
                test: test_ix.iter().map(|&i| rows[i]).collect(),
            };
            let scores = scorer(&data)?;
            if scores.len() != test_ix.len() {
                return Err(Error::DimensionMismatch {
                    expected: test_ix.len(),
                    found: scores.len(),
                });
            }
            Ok((test_ix, scores))
        })
        .collect::<Result<_>>()?;

    let mut oof = vec![0.0; rows.len()];
    let mut fold_reports = Vec::with_capacity(k);
    for (f, (test_ix, scores)) in per_fold.into_iter().enumerate() {
        let lab: Vec<bool> = test_ix.iter().map(|&i| labels[i]).collect();
        for (&i, &s) in test_ix.iter().zip(&scores) {
            oof[i] = s;
        }
        let at_k = metrics_at_k(&scores, &lab);
        let positives = lab.iter().filter(|&&l| l).count();
        fold_reports.push(FoldReport {
            fold: f,
            test_size: lab.len(),
            positives,
            auc: auc(&scores, &lab)?,
            break_even: at_k[positives - 1],
            at_k,
            f1_at_half: f1_at_half(&scores, &lab),
        });
    }
    let n = k as f64;
    let pooled_at_k = metrics_at_k(&oof, &labels);
    let total_pos = labels.iter().filter(|&&l| l).count();
    Ok(EvalReport {
        mode,
        mean_auc: fold_reports.iter().map(|f| f.auc).sum::<f64>() / n,
        mean_break_even: mean_metrics(&fold_reports.iter().map(|f| f.break_even).collect::<Vec<_>>()),
        mean_f1_at_half: fold_reports.iter().map(|f| f.f1_at_half).sum::<f64>() / n,
        pooled_auc: auc(&oof, &labels)?,
        pooled_break_even: pooled_at_k[total_pos - 1],
        pooled_at_k,
        folds: fold_reports,
        user_ids: rows.iter().map(|r| r.user_id.clone()).collect(),
        oof_scores: oof,
    })
}

/// Trains a fresh model on each fold's training users and scores its
/// held-out users. Complete mode turns on class weighting.
pub fn evaluate(
    features: &[FeatureVector],
    config: &NurseConfig,
    mode: EvalMode,
    folds: usize,
    seed_value: u64,
) -> Result<EvalReport> {
    config.validate()?;
    evaluate_with(features, mode, folds, seed_value, |fold| {
        let cfg = NurseConfig {
            seed: fold.seed,
            class_weighted: config.class_weighted || mode == EvalMode::Complete,
            ..config.clone()
        };
        let train_rows: Vec<FeatureVector> = fold.train.iter().map(|&r| r.clone()).collect();
        let model = train(&train_rows, &cfg)?;
        fold.test.iter().map(|fv| model.predict(fv)).collect()
    })
}

/// One report per non-empty branch subset, all under the same seed.
pub fn ablations(
    features: &[FeatureVector],
    config: &NurseConfig,
    mode: EvalMode,
    folds: usize,
    seed_value: u64,
) -> Result<Vec<(Branches, EvalReport)>> {
    Branches::subsets()
        .into_iter()
        .map(|b| {
            let cfg = NurseConfig {
                branches: b,
                ..config.clone()
            };
            Ok((b, evaluate(features, &cfg, mode, folds, seed_value)?))
        })
        .collect()
}

impl EvalReport {
    /// `fold,k,precision,recall,f1,auc` for every fold and cutoff, then
    /// summary rows at the break-even point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,k,precision,recall,f1,auc\n");
        for f in &self.folds {
            for m in &f.at_k {
                let _ = writeln!(
                    s,
                    "{},{},{:?},{:?},{:?},{:?}",
                    f.fold, m.k, m.precision, m.recall, m.f1, f.auc
                );
            }
        }
        let m = &self.mean_break_even;
        let _ = writeln!(
            s,
            "mean,{},{:?},{:?},{:?},{:?}",
            m.k, m.precision, m.recall, m.f1, self.mean_auc
        );
        let p = &self.pooled_break_even;
        let _ = writeln!(
            s,
            "pooled,{},{:?},{:?},{:?},{:?}",
            p.k, p.precision, p.recall, p.f1, self.pooled_auc
        );
        s
    }

    pub fn summary_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode={}", self.mode);
        let _ = writeln!(s, "folds={}", self.folds.len());
        let _ = writeln!(s, "users={}", self.user_ids.len());
        let _ = writeln!(s, "mean_auc={:?}", self.mean_auc);
        let _ = writeln!(s, "mean_break_even_precision={:?}", self.mean_break_even.precision);
        let _ = writeln!(s, "mean_break_even_recall={:?}", self.mean_break_even.recall);
        let _ = writeln!(s, "mean_break_even_f1={:?}", self.mean_break_even.f1);
        let _ = writeln!(s, "mean_f1_at_half={:?}", self.mean_f1_at_half);
        let _ = writeln!(s, "pooled_auc={:?}", self.pooled_auc);
        let _ = writeln!(s, "pooled_break_even_k={}", self.pooled_break_even.k);
        let _ = writeln!(s, "pooled_break_even_f1={:?}", self.pooled_break_even.f1);
        s
    }
}

/// Long-format curve rows (`method,k,f1` and `method,k,auc`) from the pooled
/// ranking of each report.
pub fn curve_csvs(reports: &[(String, &EvalReport)]) -> (String, String) {
    let mut f1s = String::from("method,k,f1\n");
    let mut aucs = String::from("method,k,auc\n");
    for (name, r) in reports {
        for m in &r.pooled_at_k {
            let _ = writeln!(f1s, "{name},{},{:?}", m.k, m.f1);
            let _ = writeln!(aucs, "{name},{},{:?}", m.k, m.cutoff_auc);
        }
    }
    (f1s, aucs)
}
