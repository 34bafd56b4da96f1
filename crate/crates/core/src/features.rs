//! Per-user metadata (MFE), similarity (SFE) and textual (TFE) features.
//!
//! Index maps:
//!
//! | block | indexes  | content                                             |
//! |-------|----------|-----------------------------------------------------|
//! | MFE   | 0..=4    | stat5 of self-comment counts per uploaded video     |
//! | MFE   | 5        | number of uploaded videos                           |
//! | MFE   | 6..=10   | stat5 of uploaded-video durations                   |
//! | MFE   | 11..=15  | stat5 of likes                                      |
//! | MFE   | 16..=20  | stat5 of dislikes                                   |
//! | MFE   | 21..=25  | stat5 of views                                      |
//! | SFE   | 0..=4    | stat5 of pairwise cosines within own-video comments |
//! | SFE   | 5..=9    | ... within comments on others' videos               |
//! | SFE   | 10..=14  | ... across own-video x other-video comments         |
//! | SFE   | 15..=19  | ... within own-video texts                          |
//! | SFE   | 20..=24  | ... across own-video x commented-video texts        |
//! | TFE   | 0..d     | mean embedding of all the user's comments           |
//!
//! stat5 is `(max, min, total, average, population variance)`. Degenerate
//! sets (fewer than two members, or an empty side of a cross product) give
//! zeros.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::data::{CommentRecord, Dataset};
use crate::embedding::{cosine_slices, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::korse::CorePartition;

pub const MFE_LEN: usize = 26;
pub const SFE_LEN: usize = 25;
pub const DEFAULT_SFE_CAP: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Core,
    Compromised,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Core => "core",
            Label::Compromised => "compromised",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "core" => Some(Label::Core),
            "compromised" | "periphery" => Some(Label::Compromised),
            _ => None,
        }
    }

    pub fn is_core(self) -> bool {
        self == Label::Core
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub user_id: String,
    pub mfe: Vec<f64>,
    pub sfe: Vec<f64>,
    pub tfe: Vec<f64>,
    pub label: Option<Label>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StatFive {
    pub max: f64,
    pub min: f64,
    pub total: f64,
    pub average: f64,
    pub variance: f64,
}

impl StatFive {
    pub fn to_array(self) -> [f64; 5] {
        [self.max, self.min, self.total, self.average, self.variance]
    }
}

pub fn stat5(xs: &[f64]) -> StatFive {
    if xs.is_empty() {
        return StatFive::default();
    }
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let average = total / n;
    let variance = xs.iter().map(|x| (x - average).powi(2)).sum::<f64>() / n;
    StatFive {
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        total,
        average,
        variance,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureConfig {
    /// Most recent comments kept per comment set before pairwise similarity.
    pub sfe_cap: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sfe_cap: DEFAULT_SFE_CAP,
        }
    }
}

pub fn mfe(d: &Dataset, user_id: &str) -> Vec<f64> {
    let uploads: Vec<_> = d.uploads_of(user_id).collect();
    let col = |f: &dyn Fn(&crate::data::VideoRecord) -> f64| -> [f64; 5] {
        stat5(&uploads.iter().map(|v| f(v)).collect::<Vec<_>>()).to_array()
    };
    let mut out = Vec::with_capacity(MFE_LEN);
    out.extend(col(&|v| d.comment_count(user_id, &v.video_id) as f64));
    out.push(uploads.len() as f64);
    out.extend(col(&|v| v.duration_sec as f64));
    out.extend(col(&|v| v.likes as f64));
    out.extend(col(&|v| v.dislikes as f64));
    out.extend(col(&|v| v.views as f64));
    out
}

/// Embeddings of every text a set of users touches, computed once.
struct TextCache {
    dim: usize,
    map: HashMap<String, Embedding>,
}

impl TextCache {
    fn build<'a>(provider: &dyn EmbeddingProvider, texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let distinct: BTreeSet<&str> = texts.into_iter().collect();
        let distinct: Vec<&str> = distinct.into_iter().collect();
        let embedded: Vec<Embedding> = distinct.par_iter().map(|t| provider.embed(t)).collect::<Result<_>>()?;
        let dim = provider.dim();
        if let Some(e) = embedded.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
        Ok(TextCache {
            dim,
            map: distinct.into_iter().map(str::to_owned).zip(embedded).collect(),
        })
    }

    fn get(&self, text: &str) -> &[f64] {
        self.map[text].as_slice()
    }
}

struct UserTexts<'a> {
    own_comments: Vec<&'a str>,
    other_comments: Vec<&'a str>,
    own_videos: Vec<String>,
    other_videos: Vec<String>,
    all_comments: Vec<&'a str>,
}

fn most_recent(mut comments: Vec<&CommentRecord>, cap: usize) -> Vec<&str> {
    // newest first; undated comments count as oldest
    comments.sort_by(|a, b| {
        b.timestamp
            .cmp(&a.timestamp)
            .then_with(|| a.comment_id.cmp(&b.comment_id))
    });
    comments.truncate(cap);
    comments.into_iter().map(|c| c.text.as_str()).collect()
}

fn user_texts<'a>(d: &'a Dataset, user_id: &str, cap: usize) -> UserTexts<'a> {
    let mut own = Vec::new();
    let mut other = Vec::new();
    let mut other_videos = BTreeSet::new();
    let mut all = Vec::new();
    for c in d.comments_by(user_id) {
        all.push(c.text.as_str());
        match d.video(&c.video_id) {
            Some(v) if v.uploader_user_id == user_id => own.push(c),
            Some(_) => {
                other.push(c);
                other_videos.insert(c.video_id.as_str());
            }
            None => other.push(c),
        }
    }
    UserTexts {
        own_comments: most_recent(own, cap),
        other_comments: most_recent(other, cap),
        own_videos: d.uploads_of(user_id).map(|v| v.combined_text()).collect(),
        other_videos: other_videos
            .into_iter()
            .filter_map(|v| d.video(v))
            .map(|v| v.combined_text())
            .collect(),
        all_comments: all,
    }
}

fn within(cache: &TextCache, texts: &[impl AsRef<str>]) -> [f64; 5] {
    if texts.len() < 2 {
        return [0.0; 5];
    }
    let vecs: Vec<&[f64]> = texts.iter().map(|t| cache.get(t.as_ref())).collect();
    let mut sims = Vec::with_capacity(vecs.len() * (vecs.len() - 1) / 2);
    for i in 0..vecs.len() {
        for j in i + 1..vecs.len() {
            sims.push(cosine_slices(vecs[i], vecs[j]));
        }
    }
    stat5(&sims).to_array()
}

fn across(cache: &TextCache, left: &[impl AsRef<str>], right: &[impl AsRef<str>]) -> [f64; 5] {
    if left.is_empty() || right.is_empty() {
        return [0.0; 5];
    }
    let r: Vec<&[f64]> = right.iter().map(|t| cache.get(t.as_ref())).collect();
    let mut sims = Vec::with_capacity(left.len() * r.len());
    for l in left {
        let lv = cache.get(l.as_ref());
        for rv in &r {
            sims.push(cosine_slices(lv, rv));
        }
    }
    stat5(&sims).to_array()
}

fn sfe_cached(t: &UserTexts<'_>, cache: &TextCache) -> Vec<f64> {
    let mut out = Vec::with_capacity(SFE_LEN);
    out.extend(within(cache, &t.own_comments));
    out.extend(within(cache, &t.other_comments));
    out.extend(across(cache, &t.own_comments, &t.other_comments));
    out.extend(within(cache, &t.own_videos));
    out.extend(across(cache, &t.own_videos, &t.other_videos));
    out
}

fn tfe_cached(t: &UserTexts<'_>, cache: &TextCache) -> Vec<f64> {
    let mut acc = vec![0.0; cache.dim];
    if t.all_comments.is_empty() {
        return acc;
    }
    for text in &t.all_comments {
        for (a, x) in acc.iter_mut().zip(cache.get(text)) {
            *a += x;
        }
    }
    let n = t.all_comments.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    acc
}

fn texts_of<'a>(t: &'a UserTexts<'_>) -> impl Iterator<Item = &'a str> {
    t.all_comments
        .iter()
        .copied()
        .chain(t.own_videos.iter().map(String::as_str))
        .chain(t.other_videos.iter().map(String::as_str))
}

pub fn sfe(d: &Dataset, user_id: &str, provider: &dyn EmbeddingProvider, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let t = user_texts(d, user_id, cfg.sfe_cap);
    let cache = TextCache::build(provider, texts_of(&t))?;
    Ok(sfe_cached(&t, &cache))
}

pub fn tfe(d: &Dataset, user_id: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>> {
    let t = user_texts(d, user_id, usize::MAX);
    let cache = TextCache::build(provider, t.all_comments.iter().copied())?;
    Ok(tfe_cached(&t, &cache))
}

/// One feature vector per dataset user (or per partition member when a
/// partition is given), in user id order, labelled from the partition.
pub fn extract_all(
    d: &Dataset,
    partition: Option<&CorePartition>,
    provider: &dyn EmbeddingProvider,
    cfg: &FeatureConfig,
) -> Result<Vec<FeatureVector>> {
    let users: Vec<&str> = match partition {
        Some(p) => {
            let all: BTreeSet<&str> = p.core.iter().chain(&p.periphery).map(String::as_str).collect();
            all.into_iter().collect()
        }
        None => {
            let all: BTreeSet<&str> = d.users().iter().map(|u| u.user_id.as_str()).collect();
            all.into_iter().collect()
        }
    };
    let texts: Vec<UserTexts<'_>> = users.iter().map(|u| user_texts(d, u, cfg.sfe_cap)).collect();
    // TFE averages every comment, so the cache has to cover uncapped sets.
    let cache = TextCache::build(provider, texts.iter().flat_map(texts_of))?;

    let out: Vec<FeatureVector> = users
        .par_iter()
        .zip(texts.par_iter())
        .map(|(&u, t)| FeatureVector {
            user_id: u.to_owned(),
            mfe: mfe(d, u),
            sfe: sfe_cached(t, &cache),
            tfe: tfe_cached(t, &cache),
            label: partition.map(|p| if p.is_core(u) { Label::Core } else { Label::Compromised }),
        })
        .collect();
    Ok(out)
}

/// Feature CSV: `user_id,label,mfe_0..,sfe_0..,tfe_0..`.
pub fn write_features_csv(path: &Path, rows: &[FeatureVector]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.tfe.len());
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["user_id".to_owned(), "label".to_owned()];
    header.extend((0..MFE_LEN).map(|i| format!("mfe_{i}")));
    header.extend((0..SFE_LEN).map(|i| format!("sfe_{i}")));
    header.extend((0..dim).map(|i| format!("tfe_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        if r.mfe.len() != MFE_LEN || r.sfe.len() != SFE_LEN || r.tfe.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: MFE_LEN + SFE_LEN + dim,
                found: r.mfe.len() + r.sfe.len() + r.tfe.len(),
            });
        }
        let mut rec = vec![
            r.user_id.clone(),
            r.label.map(|l| l.as_str().to_owned()).unwrap_or_default(),
        ];
        rec.extend(r.mfe.iter().chain(&r.sfe).chain(&r.tfe).map(|x| format!("{x:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let header = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let dim = header.iter().filter(|h| h.starts_with("tfe_")).count();
    if header.len() != 2 + MFE_LEN + SFE_LEN + dim {
        return Err(bad(1, "unexpected feature header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let nums: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(line, e.to_string()))?;
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(bad(line, "non-finite feature".into()));
        }
        let label = match &rec[1] {
            "" => None,
            s => Some(Label::parse(s).ok_or_else(|| bad(line, format!("unknown label {s:?}")))?),
        };
        out.push(FeatureVector {
            user_id: rec[0].to_owned(),
            mfe: nums[..MFE_LEN].to_vec(),
            sfe: nums[MFE_LEN..MFE_LEN + SFE_LEN].to_vec(),
            tfe: nums[MFE_LEN + SFE_LEN..].to_vec(),
            label,
        });
    }
    Ok(out)
}
