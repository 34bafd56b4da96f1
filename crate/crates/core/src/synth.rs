//! Seeded synthetic market with planted core and compromised users.
//!
//! Structure:
//!
//! - compromised users fall into communities; each community comments on
//!   videos uploaded by its own members
//! - a pool of compromised users' videos is targeted by the core users only,
//!   who therefore co-comment with each other on almost every pool video
//! - everyone leaks a few comments onto random non-pool videos
//!
//! Behavioural ratios hold in expectation:
//!
//! - every (user, video) comment count is `1 + Poisson(mu - 1)`, the core
//!   mean being `per_video_aggression_multiplier` times the compromised one
//! - the core pool participation rate is solved from the realized videos so
//!   that expected comments per core user are `core_contribution_multiplier`
//!   times those of a compromised user
//! - expected self-comments per uploaded video are
//!   `self_comment_multiplier_compromised` times higher for compromised users

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{CommentRecord, Dataset, UserRecord, VideoRecord};
use crate::error::{Error, Result};
use crate::features::Label;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_core: usize,
    pub n_compromised: usize,
    pub n_videos: usize,
    pub core_contribution_multiplier: f64,
    pub per_video_aggression_multiplier: f64,
    pub self_comment_multiplier_compromised: f64,
    /// Uploads of a core user relative to a compromised user.
    pub core_upload_multiplier: f64,
    /// Median video duration of core users relative to compromised users.
    pub core_duration_multiplier: f64,
    pub peripheral_community_count: usize,
    /// Chance that a compromised user comments on a given video of its own
    /// community.
    pub intra_community_co_comment_rate: f64,
    /// Chance that a core user comments on a given non-pool compromised video.
    pub core_periphery_co_comment_rate: f64,
    /// Chance that a compromised user comments on a given video outside its
    /// community.
    pub inter_community_co_comment_rate: f64,
    /// Compromised videos targeted by the core.
    pub core_pool_videos: usize,
    /// Mean comments per commented video for compromised users.
    pub compromised_comments_per_video: f64,
    /// Chance that a compromised user comments on one of its own videos.
    pub compromised_self_comment_rate: f64,
    pub core_duplicate_rate: f64,
    pub compromised_duplicate_rate: f64,
    pub core_spam_rate: f64,
    pub compromised_spam_rate: f64,
    pub core_median_subscribers: f64,
    pub compromised_median_subscribers: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_core: 20,
            n_compromised: 200,
            n_videos: 660,
            core_contribution_multiplier: 2.665,
            per_video_aggression_multiplier: 1.997,
            self_comment_multiplier_compromised: 1.778,
            core_upload_multiplier: 0.633,
            core_duration_multiplier: 0.628,
            peripheral_community_count: 8,
            intra_community_co_comment_rate: 0.15,
            core_periphery_co_comment_rate: 0.005,
            inter_community_co_comment_rate: 0.004,
            core_pool_videos: 25,
            compromised_comments_per_video: 1.5,
            compromised_self_comment_rate: 0.6,
            core_duplicate_rate: 0.5,
            compromised_duplicate_rate: 0.1,
            core_spam_rate: 0.7,
            compromised_spam_rate: 0.1,
            core_median_subscribers: 300.0,
            compromised_median_subscribers: 3000.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Overwrites fields from `key=value` pairs.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidArgument(format!("bad value {value:?} for {key}"));
        let mut json = serde_json::to_value(&*self).expect("config serializes");
        let slot = json
            .get_mut(key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown synth key {key:?}")))?;
        *slot = if slot.is_u64() {
            value.parse::<u64>().map_err(|_| bad())?.into()
        } else {
            value.parse::<f64>().map_err(|_| bad())?.into()
        };
        *self = serde_json::from_value(json).map_err(|_| bad())?;
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let json = serde_json::to_value(self).expect("config serializes");
        let mut s = String::new();
        for (k, v) in json.as_object().expect("struct is an object") {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_core + self.n_compromised < 2 {
            return bad("need at least two users".into());
        }
        let multipliers = [
            ("core_contribution_multiplier", self.core_contribution_multiplier),
            ("per_video_aggression_multiplier", self.per_video_aggression_multiplier),
            (
                "self_comment_multiplier_compromised",
                self.self_comment_multiplier_compromised,
            ),
            ("core_upload_multiplier", self.core_upload_multiplier),
            ("core_duration_multiplier", self.core_duration_multiplier),
            ("core_median_subscribers", self.core_median_subscribers),
            ("compromised_median_subscribers", self.compromised_median_subscribers),
        ];
        for (k, v) in multipliers {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{k} must be positive"));
            }
        }
        let rates = [
            ("intra_community_co_comment_rate", self.intra_community_co_comment_rate),
            ("core_periphery_co_comment_rate", self.core_periphery_co_comment_rate),
            ("inter_community_co_comment_rate", self.inter_community_co_comment_rate),
            ("compromised_self_comment_rate", self.compromised_self_comment_rate),
            ("core_duplicate_rate", self.core_duplicate_rate),
            ("compromised_duplicate_rate", self.compromised_duplicate_rate),
            ("core_spam_rate", self.core_spam_rate),
            ("compromised_spam_rate", self.compromised_spam_rate),
        ];
        for (k, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{k} must lie in [0, 1]"));
            }
        }
        if self.compromised_comments_per_video < 1.0 {
            return bad("compromised_comments_per_video must be at least 1".into());
        }
        if self.n_compromised > 0 && self.peripheral_community_count == 0 {
            return bad("compromised users need at least one community".into());
        }
        if self.n_core > 0 && self.core_pool_videos == 0 {
            return bad("core users need a non-empty video pool".into());
        }
        if self.n_videos == 0 && self.n_core + self.n_compromised > 0 {
            return bad("comment rates need at least one video".into());
        }
        Ok(())
    }

    fn core_comments_per_video(&self) -> f64 {
        self.compromised_comments_per_video * self.per_video_aggression_multiplier
    }

    fn core_self_comment_rate(&self) -> f64 {
        // expected self-comment counts, not pair rates, carry the multiplier
        self.compromised_self_comment_rate * self.compromised_comments_per_video
            / (self.self_comment_multiplier_compromised * self.core_comments_per_video())
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Planted role of every user.
    pub labels: BTreeMap<String, Label>,
    /// Community of every compromised user.
    pub communities: BTreeMap<String, usize>,
    /// Video ids targeted by the core.
    pub core_pool: Vec<String>,
    /// Solved chance that a core user comments on a pool video.
    pub core_pool_rate: f64,
    pub config: SynthConfig,
}

impl SynthOutput {
    pub fn core_users(&self) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|(_, l)| l.is_core())
            .map(|(u, _)| u.as_str())
            .collect()
    }

    pub fn labels_tsv(&self) -> String {
        let mut s = String::new();
        for (u, l) in &self.labels {
            let _ = writeln!(s, "{u}\t{}", l.as_str());
        }
        s
    }

    pub fn meta(&self) -> String {
        let mut s = self.config.to_kv();
        let _ = writeln!(s, "core_pool_rate={:?}", self.core_pool_rate);
        let _ = writeln!(s, "users={}", self.dataset.users().len());
        let _ = writeln!(s, "videos={}", self.dataset.videos().len());
        let _ = writeln!(s, "comments={}", self.dataset.comments().len());
        s
    }

    /// Dataset files plus `labels.tsv` and `synth_meta`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        self.dataset.write_dir(dir)?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        write("labels.tsv", self.labels_tsv())?;
        write("synth_meta", self.meta())
    }
}

/// Reads `user_id<TAB>core|compromised` lines.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, Label>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: m.into(),
        };
        let (u, l) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected two tab-separated fields"))?;
        let l = Label::parse(l.trim()).ok_or_else(|| bad("label must be core or compromised"))?;
        if out.insert(u.to_owned(), l).is_some() {
            return Err(bad("duplicate user"));
        }
    }
    Ok(out)
}

const SPAM: &[&str] = &[
    "sub4sub",
    "subscribe to my channel",
    "check out my channel please",
    "nice video please subscribe",
    "like for like",
    "i subscribed you subscribe back",
    "new video on my channel",
    "support my channel please",
];

const WORDS: &[&str] = &[
    "great",
    "video",
    "love",
    "this",
    "song",
    "amazing",
    "music",
    "thanks",
    "watching",
    "best",
    "part",
    "funny",
    "wow",
    "really",
    "good",
    "job",
    "keep",
    "going",
    "beautiful",
    "voice",
    "awesome",
    "content",
    "learned",
    "much",
    "from",
    "tutorial",
    "helpful",
    "explained",
    "well",
    "favourite",
    "channel",
    "quality",
    "editing",
    "nice",
    "work",
    "cool",
    "story",
    "moment",
    "watch",
    "again",
    "ending",
    "perfect",
    "first",
    "time",
    "hearing",
    "miss",
    "old",
    "days",
    "cute",
    "dog",
    "recipe",
    "tried",
    "today",
    "tasty",
    "game",
    "play",
    "level",
    "boss",
    "travel",
    "place",
    "visit",
    "someday",
    "dance",
    "moves",
    "fire",
    "beat",
    "drop",
    "lyrics",
    "meaning",
    "deep",
    "camera",
    "shot",
    "light",
    "color",
    "fresh",
    "idea",
    "clever",
    "trick",
    "useful",
    "tips",
    "makeup",
    "look",
    "outfit",
    "style",
    "car",
    "engine",
    "sound",
    "fast",
    "science",
    "space",
    "planet",
    "star",
    "history",
    "facts",
    "interesting",
    "movie",
    "review",
    "agree",
    "opinion",
    "honest",
    "laugh",
    "cried",
    "emotional",
    "proud",
    "happy",
    "birthday",
];

const GENRES: &[&str] = &[
    "Music",
    "Gaming",
    "Entertainment",
    "Education",
    "Comedy",
    "People & Blogs",
    "Howto & Style",
    "Film & Animation",
    "Sports",
    "Travel & Events",
];

fn words(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.random_range(lo..=hi);
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `1 + Poisson(mean - 1)`.
fn count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 1.0 {
        return 1;
    }
    let p = Poisson::new(mean - 1.0).expect("positive rate");
    1 + p.sample(rng) as u64
}

struct Role {
    core: bool,
    community: usize,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, "synth");
    let n = cfg.n_core + cfg.n_compromised;

    // Ids in random order so that neither ids nor positions reveal roles.
    let mut names: Vec<String> = (0..n).map(|i| format!("u{i:05}")).collect();
    names.shuffle(&mut rng);
    let k = cfg.peripheral_community_count.max(1);
    let roles: Vec<Role> = (0..n)
        .map(|i| Role {
            core: i < cfg.n_core,
            community: if i < cfg.n_core {
                usize::MAX
            } else {
                (i - cfg.n_core) % k
            },
        })
        .collect();

    let subs = |median: f64| LogNormal::new(median.ln(), 1.0).expect("finite median");
    let core_subs = subs(cfg.core_median_subscribers);
    let comp_subs = subs(cfg.compromised_median_subscribers);
    let users: Vec<UserRecord> = (0..n)
        .map(|i| UserRecord {
            user_id: names[i].clone(),
            channel_subscriber_count: Some(if roles[i].core {
                core_subs.sample(&mut rng).round() as u64
            } else {
                comp_subs.sample(&mut rng).round() as u64
            }),
            channel_created_at: Some(1_300_000_000 + rng.random_range(0..300_000_000)),
        })
        .collect();

    // Uploaders drawn with core users weighted down.
    let upload_weights: Vec<f64> = roles
        .iter()
        .map(|r| if r.core { cfg.core_upload_multiplier } else { 1.0 })
        .collect();
    let pick = WeightedIndex::new(&upload_weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let comp_duration = LogNormal::new(300f64.ln(), 0.8).expect("valid");
    let core_duration = LogNormal::new((300.0 * cfg.core_duration_multiplier).ln(), 0.8).expect("valid");
    let views_of = |core: bool| LogNormal::new(if core { 200f64 } else { 2000f64 }.ln(), 1.0).expect("valid");
    let mut videos = Vec::with_capacity(cfg.n_videos);
    let mut uploader = Vec::with_capacity(cfg.n_videos);
    for v in 0..cfg.n_videos {
        let u = pick.sample(&mut rng);
        let core = roles[u].core;
        let duration = if core {
            core_duration.sample(&mut rng)
        } else {
            comp_duration.sample(&mut rng)
        };
        let views = views_of(core).sample(&mut rng).round() as u64;
        let likes = (views as f64 * rng.random_range(0.01..0.08)).round() as u64;
        let dislikes = (views as f64 * rng.random_range(0.0..0.01)).round() as u64;
        videos.push(VideoRecord {
            video_id: format!("v{v:05}"),
            uploader_user_id: names[u].clone(),
            title: words(&mut rng, 2, 5),
            description: words(&mut rng, 5, 12),
            genre: GENRES.choose(&mut rng).expect("non-empty").to_string(),
            duration_sec: duration.round().max(1.0) as u64,
            likes,
            dislikes,
            views,
            is_collusive: true,
        });
        uploader.push(u);
    }

    let comp_videos: Vec<usize> = (0..videos.len()).filter(|&v| !roles[uploader[v]].core).collect();
    if cfg.n_core > 0 && comp_videos.len() < cfg.core_pool_videos {
        return Err(Error::InvalidArgument(format!(
            "core pool of {} videos but only {} compromised videos",
            cfg.core_pool_videos,
            comp_videos.len()
        )));
    }
    let mut in_pool = vec![false; videos.len()];
    let pool: Vec<usize> = comp_videos
        .choose_multiple(&mut rng, if cfg.n_core > 0 { cfg.core_pool_videos } else { 0 })
        .copied()
        .collect();
    for &v in &pool {
        in_pool[v] = true;
    }

    // Chance that `u` comments on `v`; only pool videos depend on the
    // solved core rate.
    let chance = |u: usize, v: usize, pool_rate: f64| -> f64 {
        let (r, up) = (&roles[u], uploader[v]);
        if up == u {
            if r.core {
                cfg.core_self_comment_rate()
            } else {
                cfg.compromised_self_comment_rate
            }
        } else if r.core {
            match (roles[up].core, in_pool[v]) {
                (false, true) => pool_rate,
                (false, false) => cfg.core_periphery_co_comment_rate,
                (true, _) => 0.0,
            }
        } else if in_pool[v] {
            0.0
        } else if !roles[up].core && roles[up].community == r.community {
            cfg.intra_community_co_comment_rate
        } else {
            cfg.inter_community_co_comment_rate
        }
    };
    let expected_pairs = |u: usize, pool_rate: f64| -> f64 { (0..videos.len()).map(|v| chance(u, v, pool_rate)).sum() };

    let core_pool_rate = if cfg.n_core == 0 {
        0.0
    } else {
        let comp_pairs = (cfg.n_core..n).map(|u| expected_pairs(u, 0.0)).sum::<f64>() / cfg.n_compromised.max(1) as f64;
        let target = comp_pairs * cfg.core_contribution_multiplier * cfg.compromised_comments_per_video
            / cfg.core_comments_per_video();
        let others = (0..cfg.n_core).map(|u| expected_pairs(u, 0.0)).sum::<f64>() / cfg.n_core as f64;
        let rate = (target - others) / pool.len() as f64;
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "core contribution multiplier needs a pool participation rate of {rate:.3}; \
                 adjust core_pool_videos or core_periphery_co_comment_rate"
            )));
        }
        rate
    };

    // Comment counts per (user, video).
    let mut pairs: Vec<(usize, usize, u64)> = Vec::new();
    for u in 0..n {
        let mean = if roles[u].core {
            cfg.core_comments_per_video()
        } else {
            cfg.compromised_comments_per_video
        };
        for v in 0..videos.len() {
            let p = chance(u, v, core_pool_rate);
            if p > 0.0 && rng.random::<f64>() < p {
                pairs.push((u, v, count(&mut rng, mean)));
            }
        }
    }

    // Texts, interleaved in time.
    let mut slots: Vec<(usize, usize)> = pairs
        .iter()
        .flat_map(|&(u, v, c)| std::iter::repeat_n((u, v), c as usize))
        .collect();
    slots.shuffle(&mut rng);
    let mut history: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut comments = Vec::with_capacity(slots.len());
    let mut t = 1_600_000_000i64;
    for (i, (u, v)) in slots.into_iter().enumerate() {
        let core = roles[u].core;
        let (dup, spam) = if core {
            (cfg.core_duplicate_rate, cfg.core_spam_rate)
        } else {
            (cfg.compromised_duplicate_rate, cfg.compromised_spam_rate)
        };
        let text = if !history[u].is_empty() && rng.random::<f64>() < dup {
            history[u].choose(&mut rng).expect("non-empty").clone()
        } else if rng.random::<f64>() < spam {
            let base = *SPAM.choose(&mut rng).expect("non-empty");
            if rng.random::<bool>() {
                base.to_owned()
            } else {
                format!("{base} {}", words(&mut rng, 1, 2))
            }
        } else {
            words(&mut rng, 3, 10)
        };
        history[u].push(text.clone());
        t += rng.random_range(1..600);
        comments.push(CommentRecord {
            comment_id: format!("c{i:07}"),
            user_id: names[u].clone(),
            video_id: videos[v].video_id.clone(),
            text,
            timestamp: Some(t),
        });
    }

    let labels = (0..n)
        .map(|i| {
            (
                names[i].clone(),
                if roles[i].core { Label::Core } else { Label::Compromised },
            )
        })
        .collect();
    let communities = (cfg.n_core..n)
        .map(|i| (names[i].clone(), roles[i].community))
        .collect();
    let mut core_pool: Vec<String> = pool.iter().map(|&v| videos[v].video_id.clone()).collect();
    core_pool.sort();
    let dataset = Dataset::new(users, videos, comments)?;
    Ok(SynthOutput {
        dataset,
        labels,
        communities,
        core_pool,
        core_pool_rate,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_output_is_valid_and_deterministic() {
        let a = generate(&SynthConfig::default()).unwrap();
        assert!(a.dataset.validate().is_empty());
        assert_eq!(a.core_users().len(), 20);
        assert_eq!(a.communities.len(), 200);
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.dataset.comments(), b.dataset.comments());
        assert_eq!(a.labels_tsv(), b.labels_tsv());
        let c = generate(&SynthConfig {
            seed: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        assert_ne!(a.dataset.comments(), c.dataset.comments());
    }

    #[test]
    fn files_are_byte_identical() {
        let out = generate(&SynthConfig::default()).unwrap();
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        out.write_dir(d1.path()).unwrap();
        generate(&SynthConfig::default()).unwrap().write_dir(d2.path()).unwrap();
        for f in [
            "users.jsonl",
            "videos.jsonl",
            "comments.jsonl",
            "labels.tsv",
            "synth_meta",
        ] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            assert_eq!(a, std::fs::read(d2.path().join(f)).unwrap(), "{f}");
        }
        let labels = read_labels(&d1.path().join("labels.tsv")).unwrap();
        assert_eq!(labels, out.labels);
    }

    #[test]
    fn no_core_is_allowed() {
        let out = generate(&SynthConfig {
            n_core: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(out.core_users().is_empty());
        assert!(out.core_pool.is_empty());
    }

    #[test]
    fn infeasible_configs() {
        assert!(generate(&SynthConfig {
            n_videos: 0,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            n_core: 1,
            n_compromised: 0,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            intra_community_co_comment_rate: 1.5,
            ..SynthConfig::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            core_contribution_multiplier: 40.0,
            ..SynthConfig::default()
        })
        .is_err());
    }

    #[test]
    fn set_overrides_fields() {
        let mut c = SynthConfig::default();
        c.set("n_core", "7").unwrap();
        c.set("intra_community_co_comment_rate", "0.2").unwrap();
        assert_eq!((c.n_core, c.intra_community_co_comment_rate), (7, 0.2));
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("n_core", "x").is_err());
        assert!(c.to_kv().contains("n_core=7\n"));
    }
}
