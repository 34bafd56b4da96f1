//! Behavioural contrasts between core and compromised users.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::korse::CorePartition;

pub const LOW_SUBSCRIBERS: u64 = 1000;
pub const FEW_UPLOADS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseStudyReport {
    pub core_users: usize,
    pub compromised_users: usize,
    /// Mean comments per core user over mean per compromised user.
    pub comment_ratio: Option<f64>,
    /// Users ranked by mean collusive comments received per uploaded video.
    pub beneficiary_ranking: Vec<(String, f64)>,
    pub core_in_top30: usize,
    pub core_in_top250: usize,
    /// Mean comments per commented collusive video, core over compromised.
    pub per_video_ratio: Option<f64>,
    /// Share of core users (with a known count) below [`LOW_SUBSCRIBERS`].
    pub core_low_subscriber_share: Option<f64>,
    /// Share of core users with fewer than [`FEW_UPLOADS`] uploads.
    pub core_few_uploads_share: Option<f64>,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

fn mean_comments(d: &Dataset, users: &BTreeSet<String>) -> f64 {
    let total: usize = users.iter().map(|u| d.comments_by(u).count()).sum();
    total as f64 / users.len() as f64
}

fn per_collusive_video(d: &Dataset, users: &BTreeSet<String>) -> Option<f64> {
    let (mut comments, mut pairs) = (0usize, BTreeSet::new());
    for u in users {
        for c in d.comments_by(u) {
            if d.video(&c.video_id).is_some_and(|v| v.is_collusive) {
                comments += 1;
                pairs.insert((u.as_str(), c.video_id.as_str()));
            }
        }
    }
    ratio(comments as f64, pairs.len() as f64)
}

pub fn case_study_report(d: &Dataset, p: &CorePartition) -> Result<CaseStudyReport> {
    if p.core.is_empty() || p.periphery.is_empty() {
        return Err(Error::InvalidArgument(
            "case study needs both core and compromised users".into(),
        ));
    }
    let comment_ratio = ratio(mean_comments(d, &p.core), mean_comments(d, &p.periphery));

    let mut ranking: Vec<(String, f64)> = p
        .core
        .iter()
        .chain(&p.periphery)
        .filter_map(|u| {
            let uploads: Vec<_> = d.uploads_of(u).collect();
            if uploads.is_empty() {
                return None;
            }
            let received: usize = uploads
                .iter()
                .flat_map(|v| d.comments_on(&v.video_id))
                .filter(|c| p.contains(&c.user_id))
                .count();
            Some((u.clone(), received as f64 / uploads.len() as f64))
        })
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let core_in = |k: usize| ranking.iter().take(k).filter(|(u, _)| p.is_core(u)).count();

    let per_video_ratio = match (per_collusive_video(d, &p.core), per_collusive_video(d, &p.periphery)) {
        (Some(a), Some(b)) => ratio(a, b),
        _ => None,
    };

    let known: Vec<u64> = p
        .core
        .iter()
        .filter_map(|u| d.user(u).and_then(|r| r.channel_subscriber_count))
        .collect();
    let core_low_subscriber_share =
        (!known.is_empty()).then(|| known.iter().filter(|&&s| s < LOW_SUBSCRIBERS).count() as f64 / known.len() as f64);
    let few = p.core.iter().filter(|u| d.uploads_of(u).count() < FEW_UPLOADS).count();

    Ok(CaseStudyReport {
        core_users: p.core.len(),
        compromised_users: p.periphery.len(),
        comment_ratio,
        core_in_top30: core_in(30),
        core_in_top250: core_in(250),
        beneficiary_ranking: ranking,
        per_video_ratio,
        core_low_subscriber_share,
        core_few_uploads_share: Some(few as f64 / p.core.len() as f64),
    })
}

impl CaseStudyReport {
    /// `key=value` lines; missing statistics print as `unavailable`.
    pub fn to_kv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or("unavailable".to_owned(), |v| format!("{v:?}"));
        let mut s = String::new();
        let _ = writeln!(s, "core_users={}", self.core_users);
        let _ = writeln!(s, "compromised_users={}", self.compromised_users);
        let _ = writeln!(s, "comment_ratio={}", opt(self.comment_ratio));
        let _ = writeln!(s, "ranked_uploaders={}", self.beneficiary_ranking.len());
        let _ = writeln!(s, "core_in_top30={}", self.core_in_top30);
        let _ = writeln!(s, "core_in_top250={}", self.core_in_top250);
        let _ = writeln!(s, "per_video_ratio={}", opt(self.per_video_ratio));
        let _ = writeln!(s, "core_low_subscriber_share={}", opt(self.core_low_subscriber_share));
        let _ = writeln!(s, "core_few_uploads_share={}", opt(self.core_few_uploads_share));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::fixtures::*;
    use crate::data::UserRecord;

    #[test]
    fn symmetric_data_gives_unit_ratios() {
        let d = from_counts(
            &["c", "p"],
            &[("vc", "c"), ("vp", "p")],
            &[("c", "vp", 3), ("p", "vc", 3)],
        );
        let part = CorePartition::from_labels(vec!["c"], vec!["c", "p"]);
        let r = case_study_report(&d, &part).unwrap();
        assert_eq!(r.comment_ratio, Some(1.0));
        assert_eq!(r.per_video_ratio, Some(1.0));
        assert_eq!(r.beneficiary_ranking[0].1, r.beneficiary_ranking[1].1);
        // fixtures carry no subscriber counts
        assert_eq!(r.core_low_subscriber_share, None);
        assert_eq!(r.core_few_uploads_share, Some(1.0));
        assert!(r.to_kv().contains("core_low_subscriber_share=unavailable"));
    }

    #[test]
    fn hand_counts() {
        let d = from_counts(
            &["c", "p1", "p2"],
            &[("v1", "p1"), ("v2", "p2"), ("v3", "c")],
            &[
                ("c", "v1", 4),
                ("c", "v2", 2),
                ("p1", "v2", 1),
                ("p2", "v1", 1),
                ("p1", "v3", 1),
            ],
        );
        let part = CorePartition::from_labels(vec!["c"], vec!["c", "p1", "p2"]);
        let r = case_study_report(&d, &part).unwrap();
        // core: 6 comments; compromised: 3 over 2 users
        assert_eq!(r.comment_ratio, Some(4.0));
        // core 6/2 per video, compromised 3/3
        assert_eq!(r.per_video_ratio, Some(3.0));
        // received per upload: p1 5, p2 3, c 1
        let names: Vec<_> = r.beneficiary_ranking.iter().map(|x| x.0.as_str()).collect();
        assert_eq!(names, vec!["p1", "p2", "c"]);
        assert_eq!(r.core_in_top30, 1);
    }

    #[test]
    fn subscriber_share() {
        let base = from_counts(&["a", "b", "p"], &[("v", "p")], &[("a", "v", 1), ("b", "v", 1)]);
        let users = vec![
            UserRecord {
                channel_subscriber_count: Some(10),
                ..user("a")
            },
            UserRecord {
                channel_subscriber_count: Some(5000),
                ..user("b")
            },
            user("p"),
        ];
        let d = Dataset::new(users, base.videos().to_vec(), base.comments().to_vec()).unwrap();
        let part = CorePartition::from_labels(vec!["a", "b"], vec!["a", "b", "p"]);
        let r = case_study_report(&d, &part).unwrap();
        assert_eq!(r.core_low_subscriber_share, Some(0.5));
    }

    #[test]
    fn empty_class_is_error() {
        let d = from_counts(&["a"], &[], &[]);
        let part = CorePartition::from_labels(vec!["a"], vec!["a"]);
        assert!(case_study_report(&d, &part).is_err());
    }
}
