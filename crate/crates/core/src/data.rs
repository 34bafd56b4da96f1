//! Ingested domain records and the immutable [`Dataset`] container.
//!
//! Records are stored one per line: JSON objects in `.jsonl` files, or rows
//! of a headed CSV when the file extension is `.csv`. Field names are the
//! struct field names below; unknown fields are ignored.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub user_id: String,
    pub video_id: String,
    pub text: String,
    #[serde(default)]
    pub timestamp: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub uploader_user_id: String,
    pub title: String,
    pub description: String,
    pub genre: String,
    pub duration_sec: u64,
    pub likes: u64,
    pub dislikes: u64,
    pub views: u64,
    pub is_collusive: bool,
}

impl VideoRecord {
    /// Title, description and genre joined by single spaces.
    pub fn combined_text(&self) -> String {
        format!("{} {} {}", self.title, self.description, self.genre)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    #[serde(default)]
    pub channel_subscriber_count: Option<u64>,
    #[serde(default)]
    pub channel_created_at: Option<i64>,
}

trait Keyed {
    const KIND: &'static str;
    fn key(&self) -> &str;
    fn check(&self) -> std::result::Result<(), String> {
        Ok(())
    }
}

impl Keyed for CommentRecord {
    const KIND: &'static str = "comment";
    fn key(&self) -> &str {
        &self.comment_id
    }
    fn check(&self) -> std::result::Result<(), String> {
        if self.comment_id.is_empty() {
            return Err("empty comment_id".into());
        }
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        if self.video_id.is_empty() {
            return Err("empty video_id".into());
        }
        Ok(())
    }
}

impl Keyed for VideoRecord {
    const KIND: &'static str = "video";
    fn key(&self) -> &str {
        &self.video_id
    }
    fn check(&self) -> std::result::Result<(), String> {
        if self.video_id.is_empty() {
            return Err("empty video_id".into());
        }
        Ok(())
    }
}

impl Keyed for UserRecord {
    const KIND: &'static str = "user";
    fn key(&self) -> &str {
        &self.user_id
    }
    fn check(&self) -> std::result::Result<(), String> {
        if self.user_id.is_empty() {
            return Err("empty user_id".into());
        }
        Ok(())
    }
}

/// A referential-integrity problem found by [`Dataset::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub record_kind: &'static str,
    pub record_id: String,
    pub missing_kind: &'static str,
    pub missing_key: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:?} references unknown {} {:?}",
            self.record_kind, self.record_id, self.missing_kind, self.missing_key
        )
    }
}

/// Immutable collection of users, videos and comments with lookup indexes.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    users: Vec<UserRecord>,
    videos: Vec<VideoRecord>,
    comments: Vec<CommentRecord>,
    user_index: HashMap<String, usize>,
    video_index: HashMap<String, usize>,
    counts: HashMap<(String, String), u64>,
    comments_by_user: HashMap<String, Vec<usize>>,
    comments_by_video: HashMap<String, Vec<usize>>,
    uploads: HashMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids within each record kind.
    pub fn new(users: Vec<UserRecord>, videos: Vec<VideoRecord>, comments: Vec<CommentRecord>) -> Result<Self> {
        let user_index = unique_index(&users)?;
        let video_index = unique_index(&videos)?;
        unique_index(&comments)?;

        let mut counts: HashMap<(String, String), u64> = HashMap::new();
        let mut comments_by_user: HashMap<String, Vec<usize>> = HashMap::new();
        let mut comments_by_video: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, c) in comments.iter().enumerate() {
            *counts.entry((c.user_id.clone(), c.video_id.clone())).or_default() += 1;
            comments_by_user.entry(c.user_id.clone()).or_default().push(i);
            comments_by_video.entry(c.video_id.clone()).or_default().push(i);
        }
        let mut uploads: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, v) in videos.iter().enumerate() {
            uploads.entry(v.uploader_user_id.clone()).or_default().push(i);
        }

        Ok(Dataset {
            users,
            videos,
            comments,
            user_index,
            video_index,
            counts,
            comments_by_user,
            comments_by_video,
            uploads,
        })
    }

    /// Reads the three record files. `.csv` paths are parsed as CSV, anything
    /// else as line-delimited JSON.
    pub fn ingest(
        comments_path: impl AsRef<Path>,
        videos_path: impl AsRef<Path>,
        users_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let comments = read_records(comments_path.as_ref())?;
        let videos = read_records(videos_path.as_ref())?;
        let users = read_records(users_path.as_ref())?;
        Dataset::new(users, videos, comments)
    }

    /// Ingests `comments`, `videos` and `users` from a directory, preferring
    /// `.jsonl` files and falling back to `.csv`.
    pub fn ingest_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let pick = |stem: &str| -> Result<PathBuf> {
            for ext in ["jsonl", "csv"] {
                let p = dir.join(format!("{stem}.{ext}"));
                if p.is_file() {
                    return Ok(p);
                }
            }
            Err(Error::io(
                dir.join(format!("{stem}.jsonl")),
                std::io::Error::new(std::io::ErrorKind::NotFound, "record file not found"),
            ))
        };
        Dataset::ingest(pick("comments")?, pick("videos")?, pick("users")?)
    }

    /// Writes `comments.jsonl`, `videos.jsonl` and `users.jsonl` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_jsonl(&dir.join("comments.jsonl"), &self.comments)?;
        write_jsonl(&dir.join("videos.jsonl"), &self.videos)?;
        write_jsonl(&dir.join("users.jsonl"), &self.users)?;
        Ok(())
    }

    pub fn users(&self) -> &[UserRecord] {
        &self.users
    }

    pub fn videos(&self) -> &[VideoRecord] {
        &self.videos
    }

    pub fn comments(&self) -> &[CommentRecord] {
        &self.comments
    }

    pub fn user(&self, user_id: &str) -> Option<&UserRecord> {
        self.user_index.get(user_id).map(|&i| &self.users[i])
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.video_index.get(video_id).map(|&i| &self.videos[i])
    }

    /// Number of comments `user_id` posted on `video_id`; 0 for unknown ids.
    pub fn comment_count(&self, user_id: &str, video_id: &str) -> u64 {
        // Avoid allocating the key for the common miss case.
        if !self.comments_by_user.contains_key(user_id) {
            return 0;
        }
        self.counts
            .get(&(user_id.to_owned(), video_id.to_owned()))
            .copied()
            .unwrap_or(0)
    }

    /// Comments by `user_id`, in file order.
    pub fn comments_by(&self, user_id: &str) -> impl Iterator<Item = &CommentRecord> {
        self.comments_by_user
            .get(user_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.comments[i])
    }

    /// Comments on `video_id`, in file order.
    pub fn comments_on(&self, video_id: &str) -> impl Iterator<Item = &CommentRecord> {
        self.comments_by_video
            .get(video_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.comments[i])
    }

    /// Videos uploaded by `user_id`, in file order.
    pub fn uploads_of(&self, user_id: &str) -> impl Iterator<Item = &VideoRecord> {
        self.uploads
            .get(user_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.videos[i])
    }

    /// Per-(user, video) comment counts for one video, sorted by user id.
    pub fn commenter_counts(&self, video_id: &str) -> Vec<(&str, u64)> {
        let mut per_user: HashMap<&str, u64> = HashMap::new();
        for c in self.comments_on(video_id) {
            *per_user.entry(c.user_id.as_str()).or_default() += 1;
        }
        let mut out: Vec<_> = per_user.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Lists every foreign key that does not resolve.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for c in &self.comments {
            if !self.video_index.contains_key(&c.video_id) {
                out.push(Violation {
                    record_kind: "comment",
                    record_id: c.comment_id.clone(),
                    missing_kind: "video",
                    missing_key: c.video_id.clone(),
                });
            }
            if !self.user_index.contains_key(&c.user_id) {
                out.push(Violation {
                    record_kind: "comment",
                    record_id: c.comment_id.clone(),
                    missing_kind: "user",
                    missing_key: c.user_id.clone(),
                });
            }
        }
        for v in &self.videos {
            if !self.user_index.contains_key(&v.uploader_user_id) {
                out.push(Violation {
                    record_kind: "video",
                    record_id: v.video_id.clone(),
                    missing_kind: "user",
                    missing_key: v.uploader_user_id.clone(),
                });
            }
        }
        out
    }
}

fn unique_index<T: Keyed>(records: &[T]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.key().to_owned(), i).is_some() {
            return Err(Error::DuplicateId {
                kind: T::KIND,
                id: r.key().to_owned(),
            });
        }
    }
    Ok(index)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_records<T: DeserializeOwned + Keyed>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<(usize, T)> = if is_csv(path) {
        read_csv(path, file)?
    } else {
        read_jsonl(path, file)?
    };
    let mut seen = HashSet::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for (line, r) in records {
        r.check().map_err(|message| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        })?;
        if !seen.insert(r.key().to_owned()) {
            return Err(Error::DuplicateId {
                kind: T::KIND,
                id: r.key().to_owned(),
            });
        }
        out.push(r);
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path, file: File) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn read_csv<T: DeserializeOwned>(path: &Path, file: File) -> Result<Vec<(usize, T)>> {
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: T = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            }
        })?;
        out.push((out.len() + 2, rec));
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn empty_files_give_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "comments.jsonl", "");
        let v = write(dir.path(), "videos.jsonl", "");
        let u = write(dir.path(), "users.jsonl", "");
        let d = Dataset::ingest(c, v, u).unwrap();
        assert_eq!((d.users().len(), d.videos().len(), d.comments().len()), (0, 0, 0));
    }

    #[test]
    fn minimal_consistent_input() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "comments.jsonl",
            r#"{"comment_id":"c1","user_id":"u1","video_id":"v1","text":"hi","timestamp":5,"extra":1}"#,
        );
        let v = write(
            dir.path(),
            "videos.jsonl",
            r#"{"video_id":"v1","uploader_user_id":"u1","title":"t","description":"d","genre":"g","duration_sec":3,"likes":1,"dislikes":0,"views":9,"is_collusive":true}"#,
        );
        let u = write(dir.path(), "users.jsonl", r#"{"user_id":"u1"}"#);
        let d = Dataset::ingest(c, v, u).unwrap();
        assert_eq!((d.users().len(), d.videos().len(), d.comments().len()), (1, 1, 1));
        assert!(d.validate().is_empty());
        assert_eq!(d.comments()[0].timestamp, Some(5));
        assert_eq!(d.users()[0].channel_subscriber_count, None);
    }

    #[test]
    fn duplicate_comment_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"comment_id":"c1","user_id":"u1","video_id":"v1","text":"hi"}"#;
        let c = write(dir.path(), "comments.jsonl", &format!("{line}\n{line}\n"));
        let v = write(dir.path(), "videos.jsonl", "");
        let u = write(dir.path(), "users.jsonl", "");
        let err = Dataset::ingest(c, v, u).unwrap_err();
        assert!(matches!(&err, Error::DuplicateId { id, .. } if id == "c1"));
        assert!(err.to_string().contains("c1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "comments.jsonl",
            "{\"comment_id\":\"c1\",\"user_id\":\"u\",\"video_id\":\"v\",\"text\":\"\"}\n{oops\n",
        );
        let v = write(dir.path(), "videos.jsonl", "");
        let u = write(dir.path(), "users.jsonl", "");
        match Dataset::ingest(c, v, u).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_required_field() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "comments.jsonl",
            r#"{"comment_id":"c1","video_id":"v","text":""}"#,
        );
        let v = write(dir.path(), "videos.jsonl", "");
        let u = write(dir.path(), "users.jsonl", "");
        let err = Dataset::ingest(c, v, u).unwrap_err();
        assert!(err.to_string().contains("user_id"), "{err}");
    }

    #[test]
    fn empty_user_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "comments.jsonl",
            r#"{"comment_id":"c1","user_id":"","video_id":"v","text":""}"#,
        );
        let v = write(dir.path(), "videos.jsonl", "");
        let u = write(dir.path(), "users.jsonl", "");
        assert!(matches!(Dataset::ingest(c, v, u), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_alternative() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "comments.csv",
            "comment_id,user_id,video_id,text,timestamp\nc1,u1,v1,\"hello, world\",\nc2,u1,v1,again,17\n",
        );
        let v = write(
            dir.path(),
            "videos.csv",
            "video_id,uploader_user_id,title,description,genre,duration_sec,likes,dislikes,views,is_collusive\nv1,u2,t,d,g,10,1,2,3,true\n",
        );
        let u = write(
            dir.path(),
            "users.csv",
            "user_id,channel_subscriber_count,channel_created_at\nu1,,\nu2,500,100\n",
        );
        let d = Dataset::ingest(c, v, u).unwrap();
        assert_eq!(d.comments()[0].text, "hello, world");
        assert_eq!(d.comments()[0].timestamp, None);
        assert_eq!(d.comments()[1].timestamp, Some(17));
        assert_eq!(d.user("u2").unwrap().channel_subscriber_count, Some(500));
        assert_eq!(d.comment_count("u1", "v1"), 2);
        assert!(d.validate().is_empty());
    }

    #[test]
    fn validate_reports_unknown_keys() {
        let d = Dataset::new(
            vec![user("u1")],
            vec![video("v1", "u1"), video("v2", "uX")],
            vec![comment("c1", "u1", "vX")],
        )
        .unwrap();
        let v = d.validate();
        assert_eq!(v.len(), 2);
        assert!(v.iter().any(|x| x.missing_key == "vX" && x.record_id == "c1"));
        assert!(v.iter().any(|x| x.missing_key == "uX" && x.record_id == "v2"));
    }

    #[test]
    fn comment_counts() {
        let d = from_counts(
            &["u1", "u2"],
            &[("v1", "u2"), ("v2", "u2")],
            &[("u1", "v1", 3), ("u2", "v2", 1)],
        );
        assert_eq!(d.comment_count("u1", "v1"), 3);
        assert_eq!(d.comment_count("nobody", "v1"), 0);
        assert_eq!(d.comment_count("u2", "v1"), 0);
        assert_eq!(d.comment_count("u1", "v2"), 0);
    }

    #[test]
    fn write_then_ingest_round_trips() {
        let d = Dataset::new(
            vec![
                UserRecord {
                    user_id: "u1".into(),
                    channel_subscriber_count: Some(10),
                    channel_created_at: Some(-3),
                },
                user("u2"),
            ],
            vec![video("v1", "u1")],
            vec![CommentRecord {
                comment_id: "c1".into(),
                user_id: "u2".into(),
                video_id: "v1".into(),
                text: "ünïcode \"quoted\"\ttab".into(),
                timestamp: Some(1_600_000_000),
            }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write_dir(dir.path()).unwrap();
        let back = Dataset::ingest_dir(dir.path()).unwrap();
        assert_eq!(back.users(), d.users());
        assert_eq!(back.videos(), d.videos());
        assert_eq!(back.comments(), d.comments());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn counts_sum_to_total(pairs in proptest::collection::vec((0u8..4, 0u8..3), 0..40)) {
                let users: Vec<String> = (0..4).map(|i| format!("u{i}")).collect();
                let videos: Vec<String> = (0..3).map(|i| format!("v{i}")).collect();
                let comments: Vec<CommentRecord> = pairs
                    .iter()
                    .enumerate()
                    .map(|(i, (u, v))| comment(&format!("c{i}"), &users[*u as usize], &videos[*v as usize]))
                    .collect();
                let d = Dataset::new(
                    users.iter().map(|u| user(u)).collect(),
                    videos.iter().map(|v| video(v, "u0")).collect(),
                    comments,
                ).unwrap();
                let total: u64 = users
                    .iter()
                    .flat_map(|u| videos.iter().map(move |v| (u, v)))
                    .map(|(u, v)| d.comment_count(u, v))
                    .sum();
                prop_assert_eq!(total as usize, pairs.len());
            }

            #[test]
            fn jsonl_round_trip(
                texts in proptest::collection::vec(any::<String>(), 0..8),
                ts in proptest::collection::vec(proptest::option::of(any::<i64>()), 8),
            ) {
                let comments: Vec<CommentRecord> = texts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| CommentRecord {
                        comment_id: format!("c{i}"),
                        user_id: "u".into(),
                        video_id: "v".into(),
                        text: t.clone(),
                        timestamp: ts[i],
                    })
                    .collect();
                let dir = tempfile::tempdir().unwrap();
                let p = dir.path().join("comments.jsonl");
                write_jsonl(&p, &comments).unwrap();
                let back: Vec<CommentRecord> = read_records(&p).unwrap();
                prop_assert_eq!(back, comments);
            }
        }
    }
}
