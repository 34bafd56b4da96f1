//! Text embeddings behind a provider interface.
//!
//! Two providers ship with the crate: [`StubEmbedder`], a deterministic
//! bag-of-hashed-tokens model that needs no ML runtime, and
//! [`FileEmbedder`], which looks vectors up in a precomputed file keyed by a
//! 64-bit content hash of the text.
//!
//! Embedding file format: a `dim=<d>` header line, then one
//! `<hex hash><TAB><d comma-separated floats>` line per text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 768;

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps a vector, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite embedding entry {bad}")));
        }
        Ok(Embedding(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Result of embedding one text. `empty_input` flags blank text, which maps
/// to the zero vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedded {
    pub embedding: Embedding,
    pub empty_input: bool,
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_text(&self, text: &str) -> Result<Embedded>;

    /// Convenience wrapper dropping the empty-input flag.
    fn embed(&self, text: &str) -> Result<Embedding> {
        self.embed_text(text).map(|e| e.embedding)
    }
}

/// `dot(a, b) / (|a| |b|)`, or 0 when either norm is zero.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(cosine_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// 64-bit content hash of a text: the first eight bytes of its SHA-256.
pub fn text_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(b)
}

pub fn text_hash_hex(text: &str) -> String {
    format!("{:016x}", text_hash(text))
}

/// Deterministic bag-of-tokens embedder.
///
/// Tokens are lowercase whitespace-separated words with surrounding
/// punctuation stripped. Each token maps to a unit vector drawn from a
/// Gaussian seeded by `hash(seed, token)`; a text embeds to the mean of its
/// token vectors. Tokens are summed in sorted order, so token order never
/// changes the result.
pub struct StubEmbedder {
    dim: usize,
    seed: u64,
    cache: Mutex<HashMap<String, std::sync::Arc<[f64]>>>,
}

impl StubEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("embedding dimension must be positive".into()));
        }
        Ok(StubEmbedder {
            dim,
            seed,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn token_vector(&self, token: &str) -> std::sync::Arc<[f64]> {
        if let Some(v) = self.cache.lock().expect("cache poisoned").get(token) {
            return v.clone();
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        let v: std::sync::Arc<[f64]> = v.into();
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(token.to_owned(), v.clone());
        v
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

impl EmbeddingProvider for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedded> {
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            log::warn!("embedding empty text as the zero vector");
            return Ok(Embedded {
                embedding: Embedding::zeros(self.dim),
                empty_input: true,
            });
        }
        tokens.sort_unstable();
        let mut acc = vec![0.0; self.dim];
        for t in &tokens {
            for (a, x) in acc.iter_mut().zip(self.token_vector(t).iter()) {
                *a += x;
            }
        }
        let n = tokens.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(Embedded {
            embedding: Embedding(acc),
            empty_input: false,
        })
    }
}

/// Lookup of precomputed vectors keyed by [`text_hash`].
pub struct FileEmbedder {
    dim: usize,
    entries: HashMap<u64, Embedding>,
}

impl FileEmbedder {
    pub fn from_entries(dim: usize, entries: HashMap<u64, Embedding>) -> Result<Self> {
        for e in entries.values() {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
        }
        Ok(FileEmbedder { dim, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::io(path, e))?
            .ok_or_else(|| bad(1, "missing dim header".into()))?;
        let dim: usize = header
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .ok_or_else(|| bad(1, format!("expected dim=<d>, got {header:?}")))?;
        let mut entries = HashMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (hash, values) = line
                .split_once('\t')
                .ok_or_else(|| bad(lineno, "expected <hash><TAB><values>".into()))?;
            let hash = u64::from_str_radix(hash, 16).map_err(|e| bad(lineno, format!("bad hash {hash:?}: {e}")))?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(lineno, e.to_string()))?;
            if values.len() != dim {
                return Err(bad(lineno, format!("expected {dim} values, found {}", values.len())));
            }
            let emb = Embedding::new(values).map_err(|e| bad(lineno, e.to_string()))?;
            entries.insert(hash, emb);
        }
        Ok(FileEmbedder { dim, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl EmbeddingProvider for FileEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedded> {
        if tokenize(text).is_empty() {
            log::warn!("embedding empty text as the zero vector");
            return Ok(Embedded {
                embedding: Embedding::zeros(self.dim),
                empty_input: true,
            });
        }
        let h = text_hash(text);
        self.entries
            .get(&h)
            .map(|e| Embedded {
                embedding: e.clone(),
                empty_input: false,
            })
            .ok_or_else(|| Error::MissingEmbedding(format!("{h:016x}")))
    }
}

/// Embeds every distinct text with `provider` and renders the embedding
/// file, sorted by hash.
pub fn export_embeddings<'a>(
    provider: &dyn EmbeddingProvider,
    texts: impl IntoIterator<Item = &'a str>,
) -> Result<String> {
    let mut rows: BTreeMap<u64, Embedding> = BTreeMap::new();
    for t in texts {
        let h = text_hash(t);
        if rows.contains_key(&h) || tokenize(t).is_empty() {
            continue;
        }
        rows.insert(h, provider.embed(t)?);
    }
    let mut out = format!("dim={}\n", provider.dim());
    for (h, e) in rows {
        let _ = write!(out, "{h:016x}\t");
        for (i, x) in e.as_slice().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:?}");
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stub() -> StubEmbedder {
        StubEmbedder::new(64, 11).unwrap()
    }

    #[test]
    fn stub_is_deterministic() {
        let s = stub();
        let a = s.embed("great video, subscribe back!").unwrap();
        let b = StubEmbedder::new(64, 11)
            .unwrap()
            .embed("great video, subscribe back!")
            .unwrap();
        assert_eq!(a, b);
        let c = s.embed("great video, subscribe back!").unwrap();
        assert!((cosine(&a, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let s = stub();
        let base = s.embed("alpha beta gamma delta epsilon zeta").unwrap();
        let half = s.embed("alpha beta gamma eta theta iota").unwrap();
        let none = s.embed("kappa lambda mu nu xi omicron").unwrap();
        assert!(cosine(&base, &half).unwrap() > cosine(&base, &none).unwrap());
    }

    #[test]
    fn empty_text_is_flagged_zero() {
        let s = stub();
        let e = s.embed_text("  ...  ").unwrap();
        assert!(e.empty_input);
        assert_eq!(e.embedding.norm(), 0.0);
    }

    #[test]
    fn cosine_identities() {
        let v = Embedding::new(vec![1.0, -2.0, 0.5]).unwrap();
        let neg = Embedding::new(vec![-1.0, 2.0, -0.5]).unwrap();
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-15);
        let e1 = Embedding::new(vec![1.0, 0.0]).unwrap();
        let e2 = Embedding::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine(&e1, &Embedding::zeros(2)).unwrap(), 0.0);
        assert!(matches!(cosine(&e1, &v), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Embedding::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let s = stub();
        let texts = ["one two three", "four five", "one two three", "six"];
        let body = export_embeddings(&s, texts.iter().copied()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.tsv");
        std::fs::write(&p, body).unwrap();
        let f = FileEmbedder::load(&p).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.dim(), 64);
        for t in texts {
            assert_eq!(f.embed(t).unwrap(), s.embed(t).unwrap());
        }
        assert!(matches!(f.embed("unseen text"), Err(Error::MissingEmbedding(_))));
    }

    #[test]
    fn file_rejects_wrong_width() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.tsv");
        std::fs::write(&p, "dim=3\n00000000000000ff\t1,2\n").unwrap();
        assert!(matches!(FileEmbedder::load(&p), Err(Error::Parse { line: 2, .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cosine_bounded(a in proptest::collection::vec(-1e6f64..1e6, 5), b in proptest::collection::vec(-1e6f64..1e6, 5)) {
                let c = cosine(&Embedding::new(a).unwrap(), &Embedding::new(b).unwrap()).unwrap();
                prop_assert!(c.abs() <= 1.0 + 1e-12);
            }

            #[test]
            fn token_order_is_irrelevant(words in proptest::collection::vec("[a-z]{1,6}", 1..8), rot in 0usize..8) {
                let s = StubEmbedder::new(16, 3).unwrap();
                let mut shuffled = words.clone();
                let r = rot % shuffled.len();
                shuffled.rotate_left(r);
                prop_assert_eq!(s.embed(&words.join(" ")).unwrap(), s.embed(&shuffled.join(" ")).unwrap());
            }
        }
    }
}
