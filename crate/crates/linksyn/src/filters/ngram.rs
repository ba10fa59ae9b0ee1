//! Exact n-gram contamination index.
//!
//! Benchmark files are tokenized line by line (lowercase, punctuation to
//! spaces, whitespace split) and every contiguous `n`-token window is
//! fingerprinted with FNV-1a 64. Raw grams are stored alongside their
//! fingerprints and every fingerprint hit is confirmed against them, so the
//! index has zero false negatives by construction and hash collisions can
//! never over-flag either.
//!
//! On-disk format (`LKN1`): magic, u32 LE header length, JSON header
//! (`format_version`, `n`, `tokenizer_version`, `sources`, counts,
//! `body_sha256`), then per fingerprint (ascending): u64 LE fingerprint,
//! u32 gram count, and each gram as u32 length + UTF-8 bytes. An index
//! whose embedded tokenizer version differs from this build's refuses to
//! load.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::filters::FilterError;

/// Identifier of the normalization below; embedded in index files.
pub const TOKENIZER_VERSION: &str = "lower-punct-ws-1";

const MAGIC: &[u8; 4] = b"LKN1";
const FORMAT_VERSION: u32 = 1;

/// Lowercases, maps every non-alphanumeric character to a space, and splits
/// on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            for lc in c.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// FNV-1a 64-bit over the gram's bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexHeader {
    format_version: u32,
    n: usize,
    tokenizer_version: String,
    sources: Vec<String>,
    fingerprint_count: usize,
    gram_count: usize,
    body_sha256: String,
}

/// Set of fingerprinted n-grams with their raw text for hit verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramIndex {
    n: usize,
    tokenizer_version: String,
    sources: Vec<String>,
    /// fingerprint → sorted, deduplicated raw grams (space-joined tokens).
    grams: BTreeMap<u64, Vec<String>>,
}

impl NgramIndex {
    /// Builds an index over in-memory texts; windows never cross lines.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], n: usize, sources: Vec<String>) -> Self {
        assert!(n >= 1, "window size must be >= 1");
        let mut grams: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for text in texts {
            for line in text.as_ref().lines() {
                let tokens = tokenize(line);
                if tokens.len() < n {
                    continue;
                }
                for window in tokens.windows(n) {
                    let gram = window.join(" ");
                    let fp = fnv1a64(gram.as_bytes());
                    let bucket = grams.entry(fp).or_default();
                    if let Err(pos) = bucket.binary_search(&gram) {
                        bucket.insert(pos, gram);
                    }
                }
            }
        }
        Self { n, tokenizer_version: TOKENIZER_VERSION.to_string(), sources, grams }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    /// Number of distinct fingerprints.
    pub fn fingerprint_count(&self) -> usize {
        self.grams.len()
    }

    /// Number of distinct raw grams.
    pub fn gram_count(&self) -> usize {
        self.grams.values().map(Vec::len).sum()
    }

    /// True iff any normalized `n`-token window of `text` is in the index.
    /// A fingerprint hit counts only when the raw gram matches too.
    pub fn contaminated(&self, text: &str) -> bool {
        self.first_hit(text).is_some()
    }

    /// The first indexed gram found in `text`, for diagnostics.
    pub fn first_hit(&self, text: &str) -> Option<String> {
        let tokens = tokenize(text);
        if tokens.len() < self.n {
            return None;
        }
        for window in tokens.windows(self.n) {
            let gram = window.join(" ");
            if let Some(raws) = self.grams.get(&fnv1a64(gram.as_bytes())) {
                if raws.binary_search(&gram).is_ok() {
                    return Some(gram);
                }
            }
        }
        None
    }

    #[cfg(test)]
    pub(crate) fn poison(&mut self, gram: &str, replacement: &str) {
        // Swap the raw gram stored under `gram`'s fingerprint, simulating a
        // hash collision so tests can watch raw verification reject it.
        let fp = fnv1a64(gram.as_bytes());
        self.grams.insert(fp, vec![replacement.to_string()]);
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        let mut body = Vec::new();
        for (fp, raws) in &self.grams {
            body.extend_from_slice(&fp.to_le_bytes());
            body.extend_from_slice(&(raws.len() as u32).to_le_bytes());
            for raw in raws {
                body.extend_from_slice(&(raw.len() as u32).to_le_bytes());
                body.extend_from_slice(raw.as_bytes());
            }
        }
        let mut hasher = Sha256::new();
        hasher.update(&body);
        let header = IndexHeader {
            format_version: FORMAT_VERSION,
            n: self.n,
            tokenizer_version: self.tokenizer_version.clone(),
            sources: self.sources.clone(),
            fingerprint_count: self.grams.len(),
            gram_count: self.gram_count(),
            body_sha256: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| FilterError::CorruptIndex(format!("header serialization: {e}")))?;
        let mut out = Vec::with_capacity(8 + header_bytes.len() + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        out.extend_from_slice(&body);
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        let bytes = fs::read(path)?;
        let mut cur = Cursor { buf: &bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(FilterError::CorruptIndex("bad magic".into()));
        }
        let header_len = cur.read_u32()? as usize;
        let header: IndexHeader = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| FilterError::CorruptIndex(format!("header parse: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(FilterError::CorruptIndex(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                header.format_version
            )));
        }
        if header.tokenizer_version != TOKENIZER_VERSION {
            return Err(FilterError::TokenizerMismatch {
                found: header.tokenizer_version,
                expected: TOKENIZER_VERSION.to_string(),
            });
        }
        let body = &bytes[cur.pos..];
        let mut hasher = Sha256::new();
        hasher.update(body);
        let digest: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        if digest != header.body_sha256 {
            return Err(FilterError::CorruptIndex("body checksum mismatch".into()));
        }
        let mut grams = BTreeMap::new();
        for _ in 0..header.fingerprint_count {
            let fp = cur.read_u64()?;
            let count = cur.read_u32()? as usize;
            let mut raws = Vec::with_capacity(count);
            for _ in 0..count {
                raws.push(cur.read_str()?);
            }
            grams.insert(fp, raws);
        }
        if cur.pos != bytes.len() {
            return Err(FilterError::CorruptIndex("trailing bytes".into()));
        }
        Ok(Self {
            n: header.n,
            tokenizer_version: header.tokenizer_version,
            sources: header.sources,
            grams,
        })
    }
}

/// Resolves benchmark arguments to concrete files: a file stands for
/// itself, a directory for its files in sorted order (one level, so an
/// unexpected subdirectory can't smuggle in unreadable entries). A path
/// that is neither is an error.
pub fn expand_benchmark_paths(
    paths: &[std::path::PathBuf],
) -> Result<Vec<std::path::PathBuf>, FilterError> {
    let mut files = Vec::with_capacity(paths.len());
    for path in paths {
        if path.is_dir() {
            let mut inner: Vec<std::path::PathBuf> = fs::read_dir(path)?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else if path.is_file() {
            files.push(path.clone());
        } else {
            return Err(FilterError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no such benchmark path: {}", path.display()),
            )));
        }
    }
    Ok(files)
}

/// Reads every benchmark file (directories expand per
/// [`expand_benchmark_paths`]) and indexes its line-level n-grams.
pub fn build_ngram_index(paths: &[std::path::PathBuf], n: usize) -> Result<NgramIndex, FilterError> {
    let files = expand_benchmark_paths(paths)?;
    let mut texts = Vec::with_capacity(files.len());
    let mut sources = Vec::with_capacity(files.len());
    for path in &files {
        texts.push(fs::read_to_string(path)?);
        sources.push(path.display().to_string());
    }
    Ok(NgramIndex::from_texts(&texts, n, sources))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8], FilterError> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FilterError::CorruptIndex("unexpected end of file".into()))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn read_u32(&mut self) -> Result<u32, FilterError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn read_u64(&mut self) -> Result<u64, FilterError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn read_str(&mut self) -> Result<String, FilterError> {
        let len = self.read_u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| FilterError::CorruptIndex("invalid utf-8 in gram".into()))
    }
}
