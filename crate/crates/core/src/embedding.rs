//! Character embedding table: the agents' shared knowledge of Chinese.
//!
//! A table maps single characters to fixed-width `f32` vectors. Entry order is
//! the file order and is the canonical iteration order everywhere downstream.
//! Tables are immutable once built; L2 norms are computed at construction.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First codepoint of the CJK Unified Ideographs block.
pub const CJK_START: u32 = 0x4E00;
/// Number of codepoints in the CJK Unified Ideographs block (U+4E00..=U+9FFF).
pub const CJK_BLOCK_LEN: usize = 20992;

const TSV_MAGIC: &str = "#AIN-EMB";
const BIN_MAGIC: &[u8; 4] = b"AINE";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Tsv,
    Binary,
}

impl TableFormat {
    /// Guess the format from a file extension; anything but `.tsv`/`.txt` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("txt") => TableFormat::Tsv,
            _ => TableFormat::Binary,
        }
    }
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(TableFormat::Tsv),
            "binary" | "bin" => Ok(TableFormat::Binary),
            other => Err(Error::Config(format!("unknown table format {other:?}"))),
        }
    }
}

impl fmt::Display for TableFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableFormat::Tsv => "tsv",
            TableFormat::Binary => "binary",
        })
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    chars: Vec<char>,
    data: Vec<f32>,
    index: HashMap<char, usize>,
    norms: Vec<f64>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.chars == other.chars
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingTable {
    /// Build a table from `(char, vector)` pairs, enforcing every table invariant.
    pub fn new(dim: usize, entries: Vec<(char, Vec<f32>)>) -> Result<Self> {
        let mut builder = TableBuilder::new(dim, entries.len());
        for (i, (c, v)) in entries.into_iter().enumerate() {
            builder
                .push(c, &v)
                .map_err(|msg| Error::InvalidTable(format!("entry {i}: {msg}")))?;
        }
        builder.finish().map_err(Error::InvalidTable)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn char_at(&self, i: usize) -> char {
        self.chars[i]
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn get(&self, c: char) -> Option<&[f32]> {
        self.index_of(c).map(|i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (char, &[f32])> + '_ {
        self.chars.iter().copied().zip(self.data.chunks_exact(self.dim))
    }

    /// Cosine similarity between two table entries, using the cached norms.
    pub fn cosine_at(&self, i: usize, j: usize) -> f64 {
        let dot = dot(self.vector(i), self.vector(j));
        (dot / (self.norms[i] * self.norms[j])).clamp(-1.0, 1.0)
    }

    /// Deterministic synthetic table: `n` characters from U+4E00 upward with
    /// seeded, L2-normalized vectors.
    pub fn generate_synthetic(n: usize, dim: usize, seed: u64) -> Result<Self> {
        if n > CJK_BLOCK_LEN {
            return Err(Error::Range(format!(
                "synthetic table size {n} exceeds the CJK block ({CJK_BLOCK_LEN})"
            )));
        }
        if n < 2 || dim < 2 {
            return Err(Error::Range(format!(
                "synthetic table needs n >= 2 and dim >= 2, got n={n}, dim={dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let c = char::from_u32(CJK_START + i as u32).expect("CJK block is contiguous");
            let v = random_unit_vector(&mut rng, dim);
            entries.push((c, v.iter().map(|&x| x as f32).collect()));
        }
        Self::new(dim, entries)
    }

    pub fn load(path: impl AsRef<Path>, format: TableFormat) -> Result<Self> {
        let path = path.as_ref();
        match format {
            TableFormat::Tsv => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_tsv(path, &text)
            }
            TableFormat::Binary => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                parse_binary(path, &bytes)
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>, format: TableFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = match format {
            TableFormat::Tsv => self.to_tsv().into_bytes(),
            TableFormat::Binary => self.to_binary(),
        };
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{TSV_MAGIC} v{FORMAT_VERSION} dim={} count={}\n", self.dim, self.len());
        for (c, v) in self.iter() {
            out.push(c);
            out.push('\t');
            for (k, x) in v.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                // Shortest round-trip representation, so TSV is lossless too.
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.len() * (4 + 4 * self.dim));
        out.extend_from_slice(BIN_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (c, v) in self.iter() {
            out.extend_from_slice(&(c as u32).to_le_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    /// The `k` entries most similar to `query`, best first; equal scores are
    /// ordered by ascending codepoint.
    pub fn nearest<Q>(&self, query: &[Q], k: usize, exclude: Option<&HashSet<char>>) -> Result<Vec<(char, f64)>>
    where
        Q: Copy + Into<f64>,
    {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(Error::ZeroVector);
        }
        let scored = self
            .iter()
            .enumerate()
            .filter(|(_, (c, _))| exclude.is_none_or(|ex| !ex.contains(c)))
            .map(|(i, (c, v))| (c, (dot(query, v) / (qn * self.norms[i])).clamp(-1.0, 1.0)))
            .collect();
        Ok(top_k(scored, k))
    }

    /// Component-wise mean of the vectors for `chars`.
    pub fn centroid(&self, chars: &[char]) -> Result<Vec<f64>> {
        if chars.is_empty() {
            return Err(Error::Range("centroid of an empty character list".into()));
        }
        let mut acc = vec![0.0f64; self.dim];
        for &c in chars {
            let v = self.get(c).ok_or(Error::UnknownChar(c))?;
            for (a, &x) in acc.iter_mut().zip(v) {
                *a += f64::from(x);
            }
        }
        let n = chars.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Sort `(char, score)` pairs by descending score, then ascending codepoint,
/// and keep the first `k`.
pub fn top_k(mut scored: Vec<(char, f64)>, k: usize) -> Vec<(char, f64)> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn dot<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

pub fn norm<A: Copy + Into<f64>>(a: &[A]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Uniform draw from the cube [-1, 1)^dim, rejected if near zero, then normalized.
/// Uses only IEEE arithmetic so the output is identical on every platform.
pub(crate) fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let n = norm(&v);
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct TableBuilder {
    dim: usize,
    chars: Vec<char>,
    data: Vec<f32>,
    index: HashMap<char, usize>,
    norms: Vec<f64>,
}

impl TableBuilder {
    fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            chars: Vec::with_capacity(capacity),
            data: Vec::with_capacity(capacity * dim),
            index: HashMap::with_capacity(capacity),
            norms: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, c: char, v: &[f32]) -> std::result::Result<(), String> {
        if v.len() != self.dim {
            return Err(format!(
                "dimension mismatch for {c:?}: expected {}, got {}",
                self.dim,
                v.len()
            ));
        }
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(format!("non-finite component {k} for {c:?}"));
        }
        let n = norm(v);
        if n == 0.0 {
            return Err(format!("zero vector for {c:?}"));
        }
        if self.index.insert(c, self.chars.len()).is_some() {
            return Err(format!("duplicate character {c:?}"));
        }
        self.chars.push(c);
        self.data.extend_from_slice(v);
        self.norms.push(n);
        Ok(())
    }

    fn finish(self) -> std::result::Result<EmbeddingTable, String> {
        if self.dim == 0 {
            return Err("dimension must be positive".into());
        }
        if self.chars.len() < 2 {
            return Err(format!("table needs at least 2 entries, has {}", self.chars.len()));
        }
        Ok(EmbeddingTable {
            dim: self.dim,
            chars: self.chars,
            data: self.data,
            index: self.index,
            norms: self.norms,
        })
    }
}

fn parse_header_field(tok: Option<&str>, key: &str) -> Option<usize> {
    tok?.strip_prefix(key)?.strip_prefix('=')?.parse().ok()
}

fn parse_tsv(path: &Path, text: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let mut toks = header.split_whitespace();
    let bad_header = || {
        Error::parse(
            path,
            1,
            format!("malformed header {header:?}, expected `{TSV_MAGIC} v1 dim=<d> count=<n>`"),
        )
    };
    if toks.next() != Some(TSV_MAGIC) || toks.next() != Some("v1") {
        return Err(bad_header());
    }
    let dim = parse_header_field(toks.next(), "dim").ok_or_else(bad_header)?;
    let count = parse_header_field(toks.next(), "count").ok_or_else(bad_header)?;
    if dim == 0 || toks.next().is_some() {
        return Err(bad_header());
    }

    let mut builder = TableBuilder::new(dim, count);
    let mut last_line = 1;
    for (ln, line) in lines {
        last_line = ln;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let (key, values) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, ln, "expected `<char>\\t<values>`"))?;
        let mut cs = key.chars();
        let c = match (cs.next(), cs.next()) {
            (Some(c), None) => c,
            _ => return Err(Error::parse(path, ln, format!("key {key:?} is not a single character"))),
        };
        let v = values
            .split(',')
            .map(|s| s.trim().parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, ln, format!("bad number: {e}")))?;
        builder.push(c, &v).map_err(|m| Error::parse(path, ln, m))?;
    }
    if builder.chars.len() != count {
        return Err(Error::parse(
            path,
            last_line,
            format!(
                "header declares count={count} but file has {} rows",
                builder.chars.len()
            ),
        ));
    }
    builder.finish().map_err(|m| Error::parse(path, last_line, m))
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<EmbeddingTable> {
    let err = |offset: usize, msg: String| Error::Binary {
        path: path.to_path_buf(),
        offset: offset as u64,
        msg,
    };
    let u32_at = |off: usize| -> Result<u32> {
        bytes
            .get(off..off + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| err(off, "unexpected end of file".into()))
    };
    if bytes.get(..4) != Some(BIN_MAGIC.as_slice()) {
        return Err(err(0, "bad magic, expected AINE".into()));
    }
    let version = u32_at(4)?;
    if version != FORMAT_VERSION {
        return Err(err(4, format!("unsupported version {version}")));
    }
    let dim = u32_at(8)? as usize;
    let count = u32_at(12)? as usize;
    if dim == 0 {
        return Err(err(8, "dimension must be positive".into()));
    }
    let record = 4 + 4 * dim;
    let expected = 16 + count * record;
    if bytes.len() != expected {
        return Err(err(
            bytes.len().min(expected),
            format!("file is {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let mut builder = TableBuilder::new(dim, count);
    let mut v = vec![0f32; dim];
    for r in 0..count {
        let off = 16 + r * record;
        let cp = u32_at(off)?;
        let c = char::from_u32(cp).ok_or_else(|| err(off, format!("invalid codepoint {cp:#x}")))?;
        for (k, x) in v.iter_mut().enumerate() {
            *x = f32::from_bits(u32_at(off + 4 + 4 * k)?);
        }
        builder.push(c, &v).map_err(|m| err(off, m))?;
    }
    builder.finish().map_err(|m| err(16, m))
}
