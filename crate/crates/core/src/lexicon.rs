//! The AIN dictionary: one coined vector and one glyph per Chinese character.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{cosine, norm, random_unit_vector, top_k, EmbeddingTable};
use crate::error::{Error, Result};
use crate::glyph::{GlyphCode, GRID_CELLS};

const LEX_MAGIC: &str = "#AIN-LEX";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentId {
    A,
    B,
}

impl AgentId {
    pub fn other(self) -> AgentId {
        match self {
            AgentId::A => AgentId::B,
            AgentId::B => AgentId::A,
        }
    }

    /// Value mixed into the session seed to derive this agent's rng stream.
    pub fn seed_salt(self) -> u64 {
        match self {
            AgentId::A => 0x41,
            AgentId::B => 0x42,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentId::A => "A",
            AgentId::B => "B",
        })
    }
}

impl FromStr for AgentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(AgentId::A),
            "B" => Ok(AgentId::B),
            other => Err(Error::Range(format!("unknown agent {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AinEntry {
    pub ch: char,
    pub ain_vec: Vec<f32>,
    pub glyph: GlyphCode,
    pub epsilon: f64,
    pub coined_at: u64,
    pub coined_by: AgentId,
}

/// Coin an AIN vector for `ch`: the unit Chinese vector pushed by `epsilon`
/// along a seeded random direction, then renormalized.
///
/// The angle between the result and the Chinese vector is at most
/// `asin(epsilon)`, so their cosine is at least `sqrt(1 - epsilon^2)`, which
/// is at least `1 - epsilon^2`.
pub fn coin<R: Rng + ?Sized>(ch: char, table: &EmbeddingTable, epsilon: f64, rng: &mut R) -> Result<Vec<f32>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Range(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let zh = table.get(ch).ok_or(Error::UnknownChar(ch))?;
    let zn = norm(zh);
    let u = random_unit_vector(rng, table.dim());
    let mixed: Vec<f64> = zh
        .iter()
        .zip(&u)
        .map(|(&z, &d)| f64::from(z) / zn + epsilon * d)
        .collect();
    let mn = norm(&mixed);
    let mut ain: Vec<f32> = mixed.iter().map(|&x| (x / mn) as f32).collect();
    if ain == zh {
        // Tiny epsilon on a unit vector can vanish in f32; step one ulp along
        // the strongest perturbation component.
        let k = (0..u.len())
            .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()).then(b.cmp(&a)))
            .expect("dim >= 1");
        ain[k] = next_f32_toward(ain[k], u[k]);
    }
    Ok(ain)
}

fn next_f32_toward(x: f32, direction: f64) -> f32 {
    let bits = x.to_bits();
    let up = direction > 0.0;
    if x == 0.0 {
        return if up { f32::from_bits(1) } else { -f32::from_bits(1) };
    }
    if (x > 0.0) == up {
        f32::from_bits(bits + 1)
    } else {
        f32::from_bits(bits - 1)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AinLexicon {
    entries: Vec<AinEntry>,
    by_char: HashMap<char, usize>,
    by_glyph: HashMap<GlyphCode, char>,
}

impl PartialEq for AinLexicon {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl AinLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in coinage order.
    pub fn entries(&self) -> &[AinEntry] {
        &self.entries
    }

    pub fn contains(&self, ch: char) -> bool {
        self.by_char.contains_key(&ch)
    }

    pub fn is_occupied(&self, glyph: &GlyphCode) -> bool {
        self.by_glyph.contains_key(glyph)
    }

    pub fn insert(&mut self, entry: AinEntry) -> Result<()> {
        if self.by_char.contains_key(&entry.ch) {
            return Err(Error::DuplicateChar(entry.ch));
        }
        if self.entries.len() >= GRID_CELLS {
            return Err(Error::LexiconFull(GRID_CELLS));
        }
        if self.by_glyph.contains_key(&entry.glyph) {
            return Err(Error::DuplicateGlyph(entry.glyph));
        }
        if let Some(first) = self.entries.first() {
            if first.ain_vec.len() != entry.ain_vec.len() {
                return Err(Error::DimMismatch {
                    expected: first.ain_vec.len(),
                    got: entry.ain_vec.len(),
                });
            }
        }
        self.by_char.insert(entry.ch, self.entries.len());
        self.by_glyph.insert(entry.glyph, entry.ch);
        self.entries.push(entry);
        Ok(())
    }

    pub fn lookup(&self, ch: char) -> Option<&AinEntry> {
        self.by_char.get(&ch).map(|&i| &self.entries[i])
    }

    pub fn reverse_lookup(&self, glyph: GlyphCode) -> Option<char> {
        self.by_glyph.get(&glyph).copied()
    }

    /// The `k` entries whose AIN vectors are most similar to `query`.
    pub fn nearest_ain<Q: Copy + Into<f64>>(&self, query: &[Q], k: usize) -> Result<Vec<(char, f64)>> {
        let scored = self
            .entries
            .iter()
            .map(|e| Ok((e.ch, cosine(query, &e.ain_vec)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(top_k(scored, k))
    }

    /// SHA-256 of the serialized lexicon, hex encoded.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let dim = self.entries.first().map_or(0, |e| e.ain_vec.len());
        let mut out = format!("{LEX_MAGIC} v1 dim={dim} count={}\n", self.len());
        for e in &self.entries {
            let bytes: Vec<u8> = e.ain_vec.iter().flat_map(|x| x.to_le_bytes()).collect();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.ch,
                e.epsilon,
                B64.encode(bytes),
                e.glyph,
                e.coined_at,
                e.coined_by
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "missing header"))?;
        let bad_header = || Error::parse(path, 1, format!("malformed header {header:?}"));
        let toks: Vec<&str> = header.split_whitespace().collect();
        let field =
            |i: usize, key: &str| -> Option<usize> { toks.get(i)?.strip_prefix(key)?.strip_prefix('=')?.parse().ok() };
        if toks.len() != 4 || toks[0] != LEX_MAGIC || toks[1] != "v1" {
            return Err(bad_header());
        }
        let dim = field(2, "dim").ok_or_else(bad_header)?;
        let count = field(3, "count").ok_or_else(bad_header)?;

        let mut lex = AinLexicon::new();
        for (ln, line) in lines {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| Error::parse(path, ln, msg);
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(err(format!("expected 6 tab-separated fields, got {}", f.len())));
            }
            let mut cs = f[0].chars();
            let ch = match (cs.next(), cs.next()) {
                (Some(c), None) => c,
                _ => return Err(err(format!("{:?} is not a single character", f[0]))),
            };
            let epsilon: f64 = f[1].parse().map_err(|e| err(format!("bad epsilon: {e}")))?;
            let bytes = B64.decode(f[2]).map_err(|e| err(format!("bad base64: {e}")))?;
            if bytes.len() != 4 * dim {
                return Err(err(format!(
                    "vector has {} bytes, dim={dim} needs {}",
                    bytes.len(),
                    4 * dim
                )));
            }
            let ain_vec: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            if ain_vec.iter().any(|x| !x.is_finite()) {
                return Err(err("non-finite vector component".into()));
            }
            let glyph: GlyphCode = f[3].parse().map_err(|e: Error| err(e.to_string()))?;
            let coined_at: u64 = f[4].parse().map_err(|e| err(format!("bad iteration: {e}")))?;
            let coined_by: AgentId = f[5].parse().map_err(|e: Error| err(e.to_string()))?;
            lex.insert(AinEntry {
                ch,
                ain_vec,
                glyph,
                epsilon,
                coined_at,
                coined_by,
            })
            .map_err(|e| err(e.to_string()))?;
        }
        if lex.len() != count {
            return Err(Error::parse(
                path,
                1,
                format!("header declares count={count}, file has {}", lex.len()),
            ));
        }
        Ok(lex)
    }
}

/// Ranked `(char, cosine)` neighbours.
pub type Neighbours = Vec<(char, f64)>;

/// Nearest neighbours of a lexicon character, `(chinese, ain)`. Chinese
/// neighbours range over the whole table, AIN neighbours over the lexicon;
/// the character itself is excluded from both.
pub fn side_by_side(
    lexicon: &AinLexicon,
    table: &EmbeddingTable,
    ch: char,
    k: usize,
) -> Result<(Neighbours, Neighbours)> {
    let entry = lexicon.lookup(ch).ok_or(Error::UnknownChar(ch))?;
    let zh = table.get(ch).ok_or(Error::UnknownChar(ch))?;
    let exclude: HashSet<char> = [ch].into();
    let chinese = table.nearest(zh, k, Some(&exclude))?;
    let mut ain = lexicon.nearest_ain(&entry.ain_vec, k + 1)?;
    ain.retain(|&(c, _)| c != ch);
    ain.truncate(k);
    Ok((chinese, ain))
}

/// How much AIN-space neighborhoods agree with Chinese-space neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSummary {
    pub k: usize,
    pub entries: usize,
    /// Mean fraction of each entry's AIN neighbors that are also its Chinese
    /// neighbors; 1.0 means identical neighborhoods.
    pub mean_overlap: f64,
    pub min_overlap: f64,
    pub max_overlap: f64,
}

/// Compare each entry's `k` nearest neighbors in AIN space with its `k`
/// nearest in Chinese space, both restricted to lexicon members.
/// `None` when the lexicon has fewer than two entries.
pub fn neighborhood_divergence(
    lexicon: &AinLexicon,
    table: &EmbeddingTable,
    k: usize,
) -> Result<Option<DivergenceSummary>> {
    let n = lexicon.len();
    if n < 2 || k == 0 {
        return Ok(None);
    }
    let kk = k.min(n - 1);
    let zh: Vec<&[f32]> = lexicon
        .entries()
        .iter()
        .map(|e| table.get(e.ch).ok_or(Error::UnknownChar(e.ch)))
        .collect::<Result<_>>()?;
    let ain: Vec<&[f32]> = lexicon.entries().iter().map(|e| e.ain_vec.as_slice()).collect();
    let neighbors = |i: usize, vecs: &[&[f32]]| -> Result<HashSet<char>> {
        let scored = (0..n)
            .filter(|&j| j != i)
            .map(|j| Ok((lexicon.entries()[j].ch, cosine(vecs[i], vecs[j])?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(top_k(scored, kk).into_iter().map(|(c, _)| c).collect())
    };
    let mut overlaps = Vec::with_capacity(n);
    for i in 0..n {
        let a = neighbors(i, &ain)?;
        let z = neighbors(i, &zh)?;
        overlaps.push(a.intersection(&z).count() as f64 / kk as f64);
    }
    let mean = overlaps.iter().sum::<f64>() / n as f64;
    Ok(Some(DivergenceSummary {
        k: kk,
        entries: n,
        mean_overlap: mean,
        min_overlap: overlaps.iter().copied().fold(f64::INFINITY, f64::min),
        max_overlap: overlaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }))
}
