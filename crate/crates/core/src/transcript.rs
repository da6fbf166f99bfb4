//! Run artifacts: the JSON-lines transcript, the metrics CSV, and a replay
//! checker that re-derives the game invariants from a transcript alone.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterTree;
use crate::error::{Error, Result};
use crate::game::{consistent_candidates, NewSymbol, Round, Token, MAX_GUESSES};
use crate::glyph::GlyphCode;
use crate::lexicon::AgentId;

pub const SCHEMA_VERSION: u32 = 1;

/// One transcript line. Field order is the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptRecord {
    pub v: u32,
    pub iteration: u64,
    pub speaker: AgentId,
    pub verse: String,
    pub target: char,
    pub was_known: bool,
    pub guesses: Vec<(char, u32)>,
    pub solved_in: Option<u8>,
    pub revealed: bool,
    pub lexicon_size: usize,
    pub tokens: Vec<String>,
    pub target_position: usize,
    pub new_symbol: Option<NewSymbol>,
}

impl TranscriptRecord {
    pub fn from_round(round: &Round) -> Self {
        let o = &round.outcome;
        TranscriptRecord {
            v: SCHEMA_VERSION,
            iteration: o.iteration,
            speaker: o.speaker,
            verse: o.verse.iter().collect(),
            target: o.target,
            was_known: o.was_known,
            guesses: o.guesses.clone(),
            solved_in: o.solved_in,
            revealed: o.revealed,
            lexicon_size: o.lexicon_size,
            tokens: round.message.tokens.iter().map(Token::render).collect(),
            target_position: round.message.target_position,
            new_symbol: round.message.new_symbol,
        }
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub lexicon_size: usize,
    pub was_known: bool,
    pub solved_in: Option<u8>,
    /// Trailing first-guess accuracy over coinage rounds; empty until the
    /// first coinage.
    pub window_accuracy: Option<f64>,
}

pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    /// Writes the header immediately, so even an empty run has one.
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(["iteration", "lexicon_size", "was_known", "solved_in", "window_accuracy"])?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("metrics", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("metrics", e.into_error()))
    }
}

pub fn read_metrics<R: std::io::Read>(r: R) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// What a transcript replay found.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VerifySummary {
    pub rounds: u64,
    pub coinages: u64,
    pub solved: u64,
    pub revealed: u64,
    pub max_guesses: usize,
    /// Final reconstructed lexicon, in coinage order.
    pub lexicon: Vec<(char, GlyphCode)>,
}

/// Optional knowledge that lets `verify` check feedback values and listener
/// consistency, not just the transcript's internal structure.
pub struct TreeCheck<'a> {
    pub tree: &'a ClusterTree,
    pub levels: u32,
}

/// Replay a transcript, checking every per-round and cross-round invariant.
/// Errors name the 1-based line of the first violation.
pub fn verify<R: BufRead>(reader: R, tree: Option<&TreeCheck<'_>>) -> Result<VerifySummary> {
    let mut sum = VerifySummary::default();
    let mut known: HashMap<char, GlyphCode> = HashMap::new();
    let mut glyphs: HashSet<GlyphCode> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("transcript", e))?;
        let fail = |msg: String| Error::Verify { line: lineno, msg };
        let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| fail(format!("bad record: {e}")))?;
        check_record(&rec, idx as u64, &known, &glyphs, tree).map_err(fail)?;

        sum.rounds += 1;
        sum.max_guesses = sum.max_guesses.max(rec.guesses.len());
        if let Some(sym) = rec.new_symbol {
            known.insert(rec.target, sym.glyph);
            glyphs.insert(sym.glyph);
            sum.lexicon.push((rec.target, sym.glyph));
            sum.coinages += 1;
            if rec.revealed {
                sum.revealed += 1;
            } else {
                sum.solved += 1;
            }
        }
        if rec.lexicon_size != known.len() {
            return Err(fail(format!(
                "lexicon_size {} but {} symbols coined so far",
                rec.lexicon_size,
                known.len()
            )));
        }
    }
    Ok(sum)
}

fn check_record(
    rec: &TranscriptRecord,
    expected_iteration: u64,
    known: &HashMap<char, GlyphCode>,
    glyphs: &HashSet<GlyphCode>,
    tree: Option<&TreeCheck<'_>>,
) -> std::result::Result<(), String> {
    if rec.v != SCHEMA_VERSION {
        return Err(format!("schema version {} (expected {SCHEMA_VERSION})", rec.v));
    }
    if rec.iteration != expected_iteration {
        return Err(format!("iteration {} (expected {expected_iteration})", rec.iteration));
    }
    let speaker = if expected_iteration.is_multiple_of(2) {
        AgentId::A
    } else {
        AgentId::B
    };
    if rec.speaker != speaker {
        return Err(format!("speaker {} (expected {speaker})", rec.speaker));
    }

    let verse: Vec<char> = rec.verse.chars().collect();
    if verse.is_empty() {
        return Err("empty verse".into());
    }
    let first = verse.iter().position(|&c| c == rec.target);
    if first != Some(rec.target_position) {
        return Err(format!(
            "target_position {} is not the first occurrence of {:?}",
            rec.target_position, rec.target
        ));
    }

    // Target selection and the known/unknown split.
    let all_known = verse.iter().all(|c| known.contains_key(c));
    if rec.was_known != all_known {
        return Err(format!(
            "was_known={} but all verse characters known={all_known}",
            rec.was_known
        ));
    }
    if rec.was_known {
        if rec.target != verse[0] {
            return Err("known round must target the verse's first character".into());
        }
        if !rec.guesses.is_empty() || rec.new_symbol.is_some() || rec.solved_in.is_some() || rec.revealed {
            return Err("known round must have no guesses, symbol, or outcome".into());
        }
    } else if known.contains_key(&rec.target) {
        return Err(format!("target {:?} already has a symbol", rec.target));
    }

    // Tokens: known characters always encoded, the new symbol at the target,
    // everything else plaintext.
    if rec.tokens.len() != verse.len() {
        return Err(format!(
            "{} tokens for a {}-character verse",
            rec.tokens.len(),
            verse.len()
        ));
    }
    for (i, (tok, &c)) in rec.tokens.iter().zip(&verse).enumerate() {
        let tok = Token::parse(tok).map_err(|e| format!("token {i}: {e}"))?;
        let expected = match known.get(&c) {
            Some(&g) => Token::Ain(g),
            None if c == rec.target => match rec.new_symbol {
                Some(sym) => Token::Ain(sym.glyph),
                None => return Err("unknown target without a new symbol".into()),
            },
            None => Token::Plain(c),
        };
        if tok != expected {
            return Err(format!(
                "token {i} is {} (expected {})",
                tok.render(),
                expected.render()
            ));
        }
    }

    if rec.was_known {
        return Ok(());
    }
    let sym = rec.new_symbol.ok_or("coinage round without new_symbol")?;
    if glyphs.contains(&sym.glyph) {
        return Err(format!("glyph {} already assigned", sym.glyph));
    }
    if sym.hint == rec.target {
        return Err("hint reveals the target".into());
    }

    // Guess budget and outcome flags.
    let n = rec.guesses.len();
    if n == 0 || n > MAX_GUESSES {
        return Err(format!("{n} guesses (expected 1..={MAX_GUESSES})"));
    }
    if let Some(pos) = rec.guesses[..n - 1].iter().position(|&(_, f)| f == 0) {
        return Err(format!("guess {} solved but guessing continued", pos + 1));
    }
    let solved = rec.guesses[n - 1].1 == 0;
    if solved != rec.solved_in.is_some() {
        return Err("solved_in set iff the last feedback is 0".into());
    }
    if rec.solved_in.is_some_and(|s| s as usize != n) {
        return Err(format!("solved_in {:?} but {n} guesses", rec.solved_in));
    }
    if rec.revealed != (!solved && n == MAX_GUESSES) {
        return Err("revealed iff all five guesses missed".into());
    }
    if solved && rec.guesses[n - 1].0 != rec.target {
        return Err("feedback 0 on a guess other than the target".into());
    }

    if let Some(check) = tree {
        for (i, &(g, f)) in rec.guesses.iter().enumerate() {
            let truth = check
                .tree
                .feedback_level(g, rec.target, check.levels)
                .map_err(|e| e.to_string())?;
            if truth != f {
                return Err(format!("guess {} feedback {f} (tree says {truth})", i + 1));
            }
            let consistent =
                consistent_candidates(check.tree, &rec.guesses[..i], check.levels).map_err(|e| e.to_string())?;
            if !consistent.contains(&g) {
                return Err(format!("guess {} ({g:?}) contradicts earlier feedback", i + 1));
            }
        }
    }
    Ok(())
}
