//! Session orchestration: turn a validated config into a running session
//! and write its artifacts to the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::ClusterTree;
use crate::config::{ComposeMode, SimulationConfig};
use crate::corpus::{Composer, Corpus, ExternalProvider, HttpService, ObservationProvider, ScriptedProvider};
use crate::embedding::{EmbeddingTable, TableFormat};
use crate::error::{Error, Result};
use crate::game::{Round, Session, SessionReport, World};
use crate::glyph::{ComponentAtlas, Projection};
use crate::lexicon::AinLexicon;
use crate::transcript::{MetricsRow, MetricsWriter, TranscriptRecord};

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LEXICON_FILE: &str = "lexicon.txt";
pub const GLYPH_INDEX_FILE: &str = "glyph_index.txt";

/// The configured table: loaded from disk, or synthesized from the seed.
pub fn load_table(cfg: &SimulationConfig) -> Result<EmbeddingTable> {
    match &cfg.table {
        Some(path) => {
            let format = cfg.table_format.unwrap_or_else(|| TableFormat::from_path(path));
            EmbeddingTable::load(path, format)
        }
        None => EmbeddingTable::generate_synthetic(cfg.synthetic_count, cfg.synthetic_dim, cfg.seed),
    }
}

pub fn load_atlas(path: Option<&Path>) -> Result<ComponentAtlas> {
    match path {
        Some(p) => ComponentAtlas::load(p),
        None => Ok(ComponentAtlas::synthetic()),
    }
}

/// Validate `cfg` and assemble a ready-to-run session.
pub fn build_session(cfg: &SimulationConfig) -> Result<Session> {
    cfg.validate()?;
    let table = load_table(cfg)?;
    let tree = ClusterTree::build(&table, cfg.linkage);
    let projection = Projection::fit(&table)?;
    let corpus_path = cfg.corpus.as_deref().expect("validated");
    let corpus = Corpus::load(corpus_path, &table)?;
    let script = ScriptedProvider::load(cfg.script_path().expect("validated"), &table)?;

    let observer = || -> Box<dyn ObservationProvider> {
        match &cfg.provider_url {
            Some(url) => Box::new(ExternalProvider::new(
                Box::new(HttpService::new(url.clone(), cfg.provider_timeout())),
                &table,
                cfg.provider_fallback.then(|| script.clone()),
            )),
            None => Box::new(script.clone()),
        }
    };
    let (observer_a, observer_b) = (observer(), observer());

    let composer = match (cfg.compose, &cfg.provider_url) {
        (ComposeMode::External, Some(url)) => Composer::external(
            Box::new(HttpService::new(url.clone(), cfg.provider_timeout())),
            &table,
            cfg.max_verse_len,
            cfg.provider_fallback,
        ),
        _ => Composer::template(cfg.max_verse_len),
    };

    let world = World {
        table,
        tree,
        projection,
        corpus,
        composer,
    };
    Ok(Session::new(world, cfg.game_params(), observer_a, observer_b))
}

/// Paths of the files a run writes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutputs {
    pub transcript: PathBuf,
    pub metrics: PathBuf,
    pub lexicon: PathBuf,
    pub glyph_index: PathBuf,
}

impl RunOutputs {
    pub fn in_dir(dir: &Path) -> Self {
        RunOutputs {
            transcript: dir.join(TRANSCRIPT_FILE),
            metrics: dir.join(METRICS_FILE),
            lexicon: dir.join(LEXICON_FILE),
            glyph_index: dir.join(GLYPH_INDEX_FILE),
        }
    }
}

/// Run a full session and write transcript, metrics, lexicon and glyph
/// index into `cfg.output_dir`. Nothing is written if setup fails.
pub fn run_to_dir(cfg: &SimulationConfig) -> Result<(SessionReport, RunOutputs)> {
    run_to_dir_with(cfg, |_, _| Ok(()))
}

/// As [`run_to_dir`], calling `on_round` after each round is recorded.
pub fn run_to_dir_with(
    cfg: &SimulationConfig,
    mut on_round: impl FnMut(&Session, &Round) -> Result<()>,
) -> Result<(SessionReport, RunOutputs)> {
    let mut session = build_session(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = RunOutputs::in_dir(dir);

    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    let mut transcript = create(&out.transcript)?;
    let mut metrics = MetricsWriter::new(create(&out.metrics)?)?;

    session.run(|s, round| {
        let line = TranscriptRecord::from_round(round).to_line()?;
        writeln!(transcript, "{line}").map_err(|e| Error::io(&out.transcript, e))?;
        let o = &round.outcome;
        metrics.write(&MetricsRow {
            iteration: o.iteration,
            lexicon_size: o.lexicon_size,
            was_known: o.was_known,
            solved_in: o.solved_in,
            window_accuracy: s.trailing_accuracy(),
        })?;
        on_round(s, round)
    })?;
    transcript.flush().map_err(|e| Error::io(&out.transcript, e))?;
    metrics.finish()?.flush().map_err(|e| Error::io(&out.metrics, e))?;

    let lexicon = &session.agent(crate::lexicon::AgentId::A).lexicon;
    lexicon.save(&out.lexicon)?;
    fs::write(&out.glyph_index, glyph_index(lexicon)).map_err(|e| Error::io(&out.glyph_index, e))?;
    Ok((session.report()?, out))
}

/// `char c0.c1.c2` per entry, in coinage order.
pub fn glyph_index(lexicon: &AinLexicon) -> String {
    lexicon
        .entries()
        .iter()
        .map(|e| format!("{} {}\n", e.ch, e.glyph))
        .collect()
}

/// A random corpus over the table's characters: `sentences` lines of
/// `len` characters each, drawn uniformly.
pub fn synthetic_corpus(table: &EmbeddingTable, sentences: usize, len: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..sentences {
        for _ in 0..len {
            out.push(table.char_at(rng.gen_range(0..table.len())));
        }
        out.push('\n');
    }
    out
}
