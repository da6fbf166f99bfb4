//! `ain`: run two-agent symbol-invention sessions and inspect what they made.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ain_core::cluster::ClusterTree;
use ain_core::config::SimulationConfig;
use ain_core::embedding::{EmbeddingTable, TableFormat};
use ain_core::glyph::{contact_sheet, glyph_bytes, GlyphFormat};
use ain_core::lexicon::{side_by_side, AinLexicon};
use ain_core::sim::{self, GLYPH_INDEX_FILE};
use ain_core::transcript::{verify, TreeCheck};

const PROVIDER_ENV: &str = "AIN_PROVIDER_URL";
const SHEET_FILE: &str = "glyphs.pgm";

#[derive(Parser, Debug)]
#[command(name = "ain", version, about = "Two agents inventing a logographic script")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a session; prints the report as JSON.
    ///
    /// Any config key can be overridden after the config path, e.g.
    /// `ain run sim.toml --seed=3 --max_iterations=500`. The provider URL
    /// falls back to $AIN_PROVIDER_URL when the config has none.
    Run {
        config: PathBuf,
        /// `--key=value` config overrides
        #[arg(allow_hyphen_values = true, num_args = 0.., value_name = "--KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Render a glyph from a lexicon, or all of them with --all.
    Glyph {
        lexicon: PathBuf,
        #[arg(required_unless_present = "all", conflicts_with = "all")]
        ch: Option<char>,
        /// Write a contact sheet (PGM) and glyph index for every entry
        #[arg(long)]
        all: bool,
        /// text, pgm or svg (single glyph only)
        #[arg(long, default_value = "text")]
        format: GlyphFormat,
        /// Output file (single glyph; default stdout) or directory (--all; default .)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Component atlas file; the built-in atlas when omitted
        #[arg(long)]
        atlas: Option<PathBuf>,
    },
    /// Compare a character's neighbours in Chinese and AIN space.
    Inspect {
        lexicon: PathBuf,
        ch: char,
        #[arg(short, default_value_t = 5)]
        k: usize,
        /// Take the embedding table from this run config
        #[arg(long, conflicts_with = "table")]
        config: Option<PathBuf>,
        /// Embedding table file
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        table_format: Option<TableFormat>,
    },
    /// Check a transcript against the game's invariants.
    Verify {
        transcript: PathBuf,
        /// Also check feedback values and listener consistency against the
        /// dendrogram of this config's table
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a synthetic embedding table.
    GenTable {
        #[arg(long, default_value_t = 3768)]
        count: usize,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to a guess from the output extension
        #[arg(long)]
        format: Option<TableFormat>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a random corpus over a table's characters.
    GenCorpus {
        /// Table file; a synthetic table from --count/--dim/--table-seed otherwise
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 3768)]
        count: usize,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        table_seed: u64,
        #[arg(long, default_value_t = 200)]
        sentences: usize,
        #[arg(long, default_value_t = 7)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Run { config, overrides } => cmd_run(&config, &overrides),
        Command::Glyph {
            lexicon,
            ch,
            all,
            format,
            out,
            atlas,
        } => {
            let lex = load_lexicon(&lexicon)?;
            let atlas = sim::load_atlas(atlas.as_deref())?;
            if all {
                let dir = out.unwrap_or_else(|| PathBuf::from("."));
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                let codes: Vec<_> = lex.entries().iter().map(|e| e.glyph).collect();
                fs::write(dir.join(SHEET_FILE), contact_sheet(&codes, &atlas))?;
                fs::write(dir.join(GLYPH_INDEX_FILE), sim::glyph_index(&lex))?;
                eprintln!("{} glyphs written to {}", codes.len(), dir.display());
                return Ok(());
            }
            let ch = ch.expect("clap requires a char without --all");
            let entry = lex
                .lookup(ch)
                .with_context(|| format!("{ch} has no symbol in {}", lexicon.display()))?;
            let bytes = glyph_bytes(entry.glyph, &atlas, format);
            match out {
                Some(path) => fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?,
                None => io::stdout().write_all(&bytes)?,
            }
            Ok(())
        }
        Command::Inspect {
            lexicon,
            ch,
            k,
            config,
            table,
            table_format,
        } => {
            let lex = load_lexicon(&lexicon)?;
            let table = match (config, table) {
                (Some(cfg), _) => sim::load_table(&SimulationConfig::load(&cfg)?)?,
                (None, Some(path)) => {
                    let format = table_format.unwrap_or_else(|| TableFormat::from_path(&path));
                    EmbeddingTable::load(&path, format)?
                }
                (None, None) => bail!("inspect needs --config or --table for Chinese-space neighbours"),
            };
            if !lex.contains(ch) {
                bail!("{ch} has no symbol in {}", lexicon.display());
            }
            let (zh, ain) = side_by_side(&lex, &table, ch, k)?;
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{ch} ({})", lex.lookup(ch).expect("checked").glyph)?;
            writeln!(stdout, "rank\tchinese\tscore\tain\tscore")?;
            for i in 0..zh.len().max(ain.len()) {
                let cell = |list: &[(char, f64)]| match list.get(i) {
                    Some((c, s)) => format!("{c}\t{s:.4}"),
                    None => "-\t-".to_string(),
                };
                writeln!(stdout, "{}\t{}\t{}", i + 1, cell(&zh), cell(&ain))?;
            }
            Ok(())
        }
        Command::Verify { transcript, config } => {
            let file = fs::File::open(&transcript).with_context(|| format!("opening {}", transcript.display()))?;
            let ctx = match config {
                Some(path) => {
                    let cfg = SimulationConfig::load(&path)?;
                    let table = sim::load_table(&cfg)?;
                    Some((ClusterTree::build(&table, cfg.linkage), cfg.feedback_levels))
                }
                None => None,
            };
            let check = ctx.as_ref().map(|(tree, levels)| TreeCheck { tree, levels: *levels });
            let s = verify(BufReader::new(file), check.as_ref())?;
            writeln!(
                io::stdout(),
                "ok: {} rounds, {} coinages ({} solved, {} revealed), at most {} guesses",
                s.rounds, s.coinages, s.solved, s.revealed, s.max_guesses
            )?;
            Ok(())
        }
        Command::GenTable {
            count,
            dim,
            seed,
            format,
            out,
        } => {
            let table = EmbeddingTable::generate_synthetic(count, dim, seed)?;
            table.save(&out, format.unwrap_or_else(|| TableFormat::from_path(&out)))?;
            Ok(())
        }
        Command::GenCorpus {
            table,
            count,
            dim,
            table_seed,
            sentences,
            len,
            seed,
            out,
        } => {
            let table = match table {
                Some(path) => EmbeddingTable::load(&path, TableFormat::from_path(&path))?,
                None => EmbeddingTable::generate_synthetic(count, dim, table_seed)?,
            };
            fs::write(&out, sim::synthetic_corpus(&table, sentences, len, seed))
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(())
        }
    }
}

fn cmd_run(config: &Path, overrides: &[String]) -> Result<()> {
    let mut cfg = SimulationConfig::load(config)?;
    if cfg.provider_url.is_none() {
        cfg.provider_url = std::env::var(PROVIDER_ENV).ok().filter(|u| !u.is_empty());
    }
    cfg.apply_overrides(overrides)?;
    let (report, out) = sim::run_to_dir(&cfg)?;
    writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "outputs in {}",
        out.transcript.parent().unwrap_or(Path::new(".")).display()
    );
    Ok(())
}

fn load_lexicon(path: &Path) -> Result<AinLexicon> {
    AinLexicon::load(path).with_context(|| format!("loading lexicon {}", path.display()))
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<io::Error>()
        .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
}
