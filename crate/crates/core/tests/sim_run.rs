use std::fs;
use std::io::BufReader;
use std::path::Path;

use ain_core::cluster::{ClusterTree, Linkage};
use ain_core::config::SimulationConfig;
use ain_core::embedding::EmbeddingTable;
use ain_core::lexicon::AinLexicon;
use ain_core::sim::{self, synthetic_corpus};
use ain_core::transcript::{read_metrics, verify, TranscriptRecord, TreeCheck};
use ain_core::Error;

fn setup(dir: &Path, count: usize, dim: usize, sentences: usize, len: usize) -> SimulationConfig {
    let table = EmbeddingTable::generate_synthetic(count, dim, 0).unwrap();
    fs::write(dir.join("corpus.txt"), synthetic_corpus(&table, sentences, len, 0)).unwrap();
    let mut cfg = SimulationConfig::parse(&format!(
        "synthetic_count = {count}\nsynthetic_dim = {dim}\ncorpus = \"corpus.txt\"\noutput_dir = \"out\"\n"
    ))
    .unwrap();
    cfg.corpus = Some(dir.join("corpus.txt"));
    cfg.output_dir = dir.join("out");
    cfg
}

fn verify_file(path: &Path, check: Option<&TreeCheck<'_>>) -> ain_core::Result<ain_core::transcript::VerifySummary> {
    verify(BufReader::new(fs::File::open(path).unwrap()), check)
}

#[test]
fn transcripts_verify_across_linkages_and_levels() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), 150, 12, 40, 5);
    cfg.max_iterations = 400;
    let table = sim::load_table(&cfg).unwrap();
    for linkage in [Linkage::Average, Linkage::Complete, Linkage::Single] {
        let tree = ClusterTree::build(&table, linkage);
        for levels in [2, 4, 7] {
            cfg.linkage = linkage;
            cfg.feedback_levels = levels;
            let (report, out) = sim::run_to_dir(&cfg).unwrap();
            let sum = verify_file(&out.transcript, Some(&TreeCheck { tree: &tree, levels })).unwrap();
            assert_eq!(sum.rounds, report.rounds);
            assert_eq!(sum.coinages, report.coinages);
            assert!(sum.max_guesses <= 5);

            let lex = AinLexicon::load(&out.lexicon).unwrap();
            let from_transcript: Vec<_> = lex.entries().iter().map(|e| (e.ch, e.glyph)).collect();
            assert_eq!(sum.lexicon, from_transcript);
            assert_eq!(fs::read_to_string(&out.glyph_index).unwrap(), sim::glyph_index(&lex));

            let rows = read_metrics(fs::File::open(&out.metrics).unwrap()).unwrap();
            assert_eq!(rows.len() as u64, report.rounds);
            assert!(rows.windows(2).all(|w| w[0].lexicon_size <= w[1].lexicon_size));
            assert_eq!(rows.last().unwrap().lexicon_size, report.final_lexicon_size);
        }
    }
}

#[test]
fn verify_rejects_tampered_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), 80, 8, 20, 5);
    cfg.max_iterations = 100;
    let (_, out) = sim::run_to_dir(&cfg).unwrap();
    let text = fs::read_to_string(&out.transcript).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let idx = lines
        .iter()
        .position(|l| {
            let r: TranscriptRecord = serde_json::from_str(l).unwrap();
            !r.was_known && r.guesses.len() >= 2
        })
        .expect("a multi-guess coinage round");

    let tamper = |f: &dyn Fn(&mut TranscriptRecord)| {
        let mut r: TranscriptRecord = serde_json::from_str(lines[idx]).unwrap();
        f(&mut r);
        let mut copy: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        copy[idx] = r.to_line().unwrap();
        let joined = copy.join("\n") + "\n";
        verify(joined.as_bytes(), None)
    };
    let at_line = |res: ain_core::Result<_>| match res {
        Err(Error::Verify { line, .. }) => line,
        other => panic!("expected a verify error, got {other:?}"),
    };
    assert_eq!(at_line(tamper(&|r| r.iteration += 1)), idx + 1);
    assert_eq!(at_line(tamper(&|r| r.lexicon_size += 1)), idx + 1);
    assert_eq!(at_line(tamper(&|r| r.guesses.truncate(1))), idx + 1);
    assert_eq!(at_line(tamper(&|r| r.solved_in = None)), idx + 1);
    assert!(verify(text.as_bytes(), None).is_ok());
}

#[test]
fn runs_are_reproducible_and_setup_failures_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path(), 100, 10, 30, 5);
    cfg.max_iterations = 200;
    let read_all =
        |o: &sim::RunOutputs| [&o.transcript, &o.metrics, &o.lexicon, &o.glyph_index].map(|p| fs::read(p).unwrap());
    let (r1, o1) = sim::run_to_dir(&cfg).unwrap();
    let first = read_all(&o1);
    let (r2, o2) = sim::run_to_dir(&cfg).unwrap();
    assert_eq!(first, read_all(&o2));
    assert_eq!(
        (r1.rounds, r1.coinages, r1.solve_rate),
        (r2.rounds, r2.coinages, r2.solve_rate)
    );

    cfg.seed = 1;
    let (_, o3) = sim::run_to_dir(&cfg).unwrap();
    assert_ne!(first[0], read_all(&o3)[0]);

    let mut bad = cfg.clone();
    bad.corpus = Some(dir.path().join("missing.txt"));
    bad.output_dir = dir.path().join("never");
    assert!(sim::run_to_dir(&bad).is_err());
    assert!(!bad.output_dir.exists());
}

#[test]
fn config_load_rebases_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let table = EmbeddingTable::generate_synthetic(20, 4, 0).unwrap();
    fs::write(dir.path().join("c.txt"), synthetic_corpus(&table, 3, 3, 0)).unwrap();
    let path = dir.path().join("sim.toml");
    fs::write(&path, "corpus = \"c.txt\"\nsynthetic_count = 20\nsynthetic_dim = 4\n").unwrap();
    let mut cfg = SimulationConfig::load(&path).unwrap();
    assert_eq!(cfg.corpus.as_deref(), Some(dir.path().join("c.txt").as_path()));
    cfg.apply_overrides(&["--linkage=single", "--max-iterations=7", "--epsilon=0.1"])
        .unwrap();
    assert_eq!(
        (cfg.linkage, cfg.max_iterations, cfg.epsilon),
        (Linkage::Single, 7, 0.1)
    );
    cfg.validate().unwrap();
    assert!(cfg.clone().apply_overrides(&["--nope=1"]).is_err());
    assert!(cfg.clone().apply_overrides(&["--epsilon=abc"]).is_err());
    let back = SimulationConfig::parse(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(back, cfg);
}
