//! The speaker/listener language game.
//!
//! A round runs as a fixed sequence: the speaker observes, retrieves and
//! picks a matching corpus sentence, composes a verse, selects one target
//! character and encodes the verse. If the target has no AIN symbol yet the
//! speaker coins one and the listener gets up to five guesses with proximity
//! feedback. Whether solved or revealed, both agents then insert the same
//! entry, so their lexicons stay identical. Roles swap every round.

use std::collections::HashSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterTree, TieBreak};
use crate::corpus::{pick_matched, Composer, Corpus, ObservationProvider};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::glyph::{resolve_collision, GlyphCode, Projection};
use crate::lexicon::{coin, neighborhood_divergence, AgentId, AinEntry, AinLexicon, DivergenceSummary};

/// Listener attempts per coinage.
pub const MAX_GUESSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Token {
    Ain(GlyphCode),
    Plain(char),
}

impl Token {
    /// Glyphs render as `c0.c1.c2`, plaintext as the character itself.
    pub fn render(&self) -> String {
        match self {
            Token::Ain(g) => g.to_string(),
            Token::Plain(c) => c.to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut cs = s.chars();
        match (cs.next(), cs.next()) {
            (Some(c), None) => Ok(Token::Plain(c)),
            _ => Ok(Token::Ain(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewSymbol {
    pub glyph: GlyphCode,
    pub hint: char,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    pub tokens: Vec<Token>,
    pub new_symbol: Option<NewSymbol>,
    pub target_position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    pub iteration: u64,
    pub speaker: AgentId,
    pub verse: Vec<char>,
    pub target: char,
    pub was_known: bool,
    pub guesses: Vec<(char, u32)>,
    pub solved_in: Option<u8>,
    pub revealed: bool,
    pub lexicon_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub outcome: RoundOutcome,
    pub message: EncodedMessage,
}

/// Knobs of the game itself (as opposed to where its inputs come from).
#[derive(Debug, Clone, PartialEq)]
pub struct GameParams {
    pub seed: u64,
    pub feedback_levels: u32,
    pub epsilon: f64,
    pub k_retrieval: usize,
    pub hint_tie_break: TieBreak,
    pub max_iterations: u64,
    pub saturation_window: u64,
    pub accuracy_window: u64,
    pub divergence_k: usize,
}

impl Default for GameParams {
    fn default() -> Self {
        GameParams {
            seed: 0,
            feedback_levels: 4,
            epsilon: 0.3,
            k_retrieval: crate::corpus::DEFAULT_TOP_K,
            hint_tie_break: TieBreak::Codepoint,
            max_iterations: 1000,
            saturation_window: 50,
            accuracy_window: 50,
            divergence_k: 5,
        }
    }
}

/// Shared, read-only game environment plus the verse composer.
pub struct World {
    pub table: EmbeddingTable,
    pub tree: ClusterTree,
    pub projection: Projection,
    pub corpus: Corpus,
    pub composer: Composer,
}

pub struct AgentState {
    pub id: AgentId,
    pub lexicon: AinLexicon,
    pub rng: ChaCha8Rng,
    pub observer: Box<dyn ObservationProvider>,
}

impl AgentState {
    pub fn new(id: AgentId, seed: u64, observer: Box<dyn ObservationProvider>) -> Self {
        AgentState {
            id,
            lexicon: AinLexicon::new(),
            rng: ChaCha8Rng::seed_from_u64(seed ^ id.seed_salt()),
            observer,
        }
    }
}

/// Pick the character to encode: the most corpus-frequent verse character
/// without an AIN symbol (ties by codepoint), else the verse's first
/// character. Returns `(target, was_known)`.
pub fn select_target(verse: &[char], lexicon: &AinLexicon, corpus: &Corpus) -> Result<(char, bool)> {
    let first = *verse.first().ok_or_else(|| Error::Protocol("empty verse".into()))?;
    let unknown = verse
        .iter()
        .copied()
        .filter(|&c| !lexicon.contains(c))
        .min_by(|&a, &b| corpus.frequency(b).cmp(&corpus.frequency(a)).then(a.cmp(&b)));
    Ok(match unknown {
        Some(c) => (c, false),
        None => (first, true),
    })
}

/// Everything `encode` needs to coin a symbol.
pub struct CoinContext<'a> {
    pub table: &'a EmbeddingTable,
    pub tree: &'a ClusterTree,
    pub projection: &'a Projection,
    pub epsilon: f64,
    pub hint_tie_break: TieBreak,
    pub iteration: u64,
    pub speaker: AgentId,
}

/// Encode `verse` for the listener. Known characters become AIN tokens, the
/// rest stay plaintext. An unknown target is coined: the returned entry is
/// the speaker's pending proposal and the target's plaintext is withheld.
pub fn encode(
    verse: &[char],
    target: char,
    lexicon: &AinLexicon,
    ctx: &CoinContext<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<(EncodedMessage, Option<AinEntry>)> {
    let target_position = verse
        .iter()
        .position(|&c| c == target)
        .ok_or_else(|| Error::Protocol(format!("target {target:?} is not in the verse")))?;

    let pending = if lexicon.contains(target) {
        None
    } else {
        let ain_vec = coin(target, ctx.table, ctx.epsilon, rng)?;
        let raw = ctx.projection.encode(&ain_vec)?;
        let glyph = resolve_collision(raw, |g| lexicon.is_occupied(g))?;
        let hint = ctx
            .tree
            .hint_for(target, |c| lexicon.contains(c), ctx.hint_tie_break, rng)?;
        Some((
            AinEntry {
                ch: target,
                ain_vec,
                glyph,
                epsilon: ctx.epsilon,
                coined_at: ctx.iteration,
                coined_by: ctx.speaker,
            },
            hint,
        ))
    };

    let tokens = verse
        .iter()
        .map(|&c| match lexicon.lookup(c) {
            Some(e) => Token::Ain(e.glyph),
            None if c == target => Token::Ain(pending.as_ref().expect("unknown target").0.glyph),
            None => Token::Plain(c),
        })
        .collect();
    let new_symbol = pending.as_ref().map(|(e, hint)| NewSymbol {
        glyph: e.glyph,
        hint: *hint,
    });
    Ok((
        EncodedMessage {
            tokens,
            new_symbol,
            target_position,
        },
        pending.map(|(e, _)| e),
    ))
}

/// Characters consistent with every `(guess, feedback)` pair so far.
pub fn consistent_candidates(tree: &ClusterTree, history: &[(char, u32)], levels: u32) -> Result<HashSet<char>> {
    let mut set: Option<HashSet<char>> = None;
    for &(g, f) in history {
        let cands: HashSet<char> = tree.candidates_at_level(g, f, levels)?.into_iter().collect();
        set = Some(match set {
            None => cands,
            Some(s) => s.intersection(&cands).copied().collect(),
        });
    }
    Ok(set.unwrap_or_else(|| tree.leaf_chars().iter().copied().collect()))
}

/// The listener's next guess for the message's new symbol.
///
/// Candidates exclude the hint, characters that already have symbols, and
/// earlier guesses; after feedback they are further restricted to the
/// characters consistent with every answer so far. The candidate closest to
/// the hint in the dendrogram wins, ties by codepoint.
pub fn listener_guess(
    tree: &ClusterTree,
    message: &EncodedMessage,
    history: &[(char, u32)],
    lexicon: &AinLexicon,
    levels: u32,
) -> Result<char> {
    let hint = message
        .new_symbol
        .ok_or_else(|| Error::Protocol("message coins no symbol".into()))?
        .hint;
    if history.len() >= MAX_GUESSES {
        return Err(Error::Protocol(format!("guess budget of {MAX_GUESSES} exhausted")));
    }
    if history.iter().any(|&(_, f)| f == 0) {
        return Err(Error::Protocol("symbol already solved".into()));
    }
    let hint_row = tree.cophenetic_row(tree.leaf_of(hint)?);
    let guessed: HashSet<char> = history.iter().map(|&(g, _)| g).collect();
    let eligible = |c: &char| *c != hint && !lexicon.contains(*c) && !guessed.contains(c);

    let pick = |pool: &mut dyn Iterator<Item = char>| {
        pool.filter(eligible)
            .map(|c| (hint_row[tree.leaf_of(c).expect("leaf")], c))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, c)| c)
    };
    let consistent = consistent_candidates(tree, history, levels)?;
    pick(&mut consistent.into_iter())
        .or_else(|| pick(&mut tree.leaf_chars().iter().copied()))
        .ok_or_else(|| Error::Protocol("no characters left to guess".into()))
}

/// Play one round. The speaker's and listener's lexicons must be equal on
/// entry and are equal again on exit.
pub fn run_round(
    speaker: &mut AgentState,
    listener: &mut AgentState,
    world: &mut World,
    params: &GameParams,
    iteration: u64,
) -> Result<Round> {
    let observation = speaker.observer.observe(&mut speaker.rng)?;
    let top = world
        .corpus
        .top_k_similar(&observation, &world.table, params.k_retrieval)?;
    let matched = pick_matched(&top, &mut speaker.rng)?;
    let verse = world.composer.compose(&observation, world.corpus.sentence(matched))?;
    if let Some(&c) = verse.iter().find(|&&c| !world.table.contains(c)) {
        return Err(Error::UnknownChar(c));
    }

    let (target, was_known) = select_target(&verse, &speaker.lexicon, &world.corpus)?;
    let ctx = CoinContext {
        table: &world.table,
        tree: &world.tree,
        projection: &world.projection,
        epsilon: params.epsilon,
        hint_tie_break: params.hint_tie_break,
        iteration,
        speaker: speaker.id,
    };
    let (message, pending) = encode(&verse, target, &speaker.lexicon, &ctx, &mut speaker.rng)?;

    let mut guesses: Vec<(char, u32)> = Vec::new();
    let mut solved_in = None;
    let mut revealed = false;
    if let Some(entry) = pending {
        while guesses.len() < MAX_GUESSES {
            let guess = listener_guess(
                &world.tree,
                &message,
                &guesses,
                &listener.lexicon,
                params.feedback_levels,
            )?;
            let level = world.tree.feedback_level(guess, target, params.feedback_levels)?;
            guesses.push((guess, level));
            if level == 0 {
                solved_in = Some(guesses.len() as u8);
                break;
            }
        }
        revealed = solved_in.is_none();
        listener.lexicon.insert(entry.clone())?;
        speaker.lexicon.insert(entry)?;
    }

    Ok(Round {
        outcome: RoundOutcome {
            iteration,
            speaker: speaker.id,
            verse,
            target,
            was_known,
            guesses,
            solved_in,
            revealed,
            lexicon_size: speaker.lexicon.len(),
        },
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    /// First iteration of the coinage-free streak that ended the session.
    pub saturation_iteration: Option<u64>,
    pub final_lexicon_size: usize,
    pub rounds: u64,
    pub coinages: u64,
    /// Fraction of coinages the listener solved within the guess budget.
    pub solve_rate: f64,
    pub mean_guesses_per_coinage: f64,
    /// First-guess accuracy over coinage rounds, per block of
    /// `accuracy_window` rounds; `None` for blocks without coinages.
    pub window_accuracy: Vec<Option<f64>>,
    pub divergence: Option<DivergenceSummary>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Running,
    MaxIterations,
    Saturated,
}

pub struct Session {
    world: World,
    params: GameParams,
    agents: [AgentState; 2],
    iteration: u64,
    since_coinage: u64,
    last_coinage: Option<u64>,
    state: SessionState,
    coinages: u64,
    solved: u64,
    total_guesses: u64,
    windows: Vec<(u64, u64)>,
    recent_first_guess: std::collections::VecDeque<(u64, bool)>,
    started: Instant,
}

impl Session {
    pub fn new(
        world: World,
        params: GameParams,
        observer_a: Box<dyn ObservationProvider>,
        observer_b: Box<dyn ObservationProvider>,
    ) -> Self {
        let agents = [
            AgentState::new(AgentId::A, params.seed, observer_a),
            AgentState::new(AgentId::B, params.seed, observer_b),
        ];
        let state = if params.max_iterations == 0 {
            SessionState::MaxIterations
        } else {
            SessionState::Running
        };
        Session {
            world,
            params,
            agents,
            iteration: 0,
            since_coinage: 0,
            last_coinage: None,
            state,
            coinages: 0,
            solved: 0,
            total_guesses: 0,
            windows: Vec::new(),
            recent_first_guess: Default::default(),
            started: Instant::now(),
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn agent(&self, id: AgentId) -> &AgentState {
        &self.agents[id as usize]
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Speaker of the next round: A on even iterations, B on odd.
    pub fn next_speaker(&self) -> AgentId {
        if self.iteration.is_multiple_of(2) {
            AgentId::A
        } else {
            AgentId::B
        }
    }

    /// Play the next round, or return `None` once the session has ended.
    pub fn step(&mut self) -> Result<Option<Round>> {
        if self.state != SessionState::Running {
            return Ok(None);
        }
        let next = self.next_speaker();
        let [a, b] = &mut self.agents;
        let (speaker, listener) = match next {
            AgentId::A => (a, b),
            AgentId::B => (b, a),
        };
        let round = run_round(speaker, listener, &mut self.world, &self.params, self.iteration)?;
        debug_assert_eq!(self.agents[0].lexicon, self.agents[1].lexicon);
        self.record(&round.outcome);
        self.iteration += 1;
        if self.iteration >= self.params.max_iterations {
            self.state = SessionState::MaxIterations;
        }
        if self.since_coinage >= self.params.saturation_window {
            self.state = SessionState::Saturated;
        }
        Ok(Some(round))
    }

    fn record(&mut self, o: &RoundOutcome) {
        let w = self.params.accuracy_window.max(1);
        let block = (o.iteration / w) as usize;
        if self.windows.len() <= block {
            self.windows.resize(block + 1, (0, 0));
        }
        while let Some(&(it, _)) = self.recent_first_guess.front() {
            if it + w <= o.iteration {
                self.recent_first_guess.pop_front();
            } else {
                break;
            }
        }
        if o.was_known {
            self.since_coinage += 1;
            return;
        }
        self.since_coinage = 0;
        self.last_coinage = Some(o.iteration);
        self.coinages += 1;
        self.total_guesses += o.guesses.len() as u64;
        if o.solved_in.is_some() {
            self.solved += 1;
        }
        let first_hit = o.solved_in == Some(1);
        self.windows[block].0 += 1;
        self.windows[block].1 += u64::from(first_hit);
        self.recent_first_guess.push_back((o.iteration, first_hit));
    }

    /// First-guess accuracy over coinage rounds among the last
    /// `accuracy_window` rounds, as of the most recent round.
    pub fn trailing_accuracy(&self) -> Option<f64> {
        let n = self.recent_first_guess.len();
        (n > 0).then(|| self.recent_first_guess.iter().filter(|(_, hit)| *hit).count() as f64 / n as f64)
    }

    /// Play until the session ends.
    pub fn run(&mut self, mut on_round: impl FnMut(&Session, &Round) -> Result<()>) -> Result<()> {
        while let Some(round) = self.step()? {
            on_round(self, &round)?;
        }
        Ok(())
    }

    pub fn report(&self) -> Result<SessionReport> {
        let lexicon = &self.agents[0].lexicon;
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Ok(SessionReport {
            saturation_iteration: (self.state == SessionState::Saturated)
                .then(|| self.last_coinage.map_or(0, |i| i + 1)),
            final_lexicon_size: lexicon.len(),
            rounds: self.iteration,
            coinages: self.coinages,
            solve_rate: ratio(self.solved, self.coinages),
            mean_guesses_per_coinage: ratio(self.total_guesses, self.coinages),
            window_accuracy: self
                .windows
                .iter()
                .map(|&(n, hits)| (n > 0).then(|| hits as f64 / n as f64))
                .collect(),
            divergence: neighborhood_divergence(lexicon, &self.world.table, self.params.divergence_k)?,
            duration_ms: self.started.elapsed().as_millis() as u64,
        })
    }
}
