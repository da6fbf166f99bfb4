//! Verse supply: sentence corpus, retrieval, observation providers and verse
//! composition.
//!
//! Observations come from an [`ObservationProvider`]. The scripted provider
//! cycles a sentence file in a freshly shuffled order each epoch; the external
//! provider asks an HTTP service (captioning, translation, an LLM) and can fall
//! back to a scripted provider.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingTable};
use crate::error::{Error, Result};

/// Default number of retrieved sentences.
pub const DEFAULT_TOP_K: usize = 3;
/// Default verse length: two seven-character lines.
pub const DEFAULT_MAX_VERSE_LEN: usize = 14;

/// Counts from filtering a text file against the table vocabulary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub kept: usize,
    pub dropped_sentences: usize,
    pub dropped_chars: usize,
}

/// Split `text` into sentences of in-vocabulary characters. Whitespace is
/// ignored; any other out-of-vocabulary character is dropped and counted.
fn filter_sentences(text: &str, vocab: impl Fn(char) -> bool) -> (Vec<Vec<char>>, LoadReport) {
    let mut report = LoadReport::default();
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut sentence = Vec::new();
        for c in line.chars().filter(|c| !c.is_whitespace()) {
            if vocab(c) {
                sentence.push(c);
            } else {
                report.dropped_chars += 1;
            }
        }
        if sentence.is_empty() {
            report.dropped_sentences += 1;
        } else {
            out.push(sentence);
        }
    }
    report.kept = out.len();
    (out, report)
}

#[derive(Debug, Clone)]
pub struct Corpus {
    sentences: Vec<Vec<char>>,
    vectors: Vec<Vec<f64>>,
    frequency: HashMap<char, u32>,
    report: LoadReport,
}

impl Corpus {
    pub fn load(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, table)
    }

    pub fn from_text(text: &str, table: &EmbeddingTable) -> Result<Self> {
        let (sentences, report) = filter_sentences(text, |c| table.contains(c));
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let vectors = sentences
            .iter()
            .map(|s| table.centroid(s))
            .collect::<Result<Vec<_>>>()?;
        let mut frequency = HashMap::new();
        for &c in sentences.iter().flatten() {
            *frequency.entry(c).or_insert(0) += 1;
        }
        Ok(Corpus {
            sentences,
            vectors,
            frequency,
            report,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Vec<char>] {
        &self.sentences
    }

    pub fn sentence(&self, i: usize) -> &[char] {
        &self.sentences[i]
    }

    pub fn sentence_vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn report(&self) -> LoadReport {
        self.report
    }

    /// Occurrences of `c` across the corpus; 0 for characters it never uses.
    pub fn frequency(&self, c: char) -> u32 {
        self.frequency.get(&c).copied().unwrap_or(0)
    }

    /// The `k` sentences most similar to the observation's centroid, best
    /// first, ties by ascending sentence index.
    pub fn top_k_similar(&self, query: &Observation, table: &EmbeddingTable, k: usize) -> Result<Vec<(usize, f64)>> {
        let q = table.centroid(&query.text)?;
        if q.iter().all(|&x| x == 0.0) {
            return Err(Error::ZeroVector);
        }
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| match cosine(&q, v) {
                Ok(s) => Ok((i, s)),
                // A sentence whose characters cancel out has no direction.
                Err(Error::ZeroVector) => Ok((i, 0.0)),
                Err(e) => Err(e),
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

/// Uniform pick among the retrieved sentences.
pub fn pick_matched<R: Rng + ?Sized>(top: &[(usize, f64)], rng: &mut R) -> Result<usize> {
    if top.is_empty() {
        return Err(Error::Range("no retrieved sentences to pick from".into()));
    }
    Ok(top[rng.gen_range(0..top.len())].0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationSource {
    Scripted,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub text: Vec<char>,
    pub source: ObservationSource,
}

pub trait ObservationProvider {
    fn observe(&mut self, rng: &mut dyn RngCore) -> Result<Observation>;
}

/// Cycles a fixed list of sentences, reshuffled at the start of every epoch.
#[derive(Debug, Clone)]
pub struct ScriptedProvider {
    sentences: Vec<Vec<char>>,
    order: Vec<usize>,
    pos: usize,
    report: LoadReport,
}

impl ScriptedProvider {
    pub fn load(path: impl AsRef<Path>, table: &EmbeddingTable) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, table)
    }

    pub fn from_text(text: &str, table: &EmbeddingTable) -> Result<Self> {
        let (sentences, report) = filter_sentences(text, |c| table.contains(c));
        if sentences.is_empty() {
            return Err(Error::EmptyObservation);
        }
        Ok(ScriptedProvider {
            order: (0..sentences.len()).collect(),
            pos: sentences.len(),
            sentences,
            report,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn sentences(&self) -> &[Vec<char>] {
        &self.sentences
    }

    pub fn report(&self) -> LoadReport {
        self.report
    }
}

impl ObservationProvider for ScriptedProvider {
    fn observe(&mut self, rng: &mut dyn RngCore) -> Result<Observation> {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let text = self.sentences[self.order[self.pos]].clone();
        self.pos += 1;
        Ok(Observation {
            text,
            source: ObservationSource::Scripted,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceRole {
    Observe,
    Compose,
}

/// A remote text service: one request, one UTF-8 sentence back.
pub trait TextService {
    fn request(&mut self, role: ServiceRole, payload: &str) -> Result<String>;
}

#[derive(Serialize)]
struct ServiceRequest<'a> {
    role: ServiceRole,
    payload: &'a str,
}

/// JSON-over-HTTP client: POSTs `{"role": ..., "payload": ...}` and reads
/// the reply body as the sentence.
pub struct HttpService {
    url: String,
    agent: ureq::Agent,
}

impl HttpService {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpService { url: url.into(), agent }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl TextService for HttpService {
    fn request(&mut self, role: ServiceRole, payload: &str) -> Result<String> {
        let body = serde_json::to_string(&ServiceRequest { role, payload })?;
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Error::Provider(format!("{}: {e}", self.url)))?;
        resp.body_mut()
            .read_to_string()
            .map_err(|e| Error::Provider(format!("{}: {e}", self.url)))
    }
}

/// Observations from a [`TextService`], OOV-filtered against the table.
pub struct ExternalProvider {
    service: Box<dyn TextService>,
    vocab: HashSet<char>,
    fallback: Option<ScriptedProvider>,
}

impl ExternalProvider {
    pub fn new(service: Box<dyn TextService>, table: &EmbeddingTable, fallback: Option<ScriptedProvider>) -> Self {
        ExternalProvider {
            service,
            vocab: table.chars().iter().copied().collect(),
            fallback,
        }
    }

    fn fetch(&mut self) -> Result<Observation> {
        let reply = self.service.request(ServiceRole::Observe, "")?;
        let text: Vec<char> = reply.chars().filter(|c| self.vocab.contains(c)).collect();
        if text.is_empty() {
            return Err(Error::EmptyObservation);
        }
        Ok(Observation {
            text,
            source: ObservationSource::External,
        })
    }
}

impl ObservationProvider for ExternalProvider {
    fn observe(&mut self, rng: &mut dyn RngCore) -> Result<Observation> {
        match self.fetch() {
            Ok(obs) => Ok(obs),
            Err(e) => match &mut self.fallback {
                Some(scripted) => scripted.observe(rng),
                None => Err(e),
            },
        }
    }
}

/// Template composition: observation followed by the matched sentence,
/// cut to `max_len` characters.
pub fn compose_template(observation: &[char], matched: &[char], max_len: usize) -> Vec<char> {
    observation.iter().chain(matched).copied().take(max_len).collect()
}

pub enum Composer {
    Template {
        max_len: usize,
    },
    /// Delegates to a service; the reply is OOV-filtered and cut to
    /// `max_len`. On failure or an empty reply, falls back to the template
    /// when `fallback` is set.
    External {
        service: Box<dyn TextService>,
        vocab: HashSet<char>,
        max_len: usize,
        fallback: bool,
    },
}

impl Composer {
    pub fn template(max_len: usize) -> Self {
        Composer::Template { max_len }
    }

    pub fn external(service: Box<dyn TextService>, table: &EmbeddingTable, max_len: usize, fallback: bool) -> Self {
        Composer::External {
            service,
            vocab: table.chars().iter().copied().collect(),
            max_len,
            fallback,
        }
    }

    pub fn compose(&mut self, observation: &Observation, matched: &[char]) -> Result<Vec<char>> {
        if observation.text.is_empty() || matched.is_empty() {
            return Err(Error::Range("verse composition needs nonempty inputs".into()));
        }
        match self {
            Composer::Template { max_len } => Ok(compose_template(&observation.text, matched, *max_len)),
            Composer::External {
                service,
                vocab,
                max_len,
                fallback,
            } => {
                let payload: String = observation
                    .text
                    .iter()
                    .chain(std::iter::once(&'\n'))
                    .chain(matched)
                    .collect();
                let reply = service.request(ServiceRole::Compose, &payload).map(|r| {
                    r.chars()
                        .filter(|c| vocab.contains(c))
                        .take(*max_len)
                        .collect::<Vec<_>>()
                });
                match reply {
                    Ok(verse) if !verse.is_empty() => Ok(verse),
                    Ok(_) if *fallback => Ok(compose_template(&observation.text, matched, *max_len)),
                    Err(_) if *fallback => Ok(compose_template(&observation.text, matched, *max_len)),
                    Ok(_) => Err(Error::Provider("composer returned no usable characters".into())),
                    Err(e) => Err(e),
                }
            }
        }
    }
}
