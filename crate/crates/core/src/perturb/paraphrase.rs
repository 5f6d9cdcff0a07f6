// SPDX-License-Identifier: MIT OR Apache-2.0

//! Word-level paraphrases from an external rewriting service.
//!
//! Wire protocol: `POST {url}` with `{"prompt": str, "k": int}`; the service
//! answers `{"text": str, "pairs": [{"original": str, "replacement": str}]}`.
//! A response is accepted only if it has exactly `k` pairs and applying them
//! to the prompt reproduces `text`. Accepted rewrites are cached per
//! `(prompt, k)` in an append-only JSON-lines file.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{eligible_words, Edit, EditOp, PerturbError, PerturbKind, PerturbationSpec, Variant};

pub const PARAPHRASE_URL_ENV: &str = "PROMPTLENS_PARAPHRASE_URL";
pub const PARAPHRASE_TOKEN_ENV: &str = "PROMPTLENS_PARAPHRASE_TOKEN";
pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementPair {
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseResponse {
    pub text: String,
    pub pairs: Vec<ReplacementPair>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Transport failure or non-success status; no usable response.
    Unreachable { message: String, raw: Option<String> },
    /// The service answered but the body is not a valid response.
    Malformed { message: String, raw: String },
}

pub trait ParaphraseClient: Send + Sync {
    fn rewrite(&self, prompt: &str, k: usize) -> Result<ParaphraseResponse, ClientError>;
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    k: usize,
}

/// HTTP client for the rewriting service.
#[derive(Debug, Clone)]
pub struct HttpParaphraseClient {
    url: String,
    token: Option<String>,
    timeout: Duration,
}

impl HttpParaphraseClient {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            token,
            timeout,
        }
    }

    /// Reads the endpoint and bearer token from the environment.
    pub fn from_env(timeout: Duration) -> Option<Self> {
        let url = std::env::var(PARAPHRASE_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let token = std::env::var(PARAPHRASE_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Some(Self::new(url, token, timeout))
    }
}

impl ParaphraseClient for HttpParaphraseClient {
    fn rewrite(&self, prompt: &str, k: usize) -> Result<ParaphraseResponse, ClientError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let body = serde_json::to_string(&Request { prompt, k }).expect("request serializes");
        let mut request = agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let mut response = request.send(body).map_err(|e| ClientError::Unreachable {
            message: e.to_string(),
            raw: None,
        })?;
        let status = response.status();
        let raw = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Unreachable {
                message: e.to_string(),
                raw: None,
            })?;
        if !status.is_success() {
            return Err(ClientError::Unreachable {
                message: format!("HTTP status {status}"),
                raw: Some(raw),
            });
        }
        serde_json::from_str(&raw).map_err(|e| ClientError::Malformed {
            message: e.to_string(),
            raw,
        })
    }
}

/// Offline client: replaces the first `k` eligible words that have an entry
/// in its synonym table.
#[derive(Debug, Default)]
pub struct StubParaphraseClient {
    synonyms: BTreeMap<String, String>,
    calls: AtomicUsize,
}

impl StubParaphraseClient {
    pub fn new<I, S>(synonyms: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        Self {
            synonyms: synonyms.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            calls: AtomicUsize::new(0),
        }
    }

    /// A small synonym table covering the template vocabulary.
    pub fn builtin() -> Self {
        Self::new([
            ("answer", "respond to"),
            ("following", "next"),
            ("questions", "queries"),
            ("question", "query"),
            ("helpful", "useful"),
            ("choose", "select"),
            ("best", "finest"),
            ("option", "choice"),
            ("correct", "right"),
            ("respond", "reply"),
            ("provide", "give"),
            ("response", "reply"),
            ("address", "tackle"),
            ("Please", "Kindly"),
            ("assistant", "helper"),
        ])
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ParaphraseClient for StubParaphraseClient {
    fn rewrite(&self, prompt: &str, k: usize) -> Result<ParaphraseResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let chosen: Vec<_> = eligible_words(prompt)
            .into_iter()
            .filter_map(|w| self.synonyms.get(w.text).map(|r| (w, r)))
            .take(k)
            .collect();
        let mut text = prompt.to_owned();
        for (w, r) in chosen.iter().rev() {
            text.replace_range(w.start..w.end, r);
        }
        Ok(ParaphraseResponse {
            text,
            pairs: chosen
                .iter()
                .map(|(w, r)| ReplacementPair {
                    original: w.text.to_owned(),
                    replacement: (*r).clone(),
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    prompt: String,
    k: usize,
    #[serde(flatten)]
    response: ParaphraseResponse,
}

/// Accepted paraphrases keyed by `(prompt, k)`. Single writer, many readers.
#[derive(Debug, Default)]
pub struct ParaphraseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, ParaphraseResponse>>,
    writer: Mutex<()>,
}

impl ParaphraseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a JSON-lines cache file. Later records for the same
    /// key win.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PerturbError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| PerturbError::Cache(e.to_string()))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| PerturbError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| PerturbError::Cache(format!("{}:{}: {e}", path.display(), n + 1)))?;
                entries.insert(record.key, record.response);
            }
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(()),
        })
    }

    pub fn key(prompt: &str, k: usize) -> String {
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update([0u8]);
        h.update((k as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn get(&self, prompt: &str, k: usize) -> Option<ParaphraseResponse> {
        self.entries
            .read()
            .expect("cache lock")
            .get(&Self::key(prompt, k))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, prompt: &str, k: usize, response: ParaphraseResponse) -> Result<(), PerturbError> {
        let key = Self::key(prompt, k);
        let _guard = self.writer.lock().expect("cache writer lock");
        if let Some(path) = &self.path {
            let record = CacheRecord {
                key: key.clone(),
                prompt: prompt.to_owned(),
                k,
                response: response.clone(),
            };
            let mut line = serde_json::to_string(&record).map_err(|e| PerturbError::Cache(e.to_string()))?;
            line.push('\n');
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| f.write_all(line.as_bytes()))
                .map_err(|e| PerturbError::Cache(e.to_string()))?;
        }
        self.entries.write().expect("cache lock").insert(key, response);
        Ok(())
    }
}

/// Checks the response against the prompt and returns the edit log.
fn validate(prompt: &str, k: usize, response: &ParaphraseResponse) -> Result<Vec<Edit>, String> {
    if response.pairs.len() != k {
        return Err(format!("expected {k} replacement pairs, got {}", response.pairs.len()));
    }
    let words = eligible_words(prompt);
    let mut used = vec![false; words.len()];
    let mut targets = Vec::with_capacity(k);
    for pair in &response.pairs {
        if pair.original == pair.replacement {
            return Err(format!("pair {:?} does not change the word", pair.original));
        }
        let slot = words
            .iter()
            .enumerate()
            .position(|(i, w)| !used[i] && w.text == pair.original)
            .ok_or_else(|| format!("{:?} is not an unused eligible word of the prompt", pair.original))?;
        used[slot] = true;
        targets.push((words[slot], pair));
    }
    targets.sort_by_key(|t| std::cmp::Reverse(t.0.start));
    let mut text = prompt.to_owned();
    let mut edits = Vec::with_capacity(k);
    for (w, pair) in targets {
        let edit = Edit {
            op: EditOp::ReplaceWord,
            position: w.start,
            before: pair.original.clone(),
            after: pair.replacement.clone(),
        };
        edit.apply(&mut text);
        edits.push(edit);
    }
    if text != response.text {
        return Err("applying the pairs does not reproduce the returned text".into());
    }
    Ok(edits)
}

fn variant(prompt: &str, k: usize, response: ParaphraseResponse, edit_log: Vec<Edit>) -> Variant {
    debug_assert!(super::replay(prompt, &edit_log).is_ok_and(|t| t == response.text));
    Variant {
        spec: PerturbationSpec {
            kind: PerturbKind::Para,
            k,
            seed: 0,
            variant_index: 0,
        },
        text: response.text,
        edit_log,
        warning: None,
    }
}

/// Rewrites `prompt` replacing exactly `k` words, consulting `cache` first.
/// Invalid responses are retried up to `max_retries` times.
pub fn paraphrase(
    prompt: &str,
    k: usize,
    client: &dyn ParaphraseClient,
    cache: &ParaphraseCache,
    max_retries: usize,
) -> Result<Variant, PerturbError> {
    if k == 0 {
        return Err(PerturbError::ZeroSeverity);
    }
    if let Some(hit) = cache.get(prompt, k) {
        let edits = validate(prompt, k, &hit).map_err(|reason| PerturbError::Cache(format!("stale entry: {reason}")))?;
        return Ok(variant(prompt, k, hit, edits));
    }
    let attempts = max_retries + 1;
    let mut last_raw = String::new();
    let mut last_reason = String::new();
    for attempt in 1..=attempts {
        let response = match client.rewrite(prompt, k) {
            Ok(r) => r,
            Err(ClientError::Unreachable { message, raw }) => {
                return Err(PerturbError::ClientUnreachable { message, last_raw: raw });
            }
            Err(ClientError::Malformed { message, raw }) => {
                log::warn!("paraphrase attempt {attempt}/{attempts}: malformed response: {message}");
                last_reason = message;
                last_raw = raw;
                continue;
            }
        };
        match validate(prompt, k, &response) {
            Ok(edits) => {
                cache.insert(prompt, k, response.clone())?;
                return Ok(variant(prompt, k, response, edits));
            }
            Err(reason) => {
                log::warn!("paraphrase attempt {attempt}/{attempts}: {reason}");
                last_raw = serde_json::to_string(&response).unwrap_or_default();
                last_reason = reason;
            }
        }
    }
    Err(PerturbError::ValidationFailed {
        attempts,
        reason: last_reason,
        last_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct ShortClient {
        calls: AtomicUsize,
    }

    impl ParaphraseClient for ShortClient {
        fn rewrite(&self, prompt: &str, _k: usize) -> Result<ParaphraseResponse, ClientError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            // Always one pair short of what k = 2 needs.
            Ok(ParaphraseResponse {
                text: prompt.replacen("answer", "respond", 1),
                pairs: vec![ReplacementPair {
                    original: "answer".into(),
                    replacement: "respond".into(),
                }],
            })
        }
    }

    #[test]
    fn stub_replaces_one_word() {
        let client = StubParaphraseClient::new([("answer", "respond")]);
        let cache = ParaphraseCache::in_memory();
        let v = paraphrase("Please answer the question.", 1, &client, &cache, 3).unwrap();
        assert_eq!(v.text, "Please respond the question.");
        assert_eq!(v.edit_log.len(), 1);
    }

    #[test]
    fn cache_hit_skips_the_client() {
        let client = StubParaphraseClient::builtin();
        let cache = ParaphraseCache::in_memory();
        let a = paraphrase("Please answer the following question.", 2, &client, &cache, 3).unwrap();
        let b = paraphrase("Please answer the following question.", 2, &client, &cache, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(client.calls(), 1);
    }

    #[test]
    fn persistent_short_answers_fail_after_retries() {
        let client = ShortClient { calls: AtomicUsize::new(0) };
        let cache = ParaphraseCache::in_memory();
        let err = paraphrase("Please answer the question.", 2, &client, &cache, 3).unwrap_err();
        match err {
            PerturbError::ValidationFailed { attempts, last_raw, .. } => {
                assert_eq!(attempts, 4);
                assert!(last_raw.contains("respond"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(client.calls.load(Ordering::SeqCst), 4);
        assert!(cache.is_empty());
    }

    #[test]
    fn rejects_pairs_that_do_not_reproduce_text() {
        let r = ParaphraseResponse {
            text: "Please reply the question.".into(),
            pairs: vec![ReplacementPair { original: "answer".into(), replacement: "respond".into() }],
        };
        assert!(validate("Please answer the question.", 1, &r).is_err());
    }

    #[test]
    fn rejects_words_not_in_prompt() {
        let r = ParaphraseResponse {
            text: "x".into(),
            pairs: vec![ReplacementPair { original: "zebra".into(), replacement: "horse".into() }],
        };
        assert!(validate("Please answer.", 1, &r).unwrap_err().contains("zebra"));
    }

    #[test]
    fn cache_key_separates_k() {
        assert_ne!(ParaphraseCache::key("p", 1), ParaphraseCache::key("p", 2));
    }
}
