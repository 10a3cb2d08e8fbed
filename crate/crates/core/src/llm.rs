//! Chat-completion clients, a deterministic mock, and the ranked-answer parser.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::graph::NodeId;
use crate::prompt::{format_answer, Candidate, PromptBundle};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("prompt has an empty system or user message")]
    EmptyMessage,
    #[error("prompt has {chars} characters, over the limit of {limit}")]
    PromptTooLarge { chars: usize, limit: usize },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("scripted client has no responses left")]
    ScriptExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model: String,
    pub endpoint: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
    pub timeout_ms: u64,
    pub retries: usize,
    pub backoff_ms: u64,
    pub max_prompt_chars: usize,
    pub max_in_flight: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: String::from("gpt-4o-mini"),
            endpoint: String::from("https://api.openai.com/v1/chat/completions"),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout_ms: 60_000,
            retries: 3,
            backoff_ms: 500,
            max_prompt_chars: 200_000,
            max_in_flight: 4,
        }
    }
}

pub trait LlmClient {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError>;

    fn name(&self) -> String {
        String::from("llm")
    }
}

impl<T: LlmClient + ?Sized> LlmClient for &T {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError {
    /// Worth retrying (timeouts, 429, 5xx).
    pub transient: bool,
    pub message: String,
}

/// One request to a provider.
pub trait Transport {
    fn send(&self, system: &str, user: &str, settings: &LlmSettings) -> Result<String, TransportError>;
}

/// Wraps a transport with the prompt-size guard and exponential backoff.
pub struct RetryingClient<T> {
    pub transport: T,
    pub settings: LlmSettings,
    sleep: fn(u64),
}

impl<T: Transport> RetryingClient<T> {
    /// `sleep` receives the backoff in milliseconds.
    pub fn new(transport: T, settings: LlmSettings, sleep: fn(u64)) -> Self {
        Self {
            transport,
            settings,
            sleep,
        }
    }
}

impl<T: Transport> LlmClient for RetryingClient<T> {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        if prompt.system_message.trim().is_empty() || prompt.user_message.trim().is_empty() {
            return Err(LlmError::EmptyMessage);
        }
        let chars = prompt.char_count();
        if chars > self.settings.max_prompt_chars {
            return Err(LlmError::PromptTooLarge {
                chars,
                limit: self.settings.max_prompt_chars,
            });
        }
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self
                .transport
                .send(&prompt.system_message, &prompt.user_message, &self.settings)
            {
                Ok(text) => return Ok(text),
                Err(e) if e.transient && attempts <= self.settings.retries => {
                    let factor = 1u64 << (attempts - 1).min(16);
                    (self.sleep)(self.settings.backoff_ms.saturating_mul(factor));
                }
                Err(e) => {
                    return Err(LlmError::Transport {
                        attempts,
                        message: e.message,
                    })
                }
            }
        }
    }

    fn name(&self) -> String {
        self.settings.model.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockPolicy {
    /// The first `k` candidates in prompt order, in the assistant format.
    EchoTopK(usize),
    FixedAnswer(String),
    /// Each call returns the next response; errors once they run out.
    Scripted(Vec<String>),
}

#[derive(Debug)]
pub struct MockLlm {
    policy: MockPolicy,
    cursor: AtomicUsize,
}

impl MockLlm {
    pub fn new(policy: MockPolicy) -> Self {
        Self {
            policy,
            cursor: AtomicUsize::new(0),
        }
    }
}

impl LlmClient for MockLlm {
    fn complete(&self, prompt: &PromptBundle) -> Result<String, LlmError> {
        match &self.policy {
            MockPolicy::EchoTopK(k) => {
                let names: Vec<&str> = prompt.candidates.iter().take(*k).map(|c| c.name.as_str()).collect();
                Ok(format_answer(prompt.task, &names))
            }
            MockPolicy::FixedAnswer(s) => Ok(s.clone()),
            MockPolicy::Scripted(responses) => {
                let i = self.cursor.fetch_add(1, Ordering::SeqCst);
                responses.get(i).cloned().ok_or(LlmError::ScriptExhausted)
            }
        }
    }

    fn name(&self) -> String {
        match &self.policy {
            MockPolicy::EchoTopK(k) => format!("mock-echo-top-{k}"),
            MockPolicy::FixedAnswer(_) => String::from("mock-fixed"),
            MockPolicy::Scripted(_) => String::from("mock-scripted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchTier {
    Exact,
    CaseInsensitive,
    NormalizedSubstring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub rank: usize,
    pub answer: String,
    pub candidate: Option<NodeId>,
    pub tier: Option<MatchTier>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RankedAnswer {
    pub items: Vec<RankedItem>,
}

impl RankedAnswer {
    /// Matched candidate per rank, `None` where unmatched.
    pub fn ids(&self) -> Vec<Option<&NodeId>> {
        self.items.iter().map(|i| i.candidate.as_ref()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("no numbered answer list in completion")]
pub struct ParseError {
    pub raw: String,
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let h = haystack.to_lowercase();
    let n = needle.to_lowercase();
    // Lowercasing can shift byte offsets for non-ASCII text; only trust
    // positions when lengths are unchanged.
    if h.len() == haystack.len() {
        h.find(&n)
    } else {
        haystack.find(needle)
    }
}

/// Text following the answer header, or the whole completion if absent.
fn after_header<'a>(completion: &'a str, header: Option<&str>) -> &'a str {
    let Some(header) = header else { return completion };
    let header = header.trim();
    let mut probes = Vec::new();
    probes.push(header);
    if let Some((_, tail)) = header.rsplit_once(',') {
        probes.push(tail.trim());
    }
    for p in probes {
        if let Some(i) = find_ci(completion, p) {
            return &completion[i + p.len()..];
        }
    }
    completion
}

/// Position just past a list marker `n.` or `n)` starting at `i`, if any.
fn marker_at(s: &str, i: usize, n: usize) -> Option<usize> {
    let digits = format!("{n}");
    let rest = &s[i..];
    if !rest.starts_with(&digits) {
        return None;
    }
    if i > 0 {
        let prev = s[..i].chars().next_back()?;
        if prev.is_alphanumeric() || prev == '.' {
            return None;
        }
    }
    let after = &rest[digits.len()..];
    let mut chars = after.chars();
    match chars.next() {
        Some('.') | Some(')') => {}
        _ => return None,
    }
    let end = i + digits.len() + 1;
    match s[end..].chars().next() {
        None => Some(end),
        Some(c) if c.is_whitespace() => Some(end),
        _ => None,
    }
}

fn find_marker(s: &str, n: usize) -> Option<(usize, usize)> {
    s.char_indices()
        .map(|(i, _)| i)
        .find_map(|i| marker_at(s, i, n).map(|end| (i, end)))
}

fn clean(item: &str) -> String {
    let t = item.trim();
    let t = t.trim_matches(|c| c == '*' || c == '"' || c == '`' || c == '_');
    t.trim().to_string()
}

fn leading_bullet_len(line: &str) -> usize {
    line.len() - line.trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '-' | '*' | '#' | '>')).len()
}

/// Numbered items: inline on one line, or one per line on consecutive lines.
fn extract_items(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut start = None;
    for (li, line) in lines.iter().enumerate() {
        if let Some((_, end)) = find_marker(line, 1) {
            start = Some((li, end));
            break;
        }
    }
    let Some((mut li, mut pos)) = start else {
        return Vec::new();
    };
    let mut items = Vec::new();
    let mut n = 1;
    loop {
        let line = lines[li];
        let rest = &line[pos..];
        match find_marker(rest, n + 1) {
            Some((i, end)) => {
                let item = clean(&rest[..i]);
                if item.is_empty() {
                    break;
                }
                items.push(item);
                n += 1;
                pos += end;
            }
            None => {
                let item = clean(rest);
                if item.is_empty() {
                    break;
                }
                items.push(item);
                let Some(next) = (li + 1..lines.len()).find(|&j| !lines[j].trim().is_empty()) else {
                    break;
                };
                let next_line = lines[next];
                let b = leading_bullet_len(next_line);
                match marker_at(next_line, b, n + 1) {
                    Some(end) => {
                        li = next;
                        pos = end;
                        n += 1;
                    }
                    None => break,
                }
            }
        }
    }
    items
}

/// Lowercase alphanumeric words separated by single spaces.
pub fn normalize_name(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

fn contains_words(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let padded_hay = format!(" {hay} ");
    let padded_needle = format!(" {needle} ");
    padded_hay.contains(&padded_needle)
}

fn match_candidate(answer: &str, candidates: &[Candidate], taken: &[bool]) -> Option<(usize, MatchTier)> {
    let free = || candidates.iter().enumerate().filter(|(i, _)| !taken[*i]);
    if let Some((i, _)) = free().find(|(_, c)| c.name == answer) {
        return Some((i, MatchTier::Exact));
    }
    let lower = answer.to_lowercase();
    if let Some((i, _)) = free().find(|(_, c)| c.name.to_lowercase() == lower) {
        return Some((i, MatchTier::CaseInsensitive));
    }
    let a = normalize_name(answer);
    let mut best: Option<(usize, usize)> = None;
    for (i, c) in free() {
        let n = normalize_name(&c.name);
        if contains_words(&a, &n) || contains_words(&n, &a) {
            let len = n.len();
            if best.is_none_or(|(_, l)| len > l) {
                best = Some((i, len));
            }
        }
    }
    best.map(|(i, _)| (i, MatchTier::NormalizedSubstring))
}

/// Extracts the numbered answer list following `header` and matches each
/// entry to a candidate. A candidate is never assigned to two ranks.
pub fn parse_ranked(
    completion: &str,
    header: Option<&str>,
    candidates: &[Candidate],
) -> Result<RankedAnswer, ParseError> {
    let mut items = extract_items(after_header(completion, header));
    if items.is_empty() && header.is_some() {
        items = extract_items(completion);
    }
    if items.is_empty() {
        return Err(ParseError {
            raw: completion.to_string(),
        });
    }
    let mut taken = alloc::vec![false; candidates.len()];
    let items = items
        .into_iter()
        .enumerate()
        .map(|(i, answer)| {
            let m = match_candidate(&answer, candidates, &taken);
            if let Some((ci, _)) = m {
                taken[ci] = true;
            }
            RankedItem {
                rank: i + 1,
                answer,
                candidate: m.map(|(ci, _)| candidates[ci].id.clone()),
                tier: m.map(|(_, t)| t),
            }
        })
        .collect();
    Ok(RankedAnswer { items })
}
