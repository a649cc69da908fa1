//! Turns documentation entries into NL-code pairs.
//!
//! Code comes from [`crate::sigparse`]. The intent keeps the first sentence
//! of the description plus, for each supplied argument, the first sentence
//! that mentions it. Arguments the prose never mentions are listed in a
//! trailing `With arguments ...` sentence so every name in the snippet also
//! appears in the intent.

use std::collections::HashSet;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_jsonl, CorpusError};
use crate::pair::{NlCodePair, Source};
use crate::sigparse::{self, EntryKind, SignatureError, UsageSnippet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Function,
    Class,
    Method,
}

impl From<DocKind> for EntryKind {
    fn from(kind: DocKind) -> Self {
        match kind {
            DocKind::Function => EntryKind::Function,
            DocKind::Class => EntryKind::Constructor,
            DocKind::Method => EntryKind::Method,
        }
    }
}

/// One record of a documentation dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEntry {
    pub module: String,
    pub kind: DocKind,
    #[serde(default)]
    pub owner_class: Option<String>,
    pub signature_text: String,
    pub description: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarvestError {
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("description has no sentences")]
    EmptyDescription,
    #[error("empty signature text")]
    EmptySignature,
}

const ABBREVIATIONS: &[&str] = &["e.g.", "i.e.", "cf.", "vs.", "etc."];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits prose into sentences on `.`, `?` or `!` followed by whitespace and
/// on blank lines. Terminators inside parentheses or brackets never split,
/// and neither do a few common abbreviations.
pub fn split_sentences(description: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut paragraph = Vec::new();
    for line in description.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !paragraph.is_empty() {
                split_paragraph(&paragraph.join(" "), &mut sentences);
                paragraph.clear();
            }
        } else {
            paragraph.push(line);
        }
    }
    sentences
}

fn split_paragraph(paragraph: &str, out: &mut Vec<String>) {
    let normalized = paragraph.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = normalized.chars().collect();
    let mut start = 0;
    let mut depth = 0i32;
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = (depth - 1).max(0),
            '.' | '?' | '!' if depth == 0 => {
                let mut end = i + 1;
                while end < chars.len()
                    && matches!(chars[end], '"' | '\'' | '\u{201d}' | '\u{2019}')
                {
                    end += 1;
                }
                let at_break = end == chars.len() || chars[end] == ' ';
                if at_break && !ends_with_abbreviation(&chars[start..end], chars.get(end + 1)) {
                    push_sentence(&chars[start..end], out);
                    start = end;
                    i = end;
                    continue;
                }
            }
            _ => {}
        }
        i += 1;
    }
    push_sentence(&chars[start..], out);
}

fn ends_with_abbreviation(sentence: &[char], next: Option<&char>) -> bool {
    let text: String = sentence.iter().collect();
    let last_word = text.rsplit(' ').next().unwrap_or("");
    let lowered = last_word.to_lowercase();
    match ABBREVIATIONS.iter().find(|a| lowered.ends_with(*a)) {
        // "etc." ends a sentence unless the text runs on in lower case.
        Some(&"etc.") => next.is_some_and(|c| c.is_lowercase()),
        Some(abbr) => {
            let prefix_len = lowered.len() - abbr.len();
            lowered[..prefix_len]
                .chars()
                .last()
                .is_none_or(|c| !c.is_alphanumeric())
        }
        None => false,
    }
}

fn push_sentence(chars: &[char], out: &mut Vec<String>) {
    let s: String = chars.iter().collect();
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// True when `name` occurs in `sentence` delimited by non-identifier
/// characters. Matching is case-sensitive.
pub fn mentions(sentence: &str, name: &str) -> bool {
    if name.is_empty() {
        return false;
    }
    sentence.match_indices(name).any(|(at, _)| {
        let before = sentence[..at].chars().next_back();
        let after = sentence[at + name.len()..].chars().next();
        !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char)
    })
}

/// The closing sentence listing arguments absent from the prose.
pub fn fallback_sentence(args: &[&str]) -> String {
    let quoted: Vec<String> = args.iter().map(|a| format!("'{a}'")).collect();
    format!("With arguments {}.", quoted.join(", "))
}

/// Builds a concise intent for one usage of a documented API.
pub fn build_intent(description: &str, usage: &UsageSnippet) -> Result<String, HarvestError> {
    let sentences = split_sentences(description);
    if sentences.is_empty() {
        return Err(HarvestError::EmptyDescription);
    }
    let mut selected = vec![0usize];
    let mut unmentioned = Vec::new();
    for arg in &usage.included_args {
        match sentences.iter().position(|s| mentions(s, arg)) {
            Some(idx) if !selected.contains(&idx) => selected.push(idx),
            Some(_) => {}
            None => unmentioned.push(arg.as_str()),
        }
    }
    let mut parts: Vec<String> = selected.iter().map(|&i| sentences[i].clone()).collect();
    if !unmentioned.is_empty() {
        parts.push(fallback_sentence(&unmentioned));
    }
    Ok(parts.join(" "))
}

/// Prefixes the module onto unqualified function and class prototypes.
fn qualified_signature(entry: &DocEntry) -> String {
    let text = entry.signature_text.trim();
    let name_end = text.find('(').unwrap_or(text.len());
    let needs_module = entry.kind != DocKind::Method
        && !text[..name_end].contains('.')
        && !entry.module.is_empty()
        && entry.module != "builtins";
    if needs_module {
        format!("{}.{}", entry.module, text)
    } else {
        text.to_string()
    }
}

/// Emits one pair per usage of a single entry.
pub fn harvest_entry(entry: &DocEntry) -> Result<Vec<NlCodePair>, HarvestError> {
    if entry.signature_text.trim().is_empty() {
        return Err(HarvestError::EmptySignature);
    }
    let sig = sigparse::parse_signature(
        &qualified_signature(entry),
        entry.kind.into(),
        entry.owner_class.as_deref(),
    )?;
    let mut pairs = Vec::new();
    for usage in sigparse::enumerate_usages(&sig) {
        let code = sigparse::render_usage(&sig, &usage)?;
        let intent = build_intent(&entry.description, &usage)?;
        pairs.push(NlCodePair::new(intent, code, Source::Api));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestStats {
    pub entries_read: usize,
    pub entries_skipped: usize,
    pub pairs_emitted: usize,
    pub distinct: usize,
    /// `(entry index, reason)` for each skipped entry.
    pub skipped: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Harvest {
    pub pairs: Vec<NlCodePair>,
    pub stats: HarvestStats,
}

/// Harvests every entry, skipping the ones that fail and collapsing
/// duplicate pairs. Output keeps entry order, then usage order.
pub fn harvest(entries: &[DocEntry]) -> Harvest {
    let mut stats = HarvestStats {
        entries_read: entries.len(),
        ..Default::default()
    };
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (idx, entry) in entries.iter().enumerate() {
        match harvest_entry(entry) {
            Ok(emitted) => {
                stats.pairs_emitted += emitted.len();
                for pair in emitted {
                    if seen.insert(pair.pair_id.clone()) {
                        pairs.push(pair);
                    }
                }
            }
            Err(err) => {
                warn!("skipping doc entry {idx} `{}`: {err}", entry.signature_text);
                stats.entries_skipped += 1;
                stats.skipped.push((idx, err.to_string()));
            }
        }
    }
    stats.distinct = pairs.len();
    Harvest { pairs, stats }
}

/// Reads a JSONL documentation dump.
pub fn read_doc_dump(path: &Path) -> Result<Vec<DocEntry>, CorpusError> {
    let records = read_jsonl::<DocEntry>(path)?;
    Ok(records.records)
}
