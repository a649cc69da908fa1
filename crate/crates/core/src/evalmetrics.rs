//! Corpus BLEU over code, token-level API-call and variable-name accuracy,
//! and the split of test instances by how common their API calls are.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ORDER: usize = 4;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const STRING_PREFIXES: &[&str] = &["r", "u", "b", "f", "br", "rb", "fr", "rf"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("{hypotheses} hypotheses for {references} references")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("cannot score an empty corpus")]
    EmptyCorpus,
    #[error("need {needed} instances for the frequency split, have {available}")]
    InsufficientInstances { needed: usize, available: usize },
}

fn check_aligned<A, B>(hyps: &[A], refs: &[B]) -> Result<(), MetricError> {
    if hyps.len() != refs.len() {
        return Err(MetricError::LengthMismatch {
            hypotheses: hyps.len(),
            references: refs.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lexeme {
    Ident(String),
    Number(String),
    /// Whole literal including prefix and quotes.
    Str(String),
    Punct(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub lexeme: Lexeme,
    /// Whitespace separates this token from the previous one.
    pub spaced: bool,
}

impl Token {
    fn text(&self) -> String {
        match &self.lexeme {
            Lexeme::Ident(s) | Lexeme::Number(s) | Lexeme::Str(s) => s.clone(),
            Lexeme::Punct(c) => c.to_string(),
        }
    }

    fn is_punct(&self, c: char) -> bool {
        self.lexeme == Lexeme::Punct(c)
    }

    fn ident(&self) -> Option<&str> {
        match &self.lexeme {
            Lexeme::Ident(s) => Some(s),
            _ => None,
        }
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Reads a string literal starting at `start` (the opening quote).
fn scan_string(chars: &[char], start: usize) -> usize {
    let quote = chars[start];
    let triple = chars.get(start + 1) == Some(&quote) && chars.get(start + 2) == Some(&quote);
    let mut i = start + if triple { 3 } else { 1 };
    while i < chars.len() {
        match chars[i] {
            '\\' => i += 2,
            c if c == quote => {
                if !triple {
                    return i + 1;
                }
                if chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                    return i + 3;
                }
                i += 1;
            }
            _ => i += 1,
        }
    }
    chars.len()
}

/// Lexes code into identifiers, numbers, whole string literals and
/// single-character punctuation.
pub fn lex(code: &str) -> Vec<Token> {
    let chars: Vec<char> = code.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut spaced = false;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            spaced = true;
            i += 1;
            continue;
        }
        let lexeme = if c == '\'' || c == '"' {
            let end = scan_string(&chars, i);
            let lit: String = chars[i..end].iter().collect();
            i = end;
            Lexeme::Str(lit)
        } else if is_word(c) {
            let start = i;
            while i < chars.len() && is_word(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let next = chars.get(i).copied();
            if matches!(next, Some('\'' | '"'))
                && STRING_PREFIXES.contains(&word.to_ascii_lowercase().as_str())
            {
                let end = scan_string(&chars, i);
                let lit: String = chars[start..end].iter().collect();
                i = end;
                Lexeme::Str(lit)
            } else if c.is_ascii_digit() {
                Lexeme::Number(word)
            } else {
                Lexeme::Ident(word)
            }
        } else {
            i += 1;
            Lexeme::Punct(c)
        };
        tokens.push(Token { lexeme, spaced });
        spaced = false;
    }
    tokens
}

/// Tokens used for BLEU: identifiers whole, punctuation one character at a
/// time, string literals as single tokens.
pub fn code_tokens(code: &str) -> Vec<String> {
    lex(code).iter().map(Token::text).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn of(hyp: &[String], reference: &[String]) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            stats.totals[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
            stats.matches[n - 1] = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
        }
        stats
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU in [0, 100] from aggregated counts. Orders for which the
    /// hypotheses contain no n-grams at all are left out of the geometric
    /// mean; an order with candidates but no matches scores 0.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return if self.ref_len == 0 { 100.0 } else { 0.0 };
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in 0..MAX_ORDER {
            if self.totals[n] == 0 {
                continue;
            }
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
            orders += 1;
        }
        let c = self.hyp_len as f64;
        let r = self.ref_len as f64;
        let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * brevity * (log_sum / orders as f64).exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with uniform weights and a single brevity penalty.
pub fn corpus_bleu<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
) -> Result<f64, MetricError> {
    check_aligned(hypotheses, references)?;
    if hypotheses.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&BleuStats::of(
            &code_tokens(h.as_ref()),
            &code_tokens(r.as_ref()),
        ));
    }
    Ok(total.score())
}

pub fn sentence_bleu(hypothesis: &str, reference: &str) -> f64 {
    BleuStats::of(&code_tokens(hypothesis), &code_tokens(reference)).score()
}

#[derive(Debug, Default)]
struct Extracted {
    calls: BTreeSet<String>,
    variables: BTreeSet<String>,
}

fn extract(code: &str) -> Extracted {
    let tokens = lex(code);
    let mut out = Extracted::default();
    let mut depth = 0i32;
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let starts_chain = match &tok.lexeme {
            Lexeme::Ident(_) => !(i > 0 && tokens[i - 1].is_punct('.')),
            // `.name` after a call, subscript or literal
            Lexeme::Punct('.') => {
                i > 0
                    && tokens.get(i + 1).and_then(Token::ident).is_some()
                    && !matches!(tokens[i - 1].lexeme, Lexeme::Ident(_))
            }
            _ => false,
        };
        if !starts_chain {
            match tok.lexeme {
                Lexeme::Punct('(' | '[' | '{') => depth += 1,
                Lexeme::Punct(')' | ']' | '}') => depth -= 1,
                _ => {}
            }
            i += 1;
            continue;
        }

        let mut name = String::new();
        let mut j = i;
        if tok.is_punct('.') {
            name.push('.');
            j += 1;
        }
        let head = tokens[j].ident().unwrap_or_default().to_string();
        name.push_str(&head);
        j += 1;
        while j + 1 < tokens.len() && tokens[j].is_punct('.') {
            match tokens[j + 1].ident() {
                Some(part) => {
                    name.push('.');
                    name.push_str(part);
                    j += 2;
                }
                None => break,
            }
        }
        let next = tokens.get(j);
        let is_call = next.is_some_and(|t| t.is_punct('(') && !t.spaced);
        let is_keyword = KEYWORDS.contains(&head.as_str());
        if is_call && !is_keyword {
            out.calls.insert(name);
        } else if !is_call && !is_keyword && !name.starts_with('.') {
            let keyword_arg = depth > 0
                && j == i + 1
                && next.is_some_and(|t| t.is_punct('='))
                && !tokens.get(j + 1).is_some_and(|t| t.is_punct('='));
            if !keyword_arg {
                out.variables.insert(head);
            }
        }
        i = j;
    }
    out
}

/// Dotted call names: identifier chains directly followed by `(`. Calls on
/// an unnamed receiver (a call result, subscript or literal) are reported
/// as `.method`. String literal contents are never inspected.
pub fn extract_api_tokens(snippet: &str) -> BTreeSet<String> {
    extract(snippet).calls
}

/// Identifiers that are neither call heads, attribute names, keywords,
/// keyword-argument names nor literals.
pub fn extract_variables(snippet: &str) -> BTreeSet<String> {
    extract(snippet).variables
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    ApiCall,
    Variable,
}

impl TokenKind {
    pub fn extract(self, snippet: &str) -> BTreeSet<String> {
        match self {
            TokenKind::ApiCall => extract_api_tokens(snippet),
            TokenKind::Variable => extract_variables(snippet),
        }
    }
}

/// Share of reference tokens reproduced by one hypothesis, or `None` when
/// the reference has none.
pub fn instance_accuracy(hypothesis: &str, reference: &str, kind: TokenKind) -> Option<f64> {
    let want = kind.extract(reference);
    if want.is_empty() {
        return None;
    }
    let got = kind.extract(hypothesis);
    Some(want.intersection(&got).count() as f64 / want.len() as f64)
}

/// Mean per-instance accuracy over instances whose reference yields at
/// least one token. `None` when no reference does.
pub fn token_accuracy<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
    kind: TokenKind,
) -> Result<Option<f64>, MetricError> {
    check_aligned(hypotheses, references)?;
    let scores: Vec<f64> = hypotheses
        .iter()
        .zip(references)
        .filter_map(|(h, r)| instance_accuracy(h.as_ref(), r.as_ref(), kind))
        .collect();
    if scores.is_empty() {
        return Ok(None);
    }
    Ok(Some(scores.iter().sum::<f64>() / scores.len() as f64))
}

/// Number of snippets in `corpus` that call each API name.
pub fn api_usage_counts<S: AsRef<str>>(corpus: &[S]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for snippet in corpus {
        for api in extract_api_tokens(snippet.as_ref()) {
            *counts.entry(api).or_insert(0) += 1;
        }
    }
    counts
}

/// Instances ranked by the mean corpus frequency of the APIs their
/// reference calls, most frequent first; ties keep instance order.
/// Instances calling no API rank with frequency 0.
pub fn rank_by_api_frequency<R: AsRef<str>>(
    references: &[R],
    counts: &BTreeMap<String, u64>,
) -> Vec<(usize, f64)> {
    let mut ranked: Vec<(usize, f64)> = references
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let apis = extract_api_tokens(r.as_ref());
            let mean = if apis.is_empty() {
                0.0
            } else {
                apis.iter()
                    .map(|a| counts.get(a).copied().unwrap_or(0) as f64)
                    .sum::<f64>()
                    / apis.len() as f64
            };
            (i, mean)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitBleu {
    pub high_freq: f64,
    pub low_freq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySplit {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    /// BLEU per hypothesis set, in input order.
    pub scores: Vec<(String, SplitBleu)>,
}

/// Scores each named hypothesis set separately on the `split_size` test
/// instances with the most-used APIs and on the `split_size` with the
/// least-used ones. Usage counts come from `stats_corpus`.
pub fn frequency_split<R: AsRef<str>, S: AsRef<str>>(
    references: &[R],
    hyp_sets: &[(String, Vec<String>)],
    stats_corpus: &[S],
    split_size: usize,
) -> Result<FrequencySplit, MetricError> {
    if split_size == 0 {
        return Err(MetricError::EmptyCorpus);
    }
    if references.len() < 2 * split_size {
        return Err(MetricError::InsufficientInstances {
            needed: 2 * split_size,
            available: references.len(),
        });
    }
    let counts = api_usage_counts(stats_corpus);
    let ranked = rank_by_api_frequency(references, &counts);
    let high: Vec<usize> = ranked[..split_size].iter().map(|r| r.0).collect();
    let low: Vec<usize> = ranked[ranked.len() - split_size..]
        .iter()
        .map(|r| r.0)
        .collect();

    let pick = |idx: &[usize], items: &[&str]| -> Vec<String> {
        idx.iter().map(|&i| items[i].to_string()).collect()
    };
    let refs: Vec<&str> = references.iter().map(AsRef::as_ref).collect();
    let mut scores = Vec::new();
    for (name, hyps) in hyp_sets {
        check_aligned(hyps, references)?;
        let hyps: Vec<&str> = hyps.iter().map(String::as_str).collect();
        scores.push((
            name.clone(),
            SplitBleu {
                high_freq: corpus_bleu(&pick(&high, &hyps), &pick(&high, &refs))?,
                low_freq: corpus_bleu(&pick(&low, &hyps), &pick(&low, &refs))?,
            },
        ));
    }
    Ok(FrequencySplit { high, low, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub corpus_bleu: f64,
    pub api_token_accuracy: Option<f64>,
    pub var_token_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_bleu: Option<SplitBleu>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    pub index: usize,
    pub sentence_bleu: f64,
    pub api_accuracy: Option<f64>,
    pub var_accuracy: Option<f64>,
}

pub fn evaluate<H: AsRef<str>, R: AsRef<str>>(
    hypotheses: &[H],
    references: &[R],
) -> Result<(EvalReport, Vec<InstanceScore>), MetricError> {
    let corpus_bleu = corpus_bleu(hypotheses, references)?;
    let report = EvalReport {
        instances: references.len(),
        corpus_bleu,
        api_token_accuracy: token_accuracy(hypotheses, references, TokenKind::ApiCall)?,
        var_token_accuracy: token_accuracy(hypotheses, references, TokenKind::Variable)?,
        split_bleu: None,
    };
    let instances = hypotheses
        .iter()
        .zip(references)
        .enumerate()
        .map(|(index, (h, r))| InstanceScore {
            index,
            sentence_bleu: sentence_bleu(h.as_ref(), r.as_ref()),
            api_accuracy: instance_accuracy(h.as_ref(), r.as_ref(), TokenKind::ApiCall),
            var_accuracy: instance_accuracy(h.as_ref(), r.as_ref(), TokenKind::Variable),
        })
        .collect();
    Ok((report, instances))
}

pub fn instances_tsv(rows: &[InstanceScore]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    let mut out = String::from("index\tsentence_bleu\tapi_accuracy\tvar_accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{}\t{}\n",
            r.index,
            r.sentence_bleu,
            fmt(r.api_accuracy),
            fmt(r.var_accuracy)
        ));
    }
    out
}
