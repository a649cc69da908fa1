//! Parsing of API reference prototypes and enumeration of emulated call sites.
//!
//! Prototypes follow the notation of library reference pages:
//! `collections.deque([iterable[, maxlen]])` marks optional positional
//! arguments with (possibly nested) square brackets and
//! `heapq.nlargest(n, iterable, key=None)` marks keyword arguments with a
//! default literal.

use std::collections::BTreeSet;
use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of usages kept per signature.
pub const MAX_USAGES: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SignatureError {
    #[error("malformed signature `{text}`: {reason}")]
    MalformedSignature { text: String, reason: String },
    #[error("{kind} `{name}` needs a class name")]
    MissingClassName { kind: EntryKind, name: String },
}

fn malformed(text: &str, reason: impl Into<String>) -> SignatureError {
    SignatureError::MalformedSignature {
        text: text.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgKind {
    Required,
    OptionalPositional,
    Keyword,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Function,
    Constructor,
    Method,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Function => "function",
            EntryKind::Constructor => "constructor",
            EntryKind::Method => "method",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgSpec {
    pub name: String,
    pub kind: ArgKind,
    /// Default literal, present only for keyword arguments.
    pub default_text: Option<String>,
    /// 0-based index in signature order.
    pub position: usize,
    /// Index of the bracket group that introduced an optional positional
    /// argument. Names sharing a group are supplied together.
    pub group: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub qualified_name: String,
    pub entry_kind: EntryKind,
    pub args: Vec<ArgSpec>,
    pub class_name: Option<String>,
}

impl Signature {
    pub fn required(&self) -> impl Iterator<Item = &ArgSpec> {
        self.args_of(ArgKind::Required)
    }

    pub fn optional_positional(&self) -> impl Iterator<Item = &ArgSpec> {
        self.args_of(ArgKind::OptionalPositional)
    }

    pub fn keywords(&self) -> impl Iterator<Item = &ArgSpec> {
        self.args_of(ArgKind::Keyword)
    }

    fn args_of(&self, kind: ArgKind) -> impl Iterator<Item = &ArgSpec> {
        self.args.iter().filter(move |a| a.kind == kind)
    }

    /// Number of distinct bracket groups among the optional positionals.
    pub fn optional_group_count(&self) -> usize {
        self.optional_positional()
            .filter_map(|a| a.group)
            .collect::<BTreeSet<_>>()
            .len()
    }

    /// Last dotted component of the qualified name.
    pub fn short_name(&self) -> &str {
        self.qualified_name
            .rsplit('.')
            .next()
            .unwrap_or(&self.qualified_name)
    }
}

/// One emulated call of a signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UsageSnippet {
    /// Bare call expression `qualified_name(args)`.
    pub code: String,
    /// Names of the supplied arguments, in signature order.
    pub included_args: Vec<String>,
    /// Number of non-required arguments supplied.
    pub optional_count: usize,
}

pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn is_dotted_identifier(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(is_identifier)
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Open,
    Close,
    Comma,
    /// A raw argument item, `name` or `name=default`.
    Item(String),
}

/// Splits the text between the outer parentheses into bracket markers,
/// commas and argument items. Default literals may themselves contain
/// brackets, parentheses, braces and quoted strings.
fn lex_args(text: &str, inner: &str) -> Result<Vec<Lexeme>, SignatureError> {
    let mut out = Vec::new();
    let mut chars = inner.chars();
    let mut current = String::new();
    let mut in_default = false;
    let mut nest: Vec<char> = Vec::new();

    let flush = |current: &mut String, out: &mut Vec<Lexeme>| {
        let item = current.trim().to_string();
        if !item.is_empty() {
            out.push(Lexeme::Item(item));
        }
        current.clear();
    };

    while let Some(c) = chars.next() {
        if in_default {
            match c {
                '\'' | '"' => {
                    current.push(c);
                    let mut closed = false;
                    while let Some(q) = chars.next() {
                        current.push(q);
                        if q == '\\' {
                            if let Some(esc) = chars.next() {
                                current.push(esc);
                            }
                        } else if q == c {
                            closed = true;
                            break;
                        }
                    }
                    if !closed {
                        return Err(malformed(text, "unterminated string literal"));
                    }
                    continue;
                }
                '(' | '[' | '{' => {
                    nest.push(c);
                    current.push(c);
                    continue;
                }
                ')' | '}' => {
                    let want = if c == ')' { '(' } else { '{' };
                    if nest.pop() != Some(want) {
                        return Err(malformed(text, "unbalanced delimiters in default value"));
                    }
                    current.push(c);
                    continue;
                }
                ']' if !nest.is_empty() => {
                    if nest.pop() != Some('[') {
                        return Err(malformed(text, "unbalanced delimiters in default value"));
                    }
                    current.push(c);
                    continue;
                }
                ',' if !nest.is_empty() => {
                    current.push(c);
                    continue;
                }
                ']' | ',' => {
                    in_default = false;
                }
                _ => {
                    current.push(c);
                    continue;
                }
            }
        }
        match c {
            '[' => {
                flush(&mut current, &mut out);
                out.push(Lexeme::Open);
            }
            ']' => {
                flush(&mut current, &mut out);
                out.push(Lexeme::Close);
            }
            ',' => {
                flush(&mut current, &mut out);
                out.push(Lexeme::Comma);
            }
            '=' => {
                current.push(c);
                in_default = true;
            }
            '(' | ')' | '{' | '}' | '\'' | '"' => {
                return Err(malformed(
                    text,
                    format!("unexpected `{c}` in argument list"),
                ));
            }
            _ => current.push(c),
        }
    }
    if in_default && !nest.is_empty() {
        return Err(malformed(text, "unbalanced delimiters in default value"));
    }
    flush(&mut current, &mut out);
    Ok(out)
}

/// Parses a prototype such as `collections.deque([iterable[, maxlen]])`.
///
/// Variadic markers (`*args`, `**kwargs`, bare `*` and `/`, `...`) are
/// dropped with a warning.
pub fn parse_signature(
    text: &str,
    entry_kind: EntryKind,
    class_name: Option<&str>,
) -> Result<Signature, SignatureError> {
    let trimmed = text.trim();
    let open = trimmed
        .find('(')
        .ok_or_else(|| malformed(text, "missing `(`"))?;
    if !trimmed.ends_with(')') {
        return Err(malformed(text, "missing closing `)`"));
    }
    let qualified_name = trimmed[..open].trim();
    if !is_dotted_identifier(qualified_name) {
        return Err(malformed(text, format!("invalid name `{qualified_name}`")));
    }
    let inner = &trimmed[open + 1..trimmed.len() - 1];
    let lexemes = lex_args(text, inner)?;

    let mut args: Vec<ArgSpec> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut depth = 0usize;
    let mut next_group = 0usize;
    let mut open_group: Option<usize> = None;
    // Whether the previous lexeme allows an empty slot (start, after a
    // bracket) so that `[, maxlen]` is accepted but `a,,b` is not.
    let mut last_was_comma = false;
    let mut at_start = true;

    for lexeme in &lexemes {
        match lexeme {
            Lexeme::Open => {
                depth += 1;
                open_group = Some(next_group);
                next_group += 1;
                last_was_comma = false;
            }
            Lexeme::Close => {
                if depth == 0 {
                    return Err(malformed(text, "unbalanced `]`"));
                }
                depth -= 1;
                // Names after an inner group closes start a new truncation point.
                open_group = (depth > 0).then(|| {
                    next_group += 1;
                    next_group - 1
                });
                last_was_comma = false;
            }
            Lexeme::Comma => {
                if last_was_comma || at_start {
                    return Err(malformed(text, "empty argument name"));
                }
                last_was_comma = true;
            }
            Lexeme::Item(item) => {
                last_was_comma = false;
                let (name, default) = match item.split_once('=') {
                    Some((n, d)) => (n.trim(), Some(d.trim().to_string())),
                    None => (item.as_str(), None),
                };
                if name == "*" || name == "/" || name == "..." || name.starts_with('*') {
                    warn!("dropping variadic marker `{name}` from `{text}`");
                    at_start = false;
                    continue;
                }
                if name.is_empty() {
                    return Err(malformed(text, "empty argument name"));
                }
                if !is_identifier(name) {
                    return Err(malformed(text, format!("invalid argument name `{name}`")));
                }
                if !seen.insert(name.to_string()) {
                    return Err(malformed(text, format!("duplicate argument `{name}`")));
                }
                let kind = match (&default, depth) {
                    (Some(d), _) if d.is_empty() => {
                        return Err(malformed(text, format!("empty default for `{name}`")))
                    }
                    (Some(_), _) => ArgKind::Keyword,
                    (None, 0) => ArgKind::Required,
                    (None, _) => ArgKind::OptionalPositional,
                };
                if let Some(prev) = args.last() {
                    let out_of_order = match kind {
                        ArgKind::Required => prev.kind != ArgKind::Required,
                        ArgKind::OptionalPositional => prev.kind == ArgKind::Keyword,
                        ArgKind::Keyword => false,
                    };
                    if out_of_order {
                        return Err(malformed(
                            text,
                            format!("`{name}` follows an optional argument"),
                        ));
                    }
                }
                let group = (kind == ArgKind::OptionalPositional)
                    .then(|| open_group.expect("optional positional inside a bracket group"));
                args.push(ArgSpec {
                    name: name.to_string(),
                    kind,
                    default_text: default,
                    position: args.len(),
                    group,
                });
            }
        }
        at_start = false;
    }
    if depth != 0 {
        return Err(malformed(text, "unbalanced `[`"));
    }
    if last_was_comma {
        return Err(malformed(text, "empty argument name"));
    }

    let class_name = match entry_kind {
        EntryKind::Function => class_name.map(str::to_string),
        EntryKind::Constructor => {
            // The class of a constructor is the last dotted component.
            Some(
                qualified_name
                    .rsplit('.')
                    .next()
                    .unwrap_or(qualified_name)
                    .to_string(),
            )
        }
        EntryKind::Method => class_name.map(|c| c.rsplit('.').next().unwrap_or(c).to_string()),
    };

    Ok(Signature {
        qualified_name: qualified_name.to_string(),
        entry_kind,
        args,
        class_name,
    })
}

fn format_args<'a>(sig: &Signature, names: impl IntoIterator<Item = &'a str>) -> String {
    names
        .into_iter()
        .map(|name| {
            let spec = sig.args.iter().find(|a| a.name == name);
            match spec {
                Some(a) if a.kind == ArgKind::Keyword => format!("{name}={name}"),
                _ => name.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn make_usage(sig: &Signature, included: Vec<&ArgSpec>) -> UsageSnippet {
    let optional_count = included
        .iter()
        .filter(|a| a.kind != ArgKind::Required)
        .count();
    let names: Vec<String> = included.iter().map(|a| a.name.clone()).collect();
    let code = format!(
        "{}({})",
        sig.qualified_name,
        format_args(sig, names.iter().map(String::as_str))
    );
    UsageSnippet {
        code,
        included_args: names,
        optional_count,
    }
}

/// Visits every size-`size` subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, size: usize, mut visit: impl FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        visit(&idx);
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - size {
                break;
            }
            if i == 0 {
                return;
            }
        }
        if idx[i] == i + n - size {
            return;
        }
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Enumerates emulated usages: every prefix truncation of the optional
/// positional groups crossed with every subset of keyword arguments, keeping
/// the [`MAX_USAGES`] usages with the fewest optional arguments. Ties are
/// broken by the lexicographic order of the included argument names.
pub fn enumerate_usages(sig: &Signature) -> Vec<UsageSnippet> {
    let required: Vec<&ArgSpec> = sig.required().collect();
    let keywords: Vec<&ArgSpec> = sig.keywords().collect();

    // Positional variants: taking the first j groups, j = 0..=groups.
    let mut group_ids: Vec<usize> = sig.optional_positional().filter_map(|a| a.group).collect();
    group_ids.dedup();
    let positional_variants: Vec<Vec<&ArgSpec>> = (0..=group_ids.len())
        .map(|j| {
            let allowed = &group_ids[..j];
            sig.optional_positional()
                .filter(|a| a.group.is_some_and(|g| allowed.contains(&g)))
                .collect()
        })
        .collect();

    let max_optional = sig.args.len() - required.len();
    let mut out: Vec<UsageSnippet> = Vec::new();
    let mut seen = BTreeSet::new();

    // Walk optional-argument counts upward so the cap never requires
    // materialising all 2^q keyword subsets.
    for count in 0..=max_optional {
        let mut level: Vec<UsageSnippet> = Vec::new();
        for variant in &positional_variants {
            if variant.len() > count {
                continue;
            }
            for_each_combination(keywords.len(), count - variant.len(), |pick| {
                let mut included: Vec<&ArgSpec> = required.clone();
                included.extend(variant.iter().copied());
                included.extend(pick.iter().map(|&i| keywords[i]));
                included.sort_by_key(|a| a.position);
                level.push(make_usage(sig, included));
            });
        }
        level.sort_by(|a, b| a.included_args.cmp(&b.included_args));
        for usage in level {
            if out.len() == MAX_USAGES {
                break;
            }
            if seen.insert(usage.code.clone()) {
                out.push(usage);
            }
        }
        if out.len() == MAX_USAGES {
            break;
        }
    }
    out
}

/// Heuristic variable holding an instance of `class_name`: its first letter,
/// lower-cased, with a `0` suffix when that collides with an argument name.
pub fn instance_variable(sig: &Signature) -> Result<String, SignatureError> {
    let class_name = sig
        .class_name
        .as_deref()
        .ok_or_else(|| SignatureError::MissingClassName {
            kind: sig.entry_kind,
            name: sig.qualified_name.clone(),
        })?;
    let mut var: String = class_name
        .chars()
        .find(|c| c.is_alphabetic())
        .map(|c| c.to_lowercase().collect())
        .unwrap_or_else(|| "obj".to_string());
    if sig.args.iter().any(|a| a.name == var) {
        var.push('0');
    }
    Ok(var)
}

/// Realizes a usage as a line of code according to the entry kind.
pub fn render_usage(sig: &Signature, usage: &UsageSnippet) -> Result<String, SignatureError> {
    let args = format_args(sig, usage.included_args.iter().map(String::as_str));
    match sig.entry_kind {
        EntryKind::Function => Ok(format!("{}({args})", sig.qualified_name)),
        EntryKind::Constructor => {
            let var = instance_variable(sig)?;
            Ok(format!("{var} = {}({args})", sig.qualified_name))
        }
        EntryKind::Method => {
            let var = instance_variable(sig)?;
            Ok(format!("{var}.{}({args})", sig.short_name()))
        }
    }
}
