//! Pair-file I/O, mined-pair selection and pre-train/fine-tune assembly.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pair::{pair_id, NlCodePair, Source};

/// Default number of mined pairs kept after confidence sorting.
pub const DEFAULT_MINED_TOP_K: usize = 100_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {malformed} of {total} records are malformed (first at line {first})")]
    TooManyMalformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
        first: usize,
    },
    #[error("mined pair {0} has no confidence score")]
    MissingConfidence(String),
    #[error("strategy mismatch: {0}")]
    StrategyMismatch(String),
    #[error("{count} held-out pairs leak into the pre-training corpus (e.g. {example})")]
    Leakage { count: usize, example: String },
    #[error("{0}")]
    EmptyCollection(String),
}

impl CorpusError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Records parsed from a JSONL (or JSON array) file, with 1-based line
/// numbers of the records that were skipped.
#[derive(Debug, Clone)]
pub struct Records<T> {
    pub records: Vec<T>,
    pub malformed: Vec<usize>,
    pub total: usize,
}

/// Largest tolerated share of malformed records.
pub const MALFORMED_LIMIT: f64 = 0.01;

/// Reads records one per line, or from a top-level JSON array. Records the
/// converter rejects are skipped and reported; more than 1% of them fails
/// the whole read.
pub fn read_records<T>(
    path: &Path,
    mut convert: impl FnMut(serde_json::Value) -> Result<T, String>,
) -> Result<Records<T>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Records {
        records: Vec::new(),
        malformed: Vec::new(),
        total: 0,
    };
    let mut handle = |line: usize, value: Result<serde_json::Value, String>| {
        out.total += 1;
        match value.and_then(&mut convert) {
            Ok(record) => out.records.push(record),
            Err(reason) => {
                warn!(
                    "{}:{line}: skipping malformed record: {reason}",
                    path.display()
                );
                out.malformed.push(line);
            }
        }
    };

    if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> = serde_json::from_str(&text)
            .map_err(|e| CorpusError::io(path, io::Error::new(io::ErrorKind::InvalidData, e)))?;
        for (i, value) in values.into_iter().enumerate() {
            handle(i + 1, Ok(value));
        }
    } else {
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            handle(i + 1, serde_json::from_str(line).map_err(|e| e.to_string()));
        }
    }

    if !out.malformed.is_empty() && out.malformed.len() as f64 > MALFORMED_LIMIT * out.total as f64
    {
        return Err(CorpusError::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: out.malformed.len(),
            total: out.total,
            first: out.malformed[0],
        });
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Records<T>, CorpusError> {
    read_records(path, |v| {
        serde_json::from_value(v).map_err(|e| e.to_string())
    })
}

/// Accepts both the pair schema and CoNaLa records.
#[derive(Debug, Deserialize)]
struct PairRecord {
    #[serde(default)]
    intent: Option<String>,
    #[serde(default)]
    rewritten_intent: Option<String>,
    snippet: String,
    #[serde(default, alias = "prob")]
    confidence: Option<f64>,
    #[serde(default)]
    pair_id: Option<String>,
}

fn convert_pair(value: serde_json::Value, source: Source) -> Result<NlCodePair, String> {
    let record: PairRecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let intent = record
        .rewritten_intent
        .filter(|s| !s.trim().is_empty())
        .or(record.intent)
        .filter(|s| !s.trim().is_empty())
        .ok_or("missing intent")?;
    if record.snippet.trim().is_empty() {
        return Err("empty snippet".into());
    }
    let confidence = match (source, record.confidence) {
        (Source::Mined, Some(c)) if !(0.0..=1.0).contains(&c) => {
            return Err(format!("confidence {c} outside [0, 1]"))
        }
        (Source::Mined, c) => c,
        _ => None,
    };
    let pair_id = record
        .pair_id
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| pair_id(&intent, &record.snippet));
    Ok(NlCodePair {
        intent,
        snippet: record.snippet,
        source,
        confidence,
        pair_id,
    })
}

#[derive(Debug, Clone)]
pub struct LoadedPairs {
    pub pairs: Vec<NlCodePair>,
    pub malformed_lines: Vec<usize>,
}

/// Loads a pair file, tagging every record with `source`. CoNaLa's
/// `rewritten_intent` wins over `intent` when present.
pub fn load_pairs(path: &Path, source: Source) -> Result<LoadedPairs, CorpusError> {
    let records = read_records(path, |v| convert_pair(v, source))?;
    Ok(LoadedPairs {
        pairs: records.records,
        malformed_lines: records.malformed,
    })
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).expect("records serialize to JSON");
        out.push(b'\n');
    }
    out
}

/// Writes through a temporary sibling file so a failed write never leaves a
/// partial output behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CorpusError::io(path, e));
    }
    Ok(())
}

pub fn write_pairs(path: &Path, pairs: &[NlCodePair]) -> Result<(), CorpusError> {
    write_atomic(path, &to_jsonl(pairs))
}

/// Sorts mined pairs by descending confidence (ties by pair id) and keeps
/// the first `top_k`.
pub fn select_top_mined(
    mined: &[NlCodePair],
    top_k: usize,
) -> Result<Vec<NlCodePair>, CorpusError> {
    let mut scored = Vec::with_capacity(mined.len());
    for pair in mined {
        let c = pair
            .confidence
            .ok_or_else(|| CorpusError::MissingConfidence(pair.pair_id.clone()))?;
        scored.push((c, pair));
    }
    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.pair_id.cmp(&b.1.pair_id))
    });
    Ok(scored
        .into_iter()
        .take(top_k)
        .map(|(_, p)| p.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub name: SplitName,
    pub pairs: Vec<NlCodePair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyLabel {
    Man,
    ManMine,
    ManMineApi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiSource {
    None,
    Raw,
    Direct,
    Dist,
}

macro_rules! snake_enum_str {
    ($ty:ty { $($variant:ident => $s:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok(<$ty>::$variant),)+
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
    };
}

snake_enum_str!(StrategyLabel { Man => "man", ManMine => "man_mine", ManMineApi => "man_mine_api" });
snake_enum_str!(ApiSource { None => "none", Raw => "raw", Direct => "direct", Dist => "dist" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataStrategy {
    pub label: StrategyLabel,
    pub mined_top_k: usize,
    pub api_source: ApiSource,
}

impl DataStrategy {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let uses_api = self.label == StrategyLabel::ManMineApi;
        if uses_api != (self.api_source != ApiSource::None) {
            return Err(CorpusError::StrategyMismatch(format!(
                "label {} cannot take api source {}",
                self.label, self.api_source
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub mined: usize,
    pub api: usize,
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub pretrain: Vec<NlCodePair>,
    pub finetune: Vec<NlCodePair>,
    pub components: ComponentCounts,
}

/// Builds the two-stage corpora. The pre-training corpus is the selected
/// mined pairs followed by the API pairs; fine-tuning always uses the
/// annotated training split.
pub fn assemble(
    strategy: &DataStrategy,
    ann_train: &[NlCodePair],
    mined: &[NlCodePair],
    api_pairs: Option<&[NlCodePair]>,
) -> Result<Assembled, CorpusError> {
    strategy.validate()?;
    let mut components = ComponentCounts::default();
    let mut pretrain = Vec::new();
    match strategy.label {
        StrategyLabel::Man => {
            if api_pairs.is_some() {
                return Err(CorpusError::StrategyMismatch(
                    "man takes no api pairs".into(),
                ));
            }
        }
        StrategyLabel::ManMine | StrategyLabel::ManMineApi => {
            pretrain = select_top_mined(mined, strategy.mined_top_k)?;
            components.mined = pretrain.len();
            match (strategy.label, api_pairs) {
                (StrategyLabel::ManMineApi, Some(api)) => {
                    components.api = api.len();
                    pretrain.extend_from_slice(api);
                }
                (StrategyLabel::ManMineApi, None) => {
                    return Err(CorpusError::StrategyMismatch(
                        "man_mine_api needs api pairs".into(),
                    ))
                }
                (_, Some(_)) => {
                    return Err(CorpusError::StrategyMismatch(
                        "man_mine takes no api pairs".into(),
                    ))
                }
                _ => {}
            }
        }
    }
    Ok(Assembled {
        pretrain,
        finetune: ann_train.to_vec(),
        components,
    })
}

/// Fails if any held-out pair id appears in the pre-training corpus.
pub fn check_leakage(
    pretrain: &[NlCodePair],
    held_out: &[&CorpusSplit],
) -> Result<(), CorpusError> {
    let ids: HashSet<&str> = held_out
        .iter()
        .flat_map(|s| s.pairs.iter().map(|p| p.pair_id.as_str()))
        .collect();
    let leaked: Vec<&NlCodePair> = pretrain
        .iter()
        .filter(|p| ids.contains(p.pair_id.as_str()))
        .collect();
    match leaked.first() {
        None => Ok(()),
        Some(first) => Err(CorpusError::Leakage {
            count: leaked.len(),
            example: first.pair_id.clone(),
        }),
    }
}
