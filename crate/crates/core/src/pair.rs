//! The NL-code pair, the unit every stage of the pipeline reads and writes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Annotated,
    Mined,
    Api,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Annotated => "annotated",
            Source::Mined => "mined",
            Source::Api => "api",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "annotated" => Ok(Source::Annotated),
            "mined" => Ok(Source::Mined),
            "api" => Ok(Source::Api),
            other => Err(format!("unknown pair source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlCodePair {
    pub intent: String,
    pub snippet: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    pub pair_id: String,
}

impl NlCodePair {
    pub fn new(intent: impl Into<String>, snippet: impl Into<String>, source: Source) -> Self {
        let intent = intent.into();
        let snippet = snippet.into();
        let pair_id = pair_id(&intent, &snippet);
        NlCodePair {
            intent,
            snippet,
            source,
            confidence: None,
            pair_id,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    /// The text a retrieval target looks at.
    pub fn text_for(&self, target: crate::retrieval::Target) -> &str {
        match target {
            crate::retrieval::Target::Intent => &self.intent,
            crate::retrieval::Target::Code => &self.snippet,
        }
    }
}

/// Content hash of a pair: first 128 bits of SHA-256 over
/// `intent NUL snippet`, hex encoded.
pub fn pair_id(intent: &str, snippet: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(intent.as_bytes());
    hasher.update([0u8]);
    hasher.update(snippet.as_bytes());
    let digest = hasher.finalize();
    hex::encode(&digest[..16])
}

/// Hex SHA-256 of arbitrary bytes, used for manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_id_is_deterministic_and_content_sensitive() {
        let a = NlCodePair::new("open a file", "open(f)", Source::Api);
        let b = NlCodePair::new("open a file", "open(f)", Source::Mined);
        assert_eq!(a.pair_id, b.pair_id);
        assert_eq!(a.pair_id.len(), 32);
        assert_ne!(pair_id("ab", "c"), pair_id("a", "bc"));
    }

    #[test]
    fn confidence_is_omitted_when_absent() {
        let p = NlCodePair::new("x", "y", Source::Api);
        let json = serde_json::to_string(&p).unwrap();
        assert!(!json.contains("confidence"));
        assert!(json.contains("\"source\":\"api\""));
    }
}
