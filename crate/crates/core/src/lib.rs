//! Synthesis of NL-to-code training corpora from API reference documentation.
//!
//! The pipeline parses documented prototypes into emulated usages
//! ([`sigparse`]), pairs them with trimmed descriptions ([`docharvest`]),
//! re-weights them toward real developer queries with BM25 retrieval and
//! temperature smoothing ([`retrieval`], [`resample`]), assembles two-stage
//! training corpora ([`corpus`]) and scores generated code ([`evalmetrics`]).

pub mod corpus;
pub mod docharvest;
pub mod evalmetrics;
pub mod pair;
pub mod resample;
pub mod retrieval;
pub mod sigparse;

pub use pair::{NlCodePair, Source};
