//! Retrieval-driven re-sampling of documentation pairs.
//!
//! Every real-usage query retrieves its top-k documentation pairs; a pair's
//! frequency is the number of queries that retrieved it. Frequencies are
//! smoothed with a temperature, `P(y) ∝ freq(y)^(1/τ)`, and pairs are drawn
//! from the result with a seeded generator.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::pair::NlCodePair;
use crate::retrieval::{Bm25Index, Target};

/// Number of hits per query in the direct strategy.
pub const DIRECT_TOP_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResampleError {
    #[error("every frequency is zero; nothing to sample from")]
    AllZeroFrequencies,
    #[error("temperature must be >= 1, got {0}")]
    InvalidTemperature(f64),
    #[error("retrieval depth k must be >= 1")]
    InvalidDepth,
    #[error("index targets {index} but the plan targets {plan}")]
    TargetMismatch { index: Target, plan: Target },
    #[error("sampling needs a probability table; run smoothing first")]
    MissingProbabilities,
    #[error("pair {0} is in the distribution but not in the pair set")]
    UnknownPair(String),
}

/// Smoothing temperature. `Uniform` stands for τ = ∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Temperature {
    Finite(f64),
    Uniform,
}

impl Temperature {
    pub fn new(tau: f64) -> Result<Self, ResampleError> {
        if tau.is_infinite() && tau > 0.0 {
            Ok(Temperature::Uniform)
        } else if tau >= 1.0 {
            Ok(Temperature::Finite(tau))
        } else {
            Err(ResampleError::InvalidTemperature(tau))
        }
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Temperature::Finite(t) => write!(f, "{t}"),
            Temperature::Uniform => f.write_str("inf"),
        }
    }
}

impl FromStr for Temperature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "uniform" => Ok(Temperature::Uniform),
            other => {
                let tau: f64 = other
                    .parse()
                    .map_err(|_| format!("invalid temperature `{s}`"))?;
                Temperature::new(tau).map_err(|e| e.to_string())
            }
        }
    }
}

impl Serialize for Temperature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Temperature::Finite(t) => s.serialize_f64(*t),
            Temperature::Uniform => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Temperature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(t) => Temperature::new(t).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Dist,
    Direct,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dist => "dist",
            Strategy::Direct => "direct",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dist" => Ok(Strategy::Dist),
            "direct" => Ok(Strategy::Direct),
            other => Err(format!("unknown re-sampling strategy `{other}`")),
        }
    }
}

/// Retrieval frequency of every documentation pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqTable {
    pub counts: BTreeMap<String, u64>,
    pub total_queries: usize,
}

impl FreqTable {
    /// TSV with a header, most retrieved first, ties by pair id.
    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<(&String, &u64)> = self.counts.iter().collect();
        rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        let mut out = String::from("pair_id\tcount\n");
        for (id, count) in rows {
            out.push_str(&format!("{id}\t{count}\n"));
        }
        out
    }

    pub fn total_hits(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Probability of each documentation pair, keyed by pair id.
pub type Probabilities = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub k: usize,
    pub tau: Temperature,
    pub target: Target,
    pub strategy: Strategy,
    pub sample_size: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Probabilities>,
}

impl Default for ResamplePlan {
    fn default() -> Self {
        ResamplePlan {
            k: 1,
            tau: Temperature::Finite(2.0),
            target: Target::Code,
            strategy: Strategy::Dist,
            sample_size: 13_000,
            seed: 0,
            probabilities: None,
        }
    }
}

/// Ids of the top-k documentation pairs for each query, in query order.
fn retrieve_all<'a>(queries: &[NlCodePair], index: &'a Bm25Index, k: usize) -> Vec<Vec<&'a str>> {
    queries
        .par_iter()
        .map(|q| {
            index
                .search_refs(q.text_for(index.target), k)
                .into_iter()
                .map(|(id, _)| id)
                .collect()
        })
        .collect()
}

/// Counts, for every indexed pair, how many queries retrieve it in their
/// top `k`. Each (query, retrieved pair) event adds exactly one.
pub fn aggregate_freq(
    queries: &[NlCodePair],
    index: &Bm25Index,
    k: usize,
) -> Result<FreqTable, ResampleError> {
    if k == 0 {
        return Err(ResampleError::InvalidDepth);
    }
    let mut counts: BTreeMap<String, u64> =
        index.doc_ids().iter().map(|id| (id.clone(), 0)).collect();
    for hits in retrieve_all(queries, index, k) {
        for id in hits {
            *counts.get_mut(id).expect("hits come from the index") += 1;
        }
    }
    Ok(FreqTable {
        counts,
        total_queries: queries.len(),
    })
}

/// Temperature-smoothed distribution. Pairs never retrieved get zero
/// probability; the uniform limit spreads mass evenly over retrieved pairs.
pub fn smooth(freq: &FreqTable, tau: Temperature) -> Result<Probabilities, ResampleError> {
    if let Temperature::Finite(t) = tau {
        if t.is_nan() || t < 1.0 {
            return Err(ResampleError::InvalidTemperature(t));
        }
    }
    let weights: Vec<(&String, f64)> = freq
        .counts
        .iter()
        .map(|(id, &c)| {
            let w = match (c, tau) {
                (0, _) => 0.0,
                (_, Temperature::Uniform) => 1.0,
                (c, Temperature::Finite(t)) => (c as f64).powf(1.0 / t),
            };
            (id, w)
        })
        .collect();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    if total <= 0.0 {
        return Err(ResampleError::AllZeroFrequencies);
    }
    Ok(weights
        .into_iter()
        .map(|(id, w)| (id.clone(), w / total))
        .collect())
}

/// Draws `plan.sample_size` pairs i.i.d. with replacement from
/// `plan.probabilities`, in draw order.
pub fn sample_dist(
    plan: &ResamplePlan,
    api_pairs: &[NlCodePair],
) -> Result<Vec<NlCodePair>, ResampleError> {
    let probs = plan
        .probabilities
        .as_ref()
        .ok_or(ResampleError::MissingProbabilities)?;
    let by_id: HashMap<&str, &NlCodePair> =
        api_pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (id, &p) in probs {
        if p > 0.0 {
            let pair = by_id
                .get(id.as_str())
                .ok_or_else(|| ResampleError::UnknownPair(id.clone()))?;
            support.push(*pair);
            weights.push(p);
        }
    }
    let dist = WeightedIndex::new(&weights).map_err(|_| ResampleError::AllZeroFrequencies)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    Ok((0..plan.sample_size)
        .map(|_| support[dist.sample(&mut rng)].clone())
        .collect())
}

/// Concatenates every query's top-`k` documentation pairs, keeping
/// duplicates across queries.
pub fn sample_direct(
    queries: &[NlCodePair],
    index: &Bm25Index,
    api_pairs: &[NlCodePair],
    k: usize,
) -> Result<Vec<NlCodePair>, ResampleError> {
    if k == 0 {
        return Err(ResampleError::InvalidDepth);
    }
    let by_id: HashMap<&str, &NlCodePair> =
        api_pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let mut out = Vec::new();
    for hits in retrieve_all(queries, index, k) {
        for id in hits {
            let pair = by_id
                .get(id)
                .ok_or_else(|| ResampleError::UnknownPair(id.to_string()))?;
            out.push((*pair).clone());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ResampleOutcome {
    pub plan: ResamplePlan,
    pub freq: FreqTable,
    pub sampled: Vec<NlCodePair>,
}

/// Runs a plan end to end against an index over `api_pairs`.
pub fn run_plan(
    plan: &ResamplePlan,
    queries: &[NlCodePair],
    index: &Bm25Index,
    api_pairs: &[NlCodePair],
) -> Result<ResampleOutcome, ResampleError> {
    if index.target != plan.target {
        return Err(ResampleError::TargetMismatch {
            index: index.target,
            plan: plan.target,
        });
    }
    let freq = aggregate_freq(queries, index, plan.k)?;
    let mut plan = plan.clone();
    let sampled = match plan.strategy {
        Strategy::Dist => {
            plan.probabilities = Some(smooth(&freq, plan.tau)?);
            sample_dist(&plan, api_pairs)?
        }
        Strategy::Direct => sample_direct(queries, index, api_pairs, plan.k)?,
    };
    Ok(ResampleOutcome {
        plan,
        freq,
        sampled,
    })
}

/// Shannon entropy in nats.
pub fn entropy<'a>(probs: impl IntoIterator<Item = &'a f64>) -> f64 {
    probs
        .into_iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pair::Source;

    fn table(counts: &[u64]) -> FreqTable {
        FreqTable {
            counts: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("p{i}"), c))
                .collect(),
            total_queries: counts.iter().sum::<u64>() as usize,
        }
    }

    fn probs(freq: &[u64], tau: Temperature) -> Vec<f64> {
        smooth(&table(freq), tau).unwrap().into_values().collect()
    }

    #[test]
    fn proportional_at_unit_temperature() {
        assert_eq!(
            probs(&[2, 1, 1], Temperature::Finite(1.0)),
            [0.5, 0.25, 0.25]
        );
    }

    #[test]
    fn square_root_at_temperature_two() {
        let p = probs(&[4, 1], Temperature::Finite(2.0));
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn large_temperature_approaches_uniform_over_support() {
        let p = probs(&[5, 3, 2, 0], Temperature::Finite(1e9));
        for (got, want) in p.iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-6);
        }
        assert_eq!(p[3], 0.0);
        assert_eq!(
            probs(&[5, 3, 2, 0], Temperature::Uniform),
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]
        );
    }

    #[test]
    fn all_zero_is_an_error() {
        assert_eq!(
            smooth(&table(&[0, 0]), Temperature::Finite(1.0)),
            Err(ResampleError::AllZeroFrequencies)
        );
        assert!(smooth(&table(&[1]), Temperature::Finite(0.5)).is_err());
    }

    #[test]
    fn temperature_parsing() {
        assert_eq!("inf".parse::<Temperature>().unwrap(), Temperature::Uniform);
        assert_eq!(
            "2".parse::<Temperature>().unwrap(),
            Temperature::Finite(2.0)
        );
        assert!("0.5".parse::<Temperature>().is_err());
        let t: Temperature = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(t, Temperature::Uniform);
        let t: Temperature = serde_json::from_str("5").unwrap();
        assert_eq!(t, Temperature::Finite(5.0));
        assert_eq!(
            serde_json::to_string(&Temperature::Finite(2.0)).unwrap(),
            "2.0"
        );
    }

    fn api_pairs() -> Vec<NlCodePair> {
        [
            "json.loads(s)",
            "json.dumps(obj)",
            "os.listdir(path)",
            "random.choice(seq)",
        ]
        .iter()
        .map(|c| NlCodePair::new(format!("doc for {c}"), *c, Source::Api))
        .collect()
    }

    fn query(code: &str) -> NlCodePair {
        NlCodePair::new("q", code, Source::Annotated)
    }

    #[test]
    fn empty_queries_give_zero_counts() {
        let api = api_pairs();
        let index = Bm25Index::build(&api, Target::Code).unwrap();
        let freq = aggregate_freq(&[], &index, 1).unwrap();
        assert_eq!(freq.counts.len(), 4);
        assert!(freq.counts.values().all(|&c| c == 0));
    }

    #[test]
    fn same_hit_every_query() {
        let api = api_pairs();
        let index = Bm25Index::build(&api, Target::Code).unwrap();
        let queries = vec![query("json.loads(data)"); 7];
        let freq = aggregate_freq(&queries, &index, 1).unwrap();
        assert_eq!(freq.counts[&api[0].pair_id], 7);
        assert_eq!(freq.total_hits(), 7);
    }

    #[test]
    fn point_mass_always_draws_first() {
        let api = api_pairs();
        let mut probs: Probabilities = api.iter().map(|p| (p.pair_id.clone(), 0.0)).collect();
        probs.insert(api[2].pair_id.clone(), 1.0);
        let plan = ResamplePlan {
            sample_size: 50,
            probabilities: Some(probs),
            ..Default::default()
        };
        let drawn = sample_dist(&plan, &api).unwrap();
        assert_eq!(drawn.len(), 50);
        assert!(drawn.iter().all(|p| p.pair_id == api[2].pair_id));
    }

    #[test]
    fn sampling_requires_probabilities() {
        assert_eq!(
            sample_dist(&ResamplePlan::default(), &api_pairs()),
            Err(ResampleError::MissingProbabilities)
        );
    }

    #[test]
    fn direct_keeps_duplicates() {
        let api = api_pairs();
        let index = Bm25Index::build(&api, Target::Code).unwrap();
        let q = query("json.loads(os.listdir(path))");
        let one = sample_direct(std::slice::from_ref(&q), &index, &api, 5).unwrap();
        assert_eq!(one.len(), 3);
        let two = sample_direct(&[q.clone(), q], &index, &api, 5).unwrap();
        assert_eq!(two.len(), 6);
        assert_eq!(two[..3], two[3..]);
    }

    #[test]
    fn plan_target_must_match_index() {
        let api = api_pairs();
        let index = Bm25Index::build(&api, Target::Intent).unwrap();
        let plan = ResamplePlan::default();
        assert!(matches!(
            run_plan(&plan, &[query("x")], &index, &api),
            Err(ResampleError::TargetMismatch { .. })
        ));
    }

    #[test]
    fn tsv_is_sorted_by_count() {
        let tsv = table(&[1, 3, 3]).to_tsv();
        assert_eq!(tsv, "pair_id\tcount\np1\t3\np2\t3\np0\t1\n");
    }

    #[test]
    fn plan_json_fields() {
        let plan: ResamplePlan = serde_json::from_str(
            r#"{"k":1,"tau":2,"target":"code","strategy":"dist","sample_size":10,"seed":7}"#,
        )
        .unwrap();
        assert_eq!(plan.tau, Temperature::Finite(2.0));
        assert_eq!(plan.seed, 7);
        assert!(plan.probabilities.is_none());
    }
}
