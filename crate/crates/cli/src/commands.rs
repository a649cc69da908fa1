//! One function per subcommand. Every command stages its outputs in memory,
//! then writes them together with a manifest of content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use apiknow::corpus::{
    self, assemble as assemble_corpora, check_leakage, load_pairs, select_top_mined, write_atomic,
    ApiSource, CorpusError, CorpusSplit, DataStrategy, SplitName, StrategyLabel,
};
use apiknow::docharvest::{harvest as harvest_docs, read_doc_dump};
use apiknow::evalmetrics::{evaluate, extract_api_tokens, frequency_split, instances_tsv};
use apiknow::pair::content_hash;
use apiknow::resample::{entropy, run_plan, ResampleError, ResamplePlan};
use apiknow::retrieval::{Bm25Index, Target};
use apiknow::{NlCodePair, Source};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Mode, PipelineConfig};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code: EXIT_DATA,
            error: error.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

pub const API_PAIRS: &str = "api_pairs.jsonl";

fn index_file(target: Target) -> String {
    format!("index_{target}.json")
}

fn sampled_file(mode: Mode) -> String {
    format!("api_sampled_{mode}.jsonl")
}

#[derive(Serialize)]
struct InputRecord {
    file: String,
    sha256: String,
}

/// Provenance record written next to a command's outputs. Holds no paths
/// outside the output directory and no timestamps, so reruns are
/// byte-identical.
#[derive(Serialize)]
struct Manifest {
    command: &'static str,
    settings: Value,
    inputs: BTreeMap<String, InputRecord>,
    outputs: BTreeMap<String, String>,
    counts: BTreeMap<String, Value>,
}

struct Staged {
    command: &'static str,
    out_dir: PathBuf,
    settings: Value,
    inputs: BTreeMap<String, InputRecord>,
    files: Vec<(String, Vec<u8>)>,
    counts: BTreeMap<String, Value>,
}

impl Staged {
    fn new(command: &'static str, config: &PipelineConfig, settings: Value) -> Self {
        Staged {
            command,
            out_dir: config.out_dir(),
            settings,
            inputs: BTreeMap::new(),
            files: Vec::new(),
            counts: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<(), Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::data(CorpusError::io(path, e)))?;
        let file = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.inputs.insert(
            role.to_string(),
            InputRecord {
                file,
                sha256: content_hash(&bytes),
            },
        );
        Ok(())
    }

    fn file(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn count(&mut self, key: &str, value: impl Into<Value>) {
        self.counts.insert(key.to_string(), value.into());
    }

    /// Writes every staged file and the manifest. On failure the files
    /// already written are removed again.
    fn commit(self) -> CmdResult {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Failure::data(CorpusError::io(&self.out_dir, e)))?;
        let manifest = Manifest {
            command: self.command,
            settings: self.settings,
            inputs: self.inputs,
            outputs: self
                .files
                .iter()
                .map(|(n, b)| (n.clone(), content_hash(b)))
                .collect(),
            counts: self.counts,
        };
        let mut manifest_bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        manifest_bytes.push(b'\n');
        let manifest_name = format!("{}.manifest.json", self.command);

        let mut written: Vec<PathBuf> = Vec::new();
        for (name, bytes) in self
            .files
            .iter()
            .chain(std::iter::once(&(manifest_name, manifest_bytes)))
        {
            let path = self.out_dir.join(name);
            if let Err(e) = write_atomic(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(Failure::data(e));
            }
            info!("wrote {}", path.display());
            written.push(path);
        }
        Ok(())
    }
}

fn load(path: &Path, source: Source) -> Result<Vec<NlCodePair>, Failure> {
    let loaded = load_pairs(path, source).map_err(Failure::data)?;
    if !loaded.malformed_lines.is_empty() {
        warn!(
            "{}: skipped malformed lines {:?}",
            path.display(),
            loaded.malformed_lines
        );
    }
    Ok(loaded.pairs)
}

fn required_output(
    config: &PipelineConfig,
    name: &str,
    producer: &str,
) -> Result<PathBuf, Failure> {
    let path = config.out_dir().join(name);
    if !path.exists() {
        return Err(Failure::usage(anyhow!(
            "{} not found; run `apiknow {producer}` first",
            path.display()
        )));
    }
    Ok(path)
}

pub fn harvest(config: &PipelineConfig) -> CmdResult {
    let dump = config
        .require("doc_dump", &config.paths.doc_dump)
        .map_err(Failure::usage)?;
    let entries = read_doc_dump(dump).map_err(Failure::data)?;
    if entries.is_empty() {
        return Err(Failure::data(CorpusError::EmptyCollection(format!(
            "EmptyCollection: documentation dump {} has no entries",
            dump.display()
        ))));
    }
    let out = harvest_docs(&entries);
    if out.pairs.is_empty() {
        return Err(Failure::data(CorpusError::EmptyCollection(
            "EmptyCollection: no entry produced a pair".into(),
        )));
    }

    let mut staged = Staged::new("harvest", config, json!({}));
    staged.input("doc_dump", dump)?;
    staged.count("entries_read", out.stats.entries_read);
    staged.count("entries_skipped", out.stats.entries_skipped);
    staged.count("pairs_emitted", out.stats.pairs_emitted);
    staged.count("distinct", out.stats.distinct);
    let mut stats = serde_json::to_vec_pretty(&out.stats).expect("stats serialize");
    stats.push(b'\n');
    staged.file(API_PAIRS, corpus::to_jsonl(&out.pairs));
    staged.file("harvest_stats.json", stats);
    staged.commit()
}

pub fn index(config: &PipelineConfig) -> CmdResult {
    let target = config.target();
    let pairs_path = required_output(config, API_PAIRS, "harvest")?;
    let pairs = load(&pairs_path, Source::Api)?;
    let index = Bm25Index::build(&pairs, target).map_err(Failure::data)?;

    let mut staged = Staged::new("index", config, json!({ "target": target }));
    staged.input("api_pairs", &pairs_path)?;
    staged.count("documents", index.doc_count());
    staged.count("terms", index.postings().len());
    staged.file(index_file(target), index.to_json());
    staged.commit()
}

/// Reuses the saved index when it covers exactly the given pairs.
fn index_for(config: &PipelineConfig, pairs: &[NlCodePair]) -> Result<Bm25Index, Failure> {
    let target = config.target();
    let path = config.out_dir().join(index_file(target));
    if path.exists() {
        let saved = Bm25Index::load(&path).map_err(Failure::data)?;
        let mut ids: Vec<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        ids.sort_unstable();
        if saved
            .doc_ids()
            .iter()
            .map(String::as_str)
            .eq(ids.iter().copied())
        {
            return Ok(saved);
        }
        warn!("{} is stale; rebuilding", path.display());
    }
    Bm25Index::build(pairs, target).map_err(Failure::data)
}

pub fn resample(config: &PipelineConfig) -> CmdResult {
    let mode = config.mode();
    let pairs_path = required_output(config, API_PAIRS, "harvest")?;
    let api_pairs = load(&pairs_path, Source::Api)?;

    let Some(strategy) = mode.resample_strategy() else {
        let mut staged = Staged::new("resample", config, json!({ "strategy": mode }));
        staged.input("api_pairs", &pairs_path)?;
        staged.count("sampled", api_pairs.len());
        staged.file(sampled_file(mode), corpus::to_jsonl(&api_pairs));
        return staged.commit();
    };

    let train_path = config
        .require("train", &config.paths.train)
        .map_err(Failure::usage)?;
    let mut queries = load(train_path, Source::Annotated)?;
    let mined_path = match &config.paths.mined {
        Some(_) => Some(
            config
                .require("mined", &config.paths.mined)
                .map_err(Failure::usage)?,
        ),
        None => None,
    };
    if let Some(path) = mined_path {
        let mined = load(path, Source::Mined)?;
        queries.extend(select_top_mined(&mined, config.mined_top_k()).map_err(Failure::data)?);
    }

    let plan = ResamplePlan {
        k: config.k(),
        tau: config.tau(),
        target: config.target(),
        strategy,
        sample_size: config.plan.sample_size.unwrap_or(api_pairs.len()),
        seed: config.seed(),
        probabilities: None,
    };
    let index = index_for(config, &api_pairs)?;
    let outcome = run_plan(&plan, &queries, &index, &api_pairs).map_err(|e| match e {
        ResampleError::AllZeroFrequencies => Failure::data(anyhow!(
            "{e}: none of the {} queries retrieved a documentation pair",
            queries.len()
        )),
        ResampleError::InvalidTemperature(_) | ResampleError::InvalidDepth => Failure::usage(e),
        _ => Failure::data(e),
    })?;

    let settings = json!({
        "k": plan.k,
        "tau": plan.tau,
        "target": plan.target,
        "strategy": mode,
        "sample_size": plan.sample_size,
        "seed": plan.seed,
        "mined_top_k": config.mined_top_k(),
    });
    let mut staged = Staged::new("resample", config, settings);
    staged.input("api_pairs", &pairs_path)?;
    staged.input("train", train_path)?;
    if let Some(path) = mined_path {
        staged.input("mined", path)?;
    }
    staged.count("queries", queries.len());
    staged.count("retrieval_hits", outcome.freq.total_hits());
    staged.count("sampled", outcome.sampled.len());
    if let Some(probs) = &outcome.plan.probabilities {
        staged.count("support", probs.values().filter(|&&p| p > 0.0).count());
        staged.count("entropy", entropy(probs.values()));
    }
    let mut plan_bytes = serde_json::to_vec_pretty(&outcome.plan).expect("plan serializes");
    plan_bytes.push(b'\n');
    staged.file(sampled_file(mode), corpus::to_jsonl(&outcome.sampled));
    staged.file("freq.tsv", outcome.freq.to_tsv().into_bytes());
    staged.file(format!("resample_plan_{mode}.json"), plan_bytes);
    staged.commit()
}

pub fn assemble(config: &PipelineConfig) -> CmdResult {
    let strategy = DataStrategy {
        label: config.label(),
        mined_top_k: config.mined_top_k(),
        api_source: config.api_source(),
    };
    strategy.validate().map_err(Failure::usage)?;

    let mut staged = Staged::new(
        "assemble",
        config,
        serde_json::to_value(strategy).expect("strategy serializes"),
    );
    let train_path = config
        .require("train", &config.paths.train)
        .map_err(Failure::usage)?;
    let train = load(train_path, Source::Annotated)?;
    staged.input("train", train_path)?;

    let mined = if strategy.label == StrategyLabel::Man {
        Vec::new()
    } else {
        let path = config
            .require("mined", &config.paths.mined)
            .map_err(Failure::usage)?;
        staged.input("mined", path)?;
        load(path, Source::Mined)?
    };

    let api = match strategy.api_source {
        ApiSource::None => None,
        ApiSource::Raw => Some(required_output(config, API_PAIRS, "harvest")?),
        ApiSource::Dist => Some(required_output(
            config,
            &sampled_file(Mode::Dist),
            "resample",
        )?),
        ApiSource::Direct => Some(required_output(
            config,
            &sampled_file(Mode::Direct),
            "resample",
        )?),
    };
    let api_pairs = match &api {
        Some(path) => {
            staged.input("api_pairs", path)?;
            Some(load(path, Source::Api)?)
        }
        None => None,
    };

    let assembled =
        assemble_corpora(&strategy, &train, &mined, api_pairs.as_deref()).map_err(|e| match e {
            CorpusError::StrategyMismatch(_) => Failure::usage(e),
            other => Failure::data(other),
        })?;

    let mut held_out = Vec::new();
    for (role, name, path) in [
        ("dev", SplitName::Dev, &config.paths.dev),
        ("test", SplitName::Test, &config.paths.test),
    ] {
        if path.is_some() {
            let path = config.require(role, path).map_err(Failure::usage)?;
            staged.input(role, path)?;
            held_out.push(CorpusSplit {
                name,
                pairs: load(path, Source::Annotated)?,
            });
        }
    }
    let held_out_refs: Vec<&CorpusSplit> = held_out.iter().collect();
    check_leakage(&assembled.pretrain, &held_out_refs).map_err(Failure::data)?;

    staged.count("pretrain_count", assembled.pretrain.len());
    staged.count("finetune_count", assembled.finetune.len());
    staged.count("mined_count", assembled.components.mined);
    staged.count("api_count", assembled.components.api);
    staged.file("pretrain.jsonl", corpus::to_jsonl(&assembled.pretrain));
    staged.file("finetune.jsonl", corpus::to_jsonl(&assembled.finetune));
    staged.commit()
}

pub fn eval(config: &PipelineConfig) -> CmdResult {
    let hyp_path = config
        .require("hypotheses", &config.paths.hypotheses)
        .map_err(Failure::usage)?;
    let test_path = config
        .require("test", &config.paths.test)
        .map_err(Failure::usage)?;
    let hyp_text = fs::read_to_string(hyp_path)
        .with_context(|| format!("cannot read {}", hyp_path.display()))
        .map_err(Failure::data)?;
    let hypotheses: Vec<String> = hyp_text.lines().map(str::to_string).collect();
    let references: Vec<String> = load(test_path, Source::Annotated)?
        .into_iter()
        .map(|p| p.snippet)
        .collect();

    let (mut report, rows) = evaluate(&hypotheses, &references).map_err(Failure::data)?;
    let mut staged = Staged::new(
        "eval",
        config,
        json!({ "split_size": config.eval.split_size }),
    );
    staged.input("hypotheses", hyp_path)?;
    staged.input("test", test_path)?;

    if let Some(size) = config.eval.split_size {
        let train_path = config
            .require("train", &config.paths.train)
            .map_err(Failure::usage)?;
        staged.input("train", train_path)?;
        let stats_corpus: Vec<String> = load(train_path, Source::Annotated)?
            .into_iter()
            .map(|p| p.snippet)
            .collect();
        let sets = vec![("hypotheses".to_string(), hypotheses.clone())];
        let split =
            frequency_split(&references, &sets, &stats_corpus, size).map_err(Failure::data)?;
        report.split_bleu = split.scores.first().map(|s| s.1);
    }

    staged.count("instances", report.instances);
    let mut report_bytes = serde_json::to_vec_pretty(&report).expect("report serializes");
    report_bytes.push(b'\n');
    staged.file("eval_report.json", report_bytes);
    staged.file("eval_instances.tsv", instances_tsv(&rows).into_bytes());
    staged.commit()
}

/// Prints pair counts and the most used APIs of each corpus file present
/// in the output directory.
pub fn stats(config: &PipelineConfig) -> CmdResult {
    let out_dir = config.out_dir();
    let mut files = BTreeMap::new();
    for name in [
        API_PAIRS.to_string(),
        sampled_file(Mode::Dist),
        sampled_file(Mode::Direct),
        sampled_file(Mode::Raw),
        "pretrain.jsonl".to_string(),
        "finetune.jsonl".to_string(),
    ] {
        let path = out_dir.join(&name);
        if !path.exists() {
            continue;
        }
        let pairs = load(&path, Source::Api)?;
        let mut apis: BTreeMap<String, u64> = BTreeMap::new();
        for p in &pairs {
            for api in extract_api_tokens(&p.snippet) {
                *apis.entry(api).or_default() += 1;
            }
        }
        let mut top: Vec<(String, u64)> = apis.into_iter().collect();
        top.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        top.truncate(10);
        let distinct = pairs
            .iter()
            .map(|p| &p.pair_id)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        files.insert(
            name,
            json!({ "pairs": pairs.len(), "distinct": distinct, "top_apis": top }),
        );
    }
    if files.is_empty() {
        return Err(Failure::usage(anyhow!(
            "no corpus files in {}",
            out_dir.display()
        )));
    }
    let text = serde_json::to_string_pretty(&files).expect("stats serialize");
    // A closed pipe (e.g. `| head`) is not an error worth reporting.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}
