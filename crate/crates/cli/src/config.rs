//! Pipeline configuration: a TOML or JSON file merged with command-line
//! overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use apiknow::corpus::{ApiSource, StrategyLabel, DEFAULT_MINED_TOP_K};
use apiknow::resample::{Strategy, Temperature, DIRECT_TOP_K};
use apiknow::retrieval::Target;
use serde::{Deserialize, Serialize};

/// How documentation pairs reach the pre-training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dist,
    Direct,
    Raw,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dist => "dist",
            Mode::Direct => "direct",
            Mode::Raw => "raw",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dist" => Ok(Mode::Dist),
            "direct" => Ok(Mode::Direct),
            "raw" => Ok(Mode::Raw),
            other => Err(format!(
                "unknown strategy `{other}` (expected dist, direct or raw)"
            )),
        }
    }
}

impl Mode {
    pub fn resample_strategy(self) -> Option<Strategy> {
        match self {
            Mode::Dist => Some(Strategy::Dist),
            Mode::Direct => Some(Strategy::Direct),
            Mode::Raw => None,
        }
    }

    pub fn api_source(self) -> ApiSource {
        match self {
            Mode::Dist => ApiSource::Dist,
            Mode::Direct => ApiSource::Direct,
            Mode::Raw => ApiSource::Raw,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub doc_dump: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub mined: Option<PathBuf>,
    pub hypotheses: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSettings {
    pub k: Option<usize>,
    pub tau: Option<Temperature>,
    pub target: Option<Target>,
    pub strategy: Option<Mode>,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySettings {
    pub label: Option<StrategyLabel>,
    pub mined_top_k: Option<usize>,
    pub api_source: Option<ApiSource>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Instances per side of the API-frequency split; no split when unset.
    pub split_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub plan: PlanSettings,
    pub strategy: StrategySettings,
    pub eval: EvalSettings,
    pub log_level: Option<String>,
}

impl PipelineConfig {
    /// Reads a config file. `.json` files are JSON, anything else TOML.
    /// Relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut config: PipelineConfig = if is_json {
            serde_json::from_str(&text)
                .with_context(|| format!("invalid JSON in {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("invalid TOML in {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        config.paths.rebase(base);
        Ok(config)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn seed(&self) -> u64 {
        self.plan.seed.unwrap_or(0)
    }

    pub fn target(&self) -> Target {
        self.plan.target.unwrap_or(Target::Code)
    }

    pub fn mode(&self) -> Mode {
        self.plan.strategy.unwrap_or(Mode::Dist)
    }

    /// Retrieval depth: 1 for the distribution, 5 for direct retrieval.
    pub fn k(&self) -> usize {
        self.plan.k.unwrap_or(match self.mode() {
            Mode::Direct => DIRECT_TOP_K,
            _ => 1,
        })
    }

    pub fn tau(&self) -> Temperature {
        self.plan.tau.unwrap_or(Temperature::Finite(2.0))
    }

    pub fn mined_top_k(&self) -> usize {
        self.strategy.mined_top_k.unwrap_or(DEFAULT_MINED_TOP_K)
    }

    pub fn label(&self) -> StrategyLabel {
        self.strategy.label.unwrap_or(StrategyLabel::ManMineApi)
    }

    /// API pairs feeding assembly; follows the re-sampling strategy unless
    /// set explicitly.
    pub fn api_source(&self) -> ApiSource {
        match (self.strategy.api_source, self.label()) {
            (Some(src), _) => src,
            (None, StrategyLabel::ManMineApi) => self.mode().api_source(),
            (None, _) => ApiSource::None,
        }
    }

    pub fn require<'a>(&self, name: &str, path: &'a Option<PathBuf>) -> anyhow::Result<&'a Path> {
        let Some(path) = path.as_deref() else {
            bail!("no `{name}` path configured");
        };
        if !path.exists() {
            bail!("configured `{name}` path {} does not exist", path.display());
        }
        Ok(path)
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.doc_dump,
            &mut self.train,
            &mut self.dev,
            &mut self.test,
            &mut self.mined,
            &mut self.hypotheses,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
