//! Run configuration: a JSON file with flag overrides applied on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use worldsim_core::eval::{HttpClientConfig, PromptOverrides, RatePolicy};
use worldsim_core::scenarios::{ScenarioConstants, SuiteConfig};
use worldsim_core::{CameraModel, Category};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSettings {
    /// Scenarios per category; categories missing from the map are skipped.
    pub counts: BTreeMap<Category, usize>,
    /// Overrides per-category frame counts (planning always uses one frame).
    pub frame_counts: Option<Vec<usize>>,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        let d = SuiteConfig::default();
        Self {
            counts: d.counts,
            frame_counts: d.frame_counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub suite: SuiteSettings,
    pub constants: ScenarioConstants,
    pub camera: CameraModel,
    /// Live endpoints selectable by name with `--model`.
    pub clients: BTreeMap<String, HttpClientConfig>,
    pub rate: RatePolicy,
    pub prompt: PromptOverrides,
    /// Worker threads for mock evaluation; 0 picks the number of CPUs.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: SuiteConfig::default().seed,
            out: PathBuf::from("out"),
            suite: SuiteSettings::default(),
            constants: ScenarioConstants::default(),
            camera: CameraModel::default(),
            clients: BTreeMap::new(),
            rate: RatePolicy::default(),
            prompt: PromptOverrides::default(),
            workers: 0,
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub frames: Option<Vec<usize>>,
    pub categories: Option<Vec<Category>>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        if let Some(f) = &overrides.frames {
            cfg.suite.frame_counts = Some(f.clone());
        }
        if let Some(cats) = &overrides.categories {
            let defaults = SuiteConfig::default().counts;
            cfg.suite.counts = cats
                .iter()
                .map(|c| (*c, cfg.suite.counts.get(c).or(defaults.get(c)).copied().unwrap_or(1)))
                .collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.suite.counts.is_empty() {
            bail!("suite selects no categories");
        }
        if let Some(f) = &self.suite.frame_counts {
            if f.is_empty() {
                bail!("frame counts must not be empty");
            }
        }
        self.camera
            .validate()
            .map_err(|e| anyhow::anyhow!("invalid camera: {e}"))?;
        Ok(())
    }

    pub fn suite_config(&self) -> SuiteConfig {
        SuiteConfig {
            seed: self.seed,
            counts: self.suite.counts.clone(),
            frame_counts: self.suite.frame_counts.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4)
        }
    }
}

/// Comma-separated frame counts from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameList(pub Vec<usize>);

/// Comma-separated categories from the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryList(pub Vec<Category>);

pub fn parse_frames(s: &str) -> Result<FrameList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(FrameList)
}

pub fn parse_categories(s: &str) -> Result<CategoryList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<Category>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(CategoryList)
}
