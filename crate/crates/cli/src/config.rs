use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dtnet_core::softcmp::OpLatency;
use dtnet_core::{ColumnSpec, CostModelParams, GridSearchSpec, MungeParams, SearchSpace, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw CSV to split into train and test.
    pub input_csv: Option<PathBuf>,
    /// Optional separate raw test CSV; when set, `input_csv` is used whole
    /// for training.
    pub test_csv: Option<PathBuf>,
    pub schema: Vec<ColumnSpec>,
    pub train_fraction: f64,
    /// Size of the training subset handed to MUNGE (and, with true labels,
    /// to the baseline).
    pub seed_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input_csv: None,
            test_csv: None,
            schema: Vec::new(),
            train_fraction: 0.8,
            seed_size: 100,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub grid: GridSearchSpec,
    pub max_depth: usize,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            grid: GridSearchSpec::default(),
            max_depth: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub validation_size: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { validation_size: 2000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub train: TrainConfig,
    /// Fraction of the labeled seed points held out to pick the architecture.
    pub holdout: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            train: TrainConfig {
                epochs: 300,
                batch_size: 16,
                ..TrainConfig::default()
            },
            holdout: 0.2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeConfig {
    pub slots: usize,
    pub depth_budget: usize,
    pub encrypt_weights: bool,
}

impl Default for HeConfig {
    fn default() -> Self {
        HeConfig {
            slots: 16384,
            depth_budget: 10,
            encrypt_weights: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Copied into every stochastic component's seed before a command runs.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub munge: MungeParams,
    pub train: TrainConfig,
    pub search: SearchSpace,
    pub distill: DistillConfig,
    pub baseline: BaselineConfig,
    pub he: HeConfig,
    pub cost_model: CostModelParams,
    pub latency: OpLatency,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            teacher: TeacherConfig::default(),
            munge: MungeParams::default(),
            train: TrainConfig::default(),
            search: SearchSpace::default(),
            distill: DistillConfig::default(),
            baseline: BaselineConfig::default(),
            he: HeConfig::default(),
            cost_model: CostModelParams::default(),
            latency: OpLatency::default(),
        }
    }
}

/// Sets `a.b.c` in a JSON object tree, creating intermediate objects.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .with_context(|| format!("override '{key}': '{}' is not a section", parts[..i].join(".")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

fn resolve_paths(root: &mut Value, base: &Path) {
    let fix = |v: Option<&mut Value>| {
        if let Some(Value::String(s)) = v {
            if Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
    };
    fix(root.get_mut("output_dir"));
    if let Some(data) = root.get_mut("data") {
        fix(data.get_mut("input_csv"));
        fix(data.get_mut("test_csv"));
    }
}

/// `key=value`; the value is parsed as JSON and falls back to a string.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("override '{s}' must look like section.key=value");
    };
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

impl PipelineConfig {
    /// Reads the config (or starts from defaults) and applies overrides in
    /// order. Relative paths inside the file resolve against its directory;
    /// paths given as overrides are taken as they are.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut v: Value =
                    serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                if let Some(base) = p.parent() {
                    resolve_paths(&mut v, base);
                }
                v
            }
            None => serde_json::to_value(PipelineConfig::default())?,
        };
        for (k, v) in overrides {
            set_path(&mut root, k, v.clone())?;
        }
        let mut cfg: PipelineConfig = serde_json::from_value(root).context("invalid configuration")?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    fn propagate_seed(&mut self) {
        self.munge.seed = self.seed;
        self.train.seed = self.seed;
        self.baseline.train.seed = self.seed;
    }

    /// SHA-256 of the effective configuration's JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
