//! Experiment configuration files (TOML). Unknown keys are rejected.
//!
//! ```toml
//! kind = "table2-sweep"
//! spec = "net.netspec"          # optional; most commands have a built-in default
//! seeds = [0, 1, 2]
//! n_subset = 256
//! wide_layer = 1
//! t1_values = [2, 4, 8, 16]
//! output = "sweep.csv"
//!
//! [data]
//! source = "synthetic"          # or "idx"
//! n = 512
//! d = 784
//! classes = 10
//! seed = 0
//! perturb_variance = 1e-5
//!
//! [train]
//! epochs = 3000
//! learning_rate = 1e-3
//! ```

use std::path::{Path, PathBuf};

use convland_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::data::synthesize_dataset;
use crate::error::{HarnessError, Result};
use crate::idx::load_idx;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RankGenericity,
    #[serde(rename = "table2-sweep")]
    FilterSweep,
    ConstructIndependent,
    ConstructZeroloss,
    GradBounds,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
    },
    Synthetic {
        n: usize,
        d: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_perturb")]
        perturb_variance: f64,
    },
}

fn default_classes() -> usize {
    2
}

fn default_perturb() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub spec: Option<PathBuf>,
    pub data: Option<DataSource>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub n_subset: Option<usize>,
    pub wide_layer: Option<usize>,
    pub t1_values: Option<Vec<usize>>,
    #[serde(default)]
    pub train: TrainConfig,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.n_subset == Some(0) {
            return Err(HarnessError::Config("n_subset must be at least 1".into()));
        }
        if let Some(DataSource::Synthetic { n, d, classes, .. }) = &self.data {
            if *n == 0 || *d == 0 || *classes == 0 {
                return Err(HarnessError::Config("synthetic data needs n, d, classes >= 1".into()));
            }
        }
        Ok(())
    }

    /// Training and optional test set; `n_subset` keeps the first samples of each.
    pub fn load_data(&self) -> Result<(Dataset, Option<Dataset>)> {
        let source = self
            .data
            .as_ref()
            .ok_or_else(|| HarnessError::Config("no [data] section".into()))?;
        let (train, test) = match source {
            DataSource::Idx {
                images,
                labels,
                test_images,
                test_labels,
            } => {
                let train = load_idx(images, labels)?;
                let test = match (test_images, test_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    (None, None) => None,
                    _ => {
                        return Err(HarnessError::Config(
                            "test_images and test_labels go together".into(),
                        ))
                    }
                };
                (train, test)
            }
            DataSource::Synthetic {
                n,
                d,
                classes,
                seed,
                perturb_variance,
            } => (synthesize_dataset(*n, *d, *classes, *seed, *perturb_variance)?, None),
        };
        match self.n_subset {
            None => Ok((train, test)),
            Some(n) if n > train.len() => Err(HarnessError::Config(format!(
                "n_subset = {n} exceeds the {} available samples",
                train.len()
            ))),
            Some(n) => Ok((train.head(n), test.map(|t| t.head(n)))),
        }
    }
}
