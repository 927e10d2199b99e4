//! Output layout and the JSON records written by each command.
//!
//! ```text
//! <out>/data/manifest.json, farm_XXXX.jsonl
//! <out>/models/<regime>/train.json, rounds.jsonl, *.ckpt
//! <out>/reports/<regime>.json, <regime>.csv, summary.json
//! <out>/compare/comparison.csv, strata.csv, small_farms.csv
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedstock_core::data::io::ArtifactStamp;
use fedstock_core::eval::{MetricsReport, CSV_COLUMNS};
use fedstock_core::fl::{Exclusion, FederationConfig, Regime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn manifest(&self) -> PathBuf {
        self.data_dir().join("manifest.json")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_dir(&self, regime: Regime) -> PathBuf {
        self.models_dir().join(regime.name())
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report_json(&self, regime: Regime) -> PathBuf {
        self.reports_dir().join(format!("{}.json", regime.name()))
    }

    pub fn report_csv(&self, regime: Regime) -> PathBuf {
        self.reports_dir().join(format!("{}.csv", regime.name()))
    }

    pub fn summary(&self) -> PathBuf {
        self.reports_dir().join("summary.json")
    }

    pub fn compare_dir(&self) -> PathBuf {
        self.root.join("compare")
    }

    /// Regimes with a `train.json`, in [`Regime::ALL`] order.
    pub fn trained_regimes(&self) -> Vec<Regime> {
        Regime::ALL
            .into_iter()
            .filter(|r| self.model_dir(*r).join(TRAIN_RECORD).is_file())
            .collect()
    }
}

pub const TRAIN_RECORD: &str = "train.json";
pub const ROUND_LOG: &str = "rounds.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmEntry {
    pub farm_id: u32,
    pub file: String,
    pub n_animals: usize,
    pub iam_count: usize,
    /// Farm-size bucket label of the IAM count.
    pub bucket: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub farms: usize,
    pub animals: usize,
    pub iam_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stamp: ArtifactStamp,
    pub data_hash: String,
    pub farms: Vec<FarmEntry>,
    /// Farm count per bucket, in bucket order.
    pub buckets: Vec<(String, usize)>,
    pub totals: Totals,
    pub quantile_fallback_ages: Vec<u32>,
}

/// How a regime's parameters are stored in its model directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSet {
    /// `model.ckpt`.
    Global { file: String },
    /// `body.ckpt` plus `head_XXXX.ckpt` per farm.
    Personalized { body: String, heads: BTreeMap<u32, String> },
    /// `client_XXXX.ckpt` per farm.
    PerClient { models: BTreeMap<u32, String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub stamp: ArtifactStamp,
    pub data_hash: String,
    pub regime: Regime,
    pub training: FederationConfig,
    pub checkpoints: CheckpointSet,
    pub train_instances: BTreeMap<u32, usize>,
    pub validation_instances: BTreeMap<u32, usize>,
    pub excluded: Vec<Exclusion>,
    /// Clients dropped for good, e.g. diverged local-only tracks.
    pub diverged: Vec<Exclusion>,
    pub final_validation_loss: Option<f64>,
    /// Number of server-side audit entries; PFL regimes only.
    pub audited_paths: Option<usize>,
    pub audit_holds_only_body: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub stamp: ArtifactStamp,
    pub regime: Regime,
    pub horizon: usize,
    /// Farm id to IAM count, for every farm with test data.
    pub farm_iam: BTreeMap<u32, usize>,
    /// Farms without a model, e.g. diverged local-only clients.
    pub skipped_farms: Vec<u32>,
    pub report: MetricsReport,
}

/// Leading provenance columns of every CSV artifact.
pub const STAMP_COLUMNS: [&str; 3] = ["config_hash", "seed", "tool_version"];

pub fn stamp_fields(stamp: &ArtifactStamp) -> [String; 3] {
    [stamp.config_hash.clone(), stamp.seed.to_string(), stamp.tool_version.clone()]
}

pub fn report_header() -> Vec<&'static str> {
    STAMP_COLUMNS.iter().chain(CSV_COLUMNS.iter()).copied().collect()
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(CliError::io(path))?;
    w.flush().map_err(CliError::io(path))
}

/// Reads JSON, turning a missing file into [`CliError::MissingInput`].
pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingInput {
                path: path.to_path_buf(),
                what: what.to_string(),
            })
        }
        Err(e) => return Err(CliError::io(path)(e)),
    };
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(CliError::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn check_hash(artifact: &Path, expected: &str, found: &str) -> Result<()> {
    if expected != found {
        return Err(CliError::HashMismatch {
            artifact: artifact.to_path_buf(),
            expected: expected.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}
