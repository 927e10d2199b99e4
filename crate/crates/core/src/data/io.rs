//! Line-delimited dataset files.
//!
//! One `farm_<id>.jsonl` per farm. The first line is a header object
//! `{"header": {...}}` carrying the artifact stamp, the farm spec and its IAM
//! count; every following line is one animal:
//!
//! ```json
//! {"animal_id": 4294967296, "farm_id": 1, "static": [0, 3, 1, 1],
//!  "months": [{"weight_kg": 151.2, "observed": true, "distance_months": 0.0, "credibility": 1.0}, ...]}
//! ```
//!
//! `months` always has 23 entries, ages 2 through 24.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{FarmData, FarmSpec, MonthlyTrajectory};
use crate::error::{Error, Result};

/// Provenance embedded in every output artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactStamp {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmHeader {
    #[serde(flatten)]
    pub stamp: ArtifactStamp,
    pub farm: FarmSpec,
    pub iam_count: usize,
    pub n_animals: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: FarmHeader,
}

pub fn farm_file_name(farm_id: u32) -> String {
    format!("farm_{farm_id:04}.jsonl")
}

pub fn write_farm(dir: &Path, stamp: &ArtifactStamp, farm: &FarmData) -> Result<PathBuf> {
    let path = dir.join(farm_file_name(farm.spec.farm_id));
    let mut w = BufWriter::new(File::create(&path)?);
    let header = HeaderLine {
        header: FarmHeader {
            stamp: stamp.clone(),
            farm: farm.spec.clone(),
            iam_count: farm.iam_count,
            n_animals: farm.trajectories.len(),
        },
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for t in &farm.trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(path)
}

pub fn read_farm(path: &Path) -> Result<(FarmHeader, FarmData)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Argument(format!("{}: empty dataset file", path.display())))??;
    let header: HeaderLine = serde_json::from_str(&first)?;
    let mut trajectories = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: MonthlyTrajectory = serde_json::from_str(&line)?;
        t.check_invariants()
            .map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?;
        trajectories.push(t);
    }
    if trajectories.len() != header.header.n_animals {
        return Err(Error::Argument(format!(
            "{}: header lists {} animals, file has {}",
            path.display(),
            header.header.n_animals,
            trajectories.len()
        )));
    }
    let farm = FarmData {
        spec: header.header.farm.clone(),
        trajectories,
        iam_count: header.header.iam_count,
    };
    Ok((header.header, farm))
}
