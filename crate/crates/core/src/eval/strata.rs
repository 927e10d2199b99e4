use serde::{Deserialize, Serialize};

use super::Quadruple;
use crate::error::{Error, Result};

/// Inclusive IAM range; `max = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub min: usize,
    pub max: Option<usize>,
}

impl Bucket {
    pub fn contains(&self, iam: usize) -> bool {
        iam >= self.min && self.max.is_none_or(|m| iam <= m)
    }

    /// `≤50, 51–200, 201–500, 501–1000, >1000`.
    pub fn defaults() -> Vec<Bucket> {
        let b = |label: &str, min, max| Bucket {
            label: label.into(),
            min,
            max,
        };
        vec![
            b("<=50", 0, Some(50)),
            b("51-200", 51, Some(200)),
            b("201-500", 201, Some(500)),
            b("501-1000", 501, Some(1000)),
            b(">1000", 1001, None),
        ]
    }
}

/// PFL vs local-only on one farm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmComparison {
    pub farm_id: u32,
    pub iam: usize,
    pub pfl: Quadruple,
    pub local: Quadruple,
}

impl FarmComparison {
    pub fn improve(&self) -> bool {
        self.pfl.rmse_kg < self.local.rmse_kg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub bucket: String,
    pub farms: Vec<u32>,
    /// Farm-averaged RMSE of each regime.
    pub pfl_rmse_kg: f64,
    pub local_rmse_kg: f64,
    /// 1 iff the bucket's averaged PFL RMSE is below local-only.
    pub improve: u8,
    /// Fraction of farms where PFL beats local-only.
    pub improvement_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataTable {
    pub strata: Vec<Stratum>,
    pub notes: Vec<String>,
}

/// Groups farms into IAM buckets and reports per-bucket improvement of PFL
/// over local-only training. Empty buckets are omitted with a note.
pub fn stratify_by_farm_size(farms: &[FarmComparison], buckets: &[Bucket]) -> Result<StrataTable> {
    if buckets.is_empty() {
        return Err(Error::Argument("no farm-size buckets".into()));
    }
    let mut strata = Vec::new();
    let mut notes = Vec::new();
    for f in farms {
        if !buckets.iter().any(|b| b.contains(f.iam)) {
            notes.push(format!("farm {} with {} IAMs falls in no bucket", f.farm_id, f.iam));
        }
    }
    for b in buckets {
        let members: Vec<&FarmComparison> = farms.iter().filter(|f| b.contains(f.iam)).collect();
        if members.is_empty() {
            notes.push(format!("bucket {} has no farms", b.label));
            continue;
        }
        let n = members.len() as f64;
        let pfl = members.iter().map(|f| f.pfl.rmse_kg).sum::<f64>() / n;
        let local = members.iter().map(|f| f.local.rmse_kg).sum::<f64>() / n;
        strata.push(Stratum {
            bucket: b.label.clone(),
            farms: members.iter().map(|f| f.farm_id).collect(),
            pfl_rmse_kg: pfl,
            local_rmse_kg: local,
            improve: (pfl < local) as u8,
            improvement_rate: members.iter().filter(|f| f.improve()).count() as f64 / n,
        });
    }
    Ok(StrataTable { strata, notes })
}
