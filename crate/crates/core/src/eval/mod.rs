//! Forecast metrics in kg: overall, per horizon, per farm and per farm-size
//! stratum.

mod predict;
mod strata;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use predict::{predict_clients, PredictionRecord};
pub use strata::{stratify_by_farm_size, Bucket, FarmComparison, StrataTable, Stratum};

use crate::error::{Error, Result};

/// RMSE, MAE, MAPE and R² over one set of (forecast, target) values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub rmse_kg: f64,
    pub mae_kg: f64,
    /// `None` when every target is zero.
    pub mape_pct: Option<f64>,
    /// `None` when targets are constant or fewer than two values exist.
    pub r2: Option<f64>,
    /// Number of scalar forecasts scored.
    pub n: usize,
}

fn check(records: &[PredictionRecord]) -> Result<usize> {
    let first = records
        .first()
        .ok_or_else(|| Error::Argument("no predictions to score".into()))?;
    let h = first.y_kg.len();
    for r in records {
        if r.mu_kg.len() != r.y_kg.len() || r.y_kg.len() != h {
            return Err(Error::Shape {
                op: "metrics",
                left: vec![r.mu_kg.len(), r.y_kg.len()],
                right: vec![h],
            });
        }
        if r.mu_kg.iter().chain(&r.y_kg).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("prediction for animal {}", r.animal_id)));
        }
    }
    if h == 0 {
        return Err(Error::Argument("empty horizon".into()));
    }
    Ok(h)
}

fn quadruple(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> Quadruple {
    let (mut n, mut se, mut ae, mut ape, mut n_ape, mut sum_y) = (0usize, 0.0, 0.0, 0.0, 0usize, 0.0);
    for (p, y) in pairs.clone() {
        let e = p - y;
        n += 1;
        se += e * e;
        ae += e.abs();
        sum_y += y;
        if y != 0.0 {
            ape += e.abs() / y.abs();
            n_ape += 1;
        }
    }
    let mean_y = sum_y / n as f64;
    let ss_tot: f64 = pairs.map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    Quadruple {
        rmse_kg: (se / n as f64).sqrt(),
        mae_kg: ae / n as f64,
        mape_pct: (n_ape > 0).then(|| 100.0 * ape / n_ape as f64),
        r2: (n >= 2 && ss_tot > 0.0).then(|| 1.0 - se / ss_tot),
        n,
    }
}

/// Metrics over every (sample, horizon) value.
pub fn metrics(records: &[PredictionRecord]) -> Result<Quadruple> {
    check(records)?;
    Ok(quadruple(
        records.iter().flat_map(|r| r.mu_kg.iter().copied().zip(r.y_kg.iter().copied())),
    ))
}

/// One quadruple per horizon step, in order.
pub fn per_horizon(records: &[PredictionRecord]) -> Result<Vec<Quadruple>> {
    let h = check(records)?;
    Ok((0..h)
        .map(|i| quadruple(records.iter().map(move |r| (r.mu_kg[i], r.y_kg[i]))))
        .collect())
}

/// Metrics pooled over the farms of one farm-size bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMetrics {
    pub bucket: String,
    pub farms: Vec<u32>,
    pub metrics: Quadruple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Quadruple,
    pub per_horizon: Vec<Quadruple>,
    pub per_farm: BTreeMap<u32, Quadruple>,
    /// Buckets in definition order; buckets without scored farms are omitted.
    pub per_bucket: Vec<BucketMetrics>,
}

impl MetricsReport {
    pub fn from_records(records: &[PredictionRecord]) -> Result<Self> {
        Self::with_buckets(records, &BTreeMap::new(), &[])
    }

    /// Like [`MetricsReport::from_records`], adding one entry per bucket
    /// holding at least one farm of `iam` (farm id to IAM count).
    pub fn with_buckets(
        records: &[PredictionRecord],
        iam: &BTreeMap<u32, usize>,
        buckets: &[Bucket],
    ) -> Result<Self> {
        let mut by_farm: BTreeMap<u32, Vec<PredictionRecord>> = BTreeMap::new();
        for r in records {
            by_farm.entry(r.farm_id).or_default().push(r.clone());
        }
        let mut per_bucket = Vec::new();
        for b in buckets {
            let farms: Vec<u32> = by_farm
                .keys()
                .copied()
                .filter(|f| iam.get(f).is_some_and(|&n| b.contains(n)))
                .collect();
            if farms.is_empty() {
                continue;
            }
            let rs: Vec<PredictionRecord> = farms.iter().flat_map(|f| by_farm[f].iter().cloned()).collect();
            per_bucket.push(BucketMetrics {
                bucket: b.label.clone(),
                farms,
                metrics: metrics(&rs)?,
            });
        }
        Ok(Self {
            overall: metrics(records)?,
            per_horizon: per_horizon(records)?,
            per_farm: by_farm
                .iter()
                .map(|(id, rs)| Ok((*id, metrics(rs)?)))
                .collect::<Result<_>>()?,
            per_bucket,
        })
    }
}

/// Fixed CSV layout: one row per regime × stratum × horizon. `stratum` is
/// `all`, `farm_<id>` or a farm-size bucket label; `horizon` is `all` or 1..H.
pub const CSV_COLUMNS: [&str; 8] = ["regime", "stratum", "horizon", "rmse_kg", "mae_kg", "mape_pct", "r2", "n"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub regime: String,
    pub stratum: String,
    pub horizon: String,
    pub rmse_kg: f64,
    pub mae_kg: f64,
    pub mape_pct: Option<f64>,
    pub r2: Option<f64>,
    pub n: usize,
}

impl CsvRow {
    fn new(regime: &str, stratum: String, horizon: String, q: &Quadruple) -> Self {
        Self {
            regime: regime.to_string(),
            stratum,
            horizon,
            rmse_kg: q.rmse_kg,
            mae_kg: q.mae_kg,
            mape_pct: q.mape_pct,
            r2: q.r2,
            n: q.n,
        }
    }

    /// Values in [`CSV_COLUMNS`] order; undefined metrics are empty.
    pub fn fields(&self) -> [String; 8] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.regime.clone(),
            self.stratum.clone(),
            self.horizon.clone(),
            self.rmse_kg.to_string(),
            self.mae_kg.to_string(),
            opt(self.mape_pct),
            opt(self.r2),
            self.n.to_string(),
        ]
    }
}

/// Overall, per-horizon, per-bucket and per-farm rows of one regime's report.
/// Bucket strata are labelled `iam<label>`, e.g. `iam<=50`.
pub fn report_rows(regime: &str, report: &MetricsReport) -> Vec<CsvRow> {
    let mut rows = vec![CsvRow::new(regime, "all".into(), "all".into(), &report.overall)];
    for (h, q) in report.per_horizon.iter().enumerate() {
        rows.push(CsvRow::new(regime, "all".into(), (h + 1).to_string(), q));
    }
    for b in &report.per_bucket {
        rows.push(CsvRow::new(regime, format!("iam{}", b.bucket), "all".into(), &b.metrics));
    }
    for (farm, q) in &report.per_farm {
        rows.push(CsvRow::new(regime, format!("farm_{farm}"), "all".into(), q));
    }
    rows
}
