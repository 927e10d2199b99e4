use std::collections::BTreeMap;
use std::path::PathBuf;

use fedstock_core::eval::{report_rows, stratify_by_farm_size, Bucket, CsvRow, FarmComparison, StrataTable, CSV_COLUMNS};
use fedstock_core::fl::Regime;

use crate::artifacts::{create_dir, csv_writer, read_json, stamp_fields, Layout, RegimeReport, STAMP_COLUMNS};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Farms with fewer IAMs than this enter the small-farm series.
pub const SMALL_FARM_IAM: usize = 50;

pub const COMPARISON_FILE: &str = "comparison.csv";
pub const STRATA_FILE: &str = "strata.csv";
pub const SMALL_FARMS_FILE: &str = "small_farms.csv";

/// Per-farm PFL against local-only, bucketed by farm size.
pub fn pfl_vs_local(pfl: &RegimeReport, local: &RegimeReport) -> Result<StrataTable> {
    let farms: Vec<FarmComparison> = pfl
        .report
        .per_farm
        .iter()
        .filter_map(|(id, p)| {
            let l = local.report.per_farm.get(id)?;
            Some(FarmComparison {
                farm_id: *id,
                iam: pfl.farm_iam[id],
                pfl: p.clone(),
                local: l.clone(),
            })
        })
        .collect();
    Ok(stratify_by_farm_size(&farms, &Bucket::defaults())?)
}

/// Report files in `<out>/reports`, excluding the summary, sorted by name.
pub fn discover_reports(layout: &Layout) -> Result<Vec<PathBuf>> {
    let dir = layout.reports_dir();
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CliError::io(&dir)(e)),
    };
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(&dir))?.path();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if path.extension().is_some_and(|e| e == "json") && Regime::parse(stem).is_some() {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

fn horizon_key(h: &str) -> usize {
    h.parse().unwrap_or(0)
}

/// Writes the side-by-side table, the PFL/local strata table and the
/// small-farm series. Deltas are against `baseline`, defaulting to
/// `centralized` when present and the first regime otherwise.
pub fn compare(
    cfg: &ExperimentConfig,
    layout: &Layout,
    report_paths: &[PathBuf],
    baseline: Option<Regime>,
) -> Result<Vec<PathBuf>> {
    let paths = if report_paths.is_empty() { discover_reports(layout)? } else { report_paths.to_vec() };
    let mut reports: BTreeMap<Regime, RegimeReport> = BTreeMap::new();
    for p in &paths {
        let r: RegimeReport = read_json(p, "report")?;
        if reports.contains_key(&r.regime) {
            return Err(CliError::config("reports", format!("regime {} given twice", r.regime)));
        }
        reports.insert(r.regime, r);
    }
    if reports.len() < 2 {
        return Err(CliError::config("reports", "at least two reports are required"));
    }
    if let Some(bad) = reports.values().find(|r| r.horizon != r.report.per_horizon.len()) {
        return Err(CliError::IncompatibleHorizons(format!(
            "{} declares H={} but has {} horizon rows",
            bad.regime,
            bad.horizon,
            bad.report.per_horizon.len()
        )));
    }
    let horizons: Vec<(Regime, usize)> = reports.values().map(|r| (r.regime, r.horizon)).collect();
    if horizons.iter().any(|(_, h)| *h != horizons[0].1) {
        let list: Vec<String> = horizons.iter().map(|(r, h)| format!("{r}: H={h}")).collect();
        return Err(CliError::IncompatibleHorizons(list.join(", ")));
    }
    let baseline = match baseline {
        Some(b) if reports.contains_key(&b) => b,
        Some(b) => return Err(CliError::config("baseline", format!("no report for {b}"))),
        None if reports.contains_key(&Regime::Centralized) => Regime::Centralized,
        None => *reports.keys().next().expect("two reports"),
    };

    let dir = layout.compare_dir();
    create_dir(&dir)?;
    let stamp = cfg.stamp();
    let stamp_cols = stamp_fields(&stamp);
    let mut written = Vec::new();

    let base: BTreeMap<(String, String), CsvRow> = report_rows(baseline.name(), &reports[&baseline].report)
        .into_iter()
        .map(|r| ((r.stratum.clone(), r.horizon.clone()), r))
        .collect();
    let mut rows: Vec<CsvRow> = reports
        .values()
        .flat_map(|r| report_rows(r.regime.name(), &r.report))
        .collect();
    rows.sort_by(|a, b| {
        (a.regime.as_str(), a.stratum.as_str(), horizon_key(&a.horizon)).cmp(&(
            b.regime.as_str(),
            b.stratum.as_str(),
            horizon_key(&b.horizon),
        ))
    });
    let path = dir.join(COMPARISON_FILE);
    let mut w = csv_writer(&path)?;
    let header: Vec<&str> = STAMP_COLUMNS
        .iter()
        .chain(CSV_COLUMNS.iter())
        .chain(["baseline", "delta_rmse_kg", "delta_mae_kg"].iter())
        .copied()
        .collect();
    w.write_record(&header)?;
    for row in &rows {
        let (d_rmse, d_mae) = match base.get(&(row.stratum.clone(), row.horizon.clone())) {
            Some(b) => ((row.rmse_kg - b.rmse_kg).to_string(), (row.mae_kg - b.mae_kg).to_string()),
            None => (String::new(), String::new()),
        };
        let tail = [baseline.name().to_string(), d_rmse, d_mae];
        w.write_record(stamp_cols.iter().chain(row.fields().iter()).chain(tail.iter()))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    written.push(path);

    if let (Some(pfl), Some(local)) = (reports.get(&Regime::Pfl), reports.get(&Regime::Local)) {
        let table = pfl_vs_local(pfl, local)?;
        for note in &table.notes {
            log::info!("strata: {note}");
        }
        let path = dir.join(STRATA_FILE);
        let mut w = csv_writer(&path)?;
        let header = ["bucket", "farms", "pfl_rmse_kg", "local_rmse_kg", "improve", "improvement_rate"];
        w.write_record(STAMP_COLUMNS.iter().chain(header.iter()))?;
        for s in &table.strata {
            let farms: Vec<String> = s.farms.iter().map(u32::to_string).collect();
            let fields = [
                s.bucket.clone(),
                farms.join(" "),
                s.pfl_rmse_kg.to_string(),
                s.local_rmse_kg.to_string(),
                s.improve.to_string(),
                s.improvement_rate.to_string(),
            ];
            w.write_record(stamp_cols.iter().chain(fields.iter()))?;
        }
        w.flush().map_err(CliError::io(&path))?;
        written.push(path);
    }

    let mut series: Vec<(String, usize, u32, f64, f64)> = Vec::new();
    for r in [Regime::Pfl, Regime::Local].iter().filter_map(|g| reports.get(g)) {
        for (farm, q) in &r.report.per_farm {
            let iam = r.farm_iam[farm];
            if iam < SMALL_FARM_IAM {
                series.push((r.regime.name().to_string(), iam, *farm, q.rmse_kg, q.mae_kg));
            }
        }
    }
    series.sort_by(|a, b| (a.0.as_str(), a.1, a.2).cmp(&(b.0.as_str(), b.1, b.2)));
    let path = dir.join(SMALL_FARMS_FILE);
    let mut w = csv_writer(&path)?;
    let header = ["regime", "farm_id", "iam", "rmse_kg", "mae_kg"];
    w.write_record(STAMP_COLUMNS.iter().chain(header.iter()))?;
    for (regime, iam, farm, rmse, mae) in &series {
        let fields = [regime.clone(), farm.to_string(), iam.to_string(), rmse.to_string(), mae.to_string()];
        w.write_record(stamp_cols.iter().chain(fields.iter()))?;
    }
    w.flush().map_err(CliError::io(&path))?;
    written.push(path);
    Ok(written)
}
