use std::collections::BTreeMap;

use fedstock_core::data::io::ArtifactStamp;
use fedstock_core::eval::{predict_clients, report_rows, Bucket, MetricsReport, Quadruple, StrataTable};
use fedstock_core::fl::Regime;
use fedstock_core::model::GrowthModel;
use serde::{Deserialize, Serialize};

use super::compare::pfl_vs_local;
use super::synth::load_dataset;
use super::train::load_checkpoints;
use crate::artifacts::{
    check_hash, create_dir, csv_writer, read_json, report_header, stamp_fields, write_json, Layout, RegimeReport,
    TrainRecord, TRAIN_RECORD,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub overall: Quadruple,
    pub per_horizon: Vec<Quadruple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stamp: ArtifactStamp,
    /// Every trained regime with a report for this config.
    pub regimes: BTreeMap<String, RegimeSummary>,
    /// PFL against local-only per farm-size bucket, when both are reported.
    pub strata: Option<StrataTable>,
}

/// Scores `regimes` on the test split (every trained regime when empty),
/// writes their reports and refreshes `summary.json`.
pub fn evaluate(cfg: &ExperimentConfig, layout: &Layout, regimes: &[Regime]) -> Result<Vec<RegimeReport>> {
    let trained = layout.trained_regimes();
    let regimes: Vec<Regime> = if regimes.is_empty() { trained.clone() } else { regimes.to_vec() };
    if regimes.is_empty() {
        return Err(CliError::MissingInput {
            path: layout.models_dir(),
            what: "trained models; run `fedstock train` first".into(),
        });
    }
    let (manifest, dataset) = load_dataset(cfg, layout)?;
    let (splits, _) = dataset.split(&cfg.data, cfg.seed)?;
    let iam: BTreeMap<u32, usize> = manifest.farms.iter().map(|f| (f.farm_id, f.iam_count)).collect();
    let model = GrowthModel::new(cfg.model.clone())?;
    let weight = cfg.data.normalization.weight;
    let stamp = cfg.stamp();
    create_dir(&layout.reports_dir())?;

    let mut reports = Vec::with_capacity(regimes.len());
    for regime in regimes {
        let dir = layout.model_dir(regime);
        let record_path = dir.join(TRAIN_RECORD);
        let record: TrainRecord = read_json(&record_path, &format!("{regime} model; run `fedstock train` first"))?;
        check_hash(&record_path, &stamp.config_hash, &record.stamp.config_hash)?;
        check_hash(&record_path, &cfg.data_hash(), &record.data_hash)?;
        let trained_model = load_checkpoints(&model, &dir, &record.checkpoints)?;
        let tests = splits
            .iter()
            .filter(|s| !s.test.is_empty())
            .map(|s| (s.farm_id, s.test.as_slice()));
        let (records, skipped) = predict_clients(&model, &trained_model, &weight, tests)?;
        let report = MetricsReport::with_buckets(&records, &iam, &Bucket::defaults())?;
        let out = RegimeReport {
            stamp: stamp.clone(),
            regime,
            horizon: cfg.data.horizon,
            farm_iam: report.per_farm.keys().map(|f| (*f, iam[f])).collect(),
            skipped_farms: skipped,
            report,
        };
        write_json(&layout.report_json(regime), &out)?;
        let mut w = csv_writer(&layout.report_csv(regime))?;
        w.write_record(report_header())?;
        for row in report_rows(regime.name(), &out.report) {
            w.write_record(stamp_fields(&stamp).iter().chain(row.fields().iter()))?;
        }
        w.flush().map_err(CliError::io(layout.report_csv(regime)))?;
        log::info!("{regime}: test RMSE {:.3} kg", out.report.overall.rmse_kg);
        reports.push(out);
    }

    let mut summary = Summary {
        stamp: stamp.clone(),
        regimes: BTreeMap::new(),
        strata: None,
    };
    let mut current: BTreeMap<Regime, RegimeReport> = BTreeMap::new();
    for regime in trained {
        let fresh = reports.iter().find(|r| r.regime == regime).cloned();
        let report = match fresh {
            Some(r) => r,
            None => {
                let path = layout.report_json(regime);
                if !path.is_file() {
                    continue;
                }
                let r: RegimeReport = read_json(&path, "report")?;
                if r.stamp.config_hash != stamp.config_hash {
                    continue;
                }
                r
            }
        };
        summary.regimes.insert(
            regime.name().to_string(),
            RegimeSummary {
                overall: report.report.overall.clone(),
                per_horizon: report.report.per_horizon.clone(),
            },
        );
        current.insert(regime, report);
    }
    if let (Some(pfl), Some(local)) = (current.get(&Regime::Pfl), current.get(&Regime::Local)) {
        summary.strata = Some(pfl_vs_local(pfl, local)?);
    }
    write_json(&layout.summary(), &summary)?;
    Ok(reports)
}
