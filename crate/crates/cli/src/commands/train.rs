use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use fedstock_core::data::hold_out_validation;
use fedstock_core::fl::{ClientState, Regime, TrainOutput, TrainedModel};
use fedstock_core::model::GrowthModel;
use fedstock_core::nn::{checkpoint, ParamSet, Partition};

use super::synth::load_dataset;
use crate::artifacts::{create_dir, write_json, CheckpointSet, Layout, TrainRecord, ROUND_LOG, TRAIN_RECORD};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Per-farm clients of the training split, with the configured validation
/// slice held out.
pub fn build_clients(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<ClientState>> {
    let (_, dataset) = load_dataset(cfg, layout)?;
    let (splits, _) = dataset.split(&cfg.data, cfg.seed)?;
    let mut clients = Vec::with_capacity(splits.len());
    for s in splits {
        let (train, val) = hold_out_validation(s.train, cfg.training.validation_fraction, cfg.seed, s.farm_id)?;
        clients.push(ClientState::new(s.farm_id, train)?.with_validation(val));
    }
    Ok(clients)
}

/// Trains `regime` and writes its checkpoints, round log and train record.
pub fn train(cfg: &ExperimentConfig, layout: &Layout, regime: Regime) -> Result<TrainRecord> {
    let clients = build_clients(cfg, layout)?;
    let model = GrowthModel::new(cfg.model.clone())?;
    let fed = cfg.federation(regime);
    fed.validate()?;
    log::info!(
        "training {regime} on {} clients, {} instances",
        clients.len(),
        clients.iter().map(|c| c.n()).sum::<usize>()
    );
    let out = regime.run(&model, &fed, &clients)?;
    for r in &out.rounds {
        log::info!(
            "{regime} round {}: mean client loss {:?}, validation {:?}, {} excluded",
            r.round,
            r.mean_client_loss,
            r.validation_loss,
            r.excluded.len()
        );
    }
    if !out.diverged.is_empty() {
        let ids: Vec<u32> = out.diverged.iter().map(|d| d.client).collect();
        log::warn!("{regime}: clients {ids:?} diverged and were dropped");
    }

    let dir = layout.model_dir(regime);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(CliError::io(&dir))?;
    }
    create_dir(&dir)?;
    let checkpoints = write_checkpoints(&dir, &out.model)?;
    write_round_log(&dir.join(ROUND_LOG), &out)?;

    let record = TrainRecord {
        stamp: cfg.stamp(),
        data_hash: cfg.data_hash(),
        regime,
        training: fed,
        checkpoints,
        train_instances: clients.iter().map(|c| (c.client_id, c.n())).collect(),
        validation_instances: clients.iter().map(|c| (c.client_id, c.validation.len())).collect(),
        excluded: out.rounds.iter().flat_map(|r| r.excluded.iter().cloned()).collect(),
        diverged: out.diverged.clone(),
        final_validation_loss: out.rounds.last().and_then(|r| r.validation_loss),
        audited_paths: out.audit.as_ref().map(|a| a.rounds.iter().map(Vec::len).sum()),
        audit_holds_only_body: out.audit.as_ref().map(|a| a.holds_only_body()),
    };
    write_json(&dir.join(TRAIN_RECORD), &record)?;
    Ok(record)
}

fn save(dir: &Path, file: &str, params: &ParamSet) -> Result<String> {
    let path = dir.join(file);
    checkpoint::save(&path, params.params().iter().map(|p| (p.name.as_str(), &p.value)))?;
    Ok(file.to_string())
}

fn write_checkpoints(dir: &Path, model: &TrainedModel) -> Result<CheckpointSet> {
    Ok(match model {
        TrainedModel::Global(p) => CheckpointSet::Global {
            file: save(dir, "model.ckpt", p)?,
        },
        TrainedModel::Personalized { body, heads } => CheckpointSet::Personalized {
            body: save(dir, "body.ckpt", body)?,
            heads: heads
                .iter()
                .map(|(id, h)| Ok((*id, save(dir, &format!("head_{id:04}.ckpt"), h)?)))
                .collect::<Result<_>>()?,
        },
        TrainedModel::PerClient(models) => CheckpointSet::PerClient {
            models: models
                .iter()
                .map(|(id, p)| Ok((*id, save(dir, &format!("client_{id:04}.ckpt"), p)?)))
                .collect::<Result<_>>()?,
        },
    })
}

/// Reloads the parameters listed in a train record.
pub fn load_checkpoints(model: &GrowthModel, dir: &Path, set: &CheckpointSet) -> Result<TrainedModel> {
    let load = |file: &str| -> Result<_> {
        let path = dir.join(file);
        if !path.is_file() {
            return Err(CliError::MissingInput {
                path,
                what: "checkpoint".into(),
            });
        }
        Ok(checkpoint::load(&path)?)
    };
    Ok(match set {
        CheckpointSet::Global { file } => TrainedModel::Global(model.params_from_records(load(file)?)?),
        CheckpointSet::Personalized { body, heads } => TrainedModel::Personalized {
            body: model.partition_from_records(load(body)?, Partition::Body)?,
            heads: heads
                .iter()
                .map(|(id, f)| Ok((*id, model.partition_from_records(load(f)?, Partition::Head)?)))
                .collect::<Result<BTreeMap<_, _>>>()?,
        },
        CheckpointSet::PerClient { models } => TrainedModel::PerClient(
            models
                .iter()
                .map(|(id, f)| Ok((*id, model.params_from_records(load(f)?)?)))
                .collect::<Result<_>>()?,
        ),
    })
}

/// One JSON object per round. The only artifact carrying wall-clock time.
fn write_round_log(path: &Path, out: &TrainOutput) -> Result<()> {
    let mut buf = Vec::new();
    for r in &out.rounds {
        serde_json::to_writer(&mut buf, r).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        buf.write_all(b"\n").map_err(CliError::io(path))?;
    }
    std::fs::write(path, buf).map_err(CliError::io(path))
}
