#![allow(dead_code)]

use fedstock_core::data::{build_dataset, DataConfig};
use fedstock_core::fl::ClientState;
use fedstock_core::model::{GrowthModel, Instance, ModelConfig};

pub fn small_model() -> GrowthModel {
    GrowthModel::new(ModelConfig {
        d_e: 3,
        d_h: 8,
        head_hidden: 8,
        ..ModelConfig::default()
    })
    .unwrap()
}

pub fn smoke_config() -> DataConfig {
    DataConfig {
        preset: Some("smoke".into()),
        ..DataConfig::default()
    }
}

/// Training instances of the two smoke farms, keyed by farm.
pub fn smoke_clients(seed: u64) -> Vec<ClientState> {
    let cfg = smoke_config();
    let ds = build_dataset(&cfg, seed).unwrap();
    let (splits, _) = ds.split(&cfg, seed).unwrap();
    splits
        .into_iter()
        .map(|s| ClientState::new(s.farm_id, s.train).unwrap())
        .collect()
}

/// The first `n` smoke instances as one client.
pub fn single_client(id: u32, n: usize, seed: u64) -> ClientState {
    let cfg = smoke_config();
    let ds = build_dataset(&cfg, seed).unwrap();
    let (inst, _) = ds.instances(&cfg).unwrap();
    let data: Vec<Instance> = inst.into_iter().take(n).collect();
    assert_eq!(data.len(), n);
    ClientState::new(id, data).unwrap()
}
