use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::rng::{stream_rng, Stream};

/// One farm's instances split by animal.
#[derive(Debug, Clone, Default)]
pub struct ClientSplit {
    pub farm_id: u32,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub train_animals: usize,
    pub test_animals: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Farms too small for a test side; all of their animals stay in train.
    pub all_train_farms: Vec<u32>,
}

/// Splits each farm's animals into train/test with `ceil(n·test_fraction)`
/// test animals, leaving at least one training animal. All windows of an
/// animal land on the same side.
pub fn split_clients(
    instances: Vec<Instance>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<ClientSplit>, SplitReport)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("data.test_fraction", "must lie in (0, 1)"));
    }
    // farm -> animal -> instances, ordered by id
    let mut farms: BTreeMap<u32, BTreeMap<u64, Vec<Instance>>> = BTreeMap::new();
    for inst in instances {
        farms
            .entry(inst.farm_id)
            .or_default()
            .entry(inst.animal_id)
            .or_default()
            .push(inst);
    }
    let mut report = SplitReport::default();
    let mut out = Vec::with_capacity(farms.len());
    for (farm_id, animals) in farms {
        let mut ids: Vec<u64> = animals.keys().copied().collect();
        let n = ids.len();
        let want = ((n as f64 * test_fraction) - 1e-9).ceil() as usize;
        let n_test = want.min(n - 1);
        if n_test == 0 {
            report.all_train_farms.push(farm_id);
        }
        ids.shuffle(&mut stream_rng(seed, Stream::Split, &[farm_id as u64]));
        let test_ids: std::collections::BTreeSet<u64> = ids[..n_test].iter().copied().collect();
        let mut split = ClientSplit {
            farm_id,
            ..Default::default()
        };
        for (id, insts) in animals {
            if test_ids.contains(&id) {
                split.test_animals += 1;
                split.test.extend(insts);
            } else {
                split.train_animals += 1;
                split.train.extend(insts);
            }
        }
        out.push(split);
    }
    Ok((out, report))
}

/// Moves `floor(n·fraction)` of a farm's `n` training animals, at most
/// `n − 1`, into a validation slice. Returns `(train, validation)`.
pub fn hold_out_validation(
    train: Vec<Instance>,
    fraction: f64,
    seed: u64,
    farm_id: u32,
) -> Result<(Vec<Instance>, Vec<Instance>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("training.validation_fraction", "must lie in [0, 1)"));
    }
    let mut animals: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    for inst in train {
        animals.entry(inst.animal_id).or_default().push(inst);
    }
    let mut ids: Vec<u64> = animals.keys().copied().collect();
    let n_val = ((ids.len() as f64 * fraction).floor() as usize).min(ids.len().saturating_sub(1));
    ids.shuffle(&mut stream_rng(seed, Stream::Validation, &[farm_id as u64]));
    let val_ids: std::collections::BTreeSet<u64> = ids[..n_val].iter().copied().collect();
    let (mut tr, mut val) = (Vec::new(), Vec::new());
    for (id, insts) in animals {
        if val_ids.contains(&id) {
            val.extend(insts);
        } else {
            tr.extend(insts);
        }
    }
    Ok((tr, val))
}
