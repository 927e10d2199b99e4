use serde::{Deserialize, Serialize};

use crate::data::Bounds;
use crate::error::Result;
use crate::fl::TrainedModel;
use crate::model::{point_forecast, GrowthModel, Instance};

/// Point forecast and target of one instance, both in kg.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub farm_id: u32,
    pub animal_id: u64,
    pub mu_kg: Vec<f64>,
    pub y_kg: Vec<f64>,
}

/// Forecasts every test instance with the parameters the regime assigns to
/// its farm. Forecast means are denormalized with `weight`; targets are the
/// raw kg values carried by the instance. Returns the records and the farms
/// skipped for lack of a model.
pub fn predict_clients<'a>(
    model: &GrowthModel,
    trained: &TrainedModel,
    weight: &Bounds,
    clients: impl IntoIterator<Item = (u32, &'a [Instance])>,
) -> Result<(Vec<PredictionRecord>, Vec<u32>)> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (farm, test) in clients {
        let Some(params) = trained.params_for(model, farm)? else {
            skipped.push(farm);
            continue;
        };
        for inst in test {
            let pred = model.predict(&params, inst)?;
            records.push(PredictionRecord {
                farm_id: farm,
                animal_id: inst.animal_id,
                mu_kg: point_forecast(&pred).into_iter().map(|v| weight.denormalize(v)).collect(),
                y_kg: inst.y_kg.clone(),
            });
        }
    }
    Ok((records, skipped))
}
