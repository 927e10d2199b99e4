use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{GrowthModel, Instance};
use crate::nn::{clip_grad_norm, sgd_step, ParamSet};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ParamSet,
    /// Mean per-instance loss of each epoch, measured before each step.
    pub epoch_losses: Vec<f64>,
}

/// Step settings of one local training call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-step cap on the global gradient L2 norm.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    pub round: usize,
}

/// `epochs` passes of per-instance SGD over `data` starting from a copy of
/// `params`. Epoch `e` of round `round` visits instances in an order drawn
/// from `(seed, client, round, e)`, so results do not depend on scheduling.
pub fn local_train(
    model: &GrowthModel,
    client: u32,
    data: &[Instance],
    params: &ParamSet,
    schedule: &LocalSchedule,
) -> Result<LocalOutcome> {
    let LocalSchedule {
        epochs,
        learning_rate,
        grad_clip,
        seed,
        round,
    } = *schedule;
    if data.is_empty() {
        return Err(Error::Argument(format!("client {client} has no training instances")));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite(format!("client {client}: initial parameters")));
    }
    let mut params = params.clone();
    params.zero_grad();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.sort_unstable();
        let mut rng = stream_rng(seed, Stream::Shuffle, &[client as u64, round as u64, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let loss = model
                .loss_and_grad(&mut params, &data[i])
                .map_err(|e| diverged(e, client, epoch))?;
            if let Some(max) = grad_clip {
                clip_grad_norm(&mut params, max);
            }
            sgd_step(&mut params, learning_rate);
            total += loss;
        }
        if !params.is_finite() || !total.is_finite() {
            return Err(Error::Divergence { client, epoch });
        }
        epoch_losses.push(total / data.len() as f64);
    }
    Ok(LocalOutcome { params, epoch_losses })
}

fn diverged(e: Error, client: u32, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence { client, epoch },
        other => other,
    }
}

/// Mean NLL over `data`; `None` when empty.
pub fn mean_nll(model: &GrowthModel, params: &ParamSet, data: &[Instance]) -> Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for inst in data {
        total += model.loss(params, inst)?;
    }
    Ok(Some(total / data.len() as f64))
}
