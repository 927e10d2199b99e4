use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, check_clients, local_train, mean_nll, ClientState, FederationConfig, LocalOutcome, ServerAudit};
use crate::error::{Error, Result};
use crate::model::{GrowthModel, Instance};
use crate::nn::{ParamSet, Partition};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub client: u32,
    pub epoch: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based.
    pub round: usize,
    /// Clients whose update entered this round, ascending.
    pub participants: Vec<u32>,
    /// Aggregation weights aligned with `participants`; empty when nothing is aggregated.
    pub weights: Vec<f64>,
    /// Last-epoch mean loss per participant.
    pub client_losses: Vec<f64>,
    pub mean_client_loss: Option<f64>,
    pub excluded: Vec<Exclusion>,
    pub validation_loss: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    /// One model for every client.
    Global(ParamSet),
    /// Shared body plus one private head per client.
    Personalized { body: ParamSet, heads: BTreeMap<u32, ParamSet> },
    /// Independent full model per client.
    PerClient(BTreeMap<u32, ParamSet>),
}

impl TrainedModel {
    /// Full parameter set used for inference on `client`'s data.
    pub fn params_for(&self, model: &GrowthModel, client: u32) -> Result<Option<ParamSet>> {
        Ok(match self {
            TrainedModel::Global(p) => Some(p.clone()),
            TrainedModel::Personalized { body, heads } => match heads.get(&client) {
                Some(h) => Some(compose(model, body, h)?),
                None => None,
            },
            TrainedModel::PerClient(m) => m.get(&client).cloned(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: TrainedModel,
    pub rounds: Vec<RoundReport>,
    /// Paths held by the server per round; personalized regimes only.
    pub audit: Option<ServerAudit>,
    /// Clients that diverged and have no model of their own.
    pub diverged: Vec<Exclusion>,
}

fn compose(model: &GrowthModel, body: &ParamSet, head: &ParamSet) -> Result<ParamSet> {
    let mut p = model.zero_params();
    p.assign_from(body)?;
    p.assign_from(head)?;
    Ok(p)
}

fn global_init(model: &GrowthModel, seed: u64) -> ParamSet {
    model.init_params(&mut stream_rng(seed, Stream::Init, &[]))
}

fn sorted(clients: &[ClientState]) -> Vec<&ClientState> {
    let mut v: Vec<&ClientState> = clients.iter().collect();
    v.sort_by_key(|c| c.client_id);
    v
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn exclusion(e: &Error, client: u32) -> Option<Exclusion> {
    match e {
        Error::Divergence { epoch, .. } => Some(Exclusion {
            client,
            epoch: *epoch,
            reason: e.to_string(),
        }),
        _ => None,
    }
}

/// Instance-weighted mean validation NLL over clients, each with its own parameters.
fn pooled_validation<'a>(
    model: &GrowthModel,
    per_client: impl Iterator<Item = (&'a [Instance], Option<ParamSet>)>,
) -> Result<Option<f64>> {
    let (mut total, mut count) = (0.0, 0usize);
    for (data, params) in per_client {
        let Some(p) = params.as_ref() else { continue };
        if let Some(m) = mean_nll(model, p, data)? {
            total += m * data.len() as f64;
            count += data.len();
        }
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Pools every client's training data, in ascending client order, into one
/// participant that carries the lowest client id, then trains `R·E` epochs.
pub fn run_centralized(
    model: &GrowthModel,
    cfg: &FederationConfig,
    clients: &[ClientState],
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_clients(clients)?;
    let order = sorted(clients);
    let id = order[0].client_id;
    let data: Vec<Instance> = order.iter().flat_map(|c| c.train.iter().cloned()).collect();
    let validation: Vec<Instance> = order.iter().flat_map(|c| c.validation.iter().cloned()).collect();
    let mut params = global_init(model, cfg.seed);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let start = Instant::now();
        let out = local_train(model, id, &data, &params, &cfg.schedule(r, cfg.local_epochs))?;
        params = out.params;
        let last = *out.epoch_losses.last().expect("epochs >= 1");
        rounds.push(RoundReport {
            round: r + 1,
            participants: vec![id],
            weights: vec![1.0],
            client_losses: vec![last],
            mean_client_loss: Some(last),
            excluded: Vec::new(),
            validation_loss: mean_nll(model, &params, &validation)?,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        log::info!("centralized round {}: loss {last:.5}", r + 1);
    }
    Ok(TrainOutput {
        model: TrainedModel::Global(params),
        rounds,
        audit: None,
        diverged: Vec::new(),
    })
}

type ClientResult = (u32, Result<LocalOutcome>);

fn split_results(results: Vec<ClientResult>) -> Result<(Vec<(u32, LocalOutcome)>, Vec<Exclusion>)> {
    let mut ok = Vec::new();
    let mut excluded = Vec::new();
    for (id, r) in results {
        match r {
            Ok(o) => ok.push((id, o)),
            Err(e) => match exclusion(&e, id) {
                Some(x) => {
                    log::warn!("client {id} excluded: {e}");
                    excluded.push(x);
                }
                None => return Err(e),
            },
        }
    }
    if ok.is_empty() {
        let first = &excluded[0];
        return Err(Error::Divergence {
            client: first.client,
            epoch: first.epoch,
        });
    }
    Ok((ok, excluded))
}

/// Federated averaging of all parameters under `cfg.policy`.
pub fn run_fl(model: &GrowthModel, cfg: &FederationConfig, clients: &[ClientState]) -> Result<TrainOutput> {
    cfg.validate()?;
    check_clients(clients)?;
    let order = sorted(clients);
    let mut global = global_init(model, cfg.seed);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let start = Instant::now();
        let broadcast = &global;
        let results: Vec<ClientResult> = order
            .par_iter()
            .map(|c| {
                let out = local_train(model, c.client_id, &c.train, broadcast, &cfg.schedule(r, cfg.local_epochs));
                (c.client_id, out)
            })
            .collect();
        let (ok, excluded) = split_results(results)?;
        let sizes: Vec<usize> = ok.iter().map(|(id, _)| n_of(&order, *id)).collect();
        let updates: Vec<(u32, &ParamSet)> = ok.iter().map(|(id, o)| (*id, &o.params)).collect();
        global = aggregate(cfg.policy, &updates, &sizes)?;
        let weights = super::compute_weights(cfg.policy, &sizes)?;
        let losses: Vec<f64> = ok.iter().map(|(_, o)| *o.epoch_losses.last().expect("epochs >= 1")).collect();
        let validation_loss = pooled_validation(
            model,
            order.iter().map(|c| (c.validation.as_slice(), Some(global.clone()))),
        )?;
        log::info!("fl round {}: mean client loss {:.5}", r + 1, mean(&losses).unwrap_or(f64::NAN));
        rounds.push(RoundReport {
            round: r + 1,
            participants: ok.iter().map(|(id, _)| *id).collect(),
            weights,
            mean_client_loss: mean(&losses),
            client_losses: losses,
            excluded,
            validation_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutput {
        model: TrainedModel::Global(global),
        rounds,
        audit: None,
        diverged: Vec::new(),
    })
}

fn n_of(order: &[&ClientState], id: u32) -> usize {
    order.iter().find(|c| c.client_id == id).map(|c| c.n()).unwrap_or(0)
}

/// Personalized FL: the server aggregates and stores BODY parameters only;
/// each client keeps its head across rounds and starts it from the global
/// initialization.
pub fn run_pfl(model: &GrowthModel, cfg: &FederationConfig, clients: &[ClientState]) -> Result<TrainOutput> {
    cfg.validate()?;
    check_clients(clients)?;
    let order = sorted(clients);
    let init = global_init(model, cfg.seed);
    let mut body = init.subset(Partition::Body);
    let mut heads: BTreeMap<u32, ParamSet> = order
        .iter()
        .map(|c| {
            let head = c.private_head.clone().unwrap_or_else(|| init.subset(Partition::Head));
            (c.client_id, head)
        })
        .collect();
    let mut audit = ServerAudit::default();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let start = Instant::now();
        let broadcast = &body;
        let results: Vec<ClientResult> = order
            .par_iter()
            .map(|c| {
                let out = compose(model, broadcast, &heads[&c.client_id]).and_then(|p| {
                    local_train(model, c.client_id, &c.train, &p, &cfg.schedule(r, cfg.local_epochs))
                });
                (c.client_id, out)
            })
            .collect();
        let (ok, excluded) = split_results(results)?;

        audit.begin_round();
        let mut uploads = Vec::with_capacity(ok.len());
        for (id, o) in &ok {
            heads.insert(*id, o.params.subset(Partition::Head));
            let upload = o.params.subset(Partition::Body);
            audit.receive(*id, &upload)?;
            uploads.push((*id, upload));
        }
        let sizes: Vec<usize> = ok.iter().map(|(id, _)| n_of(&order, *id)).collect();
        let refs: Vec<(u32, &ParamSet)> = uploads.iter().map(|(id, p)| (*id, p)).collect();
        body = aggregate(cfg.policy, &refs, &sizes)?;

        let weights = super::compute_weights(cfg.policy, &sizes)?;
        let losses: Vec<f64> = ok.iter().map(|(_, o)| *o.epoch_losses.last().expect("epochs >= 1")).collect();
        let per_client = order
            .iter()
            .map(|c| Ok((c.validation.as_slice(), Some(compose(model, &body, &heads[&c.client_id])?))))
            .collect::<Result<Vec<_>>>()?;
        let validation_loss = pooled_validation(model, per_client.into_iter())?;
        log::info!("pfl round {}: mean client loss {:.5}", r + 1, mean(&losses).unwrap_or(f64::NAN));
        rounds.push(RoundReport {
            round: r + 1,
            participants: ok.iter().map(|(id, _)| *id).collect(),
            weights,
            mean_client_loss: mean(&losses),
            client_losses: losses,
            excluded,
            validation_loss,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutput {
        model: TrainedModel::Personalized { body, heads },
        rounds,
        audit: Some(audit),
        diverged: Vec::new(),
    })
}

/// Full FL training followed by `cfg.finetune_epochs` local epochs of body
/// and head per client. A client that diverges while fine-tuning keeps the
/// global model and is reported.
pub fn run_pfl_finetune(
    model: &GrowthModel,
    cfg: &FederationConfig,
    clients: &[ClientState],
) -> Result<TrainOutput> {
    if cfg.finetune_epochs < 1 {
        return Err(Error::config("training.finetune_epochs", "must be >= 1 for pfl-finetune"));
    }
    let fl = run_fl(model, cfg, clients)?;
    let TrainedModel::Global(global) = &fl.model else {
        unreachable!("run_fl yields a global model")
    };
    let order = sorted(clients);
    let results: Vec<ClientResult> = order
        .par_iter()
        .map(|c| {
            let out = local_train(model, c.client_id, &c.train, global, &cfg.schedule(cfg.rounds, cfg.finetune_epochs));
            (c.client_id, out)
        })
        .collect();
    let mut models = BTreeMap::new();
    let mut diverged = Vec::new();
    for (id, r) in results {
        match r {
            Ok(o) => {
                models.insert(id, o.params);
            }
            Err(e) => {
                let x = exclusion(&e, id).ok_or(e)?;
                diverged.push(x);
                models.insert(id, global.clone());
            }
        }
    }
    Ok(TrainOutput {
        model: TrainedModel::PerClient(models),
        rounds: fl.rounds,
        audit: None,
        diverged,
    })
}

/// Independent training per client from a client-specific initialization; no
/// communication. A diverging client is dropped without affecting others.
pub fn run_local_only(
    model: &GrowthModel,
    cfg: &FederationConfig,
    clients: &[ClientState],
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_clients(clients)?;
    let order = sorted(clients);
    struct Track {
        params: Option<ParamSet>,
        losses: Vec<f64>,
        times: Vec<f64>,
        diverged: Option<(usize, Exclusion)>,
    }
    let tracks: Vec<Track> = order
        .par_iter()
        .map(|c| {
            let mut params = model.init_params(&mut stream_rng(cfg.seed, Stream::LocalInit, &[c.client_id as u64]));
            let mut t = Track {
                params: None,
                losses: Vec::new(),
                times: Vec::new(),
                diverged: None,
            };
            for r in 0..cfg.rounds {
                let start = Instant::now();
                match local_train(model, c.client_id, &c.train, &params, &cfg.schedule(r, cfg.local_epochs)) {
                    Ok(o) => {
                        params = o.params;
                        t.losses.push(*o.epoch_losses.last().expect("epochs >= 1"));
                        t.times.push(start.elapsed().as_secs_f64());
                    }
                    Err(e) => match exclusion(&e, c.client_id) {
                        Some(x) => {
                            t.diverged = Some((r, x));
                            return Ok(t);
                        }
                        None => return Err(e),
                    },
                }
            }
            t.params = Some(params);
            Ok(t)
        })
        .collect::<Result<_>>()?;

    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let mut participants = Vec::new();
        let mut losses = Vec::new();
        let mut excluded = Vec::new();
        let mut wall = 0.0f64;
        for (c, t) in order.iter().zip(&tracks) {
            if let Some(&l) = t.losses.get(r) {
                participants.push(c.client_id);
                losses.push(l);
                wall = wall.max(t.times[r]);
            } else if let Some((dr, x)) = &t.diverged {
                if *dr == r {
                    excluded.push(x.clone());
                }
            }
        }
        rounds.push(RoundReport {
            round: r + 1,
            participants,
            weights: Vec::new(),
            mean_client_loss: mean(&losses),
            client_losses: losses,
            excluded,
            validation_loss: None,
            wall_time_s: wall,
        });
    }
    let validation = pooled_validation(
        model,
        order.iter().zip(&tracks).map(|(c, t)| (c.validation.as_slice(), t.params.clone())),
    )?;
    if let Some(last) = rounds.last_mut() {
        last.validation_loss = validation;
    }
    let diverged = tracks.iter().filter_map(|t| t.diverged.as_ref().map(|(_, x)| x.clone())).collect();
    let models = order
        .iter()
        .zip(tracks)
        .filter_map(|(c, t)| t.params.map(|p| (c.client_id, p)))
        .collect();
    Ok(TrainOutput {
        model: TrainedModel::PerClient(models),
        rounds,
        audit: None,
        diverged,
    })
}
