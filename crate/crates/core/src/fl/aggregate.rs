use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamSet, Partition};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationPolicy {
    /// `n_k / N`.
    #[default]
    Size,
    /// `√n_k / Σ_j √n_j`.
    Sqrt,
}

/// Aggregation weights in input order.
pub fn compute_weights(policy: AggregationPolicy, sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::Argument("no client sizes to weight".into()));
    }
    if let Some(i) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::Argument(format!("client size at position {i} is 0")));
    }
    let raw: Vec<f64> = match policy {
        AggregationPolicy::Size => sizes.iter().map(|&n| n as f64).collect(),
        AggregationPolicy::Sqrt => sizes.iter().map(|&n| (n as f64).sqrt()).collect(),
    };
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

/// Weighted average of client parameter sets.
///
/// Computed as `θ_ref + Σ_k w_k (θ_k − θ_ref)` with `θ_ref` the lowest client
/// id, summing in ascending id order. Algebraically this is `Σ_k w_k θ_k`;
/// the anchored form keeps a single client and identical clients exact.
pub fn aggregate(
    policy: AggregationPolicy,
    updates: &[(u32, &ParamSet)],
    sizes: &[usize],
) -> Result<ParamSet> {
    if updates.len() != sizes.len() {
        return Err(Error::Argument(format!(
            "{} updates but {} sizes",
            updates.len(),
            sizes.len()
        )));
    }
    let mut order: Vec<usize> = (0..updates.len()).collect();
    order.sort_by_key(|&i| updates[i].0);
    if let Some(w) = order.windows(2).find(|w| updates[w[0]].0 == updates[w[1]].0) {
        return Err(Error::Argument(format!("duplicate client id {}", updates[w[0]].0)));
    }
    // weights in ascending id order so the normalizer is summed the same way
    // whatever order the updates arrive in
    let sorted_sizes: Vec<usize> = order.iter().map(|&i| sizes[i]).collect();
    let weights = compute_weights(policy, &sorted_sizes)?;
    let reference = updates[*order.first().ok_or_else(|| Error::Argument("no updates".into()))?].1;
    for &i in &order[1..] {
        reference.check_same_structure(updates[i].1)?;
    }
    let mut out = reference.clone();
    for (pi, p) in out.params_mut().iter_mut().enumerate() {
        let base = reference.params()[pi].value.data();
        let mut acc = vec![0.0; base.len()];
        for (rank, &i) in order.iter().enumerate().skip(1) {
            let w = weights[rank];
            for ((a, &v), &r) in acc.iter_mut().zip(updates[i].1.params()[pi].value.data()).zip(base) {
                *a += w * (v - r);
            }
        }
        for ((dst, &r), a) in p.value.data_mut().iter_mut().zip(base).zip(acc) {
            *dst = r + a;
        }
        p.zero_grad();
    }
    Ok(out)
}

/// Parameter paths the server received, one list per round. Rejects any
/// HEAD-tagged tensor before it is stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerAudit {
    pub rounds: Vec<Vec<String>>,
}

impl ServerAudit {
    pub fn begin_round(&mut self) {
        self.rounds.push(Vec::new());
    }

    pub fn receive(&mut self, client: u32, update: &ParamSet) -> Result<()> {
        for (p, tag) in update.iter() {
            if tag != Partition::Body {
                return Err(Error::Protocol {
                    path: p.name.clone(),
                    reason: format!("client {client} uploaded a {tag:?} tensor to the server"),
                });
            }
        }
        let round = self
            .rounds
            .last_mut()
            .ok_or_else(|| Error::Argument("audit round not started".into()))?;
        round.extend(update.names().map(|n| format!("{client}/{n}")));
        Ok(())
    }

    pub fn holds_only_body(&self) -> bool {
        self.rounds
            .iter()
            .flatten()
            .all(|p| !p.split_once('/').is_some_and(|(_, n)| n.starts_with("head.")))
    }
}
