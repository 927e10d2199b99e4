//! Quantile-track inter- and extrapolation.
//!
//! Every observed weight is converted to its rank among all population
//! weighings at the same age. Ranks are interpolated linearly between an
//! animal's observations and held flat beyond them; each month's weight is the
//! population quantile at that month and rank.

use super::{RawWeighing, AGE_MIN, N_MONTHS};
use crate::error::{Error, Result};

/// Empirical age-conditional quantile functions, one per monthly slot.
#[derive(Debug, Clone)]
pub struct PopulationQuantiles {
    sorted: Vec<Vec<f64>>,
    /// For each slot, the slot whose sample it actually uses.
    source: Vec<usize>,
}

fn slot_of(age: f64) -> Option<usize> {
    let s = age - AGE_MIN as f64;
    if s.fract() != 0.0 || s < 0.0 || s >= N_MONTHS as f64 {
        None
    } else {
        Some(s as usize)
    }
}

impl PopulationQuantiles {
    pub fn from_weighings<'a>(weighings: impl IntoIterator<Item = &'a RawWeighing>) -> Result<Self> {
        let mut sorted = vec![Vec::new(); N_MONTHS];
        for w in weighings {
            let slot = slot_of(w.age_months).ok_or_else(|| {
                Error::Argument(format!("weighing at non-monthly age {}", w.age_months))
            })?;
            sorted[slot].push(w.weight_kg);
        }
        for s in &mut sorted {
            s.sort_by(f64::total_cmp);
        }
        let populated: Vec<usize> = (0..N_MONTHS).filter(|&i| !sorted[i].is_empty()).collect();
        if populated.is_empty() {
            return Err(Error::Argument("no weighings to build quantiles from".into()));
        }
        let source = (0..N_MONTHS)
            .map(|i| {
                *populated
                    .iter()
                    .min_by_key(|&&p| (p.abs_diff(i), p))
                    .expect("non-empty")
            })
            .collect();
        Ok(Self { sorted, source })
    }

    /// Ages (months) whose bucket was empty and borrowed a neighbour's sample.
    pub fn fallback_ages(&self) -> Vec<u32> {
        (0..N_MONTHS)
            .filter(|&i| self.source[i] != i)
            .map(|i| AGE_MIN + i as u32)
            .collect()
    }

    fn bucket(&self, slot: usize) -> &[f64] {
        &self.sorted[self.source[slot]]
    }

    /// Population quantile at `slot` for rank `q ∈ [0, 1]`, linear between order statistics.
    pub fn quantile(&self, slot: usize, q: f64) -> f64 {
        let s = self.bucket(slot);
        let n = s.len();
        if n == 1 {
            return s[0];
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = (pos.floor() as usize).min(n - 1);
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        s[lo] + frac * (s[hi] - s[lo])
    }

    /// Inverse of [`quantile`](Self::quantile); tied values take their mean position.
    pub fn rank(&self, slot: usize, w: f64) -> f64 {
        let s = self.bucket(slot);
        let n = s.len();
        if n == 1 {
            return 0.5;
        }
        if w < s[0] {
            return 0.0;
        }
        if w > s[n - 1] {
            return 1.0;
        }
        let lo = s.partition_point(|&v| v < w);
        let hi = s.partition_point(|&v| v <= w);
        let pos = if hi > lo {
            (lo + hi - 1) as f64 / 2.0
        } else {
            let j = lo - 1;
            j as f64 + (w - s[j]) / (s[j + 1] - s[j])
        };
        pos / (n - 1) as f64
    }
}

/// Fills all 23 monthly slots for one animal. Returns `(weight_kg, observed)` per slot.
pub fn quantile_track_fill(raw: &[RawWeighing], pq: &PopulationQuantiles) -> Result<Vec<(f64, bool)>> {
    let obs = observed_slots(raw)?;
    let ranks: Vec<(usize, f64)> = obs.iter().map(|&(s, w)| (s, pq.rank(s, w))).collect();
    let mut out = Vec::with_capacity(N_MONTHS);
    for slot in 0..N_MONTHS {
        if let Some(&(_, w)) = obs.iter().find(|(s, _)| *s == slot) {
            out.push((w, true));
            continue;
        }
        let q = track_rank(&ranks, slot);
        out.push((pq.quantile(slot, q), false));
    }
    Ok(out)
}

fn track_rank(ranks: &[(usize, f64)], slot: usize) -> f64 {
    let first = ranks[0];
    let last = ranks[ranks.len() - 1];
    if slot <= first.0 {
        return first.1;
    }
    if slot >= last.0 {
        return last.1;
    }
    let i = ranks.partition_point(|(s, _)| *s < slot);
    let (s0, q0) = ranks[i - 1];
    let (s1, q1) = ranks[i];
    q0 + (q1 - q0) * (slot - s0) as f64 / (s1 - s0) as f64
}

fn observed_slots(raw: &[RawWeighing]) -> Result<Vec<(usize, f64)>> {
    if raw.is_empty() {
        return Err(Error::Argument("animal has no observations".into()));
    }
    let mut obs = Vec::with_capacity(raw.len());
    for w in raw {
        let slot = slot_of(w.age_months).ok_or_else(|| {
            Error::Argument(format!("weighing at non-monthly age {}", w.age_months))
        })?;
        if obs.last().is_some_and(|&(s, _)| s >= slot) {
            return Err(Error::Argument(format!(
                "animal {}: ages not strictly increasing",
                w.animal_id
            )));
        }
        obs.push((slot, w.weight_kg));
    }
    Ok(obs)
}

/// Last observation carried forward (first observation carried backward).
pub fn fill_lofc(raw: &[RawWeighing]) -> Result<Vec<f64>> {
    let obs = observed_slots(raw)?;
    Ok((0..N_MONTHS)
        .map(|slot| {
            obs.iter()
                .rev()
                .find(|(s, _)| *s <= slot)
                .unwrap_or(&obs[0])
                .1
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(age: u32, kg: f64) -> RawWeighing {
        RawWeighing {
            animal_id: 0,
            age_months: age as f64,
            weight_kg: kg,
        }
    }

    /// Population where every age has weights {100,200,300} + 10·age.
    fn population() -> PopulationQuantiles {
        let mut all = Vec::new();
        for age in 2..=24u32 {
            for base in [100.0, 200.0, 300.0] {
                all.push(w(age, base + 10.0 * age as f64));
            }
        }
        PopulationQuantiles::from_weighings(&all).unwrap()
    }

    #[test]
    fn quantile_and_rank_are_inverse_on_grid() {
        let pq = population();
        assert_eq!(pq.quantile(0, 0.5), 220.0);
        assert_eq!(pq.quantile(0, 0.25), 170.0);
        assert_eq!(pq.rank(0, 220.0), 0.5);
        assert_eq!(pq.rank(0, 170.0), 0.25);
    }

    #[test]
    fn median_observation_follows_median_curve() {
        let pq = population();
        let filled = quantile_track_fill(&[w(7, 270.0)], &pq).unwrap();
        for (slot, &(kg, _)) in filled.iter().enumerate() {
            assert_eq!(kg, pq.quantile(slot, 0.5));
        }
    }

    #[test]
    fn equal_ranks_give_constant_track() {
        let pq = population();
        let filled = quantile_track_fill(&[w(4, 140.0), w(20, 300.0)], &pq).unwrap();
        for (slot, &(kg, _)) in filled.iter().enumerate() {
            assert!((kg - pq.quantile(slot, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn observed_weights_kept_exactly() {
        let pq = population();
        let raw = [w(3, 251.123), w(10, 301.7)];
        let filled = quantile_track_fill(&raw, &pq).unwrap();
        assert_eq!(filled[1], (251.123, true));
        assert_eq!(filled[8], (301.7, true));
        assert!(!filled[0].1);
    }

    #[test]
    fn empty_bucket_falls_back_to_nearest() {
        let pq = PopulationQuantiles::from_weighings(&[w(2, 100.0), w(10, 200.0)]).unwrap();
        assert_eq!(pq.quantile(3, 0.5), 100.0);
        assert_eq!(pq.quantile(20, 0.5), 200.0);
        assert_eq!(pq.fallback_ages().len(), 21);
    }

    #[test]
    fn lofc_baseline() {
        let f = fill_lofc(&[w(4, 10.0), w(6, 20.0)]).unwrap();
        assert_eq!(&f[..6], &[10.0, 10.0, 10.0, 10.0, 20.0, 20.0]);
        assert_eq!(f[22], 20.0);
    }

    #[test]
    fn unsorted_input_rejected() {
        let pq = population();
        assert!(quantile_track_fill(&[w(6, 1.0), w(4, 1.0)], &pq).is_err());
        assert!(quantile_track_fill(&[], &pq).is_err());
    }
}
