use serde::{Deserialize, Serialize};

use super::{MonthSlot, MonthlyTrajectory, N_MONTHS};
use crate::error::{Error, Result};

/// `1 / (1 + d)`: 1 at an observation, strictly decreasing with distance.
pub fn credibility(distance_months: f64) -> f64 {
    1.0 / (1.0 + distance_months)
}

/// Builds a [`MonthlyTrajectory`] from filled `(weight, observed)` slots by
/// attaching the age distance to the nearest observation and its credibility.
pub fn annotate_distance_credibility(
    animal_id: u64,
    farm_id: u32,
    static_codes: Vec<usize>,
    filled: &[(f64, bool)],
) -> Result<MonthlyTrajectory> {
    if filled.len() != N_MONTHS {
        return Err(Error::Argument(format!("expected {N_MONTHS} slots, got {}", filled.len())));
    }
    let observed: Vec<usize> = (0..N_MONTHS).filter(|&i| filled[i].1).collect();
    if observed.is_empty() {
        return Err(Error::Argument(format!("animal {animal_id} has no observed month")));
    }
    let months = filled
        .iter()
        .enumerate()
        .map(|(i, &(weight_kg, observed_flag))| {
            let d = observed.iter().map(|&o| o.abs_diff(i)).min().expect("non-empty") as f64;
            MonthSlot {
                weight_kg,
                observed: observed_flag,
                distance_months: d,
                credibility: credibility(d),
            }
        })
        .collect();
    Ok(MonthlyTrajectory {
        animal_id,
        farm_id,
        static_codes,
        months,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// Returns the clipped value and whether clipping happened.
    pub fn normalize(&self, v: f64) -> (f64, bool) {
        let n = (v - self.min) / (self.max - self.min);
        if n < 0.0 {
            (0.0, true)
        } else if n > 1.0 {
            (1.0, true)
        } else {
            (n, false)
        }
    }

    pub fn denormalize(&self, n: f64) -> f64 {
        n * (self.max - self.min) + self.min
    }
}

/// Fixed physical min/max bounds; never estimated from data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizationSpec {
    pub weight: Bounds,
    pub age: Bounds,
    pub distance: Bounds,
    pub credibility: Bounds,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self {
            weight: Bounds::new(0.0, 1000.0),
            age: Bounds::new(2.0, 24.0),
            distance: Bounds::new(0.0, 22.0),
            credibility: Bounds::new(0.0, 1.0),
        }
    }
}

impl NormalizationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("weight", self.weight),
            ("age", self.age),
            ("distance", self.distance),
            ("credibility", self.credibility),
        ] {
            if !(b.min < b.max) || !b.min.is_finite() || !b.max.is_finite() {
                return Err(Error::config(
                    format!("data.normalization.{name}"),
                    "min must be below max",
                ));
            }
        }
        Ok(())
    }
}

/// Per-month features `[weight, age, distance, credibility]` in `[0, 1]`,
/// plus the observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTrajectory {
    pub animal_id: u64,
    pub farm_id: u32,
    pub static_codes: Vec<usize>,
    pub features: Vec<[f64; 4]>,
    /// Unnormalized monthly weights.
    pub weight_kg: Vec<f64>,
    pub observed: Vec<bool>,
    /// Number of feature values that had to be clipped.
    pub clipped: usize,
}

pub fn normalize(traj: &MonthlyTrajectory, spec: &NormalizationSpec) -> NormalizedTrajectory {
    let mut clipped = 0;
    let mut norm = |b: &Bounds, v: f64| {
        let (n, c) = b.normalize(v);
        clipped += c as usize;
        n
    };
    let features = traj
        .months
        .iter()
        .enumerate()
        .map(|(i, m)| {
            [
                norm(&spec.weight, m.weight_kg),
                norm(&spec.age, MonthlyTrajectory::age_of(i) as f64),
                norm(&spec.distance, m.distance_months),
                norm(&spec.credibility, m.credibility),
            ]
        })
        .collect();
    NormalizedTrajectory {
        animal_id: traj.animal_id,
        farm_id: traj.farm_id,
        static_codes: traj.static_codes.clone(),
        features,
        weight_kg: traj.months.iter().map(|m| m.weight_kg).collect(),
        observed: traj.months.iter().map(|m| m.observed).collect(),
        clipped,
    }
}
