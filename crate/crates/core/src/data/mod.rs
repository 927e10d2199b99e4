//! Synthetic multi-farm population and the preprocessing pipeline that turns
//! sparse weighings into monthly trajectories and model instances.

mod instances;
pub mod io;
mod pipeline;
mod preprocess;
mod quantile;
mod split;
mod synth;

use serde::{Deserialize, Serialize};

pub use instances::make_instances;
pub use pipeline::{build_dataset, DataConfig, Dataset, FarmData, PipelineReport};
pub use preprocess::{annotate_distance_credibility, credibility, normalize, Bounds, NormalizationSpec, NormalizedTrajectory};
pub use quantile::{fill_lofc, quantile_track_fill, PopulationQuantiles};
pub use split::{hold_out_validation, split_clients, ClientSplit, SplitReport};
pub use synth::{generate_population, preset, sparsify, sparsify_animal, Animal, GrowthCurve, GrowthParams, CATEGORY_CARDINALITIES};

/// First and last age (months) of the aligned record.
pub const AGE_MIN: u32 = 2;
pub const AGE_MAX: u32 = 24;
/// Number of monthly slots, ages 2..=24.
pub const N_MONTHS: usize = (AGE_MAX - AGE_MIN + 1) as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FarmSpec {
    pub farm_id: u32,
    pub n_animals: usize,
    pub region_id: usize,
    pub state_id: usize,
    /// Multiplier on mature weight.
    pub growth_bias: f64,
    /// Measurement noise, kg.
    pub noise_sd: f64,
    /// Expected weighings per animal.
    #[serde(default = "default_obs_rate")]
    pub obs_rate: f64,
    /// Multiplier on the Brody maturation rate.
    #[serde(default = "one")]
    pub maturity_bias: f64,
}

fn default_obs_rate() -> f64 {
    2.5
}

fn one() -> f64 {
    1.0
}

impl FarmSpec {
    pub fn validate(&self, path: &str) -> crate::Result<()> {
        use crate::Error;
        if self.n_animals < 1 {
            return Err(Error::config(format!("{path}.n_animals"), "must be >= 1"));
        }
        if !(self.growth_bias > 0.0 && self.growth_bias.is_finite()) {
            return Err(Error::config(format!("{path}.growth_bias"), "must be > 0"));
        }
        if !(self.maturity_bias > 0.0 && self.maturity_bias.is_finite()) {
            return Err(Error::config(format!("{path}.maturity_bias"), "must be > 0"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config(format!("{path}.noise_sd"), "must be >= 0"));
        }
        if !(self.obs_rate >= 1.0 && self.obs_rate.is_finite()) {
            return Err(Error::config(format!("{path}.obs_rate"), "must be >= 1"));
        }
        Ok(())
    }
}

/// Static categorical codes, in model feature order: sex, breed, state, region.
pub type StaticCodes = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawWeighing {
    pub animal_id: u64,
    pub age_months: f64,
    pub weight_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthSlot {
    pub weight_kg: f64,
    pub observed: bool,
    pub distance_months: f64,
    pub credibility: f64,
}

/// One animal aligned to monthly slots for ages 2..=24.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyTrajectory {
    pub animal_id: u64,
    pub farm_id: u32,
    #[serde(rename = "static")]
    pub static_codes: StaticCodes,
    pub months: Vec<MonthSlot>,
}

impl MonthlyTrajectory {
    pub fn age_of(slot: usize) -> u32 {
        AGE_MIN + slot as u32
    }

    pub fn observed_count(&self) -> usize {
        self.months.iter().filter(|m| m.observed).count()
    }

    /// Checks slot count, observed ⟹ (distance 0, credibility 1), and
    /// credibility strictly decreasing in distance.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.months.len() != N_MONTHS {
            return Err(format!("animal {}: {} month slots", self.animal_id, self.months.len()));
        }
        for (i, m) in self.months.iter().enumerate() {
            if m.observed && (m.distance_months != 0.0 || m.credibility != 1.0) {
                return Err(format!("animal {}: observed slot {i} has distance {}", self.animal_id, m.distance_months));
            }
            if !(m.credibility > 0.0 && m.credibility <= 1.0) {
                return Err(format!("animal {}: credibility {} out of (0,1]", self.animal_id, m.credibility));
            }
            if !(m.weight_kg.is_finite() && m.weight_kg > 0.0) {
                return Err(format!("animal {}: weight {} at slot {i}", self.animal_id, m.weight_kg));
            }
        }
        for a in &self.months {
            for b in &self.months {
                if a.distance_months < b.distance_months && a.credibility <= b.credibility {
                    return Err(format!("animal {}: credibility not decreasing in distance", self.animal_id));
                }
            }
        }
        Ok(())
    }
}
