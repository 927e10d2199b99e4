use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{FarmSpec, RawWeighing, StaticCodes, AGE_MIN, N_MONTHS};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Vocabulary sizes of sex, breed, state and NRM region.
pub const CATEGORY_CARDINALITIES: [usize; 4] = [2, 9, 4, 10];

/// Brody growth defaults shared by all farms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthParams {
    /// Mature weight `A₀`, kg.
    pub mature_weight_kg: f64,
    pub b: f64,
    /// Maturation rate per month.
    pub k: f64,
    /// Log-scale sd of the per-animal factor.
    pub animal_factor_sd: f64,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            mature_weight_kg: 650.0,
            b: 0.9,
            k: 0.08,
            animal_factor_sd: 0.1,
        }
    }
}

impl GrowthParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mature_weight_kg > 0.0) {
            return Err(Error::config("data.growth.mature_weight_kg", "must be > 0"));
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::config("data.growth.b", "must lie in (0, 1)"));
        }
        if !(self.k > 0.0) {
            return Err(Error::config("data.growth.k", "must be > 0"));
        }
        if !(self.animal_factor_sd >= 0.0) {
            return Err(Error::config("data.growth.animal_factor_sd", "must be >= 0"));
        }
        Ok(())
    }
}

/// `w(a) = A·(1 − b·e^{−k·a})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub asymptote: f64,
    pub b: f64,
    pub k: f64,
}

impl GrowthCurve {
    pub fn weight_at(&self, age_months: f64) -> f64 {
        self.asymptote * (1.0 - self.b * (-self.k * age_months).exp())
    }

    /// Noise-free weights at ages 2..=24.
    pub fn monthly(&self) -> Vec<f64> {
        (0..N_MONTHS)
            .map(|i| self.weight_at((AGE_MIN as usize + i) as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Animal {
    pub animal_id: u64,
    pub farm_id: u32,
    pub static_codes: StaticCodes,
    pub curve: GrowthCurve,
}

pub fn animal_id(farm_id: u32, index: usize) -> u64 {
    ((farm_id as u64) << 32) | index as u64
}

/// Ground-truth animals for every farm, in spec order. Each animal draws from
/// its own stream keyed by `(seed, animal_id)`.
pub fn generate_population(specs: &[FarmSpec], growth: &GrowthParams, seed: u64) -> Result<Vec<Animal>> {
    growth.validate()?;
    let mut seen = std::collections::BTreeSet::new();
    for (i, s) in specs.iter().enumerate() {
        s.validate(&format!("data.farms[{i}]"))?;
        if !seen.insert(s.farm_id) {
            return Err(Error::config(format!("data.farms[{i}].farm_id"), "duplicate farm id"));
        }
        if s.state_id >= CATEGORY_CARDINALITIES[2] {
            return Err(Error::config(format!("data.farms[{i}].state_id"), "out of range"));
        }
        if s.region_id >= CATEGORY_CARDINALITIES[3] {
            return Err(Error::config(format!("data.farms[{i}].region_id"), "out of range"));
        }
    }
    let factor = LogNormal::new(0.0, growth.animal_factor_sd)
        .map_err(|e| Error::config("data.growth.animal_factor_sd", e.to_string()))?;
    let mut out = Vec::with_capacity(specs.iter().map(|s| s.n_animals).sum());
    for spec in specs {
        for i in 0..spec.n_animals {
            let id = animal_id(spec.farm_id, i);
            let mut rng = stream_rng(seed, Stream::Animal, &[id]);
            let f = factor.sample(&mut rng);
            let sex = rng.random_range(0..CATEGORY_CARDINALITIES[0]);
            let breed = rng.random_range(0..CATEGORY_CARDINALITIES[1]);
            out.push(Animal {
                animal_id: id,
                farm_id: spec.farm_id,
                static_codes: vec![sex, breed, spec.state_id, spec.region_id],
                curve: GrowthCurve {
                    asymptote: spec.growth_bias * growth.mature_weight_kg * f,
                    b: growth.b,
                    k: growth.k * spec.maturity_bias,
                },
            });
        }
    }
    Ok(out)
}

/// Draws `max(1, Poisson(obs_rate))` distinct integer ages (capped at 23)
/// and returns noisy weighings sorted by age.
pub fn sparsify<R: Rng>(
    animal_id: u64,
    curve: &GrowthCurve,
    obs_rate: f64,
    noise_sd: f64,
    rng: &mut R,
) -> Vec<RawWeighing> {
    let count = Poisson::new(obs_rate)
        .map(|p| p.sample(rng) as usize)
        .unwrap_or(N_MONTHS)
        .clamp(1, N_MONTHS);
    let mut slots = index::sample(rng, N_MONTHS, count).into_vec();
    slots.sort_unstable();
    let noise = Normal::new(0.0, noise_sd).expect("noise_sd validated");
    slots
        .into_iter()
        .map(|s| {
            let age = (AGE_MIN as usize + s) as f64;
            let w = curve.weight_at(age) + if noise_sd > 0.0 { noise.sample(rng) } else { 0.0 };
            RawWeighing {
                animal_id,
                age_months: age,
                weight_kg: w.max(1.0),
            }
        })
        .collect()
}

pub fn sparsify_animal(animal: &Animal, spec: &FarmSpec, seed: u64) -> Vec<RawWeighing> {
    let mut rng = stream_rng(seed, Stream::Weighing, &[animal.animal_id]);
    sparsify(animal.animal_id, &animal.curve, spec.obs_rate, spec.noise_sd, &mut rng)
}

struct Row(u32, usize, f64, f64, f64);

/// Named farm lists.
///
/// `table3-mix` spreads 19 farms over the five farm-size strata (by expected
/// weighing count: ≤50, 51–200, 201–500, 501–1000, >1000). `smoke` is two
/// 20-animal farms.
pub fn preset(name: &str) -> Option<Vec<FarmSpec>> {
    // (farm_id, animals, growth_bias, maturity_bias, noise_sd)
    let rows: Vec<Row> = match name {
        "smoke" => vec![Row(0, 20, 1.0, 1.0, 8.0), Row(1, 20, 1.15, 1.0, 8.0)],
        "table3-mix" => vec![
            Row(0, 3, 0.82, 1.30, 8.0),
            Row(1, 3, 1.18, 0.75, 10.0),
            Row(2, 4, 0.88, 1.20, 8.0),
            Row(3, 6, 1.15, 0.80, 9.0),
            Row(4, 8, 0.85, 1.25, 7.0),
            Row(5, 12, 1.20, 0.80, 10.0),
            Row(6, 16, 0.90, 1.15, 8.0),
            Row(7, 22, 1.12, 0.85, 9.0),
            Row(8, 30, 0.84, 1.25, 8.0),
            Row(9, 40, 1.16, 0.80, 7.0),
            Row(10, 52, 0.92, 1.10, 10.0),
            Row(11, 66, 1.10, 0.90, 8.0),
            Row(12, 95, 0.86, 1.20, 9.0),
            Row(13, 130, 1.14, 0.85, 8.0),
            Row(14, 170, 0.95, 1.05, 7.0),
            Row(15, 240, 1.08, 0.95, 8.0),
            Row(16, 320, 0.97, 1.05, 9.0),
            Row(17, 430, 1.03, 0.97, 8.0),
            Row(18, 480, 0.99, 1.02, 8.0),
        ],
        _ => return None,
    };
    Some(
        rows.into_iter()
            .map(|Row(farm_id, n, gb, mb, sd)| FarmSpec {
                farm_id,
                n_animals: n,
                region_id: farm_id as usize % CATEGORY_CARDINALITIES[3],
                state_id: (farm_id as usize % CATEGORY_CARDINALITIES[3]) * CATEGORY_CARDINALITIES[2]
                    / CATEGORY_CARDINALITIES[3],
                growth_bias: gb,
                noise_sd: sd,
                obs_rate: 2.5,
                maturity_bias: mb,
            })
            .collect(),
    )
}
