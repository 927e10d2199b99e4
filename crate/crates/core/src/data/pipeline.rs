use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::sparsify_animal;
use super::{
    annotate_distance_credibility, generate_population, make_instances, normalize, preset,
    quantile_track_fill, split_clients, ClientSplit, FarmSpec, GrowthParams, MonthlyTrajectory,
    NormalizationSpec, PopulationQuantiles, RawWeighing, N_MONTHS,
};
use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Named farm list; ignored when `farms` is given.
    pub preset: Option<String>,
    pub farms: Option<Vec<FarmSpec>>,
    /// Overrides every farm's `obs_rate`.
    pub obs_rate: Option<f64>,
    /// Overrides every farm's `noise_sd`.
    pub noise_sd: Option<f64>,
    pub growth: GrowthParams,
    pub normalization: NormalizationSpec,
    pub window_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub test_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            preset: Some("table3-mix".into()),
            farms: None,
            obs_rate: None,
            noise_sd: None,
            growth: GrowthParams::default(),
            normalization: NormalizationSpec::default(),
            window_len: 12,
            horizon: 3,
            stride: 3,
            test_fraction: 0.2,
        }
    }
}

impl DataConfig {
    /// Resolved farm list with overrides applied.
    pub fn farm_specs(&self) -> Result<Vec<FarmSpec>> {
        let mut farms = match (&self.farms, &self.preset) {
            (Some(f), _) => f.clone(),
            (None, Some(name)) => preset(name)
                .ok_or_else(|| Error::config("data.preset", format!("unknown preset `{name}`")))?,
            (None, None) => return Err(Error::config("data", "either `farms` or `preset` is required")),
        };
        if farms.is_empty() {
            return Err(Error::config("data.farms", "at least one farm is required"));
        }
        for f in &mut farms {
            if let Some(r) = self.obs_rate {
                f.obs_rate = r;
            }
            if let Some(sd) = self.noise_sd {
                f.noise_sd = sd;
            }
        }
        for (i, f) in farms.iter().enumerate() {
            f.validate(&format!("data.farms[{i}]"))?;
        }
        Ok(farms)
    }

    pub fn validate(&self) -> Result<()> {
        self.farm_specs()?;
        self.growth.validate()?;
        self.normalization.validate()?;
        if self.window_len == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::config("data.window_len", "window_len, horizon and stride must be >= 1"));
        }
        if self.window_len + self.horizon > N_MONTHS {
            return Err(Error::config("data.window_len", "window_len + horizon exceeds 23 months"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("data.test_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmData {
    pub spec: FarmSpec,
    pub trajectories: Vec<MonthlyTrajectory>,
    /// Raw weighings recorded on the farm (its IAM count).
    pub iam_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    /// Ages whose quantile bucket was empty and used the nearest populated age.
    pub quantile_fallback_ages: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub farms: Vec<FarmData>,
    pub report: PipelineReport,
}

/// Generate, sparsify, fill and annotate the whole population.
pub fn build_dataset(cfg: &DataConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let specs = cfg.farm_specs()?;
    let animals = generate_population(&specs, &cfg.growth, seed)?;
    let spec_of = |farm: u32| specs.iter().find(|s| s.farm_id == farm).expect("farm exists");

    let raw: Vec<Vec<RawWeighing>> = animals
        .par_iter()
        .map(|a| sparsify_animal(a, spec_of(a.farm_id), seed))
        .collect();
    let pq = PopulationQuantiles::from_weighings(raw.iter().flatten())?;

    let trajectories: Vec<MonthlyTrajectory> = animals
        .par_iter()
        .zip(raw.par_iter())
        .map(|(a, w)| {
            let filled = quantile_track_fill(w, &pq)?;
            annotate_distance_credibility(a.animal_id, a.farm_id, a.static_codes.clone(), &filled)
        })
        .collect::<Result<_>>()?;

    let mut farms: Vec<FarmData> = specs
        .iter()
        .map(|s| FarmData {
            spec: s.clone(),
            trajectories: Vec::with_capacity(s.n_animals),
            iam_count: 0,
        })
        .collect();
    for ((a, t), w) in animals.iter().zip(trajectories).zip(&raw) {
        let farm = farms
            .iter_mut()
            .find(|f| f.spec.farm_id == a.farm_id)
            .expect("farm exists");
        farm.iam_count += w.len();
        farm.trajectories.push(t);
    }
    Ok(Dataset {
        farms,
        report: PipelineReport {
            quantile_fallback_ages: pq.fallback_ages(),
        },
    })
}

impl Dataset {
    /// Normalized, windowed instances of every animal in farm order, plus the
    /// number of clipped feature values.
    pub fn instances(&self, cfg: &DataConfig) -> Result<(Vec<Instance>, usize)> {
        let mut out = Vec::new();
        let mut clipped = 0;
        for farm in &self.farms {
            for t in &farm.trajectories {
                let n = normalize(t, &cfg.normalization);
                clipped += n.clipped;
                out.extend(make_instances(&n, cfg.window_len, cfg.horizon, cfg.stride)?);
            }
        }
        Ok((out, clipped))
    }

    /// Per-farm train/test split, ordered by farm id.
    pub fn split(&self, cfg: &DataConfig, seed: u64) -> Result<(Vec<ClientSplit>, super::SplitReport)> {
        let (inst, _) = self.instances(cfg)?;
        split_clients(inst, cfg.test_fraction, seed)
    }

    pub fn num_animals(&self) -> usize {
        self.farms.iter().map(|f| f.trajectories.len()).sum()
    }

    pub fn iam_count(&self, farm_id: u32) -> Option<usize> {
        self.farms.iter().find(|f| f.spec.farm_id == farm_id).map(|f| f.iam_count)
    }
}
