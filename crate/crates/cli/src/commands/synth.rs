use fedstock_core::data::io::{read_farm, write_farm};
use fedstock_core::data::{build_dataset, Dataset, PipelineReport};
use fedstock_core::eval::Bucket;

use crate::artifacts::{check_hash, create_dir, read_json, write_json, FarmEntry, Layout, Manifest, Totals};
use crate::config::{sha256_hex, ExperimentConfig};
use crate::error::{CliError, Result};

/// Label of the default farm-size bucket holding `iam`.
pub fn bucket_label(iam: usize) -> String {
    Bucket::defaults()
        .into_iter()
        .find(|b| b.contains(iam))
        .map(|b| b.label)
        .unwrap_or_default()
}

/// Generates the dataset and writes one file per farm plus the manifest.
pub fn synth(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let dataset = build_dataset(&cfg.data, cfg.seed)?;
    let dir = layout.data_dir();
    create_dir(&dir)?;
    let stamp = cfg.stamp();
    let mut farms = Vec::with_capacity(dataset.farms.len());
    for farm in &dataset.farms {
        let path = write_farm(&dir, &stamp, farm)?;
        let bytes = std::fs::read(&path).map_err(CliError::io(&path))?;
        farms.push(FarmEntry {
            farm_id: farm.spec.farm_id,
            file: path.file_name().expect("file name").to_string_lossy().into_owned(),
            n_animals: farm.trajectories.len(),
            iam_count: farm.iam_count,
            bucket: bucket_label(farm.iam_count),
            sha256: sha256_hex(&bytes),
        });
    }
    let buckets = Bucket::defaults()
        .into_iter()
        .map(|b| {
            let n = farms.iter().filter(|f| b.contains(f.iam_count)).count();
            (b.label, n)
        })
        .collect();
    let manifest = Manifest {
        stamp,
        data_hash: cfg.data_hash(),
        totals: Totals {
            farms: farms.len(),
            animals: farms.iter().map(|f| f.n_animals).sum(),
            iam_count: farms.iter().map(|f| f.iam_count).sum(),
        },
        farms,
        buckets,
        quantile_fallback_ages: dataset.report.quantile_fallback_ages.clone(),
    };
    write_json(&layout.manifest(), &manifest)?;
    log::info!(
        "wrote {} farms, {} animals, {} IAMs to {}",
        manifest.totals.farms,
        manifest.totals.animals,
        manifest.totals.iam_count,
        dir.display()
    );
    Ok(manifest)
}

/// Reads the dataset written by [`synth`], checking that it was generated
/// from the same seed and data section and that no file changed since.
pub fn load_dataset(cfg: &ExperimentConfig, layout: &Layout) -> Result<(Manifest, Dataset)> {
    let manifest_path = layout.manifest();
    let manifest: Manifest = read_json(&manifest_path, "dataset manifest; run `fedstock synth` first")?;
    check_hash(&manifest_path, &cfg.data_hash(), &manifest.data_hash)?;
    let mut farms = Vec::with_capacity(manifest.farms.len());
    for entry in &manifest.farms {
        let path = layout.data_dir().join(&entry.file);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(CliError::MissingInput {
                    path,
                    what: format!("data file of farm {}", entry.farm_id),
                })
            }
            Err(e) => return Err(CliError::io(&path)(e)),
        };
        check_hash(&path, &entry.sha256, &sha256_hex(&bytes))?;
        let (_, farm) = read_farm(&path)?;
        farms.push(farm);
    }
    let dataset = Dataset {
        farms,
        report: PipelineReport {
            quantile_fallback_ages: manifest.quantile_fallback_ages.clone(),
        },
    };
    Ok((manifest, dataset))
}
