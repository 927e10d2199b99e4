use super::{NormalizedTrajectory, N_MONTHS};
use crate::error::{Error, Result};
use crate::model::Instance;
use crate::nn::Tensor;

/// Sliding windows over the 23 monthly slots: `window_len` input months
/// followed by `horizon` target months, advancing by `stride`.
pub fn make_instances(
    traj: &NormalizedTrajectory,
    window_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<Instance>> {
    if window_len == 0 || horizon == 0 || stride == 0 {
        return Err(Error::config("data.window", "window_len, horizon and stride must be >= 1"));
    }
    if window_len + horizon > N_MONTHS {
        return Err(Error::config(
            "data.window_len",
            format!("window_len + horizon = {} exceeds {N_MONTHS} months", window_len + horizon),
        ));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_len + horizon <= traj.features.len() {
        let input = start..start + window_len;
        let x = traj.features[input.clone()].iter().flatten().copied().collect();
        let m = traj.observed[input].iter().map(|&o| o as u8 as f64).collect();
        let targets = start + window_len..start + window_len + horizon;
        let y = targets.clone().map(|i| traj.features[i][0]).collect();
        let y_kg = traj.weight_kg[targets].to_vec();
        out.push(Instance {
            x: Tensor::matrix(window_len, 4, x)?,
            m: Tensor::matrix(window_len, 1, m)?,
            c: traj.static_codes.clone(),
            y,
            y_kg,
            farm_id: traj.farm_id,
            animal_id: traj.animal_id,
        });
        start += stride;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj() -> NormalizedTrajectory {
        NormalizedTrajectory {
            animal_id: 9,
            farm_id: 2,
            static_codes: vec![0, 1, 2, 3],
            features: (0..N_MONTHS).map(|i| [i as f64 / 100.0, i as f64, 0.0, 1.0]).collect(),
            weight_kg: (0..N_MONTHS).map(|i| i as f64 * 10.0).collect(),
            observed: (0..N_MONTHS).map(|i| i % 5 == 0).collect(),
            clipped: 0,
        }
    }

    #[test]
    fn default_windows_start_at_months_2_5_8() {
        let inst = make_instances(&traj(), 12, 3, 3).unwrap();
        assert_eq!(inst.len(), 3);
        // feature 1 holds the slot index; age = slot + 2
        let starts: Vec<f64> = inst.iter().map(|i| i.x.row(0)[1] + 2.0).collect();
        assert_eq!(starts, vec![2.0, 5.0, 8.0]);
    }

    #[test]
    fn targets_follow_inputs_and_mask_is_projection() {
        let t = traj();
        for inst in make_instances(&t, 12, 3, 3).unwrap() {
            let last_in = inst.x.row(11)[1];
            let s = inst.x.row(0)[1] as usize;
            for (h, &y) in inst.y.iter().enumerate() {
                let slot = (y * 100.0).round();
                assert!(slot > last_in);
                assert_eq!(slot as usize, s + 12 + h);
                assert_eq!(inst.y_kg[h], t.weight_kg[s + 12 + h]);
            }
            for k in 0..12 {
                assert_eq!(inst.m.row(k)[0] == 1.0, t.observed[s + k]);
            }
        }
    }

    #[test]
    fn oversized_window_is_config_error() {
        assert!(make_instances(&traj(), 21, 3, 1).is_err());
        assert_eq!(make_instances(&traj(), 20, 3, 1).unwrap().len(), 1);
    }
}
