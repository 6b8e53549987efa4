use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{evaluate, Classifier};
use crate::trajgen::{build_dataset, DatasetSpec};

/// Default inverse signal-to-noise grid.
pub const DEFAULT_NOISE_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeAccuracy {
    pub scheme: String,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over replicates divided by their root count.
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub noise: f64,
    pub schemes: Vec<SchemeAccuracy>,
    /// Mean accuracy of the first scheme minus that of the second.
    pub gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurve {
    pub test_spec: DatasetSpec,
    pub levels: Vec<NoiseLevel>,
}

pub fn mean_and_std_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Accuracy of every replicate of every scheme on a test set regenerated at
/// each noise level. The test seed is shared across levels, so levels differ
/// only in the injected noise.
pub fn noise_robustness_curve(
    schemes: &[(&str, Vec<&dyn Classifier>)],
    test_spec: &DatasetSpec,
    grid: &[f64],
) -> Result<NoiseCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty noise grid".into()));
    }
    if schemes.is_empty() || schemes.iter().any(|(_, m)| m.len() < 2) {
        return Err(Error::InvalidConfig("every scheme needs at least two model replicates".into()));
    }
    let mut levels = Vec::with_capacity(grid.len());
    for &noise in grid {
        let spec = DatasetSpec {
            noise_amplitude: noise,
            ..test_spec.clone()
        };
        let test = build_dataset(&spec)?;
        let mut out = Vec::with_capacity(schemes.len());
        for (name, models) in schemes {
            let accuracies = models
                .iter()
                .map(|m| Ok(evaluate(*m, &test)?.accuracy))
                .collect::<Result<Vec<_>>>()?;
            let (mean, std_error) = mean_and_std_error(&accuracies);
            out.push(SchemeAccuracy {
                scheme: name.to_string(),
                accuracies,
                mean,
                std_error,
            });
        }
        let gap = (out.len() >= 2).then(|| out[0].mean - out[1].mean);
        levels.push(NoiseLevel {
            noise,
            schemes: out,
            gap,
        });
    }
    Ok(NoiseCurve {
        test_spec: test_spec.clone(),
        levels,
    })
}
