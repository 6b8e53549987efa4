//! Two-dimensional anomalous-diffusion trajectories for the eight
//! mechanism classes, plus the rescaling, noise and network-input
//! preprocessing applied to them.

mod dataset;
mod fbm;
mod generators;
mod transform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use dataset::{
    build_dataset, content_hash, read_dataset, trajectory_seed, write_dataset, Dataset, DatasetSpec,
    LengthLaw, DATASET_HEADER,
};
pub use fbm::{fgn_autocovariance, fgn_circulant, fgn_hosking};
pub use generators::{
    attm_parameters, ctrw_waiting_time, gen_trajectory, generate_process, levy_walk_flights,
    sample_exponent, Flight, Process, LW_MAX_SPEED,
};
pub use transform::{
    add_measurement_noise, preprocess_input, pooled_displacement_std, rescale_unit_variance,
};

/// The eight classification targets, in their fixed label order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "SubATTM")]
    SubAttm,
    #[serde(rename = "SubCTRW")]
    SubCtrw,
    #[serde(rename = "SubFBM")]
    SubFbm,
    #[serde(rename = "SubSBM")]
    SubSbm,
    #[serde(rename = "SupFBM")]
    SupFbm,
    #[serde(rename = "SupLW")]
    SupLw,
    #[serde(rename = "SupSBM")]
    SupSbm,
    #[serde(rename = "BM")]
    Bm,
}

pub const NUM_CLASSES: usize = 8;

impl Mechanism {
    pub const ALL: [Mechanism; NUM_CLASSES] = [
        Mechanism::SubAttm,
        Mechanism::SubCtrw,
        Mechanism::SubFbm,
        Mechanism::SubSbm,
        Mechanism::SupFbm,
        Mechanism::SupLw,
        Mechanism::SupSbm,
        Mechanism::Bm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::SubAttm => "SubATTM",
            Mechanism::SubCtrw => "SubCTRW",
            Mechanism::SubFbm => "SubFBM",
            Mechanism::SubSbm => "SubSBM",
            Mechanism::SupFbm => "SupFBM",
            Mechanism::SupLw => "SupLW",
            Mechanism::SupSbm => "SupSBM",
            Mechanism::Bm => "BM",
        }
    }

    pub fn process(self) -> Process {
        match self {
            Mechanism::SubAttm => Process::Attm,
            Mechanism::SubCtrw => Process::Ctrw,
            Mechanism::SubFbm | Mechanism::SupFbm => Process::Fbm,
            Mechanism::SubSbm | Mechanism::SupSbm => Process::Sbm,
            Mechanism::SupLw => Process::Lw,
            Mechanism::Bm => Process::Bm,
        }
    }

    /// Interval the dataset draws exponents from.
    pub fn sampling_range(self) -> (f64, f64) {
        match self {
            Mechanism::SubAttm | Mechanism::SubCtrw | Mechanism::SubFbm | Mechanism::SubSbm => {
                (0.1, 0.9)
            }
            Mechanism::SupFbm | Mechanism::SupLw | Mechanism::SupSbm => (1.1, 1.9),
            Mechanism::Bm => (1.0, 1.0),
        }
    }

    /// Whether the class is defined at this exponent.
    pub fn admits(self, alpha: f64) -> bool {
        match self {
            Mechanism::Bm => alpha == 1.0,
            Mechanism::SubAttm | Mechanism::SubCtrw | Mechanism::SubFbm | Mechanism::SubSbm => {
                alpha > 0.0 && alpha < 1.0
            }
            Mechanism::SupFbm | Mechanism::SupLw | Mechanism::SupSbm => alpha > 1.0 && alpha < 2.0,
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Mechanism::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLabel(s.to_string()))
    }
}

/// Parameters a generator actually used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    /// ATTM diffusivity-law exponent, or LW flight-time tail exponent.
    pub sigma: Option<f64>,
    /// ATTM sojourn exponent.
    pub gamma: Option<f64>,
    pub diffusion_coeff: f64,
    /// Prefactor of the fractional-noise correlation.
    pub fbm_coeff: Option<f64>,
    /// Upper bound of the uniform LW flight speed.
    pub speed: Option<f64>,
    pub seed: u64,
}

/// A sampled 2-D path at unit time step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub label: Mechanism,
    pub alpha: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub params: GenerationParams,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Per-step displacements `(dx, dy)`, length `T - 1`.
    pub fn displacements(&self) -> (Vec<f64>, Vec<f64>) {
        (diff(&self.x), diff(&self.y))
    }

    pub fn with_positions(&self, x: Vec<f64>, y: Vec<f64>) -> Trajectory {
        Trajectory {
            label: self.label,
            alpha: self.alpha,
            x,
            y,
            params: self.params.clone(),
        }
    }
}

pub(crate) fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_order_is_fixed() {
        let names: Vec<_> = Mechanism::ALL.iter().map(|m| m.name()).collect();
        assert_eq!(
            names,
            ["SubATTM", "SubCTRW", "SubFBM", "SubSBM", "SupFBM", "SupLW", "SupSBM", "BM"]
        );
        for (i, m) in Mechanism::ALL.iter().enumerate() {
            assert_eq!(m.index(), i);
            assert_eq!(Mechanism::from_index(i), Some(*m));
        }
    }

    #[test]
    fn labels_parse_case_insensitively_and_reject_unknowns() {
        assert_eq!("suplw".parse::<Mechanism>().unwrap(), Mechanism::SupLw);
        assert!(matches!("FOO".parse::<Mechanism>(), Err(Error::UnknownLabel(_))));
    }
}
