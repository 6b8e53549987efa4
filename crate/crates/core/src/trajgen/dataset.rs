use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::generators::{gen_trajectory, sample_exponent};
use super::transform::{add_measurement_noise, rescale_unit_variance};
use super::{GenerationParams, Mechanism, Trajectory};

pub const DATASET_HEADER: &str = "andikit-dataset v1";

/// Redraws allowed for trajectories that come out static (e.g. a CTRW
/// whose first wait outlasts the whole window).
const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthLaw {
    Fixed(usize),
    Uniform { min: usize, max: usize },
}

impl LengthLaw {
    pub fn max_len(self) -> usize {
        match self {
            LengthLaw::Fixed(t) => t,
            LengthLaw::Uniform { max, .. } => max,
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            LengthLaw::Fixed(t) => t,
            LengthLaw::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<Mechanism>,
    pub per_class: usize,
    pub length_law: LengthLaw,
    /// Standard deviation of post-rescaling Gaussian noise (1/SNR).
    #[serde(default)]
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn balanced(per_class: usize, length_law: LengthLaw, seed: u64) -> Self {
        Self {
            classes: Mechanism::ALL.to_vec(),
            per_class,
            length_law,
            noise_amplitude: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidConfig("dataset needs at least one class".into()));
        }
        let mut seen = self.classes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.classes.len() {
            return Err(Error::InvalidConfig("dataset classes repeat".into()));
        }
        if self.per_class == 0 {
            return Err(Error::InvalidConfig("per_class must be positive".into()));
        }
        match self.length_law {
            LengthLaw::Fixed(t) if t < 2 => {
                return Err(Error::InvalidConfig("trajectory length must be >= 2".into()))
            }
            LengthLaw::Uniform { min, max } if min < 2 || min > max => {
                return Err(Error::InvalidConfig(format!(
                    "invalid length range [{min}, {max}]"
                )))
            }
            _ => {}
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::NegativeNoise(self.noise_amplitude));
        }
        Ok(())
    }
}

/// Labeled trajectory collection; a trajectory's id is its index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn count_per_class(&self) -> [usize; super::NUM_CLASSES] {
        let mut counts = [0; super::NUM_CLASSES];
        for t in &self.trajectories {
            counts[t.label.index()] += 1;
        }
        counts
    }

    pub fn max_len(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).max().unwrap_or(0)
    }
}

/// Seed of trajectory `index` within a dataset (SplitMix64 of the pair), so
/// content never depends on generation order.
pub fn trajectory_seed(dataset_seed: u64, index: u64) -> u64 {
    let mut z = dataset_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn generate_one(spec: &DatasetSpec, label: Mechanism, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = sample_exponent(label, &mut rng);
    let len = spec.length_law.sample(&mut rng);
    for _ in 0..MAX_REDRAWS {
        let raw = gen_trajectory(label, alpha, len, &mut rng)?;
        let Ok(mut t) = rescale_unit_variance(&raw) else {
            continue;
        };
        t.params.seed = seed;
        return add_measurement_noise(&t, spec.noise_amplitude, &mut rng);
    }
    Err(Error::Degenerate(format!(
        "{label} at alpha {alpha}, length {len}: no non-static draw"
    )))
}

/// Builds `per_class` trajectories for every listed class, in class order.
pub fn build_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let jobs: Vec<(Mechanism, u64)> = spec
        .classes
        .iter()
        .flat_map(|&c| std::iter::repeat_n(c, spec.per_class))
        .enumerate()
        .map(|(i, c)| (c, trajectory_seed(spec.seed, i as u64)))
        .collect();
    let trajectories = jobs
        .par_iter()
        .map(|&(label, seed)| generate_one(spec, label, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { trajectories })
}

fn join_floats(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        // Debug formatting is the shortest exact round-trip representation
        write!(s, "{v:?}").expect("writing to a String");
    }
    s
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "{DATASET_HEADER}")?;
    for t in &dataset.trajectories {
        writeln!(out, "{},{:?},{},{}", t.label, t.alpha, t.len(), t.params.seed)?;
        writeln!(out, "{}", join_floats(&t.x))?;
        writeln!(out, "{}", join_floats(&t.y))?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<Dataset> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::format("dataset", "empty file"))?;
    if header.trim_end() != DATASET_HEADER {
        return Err(Error::format("dataset", format!("bad header `{header}`")));
    }
    let parse_row = |line: Option<std::io::Result<String>>, len: usize, rec: usize| -> Result<Vec<f64>> {
        let line = line
            .transpose()?
            .ok_or_else(|| Error::format("dataset", format!("record {rec} truncated")))?;
        let vals = line
            .trim_end()
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format("dataset", format!("record {rec}: {e}")))?;
        if vals.len() != len || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                "dataset",
                format!("record {rec}: expected {len} finite values, got {}", vals.len()),
            ));
        }
        Ok(vals)
    };
    let mut trajectories = Vec::new();
    while let Some(meta) = lines.next() {
        let meta = meta?;
        if meta.trim().is_empty() {
            continue;
        }
        let rec = trajectories.len();
        let fields: Vec<&str> = meta.trim_end().split(',').collect();
        if fields.len() != 4 {
            return Err(Error::format("dataset", format!("record {rec}: bad metadata `{meta}`")));
        }
        let label: Mechanism = fields[0].parse()?;
        let bad = |what: &str| Error::format("dataset", format!("record {rec}: bad {what}"));
        let alpha: f64 = fields[1].parse().map_err(|_| bad("alpha"))?;
        let len: usize = fields[2].parse().map_err(|_| bad("length"))?;
        let seed: u64 = fields[3].parse().map_err(|_| bad("seed"))?;
        if len < 2 {
            return Err(bad("length"));
        }
        let x = parse_row(lines.next(), len, rec)?;
        let y = parse_row(lines.next(), len, rec)?;
        trajectories.push(Trajectory {
            label,
            alpha,
            x,
            y,
            params: GenerationParams {
                seed,
                ..Default::default()
            },
        });
    }
    Ok(Dataset { trajectories })
}

/// Hex SHA-256 of a byte buffer (used to reference input files in reports).
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> DatasetSpec {
        DatasetSpec::balanced(10, LengthLaw::Uniform { min: 10, max: 60 }, seed)
    }

    #[test]
    fn balanced_counts_per_class() {
        let d = build_dataset(&small_spec(1)).unwrap();
        assert_eq!(d.len(), 80);
        assert_eq!(d.count_per_class(), [10; 8]);
    }

    #[test]
    fn same_seed_is_bit_identical_and_other_seed_differs() {
        let a = build_dataset(&small_spec(5)).unwrap();
        let b = build_dataset(&small_spec(5)).unwrap();
        let c = build_dataset(&small_spec(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn lengths_follow_uniform_law() {
        let spec = DatasetSpec::balanced(30, LengthLaw::Uniform { min: 10, max: 1000 }, 3);
        let d = build_dataset(&spec).unwrap();
        assert!(d.iter().all(|t| (10..=1000).contains(&t.len())));
        assert!(d.iter().any(|t| t.len() > 500));
    }

    #[test]
    fn generated_trajectories_satisfy_invariants() {
        let d = build_dataset(&small_spec(7)).unwrap();
        for t in d.iter() {
            let (lo, hi) = t.label.sampling_range();
            assert!(t.alpha >= lo && t.alpha <= hi);
            assert!((super::super::pooled_displacement_std(t) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec(1);
        s.noise_amplitude = -0.1;
        assert!(build_dataset(&s).is_err());
        let mut s = small_spec(1);
        s.per_class = 0;
        assert!(build_dataset(&s).is_err());
        let mut s = small_spec(1);
        s.length_law = LengthLaw::Uniform { min: 50, max: 10 };
        assert!(build_dataset(&s).is_err());
    }

    #[test]
    fn file_round_trip_is_exact() {
        let d = build_dataset(&small_spec(9)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.iter().zip(d.iter()) {
            assert_eq!((a.label, a.alpha, &a.x, &a.y, a.params.seed), (b.label, b.alpha, &b.x, &b.y, b.params.seed));
        }
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        assert_eq!(content_hash(&buf), content_hash(&again));
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_dataset("nope\n".as_bytes()).is_err());
        let truncated = format!("{DATASET_HEADER}\nBM,1.0,3,7\n0.0,1.0,2.0\n");
        assert!(read_dataset(truncated.as_bytes()).is_err());
        let short_row = format!("{DATASET_HEADER}\nBM,1.0,3,7\n0.0,1.0\n0.0,1.0,2.0\n");
        assert!(read_dataset(short_row.as_bytes()).is_err());
    }
}
