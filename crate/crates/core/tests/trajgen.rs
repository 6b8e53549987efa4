use std::io::BufReader;

use andikit::stats::{ensemble_msd, log_spaced_lags, loglog_slope};
use andikit::trajgen::{
    build_dataset, content_hash, gen_trajectory, pooled_displacement_std, read_dataset, rescale_unit_variance,
    sample_exponent, write_dataset, DatasetSpec, LengthLaw, Mechanism,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fbm_half_ensemble_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ts: Vec<_> = (0..1000).map(|_| gen_trajectory(Mechanism::SubFbm, 0.5, 1000, &mut rng).unwrap()).collect();
    let msd = ensemble_msd(&ts).unwrap();
    let slope = loglog_slope(&msd, &log_spaced_lags(1, 999, 30)).unwrap();
    assert!((slope - 0.5).abs() < 0.05, "{slope}");
}

#[test]
fn bm_exponent_is_exactly_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!((0..100).all(|_| sample_exponent(Mechanism::Bm, &mut rng) == 1.0));
}

#[test]
fn dataset_file_round_trip_and_hash() {
    let spec = DatasetSpec::balanced(3, LengthLaw::Uniform { min: 10, max: 60 }, 3);
    let ds = build_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    write_dataset(&ds, std::fs::File::create(&path).unwrap()).unwrap();
    let back = read_dataset(BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(back.len(), ds.len());
    for (a, b) in ds.iter().zip(back.iter()) {
        assert_eq!((a.label, a.alpha, &a.x, &a.y, a.params.seed), (b.label, b.alpha, &b.x, &b.y, b.params.seed));
    }
    let bytes = std::fs::read(&path).unwrap();
    let mut again = Vec::new();
    write_dataset(&build_dataset(&spec).unwrap(), &mut again).unwrap();
    assert_eq!(content_hash(&bytes), content_hash(&again));
    assert_eq!(content_hash(b"").len(), 64);
}

#[test]
fn noise_is_added_after_rescaling() {
    let clean_spec = DatasetSpec::balanced(2, LengthLaw::Fixed(400), 4);
    let clean = build_dataset(&clean_spec).unwrap();
    let noisy = build_dataset(&DatasetSpec { noise_amplitude: 0.5, ..clean_spec }).unwrap();
    let mut diffs = Vec::new();
    for (c, n) in clean.iter().zip(noisy.iter()) {
        assert!((pooled_displacement_std(c) - 1.0).abs() < 1e-12);
        assert_eq!(c.alpha, n.alpha);
        diffs.extend(c.x.iter().zip(&n.x).map(|(a, b)| b - a));
        diffs.extend(c.y.iter().zip(&n.y).map(|(a, b)| b - a));
    }
    let var = diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64;
    assert!((var / 0.25 - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn every_generated_class_rescales() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for label in Mechanism::ALL {
        let alpha = sample_exponent(label, &mut rng);
        let t = gen_trajectory(label, alpha, 300, &mut rng).unwrap();
        if let Ok(r) = rescale_unit_variance(&t) {
            assert!((pooled_displacement_std(&r) - 1.0).abs() < 1e-12);
            assert_eq!((r.label, r.alpha), (label, alpha));
        }
    }
}
