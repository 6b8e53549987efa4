use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{diff, Trajectory};

/// Pooled standard deviation of per-step displacements over both
/// coordinates: each coordinate's variance is taken about its own mean,
/// and the two variances are averaged.
pub fn pooled_displacement_std(traj: &Trajectory) -> f64 {
    let var = |d: &[f64]| {
        let n = d.len() as f64;
        let m = d.iter().sum::<f64>() / n;
        d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
    };
    let dx = diff(&traj.x);
    let dy = diff(&traj.y);
    if dx.is_empty() {
        return 0.0;
    }
    (0.5 * (var(&dx) + var(&dy))).sqrt()
}

/// Divides all positions so the pooled displacement standard deviation is 1.
pub fn rescale_unit_variance(traj: &Trajectory) -> Result<Trajectory> {
    if traj.len() < 2 {
        return Err(Error::TooShort {
            need: 2,
            got: traj.len(),
        });
    }
    let sd = pooled_displacement_std(traj);
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::Degenerate(format!(
            "{} trajectory has no displacement variance",
            traj.label
        )));
    }
    let inv = 1.0 / sd;
    Ok(traj.with_positions(
        traj.x.iter().map(|v| v * inv).collect(),
        traj.y.iter().map(|v| v * inv).collect(),
    ))
}

/// Adds independent `N(0, amplitude^2)` noise to every coordinate.
pub fn add_measurement_noise<R: Rng + ?Sized>(
    traj: &Trajectory,
    amplitude: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(amplitude >= 0.0) {
        return Err(Error::NegativeNoise(amplitude));
    }
    if amplitude == 0.0 {
        return Ok(traj.clone());
    }
    let mut jitter = |v: &f64| v + amplitude * rng.sample::<f64, _>(StandardNormal);
    let x = traj.x.iter().map(&mut jitter).collect();
    let y = traj.y.iter().map(&mut jitter).collect();
    Ok(traj.with_positions(x, y))
}

/// Network input: per-coordinate min-max to `[0, 1]`, then left zero-padding
/// to `target_len`. Layout is channel-major, `[x channel, y channel]`.
pub fn preprocess_input(traj: &Trajectory, target_len: usize) -> Result<Vec<f64>> {
    let len = traj.len();
    if len > target_len {
        return Err(Error::TooLong {
            len,
            target: target_len,
        });
    }
    let pad = target_len - len;
    let mut out = vec![0.0; 2 * target_len];
    for (ch, coord) in [&traj.x, &traj.y].into_iter().enumerate() {
        let (lo, hi) = coord
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let range = hi - lo;
        let dst = &mut out[ch * target_len + pad..(ch + 1) * target_len];
        if range > 0.0 {
            for (d, &v) in dst.iter_mut().zip(coord) {
                *d = ((v - lo) / range).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajgen::{GenerationParams, Mechanism};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(x: Vec<f64>, y: Vec<f64>) -> Trajectory {
        Trajectory {
            label: Mechanism::Bm,
            alpha: 1.0,
            x,
            y,
            params: GenerationParams::default(),
        }
    }

    #[test]
    fn rescale_halves_pooled_std_of_two() {
        // displacements alternate +-2 in both coordinates: pooled sd 2
        let x: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let t = traj(x.clone(), x);
        assert!((pooled_displacement_std(&t) - 2.0).abs() < 1e-12);
        let r = rescale_unit_variance(&t).unwrap();
        assert!((pooled_displacement_std(&r) - 1.0).abs() < 1e-12);
        assert_eq!(r.label, t.label);
    }

    #[test]
    fn rescale_of_unit_trajectory_is_identity() {
        let x: Vec<f64> = (0..11).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect();
        let t = traj(x.clone(), x);
        assert_eq!(rescale_unit_variance(&t).unwrap(), t);
    }

    #[test]
    fn rescale_rejects_static_trajectory() {
        let t = traj(vec![3.0; 5], vec![-1.0; 5]);
        assert!(matches!(rescale_unit_variance(&t), Err(Error::Degenerate(_))));
    }

    #[test]
    fn zero_noise_is_identity_and_negative_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = traj(vec![0.0, 1.0, 3.0], vec![0.0, -1.0, 2.0]);
        assert_eq!(add_measurement_noise(&t, 0.0, &mut rng).unwrap(), t);
        assert!(matches!(
            add_measurement_noise(&t, -1.0, &mut rng),
            Err(Error::NegativeNoise(_))
        ));
    }

    #[test]
    fn injected_noise_has_requested_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 500_000;
        let t = traj(vec![0.0; n], vec![0.0; n]);
        let noisy = add_measurement_noise(&t, 0.5, &mut rng).unwrap();
        let all: Vec<f64> = noisy.x.iter().chain(&noisy.y).copied().collect();
        let m = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / all.len() as f64;
        assert!((var / 0.25 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn preprocess_pads_on_the_left() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let t = traj(x.clone(), x);
        let p = preprocess_input(&t, 1000).unwrap();
        assert_eq!(p.len(), 2000);
        assert!(p[..990].iter().all(|&v| v == 0.0));
        assert!(p[1000..1990].iter().all(|&v| v == 0.0));
        assert_eq!(p[999], 1.0);
        assert_eq!(p[990], 0.0);
    }

    #[test]
    fn preprocess_min_max_midpoint_and_constant_channel() {
        let t = traj(vec![3.0, 5.0, 7.0], vec![2.0, 2.0, 2.0]);
        let p = preprocess_input(&t, 3).unwrap();
        assert_eq!(&p[..3], &[0.0, 0.5, 1.0]);
        assert_eq!(&p[3..], &[0.0, 0.0, 0.0]);
        assert!(matches!(preprocess_input(&t, 2), Err(Error::TooLong { .. })));
    }

    proptest! {
        #[test]
        fn rescale_is_idempotent(steps in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..60)) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (a, b) in &steps {
                x.push(x.last().unwrap() + a);
                y.push(y.last().unwrap() + b);
            }
            let t = traj(x, y);
            prop_assume!(pooled_displacement_std(&t) > 1e-6);
            let once = rescale_unit_variance(&t).unwrap();
            let twice = rescale_unit_variance(&once).unwrap();
            prop_assert!((pooled_displacement_std(&once) - 1.0).abs() < 1e-12);
            for (a, b) in once.x.iter().zip(&twice.x).chain(once.y.iter().zip(&twice.y)) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn preprocessed_values_lie_in_unit_interval(
            pts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..50),
            extra in 0usize..20,
        ) {
            let t = traj(pts.iter().map(|p| p.0).collect(), pts.iter().map(|p| p.1).collect());
            let out = preprocess_input(&t, pts.len() + extra).unwrap();
            prop_assert!(out.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
