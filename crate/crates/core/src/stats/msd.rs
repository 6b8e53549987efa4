use crate::error::{Error, Result};
use crate::trajgen::Trajectory;

/// Ensemble mean square displacement from the starting point,
/// `msd[lag] = mean over trajectories of |r(lag) - r(0)|^2`.
pub fn ensemble_msd(trajectories: &[Trajectory]) -> Result<Vec<f64>> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::EmptyDataset("no trajectories for the MSD".into()))?;
    let len = first.len();
    if trajectories.iter().any(|t| t.len() != len) {
        return Err(Error::InvalidConfig("ensemble MSD needs equal lengths".into()));
    }
    let mut msd = vec![0.0; len];
    for t in trajectories {
        let (x0, y0) = (t.x[0], t.y[0]);
        for (m, (x, y)) in msd.iter_mut().zip(t.x.iter().zip(&t.y)) {
            *m += (x - x0).powi(2) + (y - y0).powi(2);
        }
    }
    let n = trajectories.len() as f64;
    msd.iter_mut().for_each(|m| *m /= n);
    Ok(msd)
}

/// Roughly logarithmically spaced distinct lags in `[lo, hi]`.
pub fn log_spaced_lags(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if lo == 0 || hi < lo || count == 0 {
        return Vec::new();
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut lags: Vec<usize> = (0..count)
        .map(|i| {
            let f = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (a + f * (b - a)).exp().round() as usize
        })
        .collect();
    lags.dedup();
    lags
}

/// Least-squares slope of `ln msd[lag]` against `ln lag`.
pub fn loglog_slope(msd: &[f64], lags: &[usize]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = lags
        .iter()
        .filter(|&&l| l > 0 && l < msd.len() && msd[l] > 0.0)
        .map(|&l| ((l as f64).ln(), msd[l].ln()))
        .collect();
    if pts.len() < 2 || pts.len() != lags.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
