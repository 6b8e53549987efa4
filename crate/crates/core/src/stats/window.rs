use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gradcam::subinterval_ranges;

/// Guard added to numerator and denominator of displacement ratios.
pub const SG_EPSILON: f64 = 1e-6;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Variance below this fraction of the squared magnitude is round-off.
const ROUND_OFF: f64 = 1e-24;

/// Second and fourth cumulants with population-convention moments. A
/// sample that is constant up to round-off gives `(0, 0)`.
pub fn cumulants_2_4(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    let n = v.len() as f64;
    let (m2, m4) = v.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = (x - m) * (x - m);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    let scale = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m2 <= ROUND_OFF * scale * scale {
        return (0.0, 0.0);
    }
    (m2, m4 - 3.0 * m2 * m2)
}

/// Population variance.
pub fn variance(v: &[f64]) -> f64 {
    cumulants_2_4(v).0
}

fn diff(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Displacements of a window given its positions.
pub struct Window {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

impl Window {
    pub fn from_positions(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape("x and y lengths differ".into()));
        }
        Ok(Self { dx: diff(x), dy: diff(y) })
    }

    pub fn from_displacements(dx: Vec<f64>, dy: Vec<f64>) -> Result<Self> {
        if dx.len() != dy.len() {
            return Err(Error::Shape("dx and dy lengths differ".into()));
        }
        Ok(Self { dx, dy })
    }

    fn coords(&self) -> [&[f64]; 2] {
        [&self.dx, &self.dy]
    }

    fn need(&self, n: usize) -> Result<()> {
        if self.dx.len() < n {
            return Err(Error::TooShort {
                need: n + 1,
                got: self.dx.len() + 1,
            });
        }
        Ok(())
    }
}

/// Lag-one displacement autocorrelation averaged over both coordinates.
/// A coordinate without displacement variance contributes 0.
pub fn autocorrelation(w: &Window) -> Result<f64> {
    w.need(2)?;
    let mut acc = 0.0;
    for d in w.coords() {
        let var = variance(d);
        if var > 0.0 {
            let lag = d.windows(2).map(|p| p[0] * p[1]).sum::<f64>() / (d.len() - 1) as f64;
            let m = mean(d);
            acc += (lag - m * m) / var;
        }
    }
    Ok(0.5 * acc)
}

/// Direction changes between consecutive non-zero displacements, in `[0, pi]`.
/// Pairs touching a zero-length step are skipped.
pub fn turning_angles(w: &Window) -> Result<Vec<f64>> {
    let usable = w.dx.iter().zip(&w.dy).filter(|(x, y)| x.hypot(**y) > 0.0).count();
    if usable < 2 {
        return Err(Error::TooShort { need: 2, got: usable });
    }
    Ok((1..w.dx.len())
        .filter_map(|t| {
            let (ax, ay, bx, by) = (w.dx[t - 1], w.dy[t - 1], w.dx[t], w.dy[t]);
            let na = ax.hypot(ay);
            let nb = bx.hypot(by);
            (na > 0.0 && nb > 0.0).then(|| ((ax * bx + ay * by) / (na * nb)).clamp(-1.0, 1.0).acos())
        })
        .collect())
}

/// Root of the variance of `angle / pi`; 0 when no angle is defined.
pub fn turning_spread(w: &Window) -> f64 {
    match turning_angles(w) {
        Ok(a) if !a.is_empty() => {
            let scaled: Vec<f64> = a.iter().map(|v| v / PI).collect();
            variance(&scaled).sqrt()
        }
        _ => 0.0,
    }
}

/// `AC * sqrt(var(angle / pi))` before corpus normalization.
pub fn consistency_raw(w: &Window) -> Result<f64> {
    Ok(autocorrelation(w)? * turning_spread(w))
}

fn split(w: &Window, n_sub: usize, min_len: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if n_sub == 0 {
        return Err(Error::InvalidConfig("n_sub must be positive".into()));
    }
    w.need(n_sub * min_len)?;
    subinterval_ranges(n_sub, w.dx.len())
}

/// Absolute mean excess kurtosis over `n_sub` subintervals and both
/// coordinates. Zero-variance terms contribute 0.
pub fn non_gaussianity_raw(w: &Window, n_sub: usize) -> Result<f64> {
    let parts = split(w, n_sub, 4)?;
    let mut acc = 0.0;
    for d in w.coords() {
        for r in &parts {
            let (k2, k4) = cumulants_2_4(&d[r.clone()]);
            if k2 > 0.0 {
                acc += k4 / (k2 * k2);
            }
        }
    }
    Ok((acc / (2 * n_sub) as f64).abs())
}

/// Largest standard deviation over coordinates of `(d[t+1] + eps) / (d[t] + eps)`.
pub fn ratio_spread(w: &Window) -> Result<f64> {
    w.need(3)?;
    Ok(w.coords()
        .iter()
        .map(|d| {
            let ratios: Vec<f64> = d.windows(2).map(|p| (p[1] + SG_EPSILON) / (p[0] + SG_EPSILON)).collect();
            variance(&ratios).sqrt()
        })
        .fold(0.0, f64::max))
}

pub fn singularity_raw(w: &Window, n_sub: usize) -> Result<f64> {
    Ok(ratio_spread(w)? * non_gaussianity_raw(w, n_sub)?)
}

/// `1/(2 n_sub) * sum_r (sd_last - sd_first) / sd_all`, the factor of VD
/// preceding NG. Zero-variance coordinates contribute 0.
pub fn diffusivity_trend(w: &Window, n_sub: usize) -> Result<f64> {
    let parts = split(w, n_sub, 2)?;
    let (first, last) = (&parts[0], &parts[n_sub - 1]);
    let mut acc = 0.0;
    for d in w.coords() {
        let all = variance(d).sqrt();
        if all > 0.0 {
            acc += (variance(&d[last.clone()]).sqrt() - variance(&d[first.clone()]).sqrt()) / all;
        }
    }
    Ok(acc / (2 * n_sub) as f64)
}

pub fn varying_diffusivity_raw(w: &Window, n_sub: usize) -> Result<f64> {
    Ok(diffusivity_trend(w, n_sub)? * non_gaussianity_raw(w, n_sub)?)
}

/// `(v - min) / (max - min)`; an all-equal corpus maps to 0.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { ((v - lo) / range).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Pearson correlation; `None` for mismatched, short or constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
