use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Autocovariance of unit-step fractional Gaussian noise whose integral has
/// mean square displacement `2 K t^alpha` per coordinate.
pub fn fgn_autocovariance(lag: usize, alpha: f64, k: f64) -> f64 {
    let l = lag as f64;
    let p = |v: f64| v.abs().powf(alpha);
    k * (p(l + 1.0) - 2.0 * p(l) + p(l - 1.0))
}

/// Two independent fGn series of length `n` by circulant embedding.
///
/// Returns `None` when the embedding has a significantly negative
/// eigenvalue; callers then fall back to [`fgn_hosking`].
pub fn fgn_circulant<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    k: f64,
    rng: &mut R,
) -> Option<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Some((Vec::new(), Vec::new()));
    }
    let half = n.next_power_of_two().max(2);
    let m = 2 * half;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex::new(fgn_autocovariance(lag, alpha, k), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let max_eig = row.iter().map(|c| c.re).fold(0.0f64, f64::max);
    if row.iter().any(|c| c.re < -1e-9 * max_eig.max(1e-300)) {
        return None;
    }
    let mut w: Vec<Complex<f64>> = row
        .iter()
        .map(|lambda| {
            let s = (lambda.re.max(0.0) / m as f64).sqrt();
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            Complex::new(s * a, s * b)
        })
        .collect();
    fft.process(&mut w);
    let xs = w[..n].iter().map(|c| c.re).collect();
    let ys = w[..n].iter().map(|c| c.im).collect();
    Some((xs, ys))
}

/// One fGn series of length `n` by the exact Durbin-Levinson recursion.
pub fn fgn_hosking<R: Rng + ?Sized>(n: usize, alpha: f64, k: f64, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let gamma: Vec<f64> = (0..n).map(|l| fgn_autocovariance(l, alpha, k)).collect();
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut var = gamma[0];
    let z: f64 = rng.sample(StandardNormal);
    out.push(var.sqrt() * z);
    for t in 1..n {
        let acc: f64 = (1..t).map(|j| phi[j - 1] * gamma[t - j]).sum();
        let phi_tt = (gamma[t] - acc) / var;
        let prev = phi.clone();
        for j in 1..t {
            phi[j - 1] = prev[j - 1] - phi_tt * prev[t - j - 1];
        }
        phi.push(phi_tt);
        var *= 1.0 - phi_tt * phi_tt;
        let mean: f64 = (1..=t).map(|j| phi[j - 1] * out[t - j]).sum();
        let z: f64 = rng.sample(StandardNormal);
        out.push(mean + var.max(0.0).sqrt() * z);
    }
    out
}
