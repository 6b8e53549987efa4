use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::fbm::{fgn_circulant, fgn_hosking};
use super::{GenerationParams, Mechanism, Trajectory};

/// Upper bound of the uniform Lévy-walk flight speed.
pub const LW_MAX_SPEED: f64 = 10.0;

/// Diffusion coefficient used by every generator; absorbed by rescaling.
const DIFFUSION: f64 = 1.0;
const FBM_K: f64 = 1.0;

/// Generating process, independent of the sub/super split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Process {
    Attm,
    Ctrw,
    Fbm,
    Lw,
    Sbm,
    Bm,
}

impl Process {
    pub fn admits(self, alpha: f64) -> bool {
        match self {
            Process::Attm | Process::Ctrw => alpha > 0.0 && alpha < 1.0,
            Process::Fbm | Process::Sbm => alpha > 0.0 && alpha < 2.0,
            Process::Lw => alpha > 1.0 && alpha < 2.0,
            Process::Bm => alpha == 1.0,
        }
    }
}

/// Draws the diffusion exponent of a trajectory of class `label`.
pub fn sample_exponent<R: Rng + ?Sized>(label: Mechanism, rng: &mut R) -> f64 {
    let (lo, hi) = label.sampling_range();
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Uniform on `(0, 1]`.
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Pareto waiting time with minimum 1 and tail `psi(t) ~ t^(-1-alpha)`.
pub fn ctrw_waiting_time<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    open_unit(rng).powf(-1.0 / alpha)
}

/// ATTM `(sigma, gamma)` for a target exponent: `sigma` uniform on
/// `(0, min(3, alpha / (1 - alpha)))`, `gamma = sigma / alpha`.
pub fn attm_parameters<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> (f64, f64) {
    let upper = (alpha / (1.0 - alpha)).min(3.0);
    let sigma = loop {
        let s = rng.random::<f64>() * upper;
        if s > 0.0 {
            break s;
        }
    };
    (sigma, sigma / alpha)
}

/// One constant-velocity Lévy-walk flight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flight {
    pub start_time: f64,
    pub duration: f64,
    pub velocity: [f64; 2],
}

/// Flights covering `[0, horizon)`.
pub fn levy_walk_flights<R: Rng + ?Sized>(alpha: f64, horizon: f64, rng: &mut R) -> Vec<Flight> {
    let sigma = 3.0 - alpha;
    let mut flights = Vec::new();
    let mut t = 0.0;
    while t < horizon {
        let duration = open_unit(rng).powf(-1.0 / sigma);
        let speed = LW_MAX_SPEED * open_unit(rng);
        let angle = 2.0 * PI * rng.random::<f64>();
        flights.push(Flight {
            start_time: t,
            duration,
            velocity: [speed * angle.cos(), speed * angle.sin()],
        });
        t += duration;
    }
    flights
}

/// Generates a raw path of `len` points from the named process.
pub fn generate_process<R: Rng + ?Sized>(
    process: Process,
    alpha: f64,
    len: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>, GenerationParams)> {
    if len < 2 {
        return Err(Error::TooShort { need: 2, got: len });
    }
    if !process.admits(alpha) {
        return Err(Error::InvalidConfig(format!(
            "alpha {alpha} is not admissible for {process:?}"
        )));
    }
    let mut params = GenerationParams {
        diffusion_coeff: DIFFUSION,
        ..Default::default()
    };
    let steps = len - 1;
    let (dx, dy) = match process {
        Process::Bm => gaussian_steps(steps, |_| 2.0 * DIFFUSION, rng),
        Process::Sbm => gaussian_steps(
            steps,
            |t| {
                let t = (t + 1) as f64;
                2.0 * DIFFUSION * (t.powf(alpha) - (t - 1.0).powf(alpha))
            },
            rng,
        ),
        Process::Fbm => {
            params.fbm_coeff = Some(FBM_K);
            match fgn_circulant(steps, alpha, FBM_K, rng) {
                Some(pair) => pair,
                None => (
                    fgn_hosking(steps, alpha, FBM_K, rng),
                    fgn_hosking(steps, alpha, FBM_K, rng),
                ),
            }
        }
        Process::Ctrw => ctrw_steps(alpha, steps, rng),
        Process::Attm => {
            let (sigma, gamma) = attm_parameters(alpha, rng);
            params.sigma = Some(sigma);
            params.gamma = Some(gamma);
            attm_steps(sigma, gamma, steps, rng)
        }
        Process::Lw => {
            params.sigma = Some(3.0 - alpha);
            params.speed = Some(LW_MAX_SPEED);
            let flights = levy_walk_flights(alpha, steps as f64, rng);
            let (x, y) = sample_flights(&flights, len);
            return Ok((x, y, params));
        }
    };
    Ok((cumulative(&dx), cumulative(&dy), params))
}

/// Generates a trajectory of class `label` at exponent `alpha`.
pub fn gen_trajectory<R: Rng + ?Sized>(
    label: Mechanism,
    alpha: f64,
    len: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if !label.admits(alpha) {
        return Err(Error::AlphaOutOfRange { label, alpha });
    }
    let (x, y, params) = generate_process(label.process(), alpha, len, rng)?;
    Ok(Trajectory {
        label,
        alpha,
        x,
        y,
        params,
    })
}

fn cumulative(steps: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &s in steps {
        acc += s;
        out.push(acc);
    }
    out
}

fn gaussian_steps<R: Rng + ?Sized>(
    steps: usize,
    variance: impl Fn(usize) -> f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut dx = Vec::with_capacity(steps);
    let mut dy = Vec::with_capacity(steps);
    for t in 0..steps {
        let s = variance(t).sqrt();
        dx.push(s * normal(rng));
        dy.push(s * normal(rng));
    }
    (dx, dy)
}

fn ctrw_steps<R: Rng + ?Sized>(alpha: f64, steps: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; steps];
    let mut dy = vec![0.0; steps];
    let jump_sd = DIFFUSION.sqrt();
    let mut t = ctrw_waiting_time(alpha, rng);
    while t <= steps as f64 {
        // a jump at time t shows up in the step ending at ceil(t)
        let slot = (t.ceil() as usize).clamp(1, steps) - 1;
        dx[slot] += jump_sd * normal(rng);
        dy[slot] += jump_sd * normal(rng);
        t += ctrw_waiting_time(alpha, rng);
    }
    (dx, dy)
}

fn attm_steps<R: Rng + ?Sized>(
    sigma: f64,
    gamma: f64,
    steps: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut dx = Vec::with_capacity(steps);
    let mut dy = Vec::with_capacity(steps);
    while dx.len() < steps {
        // P(D) ~ D^(sigma-1) on (0, 1]; hold time ceil(D^-gamma)
        let log_u = open_unit(rng).ln();
        let d = (log_u / sigma).exp();
        let hold = (-gamma * log_u / sigma).exp().ceil();
        let hold = if hold.is_finite() {
            (hold as usize).min(steps - dx.len()).max(1)
        } else {
            steps - dx.len()
        };
        let s = (2.0 * d).sqrt();
        for _ in 0..hold {
            dx.push(s * normal(rng));
            dy.push(s * normal(rng));
        }
    }
    (dx, dy)
}

/// Positions at integer times of a piecewise-linear flight path.
fn sample_flights(flights: &[Flight], len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(len);
    let mut y = Vec::with_capacity(len);
    let mut idx = 0;
    let mut origin = [0.0, 0.0];
    for t in 0..len {
        let t = t as f64;
        while idx + 1 < flights.len() && flights[idx].start_time + flights[idx].duration <= t {
            let f = &flights[idx];
            origin[0] += f.velocity[0] * f.duration;
            origin[1] += f.velocity[1] * f.duration;
            idx += 1;
        }
        let f = &flights[idx];
        let dt = t - f.start_time;
        x.push(origin[0] + f.velocity[0] * dt);
        y.push(origin[1] + f.velocity[1] * dt);
    }
    (x, y)
}
