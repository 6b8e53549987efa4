use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// Largest parameter count the finite-difference oracle will walk.
pub const MAX_CHECKED_PARAMS: usize = 10_000;

/// Outcome of a finite-difference gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub passed: bool,
    pub worst_relative_error: f64,
    /// Name and element index of the worst entry.
    pub worst_at: Option<(usize, usize)>,
    pub checked: usize,
    /// Entries skipped because a ReLU or max-pool branch flipped inside the
    /// difference stencil (the loss is not differentiable there).
    pub excluded: usize,
}

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with an absolute floor so vanishing gradients do not
/// divide by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares the tape gradient of `loss_fn` with central differences for
/// every element of every tensor in `params`.
///
/// `loss_fn` receives a fresh tape and the parameters registered on it, and
/// must return a scalar.
pub fn finite_difference_check<L>(
    params: &[Tensor<f64>],
    loss_fn: L,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let total: usize = params.iter().map(Tensor::len).sum();
    if total > MAX_CHECKED_PARAMS {
        return Err(Error::InvalidConfig(format!(
            "{total} parameters exceed the finite-difference budget of {MAX_CHECKED_PARAMS}"
        )));
    }
    let entries: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.len()).map(move |ei| (pi, ei)))
        .collect();
    check_entries(params, &loss_fn, tolerance, &entries)
}

/// Like [`finite_difference_check`], on `samples` entries drawn uniformly
/// without replacement, for models too large to walk exhaustively.
pub fn finite_difference_check_sampled<L>(
    params: &[Tensor<f64>],
    loss_fn: L,
    tolerance: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    L: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let total: usize = params.iter().map(Tensor::len).sum();
    if samples == 0 || samples > MAX_CHECKED_PARAMS {
        return Err(Error::InvalidConfig(format!(
            "sample count {samples} outside 1..={MAX_CHECKED_PARAMS}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = rand::seq::index::sample(&mut rng, total, samples.min(total)).into_vec();
    flat.sort_unstable();
    let mut offsets = Vec::with_capacity(params.len());
    let mut acc = 0;
    for p in params {
        offsets.push(acc);
        acc += p.len();
    }
    let entries: Vec<(usize, usize)> = flat
        .into_iter()
        .map(|k| {
            let pi = offsets.partition_point(|&o| o <= k) - 1;
            (pi, k - offsets[pi])
        })
        .collect();
    check_entries(params, &loss_fn, tolerance, &entries)
}

fn check_entries<L>(
    params: &[Tensor<f64>],
    loss_fn: &L,
    tolerance: f64,
    entries: &[(usize, usize)],
) -> Result<GradCheckReport>
where
    L: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor<f64>]| -> Result<(f64, u64, Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(Arc::new(p.clone()))).collect();
        let loss = loss_fn(&mut tape, &vars)?;
        let value = tape.value(loss).data()[0];
        let sig = tape.kink_signature();
        Ok((value, sig, tape, vars, loss))
    };

    let (_, base_sig, mut tape, vars, loss) = eval(params)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();
    drop(tape);

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        passed: true,
        worst_relative_error: 0.0,
        worst_at: None,
        checked: 0,
        excluded: 0,
    };
    for &(pi, ei) in entries {
        let orig = params[pi].data()[ei];
        work[pi].data_mut()[ei] = orig + FD_STEP;
        let (up, sig_up, ..) = eval(&work)?;
        work[pi].data_mut()[ei] = orig - FD_STEP;
        let (down, sig_down, ..) = eval(&work)?;
        work[pi].data_mut()[ei] = orig;
        if sig_up != base_sig || sig_down != base_sig {
            report.excluded += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * FD_STEP);
        let err = relative_error(analytic[pi][ei], numeric);
        report.checked += 1;
        if err > report.worst_relative_error {
            report.worst_relative_error = err;
            report.worst_at = Some((pi, ei));
        }
    }
    report.passed = report.worst_relative_error < tolerance && report.checked > 0;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_entries_map_back_to_their_tensors() {
        let params = vec![
            Tensor::from_f64(vec![3], &[1.0, 2.0, 3.0]).unwrap(),
            Tensor::from_f64(vec![2], &[4.0, 5.0]).unwrap(),
        ];
        let loss = |tape: &mut Tape<f64>, v: &[Var]| {
            let a = tape.pick(v[0], &[0, 1, 1, 2, 2, 2])?;
            let b = tape.scale(v[1], 3.0);
            let (sa, sb) = (tape.sum(a), tape.sum(b));
            tape.add(sa, sb)
        };
        let r = finite_difference_check_sampled(&params, loss, 1e-6, 5, 0).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 5);
        let r = finite_difference_check_sampled(&params, loss, 1e-6, 3, 9).unwrap();
        assert_eq!(r.checked, 3);
        assert!(finite_difference_check_sampled(&params, loss, 1e-6, 0, 0).is_err());
    }
}
