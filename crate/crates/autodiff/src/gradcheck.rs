//! Central-difference gradient verification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{AdError, Result};
use crate::tape::{PrimitiveKind, Tape, Var};
use crate::tensor::Tensor;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Check at most this many coordinates per input (sampled without
    /// replacement); `None` checks every coordinate.
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
    /// Widen the step for coordinates whose derivative is small: the step
    /// becomes `eps / |∂|` clamped to `[eps, 1000·eps]`, with `∂` the
    /// central difference at `eps`. Deep ReLU networks need a small step
    /// for sensitive coordinates (kinks) and a wide one for insensitive
    /// coordinates (round-off), which no single step satisfies.
    pub scale_step: bool,
    #[doc(hidden)]
    pub fault: Option<PrimitiveKind>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-6,
            max_coords_per_input: None,
            seed: 0,
            scale_step: false,
            fault: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
    pub coords_checked: usize,
}

/// Compares backward() against central differences for a scalar function of
/// one tensor. Returns the maximum elementwise relative error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let opts = GradCheckOptions {
        eps,
        ..Default::default()
    };
    let report = grad_check_inputs(|t, xs| f(t, xs[0]), std::slice::from_ref(x), &opts)?;
    Ok(report.max_rel_error)
}

/// Multi-input variant: every input is a gradient-carrying leaf.
pub fn grad_check_inputs<F>(f: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    if opts.eps <= 0.0 {
        return Err(AdError::contract("gradient check needs eps > 0"));
    }
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        tape.inject_fault(opts.fault);
        let vars: Vec<_> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };
    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = perturbed.iter().map(|x| tape.constant(x.clone())).collect();
        let loss = f(&tape, &vars)?;
        if loss.numel() != 1 {
            return Err(AdError::contract("gradient check needs a scalar function"));
        }
        Ok(loss.item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    for (k, x) in inputs.iter().enumerate() {
        let n = x.numel();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(m) if m < n => rand::seq::index::sample(&mut rng, n, m).into_vec(),
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = x.data()[i];
            let mut central = |h: f64| -> Result<f64> {
                work[k].data_mut()[i] = orig + h;
                let fp = eval(&work)?;
                work[k].data_mut()[i] = orig - h;
                let fm = eval(&work)?;
                work[k].data_mut()[i] = orig;
                Ok((fp - fm) / (2.0 * h))
            };
            let mut numeric = central(opts.eps)?;
            if opts.scale_step && numeric.abs() < 1.0 {
                let h = opts.eps * (1.0 / numeric.abs().max(1e-300)).min(1000.0);
                numeric = central(h)?;
            }
            let a = analytic[k].data()[i];
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some(Mismatch {
                    input: k,
                    index: i,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
