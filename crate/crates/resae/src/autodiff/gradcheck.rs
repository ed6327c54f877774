//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamStore, ParamVars};
use super::tape::{Tape, Var};
use crate::error::{ResaeError, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOpts {
    /// Central-difference step; must lie in [1e-7, 1e-3].
    pub eps: f64,
    /// Relative-error tolerance per coordinate.
    pub tol: f64,
    /// Cap on checked coordinates per parameter (0 = all), sampled
    /// deterministically from `seed`.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckOpts {
    fn default() -> Self {
        GradCheckOpts {
            eps: 1e-5,
            tol: 1e-4,
            max_coords_per_param: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamGradReport {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamGradReport>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Denominator floor: coordinates where both gradients are below this are
/// compared against the floor so finite-difference noise cannot dominate.
const REL_FLOOR: f64 = 1e-6;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare reverse-mode gradients of the scalar `f` against central finite
/// differences, parameter by parameter.
///
/// `make_tape` must produce evaluation-mode tapes; a train-mode tape (live
/// dropout) violates is rejected because `f` must be deterministic.
pub fn grad_check(
    params: &ParamStore,
    make_tape: impl Fn() -> Tape,
    f: impl Fn(&Tape, &ParamVars) -> Var,
    opts: &GradCheckOpts,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&opts.eps) {
        return Err(ResaeError::GradCheck(format!(
            "eps {} outside [1e-7, 1e-3]",
            opts.eps
        )));
    }
    let probe = make_tape();
    if probe.is_train() {
        return Err(ResaeError::GradCheck(
            "dropout must be disabled (train-mode tape supplied)".into(),
        ));
    }
    drop(probe);

    // analytic pass
    let tape = make_tape();
    let vars = tape.register_params(params);
    let loss = f(&tape, &vars);
    let loss_value = tape.value(loss).item();
    if !loss_value.is_finite() {
        return Err(ResaeError::GradCheck(format!(
            "objective is non-finite: {}",
            loss_value
        )));
    }
    let mut grads = tape.backward(loss);

    let eval = |store: &ParamStore| -> Result<f64> {
        let t = make_tape();
        let v = t.register_params(store);
        let out = f(&t, &v);
        let value = t.value(out).item();
        if !value.is_finite() {
            return Err(ResaeError::GradCheck(format!(
                "objective is non-finite during perturbation: {}",
                value
            )));
        }
        Ok(value)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut scratch = params.clone();
    let mut per_param = Vec::new();
    let mut global_max: f64 = 0.0;
    for (name, tensor) in params.iter() {
        let analytic = grads.take(vars.get(name));
        let numel = tensor.numel();
        let mut coords: Vec<usize> = (0..numel).collect();
        if opts.max_coords_per_param > 0 && numel > opts.max_coords_per_param {
            coords.shuffle(&mut rng);
            coords.truncate(opts.max_coords_per_param);
            coords.sort_unstable();
        }
        let mut max_err: f64 = 0.0;
        for &c in &coords {
            let a = analytic.as_ref().map_or(0.0, |t| t.data()[c]);
            let original = tensor.data()[c];
            scratch.get_mut(name).data_mut()[c] = original + opts.eps;
            let plus = eval(&scratch)?;
            scratch.get_mut(name).data_mut()[c] = original - opts.eps;
            let minus = eval(&scratch)?;
            scratch.get_mut(name).data_mut()[c] = original;
            let n = (plus - minus) / (2.0 * opts.eps);
            max_err = max_err.max(rel_err(a, n));
        }
        global_max = global_max.max(max_err);
        per_param.push(ParamGradReport {
            name: name.clone(),
            coords_checked: coords.len(),
            max_rel_err: max_err,
            pass: max_err < opts.tol,
        });
    }
    Ok(GradCheckReport {
        pass: per_param.iter().all(|p| p.pass),
        per_param,
        max_rel_err: global_max,
    })
}
