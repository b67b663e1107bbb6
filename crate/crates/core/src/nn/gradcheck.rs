//! Central finite-difference gradient checking.
//!
//! The numerical side only ever runs forward passes, so it stays independent of
//! the backward rules it validates.

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Worst disagreement found by [`check_gradients`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked_entries: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    const FLOOR: f64 = 1e-6;
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Compares analytic gradients of the scalar returned by `build` against
/// central differences with step `step`, for every entry of every input.
///
/// `build` receives the tape and one handle per input, registered as
/// parameters `0..inputs.len()`.
pub fn check_gradients<F>(inputs: &[Matrix], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .enumerate()
            .map(|(i, m)| tape.param(i, m.clone()))
            .collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, m)| tape.param(i, m.clone()))
        .collect();
    let out = build(&mut tape, &vars)?;
    let analytic = tape.backward(out)?.param_grads(&tape, inputs);

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for k in 0..inputs[i].data().len() {
            let orig = inputs[i].data()[k];
            probe[i].data_mut()[k] = orig + step;
            let plus = eval(&probe)?;
            probe[i].data_mut()[k] = orig - step;
            let minus = eval(&probe)?;
            probe[i].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad.data()[k], numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        checked_entries: checked,
    })
}
