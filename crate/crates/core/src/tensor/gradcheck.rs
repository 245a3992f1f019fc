//! Central-difference gradient checking (64-bit only).
//!
//! The relative error of one coordinate is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-3)`;
//! the floor keeps coordinates whose true derivative is ~0 from dividing
//! rounding noise by zero.

use super::tape::{Tape, Var};
use super::{Result, Tensor};

pub const FD_STEP: f64 = 1e-5;
const DENOMINATOR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// `(input index, flat coordinate)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
    pub coordinates_checked: usize,
    pub rel_tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.rel_tol
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Checks the gradient of a scalar function of one tensor.
pub fn finite_difference_check<G>(mut f: G, x: &Tensor<f64>, rel_tol: f64) -> Result<GradCheckReport>
where
    G: FnMut(&mut Tape<f64>, Var) -> Result<Var>,
{
    check_gradients(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        None,
        rel_tol,
    )
}

/// Checks gradients of a scalar function of several tensors. When
/// `coordinates` is given only those `(input, flat index)` pairs are probed.
pub fn check_gradients<G>(
    mut f: G,
    inputs: &[Tensor<f64>],
    coordinates: Option<&[(usize, usize)]>,
    rel_tol: f64,
) -> Result<GradCheckReport>
where
    G: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();

    let mut eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let all: Vec<(usize, usize)>;
    let coords = match coordinates {
        Some(c) => c,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, t)| (0..t.len()).map(move |k| (i, k)))
                .collect();
            &all
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst: None,
        coordinates_checked: coords.len(),
        rel_tol,
    };
    let mut work = inputs.to_vec();
    for &(i, k) in coords {
        let original = work[i].data()[k];
        work[i].data_mut()[k] = original + FD_STEP;
        let plus = eval(&work)?;
        work[i].data_mut()[k] = original - FD_STEP;
        let minus = eval(&work)?;
        work[i].data_mut()[k] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i].data()[k];
        let rel = relative_error(a, numeric);
        report.max_abs_error = report.max_abs_error.max((a - numeric).abs());
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = rel.max(report.max_rel_error);
            report.worst = Some((i, k));
        }
    }
    Ok(report)
}
