//! Finite-difference validation of tape gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Central finite differences of a scalar function.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = buf[i];
            buf[i] = orig + h;
            let hi = f(&buf);
            buf[i] = orig - h;
            let lo = f(&buf);
            buf[i] = orig;
            (hi - lo) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheckReport {
    /// Largest relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Coordinates whose analytic gradient magnitude cleared the cutoff.
    pub checked: usize,
    /// Coordinates excluded because the function is not differentiable
    /// within the finite-difference bracket (e.g. a ReLU kink).
    pub skipped_nonsmooth: usize,
    /// `(param index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

/// Compare tape gradients of `build` against central differences.
///
/// `build` must construct the same graph each call (it is re-run for every
/// perturbed coordinate). Coordinates with `|analytic| <= min_grad` are
/// skipped: their relative error is dominated by round-off.
pub fn check<B>(params: &[Tensor], build: B, h: f64, min_grad: f64) -> Result<GradCheckReport>
where
    B: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        tape.value(loss).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut report = GradCheckReport::default();
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad(*var) {
            Some(g) => g.to_vec(),
            None => continue,
        };
        for ci in 0..analytic.len() {
            let a = analytic[ci];
            if a.abs() <= min_grad {
                continue;
            }
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + h;
            let hi = eval(&work)?;
            work[pi].data_mut()[ci] = orig - h;
            let lo = eval(&work)?;
            work[pi].data_mut()[ci] = orig;
            let numeric = (hi - lo) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((pi, ci));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_on_a_polynomial() {
        // f(x, y) = x^2 y + y^3 at (2, 3): df/dx = 12, df/dy = 31.
        let g = central_diff(|p| p[0] * p[0] * p[1] + p[1].powi(3), &[2.0, 3.0], 1e-5);
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 31.0).abs() < 1e-6);
    }

    #[test]
    fn check_flags_nothing_on_a_correct_graph() {
        let w = Tensor::new(vec![2, 2], vec![0.3, -0.7, -1.1, 0.2]).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.5, -1.4]).unwrap();
        let report = check(
            &[w, x],
            |tape, vars| {
                let y = tape.matmul(vars[1], vars[0])?;
                let z = tape.relu(y);
                Ok(tape.sum(z))
            },
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(report.checked > 0);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }
}
