//! Central finite-difference gradient checks.
//!
//! A difference quotient is only an oracle where the function is smooth
//! across the whole stencil. When a perturbation moves some `relu` or
//! `abs` input across zero, the check switches to the second-order
//! one-sided stencil on the side that stays in the base point's smooth
//! piece, and skips the entry only if both sides cross.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor of the relative error, so that gradients that are zero
/// up to round-off compare absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, element)` where the worst error occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Entries checked with a one-sided stencil because of a kink.
    pub one_sided: usize,
    /// Entries with kinks on both sides of the stencil, not compared.
    pub skipped: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol && self.skipped == 0
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares the tape gradient of `f` with respect to every element of every
/// input against `(f(x + h) - f(x - h)) / 2h`. `f` must be deterministic
/// (seed any dropout inside it) and return a scalar node.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |ts: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g.value(out).item(), g.kink_signature()))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    let grads = g.backward(root)?;
    let f0 = g.value(root).item();
    let base = g.kink_signature();

    let mut report =
        GradCheckReport { max_rel_error: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, checked: 0, one_sided: 0, skipped: 0 };
    let mut work = inputs.to_vec();
    let at = |work: &mut Vec<Tensor>, i: usize, j: usize, orig: f64, step: f64| -> Result<(f64, Vec<bool>)> {
        work[i].data[j] = orig + step;
        let r = eval(work);
        work[i].data[j] = orig;
        r
    };
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; inputs[i].len()]);
        for (j, &exact) in analytic.iter().enumerate() {
            let orig = work[i].data[j];
            let (plus, sp) = at(&mut work, i, j, orig, h)?;
            let (minus, sm) = at(&mut work, i, j, orig, -h)?;
            let numeric = match (sp == base, sm == base) {
                (true, true) => (plus - minus) / (2.0 * h),
                (true, false) => {
                    let (plus2, s2) = at(&mut work, i, j, orig, 2.0 * h)?;
                    if s2 != base {
                        report.skipped += 1;
                        continue;
                    }
                    report.one_sided += 1;
                    (-3.0 * f0 + 4.0 * plus - plus2) / (2.0 * h)
                }
                (false, true) => {
                    let (minus2, s2) = at(&mut work, i, j, orig, -2.0 * h)?;
                    if s2 != base {
                        report.skipped += 1;
                        continue;
                    }
                    report.one_sided += 1;
                    (3.0 * f0 - 4.0 * minus + minus2) / (2.0 * h)
                }
                (false, false) => {
                    report.skipped += 1;
                    continue;
                }
            };
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("finite difference at input {i}, element {j}")));
            }
            let err = relative_error(exact, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report.max_rel_error = err;
                report.worst = (i, j);
                report.analytic = exact;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
