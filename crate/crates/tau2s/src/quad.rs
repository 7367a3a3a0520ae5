//! Adaptive Simpson quadrature for the smooth, light-tailed integrands that
//! arise from parametric survival models.

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 60;

fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, fa, m, fm, flm);
    let right = simpson(m, fm, b, fb, frm);
    let diff = left + right - whole;
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure);
    }
    Ok(adaptive(f, a, fa, m, fm, flm, left, 0.5 * tol, depth + 1)?
        + adaptive(f, m, fm, b, fb, frm, right, 0.5 * tol, depth + 1)?)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::QuadratureFailure);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    if !(fa.is_finite() && fb.is_finite() && fm.is_finite()) {
        return Err(Error::QuadratureFailure);
    }
    let whole = simpson(a, fa, b, fb, fm);
    adaptive(&f, a, fa, b, fb, fm, whole, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-10).unwrap();
        assert_relative_eq!(v, 4.0 - 4.0 + 2.0, epsilon = 1e-9);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate(|x| (-x).exp(), 0.0, 40.0, 1e-10).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-8);
    }
}
