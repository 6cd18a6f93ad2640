//! Shared numerical kernels: finite differences, adaptive quadrature, the
//! standard compactly supported mollifier, and log-log regression.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("adaptive quadrature did not converge on [{a}, {b}] (depth {depth})")]
    NoConvergence { a: f64, b: f64, depth: usize },
}

/// First derivative, 7-point central stencil, O(h^6) truncation.
///
/// The wide stencil keeps the roundoff amplification ~eps/h small enough for
/// residual checks at the 1e-9 level on O(1) functions.
pub fn deriv1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x - 3.0 * h) + 9.0 * f(x - 2.0 * h) - 45.0 * f(x - h) + 45.0 * f(x + h)
        - 9.0 * f(x + 2.0 * h)
        + f(x + 3.0 * h))
        / (60.0 * h)
}

/// Second derivative, 7-point central stencil, O(h^6) truncation.
pub fn deriv2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (2.0 * (f(x - 3.0 * h) + f(x + 3.0 * h)) - 27.0 * (f(x - 2.0 * h) + f(x + 2.0 * h))
        + 270.0 * (f(x - h) + f(x + h))
        - 490.0 * f(x))
        / (180.0 * h * h)
}

/// First derivative by central differences with one Richardson level.
pub fn deriv1_richardson(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Second derivative by central differences with one Richardson level.
pub fn deriv2_richardson(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Mixed second derivative d^2/dxdy with one Richardson level.
pub fn mixed2_richardson(f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> f64 {
    let d = |h: f64| {
        (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h)
    };
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<f64, QuadratureError> {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> Result<f64, QuadratureError> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        let err = left + right - whole;
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(QuadratureError::NoConvergence { a, b, depth: 0 });
        }
        Ok(recurse(f, a, fa, m, fm, flm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, fm, b, fb, frm, right, tol / 2.0, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol, max_depth)
}

/// The fixed unit bump profile exp(-1/(1-x^2)) on (-1, 1), zero outside.
/// Not normalized; see [`mollifier_mass`].
pub fn mollifier(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Total mass of [`mollifier`], computed once by quadrature.
pub fn mollifier_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| {
        adaptive_simpson(&mollifier, -1.0, 1.0, 1e-14, 60)
            .expect("mollifier is smooth on a finite interval")
    })
}

/// Cumulative distribution of the normalized mollifier: 0 at x <= -1, 1 at
/// x >= 1, strictly increasing in between. Exact 0/1 outside the support so
/// that counting inequalities built from it hold without tolerance.
pub fn mollifier_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let raw = adaptive_simpson(&mollifier, -1.0, x, 1e-13, 60)
        .expect("mollifier is smooth on a finite interval");
    (raw / mollifier_mass()).clamp(0.0, 1.0)
}

/// C-infinity monotone step: 0 at x <= 0, 1 at x >= 1, built from exp(-1/x).
pub fn smoothstep01(x: f64) -> f64 {
    fn phi(x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            (-1.0 / x).exp()
        }
    }
    let p = phi(x);
    let q = phi(1.0 - x);
    if p + q == 0.0 {
        return if x > 0.5 { 1.0 } else { 0.0 };
    }
    p / (p + q)
}

/// Truncated power-series matrix exponential. Test oracle for the closed-form
/// exponentials; adequate for moderate ||m||.
pub fn expm_series(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let dim = m.nrows();
    let mut acc = DMatrix::<f64>::identity(dim, dim);
    let mut term = DMatrix::<f64>::identity(dim, dim);
    for j in 1..=terms {
        term = (&term * m) / j as f64;
        acc += &term;
    }
    acc
}

/// Ordinary least squares y = slope*x + intercept, with r^2.
/// Returns (slope, intercept, r_squared); r_squared is NaN when the
/// response is constant.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // A flat response is degenerate even when rounding leaves syy slightly
    // above zero.
    let y_scale: f64 = ys.iter().map(|y| y * y).sum::<f64>().max(1e-300);
    let r2 = if syy <= 1e-24 * y_scale {
        f64::NAN
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (slope * x + intercept);
                e * e
            })
            .sum();
        1.0 - ss_res / syy
    };
    (slope, intercept, r2)
}

/// Fixed 17-significant-digit float formatting used for every CSV artifact,
/// so that identical runs produce byte-identical files.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
