//! Interpolation kernels in the spectral parameter, the bend ODE with its
//! variation-of-parameters solutions, and the smoothing windows.
//!
//! The kernels K_T, L_T satisfy the two-point interpolation identity
//!   alpha T^s + beta T^(n-s) = K_T(s) (alpha + beta) + L_T(s) (alpha b^s + beta b^(n-s))
//! for any coefficients; on the critical line s = n/2 + it they degenerate to
//! sine quotients (taken as the continuous limit of the generic branch).
//!
//! The bend ODE is
//!   -y^2 f'' + (n-3) y f' + (n-1) f - lambda f = h(y),   lambda = s(n-s),
//! with homogeneous solutions y^(s-1) and y^(n-s-1).

use num::complex::Complex64;
use thiserror::Error;

use crate::numerics::{self, QuadratureError};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid spectral parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel resonance: |sin(t log b)| = {0:.3e} too small; perturb b")]
    Resonance(f64),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A spectral parameter s with lambda = s(n - s). Real s lies in (n/2, n];
/// critical-line parameters are s = n/2 + it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParameter {
    pub n: u32,
    pub s: Complex64,
}

impl SpectralParameter {
    pub fn real(n: u32, s: f64) -> Result<Self, SpectralError> {
        let nf = n as f64;
        if !(s > nf / 2.0 && s <= nf) {
            return Err(SpectralError::InvalidParameter(format!(
                "real parameter must lie in (n/2, n], got s = {s} with n = {n}"
            )));
        }
        Ok(Self {
            n,
            s: Complex64::new(s, 0.0),
        })
    }

    pub fn critical(n: u32, t: f64) -> Self {
        Self {
            n,
            s: Complex64::new(n as f64 / 2.0, t),
        }
    }

    pub fn is_critical(&self) -> bool {
        self.s.im != 0.0
    }

    /// lambda = s(n-s); real in both regimes.
    pub fn lambda(&self) -> f64 {
        let nf = self.n as f64;
        let l = self.s * (Complex64::new(nf, 0.0) - self.s);
        debug_assert!(l.im.abs() < 1e-12);
        l.re
    }
}

/// The interpolation base b > 1 (less than 3 in the one-dimensional mode).
#[derive(Debug, Clone, Copy)]
pub struct KernelConstants {
    pub b: f64,
}

impl Default for KernelConstants {
    fn default() -> Self {
        Self { b: 2.0 }
    }
}

impl KernelConstants {
    pub fn new(b: f64) -> Result<Self, SpectralError> {
        if b <= 1.0 {
            return Err(SpectralError::InvalidParameter(format!(
                "kernel base must exceed 1, got {b}"
            )));
        }
        Ok(Self { b })
    }
}

fn kernels(
    t_big: f64,
    p: &SpectralParameter,
    kc: &KernelConstants,
) -> Result<(f64, f64), SpectralError> {
    let nf = p.n as f64;
    let b = kc.b;
    if p.is_critical() {
        let t = p.s.im;
        let denom = (t * b.ln()).sin();
        if denom.abs() < 1e-8 {
            return Err(SpectralError::Resonance(denom.abs()));
        }
        let k = -t_big.powf(nf / 2.0) * (t * (t_big / b).ln()).sin() / denom;
        let l = (t_big / b).powf(nf / 2.0) * (t * t_big.ln()).sin() / denom;
        Ok((k, l))
    } else {
        let s = p.s.re;
        let denom = b.powf(nf - s) - b.powf(s);
        if denom.abs() < 1e-12 * b.powf(s) {
            return Err(SpectralError::Resonance(denom.abs()));
        }
        let k = (t_big.powf(s) * b.powf(nf - s) - t_big.powf(nf - s) * b.powf(s)) / denom;
        let l = (t_big.powf(nf - s) - t_big.powf(s)) / denom;
        Ok((k, l))
    }
}

/// K_T(s) = (T^s b^(n-s) - T^(n-s) b^s) / (b^(n-s) - b^s), with the sine
/// form on the critical line.
pub fn kernel_k(
    t_big: f64,
    p: &SpectralParameter,
    kc: &KernelConstants,
) -> Result<f64, SpectralError> {
    kernels(t_big, p, kc).map(|(k, _)| k)
}

/// L_T(s) = (T^(n-s) - T^s) / (b^(n-s) - b^s), with the sine form on the
/// critical line.
pub fn kernel_l(
    t_big: f64,
    p: &SpectralParameter,
    kc: &KernelConstants,
) -> Result<f64, SpectralError> {
    kernels(t_big, p, kc).map(|(_, l)| l)
}

/// Residual of the bend ODE:
///   -y^2 f'' + (n-3) y f' + (n-1) f - lambda f - h(y),  lambda = s(n-s).
/// Derivatives of the black-box `f` use wide 7-point stencils.
pub fn ode_residual(f: &dyn Fn(f64) -> f64, h: &dyn Fn(f64) -> f64, s: f64, n: f64, y: f64) -> f64 {
    assert!(y > 0.0, "the bend ODE lives on y > 0");
    let lambda = s * (n - s);
    let step = 6e-3 * y.abs().max(1.0);
    let f1 = numerics::deriv1(f, y, step);
    let f2 = numerics::deriv2(f, y, step);
    -y * y * f2 + (n - 3.0) * y * f1 + (n - 1.0 - lambda) * f(y) - h(y)
}

/// Homogeneous solutions y^(s-1), y^(n-s-1) of the bend ODE.
pub fn homogeneous_solutions(s: f64, n: f64) -> (impl Fn(f64) -> f64, impl Fn(f64) -> f64) {
    (
        move |y: f64| y.powf(s - 1.0),
        move |y: f64| y.powf(n - s - 1.0),
    )
}

/// Particular solution of the bend ODE with right-hand side h, vanishing
/// data at y = T:
///   f(y) = y^(s-1) u(y) + y^(n-s-1) v(y),
///   u(y) = int_y^T t^(-s) h(t) dt / (2s - n),
///   v(y) = int_y^T t^(s-n) h(t) dt / (n - 2s),
/// with the logarithmic branch at s = n/2. Integrals by adaptive quadrature.
pub fn variation_of_parameters(
    h: &dyn Fn(f64) -> f64,
    s: f64,
    n: f64,
    t_big: f64,
    y: f64,
) -> Result<f64, SpectralError> {
    assert!(y > 0.0 && y <= t_big);
    let tol = 1e-13;
    let depth = 60;
    if (2.0 * s - n).abs() > 1e-9 {
        let u = numerics::adaptive_simpson(&|t: f64| t.powf(-s) * h(t), y, t_big, tol, depth)?
            / (2.0 * s - n);
        let v = numerics::adaptive_simpson(&|t: f64| t.powf(s - n) * h(t), y, t_big, tol, depth)?
            / (n - 2.0 * s);
        Ok(y.powf(s - 1.0) * u + y.powf(n - s - 1.0) * v)
    } else {
        // s = n/2: second solution y^(n/2-1) log y; the kernel becomes
        // log(t/y) against t^(-n/2) h(t).
        let half = n / 2.0;
        let u = numerics::adaptive_simpson(
            &|t: f64| t.powf(-half) * t.ln() * h(t),
            y,
            t_big,
            tol,
            depth,
        )?;
        let v = numerics::adaptive_simpson(&|t: f64| t.powf(-half) * h(t), y, t_big, tol, depth)?;
        Ok(y.powf(half - 1.0) * (-u + y.ln() * v))
    }
}

/// Smooth cutoff in the bend direction: 1 for T y < 1, 0 for T y > 1 + sigma,
/// with a fixed C-infinity monotone interpolation in between.
pub fn smooth_cutoff(y: f64, t_big: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0 && t_big > 0.0);
    let u = t_big * y;
    if u <= 1.0 {
        1.0
    } else if u >= 1.0 + sigma {
        0.0
    } else {
        1.0 - numerics::smoothstep01((u - 1.0) / sigma)
    }
}

/// The fixed even unit-mass mollifier scaled to width epsilon:
/// psi_eps(x) = psi_1(x / eps) / eps, supported in [-eps, eps].
pub fn bump(x: f64, epsilon: f64) -> f64 {
    assert!(epsilon > 0.0);
    numerics::mollifier(x / epsilon) / (epsilon * numerics::mollifier_mass())
}
