//! Haar density in the product chart, its factorization over
//! H x (Ubar U) x M_1, and the Casimir operator restricted to left-H,
//! right-M_1-invariant functions.
//!
//! The density is computed by the adjoint procedure. Writing the chart as an
//! ordered product of one-parameter factors F_1 ... F_d, row j of the matrix
//! mu expands Ad(T_j^{-1}) X_j in the basis, where T_j is the product of the
//! factors after position j; the density is |det mu|, normalized to 1 at the
//! identity. Restricting the factor list to the H block or the M_1 block
//! yields the densities rho_H and rho_M1 by the same procedure.
//!
//! At x = 0, phi = 0 the matrix mu reduces to a closed form d(y, w) whose
//! determinant is (1 + wy)^(n-1); this is the Ubar-U factor of the measure.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::lie::{GroupElement, LieBasis, LieError, ZCoordinates};
use crate::numerics::{self, fmt_f64};

#[derive(Debug, Error)]
pub enum HaarError {
    #[error(transparent)]
    Lie(#[from] LieError),
    #[error("evaluation at the degenerate locus 1 + wy = 0 (y = {y}, w = {w})")]
    DegenerateLocus { y: f64, w: f64 },
    #[error("finite-difference step underflow")]
    StepUnderflow,
}

/// The Haar density at a chart point, with its three factors.
/// `rho_ubar_u` is the closed-form factor |1 + wy|^(n-1); the factorization
/// identity rho_total = rho_h * rho_ubar_u * rho_m1 is what the verification
/// sweeps check.
#[derive(Debug, Clone)]
pub struct HaarFactorization {
    pub z: ZCoordinates,
    pub rho_total: f64,
    pub rho_h: f64,
    pub rho_ubar_u: f64,
    pub rho_m1: f64,
    pub degenerate: bool,
}

/// The base vector stabilized by H: the n-th middle coordinate direction.
pub fn stabilized_vector(basis: &LieBasis) -> DVector<f64> {
    let mut v = DVector::<f64>::zeros(basis.dim());
    v[basis.n()] = 1.0;
    v
}

/// Coefficients of Ad(g^{-1}) X_i = g^{-1} X_i g in the basis.
pub fn adjoint_in_basis(
    basis: &LieBasis,
    g: &GroupElement,
    i: usize,
) -> Result<DVector<f64>, HaarError> {
    let gi = g.inverse(basis.space());
    let conj = gi.matrix() * basis.element(i) * g.matrix();
    Ok(basis.expand(&conj)?)
}

/// |det| of the mu-style matrix over the factor range [lo, hi): row j in the
/// range expands Ad(T^{-1}) X_j with T the product of factors j+1..hi; rows
/// outside the range are unit rows.
fn range_density(
    basis: &LieBasis,
    factors: &[GroupElement],
    lo: usize,
    hi: usize,
) -> Result<f64, HaarError> {
    let d = basis.d();
    let mut mu = DMatrix::<f64>::identity(d, d);
    let mut tail = GroupElement::identity(basis.dim());
    let mut tail_inv = GroupElement::identity(basis.dim());
    for j in (lo..hi).rev() {
        if j + 1 < hi {
            tail = factors[j + 1].compose(&tail);
            tail_inv = tail.inverse(basis.space());
        }
        let conj = tail_inv.matrix() * basis.element(j) * tail.matrix();
        let coeffs = basis.expand(&conj)?;
        mu.set_row(j, &RowDVector::from_iterator(d, coeffs.iter().cloned()));
    }
    Ok(mu.determinant().abs())
}

/// Haar density at `z` by the adjoint/determinant procedure, factored over
/// the decomposition. The locus 1 + wy = 0 is reported as a tagged
/// degenerate value with all densities zero.
///
/// The factors are the restrictions of the density to the corresponding
/// coordinate subspaces, normalized to 1 at the origin. For the H block this
/// coincides with running the determinant procedure on the sub-product
/// h_1...h_k (the trailing factors are the identity there). The M_1 block is
/// not a subgroup when n >= 3, so its factor must be taken as the restricted
/// full density (the invariant measure of the (n-1)-sphere in these angles,
/// cos(phi_1)^(n-2) cos(phi_2)^(n-3) ...), not as a sub-product determinant.
pub fn haar_density(basis: &LieBasis, z: &ZCoordinates) -> Result<HaarFactorization, HaarError> {
    let n = basis.n();
    let one_wy = 1.0 + z.w * z.y;
    if one_wy.abs() < 1e-9 {
        return Ok(HaarFactorization {
            z: z.clone(),
            rho_total: 0.0,
            rho_h: 0.0,
            rho_ubar_u: 0.0,
            rho_m1: 0.0,
            degenerate: true,
        });
    }
    let factors = basis.chart_factors(z);
    let rho_total = range_density(basis, &factors, 0, basis.d())?;
    let rho_h = range_density(basis, &factors, 0, basis.k())?;
    let mut z_phi = ZCoordinates::zero(basis);
    z_phi.phi = z.phi.clone();
    let phi_factors = basis.chart_factors(&z_phi);
    let rho_m1 = range_density(basis, &phi_factors, 0, basis.d())?;
    Ok(HaarFactorization {
        z: z.clone(),
        rho_total,
        rho_h,
        rho_ubar_u: one_wy.abs().powi(n as i32 - 1),
        rho_m1,
        degenerate: false,
    })
}

/// Closed form of the mu matrix at x = 0, phi = 0 (the chart point
/// ubar(y) u(w)). Its determinant is (1 + wy)^(n-1).
///
/// Layout follows the basis: identity on the h^m and m1 blocks, a coupled
/// lower/upper block per middle index, and a 3x3 block over
/// (diagonal, ubar, u).
pub fn d_matrix(n: usize, y: f64, w: f64) -> DMatrix<f64> {
    assert!(n >= 2);
    let c = (n - 1) * (n - 2) / 2;
    let k = n * (n + 1) / 2;
    let d = (n + 1) * (n + 2) / 2;
    let mut m = DMatrix::<f64>::identity(d, d);
    let two_wy = 2.0 + w * y;
    for t in 0..n - 1 {
        let lower = c + t;
        let upper = c + (n - 1) + t;
        let m1 = k + 2 + t;
        m[(lower, upper)] = 0.5 * w * w;
        m[(lower, m1)] = w;
        m[(upper, lower)] = 0.5 * y * y;
        m[(upper, upper)] = 0.25 * two_wy * two_wy;
        m[(upper, m1)] = 0.5 * y * two_wy;
    }
    let diag = k - 1;
    m[(diag, diag)] = 1.0 + w * y;
    m[(diag, k)] = -y;
    m[(diag, k + 1)] = 0.5 * w * two_wy;
    m[(k, diag)] = -w;
    m[(k, k + 1)] = -0.5 * w * w;
    m
}

/// The spherical-coordinate unit vector
/// (sin p1, cos p1 sin p2, ..., cos p1 ... cos p_{l-1} sin p_l).
pub fn v_m(phi: &[f64]) -> DVector<f64> {
    let mut out = DVector::<f64>::zeros(phi.len());
    let mut cos_prod = 1.0;
    for (j, p) in phi.iter().enumerate() {
        out[j] = cos_prod * p.sin();
        cos_prod *= p.cos();
    }
    out
}

/// One first-order row: the operator coeff_y * d/dy + coeff_w * d/dw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeRow {
    pub coeff_y: f64,
    pub coeff_w: f64,
}

/// First-order coefficient rows of the basis directions acting on left-H,
/// right-M_1-invariant functions, in basis order. The h^m and m1 rows
/// vanish identically; the remaining rows involve only (y, w) derivatives
/// with spherical-coordinate prefactors.
pub fn c_dual_inverse_apply(n: usize, y: f64, w: f64, phi: &[f64]) -> Vec<DerivativeRow> {
    assert_eq!(phi.len(), n - 1);
    let c = (n - 1) * (n - 2) / 2;
    let d = (n + 1) * (n + 2) / 2;
    let vm = v_m(phi);
    let cos_prod: f64 = phi.iter().map(|p| p.cos()).product();
    let one_wy = 1.0 + w * y;
    let zero = DerivativeRow {
        coeff_y: 0.0,
        coeff_w: 0.0,
    };
    let mut rows = vec![zero; d];
    for t in 0..n - 1 {
        // lower block: (1/2) v_M (w^2 d/dw - 2(1+wy) d/dy)
        rows[c + t] = DerivativeRow {
            coeff_y: -vm[t] * one_wy,
            coeff_w: 0.5 * vm[t] * w * w,
        };
        // upper block: -v_M d/dw
        rows[c + (n - 1) + t] = DerivativeRow {
            coeff_y: 0.0,
            coeff_w: -vm[t],
        };
    }
    let k = n * (n + 1) / 2;
    rows[k - 1] = DerivativeRow {
        coeff_y: y,
        coeff_w: -w,
    };
    // ubar: (1/2) cos-product (2(1+wy) d/dy - w^2 d/dw)
    rows[k] = DerivativeRow {
        coeff_y: cos_prod * one_wy,
        coeff_w: -0.5 * cos_prod * w * w,
    };
    // u: cos-product d/dw
    rows[k + 1] = DerivativeRow {
        coeff_y: 0.0,
        coeff_w: cos_prod,
    };
    rows
}

/// The restricted Casimir operator
///   (1/2) (y^2 f_yy + (n+1) y f_y + 2 f_yw + (n-1) w f_w / (1 + yw))
/// with derivatives by central differences and one Richardson level
/// (step 1e-5 for first, 1e-4 for second derivatives).
pub fn casimir_restricted<F: Fn(f64, f64) -> f64>(
    f: F,
    y: f64,
    w: f64,
    n: usize,
) -> Result<f64, HaarError> {
    let one_wy = 1.0 + y * w;
    if one_wy.abs() < 1e-9 {
        return Err(HaarError::DegenerateLocus { y, w });
    }
    let nf = n as f64;
    let fy = numerics::deriv1_richardson(&|t| f(t, w), y, 1e-5);
    let fw = numerics::deriv1_richardson(&|t| f(y, t), w, 1e-5);
    let fyy = numerics::deriv2_richardson(&|t| f(t, w), y, 1e-4);
    let fyw = numerics::mixed2_richardson(&|a, b| f(a, b), y, w, 1e-4);
    Ok(0.5 * (y * y * fyy + (nf + 1.0) * y * fy + 2.0 * fyw + (nf - 1.0) * w * fw / one_wy))
}

/// Extract the (y, w) chart coordinates of the H (Ubar U) M_1 decomposition
/// from the translated base vector u = v_1 g. Uses the identity
/// 1 + y*cobend = |middle|^2, valid on the unit hyperboloid.
pub fn extract_yw(n: usize, u: &RowDVector<f64>) -> (f64, f64) {
    let y = u[0];
    let mid_norm = u.columns(1, n).norm();
    let w = u[n + 1] / (1.0 + mid_norm);
    (y, w)
}

/// The full Casimir sum X_i X_i^* applied to a smooth function on G by
/// nested left-invariant finite differences (central, one Richardson level).
///
/// The dual basis is taken against the trace pairing tr(XY); this is the
/// normalization under which the operator restricted to invariant functions
/// equals the closed form of [`casimir_restricted`]. The ad-trace Killing
/// dual would give the same operator divided by n.
pub fn casimir_full_numeric<F: Fn(&GroupElement) -> f64>(
    basis: &LieBasis,
    f: F,
    g: &GroupElement,
) -> Result<f64, HaarError> {
    casimir_full_with(
        basis,
        &basis.trace_dual_coeffs(),
        |i, t| basis.exp_coordinate(i, t),
        f,
        g,
    )
}

/// As [`casimir_full_numeric`] but with explicit dual coefficients and
/// exponential map; lets tests re-solve the Killing system in a transformed
/// basis and check basis independence.
pub fn casimir_full_with<F, E>(
    basis: &LieBasis,
    dual: &DMatrix<f64>,
    exp: E,
    f: F,
    g: &GroupElement,
) -> Result<f64, HaarError>
where
    F: Fn(&GroupElement) -> f64,
    E: Fn(usize, f64) -> GroupElement,
{
    let d = basis.d();
    let h = 1e-4;
    let steps = [h, -h, 0.5 * h, -0.5 * h];
    // exp(step X_i) cached per (i, step), then left-translated by g.
    let mut translated: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(d);
    let mut exps: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(d);
    for i in 0..d {
        let e: Vec<DMatrix<f64>> = steps.iter().map(|&s| exp(i, s).matrix().clone()).collect();
        translated.push(e.iter().map(|m| g.matrix() * m).collect());
        exps.push(e);
    }
    let eval = |i: usize, si: usize, j: usize, sj: usize| {
        f(&GroupElement::from_matrix_unchecked(
            &translated[i][si] * &exps[j][sj],
        ))
    };
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = dual[(i, j)];
            if c == 0.0 {
                continue;
            }
            let dh = (eval(i, 0, j, 0) - eval(i, 0, j, 1) - eval(i, 1, j, 0) + eval(i, 1, j, 1))
                / (4.0 * h * h);
            let dh2 = (eval(i, 2, j, 2) - eval(i, 2, j, 3) - eval(i, 3, j, 2) + eval(i, 3, j, 3))
                / (h * h);
            total += c * (4.0 * dh2 - dh) / 3.0;
        }
    }
    Ok(total)
}

/// Fast path for the verification sweeps: the full Casimir applied to the
/// left-H, right-M_1-invariant extension of f(y, w), evaluated at the chart
/// point ubar(y) u(w). Everything reduces to row-vector translates of the
/// base vector, so no matrix-matrix products are needed per sample.
pub fn casimir_invariant_extension<F: Fn(f64, f64) -> f64>(
    basis: &LieBasis,
    f: F,
    y: f64,
    w: f64,
) -> Result<f64, HaarError> {
    let n = basis.n();
    let d = basis.d();
    let one_wy = 1.0 + w * y;
    if one_wy.abs() < 1e-9 {
        return Err(HaarError::DegenerateLocus { y, w });
    }
    // v_1 ubar(y) u(w) = (y, 0, ..., 0, 1 + wy, w(2 + wy)).
    let mut u0 = RowDVector::<f64>::zeros(basis.dim());
    u0[0] = y;
    u0[n] = one_wy;
    u0[n + 1] = w * (2.0 + w * y);

    let h = 1e-4;
    let steps = [h, -h, 0.5 * h, -0.5 * h];
    let mut exps: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(d);
    let mut rows: Vec<Vec<RowDVector<f64>>> = Vec::with_capacity(d);
    for i in 0..d {
        let e: Vec<DMatrix<f64>> = steps
            .iter()
            .map(|&s| basis.exp_coordinate(i, s).matrix().clone())
            .collect();
        rows.push(e.iter().map(|m| &u0 * m).collect());
        exps.push(e);
    }
    let eval = |i: usize, si: usize, j: usize, sj: usize| {
        let v = &rows[i][si] * &exps[j][sj];
        let (yy, ww) = extract_yw(n, &v);
        f(yy, ww)
    };
    let dual = basis.trace_dual_coeffs();
    let mut total = 0.0;
    for i in 0..d {
        for j in 0..d {
            let c = dual[(i, j)];
            if c == 0.0 {
                continue;
            }
            let dh = (eval(i, 0, j, 0) - eval(i, 0, j, 1) - eval(i, 1, j, 0) + eval(i, 1, j, 1))
                / (4.0 * h * h);
            let dh2 = (eval(i, 2, j, 2) - eval(i, 2, j, 3) - eval(i, 3, j, 2) + eval(i, 3, j, 3))
                / (h * h);
            total += c * (4.0 * dh2 - dh) / 3.0;
        }
    }
    Ok(total)
}

/// A residual sweep: per-sample coordinates and residuals, with the pass
/// threshold. This is the report format shared by the verification commands.
#[derive(Debug, Clone)]
pub struct ResidualSweep {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<(Vec<f64>, f64)>,
    pub threshold: f64,
}

impl ResidualSweep {
    pub fn max_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(Vec<f64>, f64)> {
        self.rows
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
    }

    pub fn passed(&self) -> bool {
        self.max_residual() < self.threshold
    }

    pub fn write_csv<W: std::io::Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "index")?;
        for c in &self.columns {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",residual")?;
        for (i, (coords, r)) in self.rows.iter().enumerate() {
            write!(out, "{i}")?;
            for c in coords {
                write!(out, ",{}", fmt_f64(*c))?;
            }
            writeln!(out, ",{}", fmt_f64(*r))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let worst = self
            .worst()
            .map(|(c, r)| format!("max residual {r:.3e} at {c:?}"))
            .unwrap_or_else(|| "no samples".to_string());
        format!(
            "{}: {} ({} samples, threshold {:.1e}): {}",
            self.name,
            status,
            self.rows.len(),
            self.threshold,
            worst
        )
    }
}

/// Uniform sample from the d-ball of the given radius.
fn sample_ball(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> Vec<f64> {
    // Box-Muller normals, normalized, times radius * U^(1/d).
    let mut g = Vec::with_capacity(d + 1);
    while g.len() <= d {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let r = (-2.0 * u1.ln()).sqrt();
        g.push(r * u2.cos());
        g.push(r * u2.sin());
    }
    g.truncate(d);
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: f64 = rng.random_range(0.0f64..1.0);
    let scale = radius * u.powf(1.0 / d as f64) / norm;
    g.iter().map(|v| v * scale).collect()
}

/// Factorization sweep: relative error of rho_total against
/// rho_h * |1+wy|^(n-1) * rho_m1 over seeded random chart points with
/// |z| <= 0.5 and |1 + wy| > 0.1.
pub fn factorization_sweep(
    basis: &LieBasis,
    samples: usize,
    seed: u64,
) -> Result<ResidualSweep, HaarError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples);
    let mut taken = 0;
    while taken < samples {
        let flat = sample_ball(&mut rng, basis.d(), 0.5);
        let z = ZCoordinates::from_flat(basis, &flat)?;
        if (1.0 + z.w * z.y).abs() <= 0.1 {
            continue;
        }
        taken += 1;
        let fac = haar_density(basis, &z)?;
        let predicted = fac.rho_h * fac.rho_ubar_u * fac.rho_m1;
        let residual = (fac.rho_total - predicted).abs() / fac.rho_total;
        rows.push((vec![z.y, z.w, fac.rho_total, predicted], residual));
    }
    Ok(ResidualSweep {
        name: format!("haar-factorization n={}", basis.n()),
        columns: vec![
            "y".into(),
            "w".into(),
            "rho_total".into(),
            "rho_factored".into(),
        ],
        rows,
        threshold: 1e-6,
    })
}

/// Determinant sweep: |det d(y,w)| against |1+wy|^(n-1), relative error.
pub fn dmatrix_det_sweep(n_lo: usize, n_hi: usize, samples: usize, seed: u64) -> ResidualSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for n in n_lo..=n_hi {
        for _ in 0..samples {
            let y: f64 = rng.random_range(-3.0..3.0);
            let w: f64 = rng.random_range(-3.0..3.0);
            let want = (1.0 + w * y).abs().powi(n as i32 - 1);
            if want < 1e-6 {
                continue;
            }
            let det = d_matrix(n, y, w).determinant().abs();
            let residual = (det - want).abs() / want;
            rows.push((vec![n as f64, y, w], residual));
        }
    }
    ResidualSweep {
        name: format!("d-matrix determinant n={n_lo}..{n_hi}"),
        columns: vec!["n".into(), "y".into(), "w".into()],
        rows,
        threshold: 1e-9,
    }
}

/// A boxed smooth test profile on the (y, w) half-plane chart.
pub type TestFunction = Box<dyn Fn(f64, f64) -> f64 + Sync>;

/// The five smooth test profiles used by the Casimir agreement sweep.
pub fn casimir_test_functions() -> Vec<(&'static str, TestFunction)> {
    vec![
        ("gauss", Box::new(|y: f64, w: f64| (-(y * y + w * w)).exp())),
        (
            "y-gauss",
            Box::new(|y: f64, w: f64| y * (-(y * y + w * w)).exp()),
        ),
        (
            "w-gauss",
            Box::new(|y: f64, w: f64| w * (-(y * y + w * w)).exp()),
        ),
        (
            "quad-gauss",
            Box::new(|y: f64, w: f64| (y * y + y * w) * (-(y * y + w * w) / 2.0).exp()),
        ),
        (
            "mixed-gauss",
            Box::new(|y: f64, w: f64| (1.0 + y + w * w) * (-(y * y + w * w)).exp()),
        ),
    ]
}

/// Casimir agreement sweep: the full operator on the invariant extension
/// against the restricted closed form, over seeded random (y, w) and the
/// fixed test functions. Residuals are relative with a unit floor.
pub fn casimir_sweep(
    basis: &LieBasis,
    samples: usize,
    seed: u64,
) -> Result<ResidualSweep, HaarError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let funcs = casimir_test_functions();
    let mut points = Vec::with_capacity(samples);
    while points.len() < samples {
        let y: f64 = rng.random_range(-0.8..0.8);
        let w: f64 = rng.random_range(-0.8..0.8);
        if (1.0 + w * y).abs() > 0.1 {
            points.push((y, w));
        }
    }
    let mut rows = Vec::with_capacity(samples * funcs.len());
    for (fi, (_, f)) in funcs.iter().enumerate() {
        for &(y, w) in &points {
            let full = casimir_invariant_extension(basis, f.as_ref(), y, w)?;
            let restricted = casimir_restricted(f.as_ref(), y, w, basis.n())?;
            let residual = (full - restricted).abs() / restricted.abs().max(1.0);
            rows.push((vec![fi as f64, y, w, full, restricted], residual));
        }
    }
    Ok(ResidualSweep {
        name: format!("casimir-agreement n={}", basis.n()),
        columns: vec![
            "function".into(),
            "y".into(),
            "w".into(),
            "full".into(),
            "restricted".into(),
        ],
        rows,
        threshold: 1e-4,
    })
}
