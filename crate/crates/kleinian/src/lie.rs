//! The Lie algebra so(n+1, 1) of the isometry group acting on inversive
//! coordinates: an explicit basis organized by the stabilizer decomposition
//! H x Ubar x U x M_1, the Killing form and its dual basis, closed-form
//! exponentials, and the product coordinate chart.
//!
//! All group elements act on the right of row vectors, so algebra membership
//! means X Q + Q X^T = 0 and group membership means g Q g^T = Q.
//!
//! Basis layout for ambient dimension n (d = (n+1)(n+2)/2 elements):
//!
//! ```text
//! [h^m pairs]   (n-1)(n-2)/2  rotations E_ij - E_ji, 1 <= i < j <= n-1
//! [h lower]     n-1           E_i0 + (1/2) E_{n+1,i}
//! [h upper]     n-1           E_0i + 2 E_{i,n+1}
//! [h diagonal]  1             E_00 - E_{n+1,n+1}
//! [ubar]        1             E_n0 + (1/2) E_{n+1,n}
//! [u]           1             E_0n + 2 E_{n,n+1}
//! [m1]          n-1           E_in - E_ni, i = n-1, ..., 1
//! ```
//!
//! Within each multi-element block the middle index runs downward, matching
//! the n = 4 listing this layout generalizes.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::inversive::QuadraticSpace;

#[derive(Debug, Error)]
pub enum LieError {
    #[error("basis construction requires n >= 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("matrix is not in the Lie algebra: ||XQ + QX^T|| = {0:.3e}")]
    NotInAlgebra(f64),
    #[error("basis expansion residual {0:.3e} exceeds tolerance (basis bug)")]
    ExpansionResidual(f64),
    #[error("matrix does not preserve Q (residual {0:.3e})")]
    NotOrthogonal(f64),
    #[error("matrix has non-positive determinant {0:.3e}")]
    WrongComponent(f64),
    #[error("killing gram is singular")]
    SingularKilling,
    #[error("chart inversion did not converge (best residual {0:.3e}); point may be outside the injectivity neighborhood")]
    ChartInversion(f64),
    #[error("coordinate vector has wrong length: expected {expected}, got {got}")]
    BadCoordinates { expected: usize, got: usize },
}

/// Structural tag of a basis element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// Rotation inside the stabilizer, h intersect m.
    HM,
    /// Lower-triangular nilpotent in h.
    HLower,
    /// Upper-triangular nilpotent in h.
    HUpper,
    /// The boost E_00 - E_{n+1,n+1}.
    HDiagonal,
    /// The bend-changing unipotent direction.
    UBar,
    /// The co-bend-changing unipotent direction.
    U,
    /// Sphere rotations M_1 = M / (H^M).
    M1,
}

/// Closed-form exponential recipe for one basis element.
#[derive(Debug, Clone, Copy)]
enum ExpForm {
    Rotation(usize, usize),
    Lower(usize),
    Upper(usize),
    Diagonal,
    UBar,
    U,
}

/// An element of the identity component of O_Q, acting on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    mat: DMatrix<f64>,
}

impl GroupElement {
    pub fn identity(dim: usize) -> Self {
        Self {
            mat: DMatrix::identity(dim, dim),
        }
    }

    /// Validated constructor: requires g Q g^T = Q and det g > 0.
    pub fn from_matrix(space: &QuadraticSpace, mat: DMatrix<f64>) -> Result<Self, LieError> {
        let residual = space.orthogonality_residual(&mat);
        if residual > 1e-9 {
            return Err(LieError::NotOrthogonal(residual));
        }
        let det = mat.determinant();
        if det <= 0.0 {
            return Err(LieError::WrongComponent(det));
        }
        Ok(Self { mat })
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<f64>) -> Self {
        Self { mat }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        Self {
            mat: &self.mat * &rhs.mat,
        }
    }

    /// Inverse through the form: g^{-1} = Q g^T Q^{-1}.
    pub fn inverse(&self, space: &QuadraticSpace) -> Self {
        Self {
            mat: space.gram() * self.mat.transpose() * space.gram_inv(),
        }
    }
}

/// Coordinates (x_1..x_k, y, w, phi_1..phi_ell) for the chart
/// h_1(x_1)...h_k(x_k) ubar(y) u(w) m_1(phi_1)...m_ell(phi_ell).
#[derive(Debug, Clone, PartialEq)]
pub struct ZCoordinates {
    pub x: Vec<f64>,
    pub y: f64,
    pub w: f64,
    pub phi: Vec<f64>,
}

impl ZCoordinates {
    pub fn zero(basis: &LieBasis) -> Self {
        Self {
            x: vec![0.0; basis.k()],
            y: 0.0,
            w: 0.0,
            phi: vec![0.0; basis.ell()],
        }
    }

    /// Coordinates with only the (y, w) slots set.
    pub fn from_yw(basis: &LieBasis, y: f64, w: f64) -> Self {
        let mut z = Self::zero(basis);
        z.y = y;
        z.w = w;
        z
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.y);
        v.push(self.w);
        v.extend_from_slice(&self.phi);
        v
    }

    pub fn from_flat(basis: &LieBasis, flat: &[f64]) -> Result<Self, LieError> {
        if flat.len() != basis.d() {
            return Err(LieError::BadCoordinates {
                expected: basis.d(),
                got: flat.len(),
            });
        }
        let k = basis.k();
        Ok(Self {
            x: flat[..k].to_vec(),
            y: flat[k],
            w: flat[k + 1],
            phi: flat[k + 2..].to_vec(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The explicit basis of so(n+1, 1) with Killing gram and dual basis.
pub struct LieBasis {
    n: usize,
    space: QuadraticSpace,
    elements: Vec<DMatrix<f64>>,
    kinds: Vec<BasisKind>,
    exp_forms: Vec<ExpForm>,
    killing_gram: DMatrix<f64>,
    dual_coeffs: DMatrix<f64>,
    /// (n+2)^2 x d matrix whose columns are the flattened basis elements.
    flat: DMatrix<f64>,
    /// Cholesky-free solver data for expansion: (F^T F)^{-1}.
    normal_inv: DMatrix<f64>,
}

impl LieBasis {
    pub fn build(n: usize) -> Result<Self, LieError> {
        if n < 2 {
            return Err(LieError::DimensionTooSmall(n));
        }
        let space = QuadraticSpace::standard_form(n).expect("n >= 2");
        let dim = n + 2;
        let mut elements = Vec::new();
        let mut kinds = Vec::new();
        let mut exp_forms = Vec::new();

        let e = |entries: &[(usize, usize, f64)]| -> DMatrix<f64> {
            let mut m = DMatrix::<f64>::zeros(dim, dim);
            for &(r, c, v) in entries {
                m[(r, c)] = v;
            }
            m
        };

        // h intersect m: rotations among the first n-1 middle coordinates.
        for j in (2..n).rev() {
            for i in (1..j).rev() {
                elements.push(e(&[(i, j, 1.0), (j, i, -1.0)]));
                kinds.push(BasisKind::HM);
                exp_forms.push(ExpForm::Rotation(i, j));
            }
        }
        // h lower triangular.
        for i in (1..n).rev() {
            elements.push(e(&[(i, 0, 1.0), (n + 1, i, 0.5)]));
            kinds.push(BasisKind::HLower);
            exp_forms.push(ExpForm::Lower(i));
        }
        // h upper triangular.
        for i in (1..n).rev() {
            elements.push(e(&[(0, i, 1.0), (i, n + 1, 2.0)]));
            kinds.push(BasisKind::HUpper);
            exp_forms.push(ExpForm::Upper(i));
        }
        // h diagonal.
        elements.push(e(&[(0, 0, 1.0), (n + 1, n + 1, -1.0)]));
        kinds.push(BasisKind::HDiagonal);
        exp_forms.push(ExpForm::Diagonal);
        // ubar and u.
        elements.push(e(&[(n, 0, 1.0), (n + 1, n, 0.5)]));
        kinds.push(BasisKind::UBar);
        exp_forms.push(ExpForm::UBar);
        elements.push(e(&[(0, n, 1.0), (n, n + 1, 2.0)]));
        kinds.push(BasisKind::U);
        exp_forms.push(ExpForm::U);
        // m1: rotations pairing middle coordinate i with coordinate n.
        for i in (1..n).rev() {
            elements.push(e(&[(i, n, 1.0), (n, i, -1.0)]));
            kinds.push(BasisKind::M1);
            exp_forms.push(ExpForm::Rotation(i, n));
        }

        let d = (n + 1) * (n + 2) / 2;
        debug_assert_eq!(elements.len(), d);

        // Every element must be infinitesimally Q-orthogonal for the right
        // action.
        for x in &elements {
            let r = (x * space.gram() + space.gram() * x.transpose()).amax();
            if r > 1e-14 {
                return Err(LieError::NotInAlgebra(r));
            }
        }

        let mut flat = DMatrix::<f64>::zeros(dim * dim, d);
        for (j, x) in elements.iter().enumerate() {
            for (idx, v) in x.iter().enumerate() {
                flat[(idx, j)] = *v;
            }
        }
        let normal = flat.transpose() * &flat;
        let normal_inv = normal
            .try_inverse()
            .ok_or(LieError::ExpansionResidual(f64::INFINITY))?;

        let mut basis = Self {
            n,
            space,
            elements,
            kinds,
            exp_forms,
            killing_gram: DMatrix::zeros(d, d),
            dual_coeffs: DMatrix::zeros(d, d),
            flat,
            normal_inv,
        };

        // ad matrices in this basis, then B(X_i, X_j) = Tr(ad_i ad_j).
        let mut ads = Vec::with_capacity(d);
        for i in 0..d {
            let mut ad = DMatrix::<f64>::zeros(d, d);
            for j in 0..d {
                let br = basis.bracket(i, j);
                let coeffs = basis.expand(&br)?;
                ad.set_column(j, &coeffs);
            }
            ads.push(ad);
        }
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            for j in 0..=i {
                let v = (&ads[i] * &ads[j]).trace();
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        basis.dual_coeffs = gram
            .clone()
            .try_inverse()
            .ok_or(LieError::SingularKilling)?;
        basis.killing_gram = gram;
        Ok(basis)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Ambient matrix dimension, n + 2.
    pub fn dim(&self) -> usize {
        self.n + 2
    }

    /// Dimension of the algebra, (n+1)(n+2)/2.
    pub fn d(&self) -> usize {
        (self.n + 1) * (self.n + 2) / 2
    }

    /// Dimension of h, n(n+1)/2.
    pub fn k(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// Dimension of m1, n - 1.
    pub fn ell(&self) -> usize {
        self.n - 1
    }

    pub fn space(&self) -> &QuadraticSpace {
        &self.space
    }

    pub fn element(&self, i: usize) -> &DMatrix<f64> {
        &self.elements[i]
    }

    pub fn kind(&self, i: usize) -> BasisKind {
        self.kinds[i]
    }

    pub fn diagonal_index(&self) -> usize {
        self.k() - 1
    }

    pub fn ubar_index(&self) -> usize {
        self.k()
    }

    pub fn u_index(&self) -> usize {
        self.k() + 1
    }

    /// First index of the m1 block.
    pub fn m1_start(&self) -> usize {
        self.k() + 2
    }

    pub fn bracket(&self, i: usize, j: usize) -> DMatrix<f64> {
        let a = &self.elements[i];
        let b = &self.elements[j];
        a * b - b * a
    }

    /// Expand an algebra element in the basis; the least-squares residual is
    /// checked against 1e-10.
    pub fn expand(&self, x: &DMatrix<f64>) -> Result<DVector<f64>, LieError> {
        let v = DVector::from_column_slice(x.as_slice());
        let coeffs = &self.normal_inv * (self.flat.transpose() * &v);
        let residual = (&self.flat * &coeffs - &v).amax();
        if residual > 1e-10 {
            return Err(LieError::ExpansionResidual(residual));
        }
        Ok(coeffs)
    }

    /// Killing form on basis elements, B(X_i, X_j) = Tr(ad X_i . ad X_j).
    pub fn killing_form(&self, i: usize, j: usize) -> f64 {
        self.killing_gram[(i, j)]
    }

    pub fn killing_gram(&self) -> &DMatrix<f64> {
        &self.killing_gram
    }

    /// Killing form extended bilinearly to arbitrary coefficient vectors.
    pub fn killing_on(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a.transpose() * &self.killing_gram * b)[(0, 0)]
    }

    /// Coefficients C with X_i^* = sum_j C_ij X_j, so B(X_i, X_j^*) = delta.
    pub fn dual_coeffs(&self) -> &DMatrix<f64> {
        &self.dual_coeffs
    }

    /// Dual coefficients against the matrix-trace pairing tr(XY) of the
    /// defining representation. Since B = n tr on this algebra, these are
    /// n times the Killing-dual coefficients. The restricted Casimir closed
    /// form corresponds to this normalization.
    pub fn trace_dual_coeffs(&self) -> DMatrix<f64> {
        &self.dual_coeffs * self.n as f64
    }

    pub fn dual_element(&self, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::<f64>::zeros(self.dim(), self.dim());
        for j in 0..self.d() {
            m += self.dual_coeffs[(i, j)] * &self.elements[j];
        }
        m
    }

    /// Closed-form exponential exp(t X_i): finite trig series for rotations,
    /// quadratic polynomials for the nilpotent kinds, scalar exponentials on
    /// the diagonal kind.
    pub fn exp_coordinate(&self, i: usize, t: f64) -> GroupElement {
        let n = self.n;
        let dim = self.dim();
        let mut m = DMatrix::<f64>::identity(dim, dim);
        match self.exp_forms[i] {
            ExpForm::Rotation(a, b) => {
                let (s, c) = t.sin_cos();
                m[(a, a)] = c;
                m[(b, b)] = c;
                m[(a, b)] = s;
                m[(b, a)] = -s;
            }
            ExpForm::Lower(i) => {
                m[(i, 0)] = t;
                m[(n + 1, i)] = 0.5 * t;
                m[(n + 1, 0)] = 0.25 * t * t;
            }
            ExpForm::Upper(i) => {
                m[(0, i)] = t;
                m[(i, n + 1)] = 2.0 * t;
                m[(0, n + 1)] = t * t;
            }
            ExpForm::Diagonal => {
                m[(0, 0)] = t.exp();
                m[(n + 1, n + 1)] = (-t).exp();
            }
            ExpForm::UBar => {
                m[(n, 0)] = t;
                m[(n + 1, n)] = 0.5 * t;
                m[(n + 1, 0)] = 0.25 * t * t;
            }
            ExpForm::U => {
                m[(0, n)] = t;
                m[(n, n + 1)] = 2.0 * t;
                m[(0, n + 1)] = t * t;
            }
        }
        GroupElement { mat: m }
    }

    /// The ordered factor list of the chart at `z`.
    pub fn chart_factors(&self, z: &ZCoordinates) -> Vec<GroupElement> {
        let flat = z.to_flat();
        (0..self.d())
            .map(|i| self.exp_coordinate(i, flat[i]))
            .collect()
    }

    /// The chart J(z) = h_1(x_1)...h_k(x_k) ubar(y) u(w) m_1(phi_1)...
    pub fn chart(&self, z: &ZCoordinates) -> GroupElement {
        let mut m = DMatrix::<f64>::identity(self.dim(), self.dim());
        for (i, t) in z.to_flat().into_iter().enumerate() {
            m *= self.exp_coordinate(i, t).mat;
        }
        GroupElement { mat: m }
    }

    /// Local inverse of the chart by Newton iteration from z = 0 with a
    /// forward-difference Jacobian (step 1e-6). Fails outside the injectivity
    /// neighborhood.
    pub fn chart_inverse(&self, g: &GroupElement) -> Result<ZCoordinates, LieError> {
        let d = self.d();
        let dim2 = self.dim() * self.dim();
        let target = DVector::from_column_slice(g.mat.as_slice());
        let mut z = vec![0.0f64; d];
        let h = 1e-6;
        let mut best = f64::INFINITY;
        for _ in 0..50 {
            let zc = ZCoordinates::from_flat(self, &z)?;
            let cur = DVector::from_column_slice(self.chart(&zc).mat.as_slice());
            let res = &cur - &target;
            let rmax = res.amax();
            best = best.min(rmax);
            if rmax <= 1e-10 {
                return Ok(zc);
            }
            let mut jac = DMatrix::<f64>::zeros(dim2, d);
            for i in 0..d {
                let mut zp = z.clone();
                zp[i] += h;
                let zpc = ZCoordinates::from_flat(self, &zp)?;
                let col = DVector::from_column_slice(self.chart(&zpc).mat.as_slice());
                jac.set_column(i, &((col - &cur) / h));
            }
            let svd = jac.svd(true, true);
            let delta = svd
                .solve(&(-res), 1e-12)
                .map_err(|_| LieError::ChartInversion(best))?;
            for i in 0..d {
                z[i] += delta[i];
            }
        }
        // Accept a slightly stalled iteration if it still meets the contract.
        let zc = ZCoordinates::from_flat(self, &z)?;
        let res = (DVector::from_column_slice(self.chart(&zc).mat.as_slice()) - &target).amax();
        if res <= 1e-9 {
            Ok(zc)
        } else {
            Err(LieError::ChartInversion(best))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::expm_series;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_z(basis: &LieBasis, rng: &mut ChaCha8Rng, scale: f64) -> ZCoordinates {
        let flat: Vec<f64> = (0..basis.d())
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        ZCoordinates::from_flat(basis, &flat).unwrap()
    }

    #[test]
    fn dimensions() {
        let b4 = LieBasis::build(4).unwrap();
        assert_eq!((b4.d(), b4.k(), b4.ell()), (15, 10, 3));
        let b2 = LieBasis::build(2).unwrap();
        assert_eq!((b2.d(), b2.k(), b2.ell()), (6, 3, 1));
        assert!(LieBasis::build(1).is_err());
    }

    /// The n = 4 basis must reproduce the reference 6x6 listing entry for
    /// entry.
    #[test]
    fn n4_reference_listing() {
        let b = LieBasis::build(4).unwrap();
        let e = |entries: &[(usize, usize, f64)]| {
            let mut m = DMatrix::<f64>::zeros(6, 6);
            for &(r, c, v) in entries {
                m[(r, c)] = v;
            }
            m
        };
        let expected = [
            e(&[(2, 3, 1.0), (3, 2, -1.0)]),
            e(&[(1, 3, 1.0), (3, 1, -1.0)]),
            e(&[(1, 2, 1.0), (2, 1, -1.0)]),
            e(&[(3, 0, 1.0), (5, 3, 0.5)]),
            e(&[(2, 0, 1.0), (5, 2, 0.5)]),
            e(&[(1, 0, 1.0), (5, 1, 0.5)]),
            e(&[(0, 3, 1.0), (3, 5, 2.0)]),
            e(&[(0, 2, 1.0), (2, 5, 2.0)]),
            e(&[(0, 1, 1.0), (1, 5, 2.0)]),
            e(&[(0, 0, 1.0), (5, 5, -1.0)]),
            e(&[(4, 0, 1.0), (5, 4, 0.5)]),
            e(&[(0, 4, 1.0), (4, 5, 2.0)]),
            e(&[(3, 4, 1.0), (4, 3, -1.0)]),
            e(&[(2, 4, 1.0), (4, 2, -1.0)]),
            e(&[(1, 4, 1.0), (4, 1, -1.0)]),
        ];
        for (i, want) in expected.iter().enumerate() {
            assert_eq!(b.element(i), want, "basis element {} differs", i + 1);
        }
        let kinds: Vec<BasisKind> = (0..15).map(|i| b.kind(i)).collect();
        assert_eq!(kinds[..3], [BasisKind::HM; 3]);
        assert_eq!(kinds[3..6], [BasisKind::HLower; 3]);
        assert_eq!(kinds[6..9], [BasisKind::HUpper; 3]);
        assert_eq!(kinds[9], BasisKind::HDiagonal);
        assert_eq!(kinds[10], BasisKind::UBar);
        assert_eq!(kinds[11], BasisKind::U);
        assert_eq!(kinds[12..], [BasisKind::M1; 3]);
    }

    #[test]
    fn algebra_membership() {
        for n in [2, 3, 4] {
            let b = LieBasis::build(n).unwrap();
            let q = b.space().gram();
            for i in 0..b.d() {
                let x = b.element(i);
                assert!((x * q + q * x.transpose()).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn bracket_closure() {
        for n in [2, 3, 4] {
            let b = LieBasis::build(n).unwrap();
            for i in 0..b.d() {
                for j in 0..b.d() {
                    let br = b.bracket(i, j);
                    // expand() enforces residual < 1e-10.
                    b.expand(&br).unwrap();
                }
            }
        }
    }

    #[test]
    fn ubar_u_bracket_has_diagonal_component() {
        let b = LieBasis::build(3).unwrap();
        let br = b.bracket(b.ubar_index(), b.u_index());
        let coeffs = b.expand(&br).unwrap();
        assert!(coeffs[b.diagonal_index()].abs() > 0.5);
    }

    /// Oracle: for so(p, q) with p + q = n + 2 the Killing form is
    /// (n + 2 - 2) Tr(XY); the constant is confirmed here, not assumed.
    #[test]
    fn killing_is_n_times_trace_form() {
        for n in [2usize, 3, 4] {
            let b = LieBasis::build(n).unwrap();
            for i in 0..b.d() {
                for j in 0..b.d() {
                    let trace_form = (b.element(i) * b.element(j)).trace();
                    let want = n as f64 * trace_form;
                    assert!(
                        (b.killing_form(i, j) - want).abs() < 1e-9,
                        "n={n} i={i} j={j}: {} vs {}",
                        b.killing_form(i, j),
                        want
                    );
                }
            }
        }
    }

    #[test]
    fn killing_symmetric_and_invariant() {
        let b = LieBasis::build(3).unwrap();
        let d = b.d();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(b.killing_form(i, j), b.killing_form(j, i));
            }
        }
        // B([Z,X], Y) + B(X, [Z,Y]) = 0 on random triples.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let rand_coeffs =
                |rng: &mut ChaCha8Rng| DVector::from_fn(d, |_, _| rng.random_range(-1.0f64..1.0));
            let (zc, xc, yc) = (
                rand_coeffs(&mut rng),
                rand_coeffs(&mut rng),
                rand_coeffs(&mut rng),
            );
            let mat = |c: &DVector<f64>| {
                let mut m = DMatrix::<f64>::zeros(b.dim(), b.dim());
                for i in 0..d {
                    m += c[i] * b.element(i);
                }
                m
            };
            let (zm, xm, ym) = (mat(&zc), mat(&xc), mat(&yc));
            let zx = b.expand(&(&zm * &xm - &xm * &zm)).unwrap();
            let zy = b.expand(&(&zm * &ym - &ym * &zm)).unwrap();
            let s = b.killing_on(&zx, &yc) + b.killing_on(&xc, &zy);
            assert!(s.abs() < 1e-9, "invariance violated: {s}");
        }
    }

    #[test]
    fn killing_negative_definite_on_compact_kinds() {
        for n in [3usize, 4] {
            let b = LieBasis::build(n).unwrap();
            let idx: Vec<usize> = (0..b.d())
                .filter(|&i| matches!(b.kind(i), BasisKind::HM | BasisKind::M1))
                .collect();
            let m = DMatrix::from_fn(idx.len(), idx.len(), |r, c| b.killing_form(idx[r], idx[c]));
            let eig = m.symmetric_eigen();
            for l in eig.eigenvalues.iter() {
                assert!(*l < 0.0, "compact-direction eigenvalue {l} not negative");
            }
        }
    }

    #[test]
    fn dual_basis_duality() {
        for n in [2usize, 3, 4] {
            let b = LieBasis::build(n).unwrap();
            let d = b.d();
            let prod = b.dual_coeffs() * b.killing_gram();
            let err = (&prod - DMatrix::<f64>::identity(d, d)).amax();
            assert!(err < 1e-10, "n={n}: duality error {err}");
        }
    }

    #[test]
    fn double_dual_is_identity() {
        let b = LieBasis::build(3).unwrap();
        // Gram of the dual basis is K^{-1}; re-solving gives back K, so the
        // dual of the dual basis has coefficient matrix K * K^{-1} = I.
        let dual_gram = b.dual_coeffs() * b.killing_gram() * b.dual_coeffs().transpose();
        let double_dual = dual_gram.try_inverse().unwrap() * b.dual_coeffs();
        let err = (&double_dual - DMatrix::<f64>::identity(b.d(), b.d())).amax();
        assert!(err < 1e-8);
    }

    #[test]
    fn ubar_pairs_only_with_u() {
        for n in [2usize, 3, 4] {
            let b = LieBasis::build(n).unwrap();
            let ub = b.ubar_index();
            for j in 0..b.d() {
                let v = b.killing_form(ub, j);
                if j == b.u_index() {
                    assert!(v.abs() > 1.0);
                } else {
                    assert!(v.abs() < 1e-10, "ubar pairs with index {j}: {v}");
                }
            }
        }
    }

    #[test]
    fn exp_u_and_ubar_reference_matrices() {
        let b = LieBasis::build(4).unwrap();
        let w = 0.7;
        let u = b.exp_coordinate(b.u_index(), w);
        let mut want = DMatrix::<f64>::identity(6, 6);
        want[(0, 4)] = w;
        want[(0, 5)] = w * w;
        want[(4, 5)] = 2.0 * w;
        assert_eq!(u.matrix(), &want);

        let y = -0.4;
        let ub = b.exp_coordinate(b.ubar_index(), y);
        let mut want = DMatrix::<f64>::identity(6, 6);
        want[(4, 0)] = y;
        want[(5, 0)] = y * y / 4.0;
        want[(5, 4)] = y / 2.0;
        assert_eq!(ub.matrix(), &want);
    }

    #[test]
    fn exp_matches_power_series() {
        for n in [2usize, 4] {
            let b = LieBasis::build(n).unwrap();
            for i in 0..b.d() {
                for &t in &[0.0, 0.3, -1.0, 1.0] {
                    let closed = b.exp_coordinate(i, t);
                    let series = expm_series(&(b.element(i) * t), 30);
                    assert!(
                        (closed.matrix() - &series).amax() < 1e-12,
                        "n={n} element {i} t={t}"
                    );
                }
            }
        }
    }

    #[test]
    fn exp_zero_is_identity() {
        let b = LieBasis::build(3).unwrap();
        for i in 0..b.d() {
            assert_eq!(
                b.exp_coordinate(i, 0.0).matrix(),
                &DMatrix::<f64>::identity(5, 5)
            );
        }
    }

    #[test]
    fn chart_at_zero_and_single_coordinates() {
        let b = LieBasis::build(2).unwrap();
        let z = ZCoordinates::zero(&b);
        assert_eq!(b.chart(&z).matrix(), &DMatrix::<f64>::identity(4, 4));
        let z = ZCoordinates::from_yw(&b, 0.8, 0.0);
        assert_eq!(
            b.chart(&z).matrix(),
            b.exp_coordinate(b.ubar_index(), 0.8).matrix()
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// The right action of chart elements preserves Q, and acting by
            /// a product is acting twice.
            #[test]
            fn chart_action_is_q_orthogonal_right_action(
                seed in any::<u64>(),
                scale in 0.05..0.6f64,
            ) {
                let b = LieBasis::build(2).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let z1 = random_z(&b, &mut rng, scale);
                let z2 = random_z(&b, &mut rng, scale);
                let (g1, g2) = (b.chart(&z1), b.chart(&z2));
                let v = nalgebra::RowDVector::from_fn(4, |_, i| [0.7, 0.1, -0.3, 0.9][i]);
                let q = |u: &nalgebra::RowDVector<f64>| (u * b.space().gram() * u.transpose())[(0, 0)];
                let moved = &v * g1.matrix();
                prop_assert!((q(&moved) - q(&v)).abs() < 1e-9);
                let twice = &moved * g2.matrix();
                let once = &v * g1.compose(&g2).matrix();
                prop_assert!((&twice - &once).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn chart_lands_in_group() {
        for n in [2usize, 3] {
            let b = LieBasis::build(n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..10_000 / 2 {
                let z = random_z(&b, &mut rng, 0.8);
                let g = b.chart(&z);
                let r = b.space().orthogonality_residual(g.matrix());
                assert!(r < 1e-9, "n={n}: residual {r}");
            }
        }
    }

    #[test]
    fn chart_inverse_round_trip() {
        let b = LieBasis::build(3).unwrap();
        assert_eq!(
            b.chart_inverse(&GroupElement::identity(5)).unwrap(),
            ZCoordinates::zero(&b)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let z = random_z(&b, &mut rng, 0.1 / (b.d() as f64).sqrt());
            let g = b.chart(&z);
            let zr = b.chart_inverse(&g).unwrap();
            let err = z
                .to_flat()
                .iter()
                .zip(zr.to_flat())
                .map(|(a, bb)| (a - bb).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-8, "coordinate recovery error {err}");
        }
    }

    #[test]
    fn chart_inverse_ubar_u_product() {
        let b = LieBasis::build(2).unwrap();
        let g = b
            .exp_coordinate(b.ubar_index(), 0.3)
            .compose(&b.exp_coordinate(b.u_index(), 0.2));
        let z = b.chart_inverse(&g).unwrap();
        assert!(z.x.iter().all(|v| v.abs() < 1e-9));
        assert!((z.y - 0.3).abs() < 1e-9);
        assert!((z.w - 0.2).abs() < 1e-9);
        assert!(z.phi.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn chart_inverse_fails_outside_neighborhood() {
        // -I preserves Q and has det +1 in ambient dimension 4, but lies
        // outside the identity component, so it is not in the chart image.
        let b = LieBasis::build(2).unwrap();
        let g = GroupElement::from_matrix_unchecked(-DMatrix::<f64>::identity(4, 4));
        assert!(matches!(
            b.chart_inverse(&g),
            Err(LieError::ChartInversion(_))
        ));
    }

    #[test]
    fn group_element_inverse() {
        let b = LieBasis::build(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_z(&b, &mut rng, 0.5);
        let g = b.chart(&z);
        let gi = g.inverse(b.space());
        let prod = g.compose(&gi);
        assert!((prod.matrix() - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    /// Q-invariance of the right action over 10^4 random (v, g) pairs.
    #[test]
    fn q_invariance_many_pairs() {
        let b = LieBasis::build(2).unwrap();
        let q = b.space().gram();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10_000 {
            let v = nalgebra::RowDVector::<f64>::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let z = random_z(&b, &mut rng, 0.7);
            let g = b.chart(&z);
            let qv = (&v * q * v.transpose())[(0, 0)];
            let moved = &v * g.matrix();
            let qm = (&moved * q * moved.transpose())[(0, 0)];
            assert!((qv - qm).abs() < 1e-9, "Q drift {}", qv - qm);
        }
    }
}
