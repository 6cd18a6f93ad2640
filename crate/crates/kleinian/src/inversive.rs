//! The quadratic space of signature (n+1, 1), inversive coordinates, and the
//! dictionary between oriented spheres in R^n and vectors on the unit
//! hyperboloid V_1.
//!
//! The standard form is Q = -x_0 x_{n+1} + x_1^2 + ... + x_n^2 with symmetric
//! half-Hessian matrix (corner entries -1/2, middle identity block). Group
//! elements act on the right, v -> v g, so orthogonality means g Q g^T = Q.
//!
//! Coordinate functionals are represented by vectors through the form itself:
//! a covector c acts as v -> c * v where a * b = a Q b^T. With the null pair
//! b = (0,...,0,-2) and bhat = (-2,0,...,0) this makes
//!
//!   bend(v) = v_0,   bend_center(v) = (v_1, ..., v_n),   cobend(v) = v_{n+1},
//!
//! and Q(v) = 1 becomes the inversive identity |bend_center|^2 - bend*cobend = 1.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InversiveError {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector is not on the unit hyperboloid: Q(v) = {q}")]
    NotUnit { q: f64 },
    #[error("matrix does not preserve Q under the right action (residual {residual:.3e})")]
    NotOrthogonal { residual: f64 },
    #[error("sphere has zero radius")]
    ZeroRadius,
    #[error("plane normal has near-zero length")]
    DegenerateNormal,
    #[error("ambient dimension must be at least 1")]
    DimensionTooSmall,
}

/// Tolerance for the unit-hyperboloid constraint in floating mode.
pub const UNIT_TOL: f64 = 1e-9;
/// Tolerance for Q-orthogonality of group elements in floating mode.
pub const ORTHO_TOL: f64 = 1e-9;

/// The quadratic space (V, Q) with its inversive coordinate functionals.
#[derive(Debug, Clone)]
pub struct QuadraticSpace {
    n: usize,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
    /// Representing vector of the bend functional (null).
    bend_vec: DVector<f64>,
    /// Representing vector of the co-bend functional (null), rescaled so the
    /// pairing bend * cobend is exactly -2.
    cobend_vec: DVector<f64>,
    /// Representing vectors of the bend-center functionals (orthonormal,
    /// orthogonal to the null pair). This fixes the coordinate frame.
    center_vecs: Vec<DVector<f64>>,
    cobend_rescale: f64,
}

impl QuadraticSpace {
    /// The standard form in ambient sphere dimension `n`: an
    /// (n+2) x (n+2) gram with corner entries -1/2 and middle identity.
    pub fn standard_form(n: usize) -> Result<Self, InversiveError> {
        if n < 1 {
            return Err(InversiveError::DimensionTooSmall);
        }
        let dim = n + 2;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        gram[(0, dim - 1)] = -0.5;
        gram[(dim - 1, 0)] = -0.5;
        for i in 1..=n {
            gram[(i, i)] = 1.0;
        }
        let mut gram_inv = DMatrix::<f64>::zeros(dim, dim);
        gram_inv[(0, dim - 1)] = -2.0;
        gram_inv[(dim - 1, 0)] = -2.0;
        for i in 1..=n {
            gram_inv[(i, i)] = 1.0;
        }

        let mut bend_vec = DVector::<f64>::zeros(dim);
        bend_vec[dim - 1] = -2.0;
        let mut cobend_vec = DVector::<f64>::zeros(dim);
        cobend_vec[0] = -2.0;

        // Normalization step: force bend * cobend = -2 exactly.
        let pairing = (bend_vec.transpose() * &gram * &cobend_vec)[(0, 0)];
        let cobend_rescale = -2.0 / pairing;
        cobend_vec *= cobend_rescale;
        log::debug!("co-bend covector rescaled by {cobend_rescale}");

        let center_vecs = (1..=n)
            .map(|i| {
                let mut e = DVector::<f64>::zeros(dim);
                e[i] = 1.0;
                e
            })
            .collect();

        Ok(Self {
            n,
            gram,
            gram_inv,
            bend_vec,
            cobend_vec,
            center_vecs,
            cobend_rescale,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the ambient vector space, n + 2.
    pub fn dim(&self) -> usize {
        self.n + 2
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_inv(&self) -> &DMatrix<f64> {
        &self.gram_inv
    }

    /// Rescaling factor applied to the co-bend covector at construction.
    pub fn cobend_rescale(&self) -> f64 {
        self.cobend_rescale
    }

    pub fn bend_covector(&self) -> &DVector<f64> {
        &self.bend_vec
    }

    pub fn cobend_covector(&self) -> &DVector<f64> {
        &self.cobend_vec
    }

    pub fn center_covectors(&self) -> &[DVector<f64>] {
        &self.center_vecs
    }

    /// The product v * w = v Q w^T.
    pub fn q_product(&self, v: &DVector<f64>, w: &DVector<f64>) -> Result<f64, InversiveError> {
        self.check_len(v)?;
        self.check_len(w)?;
        Ok((v.transpose() * &self.gram * w)[(0, 0)])
    }

    pub fn q_norm(&self, v: &DVector<f64>) -> Result<f64, InversiveError> {
        self.q_product(v, v)
    }

    /// Dual form on covectors given by their representing vectors:
    /// a* * b* = a * b.
    pub fn dual_product(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64, InversiveError> {
        self.q_product(a, b)
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<(), InversiveError> {
        if v.len() != self.dim() {
            return Err(InversiveError::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    fn apply_covector(&self, c: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (c.transpose() * &self.gram * v)[(0, 0)]
    }

    /// Bend (inversive radius) of the sphere represented by `v`.
    pub fn bend(&self, v: &InversiveVector) -> f64 {
        self.apply_covector(&self.bend_vec, &v.coords)
    }

    /// Co-bend: the bend of the image under inversion through the unit sphere.
    pub fn cobend(&self, v: &InversiveVector) -> f64 {
        self.apply_covector(&self.cobend_vec, &v.coords)
    }

    /// Bend-center bz(v): bend times the Euclidean center; a unit normal when
    /// the bend vanishes (plane case).
    pub fn bend_center(&self, v: &InversiveVector) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            self.center_vecs
                .iter()
                .map(|c| self.apply_covector(c, &v.coords)),
        )
    }

    /// Residual of the right-action orthogonality condition g Q g^T = Q.
    pub fn orthogonality_residual(&self, g: &DMatrix<f64>) -> f64 {
        let d = g * &self.gram * g.transpose() - &self.gram;
        d.amax()
    }

    /// Right action v -> v g. Fails when `g` does not preserve Q.
    pub fn apply_group(
        &self,
        v: &InversiveVector,
        g: &DMatrix<f64>,
    ) -> Result<InversiveVector, InversiveError> {
        let residual = self.orthogonality_residual(g);
        if residual > ORTHO_TOL {
            return Err(InversiveError::NotOrthogonal { residual });
        }
        Ok(InversiveVector {
            coords: (v.coords.transpose() * g).transpose(),
        })
    }

    /// Encode an oriented sphere (or plane) as a point of V_1.
    pub fn sphere_to_vector(&self, s: &OrientedSphere) -> Result<InversiveVector, InversiveError> {
        let dim = self.dim();
        let mut v = DVector::<f64>::zeros(dim);
        match s {
            OrientedSphere::Sphere {
                center,
                signed_radius,
            } => {
                if center.len() != self.n {
                    return Err(InversiveError::DimensionMismatch {
                        expected: self.n,
                        got: center.len(),
                    });
                }
                if *signed_radius == 0.0 {
                    return Err(InversiveError::ZeroRadius);
                }
                let b = 1.0 / signed_radius;
                v[0] = b;
                for i in 0..self.n {
                    v[1 + i] = center[i] * b;
                }
                v[dim - 1] = (center.norm_squared() - signed_radius * signed_radius) * b;
            }
            OrientedSphere::Plane {
                unit_normal,
                offset,
            } => {
                if unit_normal.len() != self.n {
                    return Err(InversiveError::DimensionMismatch {
                        expected: self.n,
                        got: unit_normal.len(),
                    });
                }
                for i in 0..self.n {
                    v[1 + i] = unit_normal[i];
                }
                v[dim - 1] = 2.0 * offset;
            }
        }
        let out = InversiveVector { coords: v };
        debug_assert!((self.q_norm(&out.coords).unwrap() - 1.0).abs() <= UNIT_TOL);
        Ok(out)
    }

    /// Decode a V_1 point to an oriented sphere. Bends below `1e-12` in
    /// magnitude are treated as planes.
    pub fn vector_to_sphere(&self, v: &InversiveVector) -> Result<OrientedSphere, InversiveError> {
        self.check_len(&v.coords)?;
        let q = self.q_norm(&v.coords)?;
        if (q - 1.0).abs() > UNIT_TOL {
            return Err(InversiveError::NotUnit { q });
        }
        let b = self.bend(v);
        let bz = self.bend_center(v);
        let bhat = self.cobend(v);
        if b.abs() <= 1e-12 {
            let norm = bz.norm();
            if norm < 1e-12 {
                return Err(InversiveError::DegenerateNormal);
            }
            Ok(OrientedSphere::Plane {
                unit_normal: bz / norm,
                offset: bhat / 2.0,
            })
        } else {
            Ok(OrientedSphere::Sphere {
                center: bz / b,
                signed_radius: 1.0 / b,
            })
        }
    }
}

/// A point of V_1 in inversive coordinates, representing an oriented sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct InversiveVector {
    pub coords: DVector<f64>,
}

impl InversiveVector {
    /// Wrap raw coordinates, checking the unit-hyperboloid constraint.
    pub fn from_coords(
        space: &QuadraticSpace,
        coords: DVector<f64>,
    ) -> Result<Self, InversiveError> {
        let q = space.q_norm(&coords)?;
        if (q - 1.0).abs() > UNIT_TOL {
            return Err(InversiveError::NotUnit { q });
        }
        Ok(Self { coords })
    }

    /// Wrap raw coordinates without the V_1 check (for cone points, group
    /// translates of non-unit vectors, and tests).
    pub fn from_coords_unchecked(coords: DVector<f64>) -> Self {
        Self { coords }
    }
}

/// An oriented sphere in R^n: a round sphere with signed radius, or a plane.
/// Orientation is carried by the sign of the radius (spheres) and by the
/// direction of the normal (planes); `flip` reverses it.
#[derive(Debug, Clone, PartialEq)]
pub enum OrientedSphere {
    Sphere {
        center: DVector<f64>,
        signed_radius: f64,
    },
    Plane {
        unit_normal: DVector<f64>,
        offset: f64,
    },
}

impl OrientedSphere {
    pub fn sphere(center: DVector<f64>, signed_radius: f64) -> Result<Self, InversiveError> {
        if signed_radius == 0.0 {
            return Err(InversiveError::ZeroRadius);
        }
        Ok(Self::Sphere {
            center,
            signed_radius,
        })
    }

    /// Plane { x : x . normal = offset }; the normal is normalized (and the
    /// offset rescaled accordingly).
    pub fn plane(normal: DVector<f64>, offset: f64) -> Result<Self, InversiveError> {
        let len = normal.norm();
        if len < 1e-12 {
            return Err(InversiveError::DegenerateNormal);
        }
        Ok(Self::Plane {
            unit_normal: normal / len,
            offset: offset / len,
        })
    }

    /// Bend: inverse signed radius; exactly 0 for planes.
    pub fn bend(&self) -> f64 {
        match self {
            Self::Sphere { signed_radius, .. } => 1.0 / signed_radius,
            Self::Plane { .. } => 0.0,
        }
    }

    pub fn flip(&self) -> Self {
        match self {
            Self::Sphere {
                center,
                signed_radius,
            } => Self::Sphere {
                center: center.clone(),
                signed_radius: -signed_radius,
            },
            Self::Plane {
                unit_normal,
                offset,
            } => Self::Plane {
                unit_normal: -unit_normal,
                offset: -offset,
            },
        }
    }

    #[cfg(test)]
    fn close_to(&self, other: &Self, tol: f64) -> bool {
        match (self, other) {
            (
                Self::Sphere {
                    center: c1,
                    signed_radius: r1,
                },
                Self::Sphere {
                    center: c2,
                    signed_radius: r2,
                },
            ) => (c1 - c2).amax() <= tol && (r1 - r2).abs() <= tol,
            (
                Self::Plane {
                    unit_normal: n1,
                    offset: o1,
                },
                Self::Plane {
                    unit_normal: n2,
                    offset: o2,
                },
            ) => (n1 - n2).amax() <= tol && (o1 - o2).abs() <= tol,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space2() -> QuadraticSpace {
        QuadraticSpace::standard_form(2).unwrap()
    }

    #[test]
    fn standard_form_n2_gram() {
        let s = space2();
        let g = s.gram();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, 0.0, -0.5, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                -0.5, 0.0, 0.0, 0.0,
            ],
        );
        assert_eq!(g, &expected);
    }

    #[test]
    fn standard_form_n1_gram() {
        let s = QuadraticSpace::standard_form(1).unwrap();
        let g = s.gram();
        assert_eq!(g[(1, 1)], 1.0);
        assert_eq!(g[(0, 2)], -0.5);
        assert_eq!(g[(2, 0)], -0.5);
        assert_eq!(g[(0, 0)], 0.0);
    }

    #[test]
    fn signature_n3() {
        let s = QuadraticSpace::standard_form(3).unwrap();
        let eig = s.gram().clone().symmetric_eigen();
        let pos = eig.eigenvalues.iter().filter(|&&l| l > 0.0).count();
        let neg = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
        assert_eq!((pos, neg), (4, 1));
    }

    #[test]
    fn covector_normalization() {
        for n in [1, 2, 3, 4] {
            let s = QuadraticSpace::standard_form(n).unwrap();
            let b = s.bend_covector();
            let bh = s.cobend_covector();
            assert!(s.dual_product(b, b).unwrap().abs() < 1e-14);
            assert!(s.dual_product(bh, bh).unwrap().abs() < 1e-14);
            assert!((s.dual_product(b, bh).unwrap() + 2.0).abs() < 1e-14);
            for (i, ci) in s.center_covectors().iter().enumerate() {
                assert!(s.dual_product(b, ci).unwrap().abs() < 1e-14);
                assert!(s.dual_product(bh, ci).unwrap().abs() < 1e-14);
                for (j, cj) in s.center_covectors().iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((s.dual_product(ci, cj).unwrap() - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn q_product_examples() {
        let s = space2();
        let e0 = dvector![1.0, 0.0, 0.0, 0.0];
        let e1 = dvector![0.0, 1.0, 0.0, 0.0];
        let e3 = dvector![0.0, 0.0, 0.0, 1.0];
        assert_eq!(s.q_product(&e0, &e0).unwrap(), 0.0);
        assert_eq!(s.q_product(&e1, &e1).unwrap(), 1.0);
        assert_eq!(s.q_product(&e0, &e3).unwrap(), -0.5);
        assert!(matches!(
            s.q_product(&e0, &dvector![1.0, 0.0]),
            Err(InversiveError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unit_sphere_coordinates() {
        let s = space2();
        let unit = OrientedSphere::sphere(dvector![0.0, 0.0], 1.0).unwrap();
        let v = s.sphere_to_vector(&unit).unwrap();
        assert!((s.bend(&v) - 1.0).abs() < 1e-15);
        assert!(s.bend_center(&v).norm() < 1e-15);
        // Outward orientation (positive radius) has co-bend -1.
        assert!((s.cobend(&v) + 1.0).abs() < 1e-15);
        let inward = s.sphere_to_vector(&unit.flip()).unwrap();
        assert!((s.cobend(&inward) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circle_through_origin_has_zero_cobend() {
        let s = space2();
        let c = OrientedSphere::sphere(dvector![0.5, 0.0], 0.5).unwrap();
        let v = s.sphere_to_vector(&c).unwrap();
        assert!((s.bend(&v) - 2.0).abs() < 1e-15);
        assert!(s.cobend(&v).abs() < 1e-15);
        let bz = s.bend_center(&v);
        assert!((bz[0] - 1.0).abs() < 1e-15 && bz[1].abs() < 1e-15);
    }

    #[test]
    fn plane_coordinates() {
        let s = space2();
        let p = OrientedSphere::plane(dvector![1.0, 0.0], 1.0).unwrap();
        let v = s.sphere_to_vector(&p).unwrap();
        assert_eq!(s.bend(&v), 0.0);
        let bz = s.bend_center(&v);
        assert!((bz[0] - 1.0).abs() < 1e-15 && bz[1].abs() < 1e-15);
        assert!((s.cobend(&v) - 2.0).abs() < 1e-15);
    }

    /// Independent oracle for the co-bend: invert three sample points of the
    /// circle through the unit circle and measure the circumradius of the
    /// image.
    #[test]
    fn cobend_against_inversion_oracle() {
        let s = space2();
        let center = dvector![3.0, 4.0];
        let r = 2.0;
        let circ = OrientedSphere::sphere(center.clone(), r).unwrap();
        let v = s.sphere_to_vector(&circ).unwrap();
        assert!((s.bend(&v) - 0.5).abs() < 1e-15);
        let claimed_cobend = s.cobend(&v);
        assert!((claimed_cobend - 10.5).abs() < 1e-12);

        // Three points on the circle, inverted through the unit circle.
        let pts: Vec<(f64, f64)> = [0.0f64, 2.0, 4.0]
            .iter()
            .map(|t| {
                let (x, y) = (center[0] + r * t.cos(), center[1] + r * t.sin());
                let d2 = x * x + y * y;
                (x / d2, y / d2)
            })
            .collect();
        // Circumradius of the image triangle.
        let (ax, ay) = pts[0];
        let (bx, by) = pts[1];
        let (cx, cy) = pts[2];
        let a = ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt();
        let b = ((ax - cx).powi(2) + (ay - cy).powi(2)).sqrt();
        let c = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        let s2 = (a + b + c) / 2.0;
        let area = (s2 * (s2 - a) * (s2 - b) * (s2 - c)).sqrt();
        let circumradius = a * b * c / (4.0 * area);
        assert!((1.0 / circumradius - claimed_cobend.abs()).abs() < 1e-9);
    }

    #[test]
    fn round_trip_random_spheres() {
        let s = QuadraticSpace::standard_form(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let center = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
            let mut r: f64 = rng.random_range(-3.0..3.0);
            if r.abs() < 1e-3 {
                r = 0.7;
            }
            let sphere = OrientedSphere::sphere(center, r).unwrap();
            let v = s.sphere_to_vector(&sphere).unwrap();
            assert!((s.q_norm(&v.coords).unwrap() - 1.0).abs() < 1e-9);
            let back = s.vector_to_sphere(&v).unwrap();
            assert!(back.close_to(&sphere, 1e-9));
        }
    }

    #[test]
    fn inversive_identity_random() {
        let s = QuadraticSpace::standard_form(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let center = DVector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
            let r = rng.random_range(0.1..3.0);
            let v = s
                .sphere_to_vector(&OrientedSphere::sphere(center, r).unwrap())
                .unwrap();
            let lhs = s.bend_center(&v).norm_squared() - s.bend(&v) * s.cobend(&v);
            assert!((lhs - 1.0).abs() < 1e-9);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Round trip through V_1 recovers any sphere, both orientations.
            #[test]
            fn sphere_round_trip(
                cx in -10.0..10.0f64,
                cy in -10.0..10.0f64,
                r in 0.01..5.0f64,
                flip in any::<bool>(),
            ) {
                let s = QuadraticSpace::standard_form(2).unwrap();
                let signed = if flip { -r } else { r };
                let sphere = OrientedSphere::sphere(dvector![cx, cy], signed).unwrap();
                let v = s.sphere_to_vector(&sphere).unwrap();
                prop_assert!((s.q_norm(&v.coords).unwrap() - 1.0).abs() < 1e-9);
                let back = s.vector_to_sphere(&v).unwrap();
                prop_assert!(back.close_to(&sphere, 1e-9));
            }

            /// The form is symmetric in its two arguments.
            #[test]
            fn q_product_symmetric(a in proptest::collection::vec(-5.0..5.0f64, 4),
                                   b in proptest::collection::vec(-5.0..5.0f64, 4)) {
                let s = QuadraticSpace::standard_form(2).unwrap();
                let va = DVector::from_vec(a);
                let vb = DVector::from_vec(b);
                let ab = s.q_product(&va, &vb).unwrap();
                let ba = s.q_product(&vb, &va).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_group_identity_and_rejects_non_orthogonal() {
        let s = space2();
        let v = s
            .sphere_to_vector(&OrientedSphere::sphere(dvector![0.3, -0.2], 0.7).unwrap())
            .unwrap();
        let id = DMatrix::<f64>::identity(4, 4);
        let w = s.apply_group(&v, &id).unwrap();
        assert_eq!(w.coords, v.coords);
        let bad = DMatrix::<f64>::identity(4, 4) * 1.1;
        assert!(matches!(
            s.apply_group(&v, &bad),
            Err(InversiveError::NotOrthogonal { .. })
        ));
    }
}
