//! Sphere/circle packings as group orbits in inversive coordinates.
//!
//! The crate enumerates the spheres of a packing presented by a discrete
//! group of Q-orthogonal generators acting on the unit hyperboloid of a
//! quadratic space of signature (n+1, 1), counts spheres of bend below a
//! threshold, and fits the growth exponent. Alongside the enumerator it
//! carries the Lie-theoretic machinery the counting rests on, each piece
//! verified numerically:
//!
//! * [`inversive`]: the quadratic space, inversive coordinates, and the
//!   sphere <-> vector dictionary;
//! * [`lie`]: an explicit basis of so(n+1, 1), Killing form and dual basis,
//!   closed-form exponentials, and the H x Ubar x U x M_1 product chart;
//! * [`haar`]: the Haar density in chart coordinates, its factorization, and
//!   the Casimir operator restricted to invariant functions;
//! * [`spectral`]: the K_T/L_T interpolation kernels, the bend ODE with its
//!   variation-of-parameters solutions, and the smoothing windows;
//! * [`orbit`]: group ingestion, bend-bounded orbit search, counting,
//!   exponent fits, and smoothed counts.

pub mod haar;
pub mod inversive;
pub mod lie;
pub mod numerics;
pub mod orbit;
pub mod spectral;

pub use haar::{
    adjoint_in_basis, c_dual_inverse_apply, casimir_full_numeric, casimir_invariant_extension,
    casimir_restricted, d_matrix, haar_density, v_m, HaarFactorization, ResidualSweep,
};
pub use inversive::{InversiveVector, OrientedSphere, QuadraticSpace};
pub use lie::{BasisKind, GroupElement, LieBasis, ZCoordinates};
pub use orbit::{
    load_group, orbit_enumerate, sl2_row_count, ArithmeticMode, DeltaFit, GroupSpec, PackingCount,
};
pub use spectral::{
    bump, kernel_k, kernel_l, ode_residual, smooth_cutoff, variation_of_parameters,
    KernelConstants, SpectralParameter,
};
