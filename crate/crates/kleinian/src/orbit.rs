//! Orbit enumeration for sphere packings given by generators in inversive
//! coordinates: breadth-first search over reduced words with bend-bounded
//! pruning, deduplication (exact in integer mode, quantized in floating
//! mode), bend counting, growth-exponent fits, and smoothed counts.
//!
//! The search is level-synchronous. Each level expands its frontier (in
//! parallel when requested), then merges candidates into the seen-set in a
//! deterministic order; the resulting packing is a set, so the outcome is
//! independent of the worker count.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2};
use num::{BigRational, FromPrimitive, One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::numerics;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("cannot read group config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("bad numeric literal {value:?} in {context}")]
    BadNumber { value: String, context: String },
    #[error("generator {index} is not Q-orthogonal (residual {residual})")]
    NonOrthogonal { index: usize, residual: String },
    #[error("base vector {index} is not on the unit hyperboloid (Q = {q})")]
    BaseNotUnit { index: usize, q: String },
    #[error("config error: {0}")]
    BadConfig(String),
    #[error("count at T = {t} exceeds the certified horizon {horizon}")]
    HorizonExceeded { t: f64, horizon: f64 },
    #[error("not enough data for the fit: {0}")]
    InsufficientData(String),
    #[error("generator {index} does not have unit determinant (det = {det})")]
    BadDeterminant { index: usize, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithmeticMode {
    Integer,
    Float,
}

/// Calibrated constant for the smoothed-count sandwich: for eps in (0, 1/2),
///   smoothed(T(1 - c eps)) <= N(T) <= smoothed(T(1 + c eps))
/// holds with c = 2 because log(1 + 2 eps) >= eps and -log(1 - 2 eps) >= eps
/// on that range.
pub const SANDWICH_C: f64 = 2.0;

const DEFAULT_MARGIN: f64 = 4.0;
const FLOAT_GRID: f64 = 1e-7;

// ---------------------------------------------------------------------------
// Exact rational linear algebra for the integer mode.

type Rat = BigRational;

fn parse_rat(s: &str, context: &str) -> Result<Rat, OrbitError> {
    s.trim().parse::<Rat>().map_err(|_| OrbitError::BadNumber {
        value: s.to_string(),
        context: context.to_string(),
    })
}

fn parse_f64(s: &str, context: &str) -> Result<f64, OrbitError> {
    if let Ok(v) = s.trim().parse::<f64>() {
        return Ok(v);
    }
    parse_rat(s, context).map(|r| r.to_f64().unwrap())
}

/// Square rational matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
struct RMat {
    dim: usize,
    a: Vec<Rat>,
}

impl RMat {
    fn from_rows(dim: usize, a: Vec<Rat>) -> Self {
        debug_assert_eq!(a.len(), dim * dim);
        Self { dim, a }
    }

    fn at(&self, r: usize, c: usize) -> &Rat {
        &self.a[r * self.dim + c]
    }

    fn mul(&self, rhs: &RMat) -> RMat {
        let d = self.dim;
        let mut out = vec![Rat::zero(); d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = Rat::zero();
                for k in 0..d {
                    acc += self.at(r, k) * rhs.at(k, c);
                }
                out[r * d + c] = acc;
            }
        }
        RMat::from_rows(d, out)
    }

    fn transpose(&self) -> RMat {
        let d = self.dim;
        let mut out = vec![Rat::zero(); d * d];
        for r in 0..d {
            for c in 0..d {
                out[c * d + r] = self.at(r, c).clone();
            }
        }
        RMat::from_rows(d, out)
    }

    fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| self.at(r, c).to_f64().unwrap())
    }
}

/// Standard gram for ambient dimension n: corners -1/2, middle identity.
fn rational_gram(n: usize) -> RMat {
    let d = n + 2;
    let mut a = vec![Rat::zero(); d * d];
    let half = Rat::new((-1).into(), 2.into());
    a[d - 1] = half.clone();
    a[(d - 1) * d] = half;
    for i in 1..=n {
        a[i * d + i] = Rat::one();
    }
    RMat::from_rows(d, a)
}

/// Inverse of the standard gram: corners -2, middle identity.
fn rational_gram_inv(n: usize) -> RMat {
    let d = n + 2;
    let mut a = vec![Rat::zero(); d * d];
    let m2 = Rat::from_i64(-2).unwrap();
    a[d - 1] = m2.clone();
    a[(d - 1) * d] = m2;
    for i in 1..=n {
        a[i * d + i] = Rat::one();
    }
    RMat::from_rows(d, a)
}

fn rat_vec_mul(v: &[Rat], m: &RMat) -> Vec<Rat> {
    let d = m.dim;
    let mut out = vec![Rat::zero(); d];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut acc = Rat::zero();
        for (r, vr) in v.iter().enumerate() {
            if !vr.is_zero() {
                acc += vr * m.at(r, c);
            }
        }
        *slot = acc;
    }
    out
}

fn rat_q_norm(gram: &RMat, v: &[Rat]) -> Rat {
    let qv = rat_vec_mul(v, gram);
    v.iter().zip(qv.iter()).map(|(a, b)| a * b).sum()
}

// ---------------------------------------------------------------------------
// Group specification.

#[derive(Debug, Clone)]
enum SpecData {
    /// Exact mode with purely integral data, run in 128-bit integers.
    /// Coordinates of packings stay far below the i128 range for any
    /// realistic bend bound; overflow aborts rather than silently wrapping.
    Int {
        gens: Vec<Vec<i128>>,
        bases: Vec<Vec<i128>>,
    },
    Exact {
        gens: Vec<RMat>,
        bases: Vec<Vec<Rat>>,
    },
    Float {
        gens: Vec<DMatrix<f64>>,
        bases: Vec<DVector<f64>>,
    },
}

fn rat_to_i128(r: &Rat) -> Option<i128> {
    if r.is_integer() {
        r.numer().to_i128()
    } else {
        None
    }
}

/// A discrete group acting on inversive vectors, with the orbit seeds.
/// The packing is the union of the orbits of the base vectors.
#[derive(Debug, Clone)]
pub struct GroupSpec {
    pub n: usize,
    pub mode: ArithmeticMode,
    pub bounded: bool,
    /// Bend-center cutoff for unbounded/periodic packings.
    pub center_cutoff: Option<f64>,
    /// Pruning margin: a branch is cut only when its bend exceeds
    /// margin * T and its parent's bend exceeded T.
    pub margin: f64,
    /// Radius of a ball around the origin containing the base spheres;
    /// diagnostic bound for enumerated centers of bounded packings.
    pub enclosing_radius: f64,
    /// Index of the inverse of each generator.
    inverse_of: Vec<usize>,
    data: SpecData,
}

#[derive(Deserialize)]
struct RawGroupConfig {
    n: usize,
    mode: String,
    generators: Vec<Vec<String>>,
    #[serde(default)]
    base_vectors: Option<Vec<Vec<String>>>,
    #[serde(default)]
    base_vector: Option<Vec<String>>,
    bounded: bool,
    #[serde(rename = "X", default)]
    x: Option<f64>,
    #[serde(default)]
    margin: Option<f64>,
}

/// Load and validate a group config file. Generators are closed under
/// inverse; Q-orthogonality and unit base vectors are checked (exactly in
/// integer mode).
pub fn load_group<P: AsRef<Path>>(path: P) -> Result<GroupSpec, OrbitError> {
    let text = std::fs::read_to_string(path)?;
    let raw: RawGroupConfig = serde_json::from_str(&text)?;
    let bases: Vec<Vec<String>> = match (raw.base_vectors, raw.base_vector) {
        (Some(v), _) => v,
        (None, Some(v)) => vec![v],
        (None, None) => {
            return Err(OrbitError::BadConfig(
                "config needs base_vectors (or base_vector)".into(),
            ))
        }
    };
    let mode = match raw.mode.as_str() {
        "integer" => ArithmeticMode::Integer,
        "float" => ArithmeticMode::Float,
        other => {
            return Err(OrbitError::BadConfig(format!(
                "mode must be \"integer\" or \"float\", got {other:?}"
            )))
        }
    };
    GroupSpec::from_parts(
        raw.n,
        mode,
        &raw.generators,
        &bases,
        raw.bounded,
        raw.x,
        raw.margin,
    )
}

impl GroupSpec {
    /// Build a validated spec from string-valued entries (row-major
    /// generators of size (n+2)^2, base vectors of length n+2).
    pub fn from_parts(
        n: usize,
        mode: ArithmeticMode,
        generators: &[Vec<String>],
        base_vectors: &[Vec<String>],
        bounded: bool,
        center_cutoff: Option<f64>,
        margin: Option<f64>,
    ) -> Result<Self, OrbitError> {
        if n < 1 {
            return Err(OrbitError::BadConfig("n must be at least 1".into()));
        }
        let dim = n + 2;
        for (i, g) in generators.iter().enumerate() {
            if g.len() != dim * dim {
                return Err(OrbitError::BadConfig(format!(
                    "generator {i} has {} entries, expected {}",
                    g.len(),
                    dim * dim
                )));
            }
        }
        for (i, b) in base_vectors.iter().enumerate() {
            if b.len() != dim {
                return Err(OrbitError::BadConfig(format!(
                    "base vector {i} has {} entries, expected {dim}",
                    b.len()
                )));
            }
        }
        if base_vectors.is_empty() {
            return Err(OrbitError::BadConfig("no base vectors".into()));
        }

        let (data, inverse_of) = match mode {
            ArithmeticMode::Integer => {
                let gram = rational_gram(n);
                let gram_inv = rational_gram_inv(n);
                let mut gens = Vec::new();
                for (i, g) in generators.iter().enumerate() {
                    let entries: Result<Vec<Rat>, _> = g
                        .iter()
                        .map(|s| parse_rat(s, &format!("generator {i}")))
                        .collect();
                    gens.push(RMat::from_rows(dim, entries?));
                }
                // Exact orthogonality: g Q g^T = Q.
                for (i, g) in gens.iter().enumerate() {
                    let gqgt = g.mul(&gram).mul(&g.transpose());
                    if gqgt != gram {
                        let r = gqgt
                            .a
                            .iter()
                            .zip(gram.a.iter())
                            .map(|(a, b)| (a - b).abs())
                            .max()
                            .unwrap();
                        return Err(OrbitError::NonOrthogonal {
                            index: i,
                            residual: r.to_string(),
                        });
                    }
                }
                // Close under inverse: g^{-1} = Q g^T Q^{-1}.
                let mut inverse_of = Vec::new();
                let mut all = gens.clone();
                for g in gens.iter() {
                    let gi = gram.mul(&g.transpose()).mul(&gram_inv);
                    if let Some(pos) = all.iter().position(|m| *m == gi) {
                        inverse_of.push(pos);
                    } else {
                        all.push(gi);
                        inverse_of.push(all.len() - 1);
                    }
                }
                for j in gens.len()..all.len() {
                    let gi = gram.mul(&all[j].transpose()).mul(&gram_inv);
                    let pos = all.iter().position(|m| *m == gi).expect("inverse closed");
                    inverse_of.push(pos);
                }
                let mut bases = Vec::new();
                for (i, b) in base_vectors.iter().enumerate() {
                    let v: Result<Vec<Rat>, _> = b
                        .iter()
                        .map(|s| parse_rat(s, &format!("base vector {i}")))
                        .collect();
                    let v = v?;
                    let q = rat_q_norm(&gram, &v);
                    if q != Rat::one() {
                        return Err(OrbitError::BaseNotUnit {
                            index: i,
                            q: q.to_string(),
                        });
                    }
                    bases.push(v);
                }
                // Purely integral data runs in machine integers.
                let int_gens: Option<Vec<Vec<i128>>> = all
                    .iter()
                    .map(|g| g.a.iter().map(rat_to_i128).collect())
                    .collect();
                let int_bases: Option<Vec<Vec<i128>>> = bases
                    .iter()
                    .map(|v| v.iter().map(rat_to_i128).collect())
                    .collect();
                match (int_gens, int_bases) {
                    (Some(gens), Some(bases)) => (SpecData::Int { gens, bases }, inverse_of),
                    _ => (SpecData::Exact { gens: all, bases }, inverse_of),
                }
            }
            ArithmeticMode::Float => {
                let space = crate::inversive::QuadraticSpace::standard_form(n)
                    .map_err(|e| OrbitError::BadConfig(e.to_string()))?;
                let gram = space.gram().clone();
                let gram_inv = space.gram_inv().clone();
                let mut gens = Vec::new();
                for (i, g) in generators.iter().enumerate() {
                    let entries: Result<Vec<f64>, _> = g
                        .iter()
                        .map(|s| parse_f64(s, &format!("generator {i}")))
                        .collect();
                    gens.push(DMatrix::from_row_slice(dim, dim, &entries?));
                }
                for (i, g) in gens.iter().enumerate() {
                    let r = (g * &gram * g.transpose() - &gram).amax();
                    if r > 1e-9 {
                        return Err(OrbitError::NonOrthogonal {
                            index: i,
                            residual: format!("{r:.3e}"),
                        });
                    }
                }
                let mut inverse_of = Vec::new();
                let mut all = gens.clone();
                for g in gens.iter() {
                    let gi = &gram * g.transpose() * &gram_inv;
                    if let Some(pos) = all.iter().position(|m| (m - &gi).amax() < 1e-9) {
                        inverse_of.push(pos);
                    } else {
                        all.push(gi);
                        inverse_of.push(all.len() - 1);
                    }
                }
                for j in gens.len()..all.len() {
                    let gi = &gram * all[j].transpose() * &gram_inv;
                    let pos = all
                        .iter()
                        .position(|m| (m - &gi).amax() < 1e-9)
                        .expect("inverse closed");
                    inverse_of.push(pos);
                }
                let mut bases = Vec::new();
                for (i, b) in base_vectors.iter().enumerate() {
                    let v: Result<Vec<f64>, _> = b
                        .iter()
                        .map(|s| parse_f64(s, &format!("base vector {i}")))
                        .collect();
                    let v = DVector::from_vec(v?);
                    let q = (v.transpose() * &gram * &v)[(0, 0)];
                    if (q - 1.0).abs() > 1e-9 {
                        return Err(OrbitError::BaseNotUnit {
                            index: i,
                            q: format!("{q}"),
                        });
                    }
                    bases.push(v);
                }
                (SpecData::Float { gens: all, bases }, inverse_of)
            }
        };

        let mut spec = GroupSpec {
            n,
            mode,
            bounded,
            center_cutoff,
            margin: margin.unwrap_or(DEFAULT_MARGIN),
            enclosing_radius: 0.0,
            inverse_of,
            data,
        };
        spec.enclosing_radius = spec
            .base_vectors_f64()
            .iter()
            .map(|v| {
                let b = v[0];
                let bz = v.rows(1, spec.n).norm();
                if b.abs() > 1e-12 {
                    (bz + 1.0) / b.abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        Ok(spec)
    }

    pub fn generator_count(&self) -> usize {
        match &self.data {
            SpecData::Int { gens, .. } => gens.len(),
            SpecData::Exact { gens, .. } => gens.len(),
            SpecData::Float { gens, .. } => gens.len(),
        }
    }

    pub fn base_vectors_f64(&self) -> Vec<DVector<f64>> {
        match &self.data {
            SpecData::Int { bases, .. } => bases
                .iter()
                .map(|v| DVector::from_iterator(v.len(), v.iter().map(|x| *x as f64)))
                .collect(),
            SpecData::Exact { bases, .. } => bases
                .iter()
                .map(|v| DVector::from_iterator(v.len(), v.iter().map(|r| r.to_f64().unwrap())))
                .collect(),
            SpecData::Float { bases, .. } => bases.clone(),
        }
    }

    pub fn generators_f64(&self) -> Vec<DMatrix<f64>> {
        let dim = self.n + 2;
        match &self.data {
            SpecData::Int { gens, .. } => gens
                .iter()
                .map(|g| DMatrix::from_fn(dim, dim, |r, c| g[r * dim + c] as f64))
                .collect(),
            SpecData::Exact { gens, .. } => gens.iter().map(|g| g.to_f64()).collect(),
            SpecData::Float { gens, .. } => gens.clone(),
        }
    }

    fn min_base_bend(&self) -> f64 {
        self.base_vectors_f64()
            .iter()
            .map(|v| v[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Demote integral data to the general rational pipeline (test hook for
    /// covering the BigRational path on integral inputs).
    #[cfg(test)]
    fn force_rational(&mut self) {
        if let SpecData::Int { gens, bases } = &self.data {
            let dim = self.n + 2;
            let gens = gens
                .iter()
                .map(|g| {
                    RMat::from_rows(
                        dim,
                        g.iter()
                            .map(|x| Rat::from_integer(num::BigInt::from(*x)))
                            .collect(),
                    )
                })
                .collect();
            let bases = bases
                .iter()
                .map(|v| {
                    v.iter()
                        .map(|x| Rat::from_integer(num::BigInt::from(*x)))
                        .collect()
                })
                .collect();
            self.data = SpecData::Exact { gens, bases };
        }
    }
}

// ---------------------------------------------------------------------------
// Orbit vectors and dedup keys.

#[derive(Clone)]
enum OVec {
    Int(Vec<i128>),
    Exact(Vec<Rat>),
    Float(DVector<f64>),
}

impl OVec {
    fn bend(&self) -> f64 {
        match self {
            OVec::Int(v) => v[0] as f64,
            OVec::Exact(v) => v[0].to_f64().unwrap(),
            OVec::Float(v) => v[0],
        }
    }

    fn center_norm(&self, n: usize) -> f64 {
        match self {
            OVec::Int(v) => v[1..=n]
                .iter()
                .map(|x| {
                    let x = *x as f64;
                    x * x
                })
                .sum::<f64>()
                .sqrt(),
            OVec::Exact(v) => v[1..=n]
                .iter()
                .map(|r| {
                    let x = r.to_f64().unwrap();
                    x * x
                })
                .sum::<f64>()
                .sqrt(),
            OVec::Float(v) => v.rows(1, n).norm(),
        }
    }

    fn to_f64(&self) -> DVector<f64> {
        match self {
            OVec::Int(v) => DVector::from_iterator(v.len(), v.iter().map(|x| *x as f64)),
            OVec::Exact(v) => {
                DVector::from_iterator(v.len(), v.iter().map(|r| r.to_f64().unwrap()))
            }
            OVec::Float(v) => v.clone(),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
enum OrbitKey {
    Int(Vec<i128>),
    Exact(Vec<Rat>),
    Grid(Vec<i64>),
}

fn primary_key(v: &OVec) -> OrbitKey {
    match v {
        OVec::Int(v) => OrbitKey::Int(v.clone()),
        OVec::Exact(v) => OrbitKey::Exact(v.clone()),
        OVec::Float(v) => {
            OrbitKey::Grid(v.iter().map(|x| (x / FLOAT_GRID).round() as i64).collect())
        }
    }
}

/// Neighbor-cell probe keys for coordinates sitting near a quantization
/// boundary. Axis-aligned bumps plus the all-bumped key.
fn probe_keys(v: &OVec) -> Vec<OrbitKey> {
    let OVec::Float(v) = v else {
        return Vec::new();
    };
    let cells: Vec<f64> = v.iter().map(|x| x / FLOAT_GRID).collect();
    let base: Vec<i64> = cells.iter().map(|c| c.round() as i64).collect();
    let mut keys = Vec::new();
    let mut all = base.clone();
    let mut any = false;
    for (i, c) in cells.iter().enumerate() {
        let frac = c - c.round();
        if frac.abs() > 0.5 - 1e-3 {
            let bump = if frac > 0.0 { 1 } else { -1 };
            let mut k = base.clone();
            k[i] += bump;
            keys.push(OrbitKey::Grid(k));
            all[i] += bump;
            any = true;
        }
    }
    if any && keys.len() > 1 {
        keys.push(OrbitKey::Grid(all));
    }
    keys
}

struct Node {
    v: OVec,
    last_gen: Option<usize>,
    parent_bend: f64,
}

fn apply_gen(spec: &GroupSpec, v: &OVec, j: usize) -> OVec {
    match (&spec.data, v) {
        (SpecData::Int { gens, .. }, OVec::Int(v)) => {
            let dim = v.len();
            let g = &gens[j];
            let mut out = vec![0i128; dim];
            for (c, slot) in out.iter_mut().enumerate() {
                let mut acc = 0i128;
                for (r, vr) in v.iter().enumerate() {
                    acc = vr
                        .checked_mul(g[r * dim + c])
                        .and_then(|p| acc.checked_add(p))
                        .expect("orbit coordinate exceeded the 128-bit range; use float mode");
                }
                *slot = acc;
            }
            OVec::Int(out)
        }
        (SpecData::Exact { gens, .. }, OVec::Exact(v)) => OVec::Exact(rat_vec_mul(v, &gens[j])),
        (SpecData::Float { gens, .. }, OVec::Float(v)) => {
            OVec::Float((v.transpose() * &gens[j]).transpose())
        }
        _ => unreachable!("mode mismatch"),
    }
}

// ---------------------------------------------------------------------------
// Packing counts.

/// Sorted multiset of bends of the distinct spheres found below the horizon.
#[derive(Debug, Clone)]
pub struct PackingCount {
    /// Sorted ascending; one entry per distinct sphere with bend < horizon.
    pub bends: Vec<f64>,
    /// Bend bound up to which the enumeration is certified complete.
    pub horizon: f64,
    pub words_explored: u64,
    pub complete: bool,
    /// Largest |center| observed over enumerated spheres with |bend| >= 1/2;
    /// for a bounded packing this stays within the enclosing radius.
    pub max_center_norm: f64,
}

impl PackingCount {
    /// Build from raw bends (used by synthetic tests and file round-trips).
    pub fn from_bends(mut bends: Vec<f64>, horizon: f64) -> Self {
        bends.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bends.retain(|b| *b < horizon);
        Self {
            bends,
            horizon,
            words_explored: 0,
            complete: true,
            max_center_norm: 0.0,
        }
    }

    /// N(T): number of stored bends strictly below T. Refuses T beyond the
    /// certified horizon rather than undercounting.
    pub fn count(&self, t: f64) -> Result<usize, OrbitError> {
        if t > self.horizon {
            return Err(OrbitError::HorizonExceeded {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.bends.partition_point(|b| *b < t))
    }

    /// Least-squares fit of log N(T) against log T on a geometric grid.
    pub fn fit_delta(
        &self,
        t_low: f64,
        t_high: f64,
        num_points: usize,
    ) -> Result<DeltaFit, OrbitError> {
        if num_points < 2 || t_low.is_nan() || t_low <= 0.0 || t_high <= t_low {
            return Err(OrbitError::InsufficientData(
                "need at least two grid points and 0 < T_low < T_high".into(),
            ));
        }
        if t_high > self.horizon {
            return Err(OrbitError::HorizonExceeded {
                t: t_high,
                horizon: self.horizon,
            });
        }
        if self.count(t_low)? < 10 {
            return Err(OrbitError::InsufficientData(format!(
                "N(T_low) = {} < 10",
                self.count(t_low)?
            )));
        }
        let ratio = (t_high / t_low).powf(1.0 / (num_points - 1) as f64);
        let mut xs = Vec::with_capacity(num_points);
        let mut ys = Vec::with_capacity(num_points);
        for i in 0..num_points {
            // Clamp: rounding in powi can push the last point past t_high.
            let t = (t_low * ratio.powi(i as i32)).min(t_high);
            let n = self.count(t)?;
            if n > 0 {
                xs.push(t.ln());
                ys.push((n as f64).ln());
            }
        }
        if xs.len() < 2 {
            return Err(OrbitError::InsufficientData("empty counts on grid".into()));
        }
        let (slope, intercept, r2) = numerics::linear_fit(&xs, &ys);
        Ok(DeltaFit {
            slope,
            intercept,
            r_squared: r2,
            t_range: (t_low, t_high),
            degenerate: r2.is_nan(),
        })
    }

    /// Smoothed count: each stored bend beta contributes
    /// W((log T - log beta) / eps) with W the integrated unit bump.
    /// Non-positive bends always count fully (they are below any T > 0).
    pub fn smoothed_count(&self, t: f64, epsilon: f64) -> Result<SmoothedCount, OrbitError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(OrbitError::InsufficientData(format!(
                "epsilon must lie in (0, 1/2), got {epsilon}"
            )));
        }
        if t.is_nan() || t <= 0.0 || t * epsilon.exp() > self.horizon {
            return Err(OrbitError::HorizonExceeded {
                t: t * epsilon.exp(),
                horizon: self.horizon,
            });
        }
        let log_t = t.ln();
        let mut value = 0.0;
        for &b in &self.bends {
            if b <= 0.0 {
                value += 1.0;
            } else {
                value += numerics::mollifier_cdf((log_t - b.ln()) / epsilon);
            }
        }
        Ok(SmoothedCount { value, epsilon, t })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SmoothedCount {
    pub value: f64,
    pub epsilon: f64,
    pub t: f64,
}

/// Result of a log-log growth fit N(T) ~ c T^slope.
#[derive(Debug, Clone, Copy)]
pub struct DeltaFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t_range: (f64, f64),
    pub degenerate: bool,
}

// ---------------------------------------------------------------------------
// Enumeration.

type Enumeration = (PackingCount, Option<Vec<DVector<f64>>>);

/// Enumerate the orbit of the base vectors up to bend `t`.
///
/// Reduced words only (no immediate backtracking); a branch is pruned when
/// its bend exceeds margin * t and its parent's bend exceeded t. With
/// `threads > 1` each level is expanded in parallel; results are
/// schedule-independent.
pub fn orbit_enumerate(
    spec: &GroupSpec,
    t: f64,
    max_depth: usize,
    threads: usize,
) -> Result<PackingCount, OrbitError> {
    Ok(enumerate_impl(spec, t, max_depth, threads, false)?.0)
}

/// As [`orbit_enumerate`], also returning the coordinates of every counted
/// sphere (for rendering).
pub fn orbit_enumerate_collecting(
    spec: &GroupSpec,
    t: f64,
    max_depth: usize,
    threads: usize,
) -> Result<(PackingCount, Vec<DVector<f64>>), OrbitError> {
    let (pc, vecs) = enumerate_impl(spec, t, max_depth, threads, true)?;
    Ok((pc, vecs.unwrap_or_default()))
}

fn enumerate_impl(
    spec: &GroupSpec,
    t: f64,
    max_depth: usize,
    threads: usize,
    collect: bool,
) -> Result<Enumeration, OrbitError> {
    if max_depth < 1 {
        return Err(OrbitError::InsufficientData(
            "max_depth must be >= 1".into(),
        ));
    }
    if t.is_nan() || t <= spec.min_base_bend() {
        return Err(OrbitError::InsufficientData(format!(
            "bend bound {t} does not exceed the smallest base bend"
        )));
    }
    let pool = if threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| OrbitError::BadConfig(e.to_string()))?,
        )
    } else {
        None
    };

    let seeds: Vec<OVec> = match &spec.data {
        SpecData::Int { bases, .. } => bases.iter().cloned().map(OVec::Int).collect(),
        SpecData::Exact { bases, .. } => bases.iter().cloned().map(OVec::Exact).collect(),
        SpecData::Float { bases, .. } => bases.iter().cloned().map(OVec::Float).collect(),
    };
    let gen_count = spec.generator_count();
    let cutoff = if spec.bounded {
        None
    } else {
        spec.center_cutoff
    };

    let mut seen: HashSet<OrbitKey> = HashSet::new();
    let mut bends: Vec<f64> = Vec::new();
    let mut vectors: Vec<DVector<f64>> = Vec::new();
    let mut max_center_norm = 0.0f64;
    let mut frontier: Vec<Node> = Vec::new();
    let mut words_explored: u64 = 0;

    let admit = |node: Node,
                 seen: &mut HashSet<OrbitKey>,
                 bends: &mut Vec<f64>,
                 vectors: &mut Vec<DVector<f64>>,
                 max_center_norm: &mut f64|
     -> Option<Node> {
        let key = primary_key(&node.v);
        if seen.contains(&key) {
            return None;
        }
        if probe_keys(&node.v).iter().any(|k| seen.contains(k)) {
            return None;
        }
        seen.insert(key);
        let b = node.v.bend();
        if let Some(x) = cutoff {
            if node.v.center_norm(spec.n) >= x {
                return None;
            }
        }
        if b < t {
            bends.push(b);
            if collect {
                vectors.push(node.v.to_f64());
            }
            if b.abs() >= 0.5 {
                *max_center_norm = max_center_norm.max(node.v.center_norm(spec.n) / b.abs());
            }
        }
        // Pruning: cut only deep in the overshoot region.
        if b > spec.margin * t && node.parent_bend > t {
            return None;
        }
        Some(node)
    };

    for v in seeds {
        let node = Node {
            v,
            last_gen: None,
            parent_bend: f64::NEG_INFINITY,
        };
        if let Some(nd) = admit(
            node,
            &mut seen,
            &mut bends,
            &mut vectors,
            &mut max_center_norm,
        ) {
            frontier.push(nd);
        }
    }

    let mut complete = false;
    for _depth in 0..max_depth {
        if frontier.is_empty() {
            complete = true;
            break;
        }
        words_explored += frontier.len() as u64;
        let expand = |node: &Node| -> Vec<Node> {
            let skip = node.last_gen.map(|j| spec.inverse_of[j]);
            let pb = node.v.bend();
            (0..gen_count)
                .filter(|j| Some(*j) != skip)
                .map(|j| Node {
                    v: apply_gen(spec, &node.v, j),
                    last_gen: Some(j),
                    parent_bend: pb,
                })
                .collect()
        };
        let candidates: Vec<Node> = match &pool {
            Some(p) => p.install(|| frontier.par_iter().flat_map_iter(expand).collect()),
            None => frontier.iter().flat_map(expand).collect(),
        };
        let mut next = Vec::new();
        for node in candidates {
            if let Some(nd) = admit(
                node,
                &mut seen,
                &mut bends,
                &mut vectors,
                &mut max_center_norm,
            ) {
                next.push(nd);
            }
        }
        frontier = next;
    }
    if frontier.is_empty() {
        complete = true;
    }

    let horizon = if complete {
        t
    } else {
        // Depth or budget exhausted with live branches: certify only the
        // prefix below the smallest live bend, discounted by the margin.
        let min_live = frontier
            .iter()
            .map(|nd| nd.v.bend())
            .fold(f64::INFINITY, f64::min);
        (min_live / spec.margin).clamp(0.0, t)
    };
    let mut order: Vec<usize> = (0..bends.len()).collect();
    order.sort_by(|&a, &b| bends[a].partial_cmp(&bends[b]).unwrap());
    let sorted_bends: Vec<f64> = order.iter().map(|&i| bends[i]).collect();
    let sorted_vectors: Option<Vec<DVector<f64>>> = if collect {
        Some(order.iter().map(|&i| vectors[i].clone()).collect())
    } else {
        None
    };
    let mut pc = PackingCount {
        bends: sorted_bends,
        horizon,
        words_explored,
        complete,
        max_center_norm,
    };
    if !complete {
        pc.bends.retain(|b| *b < pc.horizon);
    }
    Ok((pc, sorted_vectors))
}

// ---------------------------------------------------------------------------
// Independent Descartes-reflection oracle.

/// Quadruple arithmetic for the classical circle packing: the reflection
/// replacing one circle of a tangent quadruple is v_i -> 2(sum of the other
/// three) - v_i, applied to integer inversive vectors directly. No group
/// elements are involved, so this is an independent check of the orbit
/// enumerator.
pub mod descartes {
    use std::collections::{HashSet, VecDeque};

    /// Integer inversive vector (bend, bz_x, bz_y, cobend) for n = 2.
    pub type IVec = [i64; 4];

    /// The bounded quadruple with bends (-1, 2, 2, 3).
    pub fn standard_quadruple() -> [IVec; 4] {
        [[-1, 0, 0, 1], [2, 1, 0, 0], [2, -1, 0, 0], [3, 0, 2, 1]]
    }

    fn reflect(q: &[IVec; 4], i: usize) -> [IVec; 4] {
        let mut out = *q;
        for c in 0..4 {
            let sum: i64 = (0..4).filter(|&j| j != i).map(|j| q[j][c]).sum();
            out[i][c] = 2 * sum - q[i][c];
        }
        out
    }

    fn canonical(q: &[IVec; 4]) -> [IVec; 4] {
        let mut s = *q;
        s.sort();
        s
    }

    /// All bends below `t` in the packing generated from `root`, one entry
    /// per distinct circle, sorted. Complete for the given bound: a circle
    /// with bend < t is born in a quadruple whose other three members have
    /// smaller bends, so expanding every quadruple with at least three bends
    /// below t reaches everything.
    pub fn enumerate_bends(root: &[IVec; 4], t: f64) -> Vec<f64> {
        let mut circles: HashSet<IVec> = HashSet::new();
        let mut quads: HashSet<[IVec; 4]> = HashSet::new();
        let mut queue: VecDeque<[IVec; 4]> = VecDeque::new();
        quads.insert(canonical(root));
        queue.push_back(*root);
        for v in root {
            circles.insert(*v);
        }
        while let Some(q) = queue.pop_front() {
            let below = q.iter().filter(|v| (v[0] as f64) < t).count();
            let is_root = canonical(&q) == canonical(root);
            if below < 3 && !is_root {
                continue;
            }
            for i in 0..4 {
                let nq = reflect(&q, i);
                circles.insert(nq[i]);
                if quads.insert(canonical(&nq)) {
                    queue.push_back(nq);
                }
            }
        }
        let mut bends: Vec<f64> = circles
            .iter()
            .map(|v| v[0] as f64)
            .filter(|b| *b < t)
            .collect();
        bends.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bends
    }
}

// ---------------------------------------------------------------------------
// The one-dimensional row count.

/// Count distinct bottom rows (c, d) of the orbit of (0, 1) under right
/// multiplication by the given unimodular 2x2 generators (closed under
/// inverse), with c^2 + d^2 < t, over reduced words of length at most
/// `max_depth`.
pub fn sl2_row_count(
    generators: &[Matrix2<f64>],
    t: f64,
    max_depth: usize,
) -> Result<usize, OrbitError> {
    for (i, g) in generators.iter().enumerate() {
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        if (det - 1.0).abs() > 1e-9 {
            return Err(OrbitError::BadDeterminant { index: i, det });
        }
    }
    let mut gens: Vec<Matrix2<f64>> = generators.to_vec();
    let mut inverse_of = Vec::new();
    for g in generators {
        let gi = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]);
        if let Some(pos) = gens.iter().position(|m| (m - gi).amax() < 1e-12) {
            inverse_of.push(pos);
        } else {
            gens.push(gi);
            inverse_of.push(gens.len() - 1);
        }
    }
    for j in generators.len()..gens.len() {
        let g = &gens[j];
        let gi = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]);
        let pos = gens
            .iter()
            .position(|m| (m - gi).amax() < 1e-12)
            .expect("closed");
        inverse_of.push(pos);
    }

    let key = |r: &RowVector2<f64>| -> (i64, i64) {
        ((r[0] / 1e-9).round() as i64, (r[1] / 1e-9).round() as i64)
    };
    let start = RowVector2::new(0.0, 1.0);
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    seen.insert(key(&start));
    let mut count = usize::from(start.norm_squared() < t);
    let mut frontier: Vec<(RowVector2<f64>, Option<usize>)> = vec![(start, None)];
    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for (row, last) in &frontier {
            let skip = last.map(|j| inverse_of[j]);
            for (j, g) in gens.iter().enumerate() {
                if Some(j) == skip {
                    continue;
                }
                let nr = row * g;
                if seen.insert(key(&nr)) {
                    if nr.norm_squared() < t {
                        count += 1;
                    }
                    next.push((nr, Some(j)));
                }
            }
        }
        frontier = next;
    }
    Ok(count)
}
