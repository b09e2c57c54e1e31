//! Consistent Laplace and Neumann stencils on relative offsets.
//!
//! Exactness for constant, linear and quadratic functions yields
//! `k = d(d+3)/2` equality constraints `V s = b` on the neighbor
//! coefficients. The weighted least-squares construction solves
//! `min sum s_i^2 / w_i` over the constraint set; the minimal-positive-
//! stencil construction solves the linear program
//! `min sum s_i / w_i  s.t.  V s = b, s >= 0`, whose basic solutions carry
//! at most `k` nonzeros. The constant constraint fixes the center
//! coefficient `s_0 = -sum s_i`.
//!
//! Solvers work on offsets normalized by the largest norm, so results are
//! exactly scale covariant and the LP tolerances are scale-free.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{norm, Point};
use crate::simplex::{self, LpError, LpOutcome, StandardLp};

/// Distance-weight exponent used by the experiments, `w(d) = d^-4`.
pub const DEFAULT_ALPHA: f64 = 4.0;

/// Consistency residuals above `TOL_CONSIST * (1 + |b|_inf)` are rejected.
pub const TOL_CONSIST: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum StencilError {
    #[error("offset list is empty")]
    EmptyOffsets,
    #[error("offset {0} coincides with the center")]
    CoincidentOffset(usize),
    #[error("weight exponent alpha must exceed 2, got {0}")]
    BadAlpha(f64),
    #[error("stencils support dimensions 2 and 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("rank-deficient constraint system: rank {rank} of {constraints} constraints")]
    RankDeficient { constraints: usize, rank: usize },
    #[error("constraint system kind does not match the operation")]
    WrongKind,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Which operator the constraints encode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Laplacian: rows `(x, y, xy, x^2, y^2)` in 2d and
    /// `(x, y, z, xy, xz, yz, x^2, y^2, z^2)` in 3d, rhs `(0,..,0,2,..,2)`.
    Laplace,
    /// Normal derivative along the first local axis: rows are the
    /// coordinates, rhs is `e_1`.
    NeumannNormal,
}

impl ConstraintKind {
    pub fn constraint_count(self, dimension: usize) -> usize {
        match self {
            ConstraintKind::Laplace => dimension * (dimension + 3) / 2,
            ConstraintKind::NeumannNormal => dimension,
        }
    }

    /// Power of length by which coefficients scale: 2 for the Laplacian
    /// (units 1/length^2), 1 for the normal derivative.
    fn length_power(self) -> i32 {
        match self {
            ConstraintKind::Laplace => 2,
            ConstraintKind::NeumannNormal => 1,
        }
    }
}

fn vandermonde_column<const D: usize>(off: &Point<D>, kind: ConstraintKind, col: &mut [f64]) {
    let o = off.as_slice();
    match (kind, D) {
        (ConstraintKind::Laplace, 2) => {
            let (x, y) = (o[0], o[1]);
            col.copy_from_slice(&[x, y, x * y, x * x, y * y]);
        }
        (ConstraintKind::Laplace, 3) => {
            let (x, y, z) = (o[0], o[1], o[2]);
            col.copy_from_slice(&[x, y, z, x * y, x * z, y * z, x * x, y * y, z * z]);
        }
        (ConstraintKind::NeumannNormal, _) => {
            col.copy_from_slice(o);
        }
        _ => unreachable!("dimension validated at construction"),
    }
}

fn rhs_for(kind: ConstraintKind, dimension: usize) -> DVector<f64> {
    let k = kind.constraint_count(dimension);
    let mut b = DVector::zeros(k);
    match kind {
        ConstraintKind::Laplace => {
            for i in 0..dimension {
                b[k - dimension + i] = 2.0;
            }
        }
        ConstraintKind::NeumannNormal => b[0] = 1.0,
    }
    b
}

/// The consistency constraints of one approximation point: Vandermonde
/// matrix of the relative offsets, right-hand side, and distance weights
/// `w_i = |x_i|^-alpha`.
#[derive(Clone, Debug)]
pub struct ConstraintSystem<const D: usize> {
    pub vandermonde: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub offsets: Vec<Point<D>>,
    pub weights: DVector<f64>,
    pub alpha: f64,
    pub kind: ConstraintKind,
}

/// Builds the constraint system. `alpha > 2` is enforced: the weight decay
/// must beat `|d|^-2`, at which the stencil LP degenerates.
pub fn build_constraints<const D: usize>(
    offsets: &[Point<D>],
    alpha: f64,
    kind: ConstraintKind,
) -> Result<ConstraintSystem<D>, StencilError> {
    if D != 2 && D != 3 {
        return Err(StencilError::UnsupportedDimension(D));
    }
    if offsets.is_empty() {
        return Err(StencilError::EmptyOffsets);
    }
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(StencilError::BadAlpha(alpha));
    }
    let norms: Vec<f64> = offsets.iter().map(norm).collect();
    let r_max = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    for (i, &n) in norms.iter().enumerate() {
        if n < 1e-13 * r_max || n == 0.0 {
            return Err(StencilError::CoincidentOffset(i));
        }
    }
    let k = kind.constraint_count(D);
    let mut v = DMatrix::zeros(k, offsets.len());
    let mut col = vec![0.0; k];
    for (j, off) in offsets.iter().enumerate() {
        vandermonde_column(off, kind, &mut col);
        for i in 0..k {
            v[(i, j)] = col[i];
        }
    }
    let weights = DVector::from_iterator(norms.len(), norms.iter().map(|n| n.powf(-alpha)));
    Ok(ConstraintSystem {
        vandermonde: v,
        rhs: rhs_for(kind, D),
        offsets: offsets.to_vec(),
        weights,
        alpha,
        kind,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilMethod {
    Lsq,
    Mps,
}

impl StencilMethod {
    pub fn name(self) -> &'static str {
        match self {
            StencilMethod::Lsq => "lsq",
            StencilMethod::Mps => "mps",
        }
    }
}

/// A stencil over a candidate list: `neighbors` are candidate indices,
/// `coefficients` the matching values, and the center coefficient is
/// `-sum(coefficients)`.
#[derive(Clone, Debug)]
pub struct Stencil {
    pub neighbors: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub center_coefficient: f64,
    pub method: StencilMethod,
    pub positive: bool,
    pub pivots: Option<usize>,
}

/// Farkas certificate proving that no positive stencil exists for a
/// constraint system. Valid against the raw system: `V^T w >= 0` and
/// `b^T w < 0`.
#[derive(Clone, Debug)]
pub struct InfeasibilityReport {
    pub certificate: DVector<f64>,
    pub kind: ConstraintKind,
    pub pivots: usize,
}

impl InfeasibilityReport {
    pub fn is_valid<const D: usize>(&self, cs: &ConstraintSystem<D>, tol: f64) -> bool {
        simplex::farkas_valid(&cs.vandermonde, &cs.rhs, &self.certificate, tol)
    }
}

/// Outcome of a positivity-constrained stencil construction.
#[derive(Clone, Debug)]
pub enum MpsOutcome {
    Stencil(Stencil),
    Infeasible(InfeasibilityReport),
}

/// Offsets scaled by `1/r_max`, the matching Vandermonde matrix, and the
/// row scales relating it to the raw matrix.
struct Scaled {
    vhat: DMatrix<f64>,
    row_scale: DVector<f64>,
    r_max: f64,
}

fn scaled_system<const D: usize>(cs: &ConstraintSystem<D>) -> Scaled {
    let r_max = cs.offsets.iter().map(norm).fold(0.0f64, f64::max);
    let k = cs.kind.constraint_count(D);
    let mut vhat = DMatrix::zeros(k, cs.offsets.len());
    let mut col = vec![0.0; k];
    for (j, off) in cs.offsets.iter().enumerate() {
        let off_hat: Point<D> = std::array::from_fn(|i| off[i] / r_max);
        vandermonde_column(&off_hat, cs.kind, &mut col);
        for i in 0..k {
            vhat[(i, j)] = col[i];
        }
    }
    // vhat = diag(row_scale) * V
    let mut row_scale = DVector::zeros(k);
    match cs.kind {
        ConstraintKind::Laplace => {
            for i in 0..k {
                let linear = i < D;
                row_scale[i] = if linear { 1.0 / r_max } else { 1.0 / (r_max * r_max) };
            }
        }
        ConstraintKind::NeumannNormal => {
            for i in 0..k {
                row_scale[i] = 1.0 / r_max;
            }
        }
    }
    Scaled {
        vhat,
        row_scale,
        r_max,
    }
}

/// Weighted least-squares stencil, the solution of
/// `min sum s_i^2 / w_i  s.t.  V s = b` (equivalently
/// `s = W V^T (V W V^T)^-1 b` when `V` has full row rank).
///
/// Computed through the SVD of the weight-scaled Vandermonde matrix, which
/// stays accurate where the explicit normal matrix loses digits, and which
/// solves consistent rank-deficient systems (such as the regular 5-point
/// cross, whose `xy` row vanishes). Configurations that cannot satisfy the
/// constraints surface as [`StencilError::RankDeficient`].
pub fn lsq_stencil<const D: usize>(cs: &ConstraintSystem<D>) -> Result<Stencil, StencilError> {
    let scaled = scaled_system(cs);
    let k = cs.rhs.len();
    let m = cs.offsets.len();
    let w_max = cs.weights.amax();
    let w_sqrt = DVector::from_iterator(m, cs.weights.iter().map(|w| (w / w_max).sqrt()));
    // B = Vhat W^(1/2); the minimum-norm least-squares solution q of
    // B q = b gives s = W^(1/2) q, the minimizer of sum s_i^2 / w_i.
    let mut b_mat = DMatrix::zeros(k, m);
    for j in 0..m {
        for i in 0..k {
            b_mat[(i, j)] = scaled.vhat[(i, j)] * w_sqrt[j];
        }
    }
    let svd = b_mat.svd(true, true);
    let sigma_max: f64 = svd.singular_values.amax();
    let cutoff = 1e-12 * sigma_max.max(1e-300);
    let rank = svd.singular_values.iter().filter(|s| **s > cutoff).count();
    let q = svd
        .solve(&cs.rhs, cutoff)
        .map_err(|_| StencilError::RankDeficient {
            constraints: k,
            rank,
        })?;
    let power = cs.kind.length_power();
    let unscale = scaled.r_max.powi(power);
    let coefficients: Vec<f64> = (0..m).map(|j| w_sqrt[j] * q[j] / unscale).collect();

    let mut s_full = DVector::zeros(m);
    for (j, c) in coefficients.iter().enumerate() {
        s_full[j] = *c;
    }
    let residual = (&cs.vandermonde * &s_full - &cs.rhs).amax();
    if residual > TOL_CONSIST * (1.0 + cs.rhs.amax()) {
        return Err(StencilError::RankDeficient {
            constraints: k,
            rank,
        });
    }

    let scale = coefficients.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let positive = coefficients.iter().all(|c| *c >= -1e-12 * scale);
    let center = -coefficients.iter().sum::<f64>();
    Ok(Stencil {
        neighbors: (0..m).collect(),
        coefficients,
        center_coefficient: center,
        method: StencilMethod::Lsq,
        positive,
        pivots: None,
    })
}

/// Minimal positive stencil via the LP `min sum s_i / w_i, V s = b, s >= 0`.
/// Returns the basic optimal stencil (at most `k` nonzeros) or a Farkas
/// certificate stating that the offsets admit no positive stencil.
pub fn mps_stencil<const D: usize>(cs: &ConstraintSystem<D>) -> Result<MpsOutcome, StencilError> {
    let scaled = scaled_system(cs);
    let m = cs.offsets.len();
    // Cost in scaled coordinates: 1/w = |x/r_max|^alpha, an O(1) quantity.
    let cost = DVector::from_iterator(
        m,
        cs.offsets
            .iter()
            .map(|off| (norm(off) / scaled.r_max).powf(cs.alpha)),
    );
    let lp = StandardLp::new(cost, scaled.vhat.clone(), cs.rhs.clone())?;
    match simplex::solve(&lp)? {
        LpOutcome::Optimal {
            solution,
            basis,
            pivots,
            ..
        } => {
            let power = cs.kind.length_power();
            let unscale = scaled.r_max.powi(power);
            let coefficients: Vec<f64> = basis.iter().map(|&j| solution[j] / unscale).collect();
            let center = -coefficients.iter().sum::<f64>();
            Ok(MpsOutcome::Stencil(Stencil {
                neighbors: basis,
                coefficients,
                center_coefficient: center,
                method: StencilMethod::Mps,
                positive: true,
                pivots: Some(pivots),
            }))
        }
        LpOutcome::Infeasible {
            certificate,
            pivots,
        } => {
            // Map the certificate of the scaled system back to the raw one.
            let raw = DVector::from_iterator(
                cs.rhs.len(),
                certificate
                    .iter()
                    .zip(scaled.row_scale.iter())
                    .map(|(w, r)| w * r),
            );
            Ok(MpsOutcome::Infeasible(InfeasibilityReport {
                certificate: raw,
                kind: cs.kind,
                pivots,
            }))
        }
        LpOutcome::Unbounded { .. } => {
            // Impossible: costs are positive and the feasible set has
            // nonnegative variables.
            Err(StencilError::Lp(LpError::SingularBasis))
        }
    }
}

/// Stencil for the inward normal derivative at a Neumann boundary point.
///
/// The constraint system must be built from offsets expressed in a local
/// frame whose first axis is the inward normal (see [`neumann_frame`]); the
/// assembler flips the sign for the outward convention. First-order
/// accurate only: adding quadratic exactness admits no positive stencil.
pub fn neumann_stencil<const D: usize>(
    cs: &ConstraintSystem<D>,
    method: StencilMethod,
) -> Result<MpsOutcome, StencilError> {
    if cs.kind != ConstraintKind::NeumannNormal {
        return Err(StencilError::WrongKind);
    }
    match method {
        StencilMethod::Mps => mps_stencil(cs),
        StencilMethod::Lsq => lsq_stencil(cs).map(MpsOutcome::Stencil),
    }
}

/// Orthonormal local frame rows for a Neumann point: first row is the
/// inward normal `-n`, completed by tangents seeded from the smallest
/// normal component axis. Deterministic in the input.
pub fn neumann_frame<const D: usize>(outward_normal: &Point<D>) -> [Point<D>; D] {
    let n = norm(outward_normal).max(1e-300);
    let inward: Point<D> = std::array::from_fn(|i| -outward_normal[i] / n);
    let mut frame = [[0.0; D]; D];
    frame[0] = inward;
    if D == 2 {
        let mut t = [0.0; D];
        t[0] = -inward[1];
        t[1] = inward[0];
        frame[1] = t;
        return frame;
    }
    // Seed axis with the smallest inward component, Gram-Schmidt, cross.
    let mut axis = 0;
    for a in 1..D {
        if inward[a].abs() < inward[axis].abs() {
            axis = a;
        }
    }
    let mut t1 = [0.0; D];
    t1[axis] = 1.0;
    let proj = inward[axis];
    for i in 0..D {
        t1[i] -= proj * inward[i];
    }
    let t1n = norm(&t1).max(1e-300);
    for v in t1.iter_mut() {
        *v /= t1n;
    }
    frame[1] = t1;
    let (u, t) = (inward.as_slice(), t1.as_slice());
    let t2 = [
        u[1] * t[2] - u[2] * t[1],
        u[2] * t[0] - u[0] * t[2],
        u[0] * t[1] - u[1] * t[0],
    ];
    for i in 0..D {
        frame[D - 1][i] = t2[i];
    }
    frame
}

/// Recomputes all constraint sums, including the constant constraint
/// `s_0 + sum s_i = 0`, and returns the largest absolute residual.
pub fn verify_consistency<const D: usize>(
    stencil: &Stencil,
    offsets: &[Point<D>],
    kind: ConstraintKind,
) -> f64 {
    let k = kind.constraint_count(D);
    let b = rhs_for(kind, D);
    let mut sums = vec![0.0; k];
    let mut col = vec![0.0; k];
    for (idx, coeff) in stencil.neighbors.iter().zip(&stencil.coefficients) {
        vandermonde_column(&offsets[*idx], kind, &mut col);
        for i in 0..k {
            sums[i] += coeff * col[i];
        }
    }
    let mut residual = (stencil.center_coefficient
        + stencil.coefficients.iter().sum::<f64>())
    .abs();
    for i in 0..k {
        residual = residual.max((sums[i] - b[i]).abs());
    }
    residual
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::half_space_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_circle_config() -> Vec<Point<2>> {
        [0.0, 1.0, 2.0, 3.0, 0.1, 0.2]
            .iter()
            .map(|p| {
                let th = p * std::f64::consts::FRAC_PI_2;
                [th.cos(), th.sin()]
            })
            .collect()
    }

    #[test]
    fn vandermonde_columns() {
        let cs = build_constraints(&[[1.0, 0.0], [1.0, 1.0]], 4.0, ConstraintKind::Laplace)
            .unwrap();
        let c0: Vec<f64> = cs.vandermonde.column(0).iter().copied().collect();
        let c1: Vec<f64> = cs.vandermonde.column(1).iter().copied().collect();
        assert_eq!(c0, vec![1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(c1, vec![1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            cs.rhs.as_slice(),
            &[0.0, 0.0, 0.0, 2.0, 2.0],
            "2d Laplace rhs"
        );
    }

    #[test]
    fn alpha_floor_enforced() {
        let offs = [[1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            build_constraints(&offs, 2.0, ConstraintKind::Laplace),
            Err(StencilError::BadAlpha(_))
        ));
        assert!(build_constraints(&offs, 2.0001, ConstraintKind::Laplace).is_ok());
    }

    #[test]
    fn coincident_offset_rejected() {
        let offs = [[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            build_constraints(&offs, 4.0, ConstraintKind::Laplace),
            Err(StencilError::CoincidentOffset(1))
        ));
    }

    #[test]
    fn lsq_reproduces_unit_circle_example() {
        let offs = unit_circle_config();
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let st = lsq_stencil(&cs).unwrap();
        let expected = [0.846, 1.005, 0.998, 1.003, 0.312, -0.164];
        for (c, e) in st.coefficients.iter().zip(expected) {
            assert!((c - e).abs() < 1e-3, "coefficient {c} vs {e}");
        }
        assert!(!st.positive, "the least-squares stencil has a negative entry");
        assert!(verify_consistency(&st, &offs, ConstraintKind::Laplace) <= 1e-10);
    }

    #[test]
    fn lsq_exact_on_five_point_cross() {
        // Four offsets, five constraints: the xy row vanishes, yet the
        // system is consistent and the unique solution is 1/h^2 each.
        for (h, alpha) in [(0.1, 3.0), (0.02, 4.5), (1.0, 4.0)] {
            let offs = [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]];
            let cs = build_constraints(&offs, alpha, ConstraintKind::Laplace).unwrap();
            let st = lsq_stencil(&cs).unwrap();
            for c in &st.coefficients {
                assert!((c - 1.0 / (h * h)).abs() <= 1e-9 / (h * h));
            }
            assert!(st.positive);
        }
    }

    #[test]
    fn lsq_honors_supplied_weights() {
        let offs = [[1.0, 0.0], [0.0, 1.2], [-0.7, 0.3], [0.2, -0.9], [-0.4, -0.5]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let st = lsq_stencil(&cs).unwrap();
        let mut scaled = cs.clone();
        scaled.weights *= 377.5;
        let st2 = lsq_stencil(&scaled).unwrap();
        for (a, b) in st.coefficients.iter().zip(&st2.coefficients) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn lsq_reports_rank_deficiency() {
        // Collinear offsets cannot satisfy the quadratic constraints.
        let offs = [[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        match lsq_stencil(&cs) {
            Err(StencilError::RankDeficient { constraints, rank }) => {
                assert_eq!(constraints, 5);
                assert!(rank < 5);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn mps_selects_five_point_stencil() {
        for (h, alpha) in [(0.1, 4.0), (0.25, 3.0), (1.0, 2.5)] {
            let offs = [
                [h, 0.0],
                [-h, 0.0],
                [0.0, h],
                [0.0, -h],
                [h, h],
                [-h, h],
                [-h, -h],
                [h, -h],
            ];
            let cs = build_constraints(&offs, alpha, ConstraintKind::Laplace).unwrap();
            let MpsOutcome::Stencil(st) = mps_stencil(&cs).unwrap() else {
                panic!("regular grid candidates must be feasible");
            };
            let mut dense = [0.0; 8];
            for (i, c) in st.neighbors.iter().zip(&st.coefficients) {
                dense[*i] = *c;
            }
            for (j, v) in dense.iter().enumerate() {
                let expected = if j < 4 { 1.0 / (h * h) } else { 0.0 };
                assert!(
                    (v - expected).abs() <= 1e-10 * (1.0 + expected),
                    "h={h} alpha={alpha}: coefficient {j} is {v}, expected {expected}"
                );
            }
            assert!((st.center_coefficient + 4.0 / (h * h)).abs() <= 1e-9 / (h * h));
            assert!(st.pivots.unwrap() <= 200);
            assert!(verify_consistency(&st, &offs, ConstraintKind::Laplace) <= 1e-9 / (h * h));
        }
    }

    #[test]
    fn mps_on_unit_circle_is_positive_with_objective_four() {
        let offs = unit_circle_config();
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let MpsOutcome::Stencil(st) = mps_stencil(&cs).unwrap() else {
            panic!("configuration admits a positive stencil");
        };
        assert!(st.positive);
        assert!(st.coefficients.iter().filter(|c| **c > 1e-12).count() <= 5);
        // All offsets are unit, so the trace constraint pins the objective.
        let total: f64 = st.coefficients.iter().sum();
        assert!((total - 4.0).abs() <= 1e-9);
        assert!((st.center_coefficient + 4.0).abs() <= 1e-9);
    }

    #[test]
    fn mps_half_space_configuration_yields_certificate() {
        // All candidates in the right half plane.
        let offs = [[1.0, 0.0], [0.8, 0.5], [0.9, -0.4], [0.5, 0.9], [0.7, -0.7]];
        assert!(!half_space_check(&offs).unwrap());
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let MpsOutcome::Infeasible(report) = mps_stencil(&cs).unwrap() else {
            panic!("half-space configuration cannot be feasible");
        };
        assert!(report.is_valid(&cs, 1e-10));
    }

    #[test]
    fn mps_dichotomy_on_random_configurations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut feasible = 0;
        let mut infeasible = 0;
        for _ in 0..60 {
            let m = rng.gen_range(5..=12);
            let half_space_only: bool = rng.gen_bool(0.4);
            let offs: Vec<Point<2>> = (0..m)
                .map(|_| {
                    let th = if half_space_only {
                        rng.gen_range(-1.2..1.2)
                    } else {
                        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
                    };
                    let r = rng.gen_range(0.2..1.0);
                    [r * th.cos(), r * th.sin()]
                })
                .collect();
            let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
            match mps_stencil(&cs).unwrap() {
                MpsOutcome::Stencil(st) => {
                    feasible += 1;
                    assert!(st.coefficients.iter().all(|c| *c >= 0.0));
                    assert!(st.coefficients.iter().filter(|c| **c > 0.0).count() <= 5);
                    assert!(verify_consistency(&st, &offs, ConstraintKind::Laplace) <= 1e-8);
                    assert!(half_space_check(&offs).unwrap(), "necessary criterion");
                }
                MpsOutcome::Infeasible(report) => {
                    infeasible += 1;
                    assert!(report.is_valid(&cs, 1e-10));
                }
            }
        }
        assert!(feasible > 5 && infeasible > 5, "{feasible} / {infeasible}");
    }

    #[test]
    fn scale_covariance() {
        let offs = [[0.9, 0.1], [-0.3, 0.8], [-0.7, -0.2], [0.2, -0.6], [0.5, 0.5]];
        let t = 3.7;
        let scaled_offs: Vec<Point<2>> = offs.iter().map(|o| [o[0] * t, o[1] * t]).collect();
        let cs1 = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let cs2 = build_constraints(&scaled_offs, 4.0, ConstraintKind::Laplace).unwrap();
        for (a, b) in [
            (lsq_stencil(&cs1).unwrap(), lsq_stencil(&cs2).unwrap()),
        ] {
            for (c1, c2) in a.coefficients.iter().zip(&b.coefficients) {
                assert!((c1 / (t * t) - c2).abs() <= 1e-12 * c1.abs().max(1.0));
            }
        }
        let MpsOutcome::Stencil(m1) = mps_stencil(&cs1).unwrap() else {
            panic!()
        };
        let MpsOutcome::Stencil(m2) = mps_stencil(&cs2).unwrap() else {
            panic!()
        };
        assert_eq!(m1.neighbors, m2.neighbors, "same selected neighbors");
        for (c1, c2) in m1.coefficients.iter().zip(&m2.coefficients) {
            assert!((c1 / (t * t) - c2).abs() <= 1e-12 * (1.0 + c1.abs()));
        }
    }

    #[test]
    fn rotation_invariance() {
        let offs = [[0.9, 0.1], [-0.3, 0.8], [-0.7, -0.2], [0.2, -0.6], [0.5, 0.5], [0.1, 0.95]];
        let th: f64 = 0.83;
        let rot: Vec<Point<2>> = offs
            .iter()
            .map(|o| {
                [
                    th.cos() * o[0] - th.sin() * o[1],
                    th.sin() * o[0] + th.cos() * o[1],
                ]
            })
            .collect();
        let cs1 = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let cs2 = build_constraints(&rot, 4.0, ConstraintKind::Laplace).unwrap();
        // LSQ: identical coefficient values.
        let l1 = lsq_stencil(&cs1).unwrap();
        let l2 = lsq_stencil(&cs2).unwrap();
        for (a, b) in l1.coefficients.iter().zip(&l2.coefficients) {
            assert!((a - b).abs() <= 1e-9);
        }
        // MPS: the objective value is rotation invariant.
        let objective = |st: &Stencil, offs: &[Point<2>]| -> f64 {
            st.neighbors
                .iter()
                .zip(&st.coefficients)
                .map(|(i, c)| c * norm(&offs[*i]).powf(4.0))
                .sum()
        };
        let MpsOutcome::Stencil(m1) = mps_stencil(&cs1).unwrap() else {
            panic!()
        };
        let MpsOutcome::Stencil(m2) = mps_stencil(&cs2).unwrap() else {
            panic!()
        };
        assert!((objective(&m1, &offs) - objective(&m2, &rot)).abs() <= 1e-9);
    }

    #[test]
    fn neumann_examples() {
        let h = 0.1;
        // One-sided difference is feasible and optimal.
        let offs = [[h, 0.0], [h, h], [h, -h]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::NeumannNormal).unwrap();
        let MpsOutcome::Stencil(st) = neumann_stencil(&cs, StencilMethod::Mps).unwrap() else {
            panic!("one-sided difference must be feasible");
        };
        let mut dense = [0.0; 3];
        for (i, c) in st.neighbors.iter().zip(&st.coefficients) {
            dense[*i] = *c;
        }
        assert!((dense[0] - 1.0 / h).abs() <= 1e-9 / h);
        assert!(dense[1].abs() <= 1e-12 / h && dense[2].abs() <= 1e-12 / h);

        // Tangential projections on one side: infeasible with certificate.
        let offs = [[h, h], [h, 2.0 * h]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::NeumannNormal).unwrap();
        let MpsOutcome::Infeasible(report) = neumann_stencil(&cs, StencilMethod::Mps).unwrap()
        else {
            panic!("same-side projections cannot be feasible");
        };
        assert!(report.is_valid(&cs, 1e-10));

        // Straddling projections: the symmetric pair solves exactly.
        let offs = [[h, h], [h, -h]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::NeumannNormal).unwrap();
        let MpsOutcome::Stencil(st) = neumann_stencil(&cs, StencilMethod::Mps).unwrap() else {
            panic!("straddling projections must be feasible");
        };
        let mut dense = [0.0; 2];
        for (i, c) in st.neighbors.iter().zip(&st.coefficients) {
            dense[*i] = *c;
        }
        assert!((dense[0] - 0.5 / h).abs() <= 1e-9 / h);
        assert!((dense[1] - 0.5 / h).abs() <= 1e-9 / h);
    }

    #[test]
    fn neumann_frame_is_orthonormal() {
        let frames2 = [[0.0f64, -1.0], [0.6, 0.8]];
        for n in frames2 {
            let f = neumann_frame(&n);
            assert!((norm(&f[0]) - 1.0).abs() < 1e-12);
            assert!((norm(&f[1]) - 1.0).abs() < 1e-12);
            assert!(crate::geometry::dot(&f[0], &f[1]).abs() < 1e-12);
            assert!((f[0][0] + n[0]).abs() < 1e-12 && (f[0][1] + n[1]).abs() < 1e-12);
        }
        let n3 = [0.0f64, 0.0, -1.0];
        let f = neumann_frame(&n3);
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((crate::geometry::dot(&f[i], &f[j]) - expected).abs() < 1e-12);
            }
        }
        assert_eq!(f[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn consistency_detects_perturbation() {
        let h = 0.5;
        let offs = [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]];
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        let st = lsq_stencil(&cs).unwrap();
        assert!(verify_consistency(&st, &offs, ConstraintKind::Laplace) <= 1e-12 / (h * h));
        let mut bad = st.clone();
        let eps = 1e-3;
        bad.coefficients[0] += eps;
        let residual = verify_consistency(&bad, &offs, ConstraintKind::Laplace);
        assert!(residual >= eps * h.min(h * h) * 0.99);
    }

    #[test]
    fn three_dimensional_rows_and_seven_point() {
        let h = 0.2;
        let mut offs: Vec<Point<3>> = Vec::new();
        for a in 0..3 {
            for s in [-1.0, 1.0] {
                let mut o = [0.0; 3];
                o[a] = s * h;
                offs.push(o);
            }
        }
        // face diagonals
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut o = [0.0; 3];
                o[a] = sa * h;
                o[b] = sb * h;
                offs.push(o);
            }
        }
        // space diagonals
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    offs.push([sx * h, sy * h, sz * h]);
                }
            }
        }
        let cs = build_constraints(&offs, 4.0, ConstraintKind::Laplace).unwrap();
        assert_eq!(cs.vandermonde.nrows(), 9);
        let col0: Vec<f64> = cs.vandermonde.column(0).iter().copied().collect();
        // offset (-h, 0, 0): rows (x,y,z,xy,xz,yz,x2,y2,z2)
        assert_eq!(
            col0,
            vec![-h, 0.0, 0.0, 0.0, 0.0, 0.0, h * h, 0.0, 0.0]
        );
        let MpsOutcome::Stencil(st) = mps_stencil(&cs).unwrap() else {
            panic!("grid candidates must be feasible");
        };
        let mut dense = vec![0.0; offs.len()];
        for (i, c) in st.neighbors.iter().zip(&st.coefficients) {
            dense[*i] = *c;
        }
        for (j, v) in dense.iter().enumerate() {
            let expected = if j < 6 { 1.0 / (h * h) } else { 0.0 };
            assert!(
                (v - expected).abs() <= 1e-10 * (1.0 + expected),
                "coefficient {j}: {v} vs {expected}"
            );
        }
    }
}
