//! Implicit domain descriptions and geometric existence criteria for
//! positive stencils.
//!
//! The computational domain is an axis-aligned box with an optional open
//! ball cut out, described by a level set `phi` with `phi < 0` strictly
//! inside, `phi = 0` on the boundary and `phi > 0` outside. The ball must
//! intersect the box boundary (or lie fully outside); a ball strictly
//! inside the box would create an interior boundary, for which the
//! connectivity guarantees of minimal positive stencils do not hold.

use thiserror::Error;

/// A point or offset vector in `D` dimensions.
pub type Point<const D: usize> = [f64; D];

/// Interior samples used by [`DomainSpec::visible_from`] by default.
pub const DEFAULT_VISIBILITY_SAMPLES: usize = 16;

/// Level-set slack above which a segment sample counts as outside.
pub const VISIBILITY_TOL: f64 = 1e-9;

/// Default safety factor applied on top of the candidate-radius bound.
pub const DEFAULT_RADIUS_SAFETY: f64 = 1.05;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("box bounds must satisfy lo < hi on every axis")]
    InvalidBox,
    #[error("ball radius must be positive and finite")]
    InvalidBall,
    #[error("ball lies strictly inside the box; interior boundaries are not supported")]
    InteriorBall,
    #[error("ball covers the whole box; the domain is empty")]
    EmptyDomain,
    #[error("offset list is empty")]
    EmptyOffsets,
    #[error("operation supports dimensions 2 and 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("mesh size must be positive, got {0}")]
    NonPositiveMeshSize(f64),
    #[error("safety factor must be positive, got {0}")]
    NonPositiveSafety(f64),
}

#[inline]
pub fn sub<const D: usize>(a: &Point<D>, b: &Point<D>) -> Point<D> {
    std::array::from_fn(|i| a[i] - b[i])
}

#[inline]
pub fn dot<const D: usize>(a: &Point<D>, b: &Point<D>) -> f64 {
    (0..D).map(|i| a[i] * b[i]).sum()
}

#[inline]
pub fn norm<const D: usize>(a: &Point<D>) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist<const D: usize>(a: &Point<D>, b: &Point<D>) -> f64 {
    norm(&sub(a, b))
}

/// An open ball, used as the cut-out part of the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball<const D: usize> {
    pub center: Point<D>,
    pub radius: f64,
}

/// Axis-aligned box minus an optional open ball, described implicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec<const D: usize> {
    lo: Point<D>,
    hi: Point<D>,
    ball: Option<Ball<D>>,
}

impl<const D: usize> DomainSpec<D> {
    /// Plain box domain without a cut.
    pub fn box_only(lo: Point<D>, hi: Point<D>) -> Result<Self, GeometryError> {
        Self::new(lo, hi, None)
    }

    /// Box minus an open ball. The ball must reach the box boundary or lie
    /// fully outside the box.
    pub fn box_minus_ball(
        lo: Point<D>,
        hi: Point<D>,
        center: Point<D>,
        radius: f64,
    ) -> Result<Self, GeometryError> {
        Self::new(lo, hi, Some(Ball { center, radius }))
    }

    /// The unit box with a ball of radius 0.44 cut out at
    /// `(0.5, ..., 0.5, 1.1)`, the standard test domain of this crate.
    pub fn standard() -> Self {
        let lo = [0.0; D];
        let hi = [1.0; D];
        let mut center = [0.5; D];
        center[D - 1] = 1.1;
        Self::box_minus_ball(lo, hi, center, 0.44).expect("standard domain is valid")
    }

    fn new(lo: Point<D>, hi: Point<D>, ball: Option<Ball<D>>) -> Result<Self, GeometryError> {
        for i in 0..D {
            if !(lo[i].is_finite() && hi[i].is_finite() && lo[i] < hi[i]) {
                return Err(GeometryError::InvalidBox);
            }
        }
        if let Some(b) = &ball {
            if !(b.radius.is_finite() && b.radius > 0.0) || b.center.iter().any(|c| !c.is_finite())
            {
                return Err(GeometryError::InvalidBall);
            }
            let spec = DomainSpec {
                lo,
                hi,
                ball: None,
            };
            // Strictly interior ball: every ball point has phi_box < 0.
            if spec.phi_box(&b.center) + b.radius < 0.0 {
                return Err(GeometryError::InteriorBall);
            }
            // Ball swallowing the box: every corner inside the ball.
            let mut all_corners_inside = true;
            for mask in 0..(1usize << D) {
                let corner: Point<D> =
                    std::array::from_fn(|i| if mask >> i & 1 == 0 { lo[i] } else { hi[i] });
                if dist(&corner, &b.center) >= b.radius {
                    all_corners_inside = false;
                    break;
                }
            }
            if all_corners_inside {
                return Err(GeometryError::EmptyDomain);
            }
        }
        Ok(DomainSpec { lo, hi, ball })
    }

    pub fn lo(&self) -> &Point<D> {
        &self.lo
    }

    pub fn hi(&self) -> &Point<D> {
        &self.hi
    }

    pub fn ball(&self) -> Option<&Ball<D>> {
        self.ball.as_ref()
    }

    fn phi_box(&self, x: &Point<D>) -> f64 {
        let mut v = f64::NEG_INFINITY;
        for i in 0..D {
            let c = 0.5 * (self.lo[i] + self.hi[i]);
            let half = 0.5 * (self.hi[i] - self.lo[i]);
            v = v.max((x[i] - c).abs() - half);
        }
        v
    }

    /// Level set of the domain: negative strictly inside, zero on the
    /// boundary, positive outside. 1-Lipschitz by construction.
    pub fn phi(&self, x: &Point<D>) -> f64 {
        let pb = self.phi_box(x);
        match &self.ball {
            Some(b) => pb.max(-(dist(x, &b.center) - b.radius)),
            None => pb,
        }
    }

    /// Whether `x` lies in the closure of the domain (up to `tol`).
    pub fn contains(&self, x: &Point<D>, tol: f64) -> bool {
        self.phi(x) <= tol
    }

    /// Segment visibility test used for crack treatment: `x` belongs to the
    /// star-shaped core around `x0` iff no interior sample of the segment
    /// `[x0, x]` leaves the domain. `samples` equidistant interior points
    /// are checked against [`VISIBILITY_TOL`].
    pub fn visible_from(&self, x0: &Point<D>, x: &Point<D>, samples: usize) -> bool {
        let step = sub(x, x0);
        for i in 1..=samples {
            let t = i as f64 / (samples + 1) as f64;
            let y: Point<D> = std::array::from_fn(|k| x0[k] + t * step[k]);
            if self.phi(&y) > VISIBILITY_TOL {
                return false;
            }
        }
        true
    }

    /// Outward unit normal of the boundary feature nearest to `x`, if `x`
    /// is within `tol` of the boundary.
    pub fn outward_normal(&self, x: &Point<D>, tol: f64) -> Option<Point<D>> {
        if self.phi(x).abs() > tol {
            return None;
        }
        if let Some(b) = &self.ball {
            let d = dist(x, &b.center);
            if (d - b.radius).abs() <= tol && d > 0.0 {
                // Across the sphere lies the cut ball, outside the domain.
                return Some(std::array::from_fn(|i| (b.center[i] - x[i]) / d));
            }
        }
        let mut best_axis = 0;
        let mut best = f64::NEG_INFINITY;
        for i in 0..D {
            let c = 0.5 * (self.lo[i] + self.hi[i]);
            let half = 0.5 * (self.hi[i] - self.lo[i]);
            let v = (x[i] - c).abs() - half;
            if v > best {
                best = v;
                best_axis = i;
            }
        }
        let c = 0.5 * (self.lo[best_axis] + self.hi[best_axis]);
        let mut n = [0.0; D];
        n[best_axis] = if x[best_axis] >= c { 1.0 } else { -1.0 };
        Some(n)
    }
}

/// Parameters of the sufficient cone criterion.
///
/// In 2d the cone has total opening angle 45 degrees (`beta = sqrt(2) - 1`);
/// in 3d the total opening angle is about 33.7 degrees
/// (`beta = sqrt((3 - sqrt(6)) / 6)`). `gamma = 2 atan(beta)` is the total
/// opening angle in radians.
#[derive(Clone, Debug)]
pub struct ConeCriterionParams {
    pub dimension: usize,
    pub gamma: f64,
    pub beta: f64,
    /// Number of sampled cone directions in the 3d check.
    pub direction_samples: usize,
}

impl ConeCriterionParams {
    pub fn for_dimension(dimension: usize) -> Result<Self, GeometryError> {
        let beta = match dimension {
            2 => 2.0_f64.sqrt() - 1.0,
            3 => ((3.0 - 6.0_f64.sqrt()) / 6.0).sqrt(),
            d => return Err(GeometryError::UnsupportedDimension(d)),
        };
        Ok(ConeCriterionParams {
            dimension,
            gamma: 2.0 * beta.atan(),
            beta,
            direction_samples: 256,
        })
    }

    pub fn with_direction_samples(mut self, samples: usize) -> Self {
        self.direction_samples = samples.max(1);
        self
    }
}

/// Candidate-point radius that guarantees the cone criterion on a cloud of
/// mesh size `h`: `r = safety * (h/2) / sin(gamma/2)`. With `safety = 1`
/// the ratio `r / (h/2)` is `sqrt(4 + 2 sqrt(2)) = 2.61` in 2d and
/// `sqrt(7 + 2 sqrt(6)) = 3.45` in 3d.
pub fn candidate_radius(
    h: f64,
    params: &ConeCriterionParams,
    safety: f64,
) -> Result<f64, GeometryError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(GeometryError::NonPositiveMeshSize(h));
    }
    if !(safety.is_finite() && safety > 0.0) {
        return Err(GeometryError::NonPositiveSafety(safety));
    }
    Ok(safety * 0.5 * h / (0.5 * params.gamma).sin())
}

const DIRECTION_TOL: f64 = 1e-12;

/// Necessary criterion for a positive Laplace stencil: the offsets must not
/// lie in one and the same closed half space through the origin.
///
/// Returns `true` iff no direction `v` exists with `v . x_i >= 0` for all
/// offsets. Exact in 2d via sorted angular gaps; in 3d via an exact conic
/// test over the candidate extreme directions `x_i x x_j`.
pub fn half_space_check<const D: usize>(offsets: &[Point<D>]) -> Result<bool, GeometryError> {
    if offsets.is_empty() {
        return Err(GeometryError::EmptyOffsets);
    }
    let units: Vec<Point<D>> = offsets
        .iter()
        .filter(|x| norm(x) > 0.0)
        .map(|x| {
            let n = norm(x);
            std::array::from_fn(|i| x[i] / n)
        })
        .collect();
    if units.is_empty() {
        // All offsets coincide with the center: any direction separates.
        return Ok(false);
    }
    match D {
        2 => {
            let mut angles: Vec<f64> = units.iter().map(|x| x[1].atan2(x[0])).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut max_gap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
            for w in angles.windows(2) {
                max_gap = max_gap.max(w[1] - w[0]);
            }
            Ok(max_gap < std::f64::consts::PI - DIRECTION_TOL)
        }
        3 => {
            let units3: Vec<[f64; 3]> = units.iter().map(pad3).collect();
            Ok(!separator_exists_3d(&units3))
        }
        d => Err(GeometryError::UnsupportedDimension(d)),
    }
}

fn pad3<const D: usize>(p: &Point<D>) -> [f64; 3] {
    let s = p.as_slice();
    [s[0], s[1], if D > 2 { s[2] } else { 0.0 }]
}

/// Exact test for the existence of `v != 0` with `v . x_i >= 0` for all
/// unit offsets. If the dual cone is nontrivial it contains an extreme
/// direction of the form `+-(x_i x x_j)`, or the offsets are collinear and
/// any perpendicular direction works.
fn separator_exists_3d(units: &[[f64; 3]]) -> bool {
    let cross = |a: &[f64; 3], b: &[f64; 3]| -> [f64; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let admissible = |v: &[f64; 3]| -> bool {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n < DIRECTION_TOL {
            return false;
        }
        units
            .iter()
            .all(|x| (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]) / n >= -DIRECTION_TOL)
    };
    let mut any_pair = false;
    for i in 0..units.len() {
        for j in (i + 1)..units.len() {
            let c = cross(&units[i], &units[j]);
            let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            if n < DIRECTION_TOL {
                continue;
            }
            any_pair = true;
            if admissible(&c) || admissible(&[-c[0], -c[1], -c[2]]) {
                return true;
            }
        }
    }
    // Collinear offsets (or a single one): any perpendicular direction
    // separates weakly.
    !any_pair
}

/// Sufficient criterion for a positive Laplace stencil ("distributed
/// nicely"): every test cone of total opening angle `gamma` contains an
/// offset.
///
/// In 2d this is exact: the maximum angular gap between consecutive offsets
/// must not exceed `gamma`. In 3d the cone directions are sampled on a
/// Fibonacci sphere and the cone half-angle is shrunk by the sample covering
/// radius, so a `true` answer is a guarantee while `false` is inconclusive.
pub fn cone_criterion_check<const D: usize>(
    offsets: &[Point<D>],
    params: &ConeCriterionParams,
) -> Result<bool, GeometryError> {
    if offsets.is_empty() {
        return Err(GeometryError::EmptyOffsets);
    }
    let units: Vec<Point<D>> = offsets
        .iter()
        .filter(|x| norm(x) > 0.0)
        .map(|x| {
            let n = norm(x);
            std::array::from_fn(|i| x[i] / n)
        })
        .collect();
    if units.is_empty() {
        return Ok(false);
    }
    match D {
        2 => {
            let mut angles: Vec<f64> = units.iter().map(|x| x[1].atan2(x[0])).collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut max_gap = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
            for w in angles.windows(2) {
                max_gap = max_gap.max(w[1] - w[0]);
            }
            Ok(max_gap <= params.gamma + DIRECTION_TOL)
        }
        3 => {
            let units3: Vec<[f64; 3]> = units.iter().map(pad3).collect();
            let n = params.direction_samples;
            // Covering radius bound for the Fibonacci lattice.
            let margin = 2.4 / (n as f64).sqrt();
            let shrunk = 0.5 * params.gamma - margin;
            if shrunk <= 0.0 {
                return Ok(false);
            }
            let cos_shrunk = shrunk.cos();
            let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
            for i in 0..n {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).max(0.0).sqrt();
                let a = golden * i as f64;
                let v = [r * a.cos(), r * a.sin(), z];
                let hit = units3
                    .iter()
                    .any(|x| v[0] * x[0] + v[1] * x[1] + v[2] * x[2] > cos_shrunk);
                if !hit {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        d => Err(GeometryError::UnsupportedDimension(d)),
    }
}
