//! Classified point clouds: generation, quality measurement, neighbor
//! queries and the on-disk text format.
//!
//! Generation places boundary points along the box faces and the cut
//! sphere, then dart-throws interior points with a minimum separation, and
//! finally fills remaining holes from a scan lattice until the estimated
//! mesh size reaches the target. Interior points keep a clearance of
//! `d_b = (4/pi) d_p` from the boundary, which guarantees the cone
//! criterion in the boundary layer.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    self, candidate_radius, cone_criterion_check, ConeCriterionParams, DomainSpec, GeometryError,
    Point, DEFAULT_RADIUS_SAFETY, DEFAULT_VISIBILITY_SAMPLES,
};

/// Classification of a cloud point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Interior,
    Dirichlet,
    Neumann,
}

impl Role {
    fn tag(self) -> &'static str {
        match self {
            Role::Interior => "I",
            Role::Dirichlet => "D",
            Role::Neumann => "N",
        }
    }
}

/// Points classified on-boundary when `|phi| <= TOL_BOUNDARY`.
pub const TOL_BOUNDARY: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("infeasible parameters: delta_min = {delta_min} cannot reach target_h = {target_h} (need delta_min <= {max_delta:.6})")]
    InfeasibleParams {
        delta_min: f64,
        target_h: f64,
        max_delta: f64,
    },
    #[error("parameters must be positive and finite")]
    BadParams,
    #[error("covering failed: measured mesh size {measured} exceeds target {target}")]
    CoveringFailed { measured: f64, target: f64 },
    #[error("cloud is empty")]
    EmptyCloud,
    #[error("lengths of points, roles and normals differ")]
    LengthMismatch,
    #[error("Neumann point {0} lacks a unit normal")]
    BadNormal(usize),
    #[error("sample spacing must be positive")]
    BadSpacing,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cloud file has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Uniform-grid spatial index over the cloud points.
#[derive(Clone, Debug)]
struct UniformGrid<const D: usize> {
    cell: f64,
    bins: HashMap<[i64; D], Vec<usize>>,
}

impl<const D: usize> UniformGrid<D> {
    fn new(cell: f64) -> Self {
        UniformGrid {
            cell: cell.max(1e-300),
            bins: HashMap::new(),
        }
    }

    fn key(&self, x: &Point<D>) -> [i64; D] {
        std::array::from_fn(|i| (x[i] / self.cell).floor() as i64)
    }

    fn insert(&mut self, idx: usize, x: &Point<D>) {
        self.bins.entry(self.key(x)).or_default().push(idx);
    }

    /// Indices of all points in cells overlapping the ball `B(x, r)`,
    /// visited in deterministic cell order.
    fn candidates(&self, x: &Point<D>, r: f64, out: &mut Vec<usize>) {
        out.clear();
        let lo: [i64; D] = std::array::from_fn(|i| ((x[i] - r) / self.cell).floor() as i64);
        let hi: [i64; D] = std::array::from_fn(|i| ((x[i] + r) / self.cell).floor() as i64);
        let mut key = lo;
        loop {
            if let Some(bin) = self.bins.get(&key) {
                out.extend_from_slice(bin);
            }
            // advance the odometer
            let mut axis = 0;
            loop {
                if axis == D {
                    return;
                }
                key[axis] += 1;
                if key[axis] <= hi[axis] {
                    break;
                }
                key[axis] = lo[axis];
                axis += 1;
            }
        }
    }
}

/// Scattered points with per-point classification, Neumann normals and a
/// uniform-grid spatial index. Immutable after construction; all queries
/// are read-only.
#[derive(Clone, Debug)]
pub struct PointCloud<const D: usize> {
    points: Vec<Point<D>>,
    roles: Vec<Role>,
    normals: Vec<Option<Point<D>>>,
    grid: UniformGrid<D>,
    nominal_h: Option<f64>,
}

impl<const D: usize> PointCloud<D> {
    /// Builds a cloud from raw parts, validating normals and lengths.
    pub fn from_parts(
        points: Vec<Point<D>>,
        roles: Vec<Role>,
        normals: Vec<Option<Point<D>>>,
        nominal_h: Option<f64>,
    ) -> Result<Self, CloudError> {
        if points.len() != roles.len() || points.len() != normals.len() {
            return Err(CloudError::LengthMismatch);
        }
        for (i, (role, normal)) in roles.iter().zip(&normals).enumerate() {
            match (role, normal) {
                (Role::Neumann, Some(n)) => {
                    if (geometry::norm(n) - 1.0).abs() > 1e-12 {
                        return Err(CloudError::BadNormal(i));
                    }
                }
                (Role::Neumann, None) => return Err(CloudError::BadNormal(i)),
                (_, Some(_)) => return Err(CloudError::BadNormal(i)),
                (_, None) => {}
            }
        }
        let cell = match nominal_h {
            Some(h) if h > 0.0 => 0.5 * h,
            _ => default_cell(&points),
        };
        let mut grid = UniformGrid::new(cell);
        for (i, p) in points.iter().enumerate() {
            grid.insert(i, p);
        }
        Ok(PointCloud {
            points,
            roles,
            normals,
            grid,
            nominal_h,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Point<D> {
        &self.points[i]
    }

    pub fn points(&self) -> &[Point<D>] {
        &self.points
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn normal(&self, i: usize) -> Option<&Point<D>> {
        self.normals[i].as_ref()
    }

    pub fn normals(&self) -> &[Option<Point<D>>] {
        &self.normals
    }

    /// Mesh size the cloud was generated for, if known.
    pub fn nominal_h(&self) -> Option<f64> {
        self.nominal_h
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.roles[i] == Role::Interior)
    }

    pub fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.roles[i] != Role::Interior)
    }

    /// Distance to and index of the nearest point satisfying `pred`,
    /// excluding `exclude`. Deterministic tie-break by index.
    fn nearest_where(
        &self,
        x: &Point<D>,
        exclude: Option<usize>,
        pred: impl Fn(usize) -> bool,
    ) -> Option<(usize, f64)> {
        let mut r = self.grid.cell;
        let mut buf = Vec::new();
        let extent = 16.0
            * self.grid.cell
            * (self.points.len() as f64).powf(1.0 / D as f64).max(1.0);
        loop {
            self.grid.candidates(x, r, &mut buf);
            let mut best: Option<(usize, f64)> = None;
            for &i in &buf {
                if Some(i) == exclude || !pred(i) {
                    continue;
                }
                let d = geometry::dist(x, &self.points[i]);
                best = match best {
                    Some((bi, bd)) if bd < d || (bd == d && bi < i) => Some((bi, bd)),
                    _ => Some((i, d)),
                };
            }
            if let Some((i, d)) = best {
                if d <= r {
                    return Some((i, d));
                }
            }
            if r > extent {
                return best;
            }
            r *= 2.0;
        }
    }
}

fn default_cell<const D: usize>(points: &[Point<D>]) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for i in 0..D {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let extent = (0..D).map(|i| hi[i] - lo[i]).fold(0.0f64, f64::max);
    if extent <= 0.0 {
        return 1.0;
    }
    let n_axis = (points.len() as f64).powf(1.0 / D as f64);
    (extent / n_axis.max(1.0)).max(1e-3 * extent)
}

/// Whether any existing point lies strictly within `r` of `x`.
fn any_within<const D: usize>(
    grid: &UniformGrid<D>,
    points: &[Point<D>],
    x: &Point<D>,
    r: f64,
    buf: &mut Vec<usize>,
) -> bool {
    grid.candidates(x, r, buf);
    buf.iter().any(|&i| geometry::dist(x, &points[i]) < r)
}

/// Twice the largest sampled in-domain distance to the cloud.
fn estimate_cover<const D: usize>(
    domain: &DomainSpec<D>,
    points: &[Point<D>],
    grid: &UniformGrid<D>,
    spacing: f64,
    start_radius: f64,
) -> f64 {
    let mut max_d: f64 = 0.0;
    let mut buf = Vec::new();
    scan_lattice(domain, spacing, |x| {
        if domain.phi(&x) <= 0.0 {
            let mut r = start_radius;
            loop {
                grid.candidates(&x, r, &mut buf);
                let best = buf
                    .iter()
                    .map(|&i| geometry::dist(&x, &points[i]))
                    .fold(f64::INFINITY, f64::min);
                if best <= r {
                    max_d = max_d.max(best);
                    break;
                }
                r *= 2.0;
                if r > 1e6 {
                    max_d = f64::INFINITY;
                    break;
                }
            }
        }
    });
    2.0 * max_d
}

/// Quality measures of a cloud relative to its domain.
#[derive(Clone, Debug)]
pub struct CloudQualityReport {
    /// Estimated mesh size: twice the largest sampled distance to the cloud.
    pub mesh_size: f64,
    pub min_separation: f64,
    /// Largest nearest-neighbor gap among boundary points.
    pub boundary_spacing: f64,
    /// Smallest interior-point clearance from the boundary.
    pub min_interior_boundary_dist: f64,
    /// Interior points whose candidate neighborhood fails the cone check.
    pub cone_failures: usize,
}

fn scan_lattice<const D: usize>(
    domain: &DomainSpec<D>,
    spacing: f64,
    mut f: impl FnMut(Point<D>),
) {
    let lo = *domain.lo();
    let hi = *domain.hi();
    let n: [usize; D] = std::array::from_fn(|i| ((hi[i] - lo[i]) / spacing).ceil().max(1.0) as usize);
    let mut idx = [0usize; D];
    loop {
        let x: Point<D> =
            std::array::from_fn(|i| lo[i] + (idx[i] as f64 + 0.5) * (hi[i] - lo[i]) / n[i] as f64);
        f(x);
        let mut axis = 0;
        loop {
            if axis == D {
                return;
            }
            idx[axis] += 1;
            if idx[axis] < n[axis] {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Generates a classified cloud for `domain` with mesh size at most
/// `target_h` and pairwise separation at least `delta_min`. Deterministic
/// for a fixed seed. All boundary points are tagged Dirichlet; see
/// [`with_neumann_bottom`] for the mixed boundary condition.
pub fn generate<const D: usize>(
    domain: &DomainSpec<D>,
    target_h: f64,
    delta_min: f64,
    seed: u64,
) -> Result<PointCloud<D>, CloudError> {
    if !(target_h.is_finite() && target_h > 0.0 && delta_min.is_finite() && delta_min > 0.0) {
        return Err(CloudError::BadParams);
    }
    // Hole filling inserts lattice points farther than
    // `target_h/2 - sigma sqrt(D)/2` from the cloud; the separation floor
    // must stay below that threshold for insertion to be legal.
    let finest_sigma = target_h / 8.0;
    let fill_threshold = 0.5 * target_h - 0.5 * finest_sigma * (D as f64).sqrt();
    if delta_min > fill_threshold {
        return Err(CloudError::InfeasibleParams {
            delta_min,
            target_h,
            max_delta: fill_threshold,
        });
    }

    let d_p = 0.25 * target_h;
    let d_b = 4.0 / std::f64::consts::PI * d_p;

    let mut points = place_boundary_points(domain, d_p, delta_min);
    let n_boundary = points.len();
    let mut grid = UniformGrid::<D>::new(0.5 * target_h);
    for (i, p) in points.iter().enumerate() {
        grid.insert(i, p);
    }
    let mut buf = Vec::new();

    // Dart throwing.
    let lo = *domain.lo();
    let hi = *domain.hi();
    let box_vol: f64 = (0..D).map(|i| hi[i] - lo[i]).product();
    let capacity = box_vol / delta_min.powi(D as i32);
    let attempts = ((30.0 * capacity) as usize).clamp(1000, 5_000_000);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts {
        let x: Point<D> = std::array::from_fn(|i| lo[i] + rng.gen::<f64>() * (hi[i] - lo[i]));
        if domain.phi(&x) > -d_b {
            continue;
        }
        if any_within(&grid, &points, &x, delta_min, &mut buf) {
            continue;
        }
        grid.insert(points.len(), &x);
        points.push(x);
    }

    // Hole filling from progressively finer scan lattices.
    for divisor in [4.0, 6.0, 8.0, 10.0] {
        if divisor > 8.0 {
            // Extra pass only when the coarser ones did not suffice.
            let h_est = estimate_cover(domain, &points, &grid, target_h / 8.0, 0.5 * target_h);
            if h_est <= target_h {
                break;
            }
        }
        let sigma = target_h / divisor;
        scan_lattice(domain, sigma, |x| {
            if domain.phi(&x) <= -d_b
                && !any_within(&grid, &points, &x, fill_threshold, &mut buf)
            {
                grid.insert(points.len(), &x);
                points.push(x);
            }
        });
    }
    let h_est = estimate_cover(domain, &points, &grid, target_h / 8.0, 0.5 * target_h);
    if h_est > target_h {
        return Err(CloudError::CoveringFailed {
            measured: h_est,
            target: target_h,
        });
    }

    let roles: Vec<Role> = (0..points.len())
        .map(|i| {
            if i < n_boundary {
                Role::Dirichlet
            } else {
                Role::Interior
            }
        })
        .collect();
    let normals = vec![None; points.len()];
    PointCloud::from_parts(points, roles, normals, Some(target_h))
}

/// Boundary points along the box faces (minus the parts cut away by the
/// ball) and along the sphere cap inside the box, at spacing `<= d_p`
/// where the separation floor permits.
fn place_boundary_points<const D: usize>(
    domain: &DomainSpec<D>,
    d_p: f64,
    delta_min: f64,
) -> Vec<Point<D>> {
    let lo = *domain.lo();
    let hi = *domain.hi();
    let mut pts: Vec<Point<D>> = Vec::new();
    let mut grid = UniformGrid::<D>::new(delta_min.max(d_p));
    let mut buf = Vec::new();
    let mut push = |pts: &mut Vec<Point<D>>, grid: &mut UniformGrid<D>, x: Point<D>| {
        grid.candidates(&x, delta_min, &mut buf);
        if buf.iter().any(|&i| geometry::dist(&x, &pts[i]) < delta_min) {
            return;
        }
        grid.insert(pts.len(), &x);
        pts.push(x);
    };
    let inside_ball = |x: &Point<D>| match domain.ball() {
        Some(b) => geometry::dist(x, &b.center) < b.radius - 1e-12,
        None => false,
    };
    // Spacing strictly above delta_min (with margin) so lattice points at
    // the separation floor survive floating-point noise in the dedupe.
    let delta_margin = delta_min * (1.0 + 1e-6);
    let segments = |len: f64| -> usize {
        let n = (len / d_p).ceil() as usize;
        let cap = (len / delta_margin).floor() as usize;
        n.min(cap.max(1)).max(1)
    };

    if D == 2 {
        // Walk the box perimeter; each corner appears exactly once.
        let corners = [
            [lo[0], lo[1]],
            [hi[0], lo[1]],
            [hi[0], hi[1]],
            [lo[0], hi[1]],
        ];
        for e in 0..4 {
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let n = segments(len);
            for i in 0..n {
                let t = i as f64 / n as f64;
                let x: Point<D> =
                    std::array::from_fn(|k| a[k] + t * (b[k] - a[k]));
                if !inside_ball(&x) {
                    push(&mut pts, &mut grid, x);
                }
            }
        }
        if let Some(ball) = domain.ball() {
            let circumference = 2.0 * std::f64::consts::PI * ball.radius;
            let m = ((circumference / d_p).ceil() as usize)
                .min(((circumference / delta_margin).floor() as usize).max(1))
                .max(8);
            for j in 0..m {
                let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                let mut x = ball.center;
                x[0] += ball.radius * th.cos();
                x[1] += ball.radius * th.sin();
                let strictly_in_box = (0..D).all(|k| x[k] > lo[k] + 1e-9 && x[k] < hi[k] - 1e-9);
                if strictly_in_box {
                    push(&mut pts, &mut grid, x);
                }
            }
        }
    } else {
        // Box faces as 2d grids; shared edges and corners deduplicate via
        // the separation filter (coordinates coincide exactly).
        for axis in 0..D {
            for &level in &[lo[axis], hi[axis]] {
                let others: Vec<usize> = (0..D).filter(|&a| a != axis).collect();
                let nu = segments(hi[others[0]] - lo[others[0]]);
                let nv = segments(hi[others[1]] - lo[others[1]]);
                for iu in 0..=nu {
                    for iv in 0..=nv {
                        let mut x = [0.0; D];
                        x[axis] = level;
                        x[others[0]] =
                            lo[others[0]] + iu as f64 / nu as f64 * (hi[others[0]] - lo[others[0]]);
                        x[others[1]] =
                            lo[others[1]] + iv as f64 / nv as f64 * (hi[others[1]] - lo[others[1]]);
                        if !inside_ball(&x) {
                            push(&mut pts, &mut grid, x);
                        }
                    }
                }
            }
        }
        if let Some(ball) = domain.ball() {
            let r = ball.radius;
            let meridian = std::f64::consts::PI * r;
            let n_theta = ((meridian / d_p).ceil() as usize)
                .min(((meridian / delta_margin).floor() as usize).max(1))
                .max(4);
            // Poles first, then latitude rings.
            for sign in [-1.0, 1.0] {
                let mut x = ball.center;
                x[D - 1] += sign * r;
                let strictly_in_box = (0..D).all(|k| x[k] > lo[k] + 1e-9 && x[k] < hi[k] - 1e-9);
                if strictly_in_box {
                    push(&mut pts, &mut grid, x);
                }
            }
            for i in 0..n_theta {
                let theta = std::f64::consts::PI * (i as f64 + 0.5) / n_theta as f64;
                let ring_r = r * theta.sin();
                let ring_len = 2.0 * std::f64::consts::PI * ring_r;
                let n_phi = ((ring_len / d_p).ceil() as usize)
                    .min(((ring_len / delta_margin).floor() as usize).max(1))
                    .max(1);
                for j in 0..n_phi {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
                    let mut x = ball.center;
                    x[0] += ring_r * phi.cos();
                    x[1] += ring_r * phi.sin();
                    x[D - 1] += r * theta.cos();
                    let strictly_in_box =
                        (0..D).all(|k| x[k] > lo[k] + 1e-9 && x[k] < hi[k] - 1e-9);
                    if strictly_in_box {
                        push(&mut pts, &mut grid, x);
                    }
                }
            }
        }
    }
    pts
}

/// Retags boundary points strictly inside the bottom face (`x_D = lo_D`)
/// as Neumann with outward normal `-e_D`. Face edges and corners remain
/// Dirichlet.
pub fn with_neumann_bottom<const D: usize>(
    cloud: PointCloud<D>,
    domain: &DomainSpec<D>,
) -> PointCloud<D> {
    let lo = *domain.lo();
    let hi = *domain.hi();
    let mut roles = cloud.roles.clone();
    let mut normals = cloud.normals.clone();
    for i in 0..cloud.len() {
        if roles[i] != Role::Dirichlet {
            continue;
        }
        let x = &cloud.points[i];
        let on_bottom = (x[D - 1] - lo[D - 1]).abs() <= TOL_BOUNDARY;
        let strictly_inside_face = (0..D - 1)
            .all(|a| x[a] > lo[a] + TOL_BOUNDARY && x[a] < hi[a] - TOL_BOUNDARY);
        if on_bottom && strictly_inside_face {
            roles[i] = Role::Neumann;
            let mut n = [0.0; D];
            n[D - 1] = -1.0;
            normals[i] = Some(n);
        }
    }
    PointCloud::from_parts(cloud.points, roles, normals, cloud.nominal_h)
        .expect("retagging preserves validity")
}

/// Measures mesh size, separation, boundary spacing, boundary clearance and
/// cone coverage of a cloud.
pub fn measure_quality<const D: usize>(
    cloud: &PointCloud<D>,
    domain: &DomainSpec<D>,
    sample_spacing: f64,
) -> Result<CloudQualityReport, CloudError> {
    if cloud.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    if !(sample_spacing.is_finite() && sample_spacing > 0.0) {
        return Err(CloudError::BadSpacing);
    }
    let mut max_d: f64 = 0.0;
    scan_lattice(domain, sample_spacing, |x| {
        if domain.phi(&x) <= 0.0 {
            if let Some((_, d)) = cloud.nearest_where(&x, None, |_| true) {
                max_d = max_d.max(d);
            }
        }
    });
    let mesh_size = 2.0 * max_d;

    let mut min_separation = f64::INFINITY;
    for i in 0..cloud.len() {
        if let Some((_, d)) = cloud.nearest_where(cloud.point(i), Some(i), |_| true) {
            min_separation = min_separation.min(d);
        }
    }

    let mut boundary_spacing: f64 = 0.0;
    for i in cloud.boundary_indices() {
        if let Some((_, d)) =
            cloud.nearest_where(cloud.point(i), Some(i), |j| cloud.role(j) != Role::Interior)
        {
            boundary_spacing = boundary_spacing.max(d);
        }
    }

    let mut min_clearance = f64::INFINITY;
    for i in cloud.interior_indices() {
        min_clearance = min_clearance.min(domain.phi(cloud.point(i)).abs());
    }

    let params = ConeCriterionParams::for_dimension(D)?;
    // The cone check uses the radius the assembly pipeline would use: the
    // generation target when known. Clouds pack denser than their target,
    // which provides the slack the truncated-cone guarantee needs.
    let h_for_radius = cloud.nominal_h.unwrap_or(mesh_size).max(1e-300);
    let radius = candidate_radius(h_for_radius, &params, DEFAULT_RADIUS_SAFETY)?;
    let mut cone_failures = 0;
    for i in cloud.interior_indices() {
        let neigh = neighbors_within(cloud, i, radius, domain);
        let offsets: Vec<Point<D>> = neigh
            .iter()
            .map(|&j| geometry::sub(cloud.point(j), cloud.point(i)))
            .collect();
        let ok = !offsets.is_empty() && cone_criterion_check(&offsets, &params).unwrap_or(false);
        if !ok {
            cone_failures += 1;
        }
    }

    Ok(CloudQualityReport {
        mesh_size,
        min_separation,
        boundary_spacing,
        min_interior_boundary_dist: min_clearance,
        cone_failures,
    })
}

/// Estimated mesh size: the generation target when known, otherwise a
/// measurement with spacing derived from the mean point distance.
pub fn estimate_mesh_size<const D: usize>(
    cloud: &PointCloud<D>,
    domain: &DomainSpec<D>,
) -> Result<f64, CloudError> {
    if let Some(h) = cloud.nominal_h {
        return Ok(h);
    }
    if cloud.is_empty() {
        return Err(CloudError::EmptyCloud);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    let stride = (cloud.len() / 512).max(1);
    for i in (0..cloud.len()).step_by(stride) {
        if let Some((_, d)) = cloud.nearest_where(cloud.point(i), Some(i), |_| true) {
            sum += d;
            count += 1;
        }
    }
    let mean_nn = if count > 0 { sum / count as f64 } else { 1.0 };
    let report = measure_quality(cloud, domain, 0.5 * mean_nn)?;
    Ok(report.mesh_size)
}

/// All points within `radius` of the center point that are visible from it
/// through the domain, sorted by ascending distance with index tie-break.
/// The center itself is excluded.
pub fn neighbors_within<const D: usize>(
    cloud: &PointCloud<D>,
    center: usize,
    radius: f64,
    domain: &DomainSpec<D>,
) -> Vec<usize> {
    let x0 = cloud.point(center);
    let mut buf = Vec::new();
    cloud.grid.candidates(x0, radius, &mut buf);
    let mut found: Vec<(f64, usize)> = buf
        .into_iter()
        .filter(|&i| i != center)
        .map(|i| (geometry::dist(x0, cloud.point(i)), i))
        .filter(|(d, _)| *d < radius)
        .filter(|(_, i)| domain.visible_from(x0, cloud.point(*i), DEFAULT_VISIBILITY_SAMPLES))
        .collect();
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    found.into_iter().map(|(_, i)| i).collect()
}

/// The two nearest in-radius points per quadrant (2d) / octant (3d) of the
/// local axis-aligned frame. Points on a sector boundary count toward the
/// strictly-positive side (the lower-index sector).
pub fn four_quadrant_neighbors<const D: usize>(
    cloud: &PointCloud<D>,
    center: usize,
    radius: f64,
) -> Vec<usize> {
    let x0 = cloud.point(center);
    let mut buf = Vec::new();
    cloud.grid.candidates(x0, radius, &mut buf);
    let sectors = 1usize << D;
    let mut best: Vec<Vec<(f64, usize)>> = vec![Vec::new(); sectors];
    let mut in_radius: Vec<(f64, usize)> = buf
        .into_iter()
        .filter(|&i| i != center)
        .map(|i| (geometry::dist(x0, cloud.point(i)), i))
        .filter(|(d, _)| *d < radius)
        .collect();
    in_radius.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (d, i) in in_radius {
        let off = geometry::sub(cloud.point(i), x0);
        let mut sector = 0usize;
        for a in 0..D {
            if off[a] < 0.0 {
                sector |= 1 << a;
            }
        }
        if best[sector].len() < 2 {
            best[sector].push((d, i));
        }
    }
    let mut out: Vec<(f64, usize)> = best.into_iter().flatten().collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.into_iter().map(|(_, i)| i).collect()
}

/// Writes the cloud text format: header `dim n`, then one point per line
/// `x y [z] role [nx ny [nz]]` with 17-significant-digit floats.
pub fn write_cloud<const D: usize>(
    cloud: &PointCloud<D>,
    w: &mut impl Write,
) -> Result<(), CloudError> {
    writeln!(w, "{} {}", D, cloud.len())?;
    for i in 0..cloud.len() {
        for k in 0..D {
            write!(w, "{:.16e} ", cloud.points[i][k])?;
        }
        write!(w, "{}", cloud.roles[i].tag())?;
        if let Some(n) = &cloud.normals[i] {
            for k in 0..D {
                write!(w, " {:.16e}", n[k])?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads the header of a cloud file: `(dimension, point count)`.
pub fn read_cloud_header(r: &mut impl BufRead) -> Result<(usize, usize), CloudError> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let mut it = line.split_whitespace();
    let parse = |tok: Option<&str>| -> Result<usize, CloudError> {
        tok.ok_or_else(|| CloudError::Parse {
            line: 1,
            message: "expected `dim n` header".into(),
        })?
        .parse()
        .map_err(|e| CloudError::Parse {
            line: 1,
            message: format!("bad header: {e}"),
        })
    };
    let dim = parse(it.next())?;
    let n = parse(it.next())?;
    Ok((dim, n))
}

/// Reads a cloud written by [`write_cloud`]. Round-trips bit-exactly.
pub fn read_cloud<const D: usize>(r: &mut impl BufRead) -> Result<PointCloud<D>, CloudError> {
    let (dim, n) = read_cloud_header(r)?;
    if dim != D {
        return Err(CloudError::DimensionMismatch {
            expected: D,
            found: dim,
        });
    }
    let mut points = Vec::with_capacity(n);
    let mut roles = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    let mut line = String::new();
    for lineno in 0..n {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(CloudError::Parse {
                line: lineno + 2,
                message: "unexpected end of file".into(),
            });
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = |message: String| CloudError::Parse {
            line: lineno + 2,
            message,
        };
        if toks.len() < D + 1 {
            return Err(bad(format!("expected at least {} fields", D + 1)));
        }
        let mut p = [0.0; D];
        for k in 0..D {
            p[k] = toks[k]
                .parse()
                .map_err(|e| bad(format!("bad coordinate: {e}")))?;
        }
        let role = match toks[D] {
            "I" => Role::Interior,
            "D" => Role::Dirichlet,
            "N" => Role::Neumann,
            other => return Err(bad(format!("unknown role `{other}`"))),
        };
        let normal = if role == Role::Neumann {
            if toks.len() < 2 * D + 1 {
                return Err(bad("Neumann point lacks normal components".into()));
            }
            let mut nvec = [0.0; D];
            for k in 0..D {
                nvec[k] = toks[D + 1 + k]
                    .parse()
                    .map_err(|e| bad(format!("bad normal: {e}")))?;
            }
            Some(nvec)
        } else {
            None
        };
        points.push(p);
        roles.push(role);
        normals.push(normal);
    }
    PointCloud::from_parts(points, roles, normals, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::half_space_check;

    fn standard2() -> DomainSpec<2> {
        DomainSpec::<2>::standard()
    }

    #[test]
    fn generate_meets_quality_targets() {
        let dom = standard2();
        let cloud = generate(&dom, 0.1, 0.025, 1).unwrap();
        let report = measure_quality(&cloud, &dom, 0.1 / 8.0).unwrap();
        assert!(report.mesh_size <= 0.1, "h = {}", report.mesh_size);
        assert!(
            report.min_separation >= 0.025,
            "sep = {}",
            report.min_separation
        );
        assert!(report.mesh_size >= report.min_separation);
        assert!(report.min_interior_boundary_dist >= 4.0 / std::f64::consts::PI * 0.025 - 1e-12);
        // The sufficient cone criterion may fail in the pockets where the
        // cut sphere meets the box; those stay rare.
        let interior = cloud.interior_indices().count();
        assert!(
            report.cone_failures * 50 <= interior,
            "{} cone failures among {} interior points",
            report.cone_failures,
            interior
        );
    }

    #[test]
    fn generate_is_deterministic() {
        let dom = standard2();
        let a = generate(&dom, 0.15, 0.03, 7).unwrap();
        let b = generate(&dom, 0.15, 0.03, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for i in 0..a.len() {
            assert_eq!(a.point(i), b.point(i));
            assert_eq!(a.role(i), b.role(i));
        }
        let c = generate(&dom, 0.15, 0.03, 8).unwrap();
        let same = a.len() == c.len() && (0..a.len()).all(|i| a.point(i) == c.point(i));
        assert!(!same, "different seeds must vary the cloud");
    }

    #[test]
    fn infeasible_separation_rejected() {
        let dom = standard2();
        assert!(matches!(
            generate(&dom, 0.1, 0.1, 1),
            Err(CloudError::InfeasibleParams { .. })
        ));
    }

    #[test]
    fn quality_for_ten_seeds() {
        let dom = standard2();
        for seed in 0..10 {
            let cloud = generate(&dom, 0.12, 0.03, seed).unwrap();
            let report = measure_quality(&cloud, &dom, 0.12 / 8.0).unwrap();
            assert!(report.mesh_size <= 0.12, "seed {seed}: h = {}", report.mesh_size);
            assert!(
                report.min_separation >= 0.03,
                "seed {seed}: sep = {}",
                report.min_separation
            );
        }
    }

    #[test]
    fn measure_single_point() {
        let dom = DomainSpec::<2>::box_only([0.0, 0.0], [1.0, 1.0]).unwrap();
        let cloud = PointCloud::from_parts(
            vec![[0.5, 0.5]],
            vec![Role::Interior],
            vec![None],
            None,
        )
        .unwrap();
        let report = measure_quality(&cloud, &dom, 1e-3).unwrap();
        assert!((report.mesh_size - 2.0_f64.sqrt()).abs() <= 2e-3);
    }

    #[test]
    fn measure_regular_grid() {
        let dom = DomainSpec::<2>::box_only([0.0, 0.0], [1.0, 1.0]).unwrap();
        let a = 0.1;
        let mut pts = Vec::new();
        for i in 0..=10 {
            for j in 0..=10 {
                pts.push([i as f64 * a, j as f64 * a]);
            }
        }
        let n = pts.len();
        let cloud =
            PointCloud::from_parts(pts, vec![Role::Interior; n], vec![None; n], None).unwrap();
        let report = measure_quality(&cloud, &dom, 5e-3).unwrap();
        assert!((report.mesh_size - a * 2.0_f64.sqrt()).abs() <= 2.0 * 5e-3);
        assert!((report.min_separation - a).abs() <= 1e-12);
    }

    #[test]
    fn separation_violation_is_flagged() {
        let dom = DomainSpec::<2>::box_only([0.0, 0.0], [1.0, 1.0]).unwrap();
        let cloud = PointCloud::from_parts(
            vec![[0.5, 0.5], [0.5 + 1e-3, 0.5]],
            vec![Role::Interior; 2],
            vec![None; 2],
            None,
        )
        .unwrap();
        let report = measure_quality(&cloud, &dom, 0.05).unwrap();
        assert!(report.min_separation < 0.025);
    }

    #[test]
    fn neighbors_sorted_and_limited() {
        let dom = DomainSpec::<2>::box_only([-2.0, -2.0], [2.0, 2.0]).unwrap();
        let r = 1.0;
        let cloud = PointCloud::from_parts(
            vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.9], [1.1, 0.0]],
            vec![Role::Interior; 4],
            vec![None; 4],
            None,
        )
        .unwrap();
        assert_eq!(neighbors_within(&cloud, 0, r, &dom), vec![1, 2]);
        assert!(neighbors_within(&cloud, 0, 0.1, &dom).is_empty());
    }

    #[test]
    fn crack_neighbor_excluded() {
        let dom = standard2();
        // Across the ball bulge: the straight segment leaves the domain.
        let a = [0.1, 0.85];
        let b = [0.9, 0.85];
        let c = [0.12, 0.6];
        assert!(dom.phi(&a) < 0.0 && dom.phi(&b) < 0.0 && dom.phi(&c) < 0.0);
        let cloud = PointCloud::from_parts(
            vec![a, b, c],
            vec![Role::Interior; 3],
            vec![None; 3],
            None,
        )
        .unwrap();
        let neigh = neighbors_within(&cloud, 0, 2.0, &dom);
        assert_eq!(neigh, vec![2], "point across the cut must be invisible");
    }

    #[test]
    fn four_quadrant_counts() {
        let mut pts = vec![[0.0, 0.0]];
        // two points per quadrant
        for &(sx, sy) in &[(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            pts.push([0.3 * sx, 0.2 * sy]);
            pts.push([0.5 * sx, 0.4 * sy]);
            pts.push([0.9 * sx, 0.8 * sy]); // third, never selected
        }
        let n = pts.len();
        let cloud =
            PointCloud::from_parts(pts, vec![Role::Interior; n], vec![None; n], None).unwrap();
        assert_eq!(four_quadrant_neighbors(&cloud, 0, 2.0).len(), 8);
        // Empty quadrant: drop the (+,+) points.
        let pts2: Vec<[f64; 2]> = cloud
            .points()
            .iter()
            .copied()
            .filter(|p| !(p[0] > 0.0 && p[1] > 0.0))
            .collect();
        let n2 = pts2.len();
        let cloud2 =
            PointCloud::from_parts(pts2, vec![Role::Interior; n2], vec![None; n2], None).unwrap();
        assert!(four_quadrant_neighbors(&cloud2, 0, 2.0).len() <= 6);
    }

    #[test]
    fn four_quadrant_axis_tie_break() {
        // A point exactly on the +x axis belongs to the (+,+) sector, so a
        // crowded (+,+) sector can displace it while (+,-) stays open.
        let pts = vec![[0.0, 0.0], [0.5, 0.0], [0.2, 0.1], [0.3, 0.2], [0.2, -0.4]];
        let n = pts.len();
        let cloud =
            PointCloud::from_parts(pts, vec![Role::Interior; n], vec![None; n], None).unwrap();
        let picked = four_quadrant_neighbors(&cloud, 0, 2.0);
        // Sector (+,+) holds {2, 3}; the axis point 1 is squeezed out of it.
        assert!(picked.contains(&2) && picked.contains(&3) && picked.contains(&4));
        assert!(!picked.contains(&1));
    }

    #[test]
    fn neighbor_symmetry_in_convex_domain() {
        let dom = DomainSpec::<2>::box_only([0.0, 0.0], [1.0, 1.0]).unwrap();
        let cloud = generate(&dom, 0.2, 0.05, 3).unwrap();
        let r = 0.3;
        for i in 0..cloud.len() {
            for &j in &neighbors_within(&cloud, i, r, &dom) {
                assert!(neighbors_within(&cloud, j, r, &dom).contains(&i));
            }
        }
    }

    #[test]
    fn mesh_size_theorem_cone_coverage() {
        let dom = standard2();
        let target_h = 0.1;
        let cloud = generate(&dom, target_h, 0.025, 2).unwrap();
        let params = ConeCriterionParams::for_dimension(2).unwrap();
        let r = candidate_radius(target_h, &params, DEFAULT_RADIUS_SAFETY).unwrap();
        let mut tested = 0;
        for i in cloud.interior_indices() {
            if dom.phi(cloud.point(i)).abs() <= r {
                continue; // theorem applies away from the boundary
            }
            let offsets: Vec<[f64; 2]> = neighbors_within(&cloud, i, r, &dom)
                .iter()
                .map(|&j| geometry::sub(cloud.point(j), cloud.point(i)))
                .collect();
            assert!(cone_criterion_check(&offsets, &params).unwrap());
            assert!(half_space_check(&offsets).unwrap());
            tested += 1;
        }
        assert!(tested > 10, "too few deep interior points: {tested}");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dom = standard2();
        let cloud = with_neumann_bottom(generate(&dom, 0.15, 0.03, 5).unwrap(), &dom);
        let mut out = Vec::new();
        write_cloud(&cloud, &mut out).unwrap();
        let restored = read_cloud::<2>(&mut out.as_slice()).unwrap();
        assert_eq!(cloud.len(), restored.len());
        for i in 0..cloud.len() {
            for k in 0..2 {
                assert_eq!(
                    cloud.point(i)[k].to_bits(),
                    restored.point(i)[k].to_bits(),
                    "coordinate {k} of point {i}"
                );
            }
            assert_eq!(cloud.role(i), restored.role(i));
            assert_eq!(cloud.normal(i), restored.normal(i));
        }
        assert!(matches!(
            read_cloud::<3>(&mut out.as_slice()),
            Err(CloudError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn neumann_bottom_tags_only_inner_face_points() {
        let dom = standard2();
        let cloud = with_neumann_bottom(generate(&dom, 0.2, 0.05, 1).unwrap(), &dom);
        let mut neumann = 0;
        for i in 0..cloud.len() {
            match cloud.role(i) {
                Role::Neumann => {
                    neumann += 1;
                    let x = cloud.point(i);
                    assert!(x[1].abs() <= TOL_BOUNDARY);
                    assert!(x[0] > 0.0 && x[0] < 1.0);
                    assert_eq!(cloud.normal(i), Some(&[0.0, -1.0]));
                }
                _ => {
                    if cloud.role(i) == Role::Dirichlet {
                        assert!(cloud.normal(i).is_none());
                    }
                }
            }
        }
        assert!(neumann > 0);
        // Corners stay Dirichlet.
        for i in 0..cloud.len() {
            let x = cloud.point(i);
            if (x[0].abs() <= TOL_BOUNDARY || (x[0] - 1.0).abs() <= TOL_BOUNDARY)
                && x[1].abs() <= TOL_BOUNDARY
            {
                assert_eq!(cloud.role(i), Role::Dirichlet);
            }
        }
    }
}
