//! Global sparse operator assembly and structural M-matrix checks.
//!
//! Interior rows discretize `-Delta` (positive diagonal, nonpositive
//! off-diagonals for MPS stencils), Dirichlet rows are kept as identity
//! rows so indices stay aligned with the cloud, and Neumann rows encode
//! the outward normal derivative after a sign flip of the inward-frame
//! stencil. An L-matrix that is weakly diagonally dominant with every
//! index connected to a Dirichlet row is an M-matrix, which yields the
//! discrete maximum principle checked here.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cloud::{self, CloudError, PointCloud, Role};
use crate::geometry::{
    self, candidate_radius, ConeCriterionParams, DomainSpec, GeometryError, Point,
    DEFAULT_RADIUS_SAFETY,
};
use crate::solver::{self, SolveError, SolverConfig};
use crate::stencil::{
    build_constraints, lsq_stencil, mps_stencil, neumann_frame, neumann_stencil, ConstraintKind,
    InfeasibilityReport, MpsOutcome, StencilError, StencilMethod,
};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("point {point}: no positive stencil exists; Farkas certificate {certificate:?}")]
    InfeasibleStencil {
        point: usize,
        certificate: Vec<f64>,
        report: InfeasibilityReport,
    },
    #[error("point {point}: {source}")]
    Stencil {
        point: usize,
        source: StencilError,
    },
    #[error("point {point}: no candidate neighbors within radius {radius}")]
    NoCandidates { point: usize, radius: f64 },
    #[error("point {point} is tagged Neumann but has no normal")]
    MissingNormal { point: usize },
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Compressed sparse row matrix with per-row role tags. Column indices are
/// strictly increasing within each row.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_roles: Vec<Role>,
}

impl SparseMatrix {
    /// Builds CSR from per-row entry lists; entries are sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, row_roles: Vec<Role>) -> Self {
        assert_eq!(rows.len(), row_roles.len());
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|(j, _)| *j);
            for (j, v) in row {
                debug_assert!(j < n);
                col_idx.push(j);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
            row_roles,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_role(&self, i: usize) -> Role {
        self.row_roles[i]
    }

    pub fn row_roles(&self) -> &[Role] {
        &self.row_roles
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&i) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Structure-exact, value-approximate equality after canonical sorting.
    pub fn approx_eq(&self, other: &SparseMatrix, rel_tol: f64) -> bool {
        if self.n != other.n || self.col_idx != other.col_idx || self.row_ptr != other.row_ptr {
            return false;
        }
        self.values
            .iter()
            .zip(&other.values)
            .all(|(a, b)| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1e-300))
    }

    /// Dense copy for small direct oracles.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                m[(i, *j)] = *v;
            }
        }
        m
    }

    /// MatrixMarket coordinate export, 1-based, 17 significant digits.
    pub fn write_matrix_market(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Plain vector export, one 17-significant-digit value per line.
pub fn write_vector(values: &[f64], w: &mut impl Write) -> std::io::Result<()> {
    for v in values {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

/// Builds right-hand sides for an assembled matrix from the data functions:
/// `f` (interior source of `-Delta u = f`), `g` (Dirichlet values), `h`
/// (outward normal derivative at Neumann points).
#[derive(Clone, Debug)]
pub struct RhsAssembler<const D: usize> {
    points: Vec<Point<D>>,
    roles: Vec<Role>,
}

impl<const D: usize> RhsAssembler<D> {
    pub fn assemble(
        &self,
        f: impl Fn(&Point<D>) -> f64,
        g: impl Fn(&Point<D>) -> f64,
        h: impl Fn(&Point<D>) -> f64,
    ) -> Vec<f64> {
        self.points
            .iter()
            .zip(&self.roles)
            .map(|(x, role)| match role {
                Role::Interior => f(x),
                Role::Dirichlet => g(x),
                Role::Neumann => h(x),
            })
            .collect()
    }
}

/// Assembles the global system for the cloud. Interior rows use candidates
/// within `radius_factor` times the cone-criterion candidate radius,
/// visibility-filtered through the domain. MPS rows store only the nonzero
/// basis entries; LSQ rows store every candidate entry. Any infeasible or
/// rank-deficient point aborts assembly with full provenance.
pub fn assemble<const D: usize>(
    cloud: &PointCloud<D>,
    domain: &DomainSpec<D>,
    method: StencilMethod,
    alpha: f64,
    radius_factor: f64,
) -> Result<(SparseMatrix, RhsAssembler<D>), AssemblyError> {
    let h = cloud::estimate_mesh_size(cloud, domain)?;
    let params = ConeCriterionParams::for_dimension(D)?;
    let radius = radius_factor * candidate_radius(h, &params, DEFAULT_RADIUS_SAFETY)?;

    let n = cloud.len();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        match cloud.role(i) {
            Role::Dirichlet => rows.push(vec![(i, 1.0)]),
            Role::Interior => {
                let neigh = cloud::neighbors_within(cloud, i, radius, domain);
                if neigh.is_empty() {
                    return Err(AssemblyError::NoCandidates { point: i, radius });
                }
                let offsets: Vec<Point<D>> = neigh
                    .iter()
                    .map(|&j| geometry::sub(cloud.point(j), cloud.point(i)))
                    .collect();
                let cs = build_constraints(&offsets, alpha, ConstraintKind::Laplace)
                    .map_err(|source| AssemblyError::Stencil { point: i, source })?;
                let stencil = match method {
                    StencilMethod::Mps => match mps_stencil(&cs)
                        .map_err(|source| AssemblyError::Stencil { point: i, source })?
                    {
                        MpsOutcome::Stencil(s) => s,
                        MpsOutcome::Infeasible(report) => {
                            return Err(AssemblyError::InfeasibleStencil {
                                point: i,
                                certificate: report.certificate.iter().copied().collect(),
                                report,
                            })
                        }
                    },
                    StencilMethod::Lsq => lsq_stencil(&cs)
                        .map_err(|source| AssemblyError::Stencil { point: i, source })?,
                };
                rows.push(negated_row(i, &neigh, &stencil, method));
            }
            Role::Neumann => {
                let normal = cloud
                    .normal(i)
                    .ok_or(AssemblyError::MissingNormal { point: i })?;
                let neigh = cloud::neighbors_within(cloud, i, radius, domain);
                if neigh.is_empty() {
                    return Err(AssemblyError::NoCandidates { point: i, radius });
                }
                let frame = neumann_frame(normal);
                let local: Vec<Point<D>> = neigh
                    .iter()
                    .map(|&j| {
                        let off = geometry::sub(cloud.point(j), cloud.point(i));
                        std::array::from_fn(|a| geometry::dot(&frame[a], &off))
                    })
                    .collect();
                let cs = build_constraints(&local, alpha, ConstraintKind::NeumannNormal)
                    .map_err(|source| AssemblyError::Stencil { point: i, source })?;
                let stencil = match neumann_stencil(&cs, method)
                    .map_err(|source| AssemblyError::Stencil { point: i, source })?
                {
                    MpsOutcome::Stencil(s) => s,
                    MpsOutcome::Infeasible(report) => {
                        return Err(AssemblyError::InfeasibleStencil {
                            point: i,
                            certificate: report.certificate.iter().copied().collect(),
                            report,
                        })
                    }
                };
                rows.push(negated_row(i, &neigh, &stencil, method));
            }
        }
    }

    let matrix = SparseMatrix::from_rows(rows, cloud.roles().to_vec());
    let rhs = RhsAssembler {
        points: cloud.points().to_vec(),
        roles: cloud.roles().to_vec(),
    };
    Ok((matrix, rhs))
}

/// Row of `-S`: positive diagonal `-s_0`, off-diagonals `-s_i`. MPS rows
/// drop zero basis entries; LSQ rows keep every candidate.
fn negated_row(
    center: usize,
    neighbors: &[usize],
    stencil: &crate::stencil::Stencil,
    method: StencilMethod,
) -> Vec<(usize, f64)> {
    let mut row = Vec::with_capacity(stencil.neighbors.len() + 1);
    row.push((center, -stencil.center_coefficient));
    for (local, coeff) in stencil.neighbors.iter().zip(&stencil.coefficients) {
        if method == StencilMethod::Mps && *coeff == 0.0 {
            continue;
        }
        row.push((neighbors[*local], -coeff));
    }
    row
}

/// Dirichlet points referenced by no other row. An isolated Dirichlet
/// point leaves its boundary value out of the discrete coupling; callers
/// should warn about these.
pub fn unused_dirichlet(matrix: &SparseMatrix) -> Vec<usize> {
    let n = matrix.n();
    let mut referenced = vec![false; n];
    for i in 0..n {
        if matrix.row_role(i) == Role::Dirichlet {
            continue;
        }
        let (cols, _) = matrix.row(i);
        for &j in cols {
            if j != i {
                referenced[j] = true;
            }
        }
    }
    (0..n)
        .filter(|&i| matrix.row_role(i) == Role::Dirichlet && !referenced[i])
        .collect()
}

/// Structural findings of [`analyze`].
#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub is_l_matrix: bool,
    pub weakly_diagonally_dominant: bool,
    /// Indices not connected to any Dirichlet row through the matrix graph.
    pub unreachable: Vec<usize>,
    pub nnz_min: usize,
    pub nnz_max: usize,
    pub nnz_mean: f64,
}

/// Checks the sign pattern, weak diagonal dominance (within 1e-9 relative)
/// and reachability of the Dirichlet set through reversed graph edges
/// (edge `(i, j)` whenever `a_ij != 0`).
pub fn analyze(matrix: &SparseMatrix) -> MatrixReport {
    let n = matrix.n();
    let mut is_l = true;
    let mut dominant = true;
    let mut nnz_min = usize::MAX;
    let mut nnz_max = 0;
    let mut nnz_total = 0usize;
    for i in 0..n {
        let (cols, vals) = matrix.row(i);
        nnz_min = nnz_min.min(cols.len());
        nnz_max = nnz_max.max(cols.len());
        nnz_total += cols.len();
        let mut diag = 0.0;
        let mut off_sum = 0.0;
        for (j, v) in cols.iter().zip(vals) {
            if *j == i {
                diag = *v;
            } else {
                off_sum += v.abs();
                if *v > 1e-12 * diag.abs().max(1.0) {
                    is_l = false;
                }
            }
        }
        if diag <= 0.0 {
            is_l = false;
        }
        if off_sum > diag.abs() * (1.0 + 1e-9) {
            dominant = false;
        }
    }

    // Reverse adjacency: for column j, the rows whose stencil uses j.
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let (cols, vals) = matrix.row(i);
        for (j, v) in cols.iter().zip(vals) {
            if *v != 0.0 {
                rev[*j].push(i);
            }
        }
    }

    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if matrix.row_role(i) == Role::Dirichlet {
            reached[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for &i in &rev[j] {
            if !reached[i] {
                reached[i] = true;
                queue.push_back(i);
            }
        }
    }
    let unreachable: Vec<usize> = (0..n).filter(|&i| !reached[i]).collect();

    MatrixReport {
        is_l_matrix: is_l,
        weakly_diagonally_dominant: dominant,
        unreachable,
        nnz_min: if n == 0 { 0 } else { nnz_min },
        nnz_max,
        nnz_mean: if n == 0 {
            0.0
        } else {
            nnz_total as f64 / n as f64
        },
    }
}

/// Draws `trials` nonpositive right-hand sides, solves, and checks the
/// discrete maximum principle: solutions stay below `1e-8 * |rhs|_inf`.
pub fn discrete_max_principle_test(
    matrix: &SparseMatrix,
    config: &SolverConfig,
    trials: usize,
    seed: u64,
) -> Result<bool, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = matrix.n();
    for _ in 0..trials {
        let rhs: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>()).collect();
        let (x, report) = solver::solve_iterative(matrix, &rhs, config, None)?;
        if !report.converged {
            return Ok(false);
        }
        let bound = 1e-8 * rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if x.iter().any(|v| *v > bound) {
            return Ok(false);
        }
    }
    Ok(true)
}
