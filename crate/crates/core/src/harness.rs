//! Manufactured-solution experiments, convergence and cost studies, and the
//! command-line interface.
//!
//! The test problem lives on the standard domain (unit box minus the ball
//! at `(0.5, ..., 0.5, 1.1)` with radius 0.44). The manufactured field is
//! normalized to unit range over the domain closure, `f = -Delta g` drives
//! `-Delta u = f` so that `u = g` exactly, and the Neumann data is the
//! outward normal derivative of `g` on the bottom face.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::assembly::{self, assemble, AssemblyError, SparseMatrix};
use crate::cloud::{
    self, generate, measure_quality, with_neumann_bottom, CloudError, PointCloud, Role,
};
use crate::geometry::{
    candidate_radius, cone_criterion_check, half_space_check, ConeCriterionParams, DomainSpec,
    GeometryError, Point, DEFAULT_RADIUS_SAFETY,
};
use crate::solver::{solve_iterative, IterMethod, SolveError, SolverConfig};
use crate::stencil::{
    build_constraints, lsq_stencil, mps_stencil, neumann_frame, neumann_stencil, ConstraintKind,
    MpsOutcome, StencilError, StencilMethod,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("run h={h} seed={seed}: {source}")]
    Run {
        h: f64,
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("solver did not converge: relative residual {0}")]
    NotConverged(f64),
    #[error("{0}")]
    Invalid(String),
}

/// Boundary condition layout of the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcMode {
    AllDirichlet,
    /// Neumann on the bottom face `x_d = 0`, Dirichlet elsewhere.
    MixedNeumannBottom,
}

impl BcMode {
    pub fn name(self) -> &'static str {
        match self {
            BcMode::AllDirichlet => "dirichlet",
            BcMode::MixedNeumannBottom => "mixed",
        }
    }
}

/// Closed-form test field with unit range over the standard domain.
#[derive(Clone, Debug)]
pub struct ManufacturedSolution {
    pub dimension: usize,
    pub bc: BcMode,
    /// Range of the raw field over the domain closure; `g` divides by it.
    pub normalization: f64,
}

fn g_raw(dimension: usize, x: &[f64]) -> f64 {
    match dimension {
        2 => x[0] * (x[1] + 2.0).sin() + x[1] * (2.0 * x[0] + 1.0).sin(),
        3 => {
            x[0] * (x[1] + 2.0).sin()
                + x[1] * (2.0 * x[2] + 3.0).sin()
                + x[2] * (3.0 * x[0] + 1.0).sin()
        }
        _ => unreachable!(),
    }
}

fn laplacian_raw(dimension: usize, x: &[f64]) -> f64 {
    match dimension {
        2 => -x[0] * (x[1] + 2.0).sin() - 4.0 * x[1] * (2.0 * x[0] + 1.0).sin(),
        3 => {
            -x[0] * (x[1] + 2.0).sin()
                - 4.0 * x[1] * (2.0 * x[2] + 3.0).sin()
                - 9.0 * x[2] * (3.0 * x[0] + 1.0).sin()
        }
        _ => unreachable!(),
    }
}

fn gradient_raw(dimension: usize, x: &[f64], out: &mut [f64]) {
    match dimension {
        2 => {
            out[0] = (x[1] + 2.0).sin() + 2.0 * x[1] * (2.0 * x[0] + 1.0).cos();
            out[1] = x[0] * (x[1] + 2.0).cos() + (2.0 * x[0] + 1.0).sin();
        }
        3 => {
            out[0] = (x[1] + 2.0).sin() + 3.0 * x[2] * (3.0 * x[0] + 1.0).cos();
            out[1] = x[0] * (x[1] + 2.0).cos() + (2.0 * x[2] + 3.0).sin();
            out[2] = 2.0 * x[1] * (2.0 * x[2] + 3.0).cos() + (3.0 * x[0] + 1.0).sin();
        }
        _ => unreachable!(),
    }
}

/// Range of the raw field sampled on a fine grid over the domain closure:
/// 400 nodes per axis in 2d, 100 in 3d, endpoints included.
fn normalization_constant(dimension: usize) -> f64 {
    fn compute<const D: usize>(nodes: usize) -> f64 {
        let domain = DomainSpec::<D>::standard();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut idx = [0usize; D];
        loop {
            let x: Point<D> = std::array::from_fn(|a| idx[a] as f64 / (nodes - 1) as f64);
            if domain.phi(&x) <= 0.0 {
                let v = g_raw(D, x.as_slice());
                min = min.min(v);
                max = max.max(v);
            }
            let mut axis = 0;
            loop {
                if axis == D {
                    return max - min;
                }
                idx[axis] += 1;
                if idx[axis] < nodes {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }
    static C2: OnceLock<f64> = OnceLock::new();
    static C3: OnceLock<f64> = OnceLock::new();
    match dimension {
        2 => *C2.get_or_init(|| compute::<2>(400)),
        3 => *C3.get_or_init(|| compute::<3>(100)),
        _ => unreachable!(),
    }
}

/// Builds the manufactured solution for the standard domain.
pub fn manufactured(dimension: usize, bc: BcMode) -> Result<ManufacturedSolution, HarnessError> {
    if dimension != 2 && dimension != 3 {
        return Err(HarnessError::BadDimension(dimension));
    }
    Ok(ManufacturedSolution {
        dimension,
        bc,
        normalization: normalization_constant(dimension),
    })
}

impl ManufacturedSolution {
    pub fn g(&self, x: &[f64]) -> f64 {
        g_raw(self.dimension, x) / self.normalization
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        laplacian_raw(self.dimension, x) / self.normalization
    }

    /// Source of `-Delta u = f` with exact solution `u = g`.
    pub fn source(&self, x: &[f64]) -> f64 {
        -self.laplacian(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        gradient_raw(self.dimension, x, &mut out);
        for v in out.iter_mut() {
            *v /= self.normalization;
        }
        out
    }

    /// Outward normal derivative data `h = dg/dn`.
    pub fn neumann(&self, x: &[f64], outward_normal: &[f64]) -> f64 {
        self.gradient(x)
            .iter()
            .zip(outward_normal)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Configuration of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub dimension: usize,
    pub target_hs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub methods: Vec<StencilMethod>,
    pub bc_modes: Vec<BcMode>,
    pub alpha: f64,
    pub radius_factor: f64,
    /// Minimum separation as a fraction of the target mesh size.
    pub delta_min_factor: f64,
    pub solver_tol: f64,
}

impl ConvergenceConfig {
    pub fn default_2d() -> Self {
        let s = 2.0_f64.sqrt();
        ConvergenceConfig {
            dimension: 2,
            target_hs: vec![0.2, 0.2 / s, 0.1, 0.1 / s, 0.05],
            seeds: (1..=5).collect(),
            methods: vec![StencilMethod::Mps, StencilMethod::Lsq],
            bc_modes: vec![BcMode::AllDirichlet, BcMode::MixedNeumannBottom],
            alpha: 4.0,
            radius_factor: 1.0,
            delta_min_factor: 0.25,
            solver_tol: 1e-10,
        }
    }

    pub fn default_3d() -> Self {
        let s = 2.0_f64.sqrt();
        ConvergenceConfig {
            dimension: 3,
            target_hs: vec![0.25, 0.25 / s, 0.125],
            seeds: (1..=3).collect(),
            methods: vec![StencilMethod::Mps, StencilMethod::Lsq],
            bc_modes: vec![BcMode::AllDirichlet],
            alpha: 4.0,
            radius_factor: 1.0,
            // Slightly coarser dart packing than in 2d: it keeps the
            // realized resolution close to the target, where the error
            // decay sits cleanly in the second-order regime.
            delta_min_factor: 0.3,
            solver_tol: 1e-10,
        }
    }
}

/// One line of a convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceRecord {
    pub target_h: f64,
    pub seed: u64,
    pub method: StencilMethod,
    pub bc: BcMode,
    pub err_max: f64,
    pub setup_seconds: f64,
    pub solve_seconds: f64,
    pub nnz: usize,
}

fn run_context<T>(
    h: f64,
    seed: u64,
    r: Result<T, impl Into<HarnessError>>,
) -> Result<T, HarnessError> {
    r.map_err(|e| HarnessError::Run {
        h,
        seed,
        source: Box::new(e.into()),
    })
}

/// BiCGStab with a Gauss-Seidel fallback on breakdown or stagnation.
fn robust_solve(
    matrix: &SparseMatrix,
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, f64), HarnessError> {
    let start = Instant::now();
    let n = matrix.n();
    let cfg = SolverConfig {
        method: IterMethod::BiCgStab,
        tol,
        max_iter: (2 * n).max(2000),
    };
    match solve_iterative(matrix, rhs, &cfg, None) {
        Ok((x, report)) if report.converged => {
            return Ok((x, start.elapsed().as_secs_f64()));
        }
        Ok(_) | Err(SolveError::Breakdown(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let cfg = SolverConfig {
        method: IterMethod::GaussSeidel,
        tol,
        max_iter: (30 * n).max(20_000),
    };
    let (x, report) = solve_iterative(matrix, rhs, &cfg, None)?;
    if !report.converged {
        return Err(HarnessError::NotConverged(report.final_residual));
    }
    Ok((x, start.elapsed().as_secs_f64()))
}

fn solve_manufactured<const D: usize>(
    cloud: &PointCloud<D>,
    domain: &DomainSpec<D>,
    ms: &ManufacturedSolution,
    method: StencilMethod,
    alpha: f64,
    radius_factor: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64, f64, usize), HarnessError> {
    let t0 = Instant::now();
    let (matrix, rhs_asm) = assemble(cloud, domain, method, alpha, radius_factor)?;
    let setup = t0.elapsed().as_secs_f64();
    let mut outward = [0.0; D];
    outward[D - 1] = -1.0;
    let rhs = rhs_asm.assemble(
        |x| ms.source(x.as_slice()),
        |x| ms.g(x.as_slice()),
        |x| ms.neumann(x.as_slice(), outward.as_slice()),
    );
    let (u, solve_seconds) = robust_solve(&matrix, &rhs, tol)?;
    Ok((u, setup, solve_seconds, matrix.nnz()))
}

fn max_interior_error<const D: usize>(
    cloud: &PointCloud<D>,
    ms: &ManufacturedSolution,
    u: &[f64],
) -> f64 {
    let mut err: f64 = 0.0;
    for i in cloud.interior_indices() {
        err = err.max((u[i] - ms.g(cloud.point(i).as_slice())).abs());
    }
    err
}

fn convergence_impl<const D: usize>(
    cfg: &ConvergenceConfig,
) -> Result<Vec<ConvergenceRecord>, HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let mut records = Vec::new();
    for &h in &cfg.target_hs {
        for &seed in &cfg.seeds {
            let base = run_context(
                h,
                seed,
                generate(&domain, h, cfg.delta_min_factor * h, seed),
            )?;
            for &bc in &cfg.bc_modes {
                let cloud = match bc {
                    BcMode::AllDirichlet => base.clone(),
                    BcMode::MixedNeumannBottom => with_neumann_bottom(base.clone(), &domain),
                };
                let ms = manufactured(D, bc)?;
                for &method in &cfg.methods {
                    let (u, setup, solve, nnz) = run_context(
                        h,
                        seed,
                        solve_manufactured(
                            &cloud,
                            &domain,
                            &ms,
                            method,
                            cfg.alpha,
                            cfg.radius_factor,
                            cfg.solver_tol,
                        ),
                    )?;
                    records.push(ConvergenceRecord {
                        target_h: h,
                        seed,
                        method,
                        bc,
                        err_max: max_interior_error(&cloud, &ms, &u),
                        setup_seconds: setup,
                        solve_seconds: solve,
                        nnz,
                    });
                }
            }
        }
    }
    records.sort_by(|a, b| {
        a.target_h
            .partial_cmp(&b.target_h)
            .unwrap()
            .then(a.seed.cmp(&b.seed))
            .then(a.method.name().cmp(b.method.name()))
            .then(a.bc.name().cmp(b.bc.name()))
    });
    Ok(records)
}

/// Runs the manufactured-solution convergence study.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<Vec<ConvergenceRecord>, HarnessError> {
    match cfg.dimension {
        2 => convergence_impl::<2>(cfg),
        3 => convergence_impl::<3>(cfg),
        d => Err(HarnessError::BadDimension(d)),
    }
}

/// Least-squares slope of `ln err` against `ln h`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (h, e) in points {
        sx += h.ln();
        sy += e.ln();
    }
    let (mx, my) = (sx / n, sy / n);
    let mut num = 0.0;
    let mut den = 0.0;
    for (h, e) in points {
        num += (h.ln() - mx) * (e.ln() - my);
        den += (h.ln() - mx) * (h.ln() - mx);
    }
    num / den
}

/// Mean error per mesh size for one method and boundary mode.
pub fn mean_errors_by_h(
    records: &[ConvergenceRecord],
    method: StencilMethod,
    bc: BcMode,
) -> Vec<(f64, f64)> {
    let mut grouped: Vec<(f64, f64, usize)> = Vec::new();
    for r in records {
        if r.method != method || r.bc != bc {
            continue;
        }
        match grouped.iter_mut().find(|(h, _, _)| *h == r.target_h) {
            Some((_, sum, count)) => {
                *sum += r.err_max;
                *count += 1;
            }
            None => grouped.push((r.target_h, r.err_max, 1)),
        }
    }
    grouped
        .into_iter()
        .map(|(h, sum, count)| (h, sum / count as f64))
        .collect()
}

/// Fitted convergence slope for one method and boundary mode.
pub fn slope_for(records: &[ConvergenceRecord], method: StencilMethod, bc: BcMode) -> f64 {
    fit_slope(&mean_errors_by_h(records, method, bc))
}

/// Configuration of the MPS-vs-LSQ cost comparison.
#[derive(Clone, Debug)]
pub struct CostConfig {
    pub dimension: usize,
    pub target_hs: Vec<f64>,
    pub seed: u64,
    pub alpha: f64,
    pub radius_factor: f64,
    pub delta_min_factor: f64,
    /// Gauss-Seidel sweeps timed per method (no convergence stopping).
    pub gs_sweeps: usize,
    /// Timing repetitions; the best run counts.
    pub repeats: usize,
}

impl CostConfig {
    pub fn default_2d() -> Self {
        CostConfig {
            dimension: 2,
            target_hs: vec![0.1, 0.05],
            seed: 1,
            alpha: 4.0,
            radius_factor: 1.0,
            delta_min_factor: 0.25,
            gs_sweeps: 200,
            repeats: 3,
        }
    }
}

/// One line of the cost comparison.
#[derive(Clone, Debug)]
pub struct CostRecord {
    pub target_h: f64,
    pub n: usize,
    pub method: StencilMethod,
    pub nnz: usize,
    pub setup_seconds: f64,
    /// Wall time of `gs_sweeps` Gauss-Seidel sweeps.
    pub solve_seconds: f64,
    /// Wall time of 50 matrix-vector products.
    pub matvec_seconds: f64,
}

fn cost_impl<const D: usize>(cfg: &CostConfig) -> Result<Vec<CostRecord>, HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let ms = manufactured(D, BcMode::AllDirichlet)?;
    let mut records = Vec::new();
    for &h in &cfg.target_hs {
        let cloud = run_context(
            h,
            cfg.seed,
            generate(&domain, h, cfg.delta_min_factor * h, cfg.seed),
        )?;
        for method in [StencilMethod::Mps, StencilMethod::Lsq] {
            let mut setup_best = f64::INFINITY;
            let mut assembled = None;
            for _ in 0..cfg.repeats.max(1) {
                let t0 = Instant::now();
                let pair = assemble(&cloud, &domain, method, cfg.alpha, cfg.radius_factor)?;
                setup_best = setup_best.min(t0.elapsed().as_secs_f64());
                assembled = Some(pair);
            }
            let (matrix, rhs_asm) = assembled.expect("at least one repeat");
            let rhs = rhs_asm.assemble(
                |x| ms.source(x.as_slice()),
                |x| ms.g(x.as_slice()),
                |_| 0.0,
            );
            let mut solve_best = f64::INFINITY;
            for _ in 0..cfg.repeats.max(1) {
                let (_, seconds) =
                    crate::solver::fixed_sweeps(&matrix, &rhs, IterMethod::GaussSeidel, cfg.gs_sweeps)?;
                solve_best = solve_best.min(seconds);
            }
            let ones = vec![1.0; matrix.n()];
            let mut matvec_best = f64::INFINITY;
            for _ in 0..cfg.repeats.max(1) {
                let t0 = Instant::now();
                let mut acc = 0.0;
                for _ in 0..50 {
                    let y = crate::solver::matvec(&matrix, &ones);
                    acc += y[0];
                }
                std::hint::black_box(acc);
                matvec_best = matvec_best.min(t0.elapsed().as_secs_f64());
            }
            records.push(CostRecord {
                target_h: h,
                n: matrix.n(),
                method,
                nnz: matrix.nnz(),
                setup_seconds: setup_best,
                solve_seconds: solve_best,
                matvec_seconds: matvec_best,
            });
        }
    }
    Ok(records)
}

/// Runs the setup/solve cost comparison on matched clouds.
pub fn run_cost_comparison(cfg: &CostConfig) -> Result<Vec<CostRecord>, HarnessError> {
    match cfg.dimension {
        2 => cost_impl::<2>(cfg),
        3 => cost_impl::<3>(cfg),
        d => Err(HarnessError::BadDimension(d)),
    }
}

/// CSV with header `h,seed,method,bc,err_max,setup_s,solve_s,nnz`.
pub fn write_convergence_csv(
    records: &[ConvergenceRecord],
    w: &mut impl Write,
) -> io::Result<()> {
    writeln!(w, "h,seed,method,bc,err_max,setup_s,solve_s,nnz")?;
    for r in records {
        writeln!(
            w,
            "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{}",
            r.target_h,
            r.seed,
            r.method.name(),
            r.bc.name(),
            r.err_max,
            r.setup_seconds,
            r.solve_seconds,
            r.nnz
        )?;
    }
    Ok(())
}

/// CSV with header `h,n,method,nnz,setup_s,solve_s,matvec_s`.
pub fn write_cost_csv(records: &[CostRecord], w: &mut impl Write) -> io::Result<()> {
    writeln!(w, "h,n,method,nnz,setup_s,solve_s,matvec_s")?;
    for r in records {
        writeln!(
            w,
            "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e}",
            r.target_h,
            r.n,
            r.method.name(),
            r.nnz,
            r.setup_seconds,
            r.solve_seconds,
            r.matvec_seconds
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Command-line interface
// ---------------------------------------------------------------------------

fn parse_dim(s: &str) -> Result<usize, String> {
    match s {
        "2" => Ok(2),
        "3" => Ok(3),
        other => Err(format!("dimension must be 2 or 3, got `{other}`")),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Mps,
    Lsq,
}

impl From<MethodArg> for StencilMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mps => StencilMethod::Mps,
            MethodArg::Lsq => StencilMethod::Lsq,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BcArg {
    Dirichlet,
    Mixed,
}

impl From<BcArg> for BcMode {
    fn from(b: BcArg) -> Self {
        match b {
            BcArg::Dirichlet => BcMode::AllDirichlet,
            BcArg::Mixed => BcMode::MixedNeumannBottom,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Jacobi,
    Gs,
    Bicgstab,
}

impl From<SolverArg> for IterMethod {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Jacobi => IterMethod::Jacobi,
            SolverArg::Gs => IterMethod::GaussSeidel,
            SolverArg::Bicgstab => IterMethod::BiCgStab,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct CloudOpts {
    /// Spatial dimension
    #[arg(long, value_parser = parse_dim, default_value = "2")]
    dim: usize,
    /// Target mesh size
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Minimum pairwise separation (default: h/4)
    #[arg(long)]
    delta_min: Option<f64>,
    /// Cloud generation seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Boundary conditions
    #[arg(long, value_enum, default_value_t = BcArg::Dirichlet)]
    bc: BcArg,
    /// Read this cloud file instead of generating one
    #[arg(long)]
    cloud: Option<PathBuf>,
}

impl CloudOpts {
    fn delta(&self) -> f64 {
        self.delta_min.unwrap_or(0.25 * self.h)
    }
}

#[derive(Args, Debug, Clone)]
struct DiscretizationOpts {
    /// Stencil selection method
    #[arg(long, value_enum, default_value_t = MethodArg::Mps)]
    method: MethodArg,
    /// Distance weight exponent (must exceed 2)
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    /// Multiplier on the cone-criterion candidate radius
    #[arg(long, default_value_t = 1.0)]
    radius_factor: f64,
}

#[derive(Args, Debug, Clone)]
struct SolverOpts {
    /// Iterative solver
    #[arg(long, value_enum, default_value_t = SolverArg::Bicgstab)]
    solver: SolverArg,
    /// Relative residual tolerance
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Iteration cap (0 = automatic)
    #[arg(long, default_value_t = 0)]
    max_iter: usize,
}

#[derive(Parser, Debug)]
#[command(
    name = "mfpois",
    about = "Meshfree finite differences for the Poisson equation: minimal positive stencils vs. weighted least squares",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a classified point cloud (text format)
    Generate {
        #[command(flatten)]
        cloud: CloudOpts,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the global system; writes <out>.mtx and <out>.rhs
    Assemble {
        #[command(flatten)]
        cloud: CloudOpts,
        #[command(flatten)]
        disc: DiscretizationOpts,
        /// Output basename (default: system)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate, assemble and solve; writes the solution vector
    Solve {
        #[command(flatten)]
        cloud: CloudOpts,
        #[command(flatten)]
        disc: DiscretizationOpts,
        #[command(flatten)]
        solver: SolverOpts,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study (CSV)
    Convergence {
        /// Spatial dimension
        #[arg(long, value_parser = parse_dim, default_value = "2")]
        dim: usize,
        /// Restrict to one stencil method (default: both)
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Restrict to one boundary mode (default: both in 2d)
        #[arg(long, value_enum)]
        bc: Option<BcArg>,
        /// Distance weight exponent
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        radius_factor: f64,
        /// Seeds per mesh size
        #[arg(long)]
        seeds_per_h: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// MPS-vs-LSQ setup and solve cost comparison (CSV)
    Cost {
        #[arg(long, value_parser = parse_dim, default_value = "2")]
        dim: usize,
        /// Single mesh size (default: the built-in sequence)
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        radius_factor: f64,
        /// Timed Gauss-Seidel sweeps
        #[arg(long, default_value_t = 200)]
        gs_sweeps: usize,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump one stencil and the geometric criteria verdicts
    StencilDebug {
        #[command(flatten)]
        cloud: CloudOpts,
        #[command(flatten)]
        disc: DiscretizationOpts,
        /// Point index (default: first interior point)
        #[arg(long)]
        point: Option<usize>,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_or_generate<const D: usize>(
    opts: &CloudOpts,
    domain: &DomainSpec<D>,
) -> Result<PointCloud<D>, HarnessError> {
    let cloud = match &opts.cloud {
        Some(path) => {
            let mut reader = BufReader::new(File::open(path)?);
            cloud::read_cloud::<D>(&mut reader)?
        }
        None => generate(domain, opts.h, opts.delta(), opts.seed)?,
    };
    Ok(match BcMode::from(opts.bc) {
        BcMode::AllDirichlet => cloud,
        BcMode::MixedNeumannBottom => with_neumann_bottom(cloud, domain),
    })
}

fn cmd_generate<const D: usize>(
    opts: &CloudOpts,
    out: &Option<PathBuf>,
) -> Result<(), HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let cloud = load_or_generate(opts, &domain)?;
    let report = measure_quality(&cloud, &domain, opts.h / 8.0)?;
    let mut w = open_out(out)?;
    cloud::write_cloud(&cloud, &mut w)?;
    w.flush()?;
    eprintln!(
        "generated {} points: h = {:.4}, min separation = {:.4}, cone failures = {}",
        cloud.len(),
        report.mesh_size,
        report.min_separation,
        report.cone_failures
    );
    Ok(())
}

fn cmd_assemble<const D: usize>(
    opts: &CloudOpts,
    disc: &DiscretizationOpts,
    out: &Option<PathBuf>,
) -> Result<(), HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let cloud = load_or_generate(opts, &domain)?;
    let ms = manufactured(D, opts.bc.into())?;
    let (matrix, rhs_asm) = assemble(
        &cloud,
        &domain,
        disc.method.into(),
        disc.alpha,
        disc.radius_factor,
    )?;
    let unused = assembly::unused_dirichlet(&matrix);
    if !unused.is_empty() {
        eprintln!(
            "warning: {} Dirichlet points are referenced by no stencil: {:?}",
            unused.len(),
            &unused[..unused.len().min(16)]
        );
    }
    let mut outward = [0.0; D];
    outward[D - 1] = -1.0;
    let rhs = rhs_asm.assemble(
        |x| ms.source(x.as_slice()),
        |x| ms.g(x.as_slice()),
        |x| ms.neumann(x.as_slice(), outward.as_slice()),
    );
    let base = out
        .clone()
        .unwrap_or_else(|| PathBuf::from("system"))
        .display()
        .to_string();
    let mut mw = BufWriter::new(File::create(format!("{base}.mtx"))?);
    matrix.write_matrix_market(&mut mw)?;
    mw.flush()?;
    let mut rw = BufWriter::new(File::create(format!("{base}.rhs"))?);
    assembly::write_vector(&rhs, &mut rw)?;
    rw.flush()?;
    eprintln!(
        "assembled {} rows, {} nonzeros -> {base}.mtx, {base}.rhs",
        matrix.n(),
        matrix.nnz()
    );
    Ok(())
}

fn cmd_solve<const D: usize>(
    opts: &CloudOpts,
    disc: &DiscretizationOpts,
    solver: &SolverOpts,
    out: &Option<PathBuf>,
) -> Result<(), HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let cloud = load_or_generate(opts, &domain)?;
    let bc = BcMode::from(opts.bc);
    let ms = manufactured(D, bc)?;
    let (matrix, rhs_asm) = assemble(
        &cloud,
        &domain,
        disc.method.into(),
        disc.alpha,
        disc.radius_factor,
    )?;
    let mut outward = [0.0; D];
    outward[D - 1] = -1.0;
    let rhs = rhs_asm.assemble(
        |x| ms.source(x.as_slice()),
        |x| ms.g(x.as_slice()),
        |x| ms.neumann(x.as_slice(), outward.as_slice()),
    );
    let cfg = SolverConfig {
        method: solver.solver.into(),
        tol: solver.tol,
        max_iter: if solver.max_iter == 0 {
            (30 * matrix.n()).max(20_000)
        } else {
            solver.max_iter
        },
    };
    let (u, report) = solve_iterative(&matrix, &rhs, &cfg, None)?;
    if !report.converged {
        return Err(HarnessError::NotConverged(report.final_residual));
    }
    let mut w = open_out(out)?;
    assembly::write_vector(&u, &mut w)?;
    w.flush()?;
    eprintln!(
        "{}: {} iterations, relative residual {:.3e}, {:.3}s; max interior error vs reference {:.3e}",
        report.method.name(),
        report.iterations,
        report.final_residual,
        report.wall_seconds,
        max_interior_error(&cloud, &ms, &u)
    );
    Ok(())
}

fn cmd_stencil_debug<const D: usize>(
    opts: &CloudOpts,
    disc: &DiscretizationOpts,
    point: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<(), HarnessError> {
    let domain = DomainSpec::<D>::standard();
    let cloud = load_or_generate(opts, &domain)?;
    let center = match point {
        Some(p) if p < cloud.len() => p,
        Some(p) => {
            return Err(HarnessError::Invalid(format!(
                "point {p} out of range (cloud has {} points)",
                cloud.len()
            )))
        }
        None => cloud
            .interior_indices()
            .next()
            .ok_or_else(|| HarnessError::Invalid("cloud has no interior point".into()))?,
    };
    if cloud.role(center) == Role::Dirichlet {
        return Err(HarnessError::Invalid(format!(
            "point {center} is Dirichlet; its row is the identity"
        )));
    }
    let h = cloud::estimate_mesh_size(&cloud, &domain)?;
    let params = ConeCriterionParams::for_dimension(D)?;
    let radius = disc.radius_factor * candidate_radius(h, &params, DEFAULT_RADIUS_SAFETY)?;
    let neigh = cloud::neighbors_within(&cloud, center, radius, &domain);
    if neigh.is_empty() {
        return Err(HarnessError::Invalid(format!(
            "point {center} has no candidates within radius {radius}"
        )));
    }
    let offsets: Vec<Point<D>> = neigh
        .iter()
        .map(|&j| crate::geometry::sub(cloud.point(j), cloud.point(center)))
        .collect();
    let half_space = half_space_check(&offsets)?;
    let cone = cone_criterion_check(&offsets, &params)?;

    let outcome = match cloud.role(center) {
        Role::Interior => {
            let cs = build_constraints(&offsets, disc.alpha, ConstraintKind::Laplace)?;
            match disc.method.into() {
                StencilMethod::Mps => mps_stencil(&cs)?,
                StencilMethod::Lsq => MpsOutcome::Stencil(lsq_stencil(&cs)?),
            }
        }
        Role::Neumann => {
            let frame = neumann_frame(cloud.normal(center).expect("validated"));
            let local: Vec<Point<D>> = offsets
                .iter()
                .map(|off| std::array::from_fn(|a| crate::geometry::dot(&frame[a], off)))
                .collect();
            let cs = build_constraints(&local, disc.alpha, ConstraintKind::NeumannNormal)?;
            neumann_stencil(&cs, disc.method.into())?
        }
        Role::Dirichlet => unreachable!(),
    };

    let mut w = open_out(out)?;
    match outcome {
        MpsOutcome::Stencil(st) => {
            writeln!(w, "center {:.16e}", st.center_coefficient)?;
            let mut entries: Vec<(usize, f64)> = st
                .neighbors
                .iter()
                .zip(&st.coefficients)
                .map(|(local, c)| (neigh[*local], *c))
                .collect();
            entries.sort_by_key(|(j, _)| *j);
            for (j, c) in entries {
                writeln!(w, "{j} {c:.16e}")?;
            }
            writeln!(w, "# point {center} role {:?}", cloud.role(center))?;
            writeln!(
                w,
                "# method {} candidates {} radius {:.6e}",
                st.method.name(),
                neigh.len(),
                radius
            )?;
            if let Some(p) = st.pivots {
                writeln!(w, "# pivots {p}")?;
            }
            writeln!(w, "# half_space {half_space}")?;
            writeln!(w, "# cone_criterion {cone}")?;
            w.flush()?;
            Ok(())
        }
        MpsOutcome::Infeasible(report) => {
            writeln!(w, "# infeasible: no positive stencil exists")?;
            let cert: Vec<String> = report
                .certificate
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            writeln!(w, "# certificate {}", cert.join(" "))?;
            writeln!(w, "# half_space {half_space}")?;
            writeln!(w, "# cone_criterion {cone}")?;
            w.flush()?;
            Err(HarnessError::Invalid(format!(
                "point {center}: no positive stencil exists"
            )))
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Generate { cloud, out } => match cloud.dim {
            2 => cmd_generate::<2>(&cloud, &out),
            3 => cmd_generate::<3>(&cloud, &out),
            d => Err(HarnessError::BadDimension(d)),
        },
        Command::Assemble { cloud, disc, out } => match cloud.dim {
            2 => cmd_assemble::<2>(&cloud, &disc, &out),
            3 => cmd_assemble::<3>(&cloud, &disc, &out),
            d => Err(HarnessError::BadDimension(d)),
        },
        Command::Solve {
            cloud,
            disc,
            solver,
            out,
        } => match cloud.dim {
            2 => cmd_solve::<2>(&cloud, &disc, &solver, &out),
            3 => cmd_solve::<3>(&cloud, &disc, &solver, &out),
            d => Err(HarnessError::BadDimension(d)),
        },
        Command::Convergence {
            dim,
            method,
            bc,
            alpha,
            radius_factor,
            seeds_per_h,
            tol,
            out,
        } => {
            let mut cfg = match dim {
                2 => ConvergenceConfig::default_2d(),
                3 => ConvergenceConfig::default_3d(),
                d => return Err(HarnessError::BadDimension(d)),
            };
            if let Some(m) = method {
                cfg.methods = vec![m.into()];
            }
            if let Some(b) = bc {
                cfg.bc_modes = vec![b.into()];
            }
            if let Some(s) = seeds_per_h {
                cfg.seeds = (1..=s.max(1) as u64).collect();
            }
            cfg.alpha = alpha;
            cfg.radius_factor = radius_factor;
            cfg.solver_tol = tol;
            let records = run_convergence(&cfg)?;
            let mut w = open_out(&out)?;
            write_convergence_csv(&records, &mut w)?;
            w.flush()?;
            for &method in &cfg.methods {
                for &bc in &cfg.bc_modes {
                    eprintln!(
                        "slope {} {}: {:.3}",
                        method.name(),
                        bc.name(),
                        slope_for(&records, method, bc)
                    );
                }
            }
            Ok(())
        }
        Command::Cost {
            dim,
            h,
            seed,
            alpha,
            radius_factor,
            gs_sweeps,
            out,
        } => {
            let mut cfg = CostConfig::default_2d();
            cfg.dimension = dim;
            if dim == 3 {
                cfg.target_hs = vec![0.2];
            }
            if let Some(h) = h {
                cfg.target_hs = vec![h];
            }
            cfg.seed = seed;
            cfg.alpha = alpha;
            cfg.radius_factor = radius_factor;
            cfg.gs_sweeps = gs_sweeps;
            let records = run_cost_comparison(&cfg)?;
            let mut w = open_out(&out)?;
            write_cost_csv(&records, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::StencilDebug {
            cloud,
            disc,
            point,
            out,
        } => match cloud.dim {
            2 => cmd_stencil_debug::<2>(&cloud, &disc, point, &out),
            3 => cmd_stencil_debug::<3>(&cloud, &disc, point, &out),
            d => Err(HarnessError::BadDimension(d)),
        },
    }
}

/// Entry point of the `mfpois` binary. Exit codes: 0 success, 1 numerical
/// failure (infeasible stencil, rank deficiency, non-convergence), 2 usage
/// error.
pub fn cli(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
