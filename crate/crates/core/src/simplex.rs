//! Small dense standard-form LP solver.
//!
//! Solves `min c.x  s.t.  A x = b, x >= 0` with a two-phase revised simplex
//! method. The entering variable follows the steepest reduced cost while
//! the objective makes progress and falls back to Bland's lowest-index rule
//! during degenerate stalls, which prevents cycling without the long pivot
//! walks a pure lowest-index rule takes on wide candidate sets; the leaving
//! variable always breaks ties by the lowest basic index. Infeasible
//! problems yield a Farkas certificate `w` with `A^T w >= 0` and
//! `b^T w < 0`, assembled from the Phase-I dual multipliers.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: matrix is {rows}x{cols}, cost has {cost}, rhs has {rhs}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        cost: usize,
        rhs: usize,
    },
    #[error("LP data contains non-finite entries")]
    NonFinite,
    #[error("LP must have at least one row and one column")]
    Empty,
    #[error("basis matrix became numerically singular")]
    SingularBasis,
    #[error("pivot limit {0} exceeded")]
    PivotLimit(usize),
    #[error("enumeration guard: m = {0} exceeds 14 columns")]
    TooManyColumns(usize),
}

/// `min cost.x  s.t.  matrix x = rhs, x >= 0`.
#[derive(Clone, Debug)]
pub struct StandardLp {
    pub cost: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl StandardLp {
    pub fn new(
        cost: DVector<f64>,
        matrix: DMatrix<f64>,
        rhs: DVector<f64>,
    ) -> Result<Self, LpError> {
        let (k, m) = matrix.shape();
        if k == 0 || m == 0 {
            return Err(LpError::Empty);
        }
        if cost.len() != m || rhs.len() != k {
            return Err(LpError::DimensionMismatch {
                rows: k,
                cols: m,
                cost: cost.len(),
                rhs: rhs.len(),
            });
        }
        if cost.iter().any(|v| !v.is_finite())
            || rhs.iter().any(|v| !v.is_finite())
            || matrix.iter().any(|v| !v.is_finite())
        {
            return Err(LpError::NonFinite);
        }
        Ok(StandardLp { cost, matrix, rhs })
    }

    fn tol_eq(&self) -> f64 {
        1e-10 * (1.0 + self.rhs.amax())
    }
}

/// Nonnegativity slack tolerated on returned solutions.
pub const TOL_SIGN: f64 = 1e-12;
/// Ratio-test denominators below this are treated as zero.
const TOL_PIVOT: f64 = 1e-11;

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal {
        solution: DVector<f64>,
        basis: Vec<usize>,
        objective: f64,
        pivots: usize,
    },
    Infeasible {
        certificate: DVector<f64>,
        pivots: usize,
    },
    Unbounded {
        pivots: usize,
    },
}

/// Validity of a Farkas certificate for `A x = b, x >= 0`:
/// `A^T w >= -tol` componentwise and `b^T w < -tol`.
pub fn farkas_valid(matrix: &DMatrix<f64>, rhs: &DVector<f64>, w: &DVector<f64>, tol: f64) -> bool {
    if w.len() != matrix.nrows() {
        return false;
    }
    let at_w = matrix.transpose() * w;
    at_w.iter().all(|v| *v >= -tol) && rhs.dot(w) < -tol
}

enum CoreStatus {
    Optimal,
    Unbounded,
}

/// One simplex run from a given basic feasible basis. `n_real` columns may
/// enter; columns `>= n_real` (artificials) are locked at zero: rows where
/// they would grow block the step at zero so they pivot out instead.
struct Core<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    c: &'a DVector<f64>,
    n_enter: usize,
    lock_from: usize,
    tol_cost: f64,
}

impl<'a> Core<'a> {
    fn run(
        &self,
        basis: &mut [usize],
        pivots: &mut usize,
        limit: usize,
    ) -> Result<CoreStatus, LpError> {
        let k = self.a.nrows();
        // Anti-cycling: steepest reduced cost while the objective improves,
        // Bland's lowest-index rule once it stalls at a degenerate vertex.
        let mut bland_mode = false;
        let mut stalled = 0usize;
        let mut best_objective = f64::INFINITY;
        loop {
            if *pivots > limit {
                return Err(LpError::PivotLimit(limit));
            }
            let bmat = DMatrix::from_fn(k, k, |r, c| self.a[(r, basis[c])]);
            let bt = bmat.transpose();
            let lu = bmat.lu();
            let xb = lu.solve(self.b).ok_or(LpError::SingularBasis)?;
            let cb = DVector::from_fn(k, |r, _| self.c[basis[r]]);
            let y = bt.lu().solve(&cb).ok_or(LpError::SingularBasis)?;

            let objective = cb.dot(&xb);
            if objective < best_objective - self.tol_cost {
                best_objective = objective;
                stalled = 0;
                bland_mode = false;
            } else {
                stalled += 1;
                if stalled > 2 * (k + 2) {
                    bland_mode = true;
                }
            }

            let mut entering = None;
            let mut steepest = -self.tol_cost;
            for j in 0..self.n_enter {
                if basis.contains(&j) {
                    continue;
                }
                let col = self.a.column(j);
                let mut reduced = self.c[j];
                for r in 0..k {
                    reduced -= y[r] * col[r];
                }
                if reduced < -self.tol_cost {
                    if bland_mode {
                        entering = Some(j);
                        break;
                    }
                    if reduced < steepest {
                        steepest = reduced;
                        entering = Some(j);
                    }
                }
            }
            let Some(j) = entering else {
                return Ok(CoreStatus::Optimal);
            };

            let aj = self.a.column(j).into_owned();
            let d = lu.solve(&aj).ok_or(LpError::SingularBasis)?;

            // Ratio test. Locked (artificial) basic variables must not grow,
            // so rows where they would become positive block at zero.
            let mut best_ratio = f64::INFINITY;
            let mut leaving: Option<usize> = None;
            for p in 0..k {
                let xp = xb[p].max(0.0);
                let ratio = if d[p] > TOL_PIVOT {
                    xp / d[p]
                } else if basis[p] >= self.lock_from && d[p] < -TOL_PIVOT {
                    0.0
                } else {
                    continue;
                };
                let better = match leaving {
                    None => true,
                    Some(q) => {
                        ratio < best_ratio - TOL_PIVOT
                            || (ratio <= best_ratio + TOL_PIVOT && basis[p] < basis[q])
                    }
                };
                if better {
                    best_ratio = ratio;
                    leaving = Some(p);
                }
            }
            let Some(p) = leaving else {
                return Ok(CoreStatus::Unbounded);
            };
            basis[p] = j;
            *pivots += 1;
        }
    }
}

/// Two-phase revised simplex with Farkas certificates.
pub fn solve(lp: &StandardLp) -> Result<LpOutcome, LpError> {
    let checked = StandardLp::new(lp.cost.clone(), lp.matrix.clone(), lp.rhs.clone())?;
    let (k, m) = checked.matrix.shape();
    let tol_eq = checked.tol_eq();
    let limit = 1000 + 200 * (k + m);

    // Flip row signs so the Phase-I rhs is nonnegative.
    let mut signs = vec![1.0; k];
    let mut a_flip = checked.matrix.clone();
    let mut b_flip = checked.rhs.clone();
    for i in 0..k {
        if b_flip[i] < 0.0 {
            signs[i] = -1.0;
            b_flip[i] = -b_flip[i];
            for j in 0..m {
                a_flip[(i, j)] = -a_flip[(i, j)];
            }
        }
    }

    // Phase I: minimize the sum of artificial variables.
    let mut ext = DMatrix::zeros(k, m + k);
    ext.view_mut((0, 0), (k, m)).copy_from(&a_flip);
    for i in 0..k {
        ext[(i, m + i)] = 1.0;
    }
    let mut c1 = DVector::zeros(m + k);
    for i in 0..k {
        c1[m + i] = 1.0;
    }
    let mut basis: Vec<usize> = (m..m + k).collect();
    let mut pivots = 0usize;
    let core1 = Core {
        a: &ext,
        b: &b_flip,
        c: &c1,
        n_enter: m + k,
        lock_from: m + k,
        tol_cost: 1e-10 * 2.0,
    };
    match core1.run(&mut basis, &mut pivots, limit)? {
        CoreStatus::Unbounded => return Err(LpError::SingularBasis),
        CoreStatus::Optimal => {}
    }

    // Phase-I value and duals at the final basis.
    let bmat = DMatrix::from_fn(k, k, |r, c| ext[(r, basis[c])]);
    let xb = bmat.clone().lu().solve(&b_flip).ok_or(LpError::SingularBasis)?;
    let value: f64 = (0..k)
        .filter(|p| basis[*p] >= m)
        .map(|p| xb[p].max(0.0))
        .sum();
    if value > tol_eq {
        let cb = DVector::from_fn(k, |r, _| c1[basis[r]]);
        let y = bmat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or(LpError::SingularBasis)?;
        let certificate = DVector::from_fn(k, |i, _| -signs[i] * y[i]);
        return Ok(LpOutcome::Infeasible {
            certificate,
            pivots,
        });
    }

    // Phase II over the real columns, artificials locked at zero. The cost
    // is normalized so the optimality tolerance is scale-free.
    let cost_scale = checked.cost.amax().max(1e-300);
    let mut c2 = DVector::zeros(m + k);
    for j in 0..m {
        c2[j] = checked.cost[j] / cost_scale;
    }
    let core2 = Core {
        a: &ext,
        b: &b_flip,
        c: &c2,
        n_enter: m,
        lock_from: m,
        tol_cost: 1e-10,
    };
    match core2.run(&mut basis, &mut pivots, limit)? {
        CoreStatus::Unbounded => return Ok(LpOutcome::Unbounded { pivots }),
        CoreStatus::Optimal => {}
    }

    let bmat = DMatrix::from_fn(k, k, |r, c| ext[(r, basis[c])]);
    let xb = bmat.lu().solve(&b_flip).ok_or(LpError::SingularBasis)?;
    let mut solution = DVector::zeros(m);
    for p in 0..k {
        if basis[p] < m {
            let v = xb[p];
            solution[basis[p]] = if v.abs() <= TOL_SIGN { 0.0 } else { v };
        }
    }
    let residual = (&checked.matrix * &solution - &checked.rhs).amax();
    if residual > 1e3 * tol_eq {
        return Err(LpError::SingularBasis);
    }
    let mut real_basis: Vec<usize> = basis.iter().copied().filter(|j| *j < m).collect();
    real_basis.sort_unstable();
    let objective = checked.cost.dot(&solution);
    Ok(LpOutcome::Optimal {
        solution,
        basis: real_basis,
        objective,
        pivots,
    })
}

/// A basic feasible solution found by enumeration.
#[derive(Clone, Debug)]
pub struct BasicSolution {
    pub basis: Vec<usize>,
    pub solution: DVector<f64>,
    pub objective: f64,
}

/// Brute-force oracle: enumerate column subsets of size up to `k`, solve the
/// resulting systems exactly, and keep the nonnegative consistent solutions.
/// Rank-deficient subsets are skipped (their solutions reappear under a
/// smaller independent subset). Guarded to `m <= 14`.
pub fn enumerate_basic_solutions(lp: &StandardLp) -> Result<Vec<BasicSolution>, LpError> {
    let checked = StandardLp::new(lp.cost.clone(), lp.matrix.clone(), lp.rhs.clone())?;
    let (k, m) = checked.matrix.shape();
    if m > 14 {
        return Err(LpError::TooManyColumns(m));
    }
    let tol_eq = checked.tol_eq();
    let mut found: Vec<BasicSolution> = Vec::new();

    let consider = |cols: &[usize], found: &mut Vec<BasicSolution>| {
        let x = if cols.is_empty() {
            DVector::zeros(0)
        } else {
            let a_s = DMatrix::from_fn(k, cols.len(), |r, c| checked.matrix[(r, cols[c])]);
            let svd = a_s.clone().svd(true, true);
            let smax = svd.singular_values.amax();
            let rank = svd
                .singular_values
                .iter()
                .filter(|s| **s > 1e-10 * smax.max(1e-300))
                .count();
            if rank < cols.len() {
                return;
            }
            match svd.solve(&checked.rhs, 1e-10 * smax.max(1e-300)) {
                Ok(x) => x,
                Err(_) => return,
            }
        };
        let mut full = DVector::zeros(m);
        for (i, &j) in cols.iter().enumerate() {
            full[j] = x[i];
        }
        if (&checked.matrix * &full - &checked.rhs).amax() > tol_eq.max(1e-9) {
            return;
        }
        if full.iter().any(|v| *v < -TOL_SIGN) {
            return;
        }
        for f in found.iter() {
            if (&f.solution - &full).amax() <= 1e-9 * (1.0 + full.amax()) {
                return;
            }
        }
        let objective = checked.cost.dot(&full);
        found.push(BasicSolution {
            basis: cols.to_vec(),
            solution: full,
            objective,
        });
    };

    let max_size = k.min(m);
    for size in 0..=max_size {
        if size == 0 {
            consider(&[], &mut found);
            continue;
        }
        let mut idx: Vec<usize> = (0..size).collect();
        'combos: loop {
            consider(&idx, &mut found);
            // lexicographically next combination of `size` out of `m`
            let mut i = size;
            loop {
                if i == 0 {
                    break 'combos;
                }
                i -= 1;
                if idx[i] < m - size + i {
                    idx[i] += 1;
                    for j in i + 1..size {
                        idx[j] = idx[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    found.sort_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap());
    Ok(found)
}
