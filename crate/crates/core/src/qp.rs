//! Convex quadratic programs over polyhedra.
//!
//! `min ½xᵀQx + cᵀx  s.t.  l ≤ x ≤ u, A_eq x = b_eq, A_in x ≤ b_in`.
//!
//! The interior-point solve is delegated to Clarabel. Its answer is then
//! polished: the rows whose multiplier dominates their slack are taken as
//! the active set and the equality-constrained KKT system on that set is
//! solved directly, which brings the KKT residual down to round-off on the
//! small dense problems this crate produces.

use std::collections::HashMap;
use std::fmt;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::LinearFeasibleSet;

/// KKT threshold for an `Optimal` status.
pub const KKT_TOLERANCE: f64 = 1e-8;

const PSD_REGULARIZATION: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    /// Symmetric positive semidefinite `d × d` matrix.
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub feasible_set: LinearFeasibleSet,
}

/// Identifies one constraint of a QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowId {
    Lower(usize),
    Upper(usize),
    Equality(usize),
    Inequality(usize),
}

impl fmt::Display for RowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowId::Lower(j) => write!(f, "lower/{j}"),
            RowId::Upper(j) => write!(f, "upper/{j}"),
            RowId::Equality(i) => write!(f, "eq/{i}"),
            RowId::Inequality(i) => write!(f, "ineq/{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    /// Solved, but the KKT residual stayed above [`KKT_TOLERANCE`].
    Inaccurate,
    Infeasible { certificate: RowId },
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x_star: Vec<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt_residual: f64,
}

impl QpSolution {
    pub fn is_usable(&self) -> bool {
        matches!(self.status, QpStatus::Optimal | QpStatus::Inaccurate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, v)| v * x[j]).sum()
    }
}

/// Sparse assembly form shared by [`solve_qp`] and the SQP subproblems.
#[derive(Debug, Clone, Default)]
pub(crate) struct SparseQp {
    pub n: usize,
    /// Hessian entries; duplicates are summed and `(i, j)`/`(j, i)` refer to
    /// the same symmetric entry, so callers pass the upper triangle only.
    pub hessian: Vec<(usize, usize, f64)>,
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq: Vec<SparseRow>,
    pub le: Vec<SparseRow>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QpOptions {
    pub tolerance: f64,
    pub polish: bool,
    pub max_iter: u32,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            polish: true,
            max_iter: 200,
        }
    }
}

/// Constraint rows in solver order: all equalities, then all inequalities.
struct Rows {
    eq: Vec<(RowId, SparseRow)>,
    le: Vec<(RowId, SparseRow)>,
}

impl Rows {
    fn build(qp: &SparseQp) -> Self {
        let mut eq = Vec::new();
        let mut le = Vec::new();
        for j in 0..qp.n {
            let (l, u) = (qp.lower[j], qp.upper[j]);
            let unit = |s: f64, rhs: f64| SparseRow {
                idx: vec![j],
                val: vec![s],
                rhs,
            };
            if l == u {
                eq.push((RowId::Lower(j), unit(1.0, l)));
                continue;
            }
            if l.is_finite() {
                le.push((RowId::Lower(j), unit(-1.0, -l)));
            }
            if u.is_finite() {
                le.push((RowId::Upper(j), unit(1.0, u)));
            }
        }
        eq.extend(qp.eq.iter().cloned().enumerate().map(|(i, r)| (RowId::Equality(i), r)));
        le.extend(qp.le.iter().cloned().enumerate().map(|(i, r)| (RowId::Inequality(i), r)));
        Self { eq, le }
    }

    fn all(&self) -> impl Iterator<Item = &(RowId, SparseRow)> {
        self.eq.iter().chain(&self.le)
    }

    fn len(&self) -> usize {
        self.eq.len() + self.le.len()
    }
}

struct Hessian {
    entries: Vec<(usize, usize, f64)>,
}

impl Hessian {
    /// Consolidated upper-triangular entries.
    fn new(raw: &[(usize, usize, f64)]) -> Self {
        let mut map: HashMap<(usize, usize), f64> = HashMap::new();
        for &(i, j, v) in raw {
            let key = if i <= j { (i, j) } else { (j, i) };
            *map.entry(key).or_insert(0.0) += v;
        }
        let mut entries: Vec<_> = map.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        Self { entries }
    }

    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for &(i, j, v) in &self.entries {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    fn dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }
}

fn objective(h: &Hessian, linear: &[f64], x: &[f64]) -> f64 {
    let hx = h.mul(x);
    x.iter()
        .zip(&hx)
        .zip(linear)
        .map(|((xi, hi), ci)| 0.5 * xi * hi + ci * xi)
        .sum()
}

/// Max of stationarity, primal feasibility, dual sign and complementarity.
fn kkt_residual(h: &Hessian, linear: &[f64], rows: &Rows, x: &[f64], duals: &[f64]) -> f64 {
    let mut grad: Vec<f64> = h.mul(x).iter().zip(linear).map(|(a, b)| a + b).collect();
    for ((_, row), &z) in rows.all().zip(duals) {
        for (&j, v) in row.idx.iter().zip(&row.val) {
            grad[j] += v * z;
        }
    }
    let mut res = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for (_, row) in &rows.eq {
        res = res.max((row.dot(x) - row.rhs).abs());
    }
    for ((_, row), &z) in rows.le.iter().zip(&duals[rows.eq.len()..]) {
        let slack = row.rhs - row.dot(x);
        res = res.max((-slack).max(0.0)).max((-z).max(0.0)).max((z * slack).abs());
    }
    res
}

/// Solves the KKT system with the given working set held at equality.
fn polish(
    h: &Hessian,
    linear: &[f64],
    rows: &Rows,
    n: usize,
    active: &[bool],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let working: Vec<usize> = (0..rows.len())
        .filter(|&k| k < rows.eq.len() || active[k])
        .collect();
    let m = working.len();
    if m > n + rows.eq.len() || n + m > 800 {
        return None;
    }
    let all: Vec<&SparseRow> = rows.all().map(|(_, r)| r).collect();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&h.dense(n));
    let mut rhs = DVector::zeros(n + m);
    for j in 0..n {
        rhs[j] = -linear[j];
    }
    for (w, &k) in working.iter().enumerate() {
        let row = all[k];
        for (&j, v) in row.idx.iter().zip(&row.val) {
            kkt[(n + w, j)] += v;
            kkt[(j, n + w)] += v;
        }
        rhs[n + w] = row.rhs;
    }
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let mut duals = vec![0.0; rows.len()];
    for (w, &k) in working.iter().enumerate() {
        duals[k] = sol[n + w];
    }
    Some((x, duals))
}

pub(crate) fn solve_sparse(qp: &SparseQp, opts: QpOptions) -> Result<QpSolution> {
    let n = qp.n;
    if qp.linear.len() != n || qp.lower.len() != n || qp.upper.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: qp.linear.len(),
        });
    }
    if let Some(j) = (0..n).find(|&j| !(qp.lower[j] <= qp.upper[j])) {
        return Ok(QpSolution {
            x_star: vec![f64::NAN; n],
            objective: f64::NAN,
            status: QpStatus::Infeasible {
                certificate: RowId::Lower(j),
            },
            kkt_residual: f64::INFINITY,
        });
    }
    let h = Hessian::new(&qp.hessian);
    let rows = Rows::build(qp);

    let p = {
        let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
        for &(i, j, v) in &h.entries {
            ii.push(i);
            jj.push(j);
            vv.push(v);
        }
        CscMatrix::new_from_triplets(n, n, ii, jj, vv)
    };
    let (a, b) = {
        let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, (_, row)) in rows.all().enumerate() {
            for (&j, &v) in row.idx.iter().zip(&row.val) {
                ii.push(r);
                jj.push(j);
                vv.push(v);
            }
            b.push(row.rhs);
        }
        (CscMatrix::new_from_triplets(rows.len(), n, ii, jj, vv), b)
    };
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if !rows.eq.is_empty() {
        cones.push(ZeroConeT(rows.eq.len()));
    }
    if !rows.le.is_empty() {
        cones.push(NonnegativeConeT(rows.le.len()));
    }
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(opts.max_iter)
        .tol_gap_abs(opts.tolerance)
        .tol_gap_rel(opts.tolerance)
        .tol_feas(opts.tolerance)
        .presolve_enable(false)
        .build()
        .map_err(|e| Error::QpFailed(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &qp.linear, &a, &b, &cones, settings)
        .map_err(|e| Error::QpFailed(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved | SolverStatus::InsufficientProgress => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            // Farkas certificate: the row carrying the largest multiplier.
            let k = (0..rows.len())
                .max_by(|&a, &b| sol.z[a].abs().total_cmp(&sol.z[b].abs()))
                .unwrap_or(0);
            let certificate = rows.all().nth(k).map(|(id, _)| *id).unwrap_or(RowId::Lower(0));
            return Ok(QpSolution {
                x_star: sol.x.clone(),
                objective: f64::NAN,
                status: QpStatus::Infeasible { certificate },
                kkt_residual: f64::INFINITY,
            });
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => {
            let x = sol.x.clone();
            return Ok(QpSolution {
                objective: objective(&h, &qp.linear, &x),
                kkt_residual: kkt_residual(&h, &qp.linear, &rows, &x, &sol.z),
                x_star: x,
                status: QpStatus::MaxIter,
            });
        }
        other => return Err(Error::QpFailed(format!("interior point status {other:?}"))),
    }

    let mut x = sol.x.clone();
    let mut res = kkt_residual(&h, &qp.linear, &rows, &x, &sol.z);
    if opts.polish && res > 0.0 {
        let active: Vec<bool> = (0..rows.len())
            .map(|k| k >= rows.eq.len() && sol.z[k] > sol.s[k])
            .collect();
        if let Some((px, pz)) = polish(&h, &qp.linear, &rows, n, &active) {
            let pres = kkt_residual(&h, &qp.linear, &rows, &px, &pz);
            if pres < res {
                x = px;
                res = pres;
            }
        }
    }
    Ok(QpSolution {
        objective: objective(&h, &qp.linear, &x),
        status: if res <= KKT_TOLERANCE {
            QpStatus::Optimal
        } else {
            QpStatus::Inaccurate
        },
        kkt_residual: res,
        x_star: x,
    })
}

fn dense_rows(rows: &[crate::problem::AffineRow]) -> Vec<SparseRow> {
    rows.iter()
        .map(|r| {
            let (idx, val) = r
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .unzip();
            SparseRow { idx, val, rhs: r.rhs }
        })
        .collect()
}

/// Solves a dense convex QP.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution> {
    let d = qp.c.len();
    if qp.q.nrows() != d || qp.q.ncols() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: qp.q.nrows(),
        });
    }
    qp.feasible_set.validate(d)?;
    let scale = qp.q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..d {
        for j in 0..i {
            if (qp.q[(i, j)] - qp.q[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::QpFailed(format!("Q is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut q = (&qp.q + qp.q.transpose()) * 0.5;
    if d > 0 {
        let min_eig = q.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-8 * scale {
            return Err(Error::QpFailed(format!("Q is indefinite (eigenvalue {min_eig:e})")));
        }
        if min_eig < 0.0 {
            for i in 0..d {
                q[(i, i)] += PSD_REGULARIZATION;
            }
        }
    }
    let mut hessian = Vec::new();
    for j in 0..d {
        for i in 0..=j {
            if q[(i, j)] != 0.0 {
                hessian.push((i, j, q[(i, j)]));
            }
        }
    }
    let sparse = SparseQp {
        n: d,
        hessian,
        linear: qp.c.clone(),
        lower: qp.feasible_set.lower.clone(),
        upper: qp.feasible_set.upper.clone(),
        eq: dense_rows(&qp.feasible_set.eq_rows),
        le: dense_rows(&qp.feasible_set.ineq_rows),
    };
    solve_sparse(&sparse, QpOptions::default())
}

/// Euclidean projection onto `set`.
pub fn project(x: &[f64], set: &LinearFeasibleSet) -> Result<Vec<f64>> {
    set.validate(x.len())?;
    if set.is_box_only() {
        if let Some(j) = (0..x.len()).find(|&j| !(set.lower[j] <= set.upper[j])) {
            return Err(Error::QpInfeasible { row: j });
        }
        return Ok(set.clamp(x));
    }
    let d = x.len();
    let qp = QuadraticProgram {
        q: DMatrix::identity(d, d) * 2.0,
        c: x.iter().map(|v| -2.0 * v).collect(),
        feasible_set: set.clone(),
    };
    let sol = solve_qp(&qp)?;
    match sol.status {
        QpStatus::Infeasible { certificate } => Err(Error::QpInfeasible {
            row: match certificate {
                RowId::Lower(j) | RowId::Upper(j) | RowId::Equality(j) | RowId::Inequality(j) => j,
            },
        }),
        QpStatus::MaxIter => Err(Error::QpFailed("projection did not converge".into())),
        _ => Ok(sol.x_star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::AffineRow;

    fn boxed(l: Vec<f64>, u: Vec<f64>) -> LinearFeasibleSet {
        LinearFeasibleSet::boxed(l, u).unwrap()
    }

    #[test]
    fn clamp_example() {
        // min ‖x − [2, −3]‖² s.t. x ≥ 0
        let qp = QuadraticProgram {
            q: DMatrix::identity(2, 2) * 2.0,
            c: vec![-4.0, 6.0],
            feasible_set: boxed(vec![0.0, 0.0], vec![f64::INFINITY; 2]),
        };
        let s = solve_qp(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x_star[0] - 2.0).abs() < 1e-9 && s.x_star[1].abs() < 1e-9);
        assert!(s.kkt_residual <= KKT_TOLERANCE);
    }

    #[test]
    fn equality_example() {
        let mut set = LinearFeasibleSet::unbounded(1);
        set.eq_rows.push(AffineRow {
            coeffs: vec![1.0],
            rhs: 5.0,
        });
        let qp = QuadraticProgram {
            q: DMatrix::from_element(1, 1, 2.0),
            c: vec![0.0],
            feasible_set: set,
        };
        let s = solve_qp(&qp).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x_star[0] - 5.0).abs() < 1e-10);
        // the solver minimizes ½xᵀQx = x²
        assert!((s.objective - 25.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_rows_are_reported() {
        let mut set = LinearFeasibleSet::boxed(vec![0.0], vec![1.0]).unwrap();
        set.eq_rows.push(AffineRow {
            coeffs: vec![1.0],
            rhs: 3.0,
        });
        let qp = QuadraticProgram {
            q: DMatrix::from_element(1, 1, 1.0),
            c: vec![0.0],
            feasible_set: set.clone(),
        };
        let s = solve_qp(&qp).unwrap();
        assert!(matches!(s.status, QpStatus::Infeasible { .. }));
        assert!(project(&[0.5], &set).is_err());
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let mut q = DMatrix::identity(2, 2);
        q[(0, 1)] = 1.0;
        let qp = QuadraticProgram {
            q,
            c: vec![0.0; 2],
            feasible_set: LinearFeasibleSet::unbounded(2),
        };
        assert!(solve_qp(&qp).is_err());
        let qp = QuadraticProgram {
            q: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])),
            c: vec![0.0; 2],
            feasible_set: boxed(vec![-1.0; 2], vec![1.0; 2]),
        };
        assert!(solve_qp(&qp).is_err());
    }

    #[test]
    fn projection_examples() {
        let set = boxed(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert_eq!(project(&[3.0, -3.0], &set).unwrap(), vec![1.0, 0.0]);
        assert_eq!(project(&[0.25, 0.5], &set).unwrap(), vec![0.25, 0.5]);

        // onto the hyperplane x₁ + x₂ = 1: x − (a·x − b)/‖a‖² a
        let mut plane = LinearFeasibleSet::unbounded(2);
        plane.eq_rows.push(AffineRow {
            coeffs: vec![1.0, 1.0],
            rhs: 1.0,
        });
        let p = project(&[0.0, 0.0], &plane).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-10 && (p[1] - 0.5).abs() < 1e-10);
        let again = project(&p, &plane).unwrap();
        assert!((again[0] - p[0]).abs() < 1e-10 && (again[1] - p[1]).abs() < 1e-10);
    }

    #[test]
    fn general_inequality_rows() {
        // min ‖x − [1, 1]‖² s.t. x₁ + x₂ ≤ 1 → [0.5, 0.5]
        let mut set = LinearFeasibleSet::unbounded(2);
        set.ineq_rows.push(AffineRow {
            coeffs: vec![1.0, 1.0],
            rhs: 1.0,
        });
        let p = project(&[1.0, 1.0], &set).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-10 && (p[1] - 0.5).abs() < 1e-10);
    }
}
