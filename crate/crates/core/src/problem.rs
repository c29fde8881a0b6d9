//! Sum-structured constrained programs and their exact-penalty form.
//!
//! A program is `min Σ f_i(x)` subject to `g_i(x) ≤ 0`, `h_i(x) = 0` and
//! `x ∈ C` with `C` a polyhedron. Nonlinear constraints are moved into the
//! objective as `μ·max(0, g)` and `μ·|h|`; `C` is only ever handled by
//! projection or inside a QP.
//!
//! Terms are indexed in one unified sequence: costs first, then
//! inequalities, then equalities. Batches passed to the gradient routines
//! refer to that indexing.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, EvalError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Cost,
    Inequality,
    Equality,
}

impl TermKind {
    pub fn is_constraint(self) -> bool {
        !matches!(self, TermKind::Cost)
    }
}

impl fmt::Display for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermKind::Cost => "cost",
            TermKind::Inequality => "inequality",
            TermKind::Equality => "equality",
        })
    }
}

/// Residual form of a cost term `f = ‖r‖²`, used for Gauss-Newton models.
#[derive(Debug, Clone)]
pub struct Residual {
    pub r: Vec<f64>,
    /// Row-major `r.len() × local_dim` Jacobian.
    pub jacobian: Vec<f64>,
}

/// A scalar function of a subset of the decision variables.
///
/// Implementations see only the local slice `x[vars]` and must be pure.
pub trait TermFunction: Send + Sync {
    fn value(&self, local: &[f64]) -> Result<f64, EvalError> {
        let mut g = vec![0.0; local.len()];
        self.value_grad(local, &mut g)
    }

    /// Value and gradient with respect to the local variables.
    fn value_grad(&self, local: &[f64], grad: &mut [f64]) -> Result<f64, EvalError>;

    /// Residual structure, for cost terms that are a sum of squares.
    fn residual(&self, _local: &[f64]) -> Option<Result<Residual, EvalError>> {
        None
    }
}

struct FnTerm<F>(F);

impl<F> TermFunction for FnTerm<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync,
{
    fn value_grad(&self, local: &[f64], grad: &mut [f64]) -> Result<f64, EvalError> {
        let (v, g) = (self.0)(local);
        if g.len() != grad.len() {
            return Err(EvalError::new("gradient length mismatch"));
        }
        grad.copy_from_slice(&g);
        Ok(v)
    }
}

struct ResidualFnTerm<F>(F);

impl<F> TermFunction for ResidualFnTerm<F>
where
    F: Fn(&[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync,
{
    fn value_grad(&self, local: &[f64], grad: &mut [f64]) -> Result<f64, EvalError> {
        let (r, jac) = (self.0)(local);
        let n = local.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (k, rk) in r.iter().enumerate() {
            for j in 0..n {
                grad[j] += 2.0 * rk * jac[k * n + j];
            }
        }
        Ok(r.iter().map(|v| v * v).sum())
    }

    fn residual(&self, local: &[f64]) -> Option<Result<Residual, EvalError>> {
        let (r, jacobian) = (self.0)(local);
        Some(Ok(Residual { r, jacobian }))
    }
}

/// One `f_i`, `g_i` or `h_i` of a program.
#[derive(Clone)]
pub struct ScalarTerm {
    kind: TermKind,
    label: String,
    vars: Vec<usize>,
    func: Arc<dyn TermFunction>,
}

impl fmt::Debug for ScalarTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarTerm")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("vars", &self.vars)
            .finish()
    }
}

impl ScalarTerm {
    pub fn new(
        kind: TermKind,
        label: impl Into<String>,
        vars: Vec<usize>,
        func: Arc<dyn TermFunction>,
    ) -> Self {
        Self {
            kind,
            label: label.into(),
            vars,
            func,
        }
    }

    /// Term from a closure returning `(value, local gradient)`.
    pub fn from_fn<F>(kind: TermKind, label: impl Into<String>, vars: Vec<usize>, f: F) -> Self
    where
        F: Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'static,
    {
        Self::new(kind, label, vars, Arc::new(FnTerm(f)))
    }

    /// Sum-of-squares cost from a closure returning `(r, row-major Jacobian)`.
    pub fn from_residual_fn<F>(label: impl Into<String>, vars: Vec<usize>, f: F) -> Self
    where
        F: Fn(&[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    {
        Self::new(TermKind::Cost, label, vars, Arc::new(ResidualFnTerm(f)))
    }

    pub fn kind(&self) -> TermKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Indices of the decision variables this term depends on.
    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn gather(&self, x: &[f64]) -> Vec<f64> {
        self.vars.iter().map(|&j| x[j]).collect()
    }

    fn wrap(&self, e: EvalError) -> Error {
        Error::TermEvaluation {
            label: self.label.clone(),
            source: e,
        }
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let v = self.func.value(&self.gather(x)).map_err(|e| self.wrap(e))?;
        self.check_finite(v)
    }

    /// Value and gradient over the term's local variables.
    pub fn value_local_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let local = self.gather(x);
        let mut g = vec![0.0; local.len()];
        let v = self
            .func
            .value_grad(&local, &mut g)
            .map_err(|e| self.wrap(e))?;
        Ok((self.check_finite(v)?, g))
    }

    /// Value and dense gradient of length `x.len()`.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, local) = self.value_local_grad(x)?;
        let mut g = vec![0.0; x.len()];
        for (&j, gj) in self.vars.iter().zip(&local) {
            g[j] += gj;
        }
        Ok((v, g))
    }

    pub fn residual(&self, x: &[f64]) -> Option<Result<Residual>> {
        self.func
            .residual(&self.gather(x))
            .map(|r| r.map_err(|e| self.wrap(e)))
    }

    fn check_finite(&self, v: f64) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.wrap(EvalError::new("non-finite value")))
        }
    }
}

/// One affine row `a·x = b` or `a·x ≤ b`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl AffineRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.rhs
    }
}

/// The polyhedron `C`: box bounds plus affine equality and inequality rows.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFeasibleSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq_rows: Vec<AffineRow>,
    pub ineq_rows: Vec<AffineRow>,
}

impl LinearFeasibleSet {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
        }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = Self {
            lower,
            upper,
            eq_rows: Vec::new(),
            ineq_rows: Vec::new(),
        };
        set.validate(set.lower.len())?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_box_only(&self) -> bool {
        self.eq_rows.is_empty() && self.ineq_rows.is_empty()
    }

    /// Pins coordinate `j` to `value` (lower = upper).
    pub fn pin(&mut self, j: usize, value: f64) {
        self.lower[j] = value;
        self.upper[j] = value;
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: self.lower.len().min(self.upper.len()),
            });
        }
        if let Some(j) = (0..dim).find(|&j| !(self.lower[j] <= self.upper[j])) {
            return Err(Error::InvalidProgram(format!(
                "bound {j}: lower {} > upper {}",
                self.lower[j], self.upper[j]
            )));
        }
        for row in self.eq_rows.iter().chain(&self.ineq_rows) {
            if row.coeffs.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: row.coeffs.len(),
                });
            }
        }
        Ok(())
    }

    /// Clamps to the box. Exact projection when the set is box-only.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| v.max(self.lower[j]).min(self.upper[j]))
            .collect()
    }

    /// `(label, violation)` for every bound and row, in a fixed order.
    pub fn violations(&self, x: &[f64]) -> Vec<(String, f64)> {
        let mut out = Vec::with_capacity(x.len() + self.eq_rows.len() + self.ineq_rows.len());
        for (j, &v) in x.iter().enumerate() {
            let viol = (self.lower[j] - v).max(v - self.upper[j]).max(0.0);
            out.push((format!("bound/{j}"), viol));
        }
        for (i, row) in self.eq_rows.iter().enumerate() {
            out.push((format!("affine_eq/{i}"), row.eval(x).abs()));
        }
        for (i, row) in self.ineq_rows.iter().enumerate() {
            out.push((format!("affine_ineq/{i}"), row.eval(x).max(0.0)));
        }
        out
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.violations(x)
            .into_iter()
            .fold(0.0, |m, (_, v)| m.max(v))
    }
}

/// Penalty continuation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PenaltyConfig {
    pub mu_ladder: Vec<f64>,
    /// Sharpness `w` of the logistic penalty-gradient approximation.
    pub smoothing_w: f64,
    /// Constraint satisfaction threshold.
    pub tolerance: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            mu_ladder: (2..=12).map(|e| 10f64.powi(e)).collect(),
            smoothing_w: 100.0,
            tolerance: 1e-3,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mu_ladder.is_empty() || self.mu_ladder.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::InvalidConfig("mu ladder must be non-empty and positive".into()));
        }
        if self.mu_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("mu ladder must be strictly increasing".into()));
        }
        if !(self.smoothing_w > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("smoothing_w and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// `min Σ f_i  s.t.  g_i ≤ 0, h_i = 0, x ∈ C`.
#[derive(Debug, Clone)]
pub struct SumStructuredProgram {
    dim: usize,
    costs: Vec<ScalarTerm>,
    ineqs: Vec<ScalarTerm>,
    eqs: Vec<ScalarTerm>,
    feasible_set: LinearFeasibleSet,
}

impl SumStructuredProgram {
    pub fn new(
        dim: usize,
        costs: Vec<ScalarTerm>,
        ineqs: Vec<ScalarTerm>,
        eqs: Vec<ScalarTerm>,
        feasible_set: LinearFeasibleSet,
    ) -> Result<Self> {
        if costs.len() + ineqs.len() + eqs.len() == 0 {
            return Err(Error::InvalidProgram("program has no terms".into()));
        }
        let check = |terms: &[ScalarTerm], kind: TermKind| -> Result<()> {
            for t in terms {
                if t.kind != kind {
                    return Err(Error::InvalidProgram(format!(
                        "term `{}` is a {} but was listed as {}",
                        t.label, t.kind, kind
                    )));
                }
                if let Some(&j) = t.vars.iter().find(|&&j| j >= dim) {
                    return Err(Error::InvalidProgram(format!(
                        "term `{}` references variable {j} >= {dim}",
                        t.label
                    )));
                }
            }
            Ok(())
        };
        check(&costs, TermKind::Cost)?;
        check(&ineqs, TermKind::Inequality)?;
        check(&eqs, TermKind::Equality)?;
        feasible_set.validate(dim)?;
        Ok(Self {
            dim,
            costs,
            ineqs,
            eqs,
            feasible_set,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.costs.len() + self.ineqs.len() + self.eqs.len()
    }

    pub fn costs(&self) -> &[ScalarTerm] {
        &self.costs
    }

    pub fn ineqs(&self) -> &[ScalarTerm] {
        &self.ineqs
    }

    pub fn eqs(&self) -> &[ScalarTerm] {
        &self.eqs
    }

    pub fn feasible_set(&self) -> &LinearFeasibleSet {
        &self.feasible_set
    }

    /// Term `i` in the unified cost/inequality/equality order.
    pub fn term(&self, i: usize) -> &ScalarTerm {
        let (nf, ng) = (self.costs.len(), self.ineqs.len());
        if i < nf {
            &self.costs[i]
        } else if i < nf + ng {
            &self.ineqs[i - nf]
        } else {
            &self.eqs[i - nf - ng]
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = &ScalarTerm> {
        self.costs.iter().chain(&self.ineqs).chain(&self.eqs)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Raw task cost `Σ f_i(x)`.
    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.costs.iter().map(|t| t.value(x)).sum()
    }
}

/// `p_g(y) = max(0, y)` and `p_h(y) = |y|`. Costs pass through unchanged.
pub fn exact_penalty(kind: TermKind, y: f64) -> f64 {
    match kind {
        TermKind::Cost => y,
        TermKind::Inequality => y.max(0.0),
        TermKind::Equality => y.abs(),
    }
}

/// Scale `s(y)` of the logistic penalty gradient: `-1 + 2σ(wy) = tanh(wy/2)`,
/// zero for inactive inequalities.
pub fn smooth_penalty_scale(kind: TermKind, y: f64, w: f64) -> f64 {
    match kind {
        TermKind::Cost => 1.0,
        TermKind::Inequality if y <= 0.0 => 0.0,
        _ => (0.5 * w * y).tanh(),
    }
}

pub fn smooth_penalty_gradient(kind: TermKind, y: f64, grad_y: &[f64], w: f64) -> Vec<f64> {
    let s = smooth_penalty_scale(kind, y, w);
    grad_y.iter().map(|g| s * g).collect()
}

/// Antiderivative of [`smooth_penalty_scale`]: `|y| + (2/w)·ln(1 + e^{-w|y|})`
/// for equalities, shifted to vanish at `y ≤ 0` for inequalities.
pub fn smooth_penalty(kind: TermKind, y: f64, w: f64) -> f64 {
    let soft_abs = |y: f64| y.abs() + (2.0 / w) * (-w * y.abs()).exp().ln_1p();
    match kind {
        TermKind::Cost => y,
        TermKind::Equality => soft_abs(y),
        TermKind::Inequality if y <= 0.0 => 0.0,
        TermKind::Inequality => soft_abs(y) - (2.0 / w) * std::f64::consts::LN_2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedValue {
    pub value: f64,
    /// `F_i(x)` in unified order: `f_i`, `μ·p_g(g_i)`, `μ·p_h(h_i)`.
    pub per_term: Vec<f64>,
}

/// `Σ f_i + μ Σ max(0, g_i) + μ Σ |h_i|`.
pub fn penalized_objective(program: &SumStructuredProgram, x: &[f64], mu: f64) -> Result<PenalizedValue> {
    program.check_dim(x)?;
    let mut per_term = Vec::with_capacity(program.n_terms());
    for t in program.terms() {
        let y = t.value(x)?;
        per_term.push(match t.kind {
            TermKind::Cost => y,
            k => mu * exact_penalty(k, y),
        });
    }
    Ok(PenalizedValue {
        value: per_term.iter().sum(),
        per_term,
    })
}

/// Penalized objective with the smooth penalties over a batch; its gradient
/// is exactly [`penalized_gradient`].
pub fn smoothed_penalized_objective(
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
    batch: &[usize],
    w: f64,
) -> Result<f64> {
    program.check_dim(x)?;
    let mut total = 0.0;
    for &i in batch {
        let t = program.term(i);
        let y = t.value(x)?;
        total += match t.kind {
            TermKind::Cost => y,
            k => mu * smooth_penalty(k, y, w),
        };
    }
    Ok(total)
}

/// `∇F_i(x)` over the term's local variables, with constraints routed
/// through the smooth penalty gradient and scaled by `μ`.
pub fn term_penalized_gradient(
    term: &ScalarTerm,
    x: &[f64],
    mu: f64,
    w: f64,
) -> Result<(f64, Vec<f64>)> {
    let (y, mut g) = term.value_local_grad(x)?;
    match term.kind {
        TermKind::Cost => Ok((y, g)),
        k => {
            let s = mu * smooth_penalty_scale(k, y, w);
            g.iter_mut().for_each(|v| *v *= s);
            Ok((mu * smooth_penalty(k, y, w), g))
        }
    }
}

/// Smoothed value and gradient over a batch, accumulated in batch order.
pub fn smoothed_value_and_gradient(
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
    batch: &[usize],
    w: f64,
) -> Result<(f64, Vec<f64>)> {
    program.check_dim(x)?;
    let mut grad = vec![0.0; program.dim];
    let mut value = 0.0;
    for &i in batch {
        let t = program.term(i);
        let (v, g) = term_penalized_gradient(t, x, mu, w)?;
        value += v;
        for (&j, gj) in t.vars.iter().zip(&g) {
            grad[j] += gj;
        }
    }
    Ok((value, grad))
}

/// `Σ_{i∈batch} ∇F_i(x)`. Accumulation follows the batch order.
pub fn penalized_gradient(
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
    batch: &[usize],
    w: f64,
) -> Result<Vec<f64>> {
    if let Some(&i) = batch.iter().find(|&&i| i >= program.n_terms()) {
        return Err(Error::InvalidProgram(format!("batch index {i} out of range")));
    }
    smoothed_value_and_gradient(program, x, mu, batch, w).map(|(_, g)| g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationEntry {
    pub label: String,
    /// `None` for rows of the linear feasible set.
    pub kind: Option<TermKind>,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub entries: Vec<ViolationEntry>,
    pub max_violation: f64,
}

impl ConstraintReport {
    pub fn is_feasible(&self, tolerance: f64) -> bool {
        self.max_violation <= tolerance
    }

    pub fn worst(&self) -> Option<&ViolationEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.violation.total_cmp(&b.violation))
    }
}

/// Exact-penalty violation of every nonlinear constraint plus every row of `C`.
pub fn constraint_report(program: &SumStructuredProgram, x: &[f64]) -> Result<ConstraintReport> {
    program.check_dim(x)?;
    let mut entries = Vec::new();
    for t in program.ineqs.iter().chain(&program.eqs) {
        entries.push(ViolationEntry {
            label: t.label.clone(),
            kind: Some(t.kind),
            violation: exact_penalty(t.kind, t.value(x)?),
        });
    }
    for (label, violation) in program.feasible_set.violations(x) {
        entries.push(ViolationEntry {
            label,
            kind: None,
            violation,
        });
    }
    let max_violation = entries.iter().fold(0.0f64, |m, e| m.max(e.violation));
    Ok(ConstraintReport {
        entries,
        max_violation,
    })
}

/// Penalized value and max violation from one pass over the terms.
pub fn merit_and_violation(
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
) -> Result<(f64, f64, f64)> {
    let mut cost = 0.0;
    let mut penalty = 0.0;
    let mut max_v = program.feasible_set.max_violation(x);
    for t in program.terms() {
        let y = t.value(x)?;
        match t.kind {
            TermKind::Cost => cost += y,
            k => {
                let p = exact_penalty(k, y);
                penalty += p;
                max_v = max_v.max(p);
            }
        }
    }
    Ok((cost + mu * penalty, cost, max_v))
}
