//! Trust-region penalty SQP and its incremental variant.
//!
//! Each convexify iteration builds quadratic models of the costs and affine
//! models of the constraints, then solves the penalized model problem with
//! one slack per constraint inside a box trust region. The incremental
//! variant rebuilds only a sampled subset of the models after the first
//! iteration of every penalty coefficient.

use std::time::Instant;

use log::{debug, warn};

use super::sampling::MiniBatchSampler;
use crate::error::{Error, Result};
use crate::problem::{
    merit_and_violation, LinearFeasibleSet, PenaltyConfig, ScalarTerm, SumStructuredProgram,
    TermKind,
};
use crate::qp::{project, solve_sparse, QpOptions, QpStatus, SparseQp, SparseRow};
use crate::report::SolveReport;

/// Damping used as the Hessian of costs without residual structure.
pub const COST_DAMPING: f64 = 1e-2;

/// Local model of one term around `base_point`, over the term's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexModel {
    pub kind: TermKind,
    pub term_index: usize,
    pub vars: Vec<usize>,
    pub base_point: Vec<f64>,
    pub value0: f64,
    pub gradient: Vec<f64>,
    /// Row-major PSD Hessian for cost models, empty for constraints.
    pub hessian: Vec<f64>,
}

impl ConvexModel {
    fn delta(&self, x: &[f64]) -> Vec<f64> {
        self.vars.iter().zip(&self.base_point).map(|(&j, b)| x[j] - b).collect()
    }

    /// Model value at the full vector `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.delta(x);
        let mut v = self.value0 + self.gradient.iter().zip(&d).map(|(g, d)| g * d).sum::<f64>();
        if !self.hessian.is_empty() {
            let k = d.len();
            let mut quad = 0.0;
            for a in 0..k {
                for b in 0..k {
                    quad += d[a] * self.hessian[a * k + b] * d[b];
                }
            }
            v += 0.5 * quad;
        }
        v
    }

    /// Penalized contribution `F̃_i`.
    pub fn penalized(&self, x: &[f64], mu: f64) -> f64 {
        let v = self.value(x);
        match self.kind {
            TermKind::Cost => v,
            TermKind::Inequality => mu * v.max(0.0),
            TermKind::Equality => mu * v.abs(),
        }
    }
}

/// Builds the model of term `index` of `program` at `x0`.
pub fn convexify(program: &SumStructuredProgram, index: usize, x0: &[f64]) -> Result<ConvexModel> {
    convexify_term(program.term(index), index, x0)
}

fn convexify_term(term: &ScalarTerm, index: usize, x0: &[f64]) -> Result<ConvexModel> {
    let (value0, gradient) = term.value_local_grad(x0)?;
    let k = gradient.len();
    let hessian = match term.kind() {
        TermKind::Cost => match term.residual(x0) {
            Some(r) => {
                let r = r?;
                let mut h = vec![0.0; k * k];
                for row in r.jacobian.chunks(k) {
                    for a in 0..k {
                        if row[a] == 0.0 {
                            continue;
                        }
                        for b in 0..k {
                            h[a * k + b] += 2.0 * row[a] * row[b];
                        }
                    }
                }
                h
            }
            None => {
                let mut h = vec![0.0; k * k];
                (0..k).for_each(|a| h[a * k + a] = COST_DAMPING);
                h
            }
        },
        _ => Vec::new(),
    };
    Ok(ConvexModel {
        kind: term.kind(),
        term_index: index,
        vars: term.vars().to_vec(),
        base_point: term.gather(x0),
        value0,
        gradient,
        hessian,
    })
}

/// Box trust region with its update constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegion {
    pub initial: f64,
    pub radius: f64,
    pub expand: f64,
    pub shrink: f64,
    pub accept_ratio: f64,
    pub min_radius: f64,
    pub max_radius: f64,
}

impl Default for TrustRegion {
    fn default() -> Self {
        Self {
            initial: 0.1,
            radius: 0.1,
            expand: 1.5,
            shrink: 0.25,
            accept_ratio: 0.1,
            min_radius: 1e-5,
            max_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqpConfig {
    pub penalty: PenaltyConfig,
    /// Share of models rebuilt per convexify iteration; 1 is classic SQP.
    pub fraction: f64,
    pub seed: u64,
    /// Convexify iterations per penalty coefficient.
    pub max_convexify_iterations: usize,
    pub trust: TrustRegion,
    /// Model decrease below `stall_tolerance · max(1, merit)` counts as a stall.
    pub stall_tolerance: f64,
    pub stall_iterations: usize,
    pub record_history: bool,
    pub time_limit_s: Option<f64>,
}

impl Default for SqpConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyConfig::default(),
            fraction: 1.0,
            seed: 0,
            max_convexify_iterations: 100,
            trust: TrustRegion::default(),
            stall_tolerance: 1e-7,
            stall_iterations: 2,
            record_history: false,
            time_limit_s: None,
        }
    }
}

impl SqpConfig {
    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction {} not in (0, 1]", self.fraction)));
        }
        let t = &self.trust;
        if !(t.initial > 0.0 && t.min_radius > 0.0 && t.expand >= 1.0 && t.shrink > 0.0 && t.shrink < 1.0) {
            return Err(Error::InvalidConfig("invalid trust-region parameters".into()));
        }
        Ok(())
    }
}

/// Candidate of one trust-region subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Subproblem {
    pub x: Vec<f64>,
    /// Model merit at the trust-region center.
    pub model_at_center: f64,
    pub model_at_candidate: f64,
}

impl Subproblem {
    pub fn model_decrease(&self) -> f64 {
        self.model_at_center - self.model_at_candidate
    }
}

fn model_merit(models: &[ConvexModel], x: &[f64], mu: f64) -> f64 {
    models.iter().map(|m| m.penalized(x, mu)).sum()
}

/// `argmin Σ F̃_i(x)` over `C ∩ {‖x − center‖∞ ≤ radius}`.
pub fn sqp_subproblem(
    models: &[ConvexModel],
    mu: f64,
    center: &[f64],
    radius: f64,
    set: &LinearFeasibleSet,
) -> Result<Subproblem> {
    let d = center.len();
    let lower: Vec<f64> = (0..d).map(|j| set.lower[j].max(center[j] - radius)).collect();
    let upper: Vec<f64> = (0..d).map(|j| set.upper[j].min(center[j] + radius)).collect();

    let mut qp = SparseQp {
        n: d,
        linear: vec![0.0; d],
        lower: lower.clone(),
        upper: upper.clone(),
        ..Default::default()
    };
    for m in models {
        let gb: f64 = m.gradient.iter().zip(&m.base_point).map(|(g, b)| g * b).sum();
        match m.kind {
            TermKind::Cost => {
                let k = m.vars.len();
                for a in 0..k {
                    let mut hb = 0.0;
                    for b in 0..k {
                        let h = m.hessian[a * k + b];
                        hb += h * m.base_point[b];
                        if b >= a && h != 0.0 {
                            qp.hessian.push((m.vars[a], m.vars[b], h));
                        }
                    }
                    qp.linear[m.vars[a]] += m.gradient[a] - hb;
                }
            }
            kind => {
                // inequality models that stay negative on the whole box are dropped
                if kind == TermKind::Inequality {
                    let at_center = m.value(center);
                    let reach: f64 = m.gradient.iter().map(|g| g.abs()).sum::<f64>() * radius;
                    if at_center + reach < 0.0 {
                        continue;
                    }
                }
                let t = qp.n;
                qp.n += 1;
                qp.linear.push(mu);
                qp.lower.push(0.0);
                qp.upper.push(f64::INFINITY);
                let (idx, val): (Vec<usize>, Vec<f64>) = m
                    .vars
                    .iter()
                    .zip(&m.gradient)
                    .filter(|(_, g)| **g != 0.0)
                    .map(|(&j, &g)| (j, g))
                    .unzip();
                let offset = gb - m.value0;
                let row = |sign: f64| SparseRow {
                    idx: idx.iter().copied().chain([t]).collect(),
                    val: val.iter().map(|v| sign * v).chain([-1.0]).collect(),
                    rhs: sign * offset,
                };
                qp.le.push(row(1.0));
                if kind == TermKind::Equality {
                    qp.le.push(row(-1.0));
                }
            }
        }
    }
    let widen = |r: &crate::problem::AffineRow| {
        let (idx, val) = r
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .unzip();
        SparseRow { idx, val, rhs: r.rhs }
    };
    qp.eq.extend(set.eq_rows.iter().map(widen));
    qp.le.extend(set.ineq_rows.iter().map(widen));

    // the slack weight μ can reach 1e12; scaling keeps the interior point well conditioned
    let scale = 1.0 / mu.max(1.0);
    qp.linear.iter_mut().for_each(|v| *v *= scale);
    qp.hessian.iter_mut().for_each(|e| e.2 *= scale);
    let sol = solve_sparse(&qp, QpOptions::default())?;
    match sol.status {
        QpStatus::Optimal | QpStatus::Inaccurate => {}
        QpStatus::Infeasible { certificate } => {
            return Err(Error::QpFailed(format!("trust-region subproblem infeasible at {certificate}")))
        }
        QpStatus::MaxIter => {
            if sol.x_star.iter().any(|v| !v.is_finite()) {
                return Err(Error::QpFailed("subproblem hit its iteration limit".into()));
            }
        }
    }
    let x: Vec<f64> = (0..d).map(|j| sol.x_star[j].clamp(lower[j], upper[j])).collect();
    Ok(Subproblem {
        model_at_center: model_merit(models, center, mu),
        model_at_candidate: model_merit(models, &x, mu),
        x,
    })
}

/// Trust-region penalty SQP. With `fraction < 1` this is I-SQP.
pub fn sqp_solve(
    program: &SumStructuredProgram,
    x0: &[f64],
    config: &SqpConfig,
) -> Result<SolveReport> {
    config.validate()?;
    program.check_dim(x0)?;
    let start = Instant::now();
    let tol = config.penalty.tolerance;
    let set = program.feasible_set();
    let n = program.n_terms();
    let mut x = project(x0, set)?;
    let mut trust = config.trust;
    let mut sampler = MiniBatchSampler::new(n, config.fraction, config.seed);
    let mut models: Vec<ConvexModel> = Vec::with_capacity(n);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut mu = config.penalty.mu_ladder[0];
    let (_, mut cost, mut viol) = merit_and_violation(program, &x, mu)?;
    let timed_out = || config.time_limit_s.is_some_and(|t| start.elapsed().as_secs_f64() > t);

    'ladder: for &m in &config.penalty.mu_ladder {
        mu = m;
        if trust.radius < trust.min_radius {
            trust.radius = trust.initial;
        }
        let mut merit = merit_and_violation(program, &x, mu)?.0;
        let mut stalls = 0;
        for k in 0..config.max_convexify_iterations {
            // with every model fresh at x a stall would repeat exactly
            let full = k == 0 || config.fraction >= 1.0;
            if full {
                models = (0..n)
                    .map(|i| convexify(program, i, &x))
                    .collect::<Result<_>>()?;
            } else {
                for i in sampler.next_batch() {
                    models[i] = convexify(program, i, &x)?;
                }
            }
            iterations += 1;

            let mut stalled = false;
            loop {
                let sub = match sqp_subproblem(&models, mu, &x, trust.radius, set) {
                    Ok(sub) => sub,
                    Err(Error::QpFailed(msg)) => {
                        // treated like a rejected step
                        warn!("trust-region subproblem failed ({msg}), shrinking radius");
                        trust.radius *= trust.shrink;
                        if trust.radius < trust.min_radius {
                            stalled = true;
                            break;
                        }
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let model_dec = sub.model_decrease();
                if model_dec < config.stall_tolerance * merit.abs().max(1.0) {
                    stalled = true;
                    break;
                }
                let (new_merit, c, v) = merit_and_violation(program, &sub.x, mu)?;
                let ratio = (merit - new_merit) / model_dec;
                if ratio >= trust.accept_ratio {
                    x = sub.x;
                    merit = new_merit;
                    (cost, viol) = (c, v);
                    trust.radius = (trust.radius * trust.expand).min(trust.max_radius);
                    break;
                }
                trust.radius *= trust.shrink;
                if trust.radius < trust.min_radius {
                    stalled = true;
                    break;
                }
            }
            if config.record_history {
                history.push(x.clone());
            }
            if timed_out() {
                warn!("sqp solve hit its time limit");
                break 'ladder;
            }
            if stalled {
                stalls += if full { config.stall_iterations } else { 1 };
                if stalls >= config.stall_iterations || trust.radius < trust.min_radius {
                    break;
                }
            } else {
                stalls = 0;
            }
        }
        debug!("mu {mu:e}: violation {viol:e}, cost {cost}, radius {}", trust.radius);
        if viol <= tol {
            break;
        }
    }

    Ok(SolveReport {
        success: viol <= tol,
        cost,
        max_violation: viol,
        time_s: start.elapsed().as_secs_f64(),
        restarts_used: 0,
        iterations,
        final_mu: mu,
        fallback_steps: 0,
        x,
        history,
    })
}

/// I-SQP: [`sqp_solve`] with `fraction < 1`.
pub fn isqp_solve(
    program: &SumStructuredProgram,
    x0: &[f64],
    config: &SqpConfig,
) -> Result<SolveReport> {
    if config.fraction >= 1.0 {
        return Err(Error::InvalidConfig("I-SQP needs fraction < 1".into()));
    }
    sqp_solve(program, x0, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn affine(kind: TermKind, a: f64, b: f64) -> ScalarTerm {
        ScalarTerm::from_fn(kind, "aff", vec![0], move |x| (a * x[0] + b, vec![a]))
    }

    #[test]
    fn models_of_exact_terms() {
        let g = affine(TermKind::Inequality, 2.0, -1.0);
        let p = SumStructuredProgram::new(1, vec![], vec![g], vec![], LinearFeasibleSet::unbounded(1)).unwrap();
        let m = convexify(&p, 0, &[0.0]).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert_eq!(m.value(&[x]), 2.0 * x - 1.0);
        }
        let f = ScalarTerm::from_residual_fn("sq", vec![0], |x| (vec![x[0]], vec![1.0]));
        let p = SumStructuredProgram::new(1, vec![f], vec![], vec![], LinearFeasibleSet::unbounded(1)).unwrap();
        let m = convexify(&p, 0, &[3.0]).unwrap();
        for x in [-1.0, 0.0, 4.0] {
            assert!((m.value(&[x]) - x * x).abs() < 1e-12);
        }
    }

    #[test]
    fn clipped_subproblem() {
        let f = ScalarTerm::from_residual_fn("sq", vec![0, 1], |x| {
            (vec![x[0] - 1.0, x[1]], vec![1.0, 0.0, 0.0, 1.0])
        });
        let p = SumStructuredProgram::new(2, vec![f], vec![], vec![], LinearFeasibleSet::unbounded(2)).unwrap();
        let models = vec![convexify(&p, 0, &[0.0, 0.0]).unwrap()];
        let s = sqp_subproblem(&models, 1.0, &[0.0, 0.0], 0.1, p.feasible_set()).unwrap();
        assert!((s.x[0] - 0.1).abs() < 1e-9 && s.x[1].abs() < 1e-9);
    }

    #[test]
    fn equality_dominates() {
        let h = affine(TermKind::Equality, 1.0, 0.0);
        let f = ScalarTerm::from_residual_fn("pull", vec![0], |x| (vec![x[0] - 1.0], vec![1.0]));
        let p = SumStructuredProgram::new(1, vec![f], vec![], vec![h], LinearFeasibleSet::unbounded(1)).unwrap();
        let models: Vec<_> = (0..2).map(|i| convexify(&p, i, &[0.5]).unwrap()).collect();
        let s = sqp_subproblem(&models, 1e6, &[0.5], 100.0, p.feasible_set()).unwrap();
        assert!(s.x[0].abs() < 1e-6, "{:?}", s.x);
    }

    #[test]
    fn convex_program_solves() {
        // min (x-2)² + (y-1)²  s.t. x + y - 1 ≤ 0
        let f = ScalarTerm::from_residual_fn("f", vec![0, 1], |x| {
            (vec![x[0] - 2.0, x[1] - 1.0], vec![1.0, 0.0, 0.0, 1.0])
        });
        let g = ScalarTerm::from_fn(TermKind::Inequality, "g", vec![0, 1], |x| {
            (x[0] + x[1] - 1.0, vec![1.0, 1.0])
        });
        let p = SumStructuredProgram::new(2, vec![f], vec![g], vec![], LinearFeasibleSet::unbounded(2)).unwrap();
        let r = sqp_solve(&p, &[0.0, 0.0], &SqpConfig::default()).unwrap();
        assert!(r.success);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && r.x[1].abs() < 1e-3, "{:?}", r.x);
    }
}
