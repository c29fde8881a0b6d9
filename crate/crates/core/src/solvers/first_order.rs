//! Projected first-order solvers on the penalized objective: full, stochastic
//! and incremental (SAG-style) gradients with plain, Adam or Nadam updates.

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::linesearch::{wolfe_line_search, WolfeParams};
use super::sampling::MiniBatchSampler;
use crate::error::{Error, Result};
use crate::problem::{
    merit_and_violation, smoothed_penalized_objective, smoothed_value_and_gradient, term_penalized_gradient,
    PenaltyConfig,
    SumStructuredProgram,
};
use crate::qp::project;
use crate::report::SolveReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GdMode {
    Full,
    Stochastic,
    Incremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    Plain,
    Adam,
    Nadam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub mode: GdMode,
    pub rule: UpdateRule,
    pub fraction: f64,
    pub seed: u64,
    pub wolfe: WolfeParams,
    pub epochs_patience: usize,
    /// Relative decrease of the penalized objective that counts as progress.
    pub improvement: f64,
    /// Step cap per penalty coefficient.
    pub max_inner_iterations: usize,
    pub penalty: PenaltyConfig,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub record_history: bool,
    pub time_limit_s: Option<f64>,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            mode: GdMode::Full,
            rule: UpdateRule::Plain,
            fraction: 1.0,
            seed: 0,
            wolfe: WolfeParams::default(),
            epochs_patience: 10,
            improvement: 1e-5,
            max_inner_iterations: 1000,
            penalty: PenaltyConfig::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            record_history: false,
            time_limit_s: None,
        }
    }
}

impl GdConfig {
    pub fn new(mode: GdMode, rule: UpdateRule, fraction: f64) -> Self {
        Self {
            mode,
            rule,
            fraction,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!("fraction {} not in (0, 1]", self.fraction)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || self.epochs_patience == 0 {
            return Err(Error::InvalidConfig("epsilon and patience must be positive".into()));
        }
        Ok(())
    }

    /// Iterations per epoch, `⌈1/fraction⌉`.
    pub fn epoch_length(&self) -> usize {
        match self.mode {
            GdMode::Full => 1,
            _ => (1.0 / self.fraction).ceil() as usize,
        }
    }
}

/// Bias-corrected first and second moment averages.
///
/// The corrected averages are stored directly: with `c_k = 1 − β^k`,
/// `m̂_k = m̂_{k−1} + ((1−β)/c_k)(g − m̂_{k−1})`, so a constant gradient
/// reproduces itself exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub k: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    c1: f64,
    c2: f64,
}

impl AdamState {
    pub fn new(dim: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            k: 0,
            beta1,
            beta2,
            epsilon,
            c1: 0.0,
            c2: 0.0,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.m.len(), self.beta1, self.beta2, self.epsilon);
    }

    /// Folds in `g`; afterwards `m` and `v` hold `m̂_k` and `v̂_k`.
    pub fn update(&mut self, g: &[f64]) {
        self.k += 1;
        self.c1 = self.beta1 * self.c1 + (1.0 - self.beta1);
        self.c2 = self.beta2 * self.c2 + (1.0 - self.beta2);
        let a1 = (1.0 - self.beta1) / self.c1;
        let a2 = (1.0 - self.beta2) / self.c2;
        for ((m, v), gi) in self.m.iter_mut().zip(&mut self.v).zip(g) {
            *m += a1 * (gi - *m);
            *v += a2 * (gi * gi - *v);
        }
    }

    /// Nadam look-ahead `β₁m_k/(1−β₁^{k+1}) + (1−β₁)g_k/(1−β₁^k)`.
    pub fn nadam_moment(&self, g: &[f64]) -> Vec<f64> {
        let c_next = self.beta1 * self.c1 + (1.0 - self.beta1);
        let a = self.beta1 * self.c1 / c_next;
        let b = (1.0 - self.beta1) / self.c1;
        self.m.iter().zip(g).map(|(m, gi)| a * m + b * gi).collect()
    }

    /// `m / (√v̂ + ε)` elementwise.
    pub fn scaled(&self, m: &[f64]) -> Vec<f64> {
        m.iter()
            .zip(&self.v)
            .map(|(m, v)| m / (v.sqrt() + self.epsilon))
            .collect()
    }
}

/// Last-computed gradient of every term, kept over the term's own variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMemory {
    pub rows: Vec<Vec<f64>>,
    pub running_sum: Vec<f64>,
    initialized: bool,
}

impl GradientMemory {
    pub fn new(program: &SumStructuredProgram) -> Self {
        Self {
            rows: program.terms().map(|t| vec![0.0; t.vars().len()]).collect(),
            running_sum: vec![0.0; program.dim()],
            initialized: false,
        }
    }

    pub fn reset(&mut self) {
        self.rows.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
        self.running_sum.iter_mut().for_each(|v| *v = 0.0);
        self.initialized = false;
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Ordered column sum `Σᵢ yᵢ` over the given rows.
    fn sum_rows(&self, program: &SumStructuredProgram, rows: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut s = vec![0.0; program.dim()];
        for i in rows {
            for (&j, v) in program.term(i).vars().iter().zip(&self.rows[i]) {
                s[j] += v;
            }
        }
        s
    }

    /// Refreshes the rows in `batch` at `x` (all rows on the first call) and
    /// returns the rows actually refreshed.
    pub fn refresh(
        &mut self,
        program: &SumStructuredProgram,
        x: &[f64],
        mu: f64,
        batch: &[usize],
        w: f64,
    ) -> Result<Vec<usize>> {
        let batch: Vec<usize> = if self.initialized {
            batch.to_vec()
        } else {
            (0..program.n_terms()).collect()
        };
        for &i in &batch {
            if i >= program.n_terms() {
                return Err(Error::InvalidProgram(format!("batch index {i} out of range")));
            }
            self.rows[i] = term_penalized_gradient(program.term(i), x, mu, w)?.1;
        }
        self.initialized = true;
        self.running_sum = self.sum_rows(program, 0..program.n_terms());
        Ok(batch)
    }

    /// Sum of the rows outside `batch` (sorted ascending).
    pub fn stale_sum(&self, program: &SumStructuredProgram, batch: &[usize]) -> Vec<f64> {
        let mut in_batch = vec![false; program.n_terms()];
        batch.iter().for_each(|&i| in_batch[i] = true);
        self.sum_rows(program, (0..program.n_terms()).filter(|&i| !in_batch[i]))
    }
}

/// SAG gradient: refresh the batch rows at `x` and return `Σᵢ yᵢ`.
pub fn incremental_gradient(
    memory: &mut GradientMemory,
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
    batch: &[usize],
    w: f64,
) -> Result<Vec<f64>> {
    memory.refresh(program, x, mu, batch, w)?;
    Ok(memory.running_sum.clone())
}

/// Mutable state of a first-order solve.
#[derive(Debug, Clone)]
pub struct GdState {
    pub adam: AdamState,
    pub memory: Option<GradientMemory>,
    /// Step accepted at the previous iteration, if any.
    pub alpha_prev: Option<f64>,
}

impl GdState {
    pub fn new(program: &SumStructuredProgram, config: &GdConfig) -> Self {
        Self {
            adam: AdamState::new(program.dim(), config.beta1, config.beta2, config.epsilon),
            memory: (config.mode == GdMode::Incremental).then(|| GradientMemory::new(program)),
            alpha_prev: None,
        }
    }

    pub fn reset(&mut self) {
        self.adam.reset();
        if let Some(m) = &mut self.memory {
            m.reset();
        }
        self.alpha_prev = None;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub x_next: Vec<f64>,
    pub alpha: f64,
    /// The line search failed and a small fixed step was taken instead.
    pub fallback: bool,
}

/// Points along the projected search path `π(x − αd)`.
struct SearchPath<'a> {
    x: &'a [f64],
    d: Vec<f64>,
    lower: &'a [f64],
    upper: &'a [f64],
    boxed: bool,
}

impl SearchPath<'_> {
    /// Point and path tangent at `α`.
    fn at(&self, alpha: f64) -> (Vec<f64>, Vec<f64>) {
        if !self.boxed {
            // feasible direction `d` with α ∈ [0, 1]
            let z = self.x.iter().zip(&self.d).map(|(x, d)| x + alpha * d).collect();
            return (z, self.d.clone());
        }
        let mut z = Vec::with_capacity(self.x.len());
        let mut t = Vec::with_capacity(self.x.len());
        for j in 0..self.x.len() {
            let raw = self.x[j] - alpha * self.d[j];
            if raw < self.lower[j] {
                z.push(self.lower[j]);
                t.push(0.0);
            } else if raw > self.upper[j] {
                z.push(self.upper[j]);
                t.push(0.0);
            } else if raw == self.lower[j] && self.d[j] > 0.0 || raw == self.upper[j] && self.d[j] < 0.0 {
                z.push(raw);
                t.push(0.0);
            } else {
                z.push(raw);
                t.push(-self.d[j]);
            }
        }
        (z, t)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One projected step. `batch` must be sorted ascending.
pub fn gd_step(
    program: &SumStructuredProgram,
    x: &[f64],
    mu: f64,
    batch: &[usize],
    config: &GdConfig,
    state: &mut GdState,
) -> Result<StepOutcome> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty minibatch".into()));
    }
    let w = config.penalty.smoothing_w;

    // gradient and the line-search objective's batch and linear part
    let (batch, g, stale) = match &mut state.memory {
        Some(mem) => {
            mem.refresh(program, x, mu, batch, w)?;
            let all: Vec<usize> = (0..program.n_terms()).collect();
            (all, mem.running_sum.clone(), None::<Vec<f64>>)
        }
        None => {
            let (_, g) = smoothed_value_and_gradient(program, x, mu, batch, w)?;
            let all: Vec<usize> = (0..program.n_terms()).collect();
            (all, g, None)
        }
    };

    let d = match config.rule {
        UpdateRule::Plain => g.clone(),
        UpdateRule::Adam => {
            state.adam.update(&g);
            state.adam.scaled(&state.adam.m.clone())
        }
        UpdateRule::Nadam => {
            state.adam.update(&g);
            let m = state.adam.nadam_moment(&g);
            state.adam.scaled(&m)
        }
    };

    let set = program.feasible_set();
    let boxed = set.is_box_only();
    let path = SearchPath {
        x,
        d: if boxed {
            d
        } else {
            // feasible direction towards the projection of a unit step
            let target: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x - d).collect();
            let p = project(&target, set)?;
            p.iter().zip(x).map(|(p, x)| p - x).collect()
        },
        lower: &set.lower,
        upper: &set.upper,
        boxed,
    };
    let objective = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (mut v, mut gz) = smoothed_value_and_gradient(program, z, mu, &batch, w)?;
        if let Some(s) = &stale {
            v += dot(s, z);
            gz.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        }
        Ok((v, gz))
    };

    let (phi0, g0) = objective(x)?;
    let (_, t0) = path.at(0.0);
    let dphi0 = dot(&g0, &t0);
    let mut params = config.wolfe;
    if !boxed {
        params.alpha_max = 1.0;
    }
    let alpha0 = match state.alpha_prev {
        Some(a) => 0.5 * a,
        None => 1.0,
    }
    .min(params.alpha_max);
    let phi = |alpha: f64| -> Result<(f64, f64)> {
        let (z, t) = path.at(alpha);
        let (v, gz) = objective(&z)?;
        Ok((v, dot(&gz, &t)))
    };
    let search = match wolfe_line_search(phi, phi0, dphi0, alpha0, params) {
        Ok(r) if r.alpha > 0.0 => Some(Some(r)),
        Ok(_) => None,
        // uphill on the full objective: stay put and wait for the next batch
        Err(Error::NonDescent { .. }) => Some(None),
        Err(e) => return Err(e),
    };
    let (alpha, fallback) = match search {
        Some(Some(r)) => {
            if !r.satisfied {
                debug!("wolfe conditions not met, using best sufficient-decrease step");
            }
            (r.alpha, false)
        }
        Some(None) => (0.0, true),
        None => {
            let scale = path.d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            ((1e-4 / scale).min(params.alpha_max), true)
        }
    };
    if !fallback {
        state.alpha_prev = Some(alpha);
    }
    let (x_next, _) = path.at(alpha);
    Ok(StepOutcome {
        x_next,
        alpha,
        fallback,
    })
}

/// Penalty continuation around [`gd_step`].
pub fn solve_first_order(
    program: &SumStructuredProgram,
    x0: &[f64],
    config: &GdConfig,
) -> Result<SolveReport> {
    config.validate()?;
    program.check_dim(x0)?;
    let start = Instant::now();
    let tol = config.penalty.tolerance;
    let mut x = project(x0, program.feasible_set())?;
    let mut state = GdState::new(program, config);
    let mut sampler = MiniBatchSampler::new(program.n_terms(), config.fraction, config.seed);
    let all: Vec<usize> = (0..program.n_terms()).collect();
    let epoch = config.epoch_length();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut fallbacks = 0;

    let (_, mut cost, mut viol) = merit_and_violation(program, &x, config.penalty.mu_ladder[0])?;
    let mut best = (viol, cost, x.clone());
    let mut mu = config.penalty.mu_ladder[0];
    let timed_out = |start: &Instant| config.time_limit_s.is_some_and(|t| start.elapsed().as_secs_f64() > t);

    'ladder: for &m in &config.penalty.mu_ladder {
        mu = m;
        state.reset();
        let w = config.penalty.smoothing_w;
        let mut best_merit = smoothed_penalized_objective(program, &x, mu, &all, w)?;
        let mut stale_epochs = 0;
        for it in 1..=config.max_inner_iterations {
            let batch = match config.mode {
                GdMode::Full => all.clone(),
                _ => sampler.next_batch(),
            };
            let step = gd_step(program, &x, mu, &batch, config, &mut state)?;
            x = step.x_next;
            iterations += 1;
            fallbacks += step.fallback as usize;
            if config.record_history {
                history.push(x.clone());
            }
            if it % epoch != 0 {
                continue;
            }
            let (_, c, v) = merit_and_violation(program, &x, mu)?;
            (cost, viol) = (c, v);
            let merit = smoothed_penalized_objective(program, &x, mu, &all, w)?;
            if v < best.0 {
                best = (v, c, x.clone());
            }
            if merit < best_merit - config.improvement * best_merit.abs() {
                best_merit = merit;
                stale_epochs = 0;
            } else {
                stale_epochs += 1;
                if stale_epochs >= config.epochs_patience {
                    break;
                }
            }
            if timed_out(&start) {
                warn!("first-order solve hit its time limit");
                break 'ladder;
            }
        }
        let (_, c, v) = merit_and_violation(program, &x, mu)?;
        (cost, viol) = (c, v);
        if v < best.0 {
            best = (v, c, x.clone());
        }
        debug!("mu {mu:e}: violation {v:e}, cost {c}, iterations {iterations}");
        if v <= tol {
            break;
        }
    }

    if viol > tol && viol > best.0 {
        (viol, cost, x) = best;
    }
    Ok(SolveReport {
        success: viol <= tol,
        cost,
        max_violation: viol,
        time_s: start.elapsed().as_secs_f64(),
        restarts_used: 0,
        iterations,
        final_mu: mu,
        fallback_steps: fallbacks,
        x,
        history,
    })
}
