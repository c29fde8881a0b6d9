//! Multistart and windowed solving of benchmark instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::{instance_program, score, TOLERANCE};
use super::init::{initialize, Condition};
use super::instance::{ProblemInstance, SolutionFile, SolverMeta, Task};
use super::methods::ProgramSolver;
use crate::error::{Error, Result};
use crate::problem::SumStructuredProgram;
use crate::report::SolveReport;
use crate::robot::{build_posture_program, build_trajectory_program, Biped, DOF};

pub const MAX_RESTARTS: usize = 10;
/// Half-width of the uniform restart perturbation (rad).
pub const PERTURBATION: f64 = 5.0 * std::f64::consts::PI / 180.0;
pub const WINDOW_STANCES: usize = 6;
/// Stances a window advances; consecutive windows share one stance.
pub const WINDOW_STRIDE: usize = WINDOW_STANCES - 1;

/// Random stream for restart `restart` of window `window`.
pub fn stream_id(restart: usize, window: usize) -> u64 {
    (restart * 1000 + window) as u64
}

/// Adds U(−p, p) to every joint angle of every waypoint in `x0`. Base
/// position and pitch are left alone.
pub fn perturb(x0: &[f64], seed: u64, restart: usize, window: usize, p: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(restart, window));
    let mut x = x0.to_vec();
    for q in x.chunks_mut(DOF) {
        for v in &mut q[3..] {
            *v += rng.random_range(-p..=p);
        }
    }
    x
}

/// Runs `solver` from `x0`, then from perturbed copies until one succeeds or
/// `max_restarts` restarts are spent. Time and iterations accumulate.
pub fn multistart_solve(
    solver: &dyn ProgramSolver,
    program: &SumStructuredProgram,
    x0: &[f64],
    seed: u64,
    window: usize,
    max_restarts: usize,
) -> Result<SolveReport> {
    let mut time_s = 0.0;
    let mut iterations = 0;
    let mut fallback_steps = 0;
    let mut restart = 0;
    loop {
        let start = if restart == 0 {
            x0.to_vec()
        } else {
            perturb(x0, seed, restart, window, PERTURBATION)
        };
        let mut report = solver.solve(program, &start, seed ^ stream_id(restart, window))?;
        time_s += report.time_s;
        iterations += report.iterations;
        fallback_steps += report.fallback_steps;
        if report.success || restart == max_restarts {
            report.time_s = time_s;
            report.iterations = iterations;
            report.fallback_steps = fallback_steps;
            report.restarts_used = restart;
            return Ok(report);
        }
        restart += 1;
    }
}

/// Result of solving one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    /// Scored on the instance's full program.
    pub report: SolveReport,
    /// Solved without any restart (every window, for trajectories).
    pub first_try: bool,
    pub failed_window: Option<usize>,
    pub waypoints: Vec<Vec<f64>>,
    /// Boundaries `(first, last)` of each window in waypoint indices.
    pub windows: Vec<(usize, usize)>,
    /// Decision vector returned for each window that was attempted.
    pub window_solutions: Vec<Vec<f64>>,
}

impl InstanceOutcome {
    pub fn solution_file(&self, instance: &ProblemInstance, solver: &dyn ProgramSolver) -> SolutionFile {
        SolutionFile {
            instance_id: instance.id.clone(),
            waypoints: self.waypoints.clone(),
            solver: SolverMeta {
                name: solver.name(),
                seed: solver.seed(),
                restarts: self.report.restarts_used,
                time_s: self.report.time_s,
            },
        }
    }
}

pub fn solve_posture(
    solver: &dyn ProgramSolver,
    instance: &ProblemInstance,
    condition: Condition,
    max_restarts: usize,
) -> Result<InstanceOutcome> {
    let biped = Biped::default();
    let program = build_posture_program(&biped, &instance.terrain, &instance.stances[0])?;
    let x0 = initialize(instance, &biped.params, condition).concat();
    let report = multistart_solve(solver, &program, &x0, instance.seed, 0, max_restarts)?;
    Ok(InstanceOutcome {
        first_try: report.success && report.restarts_used == 0,
        failed_window: (!report.success).then_some(0),
        waypoints: vec![report.x.clone()],
        windows: vec![(0, 0)],
        window_solutions: vec![report.x.clone()],
        report,
    })
}

/// Stance ranges `[start, end)` of the sliding windows.
pub fn window_ranges(n_stances: usize) -> Vec<(usize, usize)> {
    let count = 1 + n_stances.saturating_sub(WINDOW_STANCES).div_ceil(WINDOW_STRIDE);
    (0..count)
        .map(|w| {
            let s0 = w * WINDOW_STRIDE;
            (s0, (s0 + WINDOW_STANCES).min(n_stances))
        })
        .collect()
}

/// Solves a trajectory window by window. Each window after the first pins
/// its first waypoint to the value planned by the previous window and
/// re-plans the second waypoint of the shared stance.
pub fn windowed_trajectory_solve(
    solver: &dyn ProgramSolver,
    instance: &ProblemInstance,
    condition: Condition,
    max_restarts: usize,
) -> Result<InstanceOutcome> {
    if instance.task != Task::Trajectory {
        return Err(Error::InvalidConfig(format!("{} is not a trajectory instance", instance.id)));
    }
    let biped = Biped::default();
    let mut waypoints = initialize(instance, &biped.params, condition);
    let mut time_s = 0.0;
    let mut iterations = 0;
    let mut fallback_steps = 0;
    let mut restarts_used = 0;
    let mut first_try = true;
    let mut failed_window = None;
    let mut final_mu = 0.0;
    let mut windows = Vec::new();
    let mut window_solutions = Vec::new();
    for (w, (s0, s1)) in window_ranges(instance.stances.len()).into_iter().enumerate() {
        let (t0, t1) = (2 * s0, 2 * s1);
        windows.push((t0, t1 - 1));
        let pinned = (w > 0).then(|| waypoints[t0].clone());
        let program = build_trajectory_program(
            &biped,
            &instance.terrain,
            &instance.stances[s0..s1],
            pinned.as_deref(),
        )?;
        let x0 = waypoints[t0..t1].concat();
        let report = multistart_solve(solver, &program, &x0, instance.seed, w, max_restarts)?;
        time_s += report.time_s;
        iterations += report.iterations;
        fallback_steps += report.fallback_steps;
        restarts_used += report.restarts_used;
        final_mu = report.final_mu;
        first_try &= report.restarts_used == 0;
        for (k, q) in report.x.chunks(DOF).enumerate() {
            waypoints[t0 + k] = q.to_vec();
        }
        window_solutions.push(report.x);
        if !report.success {
            failed_window = Some(w);
            break;
        }
    }
    let program = instance_program(instance, &biped)?;
    let x = waypoints.concat();
    let (cost, max_violation) = score(&program, &x)?;
    let success = failed_window.is_none() && max_violation <= TOLERANCE;
    Ok(InstanceOutcome {
        report: SolveReport {
            success,
            cost,
            max_violation,
            time_s,
            restarts_used,
            iterations,
            final_mu,
            fallback_steps,
            x,
            history: Vec::new(),
        },
        first_try: success && first_try,
        failed_window,
        waypoints,
        windows,
        window_solutions,
    })
}

pub fn solve_instance(
    solver: &dyn ProgramSolver,
    instance: &ProblemInstance,
    condition: Condition,
    max_restarts: usize,
) -> Result<InstanceOutcome> {
    match instance.task {
        Task::Posture => solve_posture(solver, instance, condition, max_restarts),
        Task::Trajectory => windowed_trajectory_solve(solver, instance, condition, max_restarts),
    }
}

/// One (instance, method, condition) cell of a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub task: Task,
    pub method: String,
    pub sample_size: f64,
    pub condition: Condition,
    pub max_restarts: usize,
    pub success: bool,
    pub first_try: bool,
    pub cost: f64,
    pub max_violation: f64,
    pub time_s: f64,
    pub restarts_used: usize,
    pub iterations: usize,
    pub failed_window: Option<usize>,
}

impl RunRecord {
    pub fn new(
        instance: &ProblemInstance,
        method: String,
        sample_size: f64,
        condition: Condition,
        max_restarts: usize,
        outcome: &InstanceOutcome,
    ) -> Self {
        Self {
            instance_id: instance.id.clone(),
            task: instance.task,
            method,
            sample_size,
            condition,
            max_restarts,
            success: outcome.report.success,
            first_try: outcome.first_try,
            cost: outcome.report.cost,
            max_violation: outcome.report.max_violation,
            time_s: outcome.report.time_s,
            restarts_used: outcome.report.restarts_used,
            iterations: outcome.report.iterations,
            failed_window: outcome.failed_window,
        }
    }
}
