//! Solver-independent scoring of solution files.

use super::instance::{ProblemInstance, SolutionFile, Task};
use crate::error::Result;
use crate::problem::{merit_and_violation, SumStructuredProgram};
use crate::report::SolveReport;
use crate::robot::{build_posture_program, build_trajectory_program, Biped};

/// Default feasibility tolerance (meters and radians).
pub const TOLERANCE: f64 = 1e-3;

/// The full program of an instance: one posture, or every stance of a
/// trajectory at once.
pub fn instance_program(instance: &ProblemInstance, biped: &Biped) -> Result<SumStructuredProgram> {
    match instance.task {
        Task::Posture => build_posture_program(biped, &instance.terrain, &instance.stances[0]),
        Task::Trajectory => build_trajectory_program(biped, &instance.terrain, &instance.stances, None),
    }
}

/// Task cost and max violation of `x` on `program`, as `(cost, max_violation)`.
pub fn score(program: &SumStructuredProgram, x: &[f64]) -> Result<(f64, f64)> {
    let (_, cost, viol) = merit_and_violation(program, x, 0.0)?;
    Ok((cost, viol))
}

pub fn evaluate_solution(
    instance: &ProblemInstance,
    solution: &SolutionFile,
    tolerance: f64,
) -> Result<SolveReport> {
    solution.validate_for(instance)?;
    let program = instance_program(instance, &Biped::default())?;
    let x = solution.flatten();
    let (cost, max_violation) = score(&program, &x)?;
    Ok(SolveReport {
        success: max_violation <= tolerance,
        cost,
        max_violation,
        time_s: solution.solver.time_s,
        restarts_used: solution.solver.restarts,
        iterations: 0,
        final_mu: 0.0,
        fallback_steps: 0,
        x,
        history: Vec::new(),
    })
}
