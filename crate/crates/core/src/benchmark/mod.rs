//! Instance suite, initializers, multistart driver and scoring.

pub mod compare;
pub mod evaluate;
pub mod generator;
pub mod init;
pub mod instance;
pub mod methods;
pub mod runner;

pub use compare::{run_cells, ComparisonTable, TableRow};
pub use evaluate::{evaluate_solution, instance_program, score, TOLERANCE};
pub use generator::{generate_instances, GeneratorConfig};
pub use init::{initialize, nominal_configuration, Condition};
pub use instance::{
    load_instance, load_solution, load_suite, save_instance, save_solution, save_suite, Features, Manifest,
    ProblemInstance, SolutionFile, SolverMeta, Task,
};
pub use methods::{Algorithm, MethodConfig, ProgramSolver};
pub use runner::{
    multistart_solve, perturb, solve_instance, windowed_trajectory_solve, window_ranges, InstanceOutcome,
    RunRecord, MAX_RESTARTS,
};
