pub mod first_order;
pub mod linesearch;
pub mod sampling;
pub mod sqp;

pub use first_order::{
    gd_step, incremental_gradient, solve_first_order, AdamState, GdConfig, GdMode, GdState,
    GradientMemory, UpdateRule,
};
pub use linesearch::{wolfe_line_search, LineSearchResult, WolfeParams};
pub use sampling::{sample_batch, MiniBatchSampler};
pub use sqp::{convexify, isqp_solve, sqp_solve, sqp_subproblem, ConvexModel, SqpConfig, TrustRegion};
