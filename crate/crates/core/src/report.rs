use serde::{Deserialize, Serialize};

/// Outcome of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// `max_violation ≤ tolerance`.
    pub success: bool,
    /// Task cost `Σ f_i`, penalties excluded.
    pub cost: f64,
    pub max_violation: f64,
    pub time_s: f64,
    pub restarts_used: usize,
    /// Gradient steps (first-order) or convexify iterations (SQP).
    pub iterations: usize,
    /// Penalty coefficient in force when the run stopped.
    pub final_mu: f64,
    /// Steps that fell back to a fixed small step after a failed line search.
    pub fallback_steps: usize,
    pub x: Vec<f64>,
    /// Iterates after every step, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<Vec<f64>>,
}
