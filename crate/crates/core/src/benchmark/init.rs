//! The two initializations: feet above their targets, or sunk into the ground.

use serde::{Deserialize, Serialize};

use super::instance::ProblemInstance;
use crate::robot::{BipedParams, Side, Stance, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Good,
    InCollision,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Good => "good",
            Condition::InCollision => "in_collision",
        }
    }
}

/// Nominal knee flexion.
pub const NOMINAL_KNEE: f64 = 50.0 * std::f64::consts::PI / 180.0;
/// Hip and knee flexion of a leg without a contact.
pub const SWING_HIP: f64 = 60.0 * std::f64::consts::PI / 180.0;
pub const SWING_KNEE: f64 = 100.0 * std::f64::consts::PI / 180.0;
/// Sole clearance above the highest target for the good initialization.
pub const GOOD_MARGIN: f64 = 0.20;
/// Sole depth below the lowest target for the in-collision initialization.
pub const COLLISION_MARGIN: f64 = 0.05;

/// Nominal configuration for one stance: knees at 50°, hips and ankles at
/// half of that so the shank mirrors the thigh and the soles are level.
/// A leg without a contact is tucked up so its sole clears the stance sole.
pub fn nominal_configuration(stance: &Stance, params: &BipedParams, condition: Condition) -> [f64; DOF] {
    let targets: Vec<_> = stance.contacts().map(|(_, f)| f).collect();
    let base_x = targets.iter().map(|f| f.pos[0]).sum::<f64>() / targets.len() as f64;
    let sole_y = match condition {
        Condition::Good => targets.iter().map(|f| f.pos[1]).fold(f64::NEG_INFINITY, f64::max) + GOOD_MARGIN,
        Condition::InCollision => {
            targets.iter().map(|f| f.pos[1]).fold(f64::INFINITY, f64::min) - COLLISION_MARGIN
        }
    };
    let half = NOMINAL_KNEE / 2.0;
    let leg_height = (params.thigh_length + params.shank_length) * half.cos();
    let mut q = [0.0; DOF];
    q[0] = base_x;
    q[1] = sole_y + leg_height;
    for side in Side::BOTH {
        let (hip, knee) = if stance.foot(side).is_some() {
            (half, NOMINAL_KNEE)
        } else {
            (SWING_HIP, SWING_KNEE)
        };
        q[side.hip()] = hip;
        q[side.knee()] = knee;
        q[side.ankle()] = knee - hip;
    }
    q
}

/// Initial waypoints: one for a posture, two per stance for a trajectory.
pub fn initialize(instance: &ProblemInstance, params: &BipedParams, condition: Condition) -> Vec<Vec<f64>> {
    let per_stance = instance.waypoint_count() / instance.stances.len();
    instance
        .stances
        .iter()
        .flat_map(|s| {
            let q = nominal_configuration(s, params, condition).to_vec();
            std::iter::repeat_n(q, per_stance)
        })
        .collect()
}
