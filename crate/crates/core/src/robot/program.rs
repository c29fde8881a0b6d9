//! Posture and trajectory programs for the biped.

use std::sync::Arc;

use super::collision::collision_pairs;
use super::kinematics::{Biped, Landmark};
use super::{joint_limits, wrap_angle, FootPose, Side, Stance, Terrain, TerrainGeometry, DOF};
use crate::error::{Error, Result};
use crate::problem::{LinearFeasibleSet, ScalarTerm, SumStructuredProgram, TermKind};

/// `(dx, dy, dθ)` between the sole of `side` and `target`, with its
/// row-major `3 × DOF` Jacobian.
pub fn foot_pose_residual(
    biped: &Biped,
    q: &[f64],
    side: Side,
    target: &FootPose,
) -> ([f64; 3], [[f64; DOF]; 3]) {
    let j = biped.landmark(Landmark::Ankle(side)).jacobian(q);
    let mut jtheta = [0.0; DOF];
    jtheta[side.hip()] = 1.0;
    jtheta[side.knee()] = -1.0;
    jtheta[side.ankle()] = 1.0;
    (
        [
            j.p.x - target.pos[0],
            j.p.y - target.pos[1],
            wrap_angle(Biped::sole_angle(q, side) - target.angle),
        ],
        [j.jx, j.jy, jtheta],
    )
}

/// Horizontal extent of the target soles in contact.
pub fn support_interval(stance: &Stance, biped: &Biped) -> (f64, f64) {
    let half = biped.params.foot_length / 2.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, f) in stance.contacts() {
        let dx = half * f.angle.cos();
        for x in [f.pos[0] - dx, f.pos[0] + dx] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo, hi)
}

struct Builder {
    biped: Arc<Biped>,
    terrain: Arc<TerrainGeometry>,
    costs: Vec<ScalarTerm>,
    ineqs: Vec<ScalarTerm>,
    eqs: Vec<ScalarTerm>,
}

fn block(offset: usize, len: usize) -> Vec<usize> {
    (offset..offset + len).collect()
}

impl Builder {
    fn new(biped: &Biped, terrain: &Terrain) -> Result<Self> {
        terrain.validate()?;
        Ok(Self {
            biped: Arc::new(biped.clone()),
            terrain: Arc::new(terrain.geometry()),
            costs: Vec::new(),
            ineqs: Vec::new(),
            eqs: Vec::new(),
        })
    }

    fn torque_cost(&mut self, label: String, offset: usize) {
        let biped = self.biped.clone();
        self.costs.push(ScalarTerm::from_residual_fn(
            label,
            block(offset, DOF),
            move |q| {
                let (tau, jac) = biped.gravity_torques(q);
                (tau.to_vec(), jac)
            },
        ));
    }

    /// Foot, support and collision constraints of one configuration.
    fn configuration_constraints(&mut self, prefix: &str, offset: usize, stance: &Stance) {
        for (side, target) in stance.contacts() {
            for (axis, name) in ["x", "y", "theta"].into_iter().enumerate() {
                let biped = self.biped.clone();
                let target = *target;
                self.eqs.push(ScalarTerm::from_fn(
                    TermKind::Equality,
                    format!("{prefix}contact/{}/{name}", side.name()),
                    block(offset, DOF),
                    move |q| {
                        let (r, jac) = foot_pose_residual(&biped, q, side, &target);
                        (r[axis], jac[axis].to_vec())
                    },
                ));
            }
        }

        let (lo, hi) = support_interval(stance, &self.biped);
        for (name, sign, bound) in [("lower", -1.0, lo), ("upper", 1.0, hi)] {
            let biped = self.biped.clone();
            self.ineqs.push(ScalarTerm::from_fn(
                TermKind::Inequality,
                format!("{prefix}com/{name}"),
                block(offset, DOF),
                move |q| {
                    let com = biped.center_of_mass(q);
                    let g = com.jx.iter().map(|v| sign * v).collect();
                    (sign * (com.p.x - bound), g)
                },
            ));
        }

        let contact = [stance.in_contact(Side::Left), stance.in_contact(Side::Right)];
        for pair in collision_pairs(contact, self.terrain.obstacles.len()) {
            let biped = self.biped.clone();
            let terrain = self.terrain.clone();
            self.ineqs.push(ScalarTerm::from_fn(
                TermKind::Inequality,
                format!("{prefix}collision/{}", pair.label()),
                block(offset, DOF),
                move |q| {
                    let (sd, g) = pair.signed_distance(&biped, &terrain, q);
                    (-sd, g.iter().map(|v| -v).collect())
                },
            ));
        }
    }

    /// Collision constraints on the midpoint of waypoints `t` and `t + 1`.
    fn midpoint_constraints(&mut self, t: usize, a: &Stance, b: &Stance) {
        let contact = [
            a.in_contact(Side::Left) && b.in_contact(Side::Left),
            a.in_contact(Side::Right) && b.in_contact(Side::Right),
        ];
        for pair in collision_pairs(contact, self.terrain.obstacles.len()) {
            let biped = self.biped.clone();
            let terrain = self.terrain.clone();
            self.ineqs.push(ScalarTerm::from_fn(
                TermKind::Inequality,
                format!("mid{t}/collision/{}", pair.label()),
                block(t * DOF, 2 * DOF),
                move |x| {
                    let mut q = [0.0; DOF];
                    for k in 0..DOF {
                        q[k] = 0.5 * (x[k] + x[DOF + k]);
                    }
                    let (sd, g) = pair.signed_distance(&biped, &terrain, &q);
                    let mut grad = vec![0.0; 2 * DOF];
                    for k in 0..DOF {
                        grad[k] = -0.5 * g[k];
                        grad[DOF + k] = -0.5 * g[k];
                    }
                    (-sd, grad)
                },
            ));
        }
    }

    fn finish(self, dim: usize, set: LinearFeasibleSet) -> Result<SumStructuredProgram> {
        SumStructuredProgram::new(dim, self.costs, self.ineqs, self.eqs, set)
    }
}

fn limits_box(waypoints: usize) -> Result<LinearFeasibleSet> {
    let (lo, hi) = joint_limits();
    let lower = (0..waypoints).flat_map(|_| lo).collect();
    let upper = (0..waypoints).flat_map(|_| hi).collect();
    LinearFeasibleSet::boxed(lower, upper)
}

/// Minimum static torque posture for one stance.
pub fn build_posture_program(
    biped: &Biped,
    terrain: &Terrain,
    stance: &Stance,
) -> Result<SumStructuredProgram> {
    stance.validate()?;
    let mut b = Builder::new(biped, terrain)?;
    b.torque_cost("torque".into(), 0);
    b.configuration_constraints("", 0, stance);
    b.finish(DOF, limits_box(1)?)
}

/// Minimum squared-velocity trajectory through a window of stances, two
/// waypoints per stance. `q_fixed` pins the first waypoint.
pub fn build_trajectory_program(
    biped: &Biped,
    terrain: &Terrain,
    stances: &[Stance],
    q_fixed: Option<&[f64]>,
) -> Result<SumStructuredProgram> {
    if stances.is_empty() {
        return Err(Error::InvalidProgram("trajectory needs at least one stance".into()));
    }
    for s in stances {
        s.validate()?;
    }
    let n_way = 2 * stances.len();
    let mut b = Builder::new(biped, terrain)?;
    for t in 0..n_way - 1 {
        b.costs.push(ScalarTerm::from_residual_fn(
            format!("velocity/{t}"),
            block(t * DOF, 2 * DOF),
            |x| {
                let r = (0..DOF).map(|k| x[DOF + k] - x[k]).collect();
                let mut jac = vec![0.0; DOF * 2 * DOF];
                for k in 0..DOF {
                    jac[k * 2 * DOF + k] = -1.0;
                    jac[k * 2 * DOF + DOF + k] = 1.0;
                }
                (r, jac)
            },
        ));
    }
    for t in 0..n_way {
        b.configuration_constraints(&format!("wp{t}/"), t * DOF, &stances[t / 2]);
        if t + 1 < n_way {
            b.midpoint_constraints(t, &stances[t / 2], &stances[(t + 1) / 2]);
        }
    }
    let mut set = limits_box(n_way)?;
    if let Some(q0) = q_fixed {
        if q0.len() != DOF {
            return Err(Error::Dimension {
                expected: DOF,
                actual: q0.len(),
            });
        }
        for (k, &v) in q0.iter().enumerate() {
            set.pin(k, v);
        }
    }
    b.finish(n_way * DOF, set)
}
