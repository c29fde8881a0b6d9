//! Planar nine-DOF biped, terrain and the posture/trajectory programs.
//!
//! Configuration layout: `q = [base_x, base_y, pitch, hip_l, knee_l,
//! ankle_l, hip_r, knee_r, ankle_r]`. Both hips are mounted at the base
//! point, so torso pitch does not move the legs.

pub mod collision;
pub mod geometry;
pub mod kinematics;
pub mod program;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub use collision::{CollisionPair, Link, PairTarget};
pub use geometry::{ConvexPolygon, Ground, Segment, Vec2};
pub use kinematics::{Biped, BipedParams, Frame, Landmark};
pub use program::{
    build_posture_program, build_trajectory_program, foot_pose_residual, support_interval,
};

pub const DOF: usize = 9;

/// Joint limits `(lower, upper)` for hip, knee and ankle.
pub const HIP_LIMITS: (f64, f64) = (-2.0, 2.0);
pub const KNEE_LIMITS: (f64, f64) = (0.0, 2.5);
pub const ANKLE_LIMITS: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn hip(self) -> usize {
        match self {
            Side::Left => 3,
            Side::Right => 6,
        }
    }

    pub fn knee(self) -> usize {
        self.hip() + 1
    }

    pub fn ankle(self) -> usize {
        self.hip() + 2
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Target pose of a sole: midpoint position and orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub pos: [f64; 2],
    pub angle: f64,
}

impl FootPose {
    pub fn new(x: f64, y: f64, angle: f64) -> Self {
        Self {
            pos: [x, y],
            angle: wrap_angle(angle),
        }
    }
}

/// Feet in contact and their target poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stance {
    pub left: Option<FootPose>,
    pub right: Option<FootPose>,
}

impl Stance {
    pub fn double(left: FootPose, right: FootPose) -> Self {
        Self {
            left: Some(left),
            right: Some(right),
        }
    }

    pub fn foot(&self, side: Side) -> Option<&FootPose> {
        match side {
            Side::Left => self.left.as_ref(),
            Side::Right => self.right.as_ref(),
        }
    }

    pub fn contacts(&self) -> impl Iterator<Item = (Side, &FootPose)> {
        Side::BOTH
            .into_iter()
            .filter_map(move |s| self.foot(s).map(|f| (s, f)))
    }

    pub fn in_contact(&self, side: Side) -> bool {
        self.foot(side).is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.left.is_none() && self.right.is_none() {
            return Err(Error::InvalidProgram("stance has no foot in contact".into()));
        }
        for (_, f) in self.contacts() {
            if !(f.pos[0].is_finite() && f.pos[1].is_finite() && f.angle.is_finite()) {
                return Err(Error::InvalidProgram("non-finite foot target".into()));
            }
        }
        Ok(())
    }
}

/// Ground polyline plus convex obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub ground: Vec<[f64; 2]>,
    #[serde(default)]
    pub obstacles: Vec<Vec<[f64; 2]>>,
}

impl Terrain {
    pub fn flat(x0: f64, x1: f64) -> Self {
        Self {
            ground: vec![[x0, 0.0], [x1, 0.0]],
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ground.len() < 2 {
            return Err(Error::InvalidProgram("ground needs at least two points".into()));
        }
        if self.ground.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(Error::InvalidProgram(
                "ground x-coordinates must be strictly increasing".into(),
            ));
        }
        for (k, poly) in self.obstacles.iter().enumerate() {
            if !ConvexPolygon::new(poly).is_convex_ccw() {
                return Err(Error::InvalidProgram(format!(
                    "obstacle {k} is not a convex counterclockwise polygon"
                )));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> TerrainGeometry {
        TerrainGeometry {
            ground: Ground::new(&self.ground),
            obstacles: self.obstacles.iter().map(|p| ConvexPolygon::new(p)).collect(),
        }
    }

    /// Ground height at `x` (flat continuation beyond the ends).
    pub fn height(&self, x: f64) -> f64 {
        Ground::new(&self.ground).height(x)
    }
}

/// Terrain in the form used by the distance routines.
#[derive(Debug, Clone)]
pub struct TerrainGeometry {
    pub ground: Ground,
    pub obstacles: Vec<ConvexPolygon>,
}

/// Box of joint limits over one configuration; base and pitch unbounded.
pub fn joint_limits() -> ([f64; DOF], [f64; DOF]) {
    let mut lo = [f64::NEG_INFINITY; DOF];
    let mut hi = [f64::INFINITY; DOF];
    for side in Side::BOTH {
        (lo[side.hip()], hi[side.hip()]) = HIP_LIMITS;
        (lo[side.knee()], hi[side.knee()]) = KNEE_LIMITS;
        (lo[side.ankle()], hi[side.ankle()]) = ANKLE_LIMITS;
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn terrain_validation() {
        assert!(Terrain::flat(-1.0, 1.0).validate().is_ok());
        let bad = Terrain {
            ground: vec![[0.0, 0.0], [0.0, 1.0]],
            obstacles: vec![],
        };
        assert!(bad.validate().is_err());
        let cw = Terrain {
            ground: vec![[0.0, 0.0], [1.0, 0.0]],
            obstacles: vec![vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]],
        };
        assert!(cw.validate().is_err());
    }
}
