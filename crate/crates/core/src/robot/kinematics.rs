//! Forward kinematics of the planar biped with analytic derivatives.
//!
//! Every landmark is `(q₀, q₁) + Σ cₛ·dir(wₛᵀq + φₛ)` with
//! `dir(θ) = (sin θ, −cos θ)`, which gives Jacobians and the Hessian of the
//! height in closed form.

use super::geometry::Vec2;
use super::{Side, DOF};

/// Link lengths, masses and collision radii.
#[derive(Debug, Clone, PartialEq)]
pub struct BipedParams {
    pub torso_length: f64,
    pub thigh_length: f64,
    pub shank_length: f64,
    pub foot_length: f64,
    pub torso_mass: f64,
    pub thigh_mass: f64,
    pub shank_mass: f64,
    pub foot_mass: f64,
    pub gravity: f64,
    pub torso_radius: f64,
    pub limb_radius: f64,
    /// The shank collision skeleton stops this far above the ankle.
    pub shank_clearance: f64,
}

impl Default for BipedParams {
    fn default() -> Self {
        Self {
            torso_length: 0.6,
            thigh_length: 0.4,
            shank_length: 0.4,
            foot_length: 0.2,
            torso_mass: 30.0,
            thigh_mass: 5.0,
            shank_mass: 4.0,
            foot_mass: 1.0,
            gravity: 9.81,
            torso_radius: 0.12,
            limb_radius: 0.06,
            shank_clearance: 0.10,
        }
    }
}

impl BipedParams {
    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 2.0 * (self.thigh_mass + self.shank_mass + self.foot_mass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Landmark {
    Base,
    TorsoTop,
    TorsoMid,
    Knee(Side),
    ThighMid(Side),
    Ankle(Side),
    ShankMid(Side),
    ShankLow(Side),
    Toe(Side),
    Heel(Side),
}

#[derive(Debug, Clone, Copy)]
struct Arm {
    coef: f64,
    w: [f64; DOF],
    phase: f64,
}

impl Arm {
    fn angle(&self, q: &[f64]) -> f64 {
        self.w.iter().zip(q).map(|(w, q)| w * q).sum::<f64>() + self.phase
    }
}

/// A landmark expression with at most three arms.
#[derive(Debug, Clone, Copy)]
pub struct PointExpr {
    arms: [Arm; 3],
    n: usize,
}

/// Position and `2 × DOF` Jacobian of a landmark.
#[derive(Debug, Clone, Copy)]
pub struct PointJacobian {
    pub p: Vec2,
    pub jx: [f64; DOF],
    pub jy: [f64; DOF],
}

impl PointExpr {
    fn new(arms: &[Arm]) -> Self {
        let blank = Arm {
            coef: 0.0,
            w: [0.0; DOF],
            phase: 0.0,
        };
        let mut a = [blank; 3];
        a[..arms.len()].copy_from_slice(arms);
        Self { arms: a, n: arms.len() }
    }

    fn arms(&self) -> &[Arm] {
        &self.arms[..self.n]
    }

    pub fn eval(&self, q: &[f64]) -> Vec2 {
        let mut p = Vec2::new(q[0], q[1]);
        for a in self.arms() {
            let th = a.angle(q);
            p += Vec2::new(th.sin(), -th.cos()) * a.coef;
        }
        p
    }

    pub fn jacobian(&self, q: &[f64]) -> PointJacobian {
        let mut jx = [0.0; DOF];
        let mut jy = [0.0; DOF];
        jx[0] = 1.0;
        jy[1] = 1.0;
        let mut p = Vec2::new(q[0], q[1]);
        for a in self.arms() {
            let th = a.angle(q);
            let (s, c) = th.sin_cos();
            p += Vec2::new(s, -c) * a.coef;
            for k in 0..DOF {
                if a.w[k] != 0.0 {
                    jx[k] += a.coef * a.w[k] * c;
                    jy[k] += a.coef * a.w[k] * s;
                }
            }
        }
        PointJacobian { p, jx, jy }
    }

    /// `∂²y/∂q∂q`, added into `h` with weight `scale`.
    pub fn add_height_hessian(&self, q: &[f64], scale: f64, h: &mut [[f64; DOF]; DOF]) {
        for a in self.arms() {
            let c = a.angle(q).cos() * a.coef * scale;
            for k in 0..DOF {
                if a.w[k] == 0.0 {
                    continue;
                }
                for l in 0..DOF {
                    h[k][l] += c * a.w[k] * a.w[l];
                }
            }
        }
    }
}

/// A link frame: origin and rotation from the zero pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub origin: [f64; 2],
    pub angle: f64,
}

/// The planar biped. See [`crate::robot`] for the configuration layout.
#[derive(Debug, Clone, Default)]
pub struct Biped {
    pub params: BipedParams,
}

fn weights(entries: &[(usize, f64)]) -> [f64; DOF] {
    let mut w = [0.0; DOF];
    for &(k, v) in entries {
        w[k] = v;
    }
    w
}

impl Biped {
    pub fn new(params: BipedParams) -> Self {
        Self { params }
    }

    fn thigh(side: Side, coef: f64) -> Arm {
        Arm {
            coef,
            w: weights(&[(side.hip(), 1.0)]),
            phase: 0.0,
        }
    }

    fn shank(side: Side, coef: f64) -> Arm {
        Arm {
            coef,
            w: weights(&[(side.hip(), 1.0), (side.knee(), -1.0)]),
            phase: 0.0,
        }
    }

    fn sole(side: Side, coef: f64) -> Arm {
        Arm {
            coef,
            w: weights(&[(side.hip(), 1.0), (side.knee(), -1.0), (side.ankle(), 1.0)]),
            phase: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn landmark(&self, lm: Landmark) -> PointExpr {
        let p = &self.params;
        let torso = |coef| Arm {
            coef,
            w: weights(&[(2, 1.0)]),
            phase: 0.0,
        };
        match lm {
            Landmark::Base => PointExpr::new(&[]),
            Landmark::TorsoTop => PointExpr::new(&[torso(-p.torso_length)]),
            Landmark::TorsoMid => PointExpr::new(&[torso(-p.torso_length / 2.0)]),
            Landmark::Knee(s) => PointExpr::new(&[Self::thigh(s, p.thigh_length)]),
            Landmark::ThighMid(s) => PointExpr::new(&[Self::thigh(s, p.thigh_length / 2.0)]),
            Landmark::Ankle(s) => PointExpr::new(&[
                Self::thigh(s, p.thigh_length),
                Self::shank(s, p.shank_length),
            ]),
            Landmark::ShankMid(s) => PointExpr::new(&[
                Self::thigh(s, p.thigh_length),
                Self::shank(s, p.shank_length / 2.0),
            ]),
            Landmark::ShankLow(s) => PointExpr::new(&[
                Self::thigh(s, p.thigh_length),
                Self::shank(s, p.shank_length - p.shank_clearance),
            ]),
            Landmark::Toe(s) => PointExpr::new(&[
                Self::thigh(s, p.thigh_length),
                Self::shank(s, p.shank_length),
                Self::sole(s, p.foot_length / 2.0),
            ]),
            Landmark::Heel(s) => PointExpr::new(&[
                Self::thigh(s, p.thigh_length),
                Self::shank(s, p.shank_length),
                Self::sole(s, -p.foot_length / 2.0),
            ]),
        }
    }

    /// Sole angle from horizontal.
    pub fn sole_angle(q: &[f64], side: Side) -> f64 {
        q[side.hip()] - q[side.knee()] + q[side.ankle()]
    }

    fn mass_points(&self) -> [(Landmark, f64); 7] {
        let p = &self.params;
        [
            (Landmark::TorsoMid, p.torso_mass),
            (Landmark::ThighMid(Side::Left), p.thigh_mass),
            (Landmark::ShankMid(Side::Left), p.shank_mass),
            (Landmark::Ankle(Side::Left), p.foot_mass),
            (Landmark::ThighMid(Side::Right), p.thigh_mass),
            (Landmark::ShankMid(Side::Right), p.shank_mass),
            (Landmark::Ankle(Side::Right), p.foot_mass),
        ]
    }

    /// Center of mass and its Jacobian.
    pub fn center_of_mass(&self, q: &[f64]) -> PointJacobian {
        let total = self.params.total_mass();
        let mut out = PointJacobian {
            p: Vec2::zeros(),
            jx: [0.0; DOF],
            jy: [0.0; DOF],
        };
        for (lm, m) in self.mass_points() {
            let j = self.landmark(lm).jacobian(q);
            let w = m / total;
            out.p += j.p * w;
            for k in 0..DOF {
                out.jx[k] += j.jx[k] * w;
                out.jy[k] += j.jy[k] * w;
            }
        }
        out
    }

    /// Gravitational potential energy.
    pub fn potential(&self, q: &[f64]) -> f64 {
        self.mass_points()
            .iter()
            .map(|&(lm, m)| m * self.params.gravity * self.landmark(lm).eval(q).y)
            .sum()
    }

    /// Gravity-compensation torques of the six leg joints (`∂U/∂q`) and
    /// their row-major `6 × DOF` Jacobian.
    pub fn gravity_torques(&self, q: &[f64]) -> ([f64; 6], Vec<f64>) {
        let g = self.params.gravity;
        let mut grad = [0.0; DOF];
        let mut hess = [[0.0; DOF]; DOF];
        for (lm, m) in self.mass_points() {
            let expr = self.landmark(lm);
            let j = expr.jacobian(q);
            for k in 0..DOF {
                grad[k] += m * g * j.jy[k];
            }
            expr.add_height_hessian(q, m * g, &mut hess);
        }
        let mut tau = [0.0; 6];
        let mut jac = vec![0.0; 6 * DOF];
        for i in 0..6 {
            tau[i] = grad[3 + i];
            jac[i * DOF..(i + 1) * DOF].copy_from_slice(&hess[3 + i]);
        }
        (tau, jac)
    }

    /// Frames of the base, torso and each leg link.
    pub fn forward_kinematics(&self, q: &[f64]) -> Vec<Frame> {
        let frame = |name: &str, lm: Landmark, angle: f64| {
            let p = self.landmark(lm).eval(q);
            Frame {
                name: name.to_string(),
                origin: [p.x, p.y],
                angle,
            }
        };
        let mut frames = vec![
            frame("base", Landmark::Base, 0.0),
            frame("torso", Landmark::Base, q[2]),
        ];
        for side in [Side::Left, Side::Right] {
            let n = side.name();
            frames.push(frame(&format!("thigh_{n}"), Landmark::Base, q[side.hip()]));
            frames.push(frame(
                &format!("shank_{n}"),
                Landmark::Knee(side),
                q[side.hip()] - q[side.knee()],
            ));
            frames.push(frame(&format!("foot_{n}"), Landmark::Ankle(side), Self::sole_angle(q, side)));
        }
        frames
    }
}
