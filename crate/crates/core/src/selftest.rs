//! Finite-difference gradient checks and a grid-search QP oracle, shared by
//! the `selftest` command and the test suites.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::problem::{smoothed_value_and_gradient, LinearFeasibleSet};
use crate::qp::{solve_qp, QpStatus, QuadraticProgram};
use crate::robot::{
    build_posture_program, foot_pose_residual, Biped, CollisionPair, FootPose, Link, PairTarget,
    Side, Stance, Terrain, DOF,
};

pub const FD_STEP: f64 = 1e-6;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Worst relative error of one family of gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub family: &'static str,
    /// Gradients compared (one per output component and configuration).
    pub samples: usize,
    /// Samples dropped because the function is not differentiable there.
    pub skipped: usize,
    pub max_rel_error: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADIENT_TOLERANCE
    }
}

/// `‖a − fd‖∞ / max(‖fd‖∞, 1)`.
pub fn relative_error(analytic: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / scale
}

/// Central differences of `f` at `x`, or `None` when one-sided differences
/// disagree with them (a kink such as a closest-point switch).
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Option<Vec<f64>> {
    let f0 = f(x);
    let mut out = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        xp[k] = x[k] + h;
        let fp = f(&xp);
        xp[k] = x[k] - h;
        let fm = f(&xp);
        xp[k] = x[k];
        let c = (fp - fm) / (2.0 * h);
        let (fwd, bwd) = ((fp - f0) / h, (f0 - fm) / h);
        if (fwd - bwd).abs() > 1e-3 * c.abs().max(1.0) {
            return None;
        }
        out.push(c);
    }
    Some(out)
}

pub fn random_configuration(rng: &mut impl Rng) -> [f64; DOF] {
    let mut q = [0.0; DOF];
    q[0] = rng.random_range(-0.3..0.3);
    q[1] = rng.random_range(0.45..1.0);
    q[2] = rng.random_range(-0.6..0.6);
    for side in Side::BOTH {
        q[side.hip()] = rng.random_range(-1.8..1.8);
        q[side.knee()] = rng.random_range(0.05..2.4);
        q[side.ankle()] = rng.random_range(-0.9..0.9);
    }
    q
}

/// Uneven ground with a step and a slope, plus a block and an overhead beam.
pub fn check_terrain() -> Terrain {
    Terrain {
        ground: vec![[-3.0, 0.0], [0.05, 0.0], [0.07, 0.12], [0.6, 0.12], [1.2, 0.3], [3.0, 0.3]],
        obstacles: vec![
            vec![[0.25, 0.12], [0.45, 0.12], [0.45, 0.35], [0.25, 0.35]],
            vec![[-1.0, 1.2], [1.0, 1.2], [1.0, 1.4], [-1.0, 1.4]],
        ],
    }
}

struct Family {
    name: &'static str,
    samples: usize,
    skipped: usize,
    worst: f64,
}

impl Family {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: 0,
            skipped: 0,
            worst: 0.0,
        }
    }

    fn check(&mut self, analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64]) {
        match central_difference(f, x, FD_STEP) {
            Some(fd) => {
                self.samples += 1;
                self.worst = self.worst.max(relative_error(analytic, &fd));
            }
            None => self.skipped += 1,
        }
    }

    fn finish(self) -> GradientCheck {
        GradientCheck {
            family: self.name,
            samples: self.samples,
            skipped: self.skipped,
            max_rel_error: self.worst,
        }
    }
}

/// Checks every analytic gradient family at `n` random configurations.
pub fn gradient_checks(n: usize, seed: u64) -> Result<Vec<GradientCheck>> {
    let biped = Biped::default();
    let terrain = check_terrain();
    let geo = terrain.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = FootPose::new(0.1, 0.0, 0.2);
    let stance = Stance::double(FootPose::new(-0.1, 0.0, 0.0), FootPose::new(0.3, 0.12, 0.0));
    let program = build_posture_program(&biped, &terrain, &stance)?;
    let all: Vec<usize> = (0..program.n_terms()).collect();
    let mut pairs: Vec<CollisionPair> = Link::ALL
        .iter()
        .flat_map(|&link| {
            [PairTarget::Ground, PairTarget::Obstacle(0), PairTarget::Obstacle(1)]
                .map(|target| CollisionPair { link, target })
        })
        .collect();
    pairs.push(CollisionPair {
        link: Link::Torso,
        target: PairTarget::Link(Link::Foot(Side::Left)),
    });
    pairs.push(CollisionPair {
        link: Link::Torso,
        target: PairTarget::Link(Link::Shank(Side::Right)),
    });

    let mut foot = Family::new("foot residual");
    let mut com = Family::new("center of mass");
    let mut torque = Family::new("static torques");
    let mut sd = Family::new("signed distance");
    let mut penalized = Family::new("penalized objective");
    let mut configs = 0;
    let mut sd_total = 0;
    while configs < n || sd_total < n {
        let q = random_configuration(&mut rng);
        if configs < n {
            configs += 1;
            for side in Side::BOTH {
                let (_, jac) = foot_pose_residual(&biped, &q, side, &target);
                for (i, row) in jac.iter().enumerate() {
                    foot.check(row, &mut |x| foot_pose_residual(&biped, x, side, &target).0[i], &q);
                }
            }
            let c = biped.center_of_mass(&q);
            com.check(&c.jx, &mut |x| biped.center_of_mass(x).p.x, &q);
            com.check(&c.jy, &mut |x| biped.center_of_mass(x).p.y, &q);
            let (_, jac) = biped.gravity_torques(&q);
            for i in 0..6 {
                torque.check(&jac[i * DOF..(i + 1) * DOF], &mut |x| biped.gravity_torques(x).0[i], &q);
            }
            let (_, g) = smoothed_value_and_gradient(&program, &q, 10.0, &all, 100.0)?;
            let mut f = |x: &[f64]| {
                smoothed_value_and_gradient(&program, x, 10.0, &all, 100.0)
                    .map(|(v, _)| v)
                    .unwrap_or(f64::NAN)
            };
            penalized.check(&g, &mut f, &q);
        }
        // every pair at each configuration; a configuration counts once it
        // yields at least one differentiable pair
        let before = sd.samples;
        for pair in &pairs {
            let (_, g) = pair.signed_distance(&biped, &geo, &q);
            sd.check(&g, &mut |x| pair.signed_distance(&biped, &geo, x).0, &q);
        }
        if sd.samples > before {
            sd_total += 1;
        }
    }
    Ok(vec![
        foot.finish(),
        com.finish(),
        torque.finish(),
        sd.finish(),
        penalized.finish(),
    ])
}

/// Agreement of one QP with its grid-search oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct QpOracleCase {
    pub dim: usize,
    pub objective: f64,
    pub grid_objective: f64,
    pub kkt_residual: f64,
    pub optimal: bool,
}

impl QpOracleCase {
    /// The grid minimum can only sit above the true one.
    pub fn gap(&self) -> f64 {
        self.grid_objective - self.objective
    }

    pub fn passed(&self, objective_tol: f64, kkt_tol: f64) -> bool {
        self.optimal && self.gap().abs() <= objective_tol && self.kkt_residual <= kkt_tol
    }
}

pub const GRID_STEP: f64 = 1e-3;

/// Random box-constrained QP in dimension `d`, with widths kept small enough
/// for an exhaustive grid.
pub fn random_box_qp(rng: &mut impl Rng, d: usize) -> QuadraticProgram {
    let width = match d {
        1 => 2.0,
        2 => 0.6,
        _ => 0.12,
    };
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let q = a.transpose() * &a + DMatrix::identity(d, d) * rng.random_range(0.0..0.5);
    let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + width).collect();
    // center the unconstrained minimizer near the box so both interior and
    // active solutions occur
    let centre: Vec<f64> = lower
        .iter()
        .map(|l| l + width * rng.random_range(-0.5..1.5))
        .collect();
    let c = -(&q * nalgebra::DVector::from_vec(centre));
    QuadraticProgram {
        q,
        c: c.as_slice().to_vec(),
        feasible_set: LinearFeasibleSet::boxed(lower, upper).expect("ordered bounds"),
    }
}

fn qp_value(qp: &QuadraticProgram, x: &[f64]) -> f64 {
    let d = x.len();
    let mut v = 0.0;
    for i in 0..d {
        v += qp.c[i] * x[i];
        for j in 0..d {
            v += 0.5 * x[i] * qp.q[(i, j)] * x[j];
        }
    }
    v
}

/// Exhaustive search over a `GRID_STEP` lattice of the box, including its
/// upper faces.
pub fn grid_oracle(qp: &QuadraticProgram) -> f64 {
    let set = &qp.feasible_set;
    let d = set.dim();
    let (lo, hi) = (&set.lower, &set.upper);
    let counts: Vec<usize> = (0..d)
        .map(|j| ((hi[j] - lo[j]) / GRID_STEP).round() as usize + 1)
        .collect();
    let coord = |j: usize, k: usize| (lo[j] + k as f64 * GRID_STEP).min(hi[j]);
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    loop {
        for j in 0..d {
            x[j] = coord(j, idx[j]);
        }
        best = best.min(qp_value(qp, &x));
        let mut j = 0;
        loop {
            if j == d {
                return best;
            }
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Solves `n` random box QPs of dimension 1, 2, 3 in turn against the grid.
pub fn qp_oracle_cases(n: usize, seed: u64) -> Result<Vec<QpOracleCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let d = 1 + k % 3;
            let qp = random_box_qp(&mut rng, d);
            let sol = solve_qp(&qp)?;
            Ok(QpOracleCase {
                dim: d,
                objective: sol.objective,
                grid_objective: grid_oracle(&qp),
                kkt_residual: sol.kkt_residual,
                optimal: sol.status == QpStatus::Optimal,
            })
        })
        .collect()
}
