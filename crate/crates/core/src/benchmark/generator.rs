//! Seeded instance generator. Every instance is checked by a feasibility
//! probe and resampled when the probe fails.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::init::{initialize, Condition};
use super::instance::{Features, ProblemInstance, Task};
use super::methods::{mix_seed, Algorithm, MethodConfig};
use super::runner::multistart_solve;
use crate::error::{Error, Result};
use crate::problem::SumStructuredProgram;
use crate::robot::{
    build_posture_program, Biped, CollisionPair, FootPose, Link, PairTarget, Side, Stance, Terrain,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_posture: usize,
    pub n_trajectory: usize,
    /// Candidates tried per instance before it is skipped.
    pub max_attempts: usize,
    pub probe_restarts: usize,
}

impl GeneratorConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            n_posture: 50,
            n_trajectory: 50,
            max_attempts: 20,
            probe_restarts: 10,
        }
    }
}

const GROUND_EXTENT: f64 = 4.0;
/// Horizontal width of the steep segment that forms a step.
const STEP_RUN: f64 = 0.02;
const HALF_SOLE: f64 = 0.1;

fn deg(d: f64) -> f64 {
    d * PI / 180.0
}

fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

/// Ground with a step of height `rise` whose steep segment is centred at `edge`.
fn step_ground(edge: f64, rise: f64) -> Vec<[f64; 2]> {
    vec![
        [-GROUND_EXTENT, 0.0],
        [edge - STEP_RUN / 2.0, 0.0],
        [edge + STEP_RUN / 2.0, rise],
        [GROUND_EXTENT, rise],
    ]
}

fn flat_pose(x: f64, y: f64) -> FootPose {
    FootPose::new(x, y, 0.0)
}

struct Candidate {
    terrain: Terrain,
    stances: Vec<Stance>,
}

/// Obstacles around a robot standing over `[x_lo, x_hi]` (sole extent).
fn obstacles(rng: &mut ChaCha8Rng, terrain: &Terrain, x_lo: f64, x_hi: f64, count: usize) -> Vec<Vec<[f64; 2]>> {
    let mid = 0.5 * (x_lo + x_hi);
    let top = terrain.height(x_lo).max(terrain.height(x_hi));
    let mut out = Vec::new();
    let mut kinds = vec![0, 1, 2];
    for _ in 0..count {
        let k = kinds.remove(rng.random_range(0..kinds.len()));
        match k {
            // overhead beam forcing a crouch
            0 => {
                let y0 = top + rng.random_range(1.05..1.40);
                let a = mid - rng.random_range(0.3..0.8);
                let b = mid + rng.random_range(0.3..0.8);
                out.push(rect(a, b, y0, y0 + 0.2));
            }
            // low block just beyond a toe or heel
            1 => {
                let width = rng.random_range(0.1..0.3);
                let gap = rng.random_range(0.03..0.12);
                let (a, b) = if rng.random_bool(0.5) {
                    let a = x_hi + 0.06 + gap;
                    (a, a + width)
                } else {
                    let b = x_lo - 0.06 - gap;
                    (b - width, b)
                };
                let base = terrain.height(a).min(terrain.height(b)) - 0.1;
                let ground = terrain.height(a).max(terrain.height(b));
                out.push(rect(a, b, base, ground + rng.random_range(0.1..0.4)));
            }
            // hanging wall at torso height
            _ => {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let near = rng.random_range(0.22..0.40);
                let (a, b) = if sign > 0.0 {
                    (mid + near, mid + near + 0.2)
                } else {
                    (mid - near - 0.2, mid - near)
                };
                let y0 = top + rng.random_range(0.85..1.0);
                out.push(rect(a, b, y0, top + 2.0));
            }
        }
    }
    out
}

fn posture_candidate(rng: &mut ChaCha8Rng) -> Candidate {
    let kind = rng.random_range(0..3);
    let left_rear = rng.random_bool(0.5);
    let (ground, rear, front) = match kind {
        0 => {
            let len = rng.random_range(0.1..0.4);
            let xr = -len / 2.0 + rng.random_range(-0.05..0.05);
            (
                vec![[-GROUND_EXTENT, 0.0], [GROUND_EXTENT, 0.0]],
                flat_pose(xr, 0.0),
                flat_pose(xr + len, 0.0),
            )
        }
        1 => {
            let len = rng.random_range(0.25..0.4);
            let xr = -len / 2.0 + rng.random_range(-0.05..0.05);
            let xf = xr + len;
            let margin = HALF_SOLE + STEP_RUN / 2.0 + 0.005;
            let edge = rng.random_range(xr + margin..xf - margin);
            let rise = rng.random_range(0.03..0.25) * if rng.random_bool(0.7) { 1.0 } else { -1.0 };
            (step_ground(edge, rise), flat_pose(xr, 0.0), flat_pose(xf, rise))
        }
        _ => {
            let slope = rng.random_range(deg(5.0)..deg(20.0)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let len = rng.random_range(0.1..0.4);
            let xr = -len / 2.0 + rng.random_range(-0.05..0.05);
            let t = slope.tan();
            (
                vec![[-GROUND_EXTENT, -GROUND_EXTENT * t], [GROUND_EXTENT, GROUND_EXTENT * t]],
                FootPose::new(xr, xr * t, slope),
                FootPose::new(xr + len, (xr + len) * t, slope),
            )
        }
    };
    let mut terrain = Terrain {
        ground,
        obstacles: Vec::new(),
    };
    let count = rng.random_range(1..=3);
    let lo = rear.pos[0] - HALF_SOLE;
    let hi = front.pos[0] + HALF_SOLE;
    terrain.obstacles = obstacles(rng, &terrain, lo, hi, count);
    let stance = if left_rear {
        Stance::double(rear, front)
    } else {
        Stance::double(front, rear)
    };
    Candidate {
        terrain,
        stances: vec![stance],
    }
}

/// Alternating double and single support over evenly spaced footholds,
/// optionally climbing one step between two footholds.
fn trajectory_candidate(rng: &mut ChaCha8Rng) -> Candidate {
    let n: usize = rng.random_range(4..=14);
    let n_double = n.div_ceil(2);
    let n_holds = n_double + 1;
    let spacing = rng.random_range(0.15..0.2);
    let mut holds: Vec<f64> = (0..n_holds).map(|k| k as f64 * spacing).collect();
    let step_up = rng.random_bool(0.5);
    let mut rise = 0.0;
    let mut edge = f64::INFINITY;
    if step_up {
        let k = rng.random_range(1..n_holds - 1);
        let gap = rng.random_range(0.25..0.3);
        for h in holds.iter_mut().skip(k + 1) {
            *h += gap - spacing;
        }
        edge = 0.5 * (holds[k] + holds[k + 1]);
        rise = rng.random_range(0.05..0.2);
    }
    let shift = 0.5 * (holds[0] + holds[n_holds - 1]);
    for h in &mut holds {
        *h -= shift;
    }
    edge -= shift;
    let y = |x: f64| if x > edge { rise } else { 0.0 };
    let ground = if step_up {
        step_ground(edge, rise)
    } else {
        vec![[-GROUND_EXTENT, 0.0], [GROUND_EXTENT, 0.0]]
    };
    let mut terrain = Terrain {
        ground,
        obstacles: Vec::new(),
    };
    let first = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
    let mut feet = [None, None];
    let rear = first;
    let set = |feet: &mut [Option<FootPose>; 2], side: Side, pose: Option<FootPose>| match side {
        Side::Left => feet[0] = pose,
        Side::Right => feet[1] = pose,
    };
    set(&mut feet, rear, Some(flat_pose(holds[0], y(holds[0]))));
    set(&mut feet, rear.other(), Some(flat_pose(holds[1], y(holds[1]))));
    let mut stances = Vec::with_capacity(n);
    let mut moving = rear;
    let mut next_hold = 2;
    while stances.len() < n {
        stances.push(Stance {
            left: feet[0],
            right: feet[1],
        });
        if stances.len() == n {
            break;
        }
        let in_double = feet[0].is_some() && feet[1].is_some();
        if in_double {
            set(&mut feet, moving, None);
        } else {
            let x = holds[next_hold];
            set(&mut feet, moving, Some(flat_pose(x, y(x))));
            next_hold += 1;
            moving = moving.other();
        }
    }
    if rng.random_bool(0.5) {
        // a high beam over part of the walk
        let y0 = rise + rng.random_range(1.3..1.45);
        let a = holds[0] + rng.random_range(-0.3..0.3);
        let b = holds[n_holds - 1] + rng.random_range(-0.3..0.3);
        terrain.obstacles.push(rect(a.min(b - 0.3), b, y0, y0 + 0.2));
    }
    Candidate { terrain, stances }
}

fn features(biped: &Biped, candidate: &Candidate, probe: &[Vec<f64>]) -> Features {
    let mut last: [Option<FootPose>; 2] = [None, None];
    let mut step_length: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &candidate.stances {
        if let (Some(l), Some(r)) = (s.left, s.right) {
            step_length = step_length.max((l.pos[0] - r.pos[0]).abs());
        }
        for (k, side) in Side::BOTH.into_iter().enumerate() {
            if let Some(f) = s.foot(side) {
                if let Some(prev) = last[k] {
                    step_length = step_length.max((f.pos[0] - prev.pos[0]).abs());
                }
                last[k] = Some(*f);
                lo = lo.min(f.pos[1]);
                hi = hi.max(f.pos[1]);
            }
        }
    }
    let geo = candidate.terrain.geometry();
    let targets = std::iter::once(PairTarget::Ground).chain((0..geo.obstacles.len()).map(PairTarget::Obstacle));
    let mut trunk = f64::INFINITY;
    for target in targets {
        let pair = CollisionPair {
            link: Link::Torso,
            target,
        };
        for q in probe {
            trunk = trunk.min(pair.signed_distance(biped, &geo, q).0);
        }
    }
    Features {
        step_length,
        step_width: 0.0,
        step_height: hi - lo,
        trunk_collision_distance: trunk,
    }
}

/// SQP with restarts from the good initialization, one posture per stance.
fn probe(biped: &Biped, candidate: &Candidate, seed: u64, restarts: usize) -> Result<Option<Vec<Vec<f64>>>> {
    let solver = MethodConfig::new(Algorithm::Sqp);
    let mut out = Vec::with_capacity(candidate.stances.len());
    for (k, stance) in candidate.stances.iter().enumerate() {
        // feasibility only: the torque cost would straighten a free leg onto
        // the ground, where its clearance has no first-order escape
        let full = build_posture_program(biped, &candidate.terrain, stance)?;
        let program = SumStructuredProgram::new(
            full.dim(),
            Vec::new(),
            full.ineqs().to_vec(),
            full.eqs().to_vec(),
            full.feasible_set().clone(),
        )?;
        let single = ProblemInstance {
            id: String::new(),
            task: Task::Posture,
            seed,
            terrain: candidate.terrain.clone(),
            stances: vec![*stance],
            features: Features::default(),
            probe: None,
        };
        let x0 = initialize(&single, &biped.params, Condition::Good).concat();
        let report = multistart_solve(&solver, &program, &x0, seed, k, restarts)?;
        if !report.success {
            return Ok(None);
        }
        out.push(report.x);
    }
    Ok(Some(out))
}

fn generate_one(config: &GeneratorConfig, task: Task, index: usize) -> Result<Option<ProblemInstance>> {
    let biped = Biped::default();
    let stream = match task {
        Task::Posture => index as u64,
        Task::Trajectory => 1_000_000 + index as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let prefix = match task {
        Task::Posture => "posture",
        Task::Trajectory => "trajectory",
    };
    let id = format!("{prefix}_{index:03}");
    for attempt in 0..config.max_attempts {
        let candidate = match task {
            Task::Posture => posture_candidate(&mut rng),
            Task::Trajectory => trajectory_candidate(&mut rng),
        };
        candidate.terrain.validate()?;
        let seed = mix_seed(config.seed, stream);
        if let Some(p) = probe(&biped, &candidate, seed, config.probe_restarts)? {
            let inst = ProblemInstance {
                id: id.clone(),
                task,
                seed,
                features: features(&biped, &candidate, &p),
                terrain: candidate.terrain,
                stances: candidate.stances,
                probe: Some(p),
            };
            inst.validate()?;
            return Ok(Some(inst));
        }
        log::debug!("{id}: probe failed on attempt {attempt}, resampling");
    }
    log::warn!("{id}: no feasible candidate after {} attempts, skipped", config.max_attempts);
    Ok(None)
}

/// Posture instances first, then trajectories. Deterministic in the seed;
/// `jobs` only changes how many instances are probed at once.
pub fn generate_instances(config: &GeneratorConfig, jobs: usize) -> Result<Vec<ProblemInstance>> {
    use rayon::prelude::*;
    let jobs_list: Vec<(Task, usize)> = (0..config.n_posture)
        .map(|i| (Task::Posture, i))
        .chain((0..config.n_trajectory).map(|i| (Task::Trajectory, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let results: Vec<Option<ProblemInstance>> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(task, i)| generate_one(config, task, i))
            .collect::<Result<_>>()
    })?;
    Ok(results.into_iter().flatten().collect())
}
