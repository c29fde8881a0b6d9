//! Problem and solution files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{Stance, Terrain, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Posture,
    Trajectory,
}

/// Descriptive statistics of an instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Features {
    /// Largest horizontal distance between consecutive foot targets (m).
    pub step_length: f64,
    /// Lateral foot separation; always zero for the planar robot (m).
    pub step_width: f64,
    /// Largest height difference between foot targets (m).
    pub step_height: f64,
    /// Smallest torso-to-obstacle signed distance at the probe solution (m).
    pub trunk_collision_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub task: Task,
    /// Seeds the multistart perturbations of this instance.
    pub seed: u64,
    pub terrain: Terrain,
    pub stances: Vec<Stance>,
    pub features: Features,
    /// Feasible configuration found by the generator, one per stance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<Vec<Vec<f64>>>,
}

impl ProblemInstance {
    pub fn waypoint_count(&self) -> usize {
        match self.task {
            Task::Posture => 1,
            Task::Trajectory => 2 * self.stances.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |message: String| Error::Schema {
            context: self.id.clone(),
            message,
        };
        self.terrain.validate().map_err(|e| schema(e.to_string()))?;
        for (k, s) in self.stances.iter().enumerate() {
            s.validate().map_err(|e| schema(format!("stances[{k}]: {e}")))?;
        }
        match self.task {
            Task::Posture if self.stances.len() != 1 => {
                Err(schema("posture instances have exactly one stance".into()))
            }
            Task::Trajectory if self.stances.is_empty() => {
                Err(schema("trajectory instances need stances".into()))
            }
            Task::Trajectory => {
                for (k, w) in self.stances.windows(2).enumerate() {
                    let changed = (w[0].left != w[1].left) as usize + (w[0].right != w[1].right) as usize;
                    if changed != 1 {
                        return Err(schema(format!(
                            "stances {k} and {} must differ in exactly one foot",
                            k + 1
                        )));
                    }
                }
                Ok(())
            }
            Task::Posture => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverMeta {
    pub name: String,
    pub seed: u64,
    pub restarts: usize,
    pub time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub instance_id: String,
    pub waypoints: Vec<Vec<f64>>,
    pub solver: SolverMeta,
}

impl SolutionFile {
    /// Checks shape against `instance`.
    pub fn validate_for(&self, instance: &ProblemInstance) -> Result<()> {
        let schema = |message: String| Error::Schema {
            context: format!("solution for {}", self.instance_id),
            message,
        };
        if self.instance_id != instance.id {
            return Err(schema(format!("instance_id does not match `{}`", instance.id)));
        }
        if self.waypoints.len() != instance.waypoint_count() {
            return Err(schema(format!(
                "field `waypoints`: expected {} waypoints, found {}",
                instance.waypoint_count(),
                self.waypoints.len()
            )));
        }
        for (k, w) in self.waypoints.iter().enumerate() {
            if w.len() != DOF {
                return Err(schema(format!("field `waypoints[{k}]`: expected {DOF} values, found {}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(schema(format!("field `waypoints[{k}]`: non-finite value")));
            }
        }
        Ok(())
    }

    /// Waypoints concatenated into one decision vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.waypoints.concat()
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        context: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let inst: ProblemInstance = read_json(path)?;
    inst.validate()?;
    Ok(inst)
}

pub fn save_instance(path: &Path, instance: &ProblemInstance) -> Result<()> {
    write_json(path, instance)
}

pub fn load_solution(path: &Path) -> Result<SolutionFile> {
    read_json(path)
}

pub fn save_solution(path: &Path, solution: &SolutionFile) -> Result<()> {
    write_json(path, solution)
}

/// List of instance files written next to the instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub posture: Vec<String>,
    pub trajectory: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn save_suite(dir: &Path, seed: u64, instances: &[ProblemInstance]) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest {
        seed,
        posture: Vec::new(),
        trajectory: Vec::new(),
    };
    for inst in instances {
        let file = format!("{}.json", inst.id);
        save_instance(&dir.join(&file), inst)?;
        match inst.task {
            Task::Posture => manifest.posture.push(file),
            Task::Trajectory => manifest.trajectory.push(file),
        }
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads every instance listed in the directory's manifest, posture first.
pub fn load_suite(dir: &Path) -> Result<Vec<ProblemInstance>> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    manifest
        .posture
        .iter()
        .chain(&manifest.trajectory)
        .map(|f| load_instance(&dir.join(f)))
        .collect()
}
