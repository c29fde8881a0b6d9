//! Comparison runs and their tables.

use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::init::Condition;
use super::instance::{ProblemInstance, Task};
use super::methods::{MethodConfig, ProgramSolver};
use super::runner::{solve_instance, RunRecord};
use crate::error::{Error, Result};

/// Solves every (instance, method, condition) cell on `jobs` threads.
/// Records come back in cell order regardless of scheduling.
pub fn run_cells(
    instances: &[ProblemInstance],
    methods: &[MethodConfig],
    conditions: &[Condition],
    max_restarts: usize,
    jobs: usize,
) -> Result<Vec<RunRecord>> {
    let mut cells = Vec::new();
    for m in methods {
        m.validate()?;
        for &c in conditions {
            for inst in instances {
                cells.push((m, c, inst));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, c, inst)| {
                let out = solve_instance(m, inst, c, max_restarts)?;
                log::debug!(
                    "{} {} {}: success={} cost={:.6} t={:.3}s",
                    m.name(),
                    c.name(),
                    inst.id,
                    out.report.success,
                    out.report.cost,
                    out.report.time_s
                );
                Ok(RunRecord::new(inst, m.name(), m.fraction, c, max_restarts, &out))
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: Task,
    pub method: String,
    pub condition: Condition,
    pub multistarts: usize,
    /// Percent of terms per batch.
    pub sample_size: f64,
    pub instances: usize,
    pub success: usize,
    /// Averages over successful instances; NaN when there are none.
    pub mean_cost: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

fn row(records: &[&RunRecord], multistarts: usize, first_try: bool) -> TableRow {
    let r0 = records[0];
    let solved: Vec<_> = records
        .iter()
        .filter(|r| if first_try { r.first_try } else { r.success })
        .collect();
    let mean = |f: fn(&RunRecord) -> f64| {
        if solved.is_empty() {
            f64::NAN
        } else {
            solved.iter().map(|r| f(r)).sum::<f64>() / solved.len() as f64
        }
    };
    TableRow {
        task: r0.task,
        method: r0.method.clone(),
        condition: r0.condition,
        multistarts,
        sample_size: (r0.sample_size * 100.0).round(),
        instances: records.len(),
        success: solved.len(),
        mean_cost: mean(|r| r.cost),
        mean_time_s: mean(|r| r.time_s),
    }
}

impl ComparisonTable {
    /// One row per (task, method, condition, multistarts) group. Runs with
    /// restarts also yield the no-restart row: an instance counts as solved
    /// there when its first attempt succeeded.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut keys: Vec<(Task, &str, Condition, usize)> = Vec::new();
        for r in records {
            let k = (r.task, r.method.as_str(), r.condition, r.max_restarts);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let mut rows = Vec::new();
        for (task, method, condition, ms) in keys {
            let group: Vec<_> = records
                .iter()
                .filter(|r| r.task == task && r.method == method && r.condition == condition && r.max_restarts == ms)
                .collect();
            if ms > 0 {
                rows.push(row(&group, 0, true));
            }
            rows.push(row(&group, ms, false));
        }
        Self { rows }
    }

    pub fn find(&self, task: Task, method: &str, condition: Condition, multistarts: usize) -> Option<&TableRow> {
        self.rows.iter().find(|r| {
            r.task == task && r.method == method && r.condition == condition && r.multistarts == multistarts
        })
    }

    pub fn merge(&mut self, other: ComparisonTable) {
        for r in other.rows {
            let k = (r.task, r.method.clone(), r.condition, r.multistarts);
            match self
                .rows
                .iter_mut()
                .find(|s| (s.task, s.method.clone(), s.condition, s.multistarts) == k)
            {
                Some(s) => *s = r,
                None => self.rows.push(r),
            }
        }
    }

    pub fn write_csv<W: io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r).map_err(csv_error)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<TableRow>, _>>()
            .map_err(csv_error)?;
        Ok(Self { rows })
    }

    /// Text table with one column group per (task, condition).
    pub fn render(&self) -> String {
        let mut groups: Vec<(Task, Condition)> = Vec::new();
        let mut lines: Vec<(&str, usize, f64)> = Vec::new();
        for r in &self.rows {
            if !groups.contains(&(r.task, r.condition)) {
                groups.push((r.task, r.condition));
            }
            if !lines.contains(&(r.method.as_str(), r.multistarts, r.sample_size)) {
                lines.push((r.method.as_str(), r.multistarts, r.sample_size));
            }
        }
        let mut out = String::new();
        let _ = write!(out, "{:<14} {:>3} {:>4}", "Method", "MS", "%");
        for (task, cond) in &groups {
            let title = format!("{task:?} / {}", cond.name());
            let _ = write!(out, " | {title:^26}");
        }
        out.push('\n');
        let _ = write!(out, "{:<14} {:>3} {:>4}", "", "", "");
        for _ in &groups {
            let _ = write!(out, " | {:>7} {:>10} {:>7}", "Success", "Cost", "Time");
        }
        out.push('\n');
        for (method, ms, size) in lines {
            let name = method.split(' ').next().unwrap_or(method);
            let _ = write!(out, "{name:<14} {ms:>3} {size:>4}");
            for (task, cond) in &groups {
                match self
                    .rows
                    .iter()
                    .find(|r| r.method == method && r.multistarts == ms && r.task == *task && r.condition == *cond)
                {
                    Some(r) => {
                        let succ = format!("{}/{}", r.success, r.instances);
                        let cost = if r.mean_cost.is_nan() { "-".into() } else { format!("{:.4}", r.mean_cost) };
                        let time = if r.mean_time_s.is_nan() { "-".into() } else { format!("{:.3}", r.mean_time_s) };
                        let _ = write!(out, " | {succ:>7} {cost:>10} {time:>7}");
                    }
                    None => {
                        let _ = write!(out, " | {:>7} {:>10} {:>7}", "", "", "");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Schema {
        context: "report csv".into(),
        message: e.to_string(),
    }
}
