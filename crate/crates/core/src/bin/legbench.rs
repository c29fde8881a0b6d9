use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use legbench::benchmark::{
    evaluate_solution, generate_instances, load_solution, load_suite, save_solution, save_suite,
    solve_instance, Algorithm, ComparisonTable, Condition, GeneratorConfig, MethodConfig,
    ProblemInstance, RunRecord, Task, TOLERANCE,
};
use legbench::selftest::{gradient_checks, qp_oracle_cases};
use legbench::{Error, Result};

#[derive(Parser)]
#[command(name = "legbench", version, about = "Legged-robot posture and trajectory solver benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the posture and trajectory instance suite.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "instances")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        posture: usize,
        #[arg(long, default_value_t = 50)]
        trajectory: usize,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run one method under one initialization over a suite.
    Solve(SolveArgs),
    /// Score a directory of solution files.
    Evaluate {
        #[arg(long, default_value = "instances")]
        instances: PathBuf,
        #[arg(long)]
        solutions: PathBuf,
        #[arg(long, default_value_t = TOLERANCE)]
        tolerance: f64,
    },
    /// Merge report CSV files and print the comparison table.
    Report {
        /// Report CSV files to merge, later files winning on duplicate rows.
        #[arg(long = "report", required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// Where to write the merged CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient checks and the QP oracle suite.
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "instances")]
    instances: PathBuf,
    #[arg(long, default_value = "solutions")]
    solutions: PathBuf,
    /// Comparison table CSV the new rows are merged into.
    #[arg(long, default_value = "report.csv")]
    report: PathBuf,
    #[arg(long, value_parser = parse_algorithm)]
    method: Algorithm,
    #[arg(long, value_parser = parse_condition, default_value = "good")]
    condition: Condition,
    #[arg(long, default_value_t = 10)]
    multistarts: usize,
    /// Fraction of terms per batch; the method's default when omitted.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated penalty weights, e.g. `1e2,1e4,1e6`.
    #[arg(long, value_delimiter = ',')]
    mu_ladder: Option<Vec<f64>>,
    /// Wall-clock limit per solver run, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Restrict to one task.
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_condition(s: &str) -> std::result::Result<Condition, String> {
    match s {
        "good" => Ok(Condition::Good),
        "in_collision" => Ok(Condition::InCollision),
        _ => Err(format!("unknown condition `{s}` (good, in_collision)")),
    }
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "posture" => Ok(Task::Posture),
        "trajectory" => Ok(Task::Trajectory),
        _ => Err(format!("unknown task `{s}` (posture, trajectory)")),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            seed,
            out,
            posture,
            trajectory,
            jobs,
        } => generate(seed, &out, posture, trajectory, jobs),
        Command::Solve(args) => solve(&args),
        Command::Evaluate {
            instances,
            solutions,
            tolerance,
        } => evaluate(&instances, &solutions, tolerance),
        Command::Report { reports, out } => report(&reports, out.as_deref()),
        Command::Selftest { seed } => selftest(seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn generate(seed: u64, out: &Path, posture: usize, trajectory: usize, jobs: usize) -> Result<bool> {
    let config = GeneratorConfig {
        n_posture: posture,
        n_trajectory: trajectory,
        ..GeneratorConfig::new(seed)
    };
    let t = Instant::now();
    let instances = generate_instances(&config, jobs)?;
    let manifest = save_suite(out, seed, &instances)?;
    println!(
        "wrote {} posture and {} trajectory instances to {} in {:.1}s",
        manifest.posture.len(),
        manifest.trajectory.len(),
        out.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(manifest.posture.len() == posture && manifest.trajectory.len() == trajectory)
}

fn run_dir(method: &MethodConfig, condition: Condition, multistarts: usize) -> String {
    format!(
        "{}-{}-{}-ms{}",
        method.algorithm.key(),
        (method.fraction * 100.0).round(),
        condition.name(),
        multistarts
    )
}

const RECORDS_FILE: &str = "records.csv";

fn solve(args: &SolveArgs) -> Result<bool> {
    let mut method = MethodConfig::new(args.method);
    if let Some(f) = args.fraction {
        method.fraction = f;
    }
    method.seed = args.seed;
    method.time_limit_s = args.time_limit;
    if let Some(ladder) = &args.mu_ladder {
        method.penalty.mu_ladder = ladder.clone();
    }
    method.validate()?;

    let instances: Vec<ProblemInstance> = load_suite(&args.instances)?
        .into_iter()
        .filter(|i| args.task.is_none_or(|t| i.task == t))
        .collect();
    let dir = args.solutions.join(run_dir(&method, args.condition, args.multistarts));
    fs::create_dir_all(&dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let records = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| {
                let out = solve_instance(&method, inst, args.condition, args.multistarts)?;
                save_solution(&dir.join(format!("{}.json", inst.id)), &out.solution_file(inst, &method))?;
                log::info!("{}: success={} cost={:.6}", inst.id, out.report.success, out.report.cost);
                Ok(RunRecord::new(
                    inst,
                    method.label(),
                    method.fraction,
                    args.condition,
                    args.multistarts,
                    &out,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // keep records of instances not solved in this run
    let path = dir.join(RECORDS_FILE);
    let mut all: Vec<RunRecord> = match csv::Reader::from_path(&path) {
        Ok(mut rd) => rd.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error)?,
        Err(_) => Vec::new(),
    };
    all.retain(|old| records.iter().all(|r| r.instance_id != old.instance_id));
    all.extend(records.iter().cloned());
    let mut wr = csv::Writer::from_path(&path).map_err(csv_error)?;
    for r in &all {
        wr.serialize(r).map_err(csv_error)?;
    }
    wr.flush()?;

    let new = ComparisonTable::from_records(&records);
    let mut table = if args.report.exists() {
        ComparisonTable::read_csv(fs::File::open(&args.report)?)?
    } else {
        ComparisonTable::default()
    };
    table.merge(new.clone());
    table.write_csv(fs::File::create(&args.report)?)?;
    print!("{}", new.render());
    Ok(true)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Schema {
        context: RECORDS_FILE.into(),
        message: e.to_string(),
    }
}

/// Directories under `root` (itself included) that hold solution files.
fn solution_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let mut has_json = false;
    let mut entries: Vec<_> = fs::read_dir(root)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            dirs.extend(solution_dirs(&p)?);
        } else if p.extension().is_some_and(|x| x == "json") {
            has_json = true;
        }
    }
    if has_json {
        dirs.insert(0, root.to_path_buf());
    }
    Ok(dirs)
}

fn evaluate(instances: &Path, solutions: &Path, tolerance: f64) -> Result<bool> {
    let suite = load_suite(instances)?;
    let mut ok = true;
    for dir in solution_dirs(solutions)? {
        let recorded: Vec<RunRecord> = match csv::Reader::from_path(dir.join(RECORDS_FILE)) {
            Ok(mut rd) => rd.deserialize().collect::<std::result::Result<_, _>>().map_err(csv_error)?,
            Err(_) => Vec::new(),
        };
        let mut files: Vec<_> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let (mut solved, mut mismatches, mut errors) = (0, 0, 0);
        for path in &files {
            let result = load_solution(path).and_then(|sol| {
                let inst = suite.iter().find(|i| i.id == sol.instance_id).ok_or_else(|| Error::Schema {
                    context: path.display().to_string(),
                    message: format!("unknown instance `{}`", sol.instance_id),
                })?;
                Ok((sol.instance_id.clone(), evaluate_solution(inst, &sol, tolerance)?))
            });
            match result {
                Ok((id, rep)) => {
                    solved += rep.success as usize;
                    if let Some(r) = recorded.iter().find(|r| r.instance_id == id) {
                        if r.success != rep.success || (r.cost - rep.cost).abs() > 1e-9 * rep.cost.abs().max(1.0) {
                            mismatches += 1;
                            eprintln!(
                                "{id}: solver reported success={} cost={}, evaluator success={} cost={}",
                                r.success, r.cost, rep.success, rep.cost
                            );
                        }
                    }
                    println!(
                        "{id} success={} cost={:.6} max_violation={:.3e}",
                        rep.success, rep.cost, rep.max_violation
                    );
                }
                Err(e) => {
                    errors += 1;
                    eprintln!("{}: {e}", path.display());
                }
            }
        }
        println!(
            "{}: {solved}/{} solved, {mismatches} disagreements, {errors} errors",
            dir.display(),
            files.len()
        );
        ok &= mismatches == 0 && errors == 0;
    }
    Ok(ok)
}

fn report(reports: &[PathBuf], out: Option<&Path>) -> Result<bool> {
    let mut table = ComparisonTable::default();
    for path in reports {
        table.merge(ComparisonTable::read_csv(fs::File::open(path)?)?);
    }
    if let Some(out) = out {
        table.write_csv(fs::File::create(out)?)?;
    }
    print!("{}", table.render());
    Ok(true)
}

fn selftest(seed: u64) -> Result<bool> {
    let mut ok = true;
    for c in gradient_checks(50, seed)? {
        let pass = c.passed();
        ok &= pass;
        println!(
            "{} gradient {:<20} {} samples, max rel. error {:.2e}",
            if pass { "PASS" } else { "FAIL" },
            c.family,
            c.samples,
            c.max_rel_error
        );
    }
    let cases = qp_oracle_cases(100, seed)?;
    let failed = cases.iter().filter(|c| !c.passed(1e-5, 1e-8)).count();
    let gap = cases.iter().map(|c| c.gap().abs()).fold(0.0, f64::max);
    println!(
        "{} qp oracle: {}/{} agree, max objective gap {:.2e}",
        if failed == 0 { "PASS" } else { "FAIL" },
        cases.len() - failed,
        cases.len(),
        gap
    );
    Ok(ok && failed == 0)
}
