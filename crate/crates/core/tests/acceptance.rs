//! Acceptance checks. Prints one PASS/FAIL line per criterion; the full
//! benchmark run inside takes several minutes on one core.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use legbench::benchmark::{
    evaluate_solution, instance_program, load_suite, solve_instance, Algorithm, Condition, MethodConfig,
    ProblemInstance, SolutionFile, Task, TOLERANCE,
};
use legbench::problem::{penalized_objective, LinearFeasibleSet, PenaltyConfig, ScalarTerm, SumStructuredProgram, TermKind};
use legbench::robot::{build_posture_program, Biped, FootPose, Stance, Terrain};
use legbench::selftest::{gradient_checks, qp_oracle_cases};
use legbench::solvers::{solve_first_order, sqp_solve, AdamState, GdConfig, GdMode, UpdateRule};

const SEED: u64 = 42;
const MULTISTARTS: usize = 10;

struct Outcome {
    lines: Vec<(bool, String)>,
}

impl Outcome {
    fn line(&mut self, pass: bool, id: &str, text: String) {
        println!("{} {id}: {text}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((pass, id.to_string()));
    }
}

fn suite_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

fn gradients(out: &mut Outcome) {
    let t = Instant::now();
    let checks = gradient_checks(50, SEED).expect("gradient checks");
    let secs = t.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    let pass = checks.iter().all(|c| c.passed() && c.samples >= 50) && secs < 30.0;
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {}/{:.1e}", c.family, c.samples, c.max_rel_error))
        .collect();
    out.line(
        pass,
        "1 gradient integrity",
        format!("max rel. error {worst:.2e} (< 1e-4) in {secs:.1}s; {}", detail.join(", ")),
    );
}

fn qp_oracle(out: &mut Outcome) {
    let cases = qp_oracle_cases(100, SEED).expect("qp oracle");
    let gap = cases.iter().map(|c| c.gap().abs()).fold(0.0, f64::max);
    let kkt = cases.iter().map(|c| c.kkt_residual).fold(0.0, f64::max);
    let failed = cases.iter().filter(|c| !c.passed(1e-5, 1e-8)).count();
    out.line(
        failed == 0,
        "2 qp oracle",
        format!("{}/100 agree; max objective gap {gap:.2e} (≤ 1e-5), max KKT residual {kkt:.2e} (≤ 1e-8)", 100 - failed),
    );
}

fn fixtures() -> Vec<(String, SumStructuredProgram, Vec<f64>)> {
    let mut v = Vec::new();
    let sq = ScalarTerm::from_residual_fn("dist", vec![0, 1], |x| {
        (vec![x[0] - 2.0, x[1] - 1.0], vec![1.0, 0.0, 0.0, 1.0])
    });
    let g = ScalarTerm::from_fn(TermKind::Inequality, "disk", vec![0, 1], |x| {
        (x[0] * x[0] + x[1] * x[1] - 1.0, vec![2.0 * x[0], 2.0 * x[1]])
    });
    v.push((
        "disk".to_string(),
        SumStructuredProgram::new(2, vec![sq], vec![g], vec![], LinearFeasibleSet::unbounded(2)).unwrap(),
        vec![0.1, -0.3],
    ));
    let rosen = ScalarTerm::from_residual_fn("rosen", vec![0, 1], |x| {
        (vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]], vec![-20.0 * x[0], 10.0, -1.0, 0.0])
    });
    let h = ScalarTerm::from_fn(TermKind::Equality, "line", vec![0, 1], |x| (x[0] + x[1] - 1.5, vec![1.0, 1.0]));
    v.push((
        "rosenbrock".to_string(),
        SumStructuredProgram::new(
            2,
            vec![rosen],
            vec![],
            vec![h],
            LinearFeasibleSet::boxed(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(),
        )
        .unwrap(),
        vec![-1.0, 1.0],
    ));
    let biped = Biped::default();
    let flat = Terrain::flat(-3.0, 3.0);
    let stance = Stance::double(FootPose::new(0.0, 0.0, 0.0), FootPose::new(0.3, 0.0, 0.0));
    let p = build_posture_program(&biped, &flat, &stance).unwrap();
    v.push((
        "flat posture".to_string(),
        p,
        vec![0.15, 0.9, 0.0, 0.4, 0.8, 0.4, 0.4, 0.8, 0.4],
    ));
    if let Ok(suite) = load_suite(&suite_dir()) {
        for id in ["posture_000", "posture_001"] {
            if let Some(inst) = suite.iter().find(|i| i.id == id) {
                let p = instance_program(inst, &biped).unwrap();
                let x0 = legbench::benchmark::initialize(inst, &biped.params, Condition::InCollision).concat();
                v.push((id.to_string(), p, x0));
            }
        }
    }
    v
}

fn max_history_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn reductions(out: &mut Outcome) {
    let fx = fixtures();
    let mut worst = [0.0f64; 3];
    for (name, p, x0) in &fx {
        let gd = |mode| GdConfig {
            record_history: true,
            seed: 7,
            ..GdConfig::new(mode, UpdateRule::Plain, 1.0)
        };
        let full = solve_first_order(p, x0, &gd(GdMode::Full)).unwrap();
        let sgd = solve_first_order(p, x0, &gd(GdMode::Stochastic)).unwrap();
        let isgd = solve_first_order(p, x0, &gd(GdMode::Incremental)).unwrap();
        let mut sqp_cfg = MethodConfig::new(Algorithm::Sqp).sqp_config(7);
        sqp_cfg.record_history = true;
        let mut isqp_cfg = MethodConfig::new(Algorithm::Isqp).with_fraction(1.0).sqp_config(7);
        isqp_cfg.record_history = true;
        let sqp = sqp_solve(p, x0, &sqp_cfg).unwrap();
        let isqp = sqp_solve(p, x0, &isqp_cfg).unwrap();
        let gaps = [
            max_history_gap(&full.history, &sgd.history),
            max_history_gap(&full.history, &isgd.history),
            max_history_gap(&sqp.history, &isqp.history),
        ];
        for k in 0..3 {
            worst[k] = worst[k].max(gaps[k]);
        }
        if gaps.iter().any(|g| *g > 1e-12) {
            println!("     {name}: iterate gaps {gaps:?}");
        }
    }
    out.line(
        fx.len() >= 5 && worst.iter().all(|g| *g <= 1e-12),
        "3 reduction identities",
        format!(
            "{} fixtures; max iterate gap SGD(1)/GD {:.1e}, I-SGD(1)/GD {:.1e}, I-SQP(1)/SQP {:.1e} (≤ 1e-12)",
            fx.len(),
            worst[0],
            worst[1],
            worst[2]
        ),
    );
}

fn adam_algebra(out: &mut Outcome) {
    let g = [0.37, -2.5, 1e-3];
    let mut s = AdamState::new(3, 0.9, 0.999, 1e-8);
    let mut exact = true;
    for _ in 0..200 {
        s.update(&g);
        exact &= s.m == g.to_vec() && s.v == g.iter().map(|x| x * x).collect::<Vec<_>>();
    }
    // k = 1, g = 1: m̂₁ = 1 and the look-ahead is 0.9·0.1/0.19 + 0.1/0.1
    let mut n = AdamState::new(1, 0.9, 0.999, 1e-8);
    n.update(&[1.0]);
    let nadam = n.nadam_moment(&[1.0])[0];
    let by_hand = 0.09 / 0.19 + 1.0;
    let err = (nadam - by_hand).abs();
    out.line(
        exact && err <= 1e-12,
        "4 adam/nadam algebra",
        format!("constant-gradient identity exact over 200 steps: {exact}; Nadam k=1 moment {nadam} vs {by_hand} (err {err:.1e})"),
    );
}

struct Cell {
    id: String,
    success: bool,
    first_try: bool,
    cost: f64,
    time_s: f64,
    x: Vec<f64>,
}

type Key = (Task, Algorithm, Condition);

struct Run {
    disagreements: Vec<String>,
    evaluated: usize,
    max_cost_gap: f64,
    windows_checked: usize,
    window_mismatch: Vec<String>,
    secs: f64,
}

fn key_name(k: &Key) -> String {
    format!("{:?}/{}/{}", k.0, k.1.key(), k.2.name())
}

fn full_run(suite: &[ProblemInstance]) -> (HashMap<Key, Vec<Cell>>, Run) {
    let t = Instant::now();
    let mut cells: HashMap<Key, Vec<Cell>> = HashMap::new();
    let mut run = Run {
        disagreements: Vec::new(),
        evaluated: 0,
        max_cost_gap: 0.0,
        windows_checked: 0,
        window_mismatch: Vec::new(),
        secs: 0.0,
    };
    for alg in Algorithm::MAIN {
        let method = MethodConfig::new(alg);
        for cond in [Condition::Good, Condition::InCollision] {
            // the directional checks compare first-order methods on postures only
            for inst in suite.iter().filter(|i| alg.is_sqp() || i.task == Task::Posture) {
                let o = solve_instance(&method, inst, cond, MULTISTARTS).expect("solve");
                let file = o.solution_file(inst, &method);
                let text = serde_json::to_string(&file).unwrap();
                let back: SolutionFile = serde_json::from_str(&text).unwrap();
                let ev = evaluate_solution(inst, &back, TOLERANCE).expect("evaluate");
                run.evaluated += 1;
                let gap = (ev.cost - o.report.cost).abs();
                run.max_cost_gap = run.max_cost_gap.max(gap);
                if ev.success != o.report.success || gap > 1e-9 {
                    run.disagreements.push(format!("{}/{}/{}", alg.key(), cond.name(), inst.id));
                }
                if inst.task == Task::Trajectory && inst.stances.len() > 6 && o.window_solutions.len() > 1 {
                    run.windows_checked += 1;
                    for w in 1..o.window_solutions.len() {
                        let (prev_first, _) = o.windows[w - 1];
                        let (first, _) = o.windows[w];
                        let off = (first - prev_first) * 9;
                        let prev = &o.window_solutions[w - 1][off..off + 9];
                        let next = &o.window_solutions[w][..9];
                        let bitwise = prev.iter().zip(next).all(|(a, b)| a.to_bits() == b.to_bits());
                        if !bitwise {
                            run.window_mismatch.push(format!("{}/{}/{} window {w}", alg.key(), cond.name(), inst.id));
                        }
                    }
                    if o.failed_window.is_none() && !ev.success {
                        run.window_mismatch.push(format!("{}/{}/{} concatenation", alg.key(), cond.name(), inst.id));
                    }
                }
                cells.entry((inst.task, alg, cond)).or_default().push(Cell {
                    id: inst.id.clone(),
                    success: o.report.success,
                    first_try: o.first_try,
                    cost: o.report.cost,
                    time_s: o.report.time_s,
                    x: o.report.x,
                });
            }
            for task in [Task::Posture, Task::Trajectory] {
                if let Some(c) = cells.get(&(task, alg, cond)) {
                    let ok = c.iter().filter(|c| c.success).count();
                    let ft = c.iter().filter(|c| c.first_try).count();
                    println!(
                        "     {:<28} ms0 {ft:>2}/{n}  ms10 {ok:>2}/{n}  [{:.0}s elapsed]",
                        key_name(&(task, alg, cond)),
                        t.elapsed().as_secs_f64(),
                        n = c.len()
                    );
                }
            }
        }
    }
    run.secs = t.elapsed().as_secs_f64();
    (cells, run)
}

fn count(cells: &HashMap<Key, Vec<Cell>>, k: Key, first_try: bool) -> usize {
    cells[&k].iter().filter(|c| if first_try { c.first_try } else { c.success }).count()
}

fn failing_ids(cells: &[Cell], first_try: bool) -> Vec<String> {
    cells
        .iter()
        .filter(|c| !(if first_try { c.first_try } else { c.success }))
        .map(|c| c.id.clone())
        .collect()
}

fn directional(out: &mut Outcome, cells: &HashMap<Key, Vec<Cell>>, run: &Run) {
    let conds = [Condition::Good, Condition::InCollision];
    let first_order: Vec<Algorithm> = Algorithm::MAIN.into_iter().filter(|a| !a.is_sqp()).collect();

    // (a)
    let mut short = Vec::new();
    for alg in Algorithm::MAIN {
        for cond in conds {
            let c = &cells[&(Task::Posture, alg, cond)];
            let ok = c.iter().filter(|c| c.success).count();
            if ok * 10 < c.len() * 9 {
                short.push(format!("{} {} {ok}/{} unsolved {:?}", alg.key(), cond.name(), c.len(), failing_ids(c, false)));
            }
        }
    }
    out.line(
        short.is_empty(),
        "6a posture success ≥ 90% (ms=10)",
        if short.is_empty() {
            "every method and condition".into()
        } else {
            format!("seed {SEED}: {}", short.join("; "))
        },
    );

    // (b)
    let sqp = count(cells, (Task::Posture, Algorithm::Sqp, Condition::InCollision), true);
    let better: Vec<String> = Algorithm::MAIN
        .into_iter()
        .filter(|a| *a != Algorithm::Sqp)
        .map(|a| (a, count(cells, (Task::Posture, a, Condition::InCollision), true)))
        .filter(|(_, n)| *n > sqp)
        .map(|(a, n)| format!("{} {n}", a.key()))
        .collect();
    let sqp_fail = failing_ids(&cells[&(Task::Posture, Algorithm::Sqp, Condition::InCollision)], true);
    let all: Vec<String> = Algorithm::MAIN
        .into_iter()
        .map(|a| format!("{} {}", a.key(), count(cells, (Task::Posture, a, Condition::InCollision), true)))
        .collect();
    out.line(
        better.len() >= 2,
        "6b in-collision ms=0: two methods beat SQP",
        format!("seed {SEED}: SQP {sqp}/50 (unsolved {sqp_fail:?}); counts {}", all.join(", ")),
    );

    // (c)
    let k_sqp = (Task::Trajectory, Algorithm::Sqp, Condition::InCollision);
    let k_isqp = (Task::Trajectory, Algorithm::Isqp, Condition::InCollision);
    let (ns, ni) = (count(cells, k_sqp, false), count(cells, k_isqp, false));
    out.line(
        ni >= ns,
        "6c trajectory in-collision ms=10: I-SQP ≥ SQP",
        format!(
            "seed {SEED}: I-SQP {ni}/50 (unsolved {:?}), SQP {ns}/50 (unsolved {:?})",
            failing_ids(&cells[&k_isqp], false),
            failing_ids(&cells[&k_sqp], false)
        ),
    );

    // (d)
    let mean_time = |alg| {
        let v: Vec<f64> = conds
            .iter()
            .flat_map(|&c| cells[&(Task::Posture, alg, c)].iter())
            .filter(|c| c.success)
            .map(|c| c.time_s)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let (ts, ti) = (mean_time(Algorithm::Sqp), mean_time(Algorithm::Isqp));
    let slower: Vec<String> = conds
        .iter()
        .flat_map(|&c| {
            let s = &cells[&(Task::Posture, Algorithm::Sqp, c)];
            cells[&(Task::Posture, Algorithm::Isqp, c)]
                .iter()
                .zip(s)
                .filter(|(i, s)| i.success && s.success && i.time_s > 1.5 * s.time_s)
                .map(move |(i, _)| format!("{}/{}", c.name(), i.id))
                .collect::<Vec<_>>()
        })
        .collect();
    out.line(
        ti <= ts,
        "6d posture: I-SQP mean time ≤ SQP",
        format!("seed {SEED}: I-SQP {ti:.4}s vs SQP {ts:.4}s; I-SQP >1.5x slower on {slower:?}"),
    );

    // (e)
    let mut worse = Vec::new();
    let mut summary = Vec::new();
    for &alg in &first_order {
        let (mut cs, mut cm, mut n) = (0.0, 0.0, 0);
        let mut cheaper = Vec::new();
        for cond in conds {
            let s = &cells[&(Task::Posture, Algorithm::Sqp, cond)];
            let m = &cells[&(Task::Posture, alg, cond)];
            for (a, b) in s.iter().zip(m) {
                if a.success && b.success {
                    cs += a.cost;
                    cm += b.cost;
                    n += 1;
                    if b.cost < a.cost {
                        cheaper.push(format!("{}/{}", cond.name(), a.id));
                    }
                }
            }
        }
        let (ms, mm) = (cs / n.max(1) as f64, cm / n.max(1) as f64);
        summary.push(format!("{} {mm:.1} vs {ms:.1} on {n}", alg.key()));
        if ms > mm {
            worse.push(format!("{}: cheaper than SQP on {cheaper:?}", alg.key()));
        }
    }
    out.line(
        worse.is_empty(),
        "6e posture: SQP mean cost lowest on jointly solved",
        format!("seed {SEED}: {}{}", summary.join(", "), if worse.is_empty() { String::new() } else { format!("; {}", worse.join("; ")) }),
    );

    out.line(
        run.secs < 1800.0,
        "6  full run budget < 30 min",
        format!("{:.0}s for {} solves", run.secs, run.evaluated),
    );
}

fn penalty_exactness(out: &mut Outcome, suite: &[ProblemInstance], cells: &HashMap<Key, Vec<Cell>>) {
    let biped = Biped::default();
    let ladder = PenaltyConfig::default().mu_ladder;
    let mut programs = HashMap::new();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut checked = 0;
    let mut keys: Vec<&Key> = cells.keys().collect();
    keys.sort_by_key(|k| key_name(k));
    for k in keys {
        for c in cells[k].iter().filter(|c| c.success) {
            let program = programs.entry(c.id.clone()).or_insert_with(|| {
                let inst = suite.iter().find(|i| i.id == c.id).unwrap();
                instance_program(inst, &biped).unwrap()
            });
            let n = (program.ineqs().len() + program.eqs().len()) as f64;
            let cost = program.cost(&c.x).unwrap();
            checked += 1;
            for &mu in &ladder {
                let gap = penalized_objective(program, &c.x, mu).unwrap().value - cost;
                worst = worst.max(gap / (mu * n));
                if !(gap >= -1e-9 * cost.abs().max(1.0) && gap <= mu * n * TOLERANCE) {
                    bad.push(format!("{}/{} μ={mu:e}", key_name(k), c.id));
                }
            }
        }
    }
    out.line(
        bad.is_empty() && checked > 0,
        "8 penalty exactness",
        format!(
            "{checked} feasible solutions × {} μ; max (penalized − cost)/(μ·n) {worst:.2e} (≤ 1e-3); failures {bad:?}",
            ladder.len()
        ),
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if args.windows(2).any(|w| w[0] == "--skip" && "acceptance".contains(w[1].as_str())) {
        return;
    }
    let mut out = Outcome { lines: Vec::new() };
    gradients(&mut out);
    qp_oracle(&mut out);
    reductions(&mut out);
    adam_algebra(&mut out);

    let suite = load_suite(&suite_dir()).expect("shipped instance suite");
    let (cells, run) = full_run(&suite);
    out.line(
        run.disagreements.is_empty(),
        "5 evaluator agreement",
        format!(
            "{} cells, max cost gap {:.1e} (≤ 1e-9), disagreements {:?}",
            run.evaluated, run.max_cost_gap, run.disagreements
        ),
    );
    directional(&mut out, &cells, &run);
    out.line(
        run.window_mismatch.is_empty() && run.windows_checked > 0,
        "7 windowing contract",
        format!("{} multi-window solves checked; mismatches {:?}", run.windows_checked, run.window_mismatch),
    );
    penalty_exactness(&mut out, &suite, &cells);

    let failed: Vec<&String> = out.lines.iter().filter(|(p, _)| !*p).map(|(_, id)| id).collect();
    println!(
        "acceptance: {}/{} criteria pass{}",
        out.lines.len() - failed.len(),
        out.lines.len(),
        if failed.is_empty() { String::new() } else { format!("; failing: {failed:?}") }
    );
}
