use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use legbench::benchmark::{
    evaluate_solution, generate_instances, initialize, load_solution, load_suite, multistart_solve, perturb,
    save_solution, window_ranges, ComparisonTable, Condition, GeneratorConfig, ProblemInstance, ProgramSolver,
    RunRecord, SolutionFile, SolverMeta, Task, MAX_RESTARTS, TOLERANCE,
};
use legbench::problem::{LinearFeasibleSet, ScalarTerm, SumStructuredProgram, TermKind};
use legbench::report::SolveReport;
use legbench::robot::{foot_pose_residual, Biped, FootPose, Side, Stance, Terrain, DOF};
use legbench::{Error, Result};

fn suite() -> Vec<ProblemInstance> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances");
    load_suite(&dir).expect("shipped suite")
}

fn solution(inst: &ProblemInstance, waypoints: Vec<Vec<f64>>) -> SolutionFile {
    SolutionFile {
        instance_id: inst.id.clone(),
        waypoints,
        solver: SolverMeta {
            name: "test".into(),
            seed: 0,
            restarts: 0,
            time_s: 0.0,
        },
    }
}

#[test]
fn generator_reproduces_shipped_instances() {
    let config = GeneratorConfig {
        n_posture: 3,
        n_trajectory: 0,
        ..GeneratorConfig::new(42)
    };
    let fresh = generate_instances(&config, 1).unwrap();
    let shipped = suite();
    assert_eq!(fresh.len(), 3);
    for inst in &fresh {
        let s = shipped.iter().find(|s| s.id == inst.id).expect("id in shipped suite");
        assert_eq!(inst, s, "{}", inst.id);
    }
    assert_eq!(fresh, generate_instances(&config, 1).unwrap());
}

#[test]
fn shipped_suite_shape() {
    let s = suite();
    assert_eq!(s.iter().filter(|i| i.task == Task::Posture).count(), 50);
    assert_eq!(s.iter().filter(|i| i.task == Task::Trajectory).count(), 50);
    for inst in &s {
        inst.validate().unwrap();
        let probe = inst.probe.clone().expect("probe");
        assert_eq!(probe.len(), inst.stances.len());
        if inst.task == Task::Trajectory {
            continue;
        }
        let r = evaluate_solution(inst, &solution(inst, probe), TOLERANCE).unwrap();
        assert!(r.success, "{} probe violation {}", inst.id, r.max_violation);
    }
    let lens: Vec<usize> = s.iter().filter(|i| i.task == Task::Trajectory).map(|i| i.stances.len()).collect();
    assert!(lens.iter().all(|&n| (4..=14).contains(&n)));
}

#[test]
fn window_examples() {
    assert_eq!(window_ranges(1), vec![(0, 1)]);
    assert_eq!(window_ranges(6), vec![(0, 6)]);
    assert_eq!(window_ranges(7), vec![(0, 6), (5, 7)]);
    assert_eq!(window_ranges(11), vec![(0, 6), (5, 11)]);
    assert_eq!(window_ranges(12), vec![(0, 6), (5, 11), (10, 12)]);
    for n in 1..40 {
        let w = window_ranges(n);
        assert_eq!(w.last().unwrap().1, n);
        assert!(w.windows(2).all(|p| p[1].0 + 1 == p[0].1));
    }
}

#[test]
fn solution_files_round_trip() {
    let inst = &suite()[0];
    let q = vec![0.1, 0.8, -0.05, 0.3, 0.6, 0.3, 0.1 + 1e-17, 0.2, 1.0 / 3.0];
    let sol = solution(inst, vec![q]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    save_solution(&path, &sol).unwrap();
    assert_eq!(load_solution(&path).unwrap(), sol);
    std::fs::write(&path, "{\"instance_id\": 3}").unwrap();
    assert!(matches!(load_solution(&path), Err(Error::Schema { .. })));
}

#[test]
fn evaluator_rejects_malformed_solutions() {
    let inst = &suite()[0];
    let q = inst.probe.clone().unwrap()[0].clone();
    let bad = [
        solution(inst, vec![]),
        solution(inst, vec![q.clone(), q.clone()]),
        solution(inst, vec![q[..DOF - 1].to_vec()]),
        solution(inst, vec![vec![f64::NAN; DOF]]),
        SolutionFile {
            instance_id: "other".into(),
            ..solution(inst, vec![q.clone()])
        },
    ];
    for s in &bad {
        assert!(matches!(evaluate_solution(inst, s, TOLERANCE), Err(Error::Schema { .. })), "{s:?}");
    }
}

#[test]
fn displaced_foot_violation_equals_displacement() {
    let s = suite();
    let inst = s.iter().find(|i| i.task == Task::Posture).unwrap();
    let q = inst.probe.clone().unwrap()[0].clone();
    let base = evaluate_solution(inst, &solution(inst, vec![q.clone()]), TOLERANCE).unwrap();
    assert!(base.success);
    // moving the base slides both soles; bend one ankle instead
    let stance = &inst.stances[0];
    let side = [Side::Left, Side::Right].into_iter().find(|&s| stance.in_contact(s)).unwrap();
    let target = stance.foot(side).unwrap();
    let mut moved = q.clone();
    moved[side.ankle()] += 0.01;
    let (r, _) = foot_pose_residual(&Biped::default(), &moved, side, target);
    assert!((r[2].abs() - 0.01).abs() < 2e-3);
    let e = evaluate_solution(inst, &solution(inst, vec![moved]), TOLERANCE).unwrap();
    assert!(!e.success);
    assert!(e.max_violation >= 0.008 && e.max_violation <= 0.012, "{}", e.max_violation);
}

#[test]
fn initial_sole_heights() {
    let stance = Stance::double(FootPose::new(0.0, 0.0, 0.0), FootPose::new(0.3, 0.1, 0.0));
    let inst = ProblemInstance {
        id: "p".into(),
        task: Task::Posture,
        seed: 1,
        terrain: Terrain::flat(-1.0, 1.0),
        stances: vec![stance.clone()],
        features: Default::default(),
        probe: None,
    };
    let b = Biped::default();
    for (cond, low, high) in [(Condition::Good, 0.30, 0.20), (Condition::InCollision, -0.05, -0.15)] {
        let q = &initialize(&inst, &b.params, cond)[0];
        let (l, _) = foot_pose_residual(&b, q, Side::Left, stance.left.as_ref().unwrap());
        let (r, _) = foot_pose_residual(&b, q, Side::Right, stance.right.as_ref().unwrap());
        assert!((l[1] - low).abs() < 1e-12, "{cond:?} {l:?}");
        assert!((r[1] - high).abs() < 1e-12, "{cond:?} {r:?}");
        assert!(l[2].abs() < 1e-12 && r[2].abs() < 1e-12);
        assert!((l[0] - r[0] - 0.3).abs() < 1e-12);
    }
}

#[test]
fn trajectory_initialization_repeats_each_stance() {
    let s = suite();
    let inst = s.iter().find(|i| i.task == Task::Trajectory).unwrap();
    let w = initialize(inst, &Biped::default().params, Condition::Good);
    assert_eq!(w.len(), 2 * inst.stances.len());
    assert!(w.chunks(2).all(|p| p[0] == p[1]));
}

#[test]
fn perturbation_touches_only_joints() {
    let x0: Vec<f64> = (0..2 * DOF).map(|i| i as f64 * 0.1).collect();
    let x = perturb(&x0, 9, 3, 1, 5f64.to_radians());
    for (k, (a, b)) in x.iter().zip(&x0).enumerate() {
        if k % DOF < 3 {
            assert_eq!(a, b);
        } else {
            assert!((a - b).abs() <= 5f64.to_radians() && a != b);
        }
    }
    assert_eq!(x, perturb(&x0, 9, 3, 1, 5f64.to_radians()));
    assert_ne!(x, perturb(&x0, 9, 4, 1, 5f64.to_radians()));
}

struct Stub {
    succeed_on: usize,
    calls: AtomicUsize,
}

impl ProgramSolver for Stub {
    fn name(&self) -> String {
        "stub".into()
    }

    fn seed(&self) -> u64 {
        0
    }

    fn solve(&self, _: &SumStructuredProgram, x0: &[f64], _: u64) -> Result<SolveReport> {
        let k = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(SolveReport {
            success: k == self.succeed_on,
            cost: 1.0,
            max_violation: if k == self.succeed_on { 0.0 } else { 1.0 },
            time_s: 0.5,
            restarts_used: 0,
            iterations: 2,
            final_mu: 1e2,
            fallback_steps: 0,
            x: x0.to_vec(),
            history: Vec::new(),
        })
    }
}

fn one_term() -> SumStructuredProgram {
    let f = ScalarTerm::from_fn(TermKind::Cost, "f", vec![0], |x| (x[0], vec![1.0]));
    SumStructuredProgram::new(DOF, vec![f], vec![], vec![], LinearFeasibleSet::unbounded(DOF)).unwrap()
}

#[test]
fn multistart_spends_every_restart_on_failure() {
    let stub = Stub {
        succeed_on: usize::MAX,
        calls: AtomicUsize::new(0),
    };
    let r = multistart_solve(&stub, &one_term(), &[0.0; DOF], 5, 0, MAX_RESTARTS).unwrap();
    assert!(!r.success);
    assert_eq!(r.restarts_used, 10);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 11);
    assert!((r.time_s - 5.5).abs() < 1e-12);
    assert_eq!(r.iterations, 22);
}

#[test]
fn multistart_stops_at_first_success() {
    let stub = Stub {
        succeed_on: 2,
        calls: AtomicUsize::new(0),
    };
    let r = multistart_solve(&stub, &one_term(), &[0.0; DOF], 5, 0, MAX_RESTARTS).unwrap();
    assert!(r.success);
    assert_eq!(r.restarts_used, 2);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
    assert!((r.time_s - 1.5).abs() < 1e-12);
    assert_ne!(r.x, vec![0.0; DOF]);
}

fn record(id: &str, success: bool, first_try: bool, cost: f64, time_s: f64) -> RunRecord {
    RunRecord {
        instance_id: id.into(),
        task: Task::Posture,
        method: "SQP".into(),
        sample_size: 1.0,
        condition: Condition::Good,
        max_restarts: 10,
        success,
        first_try,
        cost,
        max_violation: 0.0,
        time_s,
        restarts_used: 0,
        iterations: 1,
        failed_window: None,
    }
}

#[test]
fn comparison_rows_from_records() {
    let recs = vec![
        record("a", true, true, 1.0, 1.0),
        record("b", true, false, 3.0, 2.0),
        record("c", false, false, 9.0, 9.0),
    ];
    let t = ComparisonTable::from_records(&recs);
    assert_eq!(t.rows.len(), 2);
    let ms0 = t.find(Task::Posture, "SQP", Condition::Good, 0).unwrap();
    assert_eq!((ms0.instances, ms0.success), (3, 1));
    assert_eq!((ms0.mean_cost, ms0.mean_time_s, ms0.sample_size), (1.0, 1.0, 100.0));
    let ms10 = t.find(Task::Posture, "SQP", Condition::Good, 10).unwrap();
    assert_eq!((ms10.success, ms10.mean_cost, ms10.mean_time_s), (2, 2.0, 1.5));

    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let back = ComparisonTable::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, t);

    let mut merged = t.clone();
    merged.merge(ComparisonTable::from_records(&[record("a", false, false, 0.0, 0.0)]));
    assert_eq!(merged.rows.len(), 2);
    assert_eq!(merged.find(Task::Posture, "SQP", Condition::Good, 10).unwrap().success, 0);
    assert!(merged.find(Task::Posture, "SQP", Condition::Good, 10).unwrap().mean_cost.is_nan());
    assert!(!t.render().is_empty());
}
