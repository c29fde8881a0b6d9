use proptest::prelude::*;

use legbench::problem::{
    exact_penalty, penalized_gradient, penalized_objective, smooth_penalty_scale, LinearFeasibleSet,
    SumStructuredProgram, TermKind,
};
use legbench::qp::project;
use legbench::robot::{build_posture_program, Biped, FootPose, Side, Stance, Terrain, DOF};
use legbench::selftest::{central_difference, relative_error};
use legbench::solvers::{sample_batch, wolfe_line_search, WolfeParams};

fn configuration() -> impl Strategy<Value = Vec<f64>> {
    (
        -0.3..0.3f64,
        0.5..1.0f64,
        -0.5..0.5f64,
        prop::array::uniform2((-1.7..1.7f64, 0.05..2.4f64, -0.9..0.9f64)),
    )
        .prop_map(|(x, y, p, legs)| {
            let mut q = vec![x, y, p];
            for (h, k, a) in legs {
                q.extend([h, k, a]);
            }
            q
        })
}

fn posture_program() -> SumStructuredProgram {
    let terrain = Terrain {
        ground: vec![[-3.0, 0.0], [0.2, 0.0], [0.22, 0.1], [3.0, 0.1]],
        obstacles: vec![vec![[-0.5, 1.1], [0.5, 1.1], [0.5, 1.3], [-0.5, 1.3]]],
    };
    let stance = Stance::double(FootPose::new(0.0, 0.0, 0.0), FootPose::new(0.3, 0.1, 0.0));
    build_posture_program(&Biped::default(), &terrain, &stance).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equality_scale_is_odd_and_saturates(y in -1.0..1.0f64, w in 1.0..500.0f64) {
        let s = smooth_penalty_scale(TermKind::Equality, y, w);
        prop_assert!((s + smooth_penalty_scale(TermKind::Equality, -y, w)).abs() < 1e-15);
        prop_assert!(s.abs() < 1.0 || w * y.abs() > 30.0);
        if w * y.abs() > 15.0 {
            prop_assert!((s - y.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn inequality_scale_vanishes_when_satisfied(y in -1.0..0.0f64, w in 1.0..500.0f64) {
        prop_assert_eq!(smooth_penalty_scale(TermKind::Inequality, y, w), 0.0);
        prop_assert_eq!(exact_penalty(TermKind::Inequality, y), 0.0);
    }

    #[test]
    fn box_projection_is_nonexpansive(
        a in prop::collection::vec(-3.0..3.0f64, 3),
        b in prop::collection::vec(-3.0..3.0f64, 3),
    ) {
        let set = LinearFeasibleSet::boxed(vec![-1.0, 0.0, -0.5], vec![1.0, 0.5, 2.0]).unwrap();
        let pa = project(&a, &set).unwrap();
        let pb = project(&b, &set).unwrap();
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-12);
        prop_assert_eq!(project(&pa, &set).unwrap(), pa);
    }

    #[test]
    fn hyperplane_projection_is_nonexpansive(
        a in prop::collection::vec(-3.0..3.0f64, 2),
        b in prop::collection::vec(-3.0..3.0f64, 2),
    ) {
        let mut set = LinearFeasibleSet::unbounded(2);
        set.eq_rows.push(legbench::problem::AffineRow { coeffs: vec![1.0, 1.0], rhs: 1.0 });
        let pa = project(&a, &set).unwrap();
        let pb = project(&b, &set).unwrap();
        prop_assert!((pa[0] + pa[1] - 1.0).abs() < 1e-8);
        let d = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        prop_assert!(d(&pa, &pb) <= d(&a, &b) + 1e-7);
    }

    #[test]
    fn batches_are_sorted_distinct_and_sized(n in 1usize..200, fraction in 0.01..1.0f64, seed: u64, counter in 0u64..1000) {
        let b = sample_batch(n, fraction, seed, counter);
        prop_assert_eq!(b.len(), ((fraction * n as f64).ceil() as usize).clamp(1, n));
        prop_assert!(b.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(b.iter().all(|&i| i < n));
        prop_assert_eq!(b, sample_batch(n, fraction, seed, counter));
    }

    #[test]
    fn wolfe_step_decreases_quadratics(m in 1e-4..1e3f64, scale in 1e-3..1e3f64) {
        let phi = |a: f64| Ok((scale * (a - m).powi(2), 2.0 * scale * (a - m)));
        let r = wolfe_line_search(phi, scale * m * m, -2.0 * scale * m, 1.0, WolfeParams::default()).unwrap();
        prop_assert!(r.value <= scale * m * m - 1e-4 * r.alpha * 2.0 * scale * m + 1e-12);
        prop_assert!(r.satisfied);
    }

    #[test]
    fn penalized_gradient_matches_finite_differences(q in configuration(), mu in 1.0..1e3f64) {
        let p = posture_program();
        let all: Vec<usize> = (0..p.n_terms()).collect();
        let g = penalized_gradient(&p, &q, mu, &all, 100.0).unwrap();
        let mut f = |x: &[f64]| legbench::problem::smoothed_penalized_objective(&p, x, mu, &all, 100.0).unwrap();
        if let Some(fd) = central_difference(&mut f, &q, 1e-6) {
            // relative to the gradient scale, which grows with μ
            prop_assert!(relative_error(&g, &fd) < 1e-4, "{:?} vs {:?}", g, fd);
        }
    }

    #[test]
    fn penalized_value_splits_into_cost_and_penalty(q in configuration(), mu in 0.0..1e4f64) {
        let p = posture_program();
        let v = penalized_objective(&p, &q, mu).unwrap();
        let cost = p.cost(&q).unwrap();
        let pen: f64 = p.ineqs().iter().chain(p.eqs()).map(|t| exact_penalty(t.kind(), t.value(&q).unwrap())).sum();
        prop_assert!((v.value - (cost + mu * pen)).abs() <= 1e-9 * v.value.abs().max(1.0));
    }

    #[test]
    fn foot_residual_moves_with_the_base(q in configuration(), dx in -0.5..0.5f64) {
        let b = Biped::default();
        let target = FootPose::new(0.0, 0.0, 0.0);
        let (r0, _) = legbench::robot::foot_pose_residual(&b, &q, Side::Left, &target);
        let mut q2 = q.clone();
        q2[0] += dx;
        let (r1, _) = legbench::robot::foot_pose_residual(&b, &q2, Side::Left, &target);
        prop_assert!((r1[0] - r0[0] - dx).abs() < 1e-12);
        prop_assert!((r1[1] - r0[1]).abs() < 1e-12 && (r1[2] - r0[2]).abs() < 1e-12);
    }

    #[test]
    fn torques_scale_with_mass(q in configuration(), k in 0.5..3.0f64) {
        let b = Biped::default();
        let mut params = b.params.clone();
        params.torso_mass *= k;
        params.thigh_mass *= k;
        params.shank_mass *= k;
        params.foot_mass *= k;
        let heavy = Biped::new(params);
        let (t0, _) = b.gravity_torques(&q);
        let (t1, _) = heavy.gravity_torques(&q);
        for i in 0..6 {
            prop_assert!((t1[i] - k * t0[i]).abs() <= 1e-9 * t0[i].abs().max(1.0));
        }
    }

    #[test]
    fn pitch_does_not_move_the_legs(q in configuration(), dp in -1.0..1.0f64) {
        let b = Biped::default();
        let mut q2 = q.clone();
        q2[2] += dp;
        let f0 = b.forward_kinematics(&q);
        let f1 = b.forward_kinematics(&q2);
        for (a, c) in f0.iter().zip(&f1).filter(|(a, _)| a.name != "torso") {
            prop_assert!((a.origin[0] - c.origin[0]).abs() < 1e-12 && (a.origin[1] - c.origin[1]).abs() < 1e-12);
        }
    }
}

#[test]
fn term_values_are_finite_over_the_limit_box() {
    let p = posture_program();
    let (lo, hi) = legbench::robot::joint_limits();
    let mut q = vec![0.0, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    for corner in 0..64u32 {
        for k in 3..DOF {
            q[k] = if corner >> (k - 3) & 1 == 1 { hi[k] } else { lo[k] };
        }
        for t in p.terms() {
            assert!(t.value(&q).unwrap().is_finite(), "{}", t.label());
        }
    }
}
