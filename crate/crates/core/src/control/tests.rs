use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::{Error, Hypothesis};
use crate::fields::State;
use crate::linalg::CgOptions;
use crate::model::Species;
use crate::pde::{simulate, SimOptions};
use crate::presets::{canonical_control, tumor_free_control};

fn tight(p: ControlProblem<f64>) -> ControlProblem<f64> {
    p.with_cg(CgOptions {
        tol: 1e-14,
        max_iter: 2000,
    })
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn wavy(p: &ControlProblem<f64>, base: f64) -> ControlSchedule<f64> {
    let mut v = p.constant_schedule(base);
    for (k, x) in v.values.iter_mut().enumerate() {
        *x *= 1.0 + 0.3 * (k as f64 * 0.7).sin();
    }
    v
}

#[test]
fn penalty_examples() {
    assert_eq!(penalty([0.1, 0.0], [1.0, 1.0], 0.01).unwrap(), 0.0);
    assert!((penalty::<f64>([-0.1, 0.2], [1.0, 1.0], 0.01).unwrap() - 0.5).abs() < 1e-12);
    let p1 = penalty([-0.1, -0.05], [0.8, 0.2], 0.02).unwrap();
    let p2 = penalty([-0.1, -0.05], [0.8, 0.2], 0.01).unwrap();
    assert!(p2 >= 2.0 * p1 * (1.0 - 1e-12));
    assert!(matches!(
        penalty([0.0, 0.0], [1.0, 1.0], 0.0),
        Err(Error::InvalidParameter { name: "eps", .. })
    ));
    assert!(penalty([-1.0, 0.0], [1.0, 1.0], -1.0).is_err());
    let h = 1e-6;
    let slope: f64 = (penalty([h, 0.0], [1.0, 1.0], 0.01).unwrap()
        - penalty([-h, 0.0], [1.0, 1.0], 0.01).unwrap())
        / (2.0 * h);
    assert!(slope.abs() < 1e-3);
}

#[test]
fn bad_slack_is_tagged() {
    let p = canonical_control::<f64>(8, 4).unwrap();
    let err = ConstraintSpec::from_initial(
        &p.scenario,
        2.0 * p.constraint.a0,
        0.01,
        ConstraintForm::TimeAveragedMass,
    )
    .unwrap_err();
    match err {
        Error::Validation(v) => assert!(v.has(Hypothesis::ConstraintSlack)),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn inadmissible_schedules_are_rejected() {
    let p = canonical_control::<f64>(8, 4).unwrap();
    assert!(cost(&p, &p.constant_schedule(-0.1)).is_err());
    assert!(cost(&p, &p.constant_schedule(p.v_max * 1.01)).is_err());
    let wrong = ControlSchedule::constant(7, 4, p.horizon, 0.1);
    assert!(matches!(cost(&p, &wrong), Err(Error::Conformance { .. })));
}

#[test]
fn tumor_free_cost_is_the_dose_term() {
    let p = tumor_free_control::<f64>(8, 4).unwrap();
    let v = wavy(&p, 0.3);
    let c = cost(&p, &v).unwrap();
    assert_eq!(c.terminal, 0.0);
    let norm2: f64 = v.values.iter().map(|x| x * x).sum::<f64>() * p.weight();
    assert!((c.total - 0.5 * p.lambda * norm2).abs() < 1e-15);
    let mut v2 = v.clone();
    v2.values.iter_mut().for_each(|x| *x *= 2.0);
    let c2 = cost(&p, &v2).unwrap();
    assert!((c2.regularization - 4.0 * c.regularization).abs() < 1e-14);
}

#[test]
fn drug_free_cost_matches_plain_simulation() {
    let p = canonical_control::<f64>(16, 4).unwrap();
    let c = cost(&p, &p.constant_schedule(0.0)).unwrap();
    let mut sc = p.scenario.clone();
    sc.sources.v = crate::fields::SpaceTimeField::uniform(0.0);
    let traj = simulate(
        &sc,
        p.horizon,
        &SimOptions::default().with_dt(p.dt()).every(p.horizon),
    )
    .unwrap();
    let t = &traj.last()[Species::Tumor];
    let terminal: f64 = t.iter().map(|x| x * x).sum::<f64>() * sc.grid.cell_volume();
    assert!((c.terminal - terminal).abs() < 1e-12);
    assert_eq!(c.total, c.terminal);
}

#[test]
fn feasible_points_carry_no_penalty() {
    let p = canonical_control::<f64>(8, 4).unwrap();
    let v = p.constant_schedule(0.0);
    let c = cost(&p, &v).unwrap();
    assert!(c.min_margin() > 0.0);
    let pc = penalized_cost(&p, &v, 1e-3).unwrap();
    assert_eq!(pc.total, c.total);
    let hard = penalized_cost(&p, &p.constant_schedule(p.v_max), 1e-3).unwrap();
    assert!(hard.margins[0] < 0.0 && hard.penalty > 0.0);
    assert!((hard.total - hard.terminal - hard.regularization - hard.penalty).abs() < 1e-15);
}

#[test]
fn tumor_free_gradients_are_analytic() {
    let p = tight(tumor_free_control::<f64>(8, 4).unwrap());
    let v = wavy(&p, 0.3);
    let exact: Vec<f64> = v.values.iter().map(|x| p.lambda * x * p.weight()).collect();
    let adj = gradient_adjoint(&p, &v, 1e-2).unwrap();
    let fd = gradient_fd(&p, &v, 1e-2, 1e-4).unwrap();
    for k in 0..v.len() {
        assert!((adj.values[k] - exact[k]).abs() < 1e-8);
        assert!((fd[k] - exact[k]).abs() < 1e-8);
    }
    let zero = p.constant_schedule(0.0);
    assert!(gradient_adjoint(&p, &zero, 1e-2)
        .unwrap()
        .values
        .iter()
        .all(|&g| g == 0.0));
}

#[test]
fn closed_cutoff_leaves_only_the_dose_term() {
    let mut p = canonical_control::<f64>(8, 4).unwrap();
    p.horizon = 1.0;
    p.scenario.params.n_min = 0.9;
    let n = p.cells();
    p.scenario.initial = State::from_fields(vec![0.1; n], vec![0.2; n], vec![0.2; n], vec![0.0; n]);
    p.constraint =
        ConstraintSpec::from_initial(&p.scenario, 0.05, 0.05, ConstraintForm::TimeAveragedMass)
            .unwrap();
    let v = wavy(&p, 0.5);
    let g = gradient_adjoint(&p, &v, 1e-2).unwrap();
    for (gk, vk) in g.values.iter().zip(&v.values) {
        assert_eq!(*gk, p.lambda * p.weight() * vk);
    }
}

#[test]
fn adjoint_matches_differences_on_canonical() {
    let p = tight(canonical_control::<f64>(8, 8).unwrap());
    for (base, eps) in [(0.5, 1e-2), (1.5, 1e-3)] {
        let v = wavy(&p, base);
        let adj = gradient_adjoint(&p, &v, eps).unwrap();
        let fd = gradient_fd(&p, &v, eps, 1e-5).unwrap();
        assert!(adj.values.iter().all(|g| g.is_finite()));
        assert!(
            rel_l2(&adj.values, &fd) < 1e-4,
            "rel {}",
            rel_l2(&adj.values, &fd)
        );
    }
}

#[test]
fn directional_derivatives_agree() {
    let p = tight(canonical_control::<f64>(8, 8).unwrap());
    let v = wavy(&p, 0.8);
    let eps = 1e-2;
    let g = gradient_adjoint(&p, &v, eps).unwrap().values;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let dir: Vec<f64> = (0..v.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-5;
        let shifted = |s: f64| {
            let mut w = v.clone();
            w.values.iter_mut().zip(&dir).for_each(|(x, d)| *x += s * d);
            penalized_cost(&p, &w, eps).unwrap().total
        };
        let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
        let ad: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!(
            (fd - ad).abs() <= 1e-4 * ad.abs().max(1e-12),
            "fd {fd} adjoint {ad}"
        );
    }
}

#[test]
fn squared_form_gradient_matches_differences() {
    let mut p = tight(canonical_control::<f64>(8, 4).unwrap());
    p.constraint.form = ConstraintForm::SquaredIntegral;
    // Floors on the squared integrals so that the penalty is active.
    p.constraint.slack_n = 0.0;
    p.constraint.slack_i = 0.0;
    let v = wavy(&p, 1.0);
    let adj = gradient_adjoint(&p, &v, 1e-2).unwrap();
    assert!(adj.report.penalty > 0.0);
    let fd = gradient_fd(&p, &v, 1e-2, 1e-5).unwrap();
    assert!(rel_l2(&adj.values, &fd) < 1e-4);
}

#[test]
fn tumor_free_optimum_is_zero() {
    let p = tumor_free_control::<f64>(8, 4).unwrap();
    let res = optimize(&p, &p.constant_schedule(1.0), &OptimizeOptions::default()).unwrap();
    assert_eq!(res.termination, Termination::Converged);
    assert!(res.schedule.sup() < 1e-6);
    assert!(res.final_cost().total < 1e-12);
    assert!(res.is_monotone());
}

#[test]
fn heavy_regularization_gives_no_drug() {
    let mut p = canonical_control::<f64>(8, 4).unwrap();
    p.lambda = 1e3;
    let res = optimize(&p, &p.constant_schedule(0.5), &OptimizeOptions::default()).unwrap();
    let j0 = cost(&p, &p.constant_schedule(0.0)).unwrap();
    assert!(res.schedule.sup() < 1e-3);
    assert!((res.final_cost().total - j0.total).abs() < 1e-3 * j0.total);
    assert!(res
        .schedule
        .values
        .iter()
        .all(|&x| (0.0..=p.v_max).contains(&x)));
}

#[test]
fn resuming_from_a_checkpoint_reproduces_the_run() {
    let p = canonical_control::<f64>(8, 4).unwrap();
    let opts = OptimizeOptions {
        max_iters: 12,
        ..Default::default()
    };
    let v0 = p.constant_schedule(0.5);
    let full = optimize(&p, &v0, &opts).unwrap();
    let first = optimize(
        &p,
        &v0,
        &OptimizeOptions {
            max_iters: 5,
            ..opts.clone()
        },
    )
    .unwrap();
    assert_eq!(first.termination, Termination::MaxIterations);
    let json = serde_json::to_string(&first.checkpoint).unwrap();
    let ck: Checkpoint<f64> = serde_json::from_str(&json).unwrap();
    let mut seen = 0;
    let resumed = optimize_from(&p, ck, &opts, &mut |_| {
        seen += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(resumed.schedule, full.schedule);
    assert_eq!(resumed.history.len(), seen);
}

#[test]
fn bad_options_are_rejected() {
    let p = canonical_control::<f64>(8, 4).unwrap();
    let v = p.constant_schedule(0.1);
    let empty = OptimizeOptions {
        eps_schedule: vec![],
        ..Default::default()
    };
    assert!(optimize(&p, &v, &empty).is_err());
    assert!(gradient_fd(&p, &v, 1e-2, 0.0).is_err());
    assert!(ControlProblem::new(p.scenario.clone(), 1.0, 4, -1.0, 1.0, p.constraint).is_err());
    assert!(ControlProblem::new(p.scenario.clone(), 1.0, 0, 1.0, 1.0, p.constraint).is_err());
}

#[test]
fn optimizer_invariants_hold_along_the_run() {
    let p = canonical_control::<f64>(16, 8).unwrap();
    let opts = OptimizeOptions::default();
    let res = optimize(&p, &p.constant_schedule(1.5), &opts).unwrap();
    // Projection is exact, not approximate.
    assert!(res
        .schedule
        .values
        .iter()
        .all(|&x| (0.0..=p.v_max).contains(&x)));
    let fin = res.final_cost();
    let eps_final = *opts.eps_schedule.last().unwrap();
    for (m, f) in fin.margins.iter().zip(fin.floors) {
        assert!(*m >= -eps_final * f, "margin {m} floor {f}");
    }
    // Relative constraint violation at the end of each penalty stage.
    let infeasibility = |r: &IterateRecord<f64>| -> f64 {
        r.cost
            .margins
            .iter()
            .zip(r.cost.floors)
            .map(|(m, f)| (-m / f).max(0.0))
            .sum()
    };
    let stage_ends: Vec<f64> = (0..opts.eps_schedule.len())
        .filter_map(|s| res.history.iter().rev().find(|r| r.stage == s))
        .map(infeasibility)
        .collect();
    assert_eq!(stage_ends.len(), opts.eps_schedule.len());
    for w in stage_ends.windows(2) {
        assert!(w[1] <= w[0], "{stage_ends:?}");
    }
}
