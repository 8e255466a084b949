//! Runs checked against independent plain-array re-implementations and
//! closed-form values.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use defw_core::baselines::reference_optimum;
use defw_core::constraints::ConstraintSet;
use defw_core::defw::{run_defw, run_defw_observed, RunOptions, StepSchedule};
use defw_core::harness::datagen::gen_lasso_instance;
use defw_core::harness::rates::fit_rate;
use defw_core::linalg::norm_l1;
use defw_core::network::{
    ac_multi_round, deviation_norm, gen_erdos_renyi, metropolis_weights, network_average, Topology,
};
use defw_core::objectives::{estimate_constants, LassoAgentData, McAgentData, McLoss, Problem};

type Vector = Vec<f64>;

fn grad(a: &[Vector], y: &[f64], theta: &[f64]) -> Vector {
    // Aᵀ(Aθ − y) with `a` stored by rows.
    let mut g = vec![0.0; theta.len()];
    for (row, yk) in a.iter().zip(y) {
        let r: f64 = row.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>() - yk;
        for (gj, x) in g.iter_mut().zip(row) {
            *gj += r * x;
        }
    }
    g
}

fn l1_atom(g: &[f64], radius: f64) -> Vector {
    let mut k = 0;
    for j in 1..g.len() {
        if g[j].abs() > g[k].abs() {
            k = j;
        }
    }
    let mut v = vec![0.0; g.len()];
    v[k] = if g[k] > 0.0 { -radius } else { radius };
    v
}

#[test]
fn two_agent_quadratic_matches_script() {
    let a: [Vec<Vector>; 2] = [
        vec![vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 3.0]],
        vec![vec![-2.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
    ];
    let y: [Vector; 2] = [vec![1.0, -0.5], vec![2.0, 0.25]];
    let radius = 1.5;
    let agents = (0..2)
        .map(|i| {
            let m = DMatrix::from_fn(2, 3, |r, c| a[i][r][c]);
            LassoAgentData::new(m, DVector::from_column_slice(&y[i])).unwrap()
        })
        .collect();
    let problem = Problem::lasso(agents).unwrap();
    let net = metropolis_weights(Topology::complete(2)).unwrap();
    let set = ConstraintSet::l1_ball(radius, 3).unwrap();

    // Script: W = [[1/2, 1/2], [1/2, 1/2]].
    let mix = |v: &[Vector; 2]| -> [Vector; 2] {
        let avg: Vector = (0..3).map(|j| 0.5 * v[0][j] + 0.5 * v[1][j]).collect();
        [avg.clone(), avg]
    };
    let mut theta: [Vector; 2] = [vec![0.0; 3], vec![0.0; 3]];
    let mut tracked: [Vector; 2] = [vec![0.0; 3], vec![0.0; 3]];
    let mut prev: [Vector; 2] = [vec![0.0; 3], vec![0.0; 3]];
    let mut script = Vec::new();
    for t in 1..=3 {
        let bar = mix(&theta);
        let g: [Vector; 2] = [grad(&a[0], &y[0], &bar[0]), grad(&a[1], &y[1], &bar[1])];
        let s: [Vector; 2] = std::array::from_fn(|i| (0..3).map(|j| tracked[i][j] + g[i][j] - prev[i][j]).collect());
        tracked = mix(&s);
        prev = g;
        let gamma = 2.0 / (t as f64 + 1.0);
        for i in 0..2 {
            let atom = l1_atom(&tracked[i], radius);
            theta[i] = (0..3).map(|j| (1.0 - gamma) * bar[i][j] + gamma * atom[j]).collect();
        }
        script.push(theta.clone());
    }

    let opts = RunOptions {
        certificate: false,
        ..RunOptions::with_iterations(3)
    };
    let run = run_defw(&problem, &net, &set, StepSchedule::Convex, &opts).unwrap();
    for (s, want) in run.states.iter().zip(&script[2]) {
        for (got, want) in s.theta.iter().zip(want) {
            assert!((got - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn small_lasso_rate_against_fw_oracle() {
    let inst = gen_lasso_instance(4, 10, 20, 4, 0.01, 11).unwrap();
    let set = ConstraintSet::l1_ball(1.1 * norm_l1(&inst.theta_true), 20).unwrap();
    let net = metropolis_weights(Topology::complete(4)).unwrap();
    let f_star = reference_optimum(&inst.problem, &set, 1e-12, 500_000).unwrap().value;
    let opts = RunOptions {
        certificate: false,
        ..RunOptions::with_iterations(500)
    };
    let run = run_defw(&inst.problem, &net, &set, StepSchedule::Convex, &opts).unwrap();
    let sub: Vec<(f64, f64)> = run
        .metrics
        .records
        .iter()
        .map(|r| (r.iter as f64, r.objective - f_star))
        .collect();
    assert!(sub[499].1 < sub[249].1);
    let fit = fit_rate(&sub, (50.0, 500.0)).unwrap();
    assert!(fit.slope <= -0.8, "slope {}", fit.slope);
}

#[test]
fn tracking_holds_on_every_iteration() {
    let inst = gen_lasso_instance(6, 8, 30, 5, 0.01, 12).unwrap();
    let set = ConstraintSet::l1_ball(1.1 * norm_l1(&inst.theta_true), 30).unwrap();
    let net = metropolis_weights(gen_erdos_renyi(6, 0.4, 12).unwrap()).unwrap();
    let opts = RunOptions {
        certificate: false,
        ..RunOptions::with_iterations(300)
    };
    run_defw_observed(
        &inst.problem,
        &net,
        &set,
        StepSchedule::NonConvex { alpha: 0.75 },
        &opts,
        |view, _| {
            let tracked = network_average(&view.states.iter().map(|s| s.grad_tracked.clone()).collect::<Vec<_>>());
            let mut local = Vec::new();
            for (i, s) in view.states.iter().enumerate() {
                local.push(inst.problem.local_grad(i, &s.theta_bar)?);
            }
            let want = network_average(&local);
            assert!((tracked - &want).norm() <= 1e-10 * want.norm());
            Ok(())
        },
    )
    .unwrap();
}

#[test]
fn repeated_rounds_reach_the_average() {
    let net = metropolis_weights(gen_erdos_renyi(12, 0.4, 3).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<_> = (0..12)
        .map(|_| DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let avg = network_average(&xs);
    let out = ac_multi_round(&xs, &net, 20).unwrap();
    let predicted = net.lambda2().powi(20) * deviation_norm(&xs);
    assert!(deviation_norm(&out) <= predicted + 1e-12);
    if predicted < 1e-6 {
        assert!(out.iter().all(|x| (x - &avg).amax() <= 1e-6));
    }
}

#[test]
fn neg_gauss_curvature_peaks_at_zero() {
    // max |f''| of 1 − exp(−θ²/σ) on a fine grid against the reported L.
    for sigma in [0.5, 1.0, 3.0] {
        let f = |x: f64| 1.0 - (-x * x / sigma).exp();
        let h = 1e-4;
        let peak = (-4000..=4000)
            .map(|k| k as f64 * 1e-3 * sigma.sqrt())
            .map(|x| ((f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)).abs())
            .fold(0.0, f64::max);
        assert!((peak - 2.0 / sigma).abs() <= 1e-4 * (2.0 / sigma));

        let agent = McAgentData::new(2, 2, vec![(0, 0)], vec![0.3], McLoss::NegGauss { sigma }).unwrap();
        let problem = Problem::matrix_completion(2, 2, vec![agent]).unwrap();
        let set = ConstraintSet::trace_ball(1.0, 2, 2).unwrap();
        let est = estimate_constants(&problem, &set, 0).unwrap();
        assert!((est.l - 2.0 / sigma).abs() <= 1e-12);
    }
}
