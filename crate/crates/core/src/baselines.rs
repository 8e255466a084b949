//! Centralized FW, decentralized projected gradient (DPG), and an
//! accelerated projected-gradient solver used to pin down `F*`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constraints::{duality_gap, ConstraintSet};
use crate::defw::{check_components, mix, IterRecord, RunMetrics, RunOptions, StepSchedule};
use crate::error::{Error, Result};
use crate::linalg::gram_lambda_max;
use crate::network::{network_average, NetworkModel};
use crate::objectives::{estimate_constants, Problem};
use crate::sparsefw::CommLedger;

/// Centralized FW from `θ_1 = 0` with the same step indexing as DeFW.
pub fn centralized_fw(
    problem: &Problem,
    set: &ConstraintSet,
    schedule: StepSchedule,
    iterations: usize,
) -> Result<RunMetrics> {
    let zero = DVector::zeros(set.len());
    centralized_fw_observed(problem, set, schedule, iterations, &zero, |_, _, _| Ok(()))
}

/// Centralized FW from an arbitrary feasible start. The observer sees
/// `θ_t` before the update of iteration `t`.
pub fn centralized_fw_observed<F>(
    problem: &Problem,
    set: &ConstraintSet,
    schedule: StepSchedule,
    iterations: usize,
    theta_init: &DVector<f64>,
    mut observer: F,
) -> Result<RunMetrics>
where
    F: FnMut(usize, &DVector<f64>, &mut IterRecord) -> Result<()>,
{
    schedule.validate()?;
    if iterations == 0 {
        return Err(Error::InvalidConfig("iteration count must be positive".into()));
    }
    if problem.dim() != set.len() || theta_init.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            found: if problem.dim() != set.len() {
                problem.dim()
            } else {
                theta_init.len()
            },
        });
    }
    let mut theta = theta_init.clone();
    let mut records = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        let (objective, grad) = problem.global_eval(&theta).map_err(|e| e.at(t))?;
        let mut rec = IterRecord {
            iter: t,
            objective,
            gap: Some(duality_gap(&grad, &theta, set).map_err(|e| e.at(t))?),
            nnz_or_rank: set.complexity(&theta).map_err(|e| e.at(t))?,
            ..IterRecord::default()
        };
        observer(t, &theta, &mut rec).map_err(|e| e.at(t))?;
        records.push(rec);
        let atom = set.lo(&grad).map_err(|e| e.at(t))?;
        theta = atom.blend(&theta, schedule.step_size(t));
    }
    Ok(RunMetrics {
        records,
        certificate: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum DpgStep {
    /// `α_t = 1/t`
    Harmonic,
    /// `α_t = c₁·N/(√t + 1)`
    SqrtScaled { c1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpgConfig {
    pub step: DpgStep,
}

impl DpgConfig {
    pub fn step_size(&self, t: usize, n_agents: usize) -> f64 {
        match self.step {
            DpgStep::Harmonic => 1.0 / t as f64,
            DpgStep::SqrtScaled { c1 } => c1 * n_agents as f64 / ((t as f64).sqrt() + 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self.step {
            DpgStep::SqrtScaled { c1 } if !(c1 > 0.0) => Err(Error::InvalidConfig(format!(
                "DPG constant c1 must be positive, got {c1}"
            ))),
            _ => Ok(()),
        }
    }
}

/// One DPG iteration: mix iterates, step along the local gradient at the
/// mixed point, project.
pub fn dpg_step(
    thetas: &[DVector<f64>],
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    alpha_t: f64,
    ledger: Option<&mut CommLedger>,
) -> Result<Vec<DVector<f64>>> {
    let mixed = mix(thetas.to_vec(), net, 1, ledger)?;
    let grads = problem.local_grads(&mixed)?;
    mixed
        .into_iter()
        .zip(grads)
        .map(|(m, g)| set.project(&(m - g * alpha_t)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DpgRun {
    pub thetas: Vec<DVector<f64>>,
    pub metrics: RunMetrics,
    pub ledger: CommLedger,
}

/// DPG from zero iterates. Record `t` describes the iterates entering
/// iteration `t`.
pub fn run_dpg(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    config: &DpgConfig,
    opts: &RunOptions,
) -> Result<DpgRun> {
    run_dpg_observed(problem, net, set, config, opts, |_, _, _| Ok(()))
}

/// DPG with an observer that sees the agent iterates entering iteration `t`.
pub fn run_dpg_observed<F>(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    config: &DpgConfig,
    opts: &RunOptions,
    mut observer: F,
) -> Result<DpgRun>
where
    F: FnMut(usize, &[DVector<f64>], &mut IterRecord) -> Result<()>,
{
    check_components(problem, net, set)?;
    config.validate()?;
    if opts.iterations == 0 {
        return Err(Error::InvalidConfig("iteration count must be positive".into()));
    }
    let n = problem.n_agents();
    let mut thetas = vec![DVector::zeros(set.len()); n];
    let mut ledger = CommLedger::new(n);
    let mut records = Vec::with_capacity(opts.iterations);
    let start = Instant::now();
    for t in 1..=opts.iterations {
        let average = network_average(&thetas);
        let (objective, grad) = problem.global_eval(&average).map_err(|e| e.at(t))?;
        let gap = if opts.gap {
            Some(duality_gap(&grad, &average, set).map_err(|e| e.at(t))?)
        } else {
            None
        };
        let mut rec = IterRecord {
            iter: t,
            objective,
            gap,
            consensus_err: thetas.iter().map(|x| (x - &average).norm()).fold(0.0, f64::max),
            nnz_or_rank: set.complexity(&average).map_err(|e| e.at(t))?,
            comm_reals: ledger.mean_reals(),
            ..IterRecord::default()
        };
        if opts.timing {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        observer(t, &thetas, &mut rec).map_err(|e| e.at(t))?;
        records.push(rec);
        thetas =
            dpg_step(&thetas, problem, net, set, config.step_size(t, n), Some(&mut ledger)).map_err(|e| e.at(t))?;
    }
    Ok(DpgRun {
        thetas,
        metrics: RunMetrics {
            records,
            certificate: None,
        },
        ledger,
    })
}

/// Largest pairwise distance between agent iterates.
pub fn max_pairwise_distance(thetas: &[DVector<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, a) in thetas.iter().enumerate() {
        for b in &thetas[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct ReferenceOptimum {
    pub theta: DVector<f64>,
    pub value: f64,
    /// FW gap at `theta`, an upper bound on `value − F*` for convex `F`.
    pub gap: f64,
    pub iterations: usize,
}

/// Minimizes a convex problem over the set with restarted FISTA, stopping
/// once the FW gap drops below `tol · max(1, |F|)`.
pub fn reference_optimum(
    problem: &Problem,
    set: &ConstraintSet,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceOptimum> {
    let lip = global_lipschitz(problem, set)?;
    if !(lip > 0.0) {
        // Constant objective: every feasible point is optimal.
        let x = DVector::zeros(set.len());
        let value = problem.global_value(&x)?;
        return Ok(ReferenceOptimum {
            theta: x,
            value,
            gap: 0.0,
            iterations: 0,
        });
    }
    let step = 1.0 / lip;
    let mut x = DVector::zeros(set.len());
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut gap = f64::INFINITY;
    let mut value = f64::INFINITY;
    for k in 1..=max_iter {
        let (_, gy) = problem.global_eval(&y)?;
        let x_next = set.project(&(&y - gy * step))?;
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let restart = (&y - &x_next).dot(&(&x_next - &x)) > 0.0;
        if restart {
            momentum = 1.0;
            y = x_next.clone();
        } else {
            y = &x_next + (&x_next - &x) * ((momentum - 1.0) / m_next);
            momentum = m_next;
        }
        x = x_next;
        if k % 10 == 0 || k == max_iter {
            let (fx, gx) = problem.global_eval(&x)?;
            value = fx;
            gap = duality_gap(&gx, &x, set)?;
            if gap <= tol * fx.abs().max(1.0) {
                return Ok(ReferenceOptimum {
                    theta: x,
                    value,
                    gap,
                    iterations: k,
                });
            }
        }
    }
    if max_iter == 0 {
        let (fx, gx) = problem.global_eval(&x)?;
        value = fx;
        gap = duality_gap(&gx, &x, set)?;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: gap / value.abs().max(1.0),
    })
}

/// Lipschitz constant of `∇F` for `F = N⁻¹ Σ f_i`.
fn global_lipschitz(problem: &Problem, set: &ConstraintSet) -> Result<f64> {
    match problem {
        Problem::Lasso { agents } => {
            let d = problem.dim();
            let rows: usize = agents.iter().map(|a| a.a.nrows()).sum();
            let mut stacked = DMatrix::zeros(rows, d);
            let mut offset = 0;
            for a in agents {
                stacked.rows_mut(offset, a.a.nrows()).copy_from(&a.a);
                offset += a.a.nrows();
            }
            // Power iteration approaches σ_max from below; pad the estimate.
            Ok(gram_lambda_max(&stacked, 0)? / agents.len() as f64 * 1.01)
        }
        Problem::MatrixCompletion { .. } => Ok(estimate_constants(problem, set, 0)?.l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{metropolis_weights, Topology};
    use crate::objectives::LassoAgentData;
    use approx::assert_abs_diff_eq;

    fn square() -> Problem {
        // F(θ) = θ²
        let a = DMatrix::from_element(1, 1, 2f64.sqrt());
        Problem::lasso(vec![LassoAgentData::new(a, DVector::zeros(1)).unwrap()]).unwrap()
    }

    #[test]
    fn centralized_quadratic_by_hand() {
        let p = square();
        let set = ConstraintSet::l1_ball(1.0, 1).unwrap();
        let mut xs = Vec::new();
        centralized_fw_observed(
            &p,
            &set,
            StepSchedule::Convex,
            6,
            &DVector::from_element(1, 1.0),
            |_, x, _| {
                xs.push(x[0]);
                Ok(())
            },
        )
        .unwrap();
        // γ_1 = 1 jumps to the vertex −1, then θ_{t+1} = (1−γ_t)θ_t ∓ γ_t.
        let mut expect = vec![1.0];
        let mut th: f64 = 1.0;
        for t in 1..6 {
            let g = 2.0 / (t as f64 + 1.0);
            let s = if th > 0.0 { -1.0 } else { 1.0 };
            th = (1.0 - g) * th + g * s;
            expect.push(th);
        }
        for (a, b) in xs.iter().zip(&expect) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(xs[1], -1.0);
        assert_abs_diff_eq!(xs[2], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(xs[3], -1.0 / 3.0, epsilon = 1e-15);
        let obj: Vec<f64> = xs[1..].iter().map(|x| x * x).collect();
        assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        assert!(obj[4] < 0.05);
    }

    #[test]
    fn zero_alpha_is_consensus() {
        let net = metropolis_weights(Topology::path(3)).unwrap();
        let p = Problem::lasso(
            (0..3)
                .map(|i| {
                    LassoAgentData::new(
                        DMatrix::from_element(1, 1, 1.0 + i as f64),
                        DVector::from_element(1, 1.0),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        let set = ConstraintSet::l1_ball(5.0, 1).unwrap();
        let th = vec![DVector::from_element(1, 1.0), DVector::zeros(1), DVector::zeros(1)];
        let out = dpg_step(&th, &p, &net, &set, 0.0, None).unwrap();
        assert_abs_diff_eq!(out[0][0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1][0], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn dpg_step_rules() {
        let c = DpgConfig {
            step: DpgStep::Harmonic,
        };
        assert_eq!(c.step_size(4, 10), 0.25);
        let c = DpgConfig {
            step: DpgStep::SqrtScaled { c1: 0.1 },
        };
        assert_abs_diff_eq!(c.step_size(9, 50), 5.0 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_optimum_interior() {
        let p = square();
        let set = ConstraintSet::l1_ball(1.0, 1).unwrap();
        let r = reference_optimum(&p, &set, 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(r.value, 0.0, epsilon = 1e-12);
    }
}
