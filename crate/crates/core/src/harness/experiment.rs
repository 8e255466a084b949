//! Runs one configured experiment end to end.

use std::time::Instant;

use nalgebra::DVector;

use super::config::{ExperimentConfig, ExperimentKind, McConfig, NoiseConfig, ProblemKind, TopologyConfig};
use super::datagen::{
    gen_lasso_instance, gen_mc_instance, infer_shape, load_movielens, mc_problem, split_entries, Entry, McNoise,
};
use super::metrics::{csv_columns, mse_test, mse_worst};
use crate::baselines::{centralized_fw_observed, reference_optimum, run_dpg_observed, DpgConfig};
use crate::constraints::ConstraintSet;
use crate::defw::{run_defw_observed, IterRecord, RunMetrics, RunOptions};
use crate::error::{Error, Result};
use crate::linalg::{norm_l1, nuclear_norm};
use crate::network::{gen_erdos_renyi, metropolis_weights, NetworkModel, Topology};
use crate::objectives::{McLoss, Problem};
use crate::sparsefw::{run_sparsified_defw_observed, CoordSelection};

/// Tolerance and iteration cap for the `F*` solve.
const REFERENCE_TOL: f64 = 1e-11;
const REFERENCE_MAX_ITER: usize = 200_000;

/// Offsets that derive independent seeds from the experiment seed.
const DATA_SEED_OFFSET: u64 = 1;
const SELECTION_SEED_OFFSET: u64 = 2;
const ESTIMATE_SEED_OFFSET: u64 = 3;
const SPLIT_SEED_OFFSET: u64 = 4;

pub fn build_network(cfg: &ExperimentConfig) -> Result<NetworkModel> {
    let n = cfg.network.n_agents;
    let topology = match &cfg.network.topology {
        TopologyConfig::ErdosRenyi { p } if n > 1 => gen_erdos_renyi(n, *p, cfg.seed)?,
        TopologyConfig::ErdosRenyi { .. } | TopologyConfig::Complete => Topology::complete(n),
        TopologyConfig::Ring => Topology::ring(n),
        TopologyConfig::Path => Topology::path(n),
        TopologyConfig::EdgeList { path } => Topology::from_edge_list(&std::fs::read_to_string(path)?, Some(n))?,
    };
    metropolis_weights(topology)
}

/// Problem data, constraint set and held-out entries of an experiment.
pub struct Instance {
    pub problem: Problem,
    pub set: ConstraintSet,
    pub test: Vec<Entry>,
    pub rows: usize,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let n = cfg.network.n_agents;
    let data_seed = cfg.seed.wrapping_add(DATA_SEED_OFFSET);
    match cfg.problem_kind() {
        ProblemKind::Lasso => {
            let l = &cfg.lasso;
            let inst = gen_lasso_instance(n, l.m, l.d, l.s, l.sigma2, data_seed)?;
            let radius = l.radius.unwrap_or(l.radius_scale * norm_l1(&inst.theta_true));
            Ok(Instance {
                set: ConstraintSet::l1_ball(radius, l.d)?,
                problem: inst.problem,
                test: Vec::new(),
                rows: 0,
            })
        }
        kind => {
            let m = &cfg.mc;
            let loss = mc_loss(kind, m);
            if let Some(path) = &m.movielens {
                let ratings = load_movielens(path, None)?;
                let (rows, cols) = infer_shape(&ratings);
                let split = split_entries(&ratings, m.test_frac, cfg.seed.wrapping_add(SPLIT_SEED_OFFSET))?;
                let radius = m.radius.expect("validated");
                return Ok(Instance {
                    problem: mc_problem(rows, cols, &split.train, n, loss)?,
                    set: ConstraintSet::trace_ball(radius, rows, cols)?,
                    test: split.test,
                    rows,
                });
            }
            let inst = gen_mc_instance(n, m.rows, m.cols, m.rank, m.train_frac, noise_model(m), loss, data_seed)?;
            let radius = match m.radius {
                Some(r) => r,
                None => m.radius_scale * nuclear_norm(&inst.theta_true)?,
            };
            Ok(Instance {
                problem: inst.problem,
                set: ConstraintSet::trace_ball(radius, m.rows, m.cols)?,
                test: inst.test,
                rows: m.rows,
            })
        }
    }
}

fn noise_model(m: &McConfig) -> McNoise {
    match m.noise {
        NoiseConfig::None => McNoise::None,
        NoiseConfig::Sparse { prob, var } => McNoise::Sparse { prob, var },
    }
}

fn mc_loss(kind: ProblemKind, m: &McConfig) -> McLoss {
    match kind {
        ProblemKind::McGauss => McLoss::NegGauss { sigma: m.sigma },
        _ => McLoss::Square { sigma2: m.sigma2 },
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub columns: Vec<&'static str>,
    pub metrics: RunMetrics,
    /// `F*` used for the suboptimality column, when computed.
    pub optimum: Option<f64>,
    pub lambda2: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let net = build_network(cfg)?;
    let inst = build_instance(cfg)?;
    let schedule = cfg.effective_schedule();
    let opts = RunOptions {
        iterations: cfg.iterations,
        ac_rounds: cfg.ac_rounds,
        seed: cfg.seed.wrapping_add(ESTIMATE_SEED_OFFSET),
        timing: cfg.timing,
        certificate: cfg.certificate,
        gap: true,
    };
    let is_mc = cfg.problem_kind() != ProblemKind::Lasso;
    let test = &inst.test;
    let rows = inst.rows;
    let add_mse = |average: &DVector<f64>, locals: &[DVector<f64>], rec: &mut IterRecord| -> Result<()> {
        if is_mc {
            rec.mse_test = Some(mse_test(average, rows, test)?);
            rec.mse_worst = Some(mse_worst(locals, rows, test)?);
        }
        Ok(())
    };

    let mut metrics = match cfg.kind {
        ExperimentKind::Lasso | ExperimentKind::McSquare | ExperimentKind::McGauss => {
            run_defw_observed(&inst.problem, &net, &inst.set, schedule, &opts, |view, rec| {
                let locals: Vec<_> = view.states.iter().map(|s| s.theta_bar.clone()).collect();
                add_mse(view.average, &locals, rec)
            })?
            .metrics
        }
        ExperimentKind::SparsifiedLasso => {
            let selection = CoordSelection {
                scheme: cfg.sparse.scheme,
                alpha_comm: cfg.sparse.alpha_comm,
                seed: cfg.seed.wrapping_add(SELECTION_SEED_OFFSET),
            };
            run_sparsified_defw_observed(
                &inst.problem,
                &net,
                &inst.set,
                schedule,
                &selection,
                cfg.sparse.ell,
                &opts,
                |_, _| Ok(()),
            )?
            .metrics
        }
        ExperimentKind::BaselineDpg => {
            let dpg = DpgConfig {
                step: cfg.effective_dpg(),
            };
            run_dpg_observed(&inst.problem, &net, &inst.set, &dpg, &opts, |_, thetas, rec| {
                let average = crate::network::network_average(thetas);
                add_mse(&average, thetas, rec)
            })?
            .metrics
        }
        ExperimentKind::CentralizedFw => {
            let start = Instant::now();
            let zero = DVector::zeros(inst.set.len());
            centralized_fw_observed(
                &inst.problem,
                &inst.set,
                schedule,
                cfg.iterations,
                &zero,
                |_, theta, rec| {
                    if cfg.timing {
                        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    }
                    add_mse(theta, std::slice::from_ref(theta), rec)
                },
            )?
        }
    };

    let convex = cfg.problem_kind() != ProblemKind::McGauss;
    let optimum = if cfg.reference && convex {
        let r = reference_optimum(&inst.problem, &inst.set, REFERENCE_TOL, REFERENCE_MAX_ITER)?;
        for rec in &mut metrics.records {
            rec.suboptimality = Some(rec.objective - r.value);
        }
        Some(r.value)
    } else {
        None
    };

    Ok(ExperimentOutput {
        columns: csv_columns(cfg.kind, cfg.problem_kind()),
        metrics,
        optimum,
        lambda2: net.lambda2(),
    })
}

/// Instance and topology for `datagen`.
pub fn materialize(cfg: &ExperimentConfig, dir: &std::path::Path) -> Result<()> {
    let net = build_network(cfg)?;
    let n = cfg.network.n_agents;
    let data_seed = cfg.seed.wrapping_add(DATA_SEED_OFFSET);
    match cfg.problem_kind() {
        ProblemKind::Lasso => {
            let l = &cfg.lasso;
            let inst = gen_lasso_instance(n, l.m, l.d, l.s, l.sigma2, data_seed)?;
            super::datagen::write_lasso_instance(dir, &inst, net.topology())
        }
        kind => {
            let m = &cfg.mc;
            if m.movielens.is_some() {
                return Err(Error::InvalidConfig(
                    "datagen only materializes synthetic instances".into(),
                ));
            }
            let inst = gen_mc_instance(
                n,
                m.rows,
                m.cols,
                m.rank,
                m.train_frac,
                noise_model(m),
                mc_loss(kind, m),
                data_seed,
            )?;
            super::datagen::write_mc_instance(dir, &inst, n, net.topology())
        }
    }
}
