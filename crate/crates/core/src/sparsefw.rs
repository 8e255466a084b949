//! Communication-sparsified DeFW for LASSO.
//!
//! Agents exchange their raw local gradients masked to a shared coordinate
//! set `Ω_t` and mix them over `ℓ_t` AC rounds. The LO on the ℓ1 ball only
//! needs the largest-magnitude coordinate, and it is invariant to positive
//! rescaling, so the `ξ_t⁻¹` correction is only applied in diagnostics.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::constraints::{Atom, ConstraintSet};
use crate::defw::{apply_fw, base_record, check_components, consensus_step, fw_atoms, init_states, mix};
use crate::defw::{AgentState, IterRecord, RunMetrics, RunOptions, StepSchedule};
use crate::error::{Error, Result};
use crate::linalg::{nnz, norm_inf, seeded_rng, Rng};
use crate::network::{build_spanning_tree, network_average, NetworkModel, SpanningTree};
use crate::objectives::Problem;

/// Per-agent communication counters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CommLedger {
    reals: Vec<u64>,
    indices: Vec<u64>,
}

impl CommLedger {
    pub fn new(n_agents: usize) -> Self {
        Self {
            reals: vec![0; n_agents],
            indices: vec![0; n_agents],
        }
    }

    /// Charges each agent the nonzeros of the vector it broadcasts.
    pub fn add_payload(&mut self, values: &[DVector<f64>]) {
        for (count, v) in self.reals.iter_mut().zip(values) {
            *count += nnz(v) as u64;
        }
    }

    pub fn add_indices(&mut self, agent: usize, count: usize) {
        self.indices[agent] += count as u64;
    }

    pub fn reals(&self) -> &[u64] {
        &self.reals
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn mean_reals(&self) -> f64 {
        mean_u64(&self.reals)
    }

    pub fn mean_indices(&self) -> f64 {
        mean_u64(&self.indices)
    }
}

fn mean_u64(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<u64>() as f64 / xs.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordScheme {
    /// `p_t` draws per agent, uniform with replacement.
    Random,
    /// Each agent's `p_t` largest-magnitude gradient coordinates.
    Extreme,
    /// Every coordinate; the unsparsified multi-round reference.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordSelection {
    pub scheme: CoordScheme,
    /// Growth rate in `p_t = ⌈2 + α_comm · t⌉`.
    pub alpha_comm: f64,
    pub seed: u64,
}

impl CoordSelection {
    pub fn p_t(&self, t: usize) -> usize {
        (2.0 + self.alpha_comm * t as f64).ceil().max(1.0) as usize
    }
}

/// Coordinates chosen at one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinateSet {
    /// `Ω_{t,i}`, sorted and deduplicated.
    pub per_agent: Vec<Vec<usize>>,
    /// `Ω_t = ∪_i Ω_{t,i}`, sorted.
    pub union: Vec<usize>,
}

/// Picks `Ω_{t,i}` for each agent from its fresh local gradient.
pub fn select_coords(
    local_grads: &[DVector<f64>],
    selection: &CoordSelection,
    t: usize,
    rng: &mut Rng,
) -> CoordinateSet {
    let d = local_grads.first().map_or(0, |g| g.len());
    let p = selection.p_t(t);
    let per_agent: Vec<Vec<usize>> = local_grads
        .iter()
        .map(|g| {
            let mut picked: Vec<usize> = match selection.scheme {
                CoordScheme::Random => (0..p).map(|_| rng.random_range(0..d)).collect(),
                CoordScheme::Extreme => extreme_coords(g, p),
                CoordScheme::Full => (0..d).collect(),
            };
            picked.sort_unstable();
            picked.dedup();
            picked
        })
        .collect();
    let mut union: Vec<usize> = per_agent.iter().flatten().copied().collect();
    union.sort_unstable();
    union.dedup();
    CoordinateSet { per_agent, union }
}

/// Indices of the `p` largest `|g_k|`, ties broken by lower index.
fn extreme_coords(g: &DVector<f64>, p: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    order.truncate(p.min(g.len()));
    order
}

/// Charges the index traffic of making `Ω_t` known to every agent: each
/// agent forwards its subtree's union to its parent, then the root's union
/// is pushed down the tree.
pub fn broadcast_cost(tree: &SpanningTree, coords: &CoordinateSet, ledger: &mut CommLedger) {
    let n = tree.parent.len();
    let mut subtree: Vec<Vec<usize>> = coords.per_agent.clone();
    for i in tree.bottom_up_order() {
        if let Some(p) = tree.parent[i] {
            ledger.add_indices(i, subtree[i].len());
            let mut merged = std::mem::take(&mut subtree[p]);
            merged.extend_from_slice(&subtree[i]);
            merged.sort_unstable();
            merged.dedup();
            subtree[p] = merged;
        }
    }
    let children: Vec<usize> = (0..n)
        .map(|i| tree.parent.iter().filter(|p| **p == Some(i)).count())
        .collect();
    for (i, c) in children.into_iter().enumerate() {
        ledger.add_indices(i, c * coords.union.len());
    }
}

/// Probability that a coordinate lands in `Ω_t` under random selection:
/// `1 − (1 − 1/d)^{p_t N}`.
pub fn xi_t(d: usize, p_t: usize, n_agents: usize) -> f64 {
    assert!(d >= 1 && p_t >= 1 && n_agents >= 1);
    1.0 - (1.0 - 1.0 / d as f64).powf((p_t * n_agents) as f64)
}

/// `ℓ_t = ⌈C_l + log t / log |λ2|⁻¹⌉`.
pub fn ell_t(t: usize, lambda2: f64, c_l: f64) -> Result<usize> {
    if t == 0 {
        return Err(Error::ContractViolation("t must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&lambda2) {
        return Err(Error::ContractViolation(format!("lambda2 {lambda2} not in [0, 1)")));
    }
    let rounds = if lambda2 == 0.0 {
        c_l.ceil()
    } else {
        (c_l + (t as f64).ln() / (1.0 / lambda2).ln()).ceil()
    };
    Ok((rounds as usize).max(1))
}

/// Schedule used in the experiments: `ℓ_t = ⌈log t + 1⌉`.
pub fn ell_t_experiment(t: usize) -> usize {
    ((t as f64).ln() + 1.0).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum EllRule {
    Theory { c_l: f64 },
    Experiment,
    Fixed { rounds: usize },
}

impl EllRule {
    pub fn rounds(&self, t: usize, lambda2: f64) -> Result<usize> {
        match *self {
            Self::Theory { c_l } => ell_t(t, lambda2, c_l),
            Self::Experiment => Ok(ell_t_experiment(t)),
            Self::Fixed { rounds } if rounds >= 1 => Ok(rounds),
            Self::Fixed { .. } => Err(Error::InvalidConfig("fixed AC rounds must be >= 1".into())),
        }
    }
}

/// Masks each local gradient to `Ω_t` and mixes the result over `rounds` AC
/// rounds.
pub fn sparsified_aggregate(
    local_grads: &[DVector<f64>],
    net: &NetworkModel,
    omega: &[usize],
    rounds: usize,
    ledger: Option<&mut CommLedger>,
) -> Result<Vec<DVector<f64>>> {
    let masked: Vec<DVector<f64>> = local_grads
        .iter()
        .map(|g| {
            let mut m = DVector::zeros(g.len());
            for &k in omega {
                m[k] = g[k];
            }
            m
        })
        .collect();
    mix(masked, net, rounds, ledger)
}

/// Snapshot passed to observers before the iterate update.
pub struct SparseIterationView<'a> {
    pub t: usize,
    pub xi: f64,
    pub ell: usize,
    pub coords: &'a CoordinateSet,
    pub states: &'a [AgentState],
    pub atoms: &'a [Atom],
}

#[derive(Debug, Clone)]
pub struct SparseRun {
    pub states: Vec<AgentState>,
    pub metrics: RunMetrics,
    pub ledger: CommLedger,
}

pub fn run_sparsified_defw(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    schedule: StepSchedule,
    selection: &CoordSelection,
    ell_rule: EllRule,
    opts: &RunOptions,
) -> Result<SparseRun> {
    run_sparsified_defw_observed(problem, net, set, schedule, selection, ell_rule, opts, |_, _| Ok(()))
}

#[allow(clippy::too_many_arguments)]
pub fn run_sparsified_defw_observed<F>(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    schedule: StepSchedule,
    selection: &CoordSelection,
    ell_rule: EllRule,
    opts: &RunOptions,
    mut observer: F,
) -> Result<SparseRun>
where
    F: FnMut(&SparseIterationView<'_>, &mut IterRecord) -> Result<()>,
{
    if !problem.is_lasso() || !matches!(set, ConstraintSet::L1Ball { .. }) {
        return Err(Error::InvalidConfig(
            "sparsified DeFW requires a LASSO problem on an l1 ball".into(),
        ));
    }
    check_components(problem, net, set)?;
    schedule.validate()?;
    if opts.iterations == 0 {
        return Err(Error::InvalidConfig("iteration count must be positive".into()));
    }
    if !(selection.alpha_comm > 0.0) {
        return Err(Error::InvalidConfig("alpha_comm must be positive".into()));
    }
    let n = problem.n_agents();
    let d = set.len();
    let tree = build_spanning_tree(net.topology(), 0)?;
    let mut rng = seeded_rng(selection.seed);
    let mut states = init_states(n, d);
    let mut ledger = CommLedger::new(n);
    let mut records = Vec::with_capacity(opts.iterations);
    let start = Instant::now();

    for t in 1..=opts.iterations {
        consensus_step(&mut states, net, 1, Some(&mut ledger)).map_err(|e| e.at(t))?;
        let theta_bars: Vec<_> = states.iter().map(|s| s.theta_bar.clone()).collect();
        let grads = problem.local_grads(&theta_bars).map_err(|e| e.at(t))?;

        let coords = select_coords(&grads, selection, t, &mut rng);
        broadcast_cost(&tree, &coords, &mut ledger);
        let ell = ell_rule.rounds(t, net.lambda2()).map_err(|e| e.at(t))?;
        let tracked = sparsified_aggregate(&grads, net, &coords.union, ell, Some(&mut ledger)).map_err(|e| e.at(t))?;
        for ((s, g), m) in states.iter_mut().zip(grads).zip(tracked) {
            s.prev_local_grad = Some(std::mem::replace(&mut s.local_grad, g));
            s.grad_tracked = m;
        }
        let atoms = fw_atoms(&states, set).map_err(|e| e.at(t))?;
        let gamma = schedule.step_size(t);

        let average = network_average(&states.iter().map(|s| s.theta.clone()).collect::<Vec<_>>());
        let mut rec = base_record(t, problem, set, &states, &average, opts.gap).map_err(|e| e.at(t))?;
        let xi = xi_t(d, selection.p_t(t), n);
        let avg_local = network_average(&states.iter().map(|s| s.local_grad.clone()).collect::<Vec<_>>());
        rec.grad_consensus_err = Some(
            states
                .iter()
                .map(|s| (&s.grad_tracked - &avg_local).norm())
                .fold(0.0, f64::max),
        );
        rec.lemma4_err = Some(lemma4_median(&states, &avg_local, xi));
        rec.ell_t = Some(ell);
        rec.omega_size = Some(coords.union.len());
        rec.comm_reals = ledger.mean_reals();
        rec.comm_indices = ledger.mean_indices();
        if opts.timing {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        let view = SparseIterationView {
            t,
            xi,
            ell,
            coords: &coords,
            states: &states,
            atoms: &atoms,
        };
        observer(&view, &mut rec).map_err(|e| e.at(t))?;
        records.push(rec);
        apply_fw(&mut states, &atoms, gamma);
    }

    Ok(SparseRun {
        states,
        metrics: RunMetrics {
            records,
            certificate: None,
        },
        ledger,
    })
}

/// Median over agents of `‖ξ⁻¹ ∇̄_t^i − N⁻¹ Σ_j ∇f_j(θ̄_t^j)‖_∞`.
fn lemma4_median(states: &[AgentState], avg_local: &DVector<f64>, xi: f64) -> f64 {
    let mut errs: Vec<f64> = states
        .iter()
        .map(|s| norm_inf(&(&s.grad_tracked / xi - avg_local)))
        .collect();
    median(&mut errs)
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
