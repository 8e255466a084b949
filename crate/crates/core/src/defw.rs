//! Consensus-based Decentralized Frank-Wolfe.
//!
//! Each iteration runs three phases separated by barriers:
//!
//! 1. consensus: `θ̄_t^i = Σ_j W_ij θ_t^j`
//! 2. aggregation with gradient tracking:
//!    `s_t^i = ∇̄_{t−1}^i + ∇f_i(θ̄_t^i) − ∇f_i(θ̄_{t−1}^i)`, then
//!    `∇̄_t^i = Σ_j W_ij s_t^j`
//! 3. Frank-Wolfe step: `θ_{t+1}^i = (1 − γ_t) θ̄_t^i + γ_t LO(∇̄_t^i)`
//!
//! Metrics are computed by the simulator from the exact network averages;
//! agents never see them.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{duality_gap, Atom, ConstraintSet};
use crate::error::{Error, Result};
use crate::network::{ac_round, network_average, t0_alpha, NetworkModel};
use crate::objectives::{estimate_constants, Problem, SmoothnessEstimate};
use crate::sparsefw::CommLedger;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `γ_t = 2 / (t + 1)`
    Convex,
    /// `γ_t = t^{−α}`
    NonConvex { alpha: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::NonConvex { alpha } if !(alpha > 0.0 && alpha <= 1.0) => Err(Error::InvalidConfig(format!(
                "step exponent alpha must lie in (0, 1], got {alpha}"
            ))),
            _ => Ok(()),
        }
    }

    /// Exponent used for the consensus bounds `C/t^α`; the convex schedule
    /// decays like `1/t`.
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Convex => 1.0,
            Self::NonConvex { alpha } => alpha,
        }
    }

    pub fn step_size(&self, t: usize) -> f64 {
        step_size(self, t)
    }
}

pub fn step_size(schedule: &StepSchedule, t: usize) -> f64 {
    assert!(t >= 1, "iterations are 1-based");
    match *schedule {
        StepSchedule::Convex => 2.0 / (t as f64 + 1.0),
        StepSchedule::NonConvex { alpha } => (t as f64).powf(-alpha),
    }
}

/// Everything agent `i` keeps between iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    /// `θ_t^i`
    pub theta: DVector<f64>,
    /// `θ̄_t^i`
    pub theta_bar: DVector<f64>,
    /// `∇̄_t^i`
    pub grad_tracked: DVector<f64>,
    /// `s_t^i`, the tracked surrogate before mixing
    pub grad_surrogate: DVector<f64>,
    /// `∇f_i(θ̄_t^i)` from the latest aggregation
    pub local_grad: DVector<f64>,
    /// `∇f_i(θ̄_{t−1}^i)`; `None` before the first aggregation
    pub prev_local_grad: Option<DVector<f64>>,
}

/// Zero-initialised agents (`θ_1^i = 0` is feasible for every set).
pub fn init_states(n_agents: usize, dim: usize) -> Vec<AgentState> {
    let zero = DVector::zeros(dim);
    (0..n_agents)
        .map(|_| AgentState {
            theta: zero.clone(),
            theta_bar: zero.clone(),
            grad_tracked: zero.clone(),
            grad_surrogate: zero.clone(),
            local_grad: zero.clone(),
            prev_local_grad: None,
        })
        .collect()
}

/// `rounds` AC rounds, charging each agent the nonzeros it sends per round.
pub(crate) fn mix(
    values: Vec<DVector<f64>>,
    net: &NetworkModel,
    rounds: usize,
    ledger: Option<&mut CommLedger>,
) -> Result<Vec<DVector<f64>>> {
    if rounds == 0 {
        return Err(Error::ContractViolation("at least one AC round is required".into()));
    }
    let mut cur = values;
    let mut ledger = ledger;
    for _ in 0..rounds {
        if let Some(l) = ledger.as_deref_mut() {
            l.add_payload(&cur);
        }
        cur = ac_round(&cur, net)?;
    }
    Ok(cur)
}

/// Consensus phase: `θ̄_t^i ← Σ_j W_ij θ_t^j` (one AC round per `rounds`).
pub fn consensus_step(
    states: &mut [AgentState],
    net: &NetworkModel,
    rounds: usize,
    ledger: Option<&mut CommLedger>,
) -> Result<()> {
    let thetas: Vec<_> = states.iter().map(|s| s.theta.clone()).collect();
    let mixed = mix(thetas, net, rounds, ledger)?;
    for (s, m) in states.iter_mut().zip(mixed) {
        s.theta_bar = m;
    }
    Ok(())
}

/// Aggregation phase with the tracked gradient surrogate.
pub fn aggregate_step(
    states: &mut [AgentState],
    problem: &Problem,
    net: &NetworkModel,
    t: usize,
    rounds: usize,
    ledger: Option<&mut CommLedger>,
) -> Result<()> {
    let theta_bars: Vec<_> = states.iter().map(|s| s.theta_bar.clone()).collect();
    let grads = problem.local_grads(&theta_bars)?;
    let surrogates: Vec<DVector<f64>> = states
        .iter()
        .zip(&grads)
        .map(|(s, g)| match (&s.prev_local_grad, t) {
            (Some(prev), t) if t > 1 => &s.grad_tracked + g - prev,
            _ => g.clone(),
        })
        .collect();
    let mixed = mix(surrogates.clone(), net, rounds, ledger)?;
    for ((s, g), (sur, m)) in states.iter_mut().zip(grads).zip(surrogates.into_iter().zip(mixed)) {
        s.prev_local_grad = Some(g.clone());
        s.local_grad = g;
        s.grad_surrogate = sur;
        s.grad_tracked = m;
    }
    Ok(())
}

/// LO on every agent's tracked gradient.
pub fn fw_atoms(states: &[AgentState], set: &ConstraintSet) -> Result<Vec<Atom>> {
    states.par_iter().map(|s| set.lo(&s.grad_tracked)).collect()
}

pub fn apply_fw(states: &mut [AgentState], atoms: &[Atom], gamma: f64) {
    states.par_iter_mut().zip(atoms).for_each(|(s, a)| {
        s.theta = a.blend(&s.theta_bar, gamma);
    });
}

/// Frank-Wolfe phase: `θ_{t+1}^i = (1 − γ) θ̄_t^i + γ a_t^i`.
pub fn fw_step(states: &mut [AgentState], set: &ConstraintSet, gamma: f64) -> Result<Vec<Atom>> {
    let atoms = fw_atoms(states, set)?;
    apply_fw(states, &atoms, gamma);
    Ok(atoms)
}

/// Constants certifying the consensus errors and the convergence rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    pub alpha: f64,
    pub n_agents: usize,
    /// `|λ2|` of the effective mixing matrix (`W^ℓ` for ℓ AC rounds).
    pub lambda2: f64,
    pub t0: u64,
    pub c_p: f64,
    pub c_g: f64,
    pub b1: f64,
    pub l: f64,
    pub g: f64,
    pub mu: f64,
    pub rho: f64,
    pub rho_bar: f64,
    /// Lower bound on the distance from the optimum to the boundary; 0 when
    /// unknown.
    pub delta_lb: f64,
}

impl RateCertificate {
    pub fn bound_cp(&self, t: usize) -> f64 {
        self.c_p / (t as f64).powf(self.alpha)
    }

    pub fn bound_cg(&self, t: usize) -> f64 {
        self.c_g / (t as f64).powf(self.alpha)
    }

    /// Sets `delta_lb = (R − ‖θ*‖₁)/√d` for an ℓ1-ball optimum.
    pub fn with_interior_point(mut self, set: &ConstraintSet, theta_star: &DVector<f64>) -> Result<Self> {
        match *set {
            ConstraintSet::L1Ball { radius, dim } => {
                let slack = radius - crate::linalg::norm_l1(theta_star);
                self.delta_lb = (slack / (dim as f64).sqrt()).max(0.0);
                Ok(self)
            }
            ConstraintSet::TraceBall { .. } => Err(Error::ContractViolation(
                "interior distance is only derived for the l1 ball".into(),
            )),
        }
    }
}

/// Evaluates `t0`, `C_p = t0^α √N ρ̄`, `B1 = max_i ‖∇f_i(θ̄_1^i)‖` and
/// `C_g = √N max{2(2C_p + ρ̄)L, t0^α |λ2| (Lρ̄/(1 − |λ2|) + B1)}`.
pub fn compute_certificate(
    problem: &Problem,
    lambda2: f64,
    set: &ConstraintSet,
    alpha: f64,
    initial_theta_bar: &[DVector<f64>],
    est: &SmoothnessEstimate,
) -> Result<RateCertificate> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::ContractViolation(format!("alpha {alpha} not in (0, 1]")));
    }
    if !(0.0..1.0).contains(&lambda2) {
        return Err(Error::ContractViolation(format!(
            "|lambda2| = {lambda2} must be < 1 (connected network)"
        )));
    }
    let n = problem.n_agents();
    if initial_theta_bar.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: initial_theta_bar.len(),
        });
    }
    let t0 = t0_alpha(lambda2, alpha);
    let t0a = (t0 as f64).powf(alpha);
    let sqrt_n = (n as f64).sqrt();
    let rho_bar = set.rho_bar();
    let c_p = t0a * sqrt_n * rho_bar;
    let mut b1 = 0.0_f64;
    for (i, th) in initial_theta_bar.iter().enumerate() {
        b1 = b1.max(problem.local_grad(i, th)?.norm());
    }
    let l = est.l;
    let c_g = sqrt_n
        * f64::max(
            2.0 * (2.0 * c_p + rho_bar) * l,
            t0a * lambda2 * (l * rho_bar / (1.0 - lambda2) + b1),
        );
    Ok(RateCertificate {
        alpha,
        n_agents: n,
        lambda2,
        t0,
        c_p,
        c_g,
        b1,
        l,
        g: est.g,
        mu: est.mu,
        rho: set.rho(),
        rho_bar,
        delta_lb: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// `F(θ̄_t) − F* ≤ (8ρ̄(C_g + LC_p) + 2Lρ̄²)/(t + 1)`
    Convex,
    /// `F(θ̄_t) − F* ≤ (4ρ̄(C_g + LC_p) + Lρ̄²)² · 9 / (2δ²μ(t + 1)²)`
    StronglyConvex,
    /// Bound on `min_{t ∈ [T/2+1, T]} g_t`; `t` is the horizon `T`.
    NonConvex,
}

pub fn theorem_bounds(cert: &RateCertificate, t: usize, kind: BoundKind) -> Result<f64> {
    if t == 0 {
        return Err(Error::ContractViolation("t must be at least 1".into()));
    }
    let tf = t as f64;
    let rb = cert.rho_bar;
    let l = cert.l;
    let consensus = cert.c_g + l * cert.c_p;
    match kind {
        BoundKind::Convex => Ok((8.0 * rb * consensus + 2.0 * l * rb * rb) / (tf + 1.0)),
        BoundKind::StronglyConvex => {
            if !(cert.delta_lb > 0.0) {
                return Err(Error::InteriorDistanceUnavailable);
            }
            if !(cert.mu > 0.0) {
                return Err(Error::ContractViolation("strong convexity modulus is zero".into()));
            }
            let num = (4.0 * rb * consensus + l * rb * rb).powi(2);
            Ok(num / (2.0 * cert.delta_lb.powi(2) * cert.mu) * 9.0 / (tf + 1.0).powi(2))
        }
        BoundKind::NonConvex => {
            if t < 6 || !t.is_multiple_of(2) {
                return Err(Error::ContractViolation(format!(
                    "non-convex bound needs an even horizon T >= 6, got {t}"
                )));
            }
            let alpha = cert.alpha;
            let c = l * rb * rb / 2.0 + 2.0 * rb * consensus;
            let lead = nonconvex_leading_factor(alpha);
            let g_rho = cert.g * cert.rho;
            if alpha >= 0.5 {
                Ok(tf.powf(-(1.0 - alpha)) * lead * (g_rho + c * std::f64::consts::LN_2))
            } else {
                let tail = (1.0 - 0.5_f64.powf(1.0 - 2.0 * alpha)) / (1.0 - 2.0 * alpha);
                Ok(tf.powf(-alpha) * lead * (g_rho + c * tail))
            }
        }
    }
}

/// `(1 − α)/(1 − (2/3)^{1−α})`, continuous at `α = 1` where it equals
/// `1/ln(3/2)`.
pub fn nonconvex_leading_factor(alpha: f64) -> f64 {
    let e = 1.0 - alpha;
    if e.abs() < 1e-12 {
        return 1.0 / 1.5_f64.ln();
    }
    e / (1.0 - (2.0_f64 / 3.0).powf(e))
}

/// One row of run metrics. Optional fields are only filled by the runs that
/// produce them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// `F(θ̄_t)` at the exact network average.
    pub objective: f64,
    pub suboptimality: Option<f64>,
    /// Frank-Wolfe gap at the network average.
    pub gap: Option<f64>,
    /// `max_i ‖θ̄_t^i − θ̄_t‖₂`
    pub consensus_err: f64,
    /// `max_i ‖∇̄_t^i − ∇̄_t‖₂`
    pub grad_consensus_err: Option<f64>,
    /// Relative error of the tracking identity `mean_i ∇̄_t^i = ∇̄_t`.
    pub tracking_err: Option<f64>,
    pub bound_cp: Option<f64>,
    pub bound_cg: Option<f64>,
    /// Sparsity (ℓ1 ball) or rank (trace ball) of the network average.
    pub nnz_or_rank: usize,
    /// Cumulative nonzero reals sent, averaged per agent.
    pub comm_reals: f64,
    /// Cumulative integer indices sent, averaged per agent.
    pub comm_indices: f64,
    pub wall_ms: f64,
    pub lemma4_err: Option<f64>,
    pub ell_t: Option<usize>,
    pub omega_size: Option<usize>,
    pub mse_test: Option<f64>,
    pub mse_worst: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub records: Vec<IterRecord>,
    pub certificate: Option<RateCertificate>,
}

impl RunMetrics {
    pub fn series(&self, f: impl Fn(&IterRecord) -> Option<f64>) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|r| f(r).map(|v| (r.iter as f64, v)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iterations: usize,
    /// AC rounds per phase (ℓ).
    pub ac_rounds: usize,
    /// Seed for the constant estimators.
    pub seed: u64,
    /// Record wall-clock time; off by default so output is reproducible.
    pub timing: bool,
    /// Compute the rate certificate and the per-iteration bounds.
    pub certificate: bool,
    /// Compute the FW gap at the network average each iteration.
    pub gap: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            iterations: 100,
            ac_rounds: 1,
            seed: 0,
            timing: false,
            certificate: true,
            gap: true,
        }
    }
}

impl RunOptions {
    pub fn with_iterations(iterations: usize) -> Self {
        Self {
            iterations,
            ..Self::default()
        }
    }
}

/// Snapshot handed to observers after the LO of iteration `t` and before
/// the iterate update.
pub struct IterationView<'a> {
    pub t: usize,
    pub gamma: f64,
    pub states: &'a [AgentState],
    /// Exact network average `θ̄_t = N⁻¹ Σ_i θ_t^i`.
    pub average: &'a DVector<f64>,
    pub atoms: &'a [Atom],
}

#[derive(Debug, Clone)]
pub struct DefwRun {
    pub states: Vec<AgentState>,
    pub metrics: RunMetrics,
    pub ledger: CommLedger,
}

pub fn run_defw(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    schedule: StepSchedule,
    opts: &RunOptions,
) -> Result<DefwRun> {
    run_defw_observed(problem, net, set, schedule, opts, |_, _| Ok(()))
}

pub fn run_defw_observed<F>(
    problem: &Problem,
    net: &NetworkModel,
    set: &ConstraintSet,
    schedule: StepSchedule,
    opts: &RunOptions,
    mut observer: F,
) -> Result<DefwRun>
where
    F: FnMut(&IterationView<'_>, &mut IterRecord) -> Result<()>,
{
    check_components(problem, net, set)?;
    schedule.validate()?;
    if opts.iterations == 0 {
        return Err(Error::InvalidConfig("iteration count must be positive".into()));
    }
    let n = problem.n_agents();
    let mut states = init_states(n, set.len());
    let mut ledger = CommLedger::new(n);

    let certificate = if opts.certificate {
        // θ̄_1^i is the mix of the zero initial iterates.
        let first: Vec<_> = states.iter().map(|s| s.theta.clone()).collect();
        let first = mix(first, net, opts.ac_rounds, None)?;
        let est = estimate_constants(problem, set, opts.seed)?;
        let lambda_eff = net.lambda2().powi(opts.ac_rounds as i32);
        Some(compute_certificate(
            problem,
            lambda_eff,
            set,
            schedule.alpha(),
            &first,
            &est,
        )?)
    } else {
        None
    };

    let start = Instant::now();
    let mut records = Vec::with_capacity(opts.iterations);
    for t in 1..=opts.iterations {
        consensus_step(&mut states, net, opts.ac_rounds, Some(&mut ledger)).map_err(|e| e.at(t))?;
        aggregate_step(&mut states, problem, net, t, opts.ac_rounds, Some(&mut ledger)).map_err(|e| e.at(t))?;
        let atoms = fw_atoms(&states, set).map_err(|e| e.at(t))?;
        let gamma = schedule.step_size(t);

        let average = network_average(&states.iter().map(|s| s.theta.clone()).collect::<Vec<_>>());
        let mut rec = base_record(t, problem, set, &states, &average, opts.gap).map_err(|e| e.at(t))?;
        tracking_metrics(&states, &mut rec);
        if let Some(cert) = &certificate {
            rec.bound_cp = Some(cert.bound_cp(t));
            rec.bound_cg = Some(cert.bound_cg(t));
        }
        rec.comm_reals = ledger.mean_reals();
        rec.comm_indices = ledger.mean_indices();
        if opts.timing {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        let view = IterationView {
            t,
            gamma,
            states: &states,
            average: &average,
            atoms: &atoms,
        };
        observer(&view, &mut rec).map_err(|e| e.at(t))?;
        records.push(rec);

        apply_fw(&mut states, &atoms, gamma);
    }

    Ok(DefwRun {
        states,
        metrics: RunMetrics { records, certificate },
        ledger,
    })
}

pub(crate) fn check_components(problem: &Problem, net: &NetworkModel, set: &ConstraintSet) -> Result<()> {
    if problem.n_agents() != net.n_agents() {
        return Err(Error::DimensionMismatch {
            expected: net.n_agents(),
            found: problem.n_agents(),
        });
    }
    if problem.dim() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            found: problem.dim(),
        });
    }
    if let (Problem::MatrixCompletion { rows, cols, .. }, ConstraintSet::TraceBall { rows: r, cols: c, .. }) =
        (problem, set)
    {
        if (rows, cols) != (r, c) {
            return Err(Error::ContractViolation(
                "matrix shape differs from constraint set".into(),
            ));
        }
    }
    Ok(())
}

/// Objective, gap, iterate consensus error and complexity at iteration `t`.
pub(crate) fn base_record(
    t: usize,
    problem: &Problem,
    set: &ConstraintSet,
    states: &[AgentState],
    average: &DVector<f64>,
    with_gap: bool,
) -> Result<IterRecord> {
    let (objective, grad) = problem.global_eval(average)?;
    let gap = if with_gap {
        Some(duality_gap(&grad, average, set)?)
    } else {
        None
    };
    let consensus_err = states
        .iter()
        .map(|s| (&s.theta_bar - average).norm())
        .fold(0.0, f64::max);
    Ok(IterRecord {
        iter: t,
        objective,
        gap,
        consensus_err,
        nnz_or_rank: set.complexity(average)?,
        ..IterRecord::default()
    })
}

/// Gradient consensus error and the tracking identity residual.
fn tracking_metrics(states: &[AgentState], rec: &mut IterRecord) {
    let locals: Vec<_> = states.iter().map(|s| s.local_grad.clone()).collect();
    let tracked: Vec<_> = states.iter().map(|s| s.grad_tracked.clone()).collect();
    let avg_local = network_average(&locals);
    let avg_tracked = network_average(&tracked);
    rec.grad_consensus_err = Some(tracked.iter().map(|g| (g - &avg_local).norm()).fold(0.0, f64::max));
    let scale = avg_local.norm();
    let diff = (&avg_tracked - &avg_local).norm();
    rec.tracking_err = Some(if scale > 0.0 { diff / scale } else { diff });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{metropolis_weights, Topology};
    use crate::objectives::LassoAgentData;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn step_sizes() {
        assert_eq!(step_size(&StepSchedule::Convex, 1), 1.0);
        assert_eq!(step_size(&StepSchedule::Convex, 3), 0.5);
        assert_eq!(step_size(&StepSchedule::NonConvex { alpha: 0.5 }, 4), 0.5);
        assert!(StepSchedule::NonConvex { alpha: 0.0 }.validate().is_err());
        assert!(StepSchedule::NonConvex { alpha: 1.5 }.validate().is_err());
    }

    fn cert(c_p: f64, c_g: f64, l: f64, rho_bar: f64, alpha: f64) -> RateCertificate {
        RateCertificate {
            alpha,
            n_agents: 1,
            lambda2: 0.0,
            t0: 1,
            c_p,
            c_g,
            b1: 0.0,
            l,
            g: 0.0,
            mu: 0.0,
            rho: rho_bar,
            rho_bar,
            delta_lb: 0.0,
        }
    }

    #[test]
    fn convex_bound_arithmetic() {
        let c = cert(0.0, 0.0, 1.0, 2.0, 1.0);
        assert_abs_diff_eq!(theorem_bounds(&c, 1, BoundKind::Convex).unwrap(), 4.0);
        let b: Vec<f64> = (1..50)
            .map(|t| theorem_bounds(&c, t, BoundKind::Convex).unwrap())
            .collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(matches!(
            theorem_bounds(&c, 5, BoundKind::StronglyConvex),
            Err(Error::InteriorDistanceUnavailable)
        ));
    }

    #[test]
    fn nonconvex_leading_factor_half() {
        let f = nonconvex_leading_factor(0.5);
        assert_abs_diff_eq!(f, 0.5 / (1.0 - (2.0f64 / 3.0).sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(f, 2.7247, epsilon = 1e-4);
        assert_abs_diff_eq!(
            nonconvex_leading_factor(1.0 - 1e-9),
            nonconvex_leading_factor(1.0),
            epsilon = 1e-6
        );
        let c = cert(1.0, 1.0, 1.0, 2.0, 0.5);
        assert!(theorem_bounds(&c, 7, BoundKind::NonConvex).is_err());
        assert!(theorem_bounds(&c, 4, BoundKind::NonConvex).is_err());
        let a = theorem_bounds(&c, 100, BoundKind::NonConvex).unwrap();
        let b = theorem_bounds(&c, 400, BoundKind::NonConvex).unwrap();
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-12);
    }

    fn quad_problem(n: usize) -> Problem {
        let agents = (0..n)
            .map(|i| {
                let a = DMatrix::from_fn(3, 2, |r, c| ((r + 2 * c + i) % 3) as f64 - 1.0);
                LassoAgentData::new(a, DVector::from_vec(vec![1.0, -0.5, 0.25])).unwrap()
            })
            .collect();
        Problem::lasso(agents).unwrap()
    }

    #[test]
    fn certificate_examples() {
        // N=4, ρ̄=2, α=1, λ2=0 → t0=1, C_p = 4; λ2=0.9 → t0=19, C_p = 76.
        let p = quad_problem(4);
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        let zeros = vec![DVector::zeros(2); 4];
        let est = SmoothnessEstimate {
            l: 1.0,
            g: 1.0,
            mu: 0.0,
        };
        let c = compute_certificate(&p, 0.0, &set, 1.0, &zeros, &est).unwrap();
        assert_eq!(c.t0, 1);
        assert_abs_diff_eq!(c.c_p, 4.0);
        assert_abs_diff_eq!(c.c_g, 2.0 * 2.0 * (8.0 + 2.0));
        let c = compute_certificate(&p, 0.9, &set, 1.0, &zeros, &est).unwrap();
        assert_eq!(c.t0, 19);
        assert_abs_diff_eq!(c.c_p, 76.0, epsilon = 1e-12);
        assert!(compute_certificate(&p, 1.0, &set, 1.0, &zeros, &est).is_err());
    }

    #[test]
    fn single_agent_tracking_collapses() {
        let p = quad_problem(1);
        let net = NetworkModel::from_weights(Topology::complete(1), DMatrix::identity(1, 1)).unwrap();
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        let mut states = init_states(1, 2);
        for t in 1..=5 {
            consensus_step(&mut states, &net, 1, None).unwrap();
            aggregate_step(&mut states, &p, &net, t, 1, None).unwrap();
            let direct = p.local_grad(0, &states[0].theta_bar).unwrap();
            assert_abs_diff_eq!((&states[0].grad_tracked - direct).norm(), 0.0, epsilon = 1e-12);
            fw_step(&mut states, &set, step_size(&StepSchedule::Convex, t)).unwrap();
        }
    }

    #[test]
    fn fw_step_examples() {
        let set = ConstraintSet::l1_ball(2.0, 3).unwrap();
        let mut states = init_states(1, 3);
        states[0].grad_tracked = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        fw_step(&mut states, &set, 0.5).unwrap();
        assert_eq!(states[0].theta, DVector::from_vec(vec![-1.0, 0.0, 0.0]));
        states[0].theta_bar = states[0].theta.clone();
        states[0].grad_tracked = DVector::from_vec(vec![0.0, -3.0, 0.0]);
        fw_step(&mut states, &set, 1.0).unwrap();
        assert_eq!(states[0].theta, DVector::from_vec(vec![0.0, 2.0, 0.0]));
    }

    #[test]
    fn consensus_step_path() {
        let net = metropolis_weights(Topology::path(3)).unwrap();
        let mut states = init_states(3, 1);
        states[0].theta[0] = 1.0;
        consensus_step(&mut states, &net, 1, None).unwrap();
        assert_abs_diff_eq!(states[0].theta_bar[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(states[1].theta_bar[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(states[2].theta_bar[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_iterations_rejected() {
        let p = quad_problem(3);
        let net = metropolis_weights(Topology::path(3)).unwrap();
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        let err = run_defw(&p, &net, &set, StepSchedule::Convex, &RunOptions::with_iterations(0));
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
