//! Per-agent objective families: distributed LASSO and matrix completion
//! with square or negated-Gaussian loss.
//!
//! The global objective is always the mean `F(θ) = N⁻¹ Σ_i f_i(θ)`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{as_matrix, ConstraintSet};
use crate::error::{Error, Result};
use crate::linalg::{gram_lambda_max, norm_inf, seeded_rng, spectral_norm, standard_normal_vector};

/// Number of feasible points sampled when estimating `G`.
pub const LIPSCHITZ_SAMPLES: usize = 1000;

#[derive(Debug, Clone)]
pub struct LassoAgentData {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl LassoAgentData {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: y.len(),
            });
        }
        Ok(Self { a, y })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum McLoss {
    /// `(1/σ²)(Y − θ)²`
    Square { sigma2: f64 },
    /// `1 − exp(−(θ − Y)²/σ)`
    NegGauss { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct McAgentData {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize)>,
    values: Vec<f64>,
    loss: McLoss,
}

impl McAgentData {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize)>, values: Vec<f64>, loss: McLoss) -> Result<Self> {
        if entries.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: entries.len(),
                found: values.len(),
            });
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for &(k, l) in &entries {
            if k >= rows || l >= cols {
                return Err(Error::ContractViolation(format!(
                    "observation ({k}, {l}) outside {rows}x{cols}"
                )));
            }
            if !seen.insert((k, l)) {
                return Err(Error::ContractViolation(format!("duplicate observation ({k}, {l})")));
            }
        }
        match loss {
            McLoss::Square { sigma2 } if !(sigma2 > 0.0) => {
                return Err(Error::ContractViolation("sigma2 must be positive".into()))
            }
            McLoss::NegGauss { sigma } if !(sigma > 0.0) => {
                return Err(Error::ContractViolation("sigma must be positive".into()))
            }
            _ => {}
        }
        Ok(Self {
            rows,
            cols,
            entries,
            values,
            loss,
        })
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn loss(&self) -> McLoss {
        self.loss
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn flat(&self, k: usize, l: usize) -> usize {
        k + l * self.rows
    }
}

/// `½‖y − Aθ‖²` and `Aᵀ(Aθ − y)`.
pub fn lasso_local_eval(data: &LassoAgentData, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    if theta.len() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: theta.len(),
        });
    }
    let resid = &data.a * theta - &data.y;
    let value = 0.5 * resid.norm_squared();
    let grad = data.a.tr_mul(&resid);
    Ok((value, grad))
}

fn check_mc_len(data: &McAgentData, theta: &DVector<f64>) -> Result<()> {
    let len = data.rows * data.cols;
    if theta.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: theta.len(),
        });
    }
    Ok(())
}

/// Square loss; the gradient is supported on the agent's observations.
pub fn mc_square_local_eval(data: &McAgentData, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let McLoss::Square { sigma2 } = data.loss else {
        return Err(Error::ContractViolation("expected square loss".into()));
    };
    check_mc_len(data, theta)?;
    let mut grad = DVector::zeros(theta.len());
    let mut value = 0.0;
    for (&(k, l), &y) in data.entries.iter().zip(&data.values) {
        let idx = data.flat(k, l);
        let r = theta[idx] - y;
        value += r * r / sigma2;
        grad[idx] = 2.0 * r / sigma2;
    }
    Ok((value, grad))
}

/// Negated Gaussian loss; bounded per entry in `[0, 1)`.
pub fn mc_gauss_local_eval(data: &McAgentData, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let McLoss::NegGauss { sigma } = data.loss else {
        return Err(Error::ContractViolation("expected negated Gaussian loss".into()));
    };
    if !(sigma > 0.0) {
        return Err(Error::ContractViolation("sigma must be positive".into()));
    }
    check_mc_len(data, theta)?;
    let mut grad = DVector::zeros(theta.len());
    let mut value = 0.0;
    for (&(k, l), &y) in data.entries.iter().zip(&data.values) {
        let idx = data.flat(k, l);
        let r = theta[idx] - y;
        let e = (-r * r / sigma).exp();
        value += 1.0 - e;
        grad[idx] = 2.0 * r / sigma * e;
    }
    Ok((value, grad))
}

pub fn mc_local_eval(data: &McAgentData, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    match data.loss {
        McLoss::Square { .. } => mc_square_local_eval(data, theta),
        McLoss::NegGauss { .. } => mc_gauss_local_eval(data, theta),
    }
}

/// A network-wide problem: one private objective per agent.
#[derive(Debug, Clone)]
pub enum Problem {
    Lasso {
        agents: Vec<LassoAgentData>,
    },
    MatrixCompletion {
        rows: usize,
        cols: usize,
        agents: Vec<McAgentData>,
    },
}

impl Problem {
    pub fn lasso(agents: Vec<LassoAgentData>) -> Result<Self> {
        let first = agents
            .first()
            .ok_or_else(|| Error::ContractViolation("no agents".into()))?;
        let d = first.dim();
        for a in &agents {
            if a.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: a.dim(),
                });
            }
        }
        Ok(Self::Lasso { agents })
    }

    pub fn matrix_completion(rows: usize, cols: usize, agents: Vec<McAgentData>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::ContractViolation("no agents".into()));
        }
        for a in &agents {
            if a.shape() != (rows, cols) {
                return Err(Error::ContractViolation("agent matrix shape mismatch".into()));
            }
        }
        Ok(Self::MatrixCompletion { rows, cols, agents })
    }

    pub fn n_agents(&self) -> usize {
        match self {
            Self::Lasso { agents } => agents.len(),
            Self::MatrixCompletion { agents, .. } => agents.len(),
        }
    }

    /// Length of the vectorised decision variable.
    pub fn dim(&self) -> usize {
        match self {
            Self::Lasso { agents } => agents[0].dim(),
            Self::MatrixCompletion { rows, cols, .. } => rows * cols,
        }
    }

    pub fn is_lasso(&self) -> bool {
        matches!(self, Self::Lasso { .. })
    }

    pub fn local_eval(&self, agent: usize, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        match self {
            Self::Lasso { agents } => lasso_local_eval(&agents[agent], theta),
            Self::MatrixCompletion { agents, .. } => mc_local_eval(&agents[agent], theta),
        }
    }

    pub fn local_grad(&self, agent: usize, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.local_eval(agent, theta)?.1)
    }

    /// `∇f_i(θ_i)` for every agent, evaluated in parallel.
    pub fn local_grads(&self, thetas: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        (0..self.n_agents())
            .into_par_iter()
            .map(|i| self.local_grad(i, &thetas[i]))
            .collect()
    }

    /// `F(θ)` and `∇F(θ)`, both means over agents. Agent contributions are
    /// summed in index order.
    pub fn global_eval(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let parts: Vec<(f64, DVector<f64>)> = (0..self.n_agents())
            .into_par_iter()
            .map(|i| self.local_eval(i, theta))
            .collect::<Result<_>>()?;
        let n = self.n_agents() as f64;
        let mut value = 0.0;
        let mut grad = DVector::zeros(theta.len());
        for (v, g) in parts {
            value += v;
            grad += g;
        }
        Ok((value / n, grad / n))
    }

    pub fn global_value(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.global_eval(theta)?.0)
    }
}

/// Smoothness constants used by the rate certificates. All three are
/// estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    /// Lipschitz constant of each `∇f_i`.
    pub l: f64,
    /// Lipschitz constant of each `f_i` over the constraint set, in the
    /// set's norm (dual-norm gradient bound).
    pub g: f64,
    /// Strong-convexity modulus of `F`; 0 when absent.
    pub mu: f64,
}

pub fn estimate_constants(problem: &Problem, set: &ConstraintSet, seed: u64) -> Result<SmoothnessEstimate> {
    if problem.dim() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            found: problem.dim(),
        });
    }
    let (l, mu) = match problem {
        Problem::Lasso { agents } => {
            let mut l = 0.0_f64;
            for (i, a) in agents.iter().enumerate() {
                l = l.max(gram_lambda_max(&a.a, seed.wrapping_add(i as u64))?);
            }
            (l, lasso_strong_convexity(agents))
        }
        Problem::MatrixCompletion { agents, .. } => {
            let mut l = 0.0_f64;
            for a in agents {
                l = l.max(match a.loss {
                    McLoss::Square { sigma2 } => 2.0 / sigma2,
                    McLoss::NegGauss { sigma } => 2.0 / sigma,
                });
            }
            (l, 0.0)
        }
    };
    let g = sampled_lipschitz(problem, set, seed)?;
    Ok(SmoothnessEstimate { l, g, mu: mu.min(l) })
}

fn lasso_strong_convexity(agents: &[LassoAgentData]) -> f64 {
    let d = agents[0].dim();
    let rows: usize = agents.iter().map(|a| a.a.nrows()).sum();
    if rows < d {
        return 0.0;
    }
    let mut h = DMatrix::zeros(d, d);
    for a in agents {
        h += a.a.tr_mul(&a.a);
    }
    h /= agents.len() as f64;
    let eig = h.symmetric_eigen();
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
}

/// Largest dual-norm gradient over sampled feasible points: vertices or
/// random rank-one atoms first, then random convex combinations of them.
fn sampled_lipschitz(problem: &Problem, set: &ConstraintSet, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed ^ 0x6c1b_5eed);
    let r = set.radius();
    let mut atoms: Vec<DVector<f64>> = Vec::new();
    let half = LIPSCHITZ_SAMPLES / 2;
    match *set {
        ConstraintSet::L1Ball { dim, .. } => {
            let n_vertices = 2 * dim;
            let picks: Vec<usize> = if n_vertices <= half {
                (0..n_vertices).collect()
            } else {
                (0..half).map(|_| rng.random_range(0..n_vertices)).collect()
            };
            for p in picks {
                let mut a = DVector::zeros(dim);
                a[p / 2] = if p % 2 == 0 { r } else { -r };
                atoms.push(a);
            }
        }
        ConstraintSet::TraceBall { rows, cols, .. } => {
            for _ in 0..half {
                let mut u = standard_normal_vector(rows, &mut rng);
                let mut v = standard_normal_vector(cols, &mut rng);
                u /= u.norm();
                v /= v.norm();
                let m = &u * v.transpose() * r;
                atoms.push(DVector::from_column_slice(m.as_slice()));
            }
        }
    }
    let mut points = atoms.clone();
    while points.len() < LIPSCHITZ_SAMPLES {
        let i = rng.random_range(0..atoms.len());
        let j = rng.random_range(0..atoms.len());
        let w: f64 = rng.random();
        points.push(&atoms[i] * w + &atoms[j] * (1.0 - w));
    }

    let dual_norm = |g: &DVector<f64>| -> Result<f64> {
        match *set {
            ConstraintSet::L1Ball { .. } => Ok(norm_inf(g)),
            ConstraintSet::TraceBall { rows, cols, .. } => Ok(spectral_norm(&as_matrix(g, rows, cols), 7)),
        }
    };
    let per_point: Vec<f64> = points
        .par_iter()
        .map(|p| -> Result<f64> {
            let mut best = 0.0_f64;
            for i in 0..problem.n_agents() {
                best = best.max(dual_norm(&problem.local_grad(i, p)?)?);
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().fold(0.0, f64::max))
}
