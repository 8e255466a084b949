//! Constraint sets with linear-optimization (LO) oracles, Euclidean
//! projections and the Frank-Wolfe gap.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_top_singular_pair, norm_inf, norm_l1, nuclear_norm, top_singular_pair};

/// Default relative residual for the trace-ball oracle.
pub const TRACE_LO_TOL: f64 = 1e-8;
/// Iteration cap for the trace-ball power iteration.
pub const TRACE_LO_MAX_ITER: usize = 5000;
/// Seed for the power-iteration start vector.
pub const TRACE_LO_SEED: u64 = 0x00de_f00d;

/// Relative slack used by feasibility checks.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSet {
    /// `{θ ∈ R^d : ‖θ‖₁ ≤ R}`
    L1Ball { radius: f64, dim: usize },
    /// `{Θ ∈ R^{rows×cols} : ‖Θ‖_{σ,1} ≤ R}`, vectorised column-major.
    TraceBall { radius: f64, rows: usize, cols: usize },
}

impl ConstraintSet {
    pub fn l1_ball(radius: f64, dim: usize) -> Result<Self> {
        check_radius(radius)?;
        if dim == 0 {
            return Err(Error::ContractViolation("dimension must be positive".into()));
        }
        Ok(Self::L1Ball { radius, dim })
    }

    pub fn trace_ball(radius: f64, rows: usize, cols: usize) -> Result<Self> {
        check_radius(radius)?;
        if rows == 0 || cols == 0 {
            return Err(Error::ContractViolation("matrix shape must be positive".into()));
        }
        Ok(Self::TraceBall { radius, rows, cols })
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Self::L1Ball { radius, .. } | Self::TraceBall { radius, .. } => radius,
        }
    }

    /// Length of the vectorised point.
    pub fn len(&self) -> usize {
        match *self {
            Self::L1Ball { dim, .. } => dim,
            Self::TraceBall { rows, cols, .. } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Diameter in the set's own norm (ℓ1 or Frobenius).
    pub fn rho(&self) -> f64 {
        2.0 * self.radius()
    }

    /// Euclidean diameter.
    pub fn rho_bar(&self) -> f64 {
        2.0 * self.radius()
    }

    /// The norm defining the ball: ℓ1 or trace norm.
    pub fn norm(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_len(x)?;
        match *self {
            Self::L1Ball { .. } => Ok(norm_l1(x)),
            Self::TraceBall { rows, cols, .. } => nuclear_norm(&as_matrix(x, rows, cols)),
        }
    }

    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.norm(x)? <= self.radius() * (1.0 + tol) + tol)
    }

    /// Linear-optimization oracle `argmin_{a ∈ C} ⟨grad, a⟩`.
    pub fn lo(&self, grad: &DVector<f64>) -> Result<Atom> {
        self.check_len(grad)?;
        match *self {
            Self::L1Ball { radius, .. } => Ok(lo_l1(grad, radius)),
            Self::TraceBall { radius, rows, cols } => {
                let g = as_matrix(grad, rows, cols);
                match lo_trace_capped(&g, radius) {
                    // Close top singular values stall power iteration; the
                    // dense SVD settles the pair exactly.
                    Err(Error::NonConvergence { .. }) => {
                        let top = dense_top_singular_pair(&g)?;
                        Ok(Atom {
                            kind: AtomKind::RankOne {
                                scale: -radius,
                                u: top.u,
                                v: top.v,
                            },
                            degenerate: false,
                        })
                    }
                    other => other,
                }
            }
        }
    }

    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        match *self {
            Self::L1Ball { radius, .. } => Ok(project_l1(x, radius)),
            Self::TraceBall { radius, rows, cols } => {
                let p = project_trace(&as_matrix(x, rows, cols), radius)?;
                Ok(DVector::from_column_slice(p.as_slice()))
            }
        }
    }

    /// Sparsity (ℓ1 ball) or numerical rank (trace ball) of a point.
    pub fn complexity(&self, x: &DVector<f64>) -> Result<usize> {
        match *self {
            Self::L1Ball { .. } => Ok(crate::linalg::nnz(x)),
            Self::TraceBall { rows, cols, .. } => crate::linalg::numerical_rank(&as_matrix(x, rows, cols), 1e-9),
        }
    }

    fn check_len(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::ContractViolation(format!(
            "radius must be positive, got {radius}"
        )));
    }
    Ok(())
}

/// Reshapes a column-major vectorised point.
pub fn as_matrix(x: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, x.as_slice())
}

#[derive(Debug, Clone, PartialEq)]
pub enum AtomKind {
    /// `value · e_index`
    Vertex { index: usize, value: f64, dim: usize },
    /// `scale · u vᵀ` with unit `u`, `v`
    RankOne {
        scale: f64,
        u: DVector<f64>,
        v: DVector<f64>,
    },
}

/// Extreme point returned by an LO oracle, kept in sparse or factored form.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub kind: AtomKind,
    /// Set when the gradient was zero and the conventional atom was used.
    pub degenerate: bool,
}

impl Atom {
    pub fn len(&self) -> usize {
        match &self.kind {
            AtomKind::Vertex { dim, .. } => *dim,
            AtomKind::RankOne { u, v, .. } => u.len() * v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_dense(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.add_scaled_to(1.0, &mut out);
        out
    }

    /// `⟨grad, atom⟩` without materialising the atom.
    pub fn inner(&self, grad: &DVector<f64>) -> f64 {
        match &self.kind {
            AtomKind::Vertex { index, value, .. } => grad[*index] * value,
            AtomKind::RankOne { scale, u, v } => {
                let rows = u.len();
                let mut acc = 0.0;
                for (l, vl) in v.iter().enumerate() {
                    let col = &grad.as_slice()[l * rows..(l + 1) * rows];
                    let dot: f64 = col.iter().zip(u.iter()).map(|(g, ui)| g * ui).sum();
                    acc += dot * vl;
                }
                scale * acc
            }
        }
    }

    /// `x += c · atom`
    pub fn add_scaled_to(&self, c: f64, x: &mut DVector<f64>) {
        match &self.kind {
            AtomKind::Vertex { index, value, .. } => x[*index] += c * value,
            AtomKind::RankOne { scale, u, v } => {
                let rows = u.len();
                let xs = x.as_mut_slice();
                for (l, vl) in v.iter().enumerate() {
                    let coef = c * scale * vl;
                    for (k, uk) in u.iter().enumerate() {
                        xs[l * rows + k] += coef * uk;
                    }
                }
            }
        }
    }

    /// Frank-Wolfe update `(1 − γ) · base + γ · atom`.
    pub fn blend(&self, base: &DVector<f64>, gamma: f64) -> DVector<f64> {
        let mut out = base * (1.0 - gamma);
        self.add_scaled_to(gamma, &mut out);
        out
    }
}

/// ℓ1-ball oracle: `−R · sign(g_k) · e_k` with `k` the smallest index
/// attaining `‖g‖_∞`.
pub fn lo_l1(grad: &DVector<f64>, radius: f64) -> Atom {
    let dim = grad.len();
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (j, g) in grad.iter().enumerate() {
        let a = g.abs();
        if a > best_abs {
            best = j;
            best_abs = a;
        }
    }
    if best_abs <= 0.0 {
        return Atom {
            kind: AtomKind::Vertex {
                index: 0,
                value: radius,
                dim,
            },
            degenerate: true,
        };
    }
    let value = if grad[best] > 0.0 { -radius } else { radius };
    Atom {
        kind: AtomKind::Vertex {
            index: best,
            value,
            dim,
        },
        degenerate: false,
    }
}

/// Trace-ball oracle: `−R · u₁ v₁ᵀ` from the top singular pair of `grad`.
pub fn lo_trace(grad: &DMatrix<f64>, radius: f64, tol: f64) -> Result<Atom> {
    lo_trace_seeded(grad, radius, tol, TRACE_LO_SEED)
}

pub fn lo_trace_seeded(grad: &DMatrix<f64>, radius: f64, tol: f64, seed: u64) -> Result<Atom> {
    if tol <= 0.0 {
        return Err(Error::ContractViolation("tolerance must be positive".into()));
    }
    let top = top_singular_pair(grad, tol, TRACE_LO_MAX_ITER, seed)?;
    Ok(Atom {
        kind: AtomKind::RankOne {
            scale: -radius,
            u: top.u,
            v: top.v,
        },
        degenerate: top.sigma == 0.0,
    })
}

/// Power-iteration cap used inside the solvers before switching to a dense
/// SVD.
pub const SOLVER_POWER_CAP: usize = 300;

fn lo_trace_capped(grad: &DMatrix<f64>, radius: f64) -> Result<Atom> {
    let top = top_singular_pair(grad, TRACE_LO_TOL, SOLVER_POWER_CAP, TRACE_LO_SEED)?;
    Ok(Atom {
        kind: AtomKind::RankOne {
            scale: -radius,
            u: top.u,
            v: top.v,
        },
        degenerate: top.sigma == 0.0,
    })
}

/// Euclidean projection onto `{‖y‖₁ ≤ R}` by sorting.
pub fn project_l1(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    if norm_l1(x) <= radius {
        return x.clone();
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if m - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    x.map(|v| v.signum() * (v.abs() - theta).max(0.0))
}

/// Projection onto the trace-norm ball: singular values are projected onto
/// the ℓ1 ball.
pub fn project_trace(x: &DMatrix<f64>, radius: f64) -> Result<DMatrix<f64>> {
    let svd = x.clone().try_svd(true, true, 1e-14, 10_000).ok_or(Error::SvdFailure)?;
    if svd.singular_values.sum() <= radius {
        return Ok(x.clone());
    }
    let sigma = project_l1(&svd.singular_values, radius);
    let u = svd.u.ok_or(Error::SvdFailure)?;
    let v_t = svd.v_t.ok_or(Error::SvdFailure)?;
    Ok(u * DMatrix::from_diagonal(&sigma) * v_t)
}

/// Frank-Wolfe gap `⟨grad, x − a⟩` with `a = LO(grad)`.
pub fn duality_gap(grad: &DVector<f64>, x: &DVector<f64>, set: &ConstraintSet) -> Result<f64> {
    let norm = set.norm(x)?;
    if norm > set.radius() * (1.0 + FEAS_TOL) + FEAS_TOL {
        return Err(Error::Infeasible {
            norm,
            radius: set.radius(),
        });
    }
    set.check_len(grad)?;
    let gx = grad.dot(x);
    match *set {
        ConstraintSet::L1Ball { radius, .. } => Ok(gx + radius * norm_inf(grad)),
        ConstraintSet::TraceBall { .. } => {
            let atom = set.lo(grad)?;
            Ok(gx - atom.inner(grad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn l1_oracle_examples() {
        let a = lo_l1(&v(&[3.0, -5.0, 1.0]), 2.0);
        assert_eq!(a.to_dense(), v(&[0.0, 2.0, 0.0]));
        assert_abs_diff_eq!(a.inner(&v(&[3.0, -5.0, 1.0])), -10.0);

        assert_eq!(lo_l1(&v(&[1.0, 0.0, 0.0]), 1.0).to_dense(), v(&[-1.0, 0.0, 0.0]));
        assert_eq!(lo_l1(&v(&[2.0, -2.0]), 1.0).to_dense(), v(&[-1.0, 0.0]));
    }

    #[test]
    fn l1_oracle_zero_gradient_is_degenerate() {
        let a = lo_l1(&DVector::zeros(3), 1.5);
        assert!(a.degenerate);
        assert_eq!(a.to_dense(), v(&[1.5, 0.0, 0.0]));
    }

    #[test]
    fn trace_oracle_diag() {
        let g = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let a = lo_trace(&g, 1.0, 1e-10).unwrap();
        let dense = a.to_dense();
        assert_abs_diff_eq!(dense[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dense[1], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dense[2], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(dense[3], 0.0, epsilon = 1e-9);
        let gv = DVector::from_column_slice(g.as_slice());
        assert_abs_diff_eq!(a.inner(&gv), -3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.inner(&gv), gv.dot(&dense), epsilon = 1e-12);
    }

    #[test]
    fn trace_oracle_zero_and_bad_tol() {
        let a = lo_trace(&DMatrix::zeros(2, 3), 2.0, 1e-8).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.to_dense()[0], -2.0);
        assert!(lo_trace(&DMatrix::zeros(2, 3), 2.0, 0.0).is_err());
    }

    #[test]
    fn projections() {
        assert_eq!(project_l1(&v(&[0.2, -0.1]), 1.0), v(&[0.2, -0.1]));
        assert_eq!(project_l1(&v(&[2.0, 0.0]), 1.0), v(&[1.0, 0.0]));
        let p = project_l1(&v(&[1.0, 1.0]), 1.0);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);

        let x = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let p = project_trace(&x, 1.0).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], 0.0, epsilon = 1e-12);
        let p = project_trace(&DMatrix::identity(2, 2), 1.0).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(1, 1)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[(0, 1)], 0.0, epsilon = 1e-12);
        let inside = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.1, 0.05]);
        assert_eq!(project_trace(&inside, 1.0).unwrap(), inside);
    }

    #[test]
    fn gap_examples() {
        let set = ConstraintSet::l1_ball(1.0, 2).unwrap();
        assert_abs_diff_eq!(duality_gap(&DVector::zeros(2), &DVector::zeros(2), &set).unwrap(), 0.0);
        assert_abs_diff_eq!(duality_gap(&v(&[1.0, -2.0]), &DVector::zeros(2), &set).unwrap(), 2.0);
        let g = v(&[0.3, -0.7]);
        let atom = set.lo(&g).unwrap().to_dense();
        assert_abs_diff_eq!(duality_gap(&g, &atom, &set).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            duality_gap(&g, &v(&[1.0, 1.0]), &set),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn diameters() {
        let s = ConstraintSet::l1_ball(1.5, 4).unwrap();
        assert_eq!(s.rho(), 3.0);
        assert_eq!(s.rho_bar(), 3.0);
        assert!(ConstraintSet::l1_ball(0.0, 4).is_err());
        assert!(ConstraintSet::trace_ball(-1.0, 2, 2).is_err());
    }
}
