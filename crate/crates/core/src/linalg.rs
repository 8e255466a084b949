//! Small dense linear-algebra helpers shared by the oracles and estimators.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Seeded generator used everywhere randomness enters the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal_vector(len: usize, rng: &mut Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

pub fn norm_l1(x: &DVector<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub fn norm_inf(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn nnz(x: &DVector<f64>) -> usize {
    x.iter().filter(|v| **v != 0.0).count()
}

/// Numerical rank: singular values above `rel_tol * max(1, σ_max)`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    let sv = m
        .clone()
        .try_svd(false, false, 1e-14, 10_000)
        .ok_or(Error::SvdFailure)?;
    let sigma = sv.singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_tol * smax.max(1.0);
    Ok(sigma.iter().filter(|s| **s > cut).count())
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    let sv = m
        .clone()
        .try_svd(false, false, 1e-14, 10_000)
        .ok_or(Error::SvdFailure)?;
    Ok(sv.singular_values.sum())
}

/// Top singular triplet of a dense matrix.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub iterations: usize,
}

/// Power iteration on `MᵀM` from a seeded Gaussian start.
///
/// Stops once the relative residual `‖Mᵀu − σv‖ / σ` drops to `tol`. A zero
/// matrix yields `sigma == 0` with `u = e₁`, `v = e₁`.
pub fn top_singular_pair(m: &DMatrix<f64>, tol: f64, max_iter: usize, seed: u64) -> Result<SingularTriplet> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::ContractViolation("empty matrix".into()));
    }
    let e1 = |n: usize| {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        e
    };
    if m.iter().all(|x| *x == 0.0) {
        return Ok(SingularTriplet {
            sigma: 0.0,
            u: e1(rows),
            v: e1(cols),
            iterations: 0,
        });
    }

    let mut rng = seeded_rng(seed);
    let mut v = standard_normal_vector(cols, &mut rng);
    v /= v.norm();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mv = m * &v;
        let sigma = mv.norm();
        if sigma == 0.0 {
            // Start landed in the null space; restart from a fresh draw.
            v = standard_normal_vector(cols, &mut rng);
            v /= v.norm();
            continue;
        }
        let u = mv / sigma;
        let mtu = m.tr_mul(&u);
        residual = (&mtu - &v * sigma).norm() / sigma;
        if residual <= tol {
            return Ok(SingularTriplet {
                sigma,
                u,
                v,
                iterations: it,
            });
        }
        let n = mtu.norm();
        v = mtu / n;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Top singular triplet from a full dense SVD.
pub fn dense_top_singular_pair(m: &DMatrix<f64>) -> Result<SingularTriplet> {
    if m.is_empty() {
        return Err(Error::ContractViolation("empty matrix".into()));
    }
    let svd = m.clone().try_svd(true, true, 1e-14, 10_000).ok_or(Error::SvdFailure)?;
    let (u, v_t) = svd.u.zip(svd.v_t).ok_or(Error::SvdFailure)?;
    let k = svd.singular_values.imax();
    Ok(SingularTriplet {
        sigma: svd.singular_values[k],
        u: u.column(k).into_owned(),
        v: v_t.row(k).transpose(),
        iterations: 0,
    })
}

/// `σ_max(m)` by power iteration, stopping once `σ` changes by less than
/// `1e-10` relative. Only the value is needed, so slow convergence of the
/// singular vectors (close top singular values) does not matter.
pub fn spectral_norm(m: &DMatrix<f64>, seed: u64) -> f64 {
    if m.is_empty() || m.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    let mut rng = seeded_rng(seed);
    let mut v = standard_normal_vector(m.ncols(), &mut rng);
    v /= v.norm();
    let mut sigma = 0.0;
    for _ in 0..SPECTRAL_NORM_MAX_ITER {
        let mv = m * &v;
        let next = mv.norm();
        if next == 0.0 {
            v = standard_normal_vector(m.ncols(), &mut rng);
            v /= v.norm();
            continue;
        }
        let mtu = m.tr_mul(&(mv / next));
        v = &mtu / mtu.norm();
        if (next - sigma).abs() <= 1e-10 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

const SPECTRAL_NORM_MAX_ITER: usize = 20_000;

/// Largest eigenvalue of `AᵀA`, i.e. `σ_max(A)²`.
pub fn gram_lambda_max(a: &DMatrix<f64>, seed: u64) -> Result<f64> {
    Ok(spectral_norm(a, seed).powi(2))
}
