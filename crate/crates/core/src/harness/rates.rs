//! Least-squares slopes on log-log axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest positive points a fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub t_lo: f64,
    pub t_hi: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
    /// Points in the window dropped for being nonpositive.
    pub excluded: usize,
}

/// Fits `log value = intercept + slope · log t` over `t ∈ [t_lo, t_hi]`.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let (t_lo, t_hi) = window;
    if !(t_lo > 0.0 && t_lo < t_hi) {
        return Err(Error::InvalidConfig(format!("bad window [{t_lo}, {t_hi}]")));
    }
    let in_window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_lo && t <= t_hi)
        .collect();
    let pts: Vec<(f64, f64)> = in_window
        .iter()
        .filter(|&&(_, v)| v > 0.0 && v.is_finite())
        .map(|&(t, v)| (t.ln(), v.ln()))
        .collect();
    let excluded = in_window.len() - pts.len();
    if excluded > 0 {
        log::warn!("excluded {excluded} nonpositive values from the fit on [{t_lo}, {t_hi}]");
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            found: pts.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData { found: 1, required: 2 });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        t_lo,
        t_hi,
        slope,
        intercept,
        r2,
        points: pts.len(),
        excluded,
    })
}

/// Parses a `lo:hi` window.
pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| Error::InvalidConfig(format!("window {s:?} is not lo:hi")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidConfig(format!("window bound {v:?} is not a number")))
    };
    Ok((p(lo)?, p(hi)?))
}
