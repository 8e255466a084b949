//! Experiment configuration. Files are TOML (or JSON when the extension is
//! `.json`); every field has a desk-scale default and the `paper` preset
//! swaps in the full-scale settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::DpgStep;
use crate::defw::StepSchedule;
use crate::error::{Error, Result};
use crate::sparsefw::{CoordScheme, EllRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Lasso,
    McSquare,
    McGauss,
    SparsifiedLasso,
    BaselineDpg,
    CentralizedFw,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lasso => "lasso",
            Self::McSquare => "mc-square",
            Self::McGauss => "mc-gauss",
            Self::SparsifiedLasso => "sparsified-lasso",
            Self::BaselineDpg => "baseline-dpg",
            Self::CentralizedFw => "centralized-fw",
        }
    }
}

/// Objective family used by the baseline kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Lasso,
    McSquare,
    McGauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    ErdosRenyi { p: f64 },
    Ring,
    Complete,
    Path,
    EdgeList { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_agents: usize,
    pub topology: TopologyConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_agents: 10,
            topology: TopologyConfig::ErdosRenyi { p: 0.3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    /// Observations per agent.
    pub m: usize,
    pub d: usize,
    /// Support size of the ground truth.
    pub s: usize,
    pub sigma2: f64,
    /// `R = radius_scale · ‖θ_true‖₁` unless `radius` is set.
    pub radius_scale: f64,
    pub radius: Option<f64>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            m: 20,
            d: 2000,
            s: 20,
            sigma2: 0.01,
            radius_scale: 1.1,
            radius: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    None,
    /// Each observation is hit with probability `prob` by `N(0, var)`.
    Sparse {
        prob: f64,
        var: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub train_frac: f64,
    pub noise: NoiseConfig,
    /// `R = radius_scale · ‖θ_true‖_{σ,1}` unless `radius` is set.
    pub radius_scale: f64,
    pub radius: Option<f64>,
    /// Variance parameter of the square loss.
    pub sigma2: f64,
    /// Width of the negated Gaussian loss.
    pub sigma: f64,
    /// Ratings file in `u.data` format; replaces the synthetic instance.
    pub movielens: Option<PathBuf>,
    /// Test fraction for the ratings split.
    pub test_frac: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            rows: 40,
            cols: 60,
            rank: 3,
            train_frac: 0.2,
            noise: NoiseConfig::Sparse { prob: 0.2, var: 5.0 },
            radius_scale: 1.2,
            radius: None,
            sigma2: 1.0,
            sigma: 1.0,
            movielens: None,
            test_frac: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseConfig {
    pub scheme: CoordScheme,
    pub alpha_comm: f64,
    pub ell: EllRule,
}

impl Default for SparseConfig {
    fn default() -> Self {
        Self {
            scheme: CoordScheme::Random,
            alpha_comm: 0.05,
            ell: EllRule::Experiment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Objective for the baseline kinds; LASSO when omitted.
    #[serde(default)]
    pub problem: Option<ProblemKind>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// AC rounds per consensus and aggregation phase.
    #[serde(default = "default_ac_rounds")]
    pub ac_rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Fill the `wall_ms` column; off keeps CSVs reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default = "default_true")]
    pub certificate: bool,
    /// Solve for `F*` up front and report suboptimality (convex kinds).
    #[serde(default = "default_true")]
    pub reference: bool,
    /// Step schedule; convex for LASSO and square loss, `t^{-0.75}` for
    /// the negated Gaussian loss when omitted.
    #[serde(default)]
    pub schedule: Option<StepSchedule>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub lasso: LassoConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub sparse: SparseConfig,
    /// DPG step rule; `1/t` for LASSO and `0.1·N/(√t+1)` for MC when omitted.
    #[serde(default)]
    pub dpg: Option<DpgStep>,
}

fn default_iterations() -> usize {
    500
}

fn default_ac_rounds() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Parses a config file, layering it over the preset.
    pub fn load(path: &Path, preset: Preset) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json, preset)
    }

    pub fn parse(text: &str, is_json: bool, preset: Preset) -> Result<Self> {
        let file: Value = if is_json {
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("JSON config: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("TOML config: {e}")))?
        };
        let mut merged = preset_overlay(preset);
        merge(&mut merged, file);
        let cfg: Self =
            serde_json::from_value(merged).map_err(|e| Error::InvalidConfig(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn problem_kind(&self) -> ProblemKind {
        match self.kind {
            ExperimentKind::Lasso | ExperimentKind::SparsifiedLasso => ProblemKind::Lasso,
            ExperimentKind::McSquare => ProblemKind::McSquare,
            ExperimentKind::McGauss => ProblemKind::McGauss,
            ExperimentKind::BaselineDpg | ExperimentKind::CentralizedFw => self.problem.unwrap_or(ProblemKind::Lasso),
        }
    }

    pub fn effective_schedule(&self) -> StepSchedule {
        self.schedule.unwrap_or(match self.problem_kind() {
            ProblemKind::McGauss => StepSchedule::NonConvex { alpha: 0.75 },
            _ => StepSchedule::Convex,
        })
    }

    pub fn effective_dpg(&self) -> DpgStep {
        self.dpg.unwrap_or(match self.problem_kind() {
            ProblemKind::Lasso => DpgStep::Harmonic,
            _ => DpgStep::SqrtScaled { c1: 0.1 },
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if self.ac_rounds == 0 {
            return bad("ac_rounds must be at least 1".into());
        }
        if self.problem.is_some() && !matches!(self.kind, ExperimentKind::BaselineDpg | ExperimentKind::CentralizedFw) {
            return bad(format!(
                "`problem` only applies to baseline kinds, not {}",
                self.kind.name()
            ));
        }
        let n = self.network.n_agents;
        if n == 0 {
            return bad("network.n_agents must be positive".into());
        }
        if let TopologyConfig::ErdosRenyi { p } = self.network.topology {
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("network.topology.p must lie in (0, 1], got {p}"));
            }
        }
        self.effective_schedule().validate()?;
        match self.problem_kind() {
            ProblemKind::Lasso => {
                let l = &self.lasso;
                if l.m == 0 || l.d == 0 {
                    return bad("lasso.m and lasso.d must be positive".into());
                }
                if l.s > l.d {
                    return bad(format!("lasso.s = {} exceeds lasso.d = {}", l.s, l.d));
                }
                if !(l.sigma2 >= 0.0) {
                    return bad("lasso.sigma2 must be nonnegative".into());
                }
                check_radius(l.radius, l.radius_scale, "lasso")?;
            }
            _ => {
                let m = &self.mc;
                if m.movielens.is_none() {
                    if m.rows == 0 || m.cols == 0 {
                        return bad("mc.rows and mc.cols must be positive".into());
                    }
                    if m.rank == 0 || m.rank > m.rows.min(m.cols) {
                        return bad(format!("mc.rank must lie in [1, {}]", m.rows.min(m.cols)));
                    }
                    if !(m.train_frac > 0.0 && m.train_frac < 1.0) {
                        return bad("mc.train_frac must lie in (0, 1)".into());
                    }
                } else if !(m.test_frac > 0.0 && m.test_frac < 1.0) {
                    return bad("mc.test_frac must lie in (0, 1)".into());
                }
                if let NoiseConfig::Sparse { prob, var } = m.noise {
                    if !(0.0..=1.0).contains(&prob) || !(var >= 0.0) {
                        return bad("mc.noise needs prob in [0, 1] and var >= 0".into());
                    }
                }
                if !(m.sigma2 > 0.0) || !(m.sigma > 0.0) {
                    return bad("mc.sigma2 and mc.sigma must be positive".into());
                }
                if m.movielens.is_some() && m.radius.is_none() {
                    return bad("mc.radius is required with mc.movielens".into());
                }
                check_radius(m.radius, m.radius_scale, "mc")?;
            }
        }
        if self.kind == ExperimentKind::SparsifiedLasso {
            if !(self.sparse.alpha_comm > 0.0) {
                return bad("sparse.alpha_comm must be positive".into());
            }
            if let EllRule::Fixed { rounds: 0 } = self.sparse.ell {
                return bad("sparse.ell rounds must be at least 1".into());
            }
        }
        if let DpgStep::SqrtScaled { c1 } = self.effective_dpg() {
            if !(c1 > 0.0) {
                return bad("dpg.c1 must be positive".into());
            }
        }
        Ok(())
    }
}

fn check_radius(radius: Option<f64>, scale: f64, section: &str) -> Result<()> {
    match radius {
        Some(r) if !(r > 0.0) => Err(Error::InvalidConfig(format!("{section}.radius must be positive"))),
        None if !(scale > 0.0) => Err(Error::InvalidConfig(format!("{section}.radius_scale must be positive"))),
        _ => Ok(()),
    }
}

/// Values a preset places under the file's own settings.
pub fn preset_overlay(preset: Preset) -> Value {
    match preset {
        Preset::Desk => json!({}),
        Preset::Paper => json!({
            "iterations": 2000,
            "network": { "n_agents": 50, "topology": { "kind": "erdos-renyi", "p": 0.1 } },
            "lasso": { "m": 20, "d": 10000, "s": 50, "sigma2": 0.01, "radius_scale": 1.1 },
            "mc": {
                "rows": 100, "cols": 250, "rank": 5, "train_frac": 0.2,
                "noise": { "kind": "sparse", "prob": 0.2, "var": 5.0 },
                "radius_scale": 1.2
            },
            "sparse": { "alpha_comm": 0.05 }
        }),
    }
}

/// Deep merge of JSON objects; `over` wins on conflicts. Tagged enums are
/// replaced wholesale when their tag changes.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            let retag = ["kind", "variant", "rule", "mode"]
                .iter()
                .any(|tag| o.get(*tag).is_some_and(|t| b.get(*tag).is_some_and(|bt| bt != t)));
            if retag {
                b.clear();
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
