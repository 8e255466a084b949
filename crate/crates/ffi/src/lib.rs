//! C ABI for `defw-core`.
//!
//! Objects cross the boundary as opaque handles built by the
//! `defw_network_*`, `defw_problem_*` and `defw_run` constructors and
//! released with the matching `defw_*_free`. Every fallible
//! call returns a [`DefwStatus`]; on failure the message is available from
//! [`defw_last_error`] on the same thread. Panics never unwind into C: they
//! are caught and reported as `DEFW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use defw_core::constraints::ConstraintSet;
use defw_core::defw::{run_defw, IterRecord, RunOptions, StepSchedule};
use defw_core::harness::config::{ExperimentConfig, Preset};
use defw_core::harness::datagen::gen_lasso_instance;
use defw_core::harness::metrics::write_metrics_csv;
use defw_core::harness::run_experiment;
use defw_core::network::{gen_erdos_renyi, metropolis_weights, NetworkModel, Topology};
use defw_core::objectives::{LassoAgentData, McAgentData, McLoss, Problem};
use defw_core::Error;
use nalgebra::{DMatrix, DVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    NonConvergence = 4,
    Disconnected = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefwConstraintKind {
    L1Ball = 0,
    TraceBall = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefwScheduleKind {
    /// `γ_t = 2/(t+1)`
    Convex = 0,
    /// `γ_t = t^(-alpha)`
    NonConvex = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefwMcLoss {
    Square = 0,
    NegGauss = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefwRunOptions {
    pub constraint: DefwConstraintKind,
    pub radius: f64,
    pub schedule: DefwScheduleKind,
    /// Step exponent for the non-convex schedule.
    pub alpha: f64,
    pub iterations: usize,
    pub ac_rounds: usize,
    pub seed: u64,
    /// Compute the rate certificate and per-iteration bounds.
    pub certificate: bool,
}

/// One iteration of a run. Fields the run did not compute are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefwRecord {
    pub iter: usize,
    pub objective: f64,
    pub gap: f64,
    pub consensus_err: f64,
    pub grad_consensus_err: f64,
    pub tracking_err: f64,
    pub bound_cp: f64,
    pub bound_cg: f64,
    pub nnz_or_rank: usize,
    pub comm_reals: f64,
}

pub struct DefwNetwork {
    inner: NetworkModel,
}

pub struct DefwProblem {
    inner: Problem,
}

pub struct DefwRun {
    records: Vec<IterRecord>,
    thetas: Vec<DVector<f64>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DefwStatus, String);

fn status_of(e: &Error) -> DefwStatus {
    match e {
        Error::AtIteration { source, .. } => status_of(source),
        Error::DimensionMismatch { .. } => DefwStatus::DimensionMismatch,
        Error::NonConvergence { .. } | Error::SvdFailure => DefwStatus::NonConvergence,
        Error::Disconnected | Error::DisconnectedTopology { .. } => DefwStatus::Disconnected,
        Error::Parse { .. } => DefwStatus::Parse,
        Error::Io(_) => DefwStatus::Io,
        _ => DefwStatus::InvalidArgument,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DefwStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(DefwStatus::NullPointer, format!("{what} is null"))
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DefwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DefwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            DefwStatus::Panic
        }
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn defw_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn defw_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Static, NUL-terminated name of a status code.
#[no_mangle]
pub extern "C" fn defw_status_name(status: DefwStatus) -> *const c_char {
    let s: &'static CStr = match status {
        DefwStatus::Ok => c"ok",
        DefwStatus::NullPointer => c"null pointer",
        DefwStatus::InvalidArgument => c"invalid argument",
        DefwStatus::DimensionMismatch => c"dimension mismatch",
        DefwStatus::NonConvergence => c"non-convergence",
        DefwStatus::Disconnected => c"disconnected network",
        DefwStatus::Parse => c"parse error",
        DefwStatus::Io => c"I/O error",
        DefwStatus::Panic => c"panic",
    };
    s.as_ptr()
}

fn network_out(topology: Topology, out: *mut *mut DefwNetwork) -> Result<(), Failure> {
    let out = unsafe { out_ptr(out, "out")? };
    *out = boxed(DefwNetwork {
        inner: metropolis_weights(topology)?,
    });
    Ok(())
}

/// Connected Erdős–Rényi graph with Metropolis-Hastings weights.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn defw_network_erdos_renyi(
    n: usize,
    p: f64,
    seed: u64,
    out: *mut *mut DefwNetwork,
) -> DefwStatus {
    guard(|| network_out(gen_erdos_renyi(n, p, seed)?, out))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn defw_network_ring(n: usize, out: *mut *mut DefwNetwork) -> DefwStatus {
    guard(|| network_out(Topology::ring(n), out))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn defw_network_complete(n: usize, out: *mut *mut DefwNetwork) -> DefwStatus {
    guard(|| network_out(Topology::complete(n), out))
}

/// Network from `n_edges` undirected edges stored as `(i, j)` pairs in
/// `edges[0 .. 2 * n_edges]`.
///
/// # Safety
/// `edges` must point to `2 * n_edges` readable values and `out` to writable
/// handle storage.
#[no_mangle]
pub unsafe extern "C" fn defw_network_from_edges(
    n: usize,
    edges: *const usize,
    n_edges: usize,
    out: *mut *mut DefwNetwork,
) -> DefwStatus {
    guard(|| {
        let flat = slice(edges, 2 * n_edges, "edges")?;
        let pairs: Vec<(usize, usize)> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        network_out(Topology::from_edges(n, &pairs)?, out)
    })
}

/// # Safety
/// `net` must be a live handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn defw_network_n_agents(net: *const DefwNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.n_agents())
}

/// Second-largest eigenvalue magnitude of the mixing matrix.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn defw_network_lambda2(net: *const DefwNetwork, out: *mut f64) -> DefwStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        *out_ptr(out, "out")? = net.inner.lambda2();
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn defw_network_free(net: *mut DefwNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

fn problem_out(problem: Problem, out: *mut *mut DefwProblem) -> Result<(), Failure> {
    let out = unsafe { out_ptr(out, "out")? };
    *out = boxed(DefwProblem { inner: problem });
    Ok(())
}

/// Distributed LASSO from caller data: agent `i` owns the column-major
/// `m × d` block `a[i*m*d ..]` and responses `y[i*m ..]`.
///
/// # Safety
/// `a` must hold `n_agents * m * d` values, `y` `n_agents * m` values, and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn defw_problem_lasso(
    n_agents: usize,
    m: usize,
    d: usize,
    a: *const f64,
    y: *const f64,
    out: *mut *mut DefwProblem,
) -> DefwStatus {
    guard(|| {
        if n_agents == 0 || m == 0 || d == 0 {
            return Err(invalid("n_agents, m and d must be positive"));
        }
        let a = slice(a, n_agents * m * d, "a")?;
        let y = slice(y, n_agents * m, "y")?;
        let agents = (0..n_agents)
            .map(|i| {
                LassoAgentData::new(
                    DMatrix::from_column_slice(m, d, &a[i * m * d..(i + 1) * m * d]),
                    DVector::from_column_slice(&y[i * m..(i + 1) * m]),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        problem_out(Problem::lasso(agents)?, out)
    })
}

/// Synthetic LASSO instance; the ground truth is copied into `theta_true`
/// when it is non-null (length `d`).
///
/// # Safety
/// `theta_true` must be null or hold `d` writable values; `out` writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn defw_problem_lasso_synthetic(
    n_agents: usize,
    m: usize,
    d: usize,
    s: usize,
    sigma2: f64,
    seed: u64,
    theta_true: *mut f64,
    out: *mut *mut DefwProblem,
) -> DefwStatus {
    guard(|| {
        let inst = gen_lasso_instance(n_agents, m, d, s, sigma2, seed)?;
        if !theta_true.is_null() {
            std::slice::from_raw_parts_mut(theta_true, d).copy_from_slice(inst.theta_true.as_slice());
        }
        problem_out(inst.problem, out)
    })
}

/// Matrix completion from observed entries. Agent `i` owns the next
/// `counts[i]` entries of `row_idx`, `col_idx` and `values` (0-based).
/// `loss_param` is `σ²` for the square loss and `σ` for the negated
/// Gaussian loss.
///
/// # Safety
/// `counts` must hold `n_agents` values and the entry arrays their sum;
/// `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn defw_problem_matrix_completion(
    rows: usize,
    cols: usize,
    n_agents: usize,
    counts: *const usize,
    row_idx: *const usize,
    col_idx: *const usize,
    values: *const f64,
    loss: DefwMcLoss,
    loss_param: f64,
    out: *mut *mut DefwProblem,
) -> DefwStatus {
    guard(|| {
        let counts = slice(counts, n_agents, "counts")?;
        let total: usize = counts.iter().sum();
        let r = slice(row_idx, total, "row_idx")?;
        let c = slice(col_idx, total, "col_idx")?;
        let v = slice(values, total, "values")?;
        let loss = match loss {
            DefwMcLoss::Square => McLoss::Square { sigma2: loss_param },
            DefwMcLoss::NegGauss => McLoss::NegGauss { sigma: loss_param },
        };
        let mut start = 0;
        let mut agents = Vec::with_capacity(n_agents);
        for &k in counts {
            let range = start..start + k;
            let entries = r[range.clone()]
                .iter()
                .copied()
                .zip(c[range.clone()].iter().copied())
                .collect();
            agents.push(McAgentData::new(rows, cols, entries, v[range].to_vec(), loss)?);
            start += k;
        }
        problem_out(Problem::matrix_completion(rows, cols, agents)?, out)
    })
}

/// # Safety
/// `problem` must be a live handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn defw_problem_dim(problem: *const DefwProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dim())
}

/// # Safety
/// `problem` must be a live handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn defw_problem_n_agents(problem: *const DefwProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.n_agents())
}

/// Global objective `F(θ) = N⁻¹ Σ_i f_i(θ)` at a point of length `len`.
///
/// # Safety
/// `theta` must hold `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn defw_problem_objective(
    problem: *const DefwProblem,
    theta: *const f64,
    len: usize,
    out: *mut f64,
) -> DefwStatus {
    guard(|| {
        let p = problem.as_ref().ok_or_else(|| null("problem"))?;
        let theta = DVector::from_column_slice(slice(theta, len, "theta")?);
        *out_ptr(out, "out")? = p.inner.global_value(&theta)?;
        Ok(())
    })
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn defw_problem_free(problem: *mut DefwProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Defaults: ℓ1 ball of radius 1, convex schedule, 100 iterations, one AC
/// round, seed 0, certificate on.
#[no_mangle]
pub extern "C" fn defw_run_options_default() -> DefwRunOptions {
    let d = RunOptions::default();
    DefwRunOptions {
        constraint: DefwConstraintKind::L1Ball,
        radius: 1.0,
        schedule: DefwScheduleKind::Convex,
        alpha: 1.0,
        iterations: d.iterations,
        ac_rounds: d.ac_rounds,
        seed: d.seed,
        certificate: d.certificate,
    }
}

/// Runs DeFW from zero iterates.
///
/// # Safety
/// `problem`, `net` and `options` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn defw_run(
    problem: *const DefwProblem,
    net: *const DefwNetwork,
    options: *const DefwRunOptions,
    out: *mut *mut DefwRun,
) -> DefwStatus {
    guard(|| {
        let problem = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        let net = &net.as_ref().ok_or_else(|| null("net"))?.inner;
        let o = *options.as_ref().ok_or_else(|| null("options"))?;
        let out = out_ptr(out, "out")?;
        let set = match (o.constraint, problem) {
            (DefwConstraintKind::L1Ball, _) => ConstraintSet::l1_ball(o.radius, problem.dim())?,
            (DefwConstraintKind::TraceBall, Problem::MatrixCompletion { rows, cols, .. }) => {
                ConstraintSet::trace_ball(o.radius, *rows, *cols)?
            }
            (DefwConstraintKind::TraceBall, _) => {
                return Err(invalid("trace ball needs a matrix-completion problem"));
            }
        };
        let schedule = match o.schedule {
            DefwScheduleKind::Convex => StepSchedule::Convex,
            DefwScheduleKind::NonConvex => StepSchedule::NonConvex { alpha: o.alpha },
        };
        let opts = RunOptions {
            iterations: o.iterations,
            ac_rounds: o.ac_rounds,
            seed: o.seed,
            certificate: o.certificate,
            ..RunOptions::default()
        };
        if opts.ac_rounds == 0 {
            return Err(invalid("ac_rounds must be at least 1"));
        }
        let run = run_defw(problem, net, &set, schedule, &opts)?;
        *out = boxed(DefwRun {
            records: run.metrics.records,
            thetas: run.states.into_iter().map(|s| s.theta).collect(),
        });
        Ok(())
    })
}

/// Number of recorded iterations.
///
/// # Safety
/// `run` must be a live handle or null (yields 0).
#[no_mangle]
pub unsafe extern "C" fn defw_run_len(run: *const DefwRun) -> usize {
    run.as_ref().map_or(0, |r| r.records.len())
}

/// # Safety
/// `run` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn defw_run_record(run: *const DefwRun, index: usize, out: *mut DefwRecord) -> DefwStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let r = run
            .records
            .get(index)
            .ok_or_else(|| invalid(format!("record {index} out of range ({} recorded)", run.records.len())))?;
        let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *out_ptr(out, "out")? = DefwRecord {
            iter: r.iter,
            objective: r.objective,
            gap: nan(r.gap),
            consensus_err: r.consensus_err,
            grad_consensus_err: nan(r.grad_consensus_err),
            tracking_err: nan(r.tracking_err),
            bound_cp: nan(r.bound_cp),
            bound_cg: nan(r.bound_cg),
            nnz_or_rank: r.nnz_or_rank,
            comm_reals: r.comm_reals,
        };
        Ok(())
    })
}

/// Copies agent `agent`'s final iterate into `buf` (length `len`, which
/// must equal the problem dimension).
///
/// # Safety
/// `run` must be live and `buf` hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn defw_run_theta(run: *const DefwRun, agent: usize, buf: *mut f64, len: usize) -> DefwStatus {
    guard(|| {
        let run = run.as_ref().ok_or_else(|| null("run"))?;
        let theta = run
            .thetas
            .get(agent)
            .ok_or_else(|| invalid(format!("agent {agent} out of range")))?;
        if len != theta.len() {
            return Err(Failure::from(Error::DimensionMismatch {
                expected: theta.len(),
                found: len,
            }));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(theta.as_slice());
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn defw_run_free(run: *mut DefwRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs a TOML experiment config (desk preset) and writes its metrics CSV.
///
/// # Safety
/// Both arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn defw_experiment_run(config_toml: *const c_char, csv_path: *const c_char) -> DefwStatus {
    guard(|| {
        let text = c_str(config_toml, "config_toml")?;
        let path = c_str(csv_path, "csv_path")?;
        let cfg = ExperimentConfig::parse(text, false, Preset::Desk)?;
        let output = run_experiment(&cfg)?;
        let file = std::fs::File::create(path).map_err(Error::from)?;
        write_metrics_csv(std::io::BufWriter::new(file), &output.columns, &output.metrics.records)?;
        Ok(())
    })
}
