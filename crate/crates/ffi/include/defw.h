#ifndef DEFW_H
#define DEFW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DefwStatus {
  DEFW_STATUS_OK = 0,
  DEFW_STATUS_NULL_POINTER = 1,
  DEFW_STATUS_INVALID_ARGUMENT = 2,
  DEFW_STATUS_DIMENSION_MISMATCH = 3,
  DEFW_STATUS_NON_CONVERGENCE = 4,
  DEFW_STATUS_DISCONNECTED = 5,
  DEFW_STATUS_PARSE = 6,
  DEFW_STATUS_IO = 7,
  DEFW_STATUS_PANIC = 8,
} DefwStatus;

typedef enum DefwMcLoss {
  DEFW_MC_LOSS_SQUARE = 0,
  DEFW_MC_LOSS_NEG_GAUSS = 1,
} DefwMcLoss;

typedef enum DefwConstraintKind {
  DEFW_CONSTRAINT_KIND_L1_BALL = 0,
  DEFW_CONSTRAINT_KIND_TRACE_BALL = 1,
} DefwConstraintKind;

typedef enum DefwScheduleKind {
  // `γ_t = 2/(t+1)`
  DEFW_SCHEDULE_KIND_CONVEX = 0,
  // `γ_t = t^(-alpha)`
  DEFW_SCHEDULE_KIND_NON_CONVEX = 1,
} DefwScheduleKind;

typedef struct DefwNetwork DefwNetwork;

typedef struct DefwProblem DefwProblem;

typedef struct DefwRun DefwRun;

typedef struct DefwRunOptions {
  enum DefwConstraintKind constraint;
  double radius;
  enum DefwScheduleKind schedule;
  // Step exponent for the non-convex schedule.
  double alpha;
  size_t iterations;
  size_t ac_rounds;
  uint64_t seed;
  // Compute the rate certificate and per-iteration bounds.
  bool certificate;
} DefwRunOptions;

// One iteration of a run. Fields the run did not compute are NaN.
typedef struct DefwRecord {
  size_t iter;
  double objective;
  double gap;
  double consensus_err;
  double grad_consensus_err;
  double tracking_err;
  double bound_cp;
  double bound_cg;
  size_t nnz_or_rank;
  double comm_reals;
} DefwRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *defw_last_error(void);

void defw_clear_error(void);

// Static, NUL-terminated name of a status code.
const char *defw_status_name(enum DefwStatus status);

// Connected Erdős–Rényi graph with Metropolis-Hastings weights.
//
// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum DefwStatus defw_network_erdos_renyi(size_t n,
                                         double p,
                                         uint64_t seed,
                                         struct DefwNetwork **out);

// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum DefwStatus defw_network_ring(size_t n, struct DefwNetwork **out);

// # Safety
// `out` must be a valid pointer to writable storage for a handle.
enum DefwStatus defw_network_complete(size_t n, struct DefwNetwork **out);

// Network from `n_edges` undirected edges stored as `(i, j)` pairs in
// `edges[0 .. 2 * n_edges]`.
//
// # Safety
// `edges` must point to `2 * n_edges` readable values and `out` to writable
// handle storage.
enum DefwStatus defw_network_from_edges(size_t n,
                                        const size_t *edges,
                                        size_t n_edges,
                                        struct DefwNetwork **out);

// # Safety
// `net` must be a live handle or null (yields 0).
size_t defw_network_n_agents(const struct DefwNetwork *net);

// Second-largest eigenvalue magnitude of the mixing matrix.
//
// # Safety
// `net` must be a live handle and `out` writable.
enum DefwStatus defw_network_lambda2(const struct DefwNetwork *net, double *out);

// # Safety
// `net` must be null or a handle not yet freed.
void defw_network_free(struct DefwNetwork *net);

// Distributed LASSO from caller data: agent `i` owns the column-major
// `m × d` block `a[i*m*d ..]` and responses `y[i*m ..]`.
//
// # Safety
// `a` must hold `n_agents * m * d` values, `y` `n_agents * m` values, and
// `out` must be writable.
enum DefwStatus defw_problem_lasso(size_t n_agents,
                                   size_t m,
                                   size_t d,
                                   const double *a,
                                   const double *y,
                                   struct DefwProblem **out);

// Synthetic LASSO instance; the ground truth is copied into `theta_true`
// when it is non-null (length `d`).
//
// # Safety
// `theta_true` must be null or hold `d` writable values; `out` writable.
enum DefwStatus defw_problem_lasso_synthetic(size_t n_agents,
                                             size_t m,
                                             size_t d,
                                             size_t s,
                                             double sigma2,
                                             uint64_t seed,
                                             double *theta_true,
                                             struct DefwProblem **out);

// Matrix completion from observed entries. Agent `i` owns the next
// `counts[i]` entries of `row_idx`, `col_idx` and `values` (0-based).
// `loss_param` is `σ²` for the square loss and `σ` for the negated
// Gaussian loss.
//
// # Safety
// `counts` must hold `n_agents` values and the entry arrays their sum;
// `out` must be writable.
enum DefwStatus defw_problem_matrix_completion(size_t rows,
                                               size_t cols,
                                               size_t n_agents,
                                               const size_t *counts,
                                               const size_t *row_idx,
                                               const size_t *col_idx,
                                               const double *values,
                                               enum DefwMcLoss loss,
                                               double loss_param,
                                               struct DefwProblem **out);

// # Safety
// `problem` must be a live handle or null (yields 0).
size_t defw_problem_dim(const struct DefwProblem *problem);

// # Safety
// `problem` must be a live handle or null (yields 0).
size_t defw_problem_n_agents(const struct DefwProblem *problem);

// Global objective `F(θ) = N⁻¹ Σ_i f_i(θ)` at a point of length `len`.
//
// # Safety
// `theta` must hold `len` values and `out` be writable.
enum DefwStatus defw_problem_objective(const struct DefwProblem *problem,
                                       const double *theta,
                                       size_t len,
                                       double *out);

// # Safety
// `problem` must be null or a handle not yet freed.
void defw_problem_free(struct DefwProblem *problem);

// Defaults: ℓ1 ball of radius 1, convex schedule, 100 iterations, one AC
// round, seed 0, certificate on.
struct DefwRunOptions defw_run_options_default(void);

// Runs DeFW from zero iterates.
//
// # Safety
// `problem`, `net` and `options` must be live; `out` writable.
enum DefwStatus defw_run(const struct DefwProblem *problem,
                         const struct DefwNetwork *net,
                         const struct DefwRunOptions *options,
                         struct DefwRun **out);

// Number of recorded iterations.
//
// # Safety
// `run` must be a live handle or null (yields 0).
size_t defw_run_len(const struct DefwRun *run);

// # Safety
// `run` must be live and `out` writable.
enum DefwStatus defw_run_record(const struct DefwRun *run, size_t index, struct DefwRecord *out);

// Copies agent `agent`'s final iterate into `buf` (length `len`, which
// must equal the problem dimension).
//
// # Safety
// `run` must be live and `buf` hold `len` writable values.
enum DefwStatus defw_run_theta(const struct DefwRun *run, size_t agent, double *buf, size_t len);

// # Safety
// `run` must be null or a handle not yet freed.
void defw_run_free(struct DefwRun *run);

// Runs a TOML experiment config (desk preset) and writes its metrics CSV.
//
// # Safety
// Both arguments must be NUL-terminated strings.
enum DefwStatus defw_experiment_run(const char *config_toml, const char *csv_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEFW_H */
