/* Stable C interface to the gbopt solver library.
 *
 * Every object is an opaque handle created and destroyed by this API.
 * Every fallible call returns a gbopt_status; on failure the thread-local
 * message from gbopt_last_error() describes what went wrong. Out-pointers
 * are written only on GBOPT_OK. Handles are not thread-safe individually;
 * distinct handles may be used from distinct threads.
 */
#ifndef GBOPT_H
#define GBOPT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gbopt_status {
  GBOPT_OK = 0,
  GBOPT_ERR_STRUCTURAL = 1, /* ill-formed model or arguments */
  GBOPT_ERR_NUMERIC = 2,    /* non-finite values, failed numeric checks */
  GBOPT_ERR_SINGULAR = 3,   /* factorization could not be regularized */
  GBOPT_ERR_IO = 4,         /* file unreadable or unwritable */
  GBOPT_ERR_FORMAT = 5,     /* file readable but not parseable */
  GBOPT_ERR_DIMENSION = 6,  /* file parseable but shapes inconsistent */
  GBOPT_ERR_TRUNCATED = 7,  /* file ends before its declared payload */
  GBOPT_ERR_RANGE = 8,      /* value outside its documented domain */
  GBOPT_ERR_ARGUMENT = 9,   /* null handle or invalid enum at the C layer */
  GBOPT_ERR_INTERNAL = 10
} gbopt_status;

typedef enum gbopt_solve_status {
  GBOPT_SOLVE_OPTIMAL = 0,
  GBOPT_SOLVE_MAX_ITER = 1,
  GBOPT_SOLVE_TIME_LIMIT = 2,
  GBOPT_SOLVE_INFEASIBLE = 3,
  GBOPT_SOLVE_LINALG_FAILURE = 4
} gbopt_solve_status;

typedef enum gbopt_formulation {
  GBOPT_FORMULATION_FULL = 0,
  GBOPT_FORMULATION_REDUCED = 1
} gbopt_formulation;

typedef struct gbopt_net gbopt_net;
typedef struct gbopt_problem gbopt_problem;
typedef struct gbopt_result gbopt_result;

/* Thread-local message for the most recent failed call on this thread.
 * Never NULL; empty when the most recent call succeeded. The pointer is
 * valid until the next API call on the same thread. */
const char* gbopt_last_error(void);

/* Releases a buffer returned through a char** or double** out-pointer. */
void gbopt_free_string(char* s);
void gbopt_free_buffer(double* buf);

/* ---- networks ---------------------------------------------------------- */

/* Loads GBNN (binary, or JSON when the path ends in .json). */
gbopt_status gbopt_net_load(const char* path, gbopt_net** out);
gbopt_status gbopt_net_save(const gbopt_net* net, const char* path);

/* Random feed-forward net: widths[0] inputs through widths[n_widths-1]
 * outputs, hidden/final activations by name (linear, tanh, sigmoid,
 * softmax). */
gbopt_status gbopt_net_random(const int64_t* widths, size_t n_widths,
                              const char* hidden_activation,
                              const char* final_activation, uint64_t seed,
                              gbopt_net** out);
void gbopt_net_free(gbopt_net* net);

int64_t gbopt_net_input_dim(const gbopt_net* net);
int64_t gbopt_net_output_dim(const gbopt_net* net);
int64_t gbopt_net_param_count(const gbopt_net* net);

/* Forward pass: x has length n == input_dim, y receives m == output_dim
 * values. */
gbopt_status gbopt_net_forward(const gbopt_net* net, const double* x,
                               size_t n, double* y, size_t m);

/* ---- reference inputs --------------------------------------------------- */

/* Loads a reference vector from a one-row CSV file or a single-image IDX
 * ubyte file (values scaled to [0,1]). On success *out is a buffer of
 * *n doubles; release it with gbopt_free_buffer. */
gbopt_status gbopt_reference_load(const char* path, double** out, size_t* n);

/* Deterministic synthetic reference image with entries strictly inside
 * (0,1); buf has length n. */
gbopt_status gbopt_reference_synthetic(uint64_t seed, double* buf, size_t n);

/* ---- problem building --------------------------------------------------- */

/* Minimal-L1-perturbation attack: find x in [0,1]^n near x_ref whose
 * classifier confidence for `target` reaches `confidence`. */
gbopt_status gbopt_problem_adversarial(const gbopt_net* classifier,
                                       const double* x_ref, size_t n,
                                       int64_t target, double confidence,
                                       gbopt_formulation formulation,
                                       gbopt_problem** out);

/* Economic dispatch with a network frequency floor: n_gen generators with
 * quadratic costs a p^2 + b p + c and bounds [p_min, p_max], fixed demands
 * (surrogate inputs are [p; demand]), and surrogate outputs kept >= eta. */
gbopt_status gbopt_problem_dispatch(const gbopt_net* surrogate,
                                    const double* cost_a,
                                    const double* cost_b,
                                    const double* cost_c, const double* p_min,
                                    const double* p_max, size_t n_gen,
                                    const double* demand, size_t n_demand,
                                    double eta, gbopt_formulation formulation,
                                    gbopt_problem** out);

void gbopt_problem_free(gbopt_problem* p);

/* 1 when the instance was flagged degenerate at build time (reference
 * already satisfies the attack), else 0. */
int gbopt_problem_degenerate(const gbopt_problem* p);

/* Build-time warning text; empty string when there is none. Valid until
 * the problem is freed. */
const char* gbopt_problem_warning(const gbopt_problem* p);

/* Unique nonzero counts of the assembled instance. Any out-pointer may be
 * NULL. */
gbopt_status gbopt_problem_stats(const gbopt_problem* p, int64_t* n_var,
                                 int64_t* n_con, int64_t* jac_nnz,
                                 int64_t* hess_nnz);

/* Unique nonzero counts of embedding the network alone: free input
 * variables plus the chosen formulation's variables and constraint
 * blocks, nothing else. Any out-pointer may be NULL. */
gbopt_status gbopt_embed_stats(const gbopt_net* net, gbopt_formulation f,
                               int64_t* n_var, int64_t* n_con,
                               int64_t* jac_nnz, int64_t* hess_nnz);

/* ---- solving ------------------------------------------------------------ */

typedef struct gbopt_solve_options {
  double tol;          /* <= 0 selects the default 1e-6 */
  int32_t max_iter;    /* <= 0 selects the default 3000 */
  double time_limit_s; /* <= 0 means no limit */
} gbopt_solve_options;

/* Runs the interior-point solver. opts may be NULL for defaults. Statuses
 * other than Optimal still produce a result handle; only thrown failures
 * return an error status. */
gbopt_status gbopt_solve(const gbopt_problem* p,
                         const gbopt_solve_options* opts, gbopt_result** out);
void gbopt_result_free(gbopt_result* r);

gbopt_solve_status gbopt_result_status(const gbopt_result* r);
const char* gbopt_result_status_name(const gbopt_result* r);
double gbopt_result_objective(const gbopt_result* r);
int32_t gbopt_result_iterations(const gbopt_result* r);
double gbopt_result_kkt_error(const gbopt_result* r);

/* Wall-time split of the solve; any out-pointer may be NULL. The four
 * categories are mutually exclusive and sum to the solve wall-time. */
gbopt_status gbopt_result_timing(const gbopt_result* r, double* function_s,
                                 double* jacobian_s, double* hessian_s,
                                 double* solver_s);

/* Number of primary decision variables (pixels / generator set-points). */
int64_t gbopt_result_main_dim(const gbopt_result* r);

/* Copies the primary decision variables at the solution into buf (length
 * len >= main_dim). */
gbopt_status gbopt_result_main_vars(const gbopt_result* r, double* buf,
                                    size_t len);

/* ---- benchmark sweep ---------------------------------------------------- */

/* Runs the benchmark sweep described by a JSON config (families, sizes,
 * formulations, seed). On success *csv_out and *json_out receive
 * NUL-terminated report strings (release with gbopt_free_string) and
 * *all_optimal is 1 iff every cell solved to Optimal. Each out-pointer
 * may be NULL when that output is not wanted. */
gbopt_status gbopt_bench_run(const char* config_json, char** csv_out,
                             char** json_out, int* all_optimal);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* GBOPT_H */
