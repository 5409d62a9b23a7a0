#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbopt/formulations.hpp"
#include "gbopt/ipm.hpp"

namespace gbopt {

// One benchmark family: a problem kind plus a ladder of hidden-layer
// shapes, one ladder entry per instance size.
struct BenchFamilyConfig {
  std::string name;  // "adversarial" or "dispatch"
  std::vector<std::vector<Eigen::Index>> hidden;

  // Adversarial knobs.
  Eigen::Index input_dim = 16;
  Eigen::Index classes = 10;
  Eigen::Index target = 1;
  double confidence = 0.6;

  // Dispatch knobs.
  Eigen::Index n_gen = 12;
  Eigen::Index n_demand = 12;
  Eigen::Index n_bus = 12;
};

struct BenchConfig {
  std::uint64_t seed = 1;
  double tol = 1e-6;
  int max_iter = 3000;
  double time_limit_s = 600.0;
  std::vector<Formulation> formulations{Formulation::FullSpace,
                                        Formulation::ReducedSpace};
  std::vector<BenchFamilyConfig> families;
};

// One solved cell. The pct columns split solve_time_s into the oracle and
// solver categories and sum to 100 whenever the time is positive; status
// holds the solver status name, or the failure text when the cell threw.
struct BenchRow {
  std::string problem;
  std::string formulation;
  Eigen::Index nn_params = 0;
  double solve_time_s = 0.0;
  int iterations = 0;
  double time_per_iter_s = 0.0;
  double objective = 0.0;
  double pct_function = 0.0;
  double pct_jacobian = 0.0;
  double pct_hessian = 0.0;
  double pct_solver = 0.0;
  Eigen::Index n_var = 0;
  Eigen::Index n_con = 0;
  Eigen::Index jac_nnz = 0;
  Eigen::Index hess_nnz = 0;
  std::string status;
  std::uint64_t seed = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  // Observational notes, one per instance whose formulation pair both
  // solved: which formulation needed fewer iterations.
  std::vector<std::string> flags;
};

// Runs every (family, size, formulation) cell. A cell that throws is
// recorded with the error text in its status column; the sweep never
// aborts. Instance construction is seeded per (family, size) so both
// formulations of a cell see the identical network and data.
BenchReport run_bench(const BenchConfig& config);

// CSV with the fixed header
// problem,formulation,nn_params,solve_time_s,iterations,time_per_iter_s,
// objective,pct_function,pct_jacobian,pct_hessian,pct_solver,n_var,n_con,
// jac_nnz,hess_nnz,status,seed (one line).
std::string bench_csv(const BenchReport& report);

// JSON object {"rows": [...], "flags": [...]} with one object per row
// using the CSV column names as keys.
std::string bench_json(const BenchReport& report);

// Parses a benchmark sweep description. Throws FormatError on malformed
// JSON or wrong value types, StructuralError on invalid content (unknown
// family or formulation names, no families, empty size ladders).
BenchConfig parse_bench_config(const std::string& json_text);

// Reads the file and forwards to parse_bench_config. Throws IoError when
// the file cannot be read.
BenchConfig load_bench_config(const std::string& path);

}  // namespace gbopt
