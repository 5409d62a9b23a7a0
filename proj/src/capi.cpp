#include "gbopt.h"

#include <cstring>
#include <exception>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gbopt/bench.hpp"
#include "gbopt/errors.hpp"
#include "gbopt/formulations.hpp"
#include "gbopt/ipm.hpp"
#include "gbopt/nn.hpp"
#include "gbopt/problems.hpp"

struct gbopt_net {
  gbopt::NeuralNet net;
};

struct gbopt_problem {
  gbopt::BuiltProblem built;
};

struct gbopt_result {
  gbopt::IpmResult res;
  std::vector<double> main_values;
};

namespace {

thread_local std::string t_last_error;

// Maps the in-flight exception to a status code; most-derived classes
// first so subclasses keep their distinct codes.
gbopt_status to_status(const std::exception_ptr& ep) noexcept {
  try {
    std::rethrow_exception(ep);
  } catch (const gbopt::FormatError&) {
    return GBOPT_ERR_FORMAT;
  } catch (const gbopt::DimensionError&) {
    return GBOPT_ERR_DIMENSION;
  } catch (const gbopt::TruncatedError&) {
    return GBOPT_ERR_TRUNCATED;
  } catch (const gbopt::IoError&) {
    return GBOPT_ERR_IO;
  } catch (const gbopt::RangeError&) {
    return GBOPT_ERR_RANGE;
  } catch (const gbopt::SingularError&) {
    return GBOPT_ERR_SINGULAR;
  } catch (const gbopt::NumericError&) {
    return GBOPT_ERR_NUMERIC;
  } catch (const gbopt::StructuralError&) {
    return GBOPT_ERR_STRUCTURAL;
  } catch (...) {
    return GBOPT_ERR_INTERNAL;
  }
}

template <typename F>
gbopt_status guarded(F&& body) noexcept {
  try {
    body();
    t_last_error.clear();
    return GBOPT_OK;
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return to_status(std::current_exception());
  } catch (...) {
    t_last_error = "unknown failure";
    return GBOPT_ERR_INTERNAL;
  }
}

gbopt_status fail_argument(const char* msg) noexcept {
  t_last_error = msg;
  return GBOPT_ERR_ARGUMENT;
}

gbopt::Formulation to_formulation(gbopt_formulation f) {
  if (f == GBOPT_FORMULATION_FULL) return gbopt::Formulation::FullSpace;
  if (f == GBOPT_FORMULATION_REDUCED) return gbopt::Formulation::ReducedSpace;
  throw gbopt::StructuralError("invalid formulation enum value");
}

char* dup_string(const std::string& s) {
  std::unique_ptr<char[]> out(new char[s.size() + 1]);
  std::memcpy(out.get(), s.c_str(), s.size() + 1);
  return out.release();
}

gbopt::RealVec to_vec(const double* data, size_t n) {
  gbopt::RealVec v(static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = data[i];
  return v;
}

}  // namespace

extern "C" {

const char* gbopt_last_error(void) { return t_last_error.c_str(); }

void gbopt_free_string(char* s) { delete[] s; }
void gbopt_free_buffer(double* buf) { delete[] buf; }

/* ---- networks ---------------------------------------------------------- */

gbopt_status gbopt_net_load(const char* path, gbopt_net** out) {
  if (path == nullptr || out == nullptr) {
    return fail_argument("gbopt_net_load: path and out must be non-null");
  }
  return guarded([&] {
    auto handle = std::make_unique<gbopt_net>(
        gbopt_net{gbopt::load_weights(path)});
    *out = handle.release();
  });
}

gbopt_status gbopt_net_save(const gbopt_net* net, const char* path) {
  if (net == nullptr || path == nullptr) {
    return fail_argument("gbopt_net_save: net and path must be non-null");
  }
  return guarded([&] { gbopt::save_weights(net->net, path); });
}

gbopt_status gbopt_net_random(const int64_t* widths, size_t n_widths,
                              const char* hidden_activation,
                              const char* final_activation, uint64_t seed,
                              gbopt_net** out) {
  if (widths == nullptr || out == nullptr || hidden_activation == nullptr ||
      final_activation == nullptr) {
    return fail_argument("gbopt_net_random: pointer arguments must be "
                         "non-null");
  }
  return guarded([&] {
    std::vector<Eigen::Index> w(n_widths);
    for (size_t i = 0; i < n_widths; ++i) {
      w[i] = static_cast<Eigen::Index>(widths[i]);
    }
    auto handle = std::make_unique<gbopt_net>(gbopt_net{gbopt::random_net(
        w, gbopt::activation_from_name(hidden_activation),
        gbopt::activation_from_name(final_activation), seed)});
    *out = handle.release();
  });
}

void gbopt_net_free(gbopt_net* net) { delete net; }

int64_t gbopt_net_input_dim(const gbopt_net* net) {
  return net == nullptr ? 0 : static_cast<int64_t>(net->net.input_dim());
}

int64_t gbopt_net_output_dim(const gbopt_net* net) {
  return net == nullptr ? 0 : static_cast<int64_t>(net->net.output_dim());
}

int64_t gbopt_net_param_count(const gbopt_net* net) {
  return net == nullptr ? 0 : static_cast<int64_t>(net->net.param_count());
}

gbopt_status gbopt_net_forward(const gbopt_net* net, const double* x,
                               size_t n, double* y, size_t m) {
  if (net == nullptr || x == nullptr || y == nullptr) {
    return fail_argument("gbopt_net_forward: pointer arguments must be "
                         "non-null");
  }
  if (static_cast<int64_t>(n) != gbopt_net_input_dim(net) ||
      static_cast<int64_t>(m) != gbopt_net_output_dim(net)) {
    return fail_argument("gbopt_net_forward: buffer lengths do not match "
                         "the network dimensions");
  }
  return guarded([&] {
    const gbopt::RealVec out = net->net.forward(to_vec(x, n));
    for (size_t i = 0; i < m; ++i) y[i] = out[static_cast<Eigen::Index>(i)];
  });
}

/* ---- reference inputs --------------------------------------------------- */

gbopt_status gbopt_reference_load(const char* path, double** out, size_t* n) {
  if (path == nullptr || out == nullptr || n == nullptr) {
    return fail_argument("gbopt_reference_load: pointer arguments must be "
                         "non-null");
  }
  return guarded([&] {
    const gbopt::RealVec v = gbopt::load_reference_input(path);
    std::unique_ptr<double[]> buf(new double[static_cast<size_t>(v.size())]);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      buf[static_cast<size_t>(i)] = v[i];
    }
    *n = static_cast<size_t>(v.size());
    *out = buf.release();
  });
}

gbopt_status gbopt_reference_synthetic(uint64_t seed, double* buf, size_t n) {
  if (buf == nullptr) {
    return fail_argument("gbopt_reference_synthetic: buf must be non-null");
  }
  return guarded([&] {
    const gbopt::RealVec v =
        gbopt::make_reference_image(static_cast<Eigen::Index>(n), seed);
    for (size_t i = 0; i < n; ++i) buf[i] = v[static_cast<Eigen::Index>(i)];
  });
}

/* ---- problem building --------------------------------------------------- */

gbopt_status gbopt_problem_adversarial(const gbopt_net* classifier,
                                       const double* x_ref, size_t n,
                                       int64_t target, double confidence,
                                       gbopt_formulation formulation,
                                       gbopt_problem** out) {
  if (classifier == nullptr || x_ref == nullptr || out == nullptr) {
    return fail_argument("gbopt_problem_adversarial: pointer arguments must "
                         "be non-null");
  }
  return guarded([&] {
    gbopt::AdversarialSpec spec{classifier->net, to_vec(x_ref, n),
                                static_cast<Eigen::Index>(target), confidence,
                                to_formulation(formulation)};
    auto handle = std::make_unique<gbopt_problem>(
        gbopt_problem{gbopt::build_adversarial(spec)});
    *out = handle.release();
  });
}

gbopt_status gbopt_problem_dispatch(const gbopt_net* surrogate,
                                    const double* cost_a,
                                    const double* cost_b,
                                    const double* cost_c, const double* p_min,
                                    const double* p_max, size_t n_gen,
                                    const double* demand, size_t n_demand,
                                    double eta, gbopt_formulation formulation,
                                    gbopt_problem** out) {
  if (surrogate == nullptr || cost_a == nullptr || cost_b == nullptr ||
      cost_c == nullptr || p_min == nullptr || p_max == nullptr ||
      demand == nullptr || out == nullptr) {
    return fail_argument("gbopt_problem_dispatch: pointer arguments must be "
                         "non-null");
  }
  return guarded([&] {
    gbopt::DispatchSpec spec{surrogate->net,
                             to_vec(cost_a, n_gen),
                             to_vec(cost_b, n_gen),
                             to_vec(cost_c, n_gen),
                             to_vec(p_min, n_gen),
                             to_vec(p_max, n_gen),
                             to_vec(demand, n_demand)};
    spec.eta = eta;
    spec.formulation = to_formulation(formulation);
    auto handle = std::make_unique<gbopt_problem>(
        gbopt_problem{gbopt::build_dispatch(spec)});
    *out = handle.release();
  });
}

void gbopt_problem_free(gbopt_problem* p) { delete p; }

int gbopt_problem_degenerate(const gbopt_problem* p) {
  return p != nullptr && p->built.degenerate ? 1 : 0;
}

const char* gbopt_problem_warning(const gbopt_problem* p) {
  return p == nullptr ? "" : p->built.warning.c_str();
}

gbopt_status gbopt_problem_stats(const gbopt_problem* p, int64_t* n_var,
                                 int64_t* n_con, int64_t* jac_nnz,
                                 int64_t* hess_nnz) {
  if (p == nullptr) {
    return fail_argument("gbopt_problem_stats: problem must be non-null");
  }
  return guarded([&] {
    const gbopt::FormulationStats st =
        gbopt::formulation_stats(p->built.problem);
    if (n_var != nullptr) *n_var = static_cast<int64_t>(st.n_var);
    if (n_con != nullptr) *n_con = static_cast<int64_t>(st.n_con);
    if (jac_nnz != nullptr) *jac_nnz = static_cast<int64_t>(st.jac_nnz);
    if (hess_nnz != nullptr) *hess_nnz = static_cast<int64_t>(st.hess_nnz);
  });
}

gbopt_status gbopt_embed_stats(const gbopt_net* net, gbopt_formulation f,
                               int64_t* n_var, int64_t* n_con,
                               int64_t* jac_nnz, int64_t* hess_nnz) {
  if (net == nullptr) {
    return fail_argument("gbopt_embed_stats: net must be non-null");
  }
  return guarded([&] {
    gbopt::NlpProblem p;
    const Eigen::Index dim = net->net.input_dim();
    const Eigen::Index first = p.add_variables(
        "x", dim, -std::numeric_limits<double>::infinity(),
        gbopt::RealVec::Zero(dim));
    std::vector<Eigen::Index> inputs(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i) {
      inputs[static_cast<std::size_t>(i)] = first + i;
    }
    if (to_formulation(f) == gbopt::Formulation::FullSpace) {
      gbopt::embed_full_space(p, net->net, inputs);
    } else {
      gbopt::embed_reduced_space(p, net->net, inputs);
    }
    const gbopt::FormulationStats st = gbopt::formulation_stats(p);
    if (n_var != nullptr) *n_var = static_cast<int64_t>(st.n_var);
    if (n_con != nullptr) *n_con = static_cast<int64_t>(st.n_con);
    if (jac_nnz != nullptr) *jac_nnz = static_cast<int64_t>(st.jac_nnz);
    if (hess_nnz != nullptr) *hess_nnz = static_cast<int64_t>(st.hess_nnz);
  });
}

/* ---- solving ------------------------------------------------------------ */

gbopt_status gbopt_solve(const gbopt_problem* p,
                         const gbopt_solve_options* opts, gbopt_result** out) {
  if (p == nullptr || out == nullptr) {
    return fail_argument("gbopt_solve: problem and out must be non-null");
  }
  return guarded([&] {
    gbopt::IpmOptions o;
    if (opts != nullptr) {
      if (opts->tol > 0.0) o.tol = opts->tol;
      if (opts->max_iter > 0) o.max_iter = opts->max_iter;
      if (opts->time_limit_s > 0.0) o.time_limit_s = opts->time_limit_s;
    }
    auto handle = std::make_unique<gbopt_result>();
    handle->res = gbopt::ipm_solve(p->built.problem, o);
    handle->main_values.reserve(p->built.main_vars.size());
    for (const Eigen::Index idx : p->built.main_vars) {
      handle->main_values.push_back(handle->res.x[idx]);
    }
    *out = handle.release();
  });
}

void gbopt_result_free(gbopt_result* r) { delete r; }

gbopt_solve_status gbopt_result_status(const gbopt_result* r) {
  if (r == nullptr) return GBOPT_SOLVE_LINALG_FAILURE;
  return static_cast<gbopt_solve_status>(r->res.status);
}

const char* gbopt_result_status_name(const gbopt_result* r) {
  if (r == nullptr) return "";
  return gbopt::ipm_status_name(r->res.status);
}

double gbopt_result_objective(const gbopt_result* r) {
  return r == nullptr ? 0.0 : r->res.objective;
}

int32_t gbopt_result_iterations(const gbopt_result* r) {
  return r == nullptr ? 0 : static_cast<int32_t>(r->res.iterations);
}

double gbopt_result_kkt_error(const gbopt_result* r) {
  return r == nullptr ? 0.0 : r->res.kkt_error;
}

gbopt_status gbopt_result_timing(const gbopt_result* r, double* function_s,
                                 double* jacobian_s, double* hessian_s,
                                 double* solver_s) {
  if (r == nullptr) {
    return fail_argument("gbopt_result_timing: result must be non-null");
  }
  if (function_s != nullptr) *function_s = r->res.timing.function_s;
  if (jacobian_s != nullptr) *jacobian_s = r->res.timing.jacobian_s;
  if (hessian_s != nullptr) *hessian_s = r->res.timing.hessian_s;
  if (solver_s != nullptr) *solver_s = r->res.timing.solver_s;
  t_last_error.clear();
  return GBOPT_OK;
}

int64_t gbopt_result_main_dim(const gbopt_result* r) {
  return r == nullptr ? 0 : static_cast<int64_t>(r->main_values.size());
}

gbopt_status gbopt_result_main_vars(const gbopt_result* r, double* buf,
                                    size_t len) {
  if (r == nullptr || buf == nullptr) {
    return fail_argument("gbopt_result_main_vars: result and buf must be "
                         "non-null");
  }
  if (len < r->main_values.size()) {
    return fail_argument("gbopt_result_main_vars: buffer too small");
  }
  std::memcpy(buf, r->main_values.data(),
              r->main_values.size() * sizeof(double));
  t_last_error.clear();
  return GBOPT_OK;
}

/* ---- benchmark sweep ---------------------------------------------------- */

gbopt_status gbopt_bench_run(const char* config_json, char** csv_out,
                             char** json_out, int* all_optimal) {
  if (config_json == nullptr) {
    return fail_argument("gbopt_bench_run: config_json must be non-null");
  }
  return guarded([&] {
    const gbopt::BenchConfig cfg = gbopt::parse_bench_config(config_json);
    const gbopt::BenchReport report = gbopt::run_bench(cfg);

    std::unique_ptr<char[]> csv;
    std::unique_ptr<char[]> json;
    if (csv_out != nullptr) csv.reset(dup_string(gbopt::bench_csv(report)));
    if (json_out != nullptr) json.reset(dup_string(gbopt::bench_json(report)));

    if (all_optimal != nullptr) {
      bool ok = true;
      for (const gbopt::BenchRow& row : report.rows) {
        ok = ok && row.status == "Optimal";
      }
      *all_optimal = ok ? 1 : 0;
    }
    if (csv_out != nullptr) *csv_out = csv.release();
    if (json_out != nullptr) *json_out = json.release();
  });
}

} /* extern "C" */
