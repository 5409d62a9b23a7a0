// Command-line frontend for the gbopt shared library. Everything it does
// goes through the C API in gbopt.h; this file owns only argument parsing
// and file serialization.
//
// Exit codes: 0 when every requested solve terminates Optimal (and for
// commands that solve nothing), 1 when a solve ends in any other status,
// 2 for usage, I/O, or build errors.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gbopt.h"
#include "json.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void die(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  std::exit(2);
}

void check(gbopt_status s, const char* what) {
  if (s != GBOPT_OK) die(std::string(what) + ": " + gbopt_last_error());
}

gbopt_formulation to_formulation(const std::string& name) {
  return name == "full" ? GBOPT_FORMULATION_FULL : GBOPT_FORMULATION_REDUCED;
}

// RAII wrappers so early exits cannot leak API handles.
struct NetGuard {
  gbopt_net* ptr = nullptr;
  ~NetGuard() { gbopt_net_free(ptr); }
};
struct ProblemGuard {
  gbopt_problem* ptr = nullptr;
  ~ProblemGuard() { gbopt_problem_free(ptr); }
};
struct ResultGuard {
  gbopt_result* ptr = nullptr;
  ~ResultGuard() { gbopt_result_free(ptr); }
};
struct BufferGuard {
  double* ptr = nullptr;
  ~BufferGuard() { gbopt_free_buffer(ptr); }
};
struct StringGuard {
  char* ptr = nullptr;
  ~StringGuard() { gbopt_free_string(ptr); }
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) die("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) die("cannot open " + path + " for writing");
  out << text;
  if (!out) die("short write to " + path);
}

ordered_json solve_fields(const gbopt_result* r) {
  double function_s = 0, jacobian_s = 0, hessian_s = 0, solver_s = 0;
  check(gbopt_result_timing(r, &function_s, &jacobian_s, &hessian_s,
                            &solver_s),
        "timing");
  return ordered_json{
      {"status", gbopt_result_status_name(r)},
      {"objective", gbopt_result_objective(r)},
      {"iterations", gbopt_result_iterations(r)},
      {"kkt_error", gbopt_result_kkt_error(r)},
      {"timing", ordered_json{{"function_s", function_s},
                              {"jacobian_s", jacobian_s},
                              {"hessian_s", hessian_s},
                              {"solver_s", solver_s}}},
  };
}

std::vector<double> main_vars(const gbopt_result* r) {
  std::vector<double> x(static_cast<size_t>(gbopt_result_main_dim(r)));
  check(gbopt_result_main_vars(r, x.data(), x.size()), "solution");
  return x;
}

void warn_if_degenerate(const gbopt_problem* p) {
  if (gbopt_problem_degenerate(p))
    std::fprintf(stderr, "warning: %s\n", gbopt_problem_warning(p));
}

// One-line summary on stdout; exit code 0 only for Optimal.
int finish_solve(const gbopt_result* r, const std::string& out_path) {
  std::printf("%s  objective %.10g  iterations %d  kkt_error %.3g  -> %s\n",
              gbopt_result_status_name(r), gbopt_result_objective(r),
              gbopt_result_iterations(r), gbopt_result_kkt_error(r),
              out_path.c_str());
  return gbopt_result_status(r) == GBOPT_SOLVE_OPTIMAL ? 0 : 1;
}

int run_solve_adversarial(const std::string& weights, const std::string& ref,
                          int64_t target, double confidence,
                          const std::string& formulation, double tol,
                          int32_t max_iter, const std::string& out_path) {
  NetGuard net;
  check(gbopt_net_load(weights.c_str(), &net.ptr), "load weights");
  BufferGuard x_ref;
  size_t n = 0;
  check(gbopt_reference_load(ref.c_str(), &x_ref.ptr, &n), "load reference");

  ProblemGuard problem;
  check(gbopt_problem_adversarial(net.ptr, x_ref.ptr, n, target, confidence,
                                  to_formulation(formulation), &problem.ptr),
        "build problem");
  warn_if_degenerate(problem.ptr);

  const gbopt_solve_options opts{tol, max_iter, 0.0};
  ResultGuard result;
  check(gbopt_solve(problem.ptr, &opts, &result.ptr), "solve");

  const std::vector<double> x = main_vars(result.ptr);
  std::vector<double> probs(
      static_cast<size_t>(gbopt_net_output_dim(net.ptr)));
  check(gbopt_net_forward(net.ptr, x.data(), x.size(), probs.data(),
                          probs.size()),
        "verify solution");

  ordered_json doc{{"problem", "adversarial"},
                   {"formulation", formulation},
                   {"target", target},
                   {"confidence", confidence}};
  doc.update(solve_fields(result.ptr));
  doc["confidence_achieved"] = probs[static_cast<size_t>(target)];
  doc["degenerate"] = gbopt_problem_degenerate(problem.ptr) != 0;
  doc["warning"] = gbopt_problem_warning(problem.ptr);
  doc["x"] = x;
  write_text(out_path, doc.dump(2) + "\n");
  return finish_solve(result.ptr, out_path);
}

int run_solve_dispatch(const std::string& weights, const std::string& spec_path,
                       const std::string& formulation, double tol,
                       int32_t max_iter, const std::string& out_path) {
  NetGuard net;
  check(gbopt_net_load(weights.c_str(), &net.ptr), "load weights");

  ordered_json spec;
  try {
    spec = ordered_json::parse(read_text(spec_path));
  } catch (const nlohmann::json::exception& e) {
    die("cannot parse " + spec_path + ": " + e.what());
  }
  auto array_field = [&](const char* key) -> std::vector<double> {
    try {
      return spec.at(key).get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      die(spec_path + ": field '" + key + "': " + e.what());
    }
  };
  const std::vector<double> cost_a = array_field("cost_a");
  const std::vector<double> cost_b = array_field("cost_b");
  const std::vector<double> cost_c = array_field("cost_c");
  const std::vector<double> p_min = array_field("p_min");
  const std::vector<double> p_max = array_field("p_max");
  const std::vector<double> demand = array_field("demand");
  double eta = 59.4;
  if (spec.contains("eta")) {
    try {
      eta = spec.at("eta").get<double>();
    } catch (const nlohmann::json::exception& e) {
      die(spec_path + ": field 'eta': " + e.what());
    }
  }
  const size_t n_gen = cost_a.size();
  if (cost_b.size() != n_gen || cost_c.size() != n_gen ||
      p_min.size() != n_gen || p_max.size() != n_gen)
    die(spec_path +
        ": cost_a, cost_b, cost_c, p_min, p_max must share one length");

  ProblemGuard problem;
  check(gbopt_problem_dispatch(net.ptr, cost_a.data(), cost_b.data(),
                               cost_c.data(), p_min.data(), p_max.data(),
                               n_gen, demand.data(), demand.size(), eta,
                               to_formulation(formulation), &problem.ptr),
        "build problem");
  warn_if_degenerate(problem.ptr);

  const gbopt_solve_options opts{tol, max_iter, 0.0};
  ResultGuard result;
  check(gbopt_solve(problem.ptr, &opts, &result.ptr), "solve");

  const std::vector<double> p = main_vars(result.ptr);
  std::vector<double> surrogate_in = p;
  surrogate_in.insert(surrogate_in.end(), demand.begin(), demand.end());
  std::vector<double> frequencies(
      static_cast<size_t>(gbopt_net_output_dim(net.ptr)));
  check(gbopt_net_forward(net.ptr, surrogate_in.data(), surrogate_in.size(),
                          frequencies.data(), frequencies.size()),
        "verify solution");

  ordered_json doc{{"problem", "dispatch"},
                   {"formulation", formulation},
                   {"eta", eta}};
  doc.update(solve_fields(result.ptr));
  doc["degenerate"] = gbopt_problem_degenerate(problem.ptr) != 0;
  doc["warning"] = gbopt_problem_warning(problem.ptr);
  doc["p"] = p;
  doc["frequencies"] = frequencies;
  write_text(out_path, doc.dump(2) + "\n");
  return finish_solve(result.ptr, out_path);
}

int run_bench(const std::string& config_path, const std::string& out_csv,
              const std::string& out_json) {
  const std::string config = read_text(config_path);
  StringGuard csv, json;
  int all_optimal = 0;
  check(gbopt_bench_run(config.c_str(), &csv.ptr, &json.ptr, &all_optimal),
        "bench");
  if (out_csv.empty())
    std::fputs(csv.ptr, stdout);
  else
    write_text(out_csv, csv.ptr);
  if (!out_json.empty()) write_text(out_json, json.ptr);
  if (!out_csv.empty() || !out_json.empty())
    std::printf("wrote %s%s%s\n", out_csv.c_str(),
                (!out_csv.empty() && !out_json.empty()) ? " and " : "",
                out_json.c_str());
  if (!all_optimal)
    std::fprintf(stderr, "bench: some cells did not terminate Optimal\n");
  return all_optimal ? 0 : 1;
}

int run_gen_net(const std::vector<int64_t>& shape,
                const std::string& activation, const std::string& final_act,
                uint64_t seed, const std::string& out_path) {
  NetGuard net;
  check(gbopt_net_random(shape.data(), shape.size(), activation.c_str(),
                         final_act.c_str(), seed, &net.ptr),
        "generate");
  check(gbopt_net_save(net.ptr, out_path.c_str()), "save");
  std::printf("wrote %s (%lld parameters)\n", out_path.c_str(),
              static_cast<long long>(gbopt_net_param_count(net.ptr)));
  return 0;
}

int run_stats(const std::string& weights, const std::string& formulation) {
  NetGuard net;
  check(gbopt_net_load(weights.c_str(), &net.ptr), "load weights");
  int64_t n_var = 0, n_con = 0, jac_nnz = 0, hess_nnz = 0;
  check(gbopt_embed_stats(net.ptr, to_formulation(formulation), &n_var, &n_con,
                          &jac_nnz, &hess_nnz),
        "stats");
  const ordered_json doc{{"n_var", n_var},
                         {"n_con", n_con},
                         {"jac_nnz", jac_nnz},
                         {"hess_nnz", hess_nnz}};
  std::printf("%s\n", doc.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Nonlinear optimization with embedded neural-network constraints"};
  app.require_subcommand(1);
  int code = 0;

  const auto formulation_check = CLI::IsMember({"full", "reduced"});

  std::string adv_weights, adv_ref, adv_form = "reduced";
  std::string adv_out = "result.json";
  int64_t adv_target = 0;
  double adv_confidence = 0.6, adv_tol = 1e-6;
  int32_t adv_max_iter = 3000;
  auto* adv = app.add_subcommand(
      "solve-adversarial", "Find a minimal-L1 perturbation of a reference "
                           "input that reaches a target class confidence");
  adv->add_option("--weights", adv_weights, "classifier weight file (.gbnn)")
      ->required();
  adv->add_option("--ref", adv_ref, "reference input: one-row CSV or IDX image")
      ->required();
  adv->add_option("--target", adv_target, "class index to reach")->required();
  adv->add_option("--confidence", adv_confidence,
                  "required target-class probability")
      ->capture_default_str();
  adv->add_option("--formulation", adv_form, "network embedding: full|reduced")
      ->check(formulation_check)
      ->capture_default_str();
  adv->add_option("--tol", adv_tol, "KKT tolerance")->capture_default_str();
  adv->add_option("--max-iter", adv_max_iter, "iteration cap")
      ->capture_default_str();
  adv->add_option("--out", adv_out, "result JSON path")->capture_default_str();
  adv->callback([&] {
    code = run_solve_adversarial(adv_weights, adv_ref, adv_target,
                                 adv_confidence, adv_form, adv_tol,
                                 adv_max_iter, adv_out);
  });

  std::string dis_weights, dis_spec, dis_form = "reduced";
  std::string dis_out = "result.json";
  double dis_tol = 1e-6;
  int32_t dis_max_iter = 3000;
  auto* dis = app.add_subcommand(
      "solve-dispatch", "Solve economic dispatch with a neural frequency "
                        "surrogate kept above its floor");
  dis->add_option("--weights", dis_weights, "surrogate weight file (.gbnn)")
      ->required();
  dis->add_option("--spec", dis_spec,
                  "dispatch JSON: cost_a, cost_b, cost_c, p_min, p_max, "
                  "demand, eta (optional, default 59.4)")
      ->required();
  dis->add_option("--formulation", dis_form, "network embedding: full|reduced")
      ->check(formulation_check)
      ->capture_default_str();
  dis->add_option("--tol", dis_tol, "KKT tolerance")->capture_default_str();
  dis->add_option("--max-iter", dis_max_iter, "iteration cap")
      ->capture_default_str();
  dis->add_option("--out", dis_out, "result JSON path")->capture_default_str();
  dis->callback([&] {
    code = run_solve_dispatch(dis_weights, dis_spec, dis_form, dis_tol,
                              dis_max_iter, dis_out);
  });

  std::string bench_config, bench_csv, bench_json;
  auto* bench = app.add_subcommand(
      "bench", "Run the benchmark sweep described by a JSON config");
  bench->add_option("--config", bench_config, "sweep configuration JSON")
      ->required();
  bench->add_option("--out-csv", bench_csv,
                    "CSV report path (stdout when omitted)");
  bench->add_option("--out-json", bench_json, "JSON report path");
  bench->callback(
      [&] { code = run_bench(bench_config, bench_csv, bench_json); });

  std::vector<int64_t> gen_shape;
  std::string gen_activation = "tanh", gen_final = "softmax";
  std::string gen_out;
  uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("gen-net",
                                 "Generate a seeded random network file");
  gen->add_option("--shape", gen_shape,
                  "comma-separated layer widths, input first (e.g. 16,32,3)")
      ->required()
      ->delimiter(',');
  gen->add_option("--activation", gen_activation,
                  "hidden activation: linear|tanh|sigmoid")
      ->capture_default_str();
  gen->add_option("--final", gen_final,
                  "final activation: linear|tanh|sigmoid|softmax")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "RNG seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output weight file (.gbnn)")->required();
  gen->callback([&] {
    code = run_gen_net(gen_shape, gen_activation, gen_final, gen_seed, gen_out);
  });

  std::string stats_weights, stats_form = "reduced";
  auto* stats = app.add_subcommand(
      "stats", "Print embedding statistics for a weight file");
  stats->add_option("--weights", stats_weights, "weight file (.gbnn)")
      ->required();
  stats->add_option("--formulation", stats_form,
                    "network embedding: full|reduced")
      ->check(formulation_check)
      ->capture_default_str();
  stats->callback([&] { code = run_stats(stats_weights, stats_form); });

  CLI11_PARSE(app, argc, argv);
  return code;
}
