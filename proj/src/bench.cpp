#include "gbopt/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "gbopt/errors.hpp"
#include "gbopt/problems.hpp"

namespace gbopt {

namespace {

// Distinct primes keep (family, size) cells on distinct seeds while both
// formulations of one cell share the identical instance.
std::uint64_t cell_seed(const BenchConfig& cfg, std::size_t family_index,
                        std::size_t size_index) {
  return cfg.seed + 7919ULL * static_cast<std::uint64_t>(family_index) +
         104729ULL * static_cast<std::uint64_t>(size_index);
}

struct BuiltCell {
  BuiltProblem built;
  Eigen::Index nn_params = 0;
};

BuiltCell build_cell(const BenchFamilyConfig& fam,
                     const std::vector<Eigen::Index>& hidden, Formulation form,
                     std::uint64_t seed) {
  if (fam.name == "adversarial") {
    const AdversarialSpec spec =
        make_seeded_adversarial(fam.input_dim, hidden, fam.classes, fam.target,
                                fam.confidence, form, seed);
    BuiltCell cell{build_adversarial(spec), spec.classifier.param_count()};
    return cell;
  }
  if (fam.name == "dispatch") {
    const DispatchSpec spec = make_seeded_dispatch(
        fam.n_gen, fam.n_demand, fam.n_bus, hidden, form, seed);
    BuiltCell cell{build_dispatch(spec), spec.surrogate.param_count()};
    return cell;
  }
  throw StructuralError("unknown bench family '" + fam.name +
                        "' (expected adversarial or dispatch)");
}

void fill_timing(BenchRow& row, const IpmResult& r) {
  row.iterations = r.iterations;
  row.objective = r.objective;
  row.solve_time_s = r.timing.total();
  row.time_per_iter_s = row.solve_time_s / std::max(1, r.iterations);
  if (row.solve_time_s > 0.0) {
    row.pct_function = 100.0 * r.timing.function_s / row.solve_time_s;
    row.pct_jacobian = 100.0 * r.timing.jacobian_s / row.solve_time_s;
    row.pct_hessian = 100.0 * r.timing.hessian_s / row.solve_time_s;
    row.pct_solver =
        100.0 - row.pct_function - row.pct_jacobian - row.pct_hessian;
  } else {
    row.pct_solver = 100.0;
  }
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

nlohmann::ordered_json row_json(const BenchRow& r) {
  nlohmann::ordered_json j;
  j["problem"] = r.problem;
  j["formulation"] = r.formulation;
  j["nn_params"] = r.nn_params;
  j["solve_time_s"] = r.solve_time_s;
  j["iterations"] = r.iterations;
  j["time_per_iter_s"] = r.time_per_iter_s;
  j["objective"] = r.objective;
  j["pct_function"] = r.pct_function;
  j["pct_jacobian"] = r.pct_jacobian;
  j["pct_hessian"] = r.pct_hessian;
  j["pct_solver"] = r.pct_solver;
  j["n_var"] = r.n_var;
  j["n_con"] = r.n_con;
  j["jac_nnz"] = r.jac_nnz;
  j["hess_nnz"] = r.hess_nnz;
  j["status"] = r.status;
  j["seed"] = r.seed;
  return j;
}

std::vector<Eigen::Index> parse_widths(const nlohmann::json& arr) {
  std::vector<Eigen::Index> widths;
  for (const auto& v : arr) {
    widths.push_back(v.get<Eigen::Index>());
  }
  return widths;
}

}  // namespace

BenchReport run_bench(const BenchConfig& config) {
  BenchReport report;
  for (std::size_t fi = 0; fi < config.families.size(); ++fi) {
    const BenchFamilyConfig& fam = config.families[fi];
    for (std::size_t si = 0; si < fam.hidden.size(); ++si) {
      const std::uint64_t seed = cell_seed(config, fi, si);

      // Iteration counts of the formulations that reached Optimal on this
      // instance, for the parity note.
      std::vector<std::pair<std::string, int>> solved;

      for (const Formulation form : config.formulations) {
        BenchRow row;
        row.problem = fam.name;
        row.formulation = formulation_name(form);
        row.seed = seed;
        try {
          BuiltCell cell = build_cell(fam, fam.hidden[si], form, seed);
          row.nn_params = cell.nn_params;
          const FormulationStats stats = formulation_stats(cell.built.problem);
          row.n_var = stats.n_var;
          row.n_con = stats.n_con;
          row.jac_nnz = stats.jac_nnz;
          row.hess_nnz = stats.hess_nnz;

          IpmOptions opts;
          opts.tol = config.tol;
          opts.max_iter = config.max_iter;
          opts.time_limit_s = config.time_limit_s;
          const IpmResult r = ipm_solve(cell.built.problem, opts);
          row.status = ipm_status_name(r.status);
          fill_timing(row, r);

          if (r.status == IpmStatus::Optimal) {
            // Re-verify feasibility with fresh oracle evaluations rather
            // than trusting solver-internal state.
            const double viol =
                cell.built.problem.n_con() > 0
                    ? cell.built.problem.eval_g(r.x).lpNorm<Eigen::Infinity>()
                    : 0.0;
            if (!(viol <= 1e-6)) {
              row.status = "FeasibilityCheckFailed";
            } else {
              solved.emplace_back(row.formulation, r.iterations);
            }
          }
        } catch (const std::exception& e) {
          row.status = std::string("error: ") + e.what();
        }
        report.rows.push_back(std::move(row));
      }

      if (solved.size() == 2) {
        std::ostringstream note;
        const auto& a = solved[0];
        const auto& b = solved[1];
        const auto& fewer = a.second <= b.second ? a : b;
        const auto& more = a.second <= b.second ? b : a;
        note << fam.name << " size " << si << " (seed " << seed
             << "): " << fewer.first << " " << fewer.second
             << " iters <= " << more.first << " " << more.second << " iters";
        report.flags.push_back(note.str());
      }
    }
  }
  return report;
}

std::string bench_csv(const BenchReport& report) {
  std::ostringstream out;
  out << "problem,formulation,nn_params,solve_time_s,iterations,"
         "time_per_iter_s,objective,pct_function,pct_jacobian,pct_hessian,"
         "pct_solver,n_var,n_con,jac_nnz,hess_nnz,status,seed\n";
  out << std::setprecision(17);
  for (const BenchRow& r : report.rows) {
    out << csv_field(r.problem) << ',' << csv_field(r.formulation) << ','
        << r.nn_params << ',' << r.solve_time_s << ',' << r.iterations << ','
        << r.time_per_iter_s << ',' << r.objective << ',' << r.pct_function
        << ',' << r.pct_jacobian << ',' << r.pct_hessian << ','
        << r.pct_solver << ',' << r.n_var << ',' << r.n_con << ','
        << r.jac_nnz << ',' << r.hess_nnz << ',' << csv_field(r.status) << ','
        << r.seed << '\n';
  }
  return out.str();
}

std::string bench_json(const BenchReport& report) {
  nlohmann::ordered_json doc;
  auto& rows = doc["rows"] = nlohmann::ordered_json::array();
  for (const BenchRow& r : report.rows) rows.push_back(row_json(r));
  doc["flags"] = report.flags;
  return doc.dump(2) + "\n";
}

BenchConfig parse_bench_config(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bench config is not valid JSON: ") +
                      e.what());
  }

  BenchConfig cfg;
  try {
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.tol = doc.value("tol", cfg.tol);
    cfg.max_iter = doc.value("max_iter", cfg.max_iter);
    cfg.time_limit_s = doc.value("time_limit_s", cfg.time_limit_s);

    if (doc.contains("formulations")) {
      cfg.formulations.clear();
      for (const auto& f : doc.at("formulations")) {
        cfg.formulations.push_back(
            formulation_from_name(f.get<std::string>()));
      }
    }

    for (const auto& jf : doc.value("families", nlohmann::json::array())) {
      BenchFamilyConfig fam;
      fam.name = jf.at("name").get<std::string>();
      for (const auto& h : jf.at("hidden")) {
        fam.hidden.push_back(parse_widths(h));
      }
      fam.input_dim = jf.value("input_dim", fam.input_dim);
      fam.classes = jf.value("classes", fam.classes);
      fam.target = jf.value("target", fam.target);
      fam.confidence = jf.value("confidence", fam.confidence);
      fam.n_gen = jf.value("n_gen", fam.n_gen);
      fam.n_demand = jf.value("n_demand", fam.n_demand);
      fam.n_bus = jf.value("n_bus", fam.n_bus);
      cfg.families.push_back(std::move(fam));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bench config has a malformed field: ") +
                      e.what());
  }

  if (cfg.families.empty()) {
    throw StructuralError("bench config lists no families");
  }
  if (cfg.formulations.empty()) {
    throw StructuralError("bench config lists no formulations");
  }
  for (const BenchFamilyConfig& fam : cfg.families) {
    if (fam.name != "adversarial" && fam.name != "dispatch") {
      throw StructuralError("unknown bench family '" + fam.name +
                            "' (expected adversarial or dispatch)");
    }
    if (fam.hidden.empty()) {
      throw StructuralError("bench family '" + fam.name +
                            "' lists no sizes");
    }
  }
  return cfg;
}

BenchConfig load_bench_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("bench config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) {
    throw IoError("bench config: read failed for " + path);
  }
  return parse_bench_config(buf.str());
}

}  // namespace gbopt
