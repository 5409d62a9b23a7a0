#include "gbopt/formulations.hpp"

#include <algorithm>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gbopt/errors.hpp"

namespace gbopt {

namespace {

RealVec gather(const RealVec& x, const std::vector<Eigen::Index>& idx) {
  RealVec out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = x[idx[k]];
  }
  return out;
}

void check_input_vars(const NlpProblem& p, const NeuralNet& nn,
                      const std::vector<Eigen::Index>& input_vars) {
  if (static_cast<Eigen::Index>(input_vars.size()) != nn.input_dim()) {
    throw StructuralError(
        "embed: network expects " + std::to_string(nn.input_dim()) +
        " input variables, got " + std::to_string(input_vars.size()));
  }
  std::unordered_set<Eigen::Index> seen;
  for (const Eigen::Index v : input_vars) {
    if (v < 0 || v >= p.n_var()) {
      throw StructuralError("embed: input variable index " +
                            std::to_string(v) + " is out of range");
    }
    if (!seen.insert(v).second) {
      throw StructuralError("embed: input variable index " +
                            std::to_string(v) + " appears twice");
    }
  }
}

std::vector<Eigen::Index> index_range(Eigen::Index begin, Eigen::Index count) {
  std::vector<Eigen::Index> out(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = begin + i;
  }
  return out;
}

// sigma(z) without derivatives; routed through the same kernels the
// derivative oracles use so residuals match forward-pass values bit for bit.
RealVec activation_value(ActivationKind kind, const RealVec& z) {
  if (kind == ActivationKind::Softmax) {
    return activation_value_jac_hess(kind, z).value;
  }
  RealVec y;
  activation_elementwise(kind, z, &y, nullptr, nullptr);
  return y;
}

// Equality block z_l - W y_prev - b = 0 with deps [y_prev..., z_l...].
// Pattern: all W positions row-major, then the identity on z_l.
ConstraintBlock make_linear_block(std::string name,
                                  std::shared_ptr<const Layer> layer,
                                  std::vector<Eigen::Index> deps) {
  const Eigen::Index nl = layer->out_dim();
  const Eigen::Index nprev = layer->in_dim();

  ConstraintBlock blk;
  blk.name = std::move(name);
  blk.arity = nl;
  blk.deps = std::move(deps);
  for (Eigen::Index i = 0; i < nl; ++i) {
    for (Eigen::Index j = 0; j < nprev; ++j) {
      blk.jac_pattern.rows.push_back(i);
      blk.jac_pattern.cols.push_back(j);
    }
  }
  for (Eigen::Index i = 0; i < nl; ++i) {
    blk.jac_pattern.rows.push_back(i);
    blk.jac_pattern.cols.push_back(nprev + i);
  }
  blk.residual = [layer, nl, nprev](const RealVec& xb, RealVec& r) {
    r = xb.tail(nl) - layer->weight * xb.head(nprev) - layer->bias;
  };
  blk.jacobian = [layer, nl, nprev](const RealVec& xb, RealVec& values) {
    (void)xb;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < nl; ++i) {
      for (Eigen::Index j = 0; j < nprev; ++j) {
        values[k++] = -layer->weight(i, j);
      }
    }
    for (Eigen::Index i = 0; i < nl; ++i) {
      values[k++] = 1.0;
    }
  };
  return blk;
}

// Equality block y_l - sigma(z_l) = 0 with deps [z_l..., y_l...]. The
// Jacobian carries -sigma' on z_l (diagonal, or dense for softmax) plus the
// identity on y_l; the Lagrangian Hessian is -sum_i lam_i * d2 sigma_i,
// diagonal for elementwise kinds and a dense lower triangle for softmax.
ConstraintBlock make_activation_block(std::string name, ActivationKind kind,
                                      Eigen::Index nl,
                                      std::vector<Eigen::Index> deps) {
  ConstraintBlock blk;
  blk.name = std::move(name);
  blk.arity = nl;
  blk.deps = std::move(deps);

  const bool softmax = kind == ActivationKind::Softmax;
  for (Eigen::Index i = 0; i < nl; ++i) {
    if (softmax) {
      for (Eigen::Index j = 0; j < nl; ++j) {
        blk.jac_pattern.rows.push_back(i);
        blk.jac_pattern.cols.push_back(j);
      }
    } else {
      blk.jac_pattern.rows.push_back(i);
      blk.jac_pattern.cols.push_back(i);
    }
  }
  for (Eigen::Index i = 0; i < nl; ++i) {
    blk.jac_pattern.rows.push_back(i);
    blk.jac_pattern.cols.push_back(nl + i);
  }

  blk.residual = [kind, nl](const RealVec& xb, RealVec& r) {
    r = xb.tail(nl) - activation_value(kind, xb.head(nl));
  };

  if (softmax) {
    blk.jacobian = [kind, nl](const RealVec& xb, RealVec& values) {
      const ActivationDerivs ad = activation_value_jac_hess(kind, xb.head(nl));
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < nl; ++i) {
        for (Eigen::Index j = 0; j < nl; ++j) {
          values[k++] = -ad.jac(i, j);
        }
      }
      for (Eigen::Index i = 0; i < nl; ++i) {
        values[k++] = 1.0;
      }
    };
    for (Eigen::Index a = 0; a < nl; ++a) {
      for (Eigen::Index b = 0; b <= a; ++b) {
        blk.hess_pattern.rows.push_back(a);
        blk.hess_pattern.cols.push_back(b);
      }
    }
    blk.lag_hessian = [kind, nl](const RealVec& xb, const RealVec& lam,
                                 RealVec& values) {
      const ActivationDerivs ad = activation_value_jac_hess(kind, xb.head(nl));
      Eigen::Index k = 0;
      for (Eigen::Index a = 0; a < nl; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
          double sum = 0.0;
          for (Eigen::Index i = 0; i < nl; ++i) {
            sum -= lam[i] * ad.hess[static_cast<std::size_t>(i)](a, b);
          }
          values[k++] = sum;
        }
      }
    };
    return blk;
  }

  blk.jacobian = [kind, nl](const RealVec& xb, RealVec& values) {
    RealVec d1;
    activation_elementwise(kind, xb.head(nl), nullptr, &d1, nullptr);
    values.head(nl) = -d1;
    values.tail(nl).setOnes();
  };
  if (kind != ActivationKind::Linear) {
    for (Eigen::Index i = 0; i < nl; ++i) {
      blk.hess_pattern.rows.push_back(i);
      blk.hess_pattern.cols.push_back(i);
    }
    blk.lag_hessian = [kind, nl](const RealVec& xb, const RealVec& lam,
                                 RealVec& values) {
      RealVec d2;
      activation_elementwise(kind, xb.head(nl), nullptr, nullptr, &d2);
      values.array() = -lam.array() * d2.array();
    };
  }
  return blk;
}

}  // namespace

const char* formulation_name(Formulation f) {
  switch (f) {
    case Formulation::FullSpace:
      return "full";
    case Formulation::ReducedSpace:
      return "reduced";
  }
  return "unknown";
}

Formulation formulation_from_name(const std::string& name) {
  if (name == "full" || name == "full-space") return Formulation::FullSpace;
  if (name == "reduced" || name == "reduced-space") {
    return Formulation::ReducedSpace;
  }
  throw StructuralError("unknown formulation '" + name +
                        "' (expected 'full' or 'reduced')");
}

FormulationStats formulation_stats(const NlpProblem& p) {
  FormulationStats s;
  s.n_var = p.n_var();
  s.n_con = p.n_con();
  s.jac_nnz = p.jac_nnz_unique();
  s.hess_nnz = p.hess_nnz_unique();
  return s;
}

EmbedHandle embed_full_space(NlpProblem& p, const NeuralNet& nn,
                             const std::vector<Eigen::Index>& input_vars) {
  check_input_vars(p, nn, input_vars);

  const RealVec x0 = gather(p.initial_point(), input_vars);
  const ForwardTrace trace = nn.forward_trace(x0);
  const std::string base = "nn" + std::to_string(p.n_var()) + "_";

  EmbedHandle h;
  h.formulation = Formulation::FullSpace;
  h.input_vars = input_vars;

  std::vector<Eigen::Index> y_prev = input_vars;
  for (Eigen::Index l = 0; l < nn.layer_count(); ++l) {
    const auto layer = std::make_shared<const Layer>(nn.layer(l));
    const Eigen::Index nl = layer->out_dim();
    const std::string tag = std::to_string(l + 1);
    const std::size_t li = static_cast<std::size_t>(l);

    const Eigen::Index z_begin = p.add_variables(
        base + "z" + tag + "_", nl, kNoLowerBound, trace.z[li]);
    const Eigen::Index y_begin = p.add_variables(
        base + "y" + tag + "_", nl, kNoLowerBound, trace.y[li]);
    const std::vector<Eigen::Index> z_vars = index_range(z_begin, nl);
    const std::vector<Eigen::Index> y_vars = index_range(y_begin, nl);

    std::vector<Eigen::Index> lin_deps = y_prev;
    lin_deps.insert(lin_deps.end(), z_vars.begin(), z_vars.end());
    p.add_block(make_linear_block(base + "lin" + tag, layer,
                                  std::move(lin_deps)));

    std::vector<Eigen::Index> act_deps = z_vars;
    act_deps.insert(act_deps.end(), y_vars.begin(), y_vars.end());
    p.add_block(make_activation_block(base + "act" + tag, layer->activation,
                                      nl, std::move(act_deps)));

    h.layers.push_back({z_begin, y_begin, nl});
    y_prev = y_vars;
  }

  h.output_vars = y_prev;
  return h;
}

EmbedHandle embed_reduced_space(NlpProblem& p, const NeuralNet& nn,
                                const std::vector<Eigen::Index>& input_vars) {
  check_input_vars(p, nn, input_vars);

  const Eigen::Index n = nn.input_dim();
  const Eigen::Index m = nn.output_dim();
  const RealVec x0 = gather(p.initial_point(), input_vars);
  const std::string base = "nn" + std::to_string(p.n_var()) + "_";

  const auto net = std::make_shared<const NeuralNet>(nn);
  const Eigen::Index y_begin =
      p.add_variables(base + "y_", m, kNoLowerBound, net->forward(x0));

  ConstraintBlock blk;
  blk.name = base + "out";
  blk.arity = m;
  blk.deps = input_vars;
  const std::vector<Eigen::Index> y_vars = index_range(y_begin, m);
  blk.deps.insert(blk.deps.end(), y_vars.begin(), y_vars.end());

  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      blk.jac_pattern.rows.push_back(i);
      blk.jac_pattern.cols.push_back(j);
    }
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    blk.jac_pattern.rows.push_back(i);
    blk.jac_pattern.cols.push_back(n + i);
  }

  // Dense lower triangle over the inputs. Local entries are flipped where
  // the host's input indices are not ascending, so the mapped global
  // coordinates stay lower triangular; the Hessian is symmetric, so the
  // flipped slot carries the same value.
  std::vector<Eigen::Index> hr, hc;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      Eigen::Index r = a, c = b;
      if (input_vars[static_cast<std::size_t>(a)] <
          input_vars[static_cast<std::size_t>(b)]) {
        std::swap(r, c);
      }
      hr.push_back(r);
      hc.push_back(c);
    }
  }
  blk.hess_pattern.rows = hr;
  blk.hess_pattern.cols = hc;

  blk.residual = [net, n, m](const RealVec& xb, RealVec& r) {
    r = xb.tail(m) - net->forward(xb.head(n));
  };
  blk.jacobian = [net, n, m](const RealVec& xb, RealVec& values) {
    const RealMat jac = net->jacobian(xb.head(n));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        values[k++] = -jac(i, j);
      }
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      values[k++] = 1.0;
    }
  };
  blk.lag_hessian = [net, n, hr, hc](const RealVec& xb, const RealVec& lam,
                                     RealVec& values) {
    // L = f + lam^T (y - NN(x)), so the network oracle sees -lam.
    const RealMat hess = net->lagrangian_hessian(xb.head(n), -lam);
    for (std::size_t k = 0; k < hr.size(); ++k) {
      values[static_cast<Eigen::Index>(k)] =
          hess(hr[k], hc[k]);
    }
  };

  p.add_block(std::move(blk));

  EmbedHandle h;
  h.formulation = Formulation::ReducedSpace;
  h.input_vars = input_vars;
  h.output_vars = y_vars;
  return h;
}

}  // namespace gbopt
