#include "gbopt/nn.hpp"

#include <cmath>
#include <utility>

#include "gbopt/prng.hpp"

namespace gbopt {

namespace {

RealVec softmax(const RealVec& z) {
  // Shift by the max so exp never overflows; exact in real arithmetic.
  RealVec y = (z.array() - z.maxCoeff()).exp();
  y /= y.sum();
  return y;
}

}  // namespace

const char* activation_name(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Linear:
      return "linear";
    case ActivationKind::Tanh:
      return "tanh";
    case ActivationKind::Sigmoid:
      return "sigmoid";
    case ActivationKind::Softmax:
      return "softmax";
  }
  return "unknown";
}

ActivationKind activation_from_name(const std::string& name) {
  if (name == "linear") return ActivationKind::Linear;
  if (name == "tanh") return ActivationKind::Tanh;
  if (name == "sigmoid") return ActivationKind::Sigmoid;
  if (name == "softmax") return ActivationKind::Softmax;
  throw StructuralError("unknown activation name: " + name);
}

void activation_elementwise(ActivationKind kind, const RealVec& z, RealVec* y,
                            RealVec* d1, RealVec* d2) {
  const Eigen::Index n = z.size();
  switch (kind) {
    case ActivationKind::Linear:
      if (y) *y = z;
      if (d1) *d1 = RealVec::Ones(n);
      if (d2) *d2 = RealVec::Zero(n);
      return;
    case ActivationKind::Tanh: {
      const RealVec t = z.array().tanh();
      if (y) *y = t;
      if (d1) *d1 = 1.0 - t.array().square();
      if (d2) *d2 = -2.0 * t.array() * (1.0 - t.array().square());
      return;
    }
    case ActivationKind::Sigmoid: {
      const RealVec s = 0.5 * (0.5 * z.array()).tanh() + 0.5;
      if (y) *y = s;
      const auto sp = s.array() * (1.0 - s.array());
      if (d1) *d1 = sp;
      if (d2) *d2 = sp * (1.0 - 2.0 * s.array());
      return;
    }
    case ActivationKind::Softmax:
      throw StructuralError(
          "activation_elementwise: softmax couples the whole layer");
  }
  throw StructuralError("activation_elementwise: bad activation kind");
}

NeuralNet::NeuralNet(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) {
    throw StructuralError("NeuralNet: at least one layer required");
  }
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& lay = layers_[l];
    if (lay.weight.rows() == 0 || lay.weight.cols() == 0) {
      throw StructuralError("NeuralNet: layer " + std::to_string(l) +
                            " has an empty weight matrix");
    }
    if (lay.weight.rows() != lay.bias.size()) {
      throw StructuralError("NeuralNet: layer " + std::to_string(l) +
                            " weight rows != bias length");
    }
    if (l > 0 && lay.weight.cols() != layers_[l - 1].weight.rows()) {
      throw StructuralError("NeuralNet: layer " + std::to_string(l) +
                            " input width does not chain");
    }
    if (!lay.weight.allFinite() || !lay.bias.allFinite()) {
      throw NumericError("NeuralNet: layer " + std::to_string(l) +
                         " has non-finite entries");
    }
    if (lay.activation == ActivationKind::Softmax &&
        l + 1 != layers_.size()) {
      throw StructuralError(
          "NeuralNet: softmax is only supported on the final layer");
    }
    param_count_ += lay.weight.size() + lay.bias.size();
  }
}

void NeuralNet::check_input(const RealVec& x) const {
  if (x.size() != input_dim()) {
    throw StructuralError("NeuralNet: input has length " +
                          std::to_string(x.size()) + ", expected " +
                          std::to_string(input_dim()));
  }
}

RealVec NeuralNet::forward(const RealVec& x) const {
  check_input(x);
  RealVec y = x;
  for (const Layer& lay : layers_) {
    RealVec z = lay.weight * y + lay.bias;
    if (lay.activation == ActivationKind::Softmax) {
      y = softmax(z);
    } else {
      activation_elementwise(lay.activation, z, &y, nullptr, nullptr);
    }
  }
  return y;
}

ForwardTrace NeuralNet::forward_trace(const RealVec& x) const {
  check_input(x);
  ForwardTrace t;
  t.z.reserve(layers_.size());
  t.y.reserve(layers_.size());
  const RealVec* prev = &x;
  for (const Layer& lay : layers_) {
    t.z.push_back(lay.weight * (*prev) + lay.bias);
    if (lay.activation == ActivationKind::Softmax) {
      t.y.push_back(softmax(t.z.back()));
    } else {
      RealVec y;
      activation_elementwise(lay.activation, t.z.back(), &y, nullptr,
                             nullptr);
      t.y.push_back(std::move(y));
    }
    prev = &t.y.back();
  }
  return t;
}

RealMat NeuralNet::jacobian(const RealVec& x) const {
  const ForwardTrace t = forward_trace(x);
  const Eigen::Index m = output_dim();
  // G accumulates d(output)/d(y_l) right to left.
  RealMat g = RealMat::Identity(m, m);
  for (Eigen::Index l = layer_count() - 1; l >= 0; --l) {
    const Layer& lay = layers_[static_cast<size_t>(l)];
    const RealVec& z = t.z[static_cast<size_t>(l)];
    if (lay.activation == ActivationKind::Softmax) {
      // G J_softmax with J = diag(y) - y y^T.
      const RealVec& y = t.y[static_cast<size_t>(l)];
      const RealVec gy = g * y;
      g = g.array().rowwise() * y.transpose().array();
      g.noalias() -= gy * y.transpose();
    } else {
      RealVec d1;
      activation_elementwise(lay.activation, z, nullptr, &d1, nullptr);
      g = g.array().rowwise() * d1.transpose().array();
    }
    g = g * lay.weight;
  }
  return g;
}

RealVec NeuralNet::lagrangian_gradient(const RealVec& x,
                                       const RealVec& lambda) const {
  if (lambda.size() != output_dim()) {
    throw StructuralError("lagrangian_gradient: lambda has length " +
                          std::to_string(lambda.size()) + ", expected " +
                          std::to_string(output_dim()));
  }
  const ForwardTrace t = forward_trace(x);
  RealVec g = lambda;
  for (Eigen::Index l = layer_count() - 1; l >= 0; --l) {
    const Layer& lay = layers_[static_cast<size_t>(l)];
    if (lay.activation == ActivationKind::Softmax) {
      const RealVec& y = t.y[static_cast<size_t>(l)];
      const double s = y.dot(g);
      g = (y.array() * g.array()).matrix() - s * y;
    } else {
      RealVec d1;
      activation_elementwise(lay.activation, t.z[static_cast<size_t>(l)],
                             nullptr, &d1, nullptr);
      g = g.cwiseProduct(d1);
    }
    g = lay.weight.transpose() * g;
  }
  return g;
}

RealMat NeuralNet::lagrangian_hessian(const RealVec& x,
                                      const RealVec& lambda) const {
  if (lambda.size() != output_dim()) {
    throw StructuralError("lagrangian_hessian: lambda has length " +
                          std::to_string(lambda.size()) + ", expected " +
                          std::to_string(output_dim()));
  }
  check_input(x);
  const Eigen::Index n = input_dim();
  const Eigen::Index nl = layer_count();

  // Forward sweep carrying tangents for all n unit directions at once:
  // zd/yd hold d(z_l)/dx and d(y_l)/dx as width x n matrices, so every
  // step is a matrix product rather than n separate sweeps.
  std::vector<RealVec> zs(static_cast<size_t>(nl));
  std::vector<RealVec> ys(static_cast<size_t>(nl));
  std::vector<RealVec> d1s(static_cast<size_t>(nl));
  std::vector<RealVec> d2s(static_cast<size_t>(nl));
  std::vector<RealMat> zds(static_cast<size_t>(nl));

  const RealVec* y_prev = &x;
  RealMat yd = RealMat::Identity(n, n);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const size_t li = static_cast<size_t>(l);
    const Layer& lay = layers_[li];
    zs[li] = lay.weight * (*y_prev) + lay.bias;
    zds[li].noalias() = lay.weight * yd;
    if (lay.activation == ActivationKind::Softmax) {
      ys[li] = softmax(zs[li]);
      const RealVec& y = ys[li];
      // yd = diag(y) zd - y (y^T zd)
      const Eigen::RowVectorXd s = y.transpose() * zds[li];
      yd = zds[li].array().colwise() * y.array();
      yd.noalias() -= y * s;
    } else {
      activation_elementwise(lay.activation, zs[li], &ys[li], &d1s[li],
                             &d2s[li]);
      yd = zds[li].array().colwise() * d1s[li].array();
    }
    y_prev = &ys[li];
  }

  // Reverse sweep of the scalar lambda^T y_L, with the same tangent batch
  // riding along. gd ends up as d(grad)/dx = the Hessian.
  RealVec g = lambda;
  RealMat gd = RealMat::Zero(lambda.size(), n);
  for (Eigen::Index l = nl - 1; l >= 0; --l) {
    const size_t li = static_cast<size_t>(l);
    const Layer& lay = layers_[li];
    RealVec gz;
    RealMat gzd;
    if (lay.activation == ActivationKind::Softmax) {
      const RealVec& y = ys[li];
      const RealMat& yd_l = yd;  // tangent of y at this layer
      const double s1 = y.dot(g);
      // g_z = y .* g - (y^T g) y; product rule in the tangent direction.
      gz = (y.array() * g.array()).matrix() - s1 * y;
      const Eigen::RowVectorXd r1 = g.transpose() * yd_l;
      const Eigen::RowVectorXd r2 = y.transpose() * gd;
      gzd = yd_l.array().colwise() * g.array();
      gzd += (gd.array().colwise() * y.array()).matrix();
      gzd.noalias() -= yd_l * s1;
      gzd.noalias() -= y * (r1 + r2);
    } else {
      const RealVec& d1 = d1s[li];
      const RealVec gd2 = g.cwiseProduct(d2s[li]);
      gz = g.cwiseProduct(d1);
      gzd = zds[li].array().colwise() * gd2.array();
      gzd += (gd.array().colwise() * d1.array()).matrix();
    }
    g = lay.weight.transpose() * gz;
    gd.noalias() = lay.weight.transpose() * gzd;
    if (l > 0) {
      // Tangent of y_{l-1} for the next (earlier) layer's product rule.
      const size_t pi = li - 1;
      if (layers_[pi].activation == ActivationKind::Softmax) {
        const RealVec& y = ys[pi];
        const Eigen::RowVectorXd s = y.transpose() * zds[pi];
        yd = zds[pi].array().colwise() * y.array();
        yd.noalias() -= y * s;
      } else {
        yd = zds[pi].array().colwise() * d1s[pi].array();
      }
    }
  }

  RealMat h = gd;
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  const double asym = (h - h.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw NumericError("lagrangian_hessian: asymmetry " +
                       std::to_string(asym) + " exceeds tolerance");
  }
  return 0.5 * (h + h.transpose());
}

ActivationDerivs activation_value_jac_hess(ActivationKind kind,
                                           const RealVec& z) {
  if (!z.allFinite()) {
    throw NumericError("activation_value_jac_hess: non-finite input");
  }
  const Eigen::Index n = z.size();
  ActivationDerivs out;
  if (kind == ActivationKind::Softmax) {
    const RealVec y = softmax(z);
    out.value = y;
    out.jac = RealMat(y.asDiagonal());
    out.jac.noalias() -= y * y.transpose();
    out.hess.assign(static_cast<size_t>(n), RealMat::Zero(n, n));
    // T_ijk = y_i [ d_ij d_ik - d_ij y_k - d_ik y_j - d_jk y_j
    //               + 2 y_j y_k ]
    for (Eigen::Index i = 0; i < n; ++i) {
      RealMat& h = out.hess[static_cast<size_t>(i)];
      const double yi = y(i);
      for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index k = 0; k < n; ++k) {
          double v = 2.0 * y(j) * y(k);
          if (i == j && i == k) v += 1.0;
          if (i == j) v -= y(k);
          if (i == k) v -= y(j);
          if (j == k) v -= y(j);
          h(j, k) = yi * v;
        }
      }
    }
  } else {
    RealVec y, d1, d2;
    activation_elementwise(kind, z, &y, &d1, &d2);
    out.value = y;
    out.jac = RealMat(d1.asDiagonal());
    out.hess.assign(static_cast<size_t>(n), RealMat::Zero(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      out.hess[static_cast<size_t>(i)](i, i) = d2(i);
    }
  }
  return out;
}

NeuralNet random_net(const std::vector<Eigen::Index>& widths,
                     ActivationKind hidden, ActivationKind final_act,
                     std::uint64_t seed) {
  if (widths.size() < 2) {
    throw StructuralError("random_net: need at least input and output width");
  }
  Prng rng(seed);
  std::vector<Layer> layers;
  layers.reserve(widths.size() - 1);
  for (size_t l = 1; l < widths.size(); ++l) {
    const Eigen::Index rows = widths[l];
    const Eigen::Index cols = widths[l - 1];
    if (rows <= 0 || cols <= 0) {
      throw StructuralError("random_net: widths must be positive");
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Layer lay;
    lay.weight.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        lay.weight(r, c) = rng.uniform(-bound, bound);
      }
    }
    lay.bias.resize(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      lay.bias(r) = rng.uniform(-bound, bound);
    }
    lay.activation = (l + 1 == widths.size()) ? final_act : hidden;
    layers.push_back(std::move(lay));
  }
  return NeuralNet(std::move(layers));
}

}  // namespace gbopt
