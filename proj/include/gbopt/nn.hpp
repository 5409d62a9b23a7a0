#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbopt/errors.hpp"
#include "gbopt/linalg.hpp"

namespace gbopt {

enum class ActivationKind : std::uint8_t {
  Linear = 0,
  Tanh = 1,
  Sigmoid = 2,
  Softmax = 3,
};

const char* activation_name(ActivationKind kind);
ActivationKind activation_from_name(const std::string& name);

struct Layer {
  RealMat weight;  // out_dim x in_dim
  RealVec bias;    // out_dim
  ActivationKind activation = ActivationKind::Linear;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

// Per-layer values of one forward pass: z[l] = W_l y[l-1] + b_l (with
// y[-1] = x) and y[l] = sigma_l(z[l]).
struct ForwardTrace {
  std::vector<RealVec> z;
  std::vector<RealVec> y;
};

// Sequential dense network y = sigma_L(W_L ... sigma_1(W_1 x + b_1) ...).
// Immutable after construction; all oracle calls are pure.
class NeuralNet {
public:
  // Validates: at least one layer, chained widths, finite entries, and
  // Softmax only in the final position (it couples a whole layer, and
  // keeping it last bounds the size of its derivative tensors).
  explicit NeuralNet(std::vector<Layer> layers);

  Eigen::Index input_dim() const { return layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.back().out_dim(); }
  Eigen::Index layer_count() const {
    return static_cast<Eigen::Index>(layers_.size());
  }
  Eigen::Index param_count() const { return param_count_; }
  const Layer& layer(Eigen::Index l) const {
    return layers_[static_cast<size_t>(l)];
  }
  const std::vector<Layer>& layers() const { return layers_; }

  RealVec forward(const RealVec& x) const;
  ForwardTrace forward_trace(const RealVec& x) const;

  // Dense m x n Jacobian by reverse-mode accumulation, all output rows in
  // one backward sweep.
  RealMat jacobian(const RealVec& x) const;

  // Gradient of lambda^T NN(x): one reverse sweep, the unit of cost the
  // Hessian below is measured against.
  RealVec lagrangian_gradient(const RealVec& x, const RealVec& lambda) const;

  // Sum_i lambda_i * Hessian(NN_i) at x, assembled from n Hessian-vector
  // products (forward-mode tangents pushed through the reverse sweep of
  // lambda^T NN). The m x n x n second-derivative tensor is never formed.
  // Result is symmetrized; the asymmetry beforehand must be below
  // 1e-10 * max(1, |H|_max) or a NumericError is raised.
  RealMat lagrangian_hessian(const RealVec& x, const RealVec& lambda) const;

private:
  void check_input(const RealVec& x) const;

  std::vector<Layer> layers_;
  Eigen::Index param_count_ = 0;
};

// Value, Jacobian and second-derivative tensor of one activation applied to
// a pre-activation vector z. hess[i](j, k) = d^2 value_i / dz_j dz_k; for
// elementwise kinds only the (i, i, i) entries are nonzero, for Softmax the
// tensor is dense (width^3 entries, so keep softmax layers narrow).
struct ActivationDerivs {
  RealVec value;
  RealMat jac;
  std::vector<RealMat> hess;
};
ActivationDerivs activation_value_jac_hess(ActivationKind kind,
                                           const RealVec& z);

// Elementwise value and first two derivatives; rejects Softmax.
void activation_elementwise(ActivationKind kind, const RealVec& z, RealVec* y,
                            RealVec* d1, RealVec* d2);

// Fresh network with seeded uniform weights and biases on
// [-1/sqrt(fan_in), +1/sqrt(fan_in)]: nontrivial curvature without
// saturating the activations. widths = [n_0, n_1, ..., n_L]; every layer
// uses `hidden` except the last, which uses `final_act`.
NeuralNet random_net(const std::vector<Eigen::Index>& widths,
                     ActivationKind hidden, ActivationKind final_act,
                     std::uint64_t seed);

// GBNN v1 container (binary, little-endian); paths ending in .json use the
// JSON mirror with the same field names. Round trips are bit-exact.
NeuralNet load_weights(const std::string& path);
void save_weights(const NeuralNet& nn, const std::string& path);

}  // namespace gbopt
