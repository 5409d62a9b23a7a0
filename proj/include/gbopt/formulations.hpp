#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbopt/nlp.hpp"
#include "gbopt/nn.hpp"

namespace gbopt {

enum class Formulation : std::uint8_t {
  FullSpace = 0,
  ReducedSpace = 1,
};

const char* formulation_name(Formulation f);
Formulation formulation_from_name(const std::string& name);

// Variable index ranges of one unrolled layer: pre-activations
// [z_begin, z_begin + width) and post-activations [y_begin, y_begin + width).
struct LayerVarRange {
  Eigen::Index z_begin = 0;
  Eigen::Index y_begin = 0;
  Eigen::Index width = 0;
};

// What an embedding added to the host problem. output_vars are the variables
// carrying the network output (the last layer's y range in full space, the
// fresh y block in reduced space).
struct EmbedHandle {
  Formulation formulation = Formulation::FullSpace;
  std::vector<Eigen::Index> input_vars;
  std::vector<Eigen::Index> output_vars;
  std::vector<LayerVarRange> layers;  // full space only; empty otherwise
};

// Structural size of a problem, read off the declared sparsity patterns
// (assembled-matrix semantics: duplicate coordinates counted once). No
// oracle is evaluated; the counts are independent of the iterate.
struct FormulationStats {
  Eigen::Index n_var = 0;
  Eigen::Index n_con = 0;
  Eigen::Index jac_nnz = 0;
  Eigen::Index hess_nnz = 0;
};

FormulationStats formulation_stats(const NlpProblem& p);

// Unrolls the network layer by layer: per layer two fresh variable vectors
// z_l, y_l (free, initialized by a forward pass from the input variables'
// initial values so every constraint holds at the start) and two equality
// blocks, z_l - W_l y_{l-1} - b_l = 0 and y_l - sigma_l(z_l) = 0. Grows the
// problem by 2 * sum(n_l) variables and as many constraints.
EmbedHandle embed_full_space(NlpProblem& p, const NeuralNet& nn,
                             const std::vector<Eigen::Index>& input_vars);

// Adds m output variables y (initialized to the forward value) and a single
// arity-m block y - NN(x) = 0. The Jacobian pattern is dense over the
// inputs plus an identity on y; the Hessian pattern is the dense lower
// triangle over the inputs only (y enters linearly). Second derivatives
// come from the network's Lagrangian Hessian oracle, which receives the
// negated block multipliers to match L = f + lambda^T (y - NN(x)).
EmbedHandle embed_reduced_space(NlpProblem& p, const NeuralNet& nn,
                                const std::vector<Eigen::Index>& input_vars);

}  // namespace gbopt
