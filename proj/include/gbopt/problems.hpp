#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbopt/formulations.hpp"
#include "gbopt/nlp.hpp"
#include "gbopt/nn.hpp"

namespace gbopt {

// Minimal-perturbation attack on a classifier: find the closest image (in
// L1) to x_ref that the network assigns to `target` with at least
// `confidence` probability.
struct AdversarialSpec {
  NeuralNet classifier;
  RealVec x_ref;  // entries in [0, 1]
  Eigen::Index target = 0;
  double confidence = 0.6;
  Formulation formulation = Formulation::ReducedSpace;
};

// Economic dispatch with a frequency-security surrogate: choose generations
// p within limits, meeting total demand, such that the surrogate net
// (inputs: generations then demands) predicts every bus frequency at or
// above the floor eta.
struct DispatchSpec {
  NeuralNet surrogate;
  RealVec cost_a, cost_b, cost_c;  // objective sum a_i p_i^2 + b_i p_i + c_i
  RealVec p_min, p_max;
  RealVec demand;  // fixed; pinned as network inputs
  double eta = 59.4;
  Formulation formulation = Formulation::ReducedSpace;
};

// A built instance plus the bookkeeping callers need to interpret the
// solution: which variables are the primary decisions (pixels or
// generations) and where the network lives.
struct BuiltProblem {
  NlpProblem problem;
  EmbedHandle embed;
  std::vector<Eigen::Index> main_vars;
  bool degenerate = false;  // solution already known to be the start point
  std::string warning;      // human-readable note when degenerate
};

// Variable layout: pixels x [0, n), then u [n, 2n) and v [2n, 3n) splitting
// x - x_ref = u - v with objective sum(u + v), then the x <= 1 slacks, the
// embedded network, and one confidence slack. The start point is x = x_ref
// with every constraint satisfied exactly.
BuiltProblem build_adversarial(const AdversarialSpec& spec);

// Variable layout: generations p [0, G), pinned demand inputs [G, G + D),
// then the p <= p_max slacks, the embedded network, and the frequency-row
// slacks. The start spreads total demand across generators proportionally,
// so the balance row holds at the initial point.
BuiltProblem build_dispatch(const DispatchSpec& spec);

// One row of pixel values in [0, 1]: comma-separated text, or an IDX
// ubyte image file (first image taken, bytes mapped to [0, 1] by /255).
// Out-of-range values are an error, never clamped.
RealVec load_reference_input(const std::string& path);
void save_image_csv(const RealVec& x, const std::string& path);

// Deterministic synthetic "image": a seeded sinusoid over the pixel index,
// strictly inside (0, 1).
RealVec make_reference_image(Eigen::Index n, std::uint64_t seed);

// Seeded surrogate whose output surface straddles eta inside the input box
// [in_lo, in_hi]: hidden tanh layers, final Linear layer rescaled so each
// output has mean eta + 0.15 and spread ~0.3 over the box, then shifted up
// if needed so at least one sampled box point satisfies every row. This
// makes the frequency constraints active-but-feasible, the regime the
// dispatch comparison is about.
NeuralNet make_dispatch_surrogate(const std::vector<Eigen::Index>& widths,
                                  const RealVec& in_lo, const RealVec& in_hi,
                                  double eta, std::uint64_t seed);

// Fully populated seeded instances (net, data and all); the same seed gives
// bitwise-identical specs, and the formulation tag never affects the data.
AdversarialSpec make_seeded_adversarial(
    Eigen::Index input_dim, const std::vector<Eigen::Index>& hidden,
    Eigen::Index classes, Eigen::Index target, double confidence,
    Formulation formulation, std::uint64_t seed);

DispatchSpec make_seeded_dispatch(Eigen::Index n_gen, Eigen::Index n_demand,
                                  Eigen::Index n_bus,
                                  const std::vector<Eigen::Index>& hidden,
                                  Formulation formulation, std::uint64_t seed);

}  // namespace gbopt
