#pragma once

// Central finite-difference check of GATv2Model::backward.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "graphsym/gatv2.hpp"

namespace graphsym::testing {

struct GradCheckResult {
  std::size_t checked = 0;
  std::size_t excluded = 0;  // stencil straddles a ReLU / leaky-ReLU kink
  double max_rel_error = 0.0;
};

/// Sign of every ReLU and leaky-ReLU argument in a forward pass.
inline std::vector<char> kink_signature(const detail::ForwardCache& c) {
  std::vector<char> sig;
  auto add = [&](const RowMat& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) sig.push_back(m.data()[i] > 0.0);
  };
  add(c.enc_pre);
  for (const auto& l : c.layers) {
    add(l.z);
    add(l.bn_out);
  }
  return sig;
}

/*! Compares analytic and central-difference gradients on a random `fraction`
    of parameters. The loss is piecewise smooth; a parameter whose +-eps
    evaluations differ in any activation sign pattern has a kink inside the
    stencil, where the difference quotient is not a derivative estimate, so
    it is counted in `excluded` instead of the error. Relative error uses
    max(|analytic|, |numeric|, floor) as the denominator. */
inline GradCheckResult gradient_check(GATv2Model& m, const GraphBatch& b, bool training, double fraction,
                                      std::uint64_t seed, double eps = 1e-5, double floor = 1e-6) {
  detail::ForwardCache c;
  RowMat y = m.forward(b, training, nullptr, &c);
  auto grad = m.backward(b, c, GATv2Model::loss_grad(y, b.y));
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (std::size_t i = 0; i < m.num_params(); ++i) {
    if (detail::unit_draw(rng) >= fraction) continue;
    auto idx = static_cast<Eigen::Index>(i);
    const double keep = m.params()[idx];
    detail::ForwardCache cu, cd;
    m.params()[idx] = keep + eps;
    const double up = GATv2Model::loss(m.forward(b, training, nullptr, &cu), b.y);
    m.params()[idx] = keep - eps;
    const double down = GATv2Model::loss(m.forward(b, training, nullptr, &cd), b.y);
    m.params()[idx] = keep;
    ++r.checked;
    if (kink_signature(cu) != kink_signature(cd)) {
      ++r.excluded;
      continue;
    }
    const double num = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(num), std::abs(grad[idx]), floor});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(num - grad[idx]) / denom);
  }
  return r;
}

}  // namespace graphsym::testing
