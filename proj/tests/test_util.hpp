#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "pedgen/rng.hpp"
#include "pedgen/tensor.hpp"

namespace testutil {

inline pedgen::Tensor random_tensor(pedgen::Shape shape, pedgen::Rng& rng, double scale = 1.0,
                                    bool requires_grad = false) {
  std::vector<double> v(static_cast<size_t>(pedgen::shape_size(shape)));
  for (auto& x : v) x = scale * rng.uniform(-1.0, 1.0);
  return pedgen::Tensor::leaf(std::move(shape), std::move(v), requires_grad);
}

// Central finite differences of a scalar-valued rebuild against analytic
// grads. `loss_fn` must rebuild the graph from the leaf's current values.
// Returns the worst relative error over all checked coordinates.
inline double grad_check(const std::function<pedgen::Tensor()>& loss_fn, pedgen::Tensor leaf,
                         double eps = 1e-5, int max_coords = 64) {
  leaf.zero_grad();
  pedgen::Tensor loss = loss_fn();
  loss.backward();
  std::vector<double> analytic = leaf.grad();
  leaf.zero_grad();

  auto& vals = leaf.mutable_values();
  const int64_t n = static_cast<int64_t>(vals.size());
  const int64_t stride = n <= max_coords ? 1 : n / max_coords;
  double worst = 0.0;
  for (int64_t i = 0; i < n; i += stride) {
    const double saved = vals[static_cast<size_t>(i)];
    vals[static_cast<size_t>(i)] = saved + eps;
    const double up = loss_fn().item();
    vals[static_cast<size_t>(i)] = saved - eps;
    const double down = loss_fn().item();
    vals[static_cast<size_t>(i)] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::fabs(numeric), std::fabs(analytic[static_cast<size_t>(i)]), 1e-6});  // floor absorbs FD cancellation noise
    worst = std::max(worst, std::fabs(numeric - analytic[static_cast<size_t>(i)]) / denom);
  }
  return worst;
}

}  // namespace testutil
