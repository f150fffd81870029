#include "pedgen/nn.hpp"

#include <cmath>

#include "pedgen/common.hpp"

namespace pedgen {

Tensor& ParamMap::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ContractError("ParamMap: duplicate parameter " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamMap::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamMap: unknown parameter " + name);
  return items_[it->second].second;
}

const Tensor& ParamMap::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("ParamMap: unknown parameter " + name);
  return items_[it->second].second;
}

bool ParamMap::contains(const std::string& name) const { return index_.count(name) > 0; }

std::vector<std::pair<std::string, Tensor>> ParamMap::with_prefix(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : items_)
    if (name.rfind(prefix, 0) == 0) out.emplace_back(name, t);
  return out;
}

void ParamMap::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

Tensor normal_init(Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)));
  for (auto& x : v) x = stddev * rng.normal();
  return Tensor::leaf(std::move(shape), std::move(v), /*requires_grad=*/true);
}

Tensor zeros_init(Shape shape) { return Tensor::zeros(std::move(shape), /*requires_grad=*/true); }

Tensor scaled_init(Shape shape, int fan_in, Rng& rng) {
  return normal_init(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

Linear::Linear(int in, int out, Rng& rng, ParamMap& params, const std::string& name) {
  weight = params.add(name + ".w", scaled_init({in, out}, in, rng));
  bias = params.add(name + ".b", zeros_init({out}));
}

Tensor Linear::forward(const Tensor& x) const { return add_rowvec(matmul(x, weight), bias); }

Tensor Linear::forward_vec(const Tensor& x) const {
  Tensor row = reshape(x, {1, x.dim(0)});
  return reshape(forward(row), {weight.dim(1)});
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng, ParamMap& params,
               const std::string& name)
    : stride(stride_), pad(pad_) {
  weight = params.add(name + ".w", scaled_init({cout, cin, k, k}, cin * k * k, rng));
  bias = params.add(name + ".b", zeros_init({cout}));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<std::pair<std::string, Tensor>>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, tensor] : params) {
    Tensor t = tensor;
    if (!t.has_grad()) continue;
    const auto& g = t.grad();
    Slot& slot = slots_[name];
    if (slot.m.empty()) {
      slot.m.assign(g.size(), 0.0);
      slot.v.assign(g.size(), 0.0);
    }
    auto& val = t.mutable_values();
    for (size_t i = 0; i < g.size(); ++i) {
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace pedgen
