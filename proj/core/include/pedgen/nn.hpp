#pragma once

#include <map>
#include <string>
#include <vector>

#include "pedgen/rng.hpp"
#include "pedgen/tensor.hpp"

namespace pedgen {

// Ordered, named collection of trainable leaf tensors. Iteration order is the
// registration order, which fixes optimizer-update and checkpoint layouts.
class ParamMap {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  size_t count() const { return items_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  // All parameters whose name starts with `prefix` (registration order).
  std::vector<std::pair<std::string, Tensor>> with_prefix(const std::string& prefix) const;

  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, size_t> index_;
};

// ---- initializers ----
Tensor normal_init(Shape shape, double stddev, Rng& rng);
Tensor zeros_init(Shape shape);
// fan-in scaled gaussian, the usual conv/linear default here
Tensor scaled_init(Shape shape, int fan_in, Rng& rng);

// ---- layers ----
// y = x W + b with x (B,in), W (in,out), b (out).
struct Linear {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
  Linear() = default;
  Linear(int in, int out, Rng& rng, ParamMap& params, const std::string& name);
  Tensor forward(const Tensor& x) const;          // (B,in) -> (B,out)
  Tensor forward_vec(const Tensor& x) const;      // (in)   -> (out)
};

struct Conv2d {
  Tensor weight;  // (Cout,Cin,k,k)
  Tensor bias;    // (Cout)
  int stride = 1;
  int pad = 1;
  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng, ParamMap& params,
         const std::string& name);
  Tensor forward(const Tensor& x) const;
};

// ---- optimizer ----
// Adam over a fixed parameter family. Moment buffers are addressed by
// parameter name so they survive checkpoint round-trips.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps = 1e-8);

  // Applies one update using the accumulated grads, then leaves grads intact
  // (callers zero them). Parameters with no grad are skipped.
  void step(const std::vector<std::pair<std::string, Tensor>>& params);

  struct Slot {
    std::vector<double> m, v;
  };
  int64_t t() const { return t_; }
  double lr() const { return lr_; }

  // checkpoint access
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  double lr_ = 2e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace pedgen
