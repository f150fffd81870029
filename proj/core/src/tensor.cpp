#include "pedgen/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pedgen {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

namespace detail {
void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Tensor basics

Tensor Tensor::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != static_cast<int64_t>(values.size()))
    throw ContractError("Tensor::leaf: shape " + shape_str(shape) + " does not match value count");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  n->is_leaf = true;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(static_cast<size_t>(shape_size(shape)), value);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return leaf({1}, {v}, requires_grad); }

Tensor Tensor::make(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                    std::function<void(detail::Node&)> backward) {
  if (shape_size(shape) != static_cast<int64_t>(values.size()))
    throw ContractError("Tensor::make: shape/value mismatch");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  bool req = false;
  n->parents.reserve(parents.size());
  for (const auto& p : parents) {
    req = req || p.requires_grad();
    n->parents.push_back(p.node_);
  }
  n->requires_grad = req;
  if (req) n->backward = std::move(backward);
  return Tensor(std::move(n));
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
int64_t Tensor::size() const { return static_cast<int64_t>(node_->value.size()); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
  if (!node_->is_leaf) throw ContractError("mutable_values: only leaf tensors may be mutated");
  return node_->value;
}

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.size() != node_->value.size())
    throw ContractError("grad: no gradient present (run backward first)");
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = node_->shape;
  if (idx.size() != s.size()) throw ContractError("at: rank mismatch");
  int64_t off = 0;
  auto it = idx.begin();
  for (size_t i = 0; i < s.size(); ++i, ++it) {
    if (*it < 0 || *it >= s[i]) throw ContractError("at: index out of range");
    off = off * s[i] + *it;
  }
  return node_->value[static_cast<size_t>(off)];
}

Tensor Tensor::detach() const {
  return Tensor::leaf(node_->shape, node_->value, /*requires_grad=*/false);
}

void Tensor::backward() {
  if (size() != 1) throw ContractError("backward: output must be scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS over grad-requiring ancestry.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Frame {
    detail::Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      detail::Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// helpers

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

detail::Node* parent(detail::Node& self, size_t i) { return self.parents[i].get(); }

// Unary elementwise op with dy/dx given by `dfn(x, y)`.
template <typename Fn, typename DFn>
Tensor unary_op(const Tensor& a, Fn fn, DFn dfn) {
  std::vector<double> out(a.values().size());
  const auto& x = a.values();
  for (size_t i = 0; i < x.size(); ++i) out[i] = fn(x[i]);
  return Tensor::make(a.shape(), std::move(out), {a}, [dfn](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.value.size(); ++i)
      p->grad[i] += self.grad[i] * dfn(p->value[i], self.value[i]);
  });
}

}  // namespace

// ---------------------------------------------------------------------------
// elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    for (int k = 0; k < 2; ++k) {
      detail::Node* p = parent(self, static_cast<size_t>(k));
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  return Tensor::make(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] / pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i)
        pb->grad[i] -= self.grad[i] * pa->value[i] / (pb->value[i] * pb->value[i]);
    }
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor scale_by(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ContractError("scale_by: scale must be a scalar tensor");
  const double sv = s.values()[0];
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = sv * a.values()[i];
  return Tensor::make(a.shape(), std::move(out), {a, s}, [](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* ps = parent(self, 1);
    if (pa->requires_grad) {
      pa->ensure_grad();
      const double sv = ps->value[0];
      for (size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * sv;
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      double acc = 0.0;
      for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa->value[i];
      ps->grad[0] += acc;
    }
  });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                  [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary_op(a, [slope](double x) { return x > 0 ? x : slope * x; },
                  [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(a, [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary_op(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

// ---------------------------------------------------------------------------
// shape / assembly

Tensor reshape(const Tensor& a, Shape s) {
  if (shape_size(s) != a.size())
    throw ContractError("reshape: size mismatch " + shape_str(a.shape()) + " -> " + shape_str(s));
  return Tensor::make(std::move(s), a.values(), {a}, [](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

Tensor transpose(const Tensor& a) {
  if (a.shape().size() != 2) throw ContractError("transpose: 2-D only");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(static_cast<size_t>(r) * c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(j) * r + i] = a.values()[static_cast<size_t>(i) * c + j];
  return Tensor::make({c, r}, std::move(out), {a}, [r, c](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        p->grad[static_cast<size_t>(i) * c + j] += self.grad[static_cast<size_t>(j) * r + i];
  });
}

namespace {
// Flatten a shape around `axis` into (outer, len, inner).
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& len, int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  len = s[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) throw ContractError("concat: bad axis");
  int64_t total_len = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ContractError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != s0[i])
        throw ContractError("concat: shape mismatch off-axis");
    total_len += s[static_cast<size_t>(axis)];
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = static_cast<int>(total_len);

  int64_t outer, len0, inner;
  axis_split(out_shape, axis, outer, len0, inner);
  std::vector<double> out(static_cast<size_t>(shape_size(out_shape)));
  std::vector<int64_t> offsets;  // per-part start along axis
  int64_t run = 0;
  for (const auto& p : parts) {
    offsets.push_back(run);
    int64_t plen = p.shape()[static_cast<size_t>(axis)];
    for (int64_t o = 0; o < outer; ++o) {
      const double* src = p.values().data() + o * plen * inner;
      double* dst = out.data() + (o * total_len + run) * inner;
      std::copy(src, src + plen * inner, dst);
    }
    run += plen;
  }

  return Tensor::make(out_shape, std::move(out), parts,
                      [axis, outer, inner, total_len, offsets](detail::Node& self) {
                        for (size_t k = 0; k < self.parents.size(); ++k) {
                          detail::Node* p = parent(self, k);
                          if (!p->requires_grad) continue;
                          p->ensure_grad();
                          int64_t plen = p->shape[static_cast<size_t>(axis)];
                          for (int64_t o = 0; o < outer; ++o) {
                            const double* g = self.grad.data() + (o * total_len + offsets[k]) * inner;
                            double* dst = p->grad.data() + o * plen * inner;
                            for (int64_t i = 0; i < plen * inner; ++i) dst[i] += g[i];
                          }
                        }
                      });
}

Tensor slice(const Tensor& a, int axis, int start, int end) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ContractError("slice: bad axis");
  if (start < 0 || end > s[static_cast<size_t>(axis)] || start >= end)
    throw ContractError("slice: bad range");
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = end - start;
  int64_t outer, len, inner;
  axis_split(s, axis, outer, len, inner);
  const int64_t olen = end - start;
  std::vector<double> out(static_cast<size_t>(outer * olen * inner));
  for (int64_t o = 0; o < outer; ++o) {
    const double* src = a.values().data() + (o * len + start) * inner;
    std::copy(src, src + olen * inner, out.data() + o * olen * inner);
  }
  return Tensor::make(out_shape, std::move(out), {a},
                      [axis, outer, len, inner, start, olen](detail::Node& self) {
                        detail::Node* p = parent(self, 0);
                        if (!p->requires_grad) return;
                        p->ensure_grad();
                        for (int64_t o = 0; o < outer; ++o) {
                          const double* g = self.grad.data() + o * olen * inner;
                          double* dst = p->grad.data() + (o * len + start) * inner;
                          for (int64_t i = 0; i < olen * inner; ++i) dst[i] += g[i];
                        }
                      });
}

Tensor stack0(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("stack0: no inputs");
  const Shape& s0 = parts[0].shape();
  for (const auto& p : parts)
    if (p.shape() != s0) throw ContractError("stack0: shape mismatch");
  Shape out_shape;
  out_shape.push_back(static_cast<int>(parts.size()));
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  const int64_t chunk = shape_size(s0);
  std::vector<double> out(static_cast<size_t>(chunk * static_cast<int64_t>(parts.size())));
  for (size_t k = 0; k < parts.size(); ++k)
    std::copy(parts[k].values().begin(), parts[k].values().end(),
              out.begin() + static_cast<int64_t>(k) * chunk);
  return Tensor::make(out_shape, std::move(out), parts, [chunk](detail::Node& self) {
    for (size_t k = 0; k < self.parents.size(); ++k) {
      detail::Node* p = parent(self, k);
      if (!p->requires_grad) continue;
      p->ensure_grad();
      const double* g = self.grad.data() + static_cast<int64_t>(k) * chunk;
      for (int64_t i = 0; i < chunk; ++i) p->grad[static_cast<size_t>(i)] += g[i];
    }
  });
}

Tensor select0(const Tensor& a, int index) {
  const Shape& s = a.shape();
  if (s.empty() || index < 0 || index >= s[0]) throw ContractError("select0: bad index");
  Shape out_shape(s.begin() + 1, s.end());
  if (out_shape.empty()) out_shape = {1};
  const int64_t chunk = shape_size(out_shape);
  std::vector<double> out(a.values().begin() + index * chunk,
                          a.values().begin() + (index + 1) * chunk);
  return Tensor::make(out_shape, std::move(out), {a}, [index, chunk](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    double* dst = p->grad.data() + static_cast<int64_t>(index) * chunk;
    for (int64_t i = 0; i < chunk; ++i) dst[i] += self.grad[static_cast<size_t>(i)];
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw ContractError("matmul: 2-D operands required");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ContractError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n);
  {
    CMapRM A(a.values().data(), m, k);
    CMapRM B(b.values().data(), k, n);
    MapRM C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return Tensor::make({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    CMapRM G(self.grad.data(), m, n);
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapRM dA(pa->grad.data(), m, k);
      CMapRM B(pb->value.data(), k, n);
      dA.noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapRM dB(pb->grad.data(), k, n);
      CMapRM A(pa->value.data(), m, k);
      dB.noalias() += A.transpose() * G;
    }
  });
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (u.shape().size() != 1 || v.shape().size() != 1) throw ContractError("outer: 1-D only");
  const int m = u.dim(0), n = v.dim(0);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] = u.values()[i] * v.values()[j];
  return Tensor::make({m, n}, std::move(out), {u, v}, [m, n](detail::Node& self) {
    detail::Node* pu = parent(self, 0);
    detail::Node* pv = parent(self, 1);
    if (pu->requires_grad) {
      pu->ensure_grad();
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += self.grad[static_cast<size_t>(i) * n + j] * pv->value[j];
        pu->grad[i] += acc;
      }
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += self.grad[static_cast<size_t>(i) * n + j] * pu->value[i];
        pv->grad[j] += acc;
      }
    }
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 1 || b.shape().size() != 1 || a.size() != b.size())
    throw ContractError("dot: 1-D equal-length operands required");
  double acc = 0.0;
  for (size_t i = 0; i < a.values().size(); ++i) acc += a.values()[i] * b.values()[i];
  return Tensor::make({1}, {acc}, {a, b}, [](detail::Node& self) {
    detail::Node* pa = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    const double g = self.grad[0];
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (size_t i = 0; i < pa->value.size(); ++i) pa->grad[i] += g * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (size_t i = 0; i < pb->value.size(); ++i) pb->grad[i] += g * pa->value[i];
    }
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.shape().size() != 2 || b.shape().size() != 1 || x.dim(1) != b.dim(0))
    throw ContractError("add_rowvec: need (r,c) and (c)");
  const int r = x.dim(0), c = x.dim(1);
  std::vector<double> out(x.values().size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<size_t>(i) * c + j] = x.values()[static_cast<size_t>(i) * c + j] + b.values()[j];
  return Tensor::make(x.shape(), std::move(out), {x, b}, [r, c](detail::Node& self) {
    detail::Node* px = parent(self, 0);
    detail::Node* pb = parent(self, 1);
    if (px->requires_grad) {
      px->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) pb->grad[j] += self.grad[static_cast<size_t>(i) * c + j];
    }
  });
}

Tensor broadcast_cols(const Tensor& v, int cols) {
  if (v.shape().size() != 1) throw ContractError("broadcast_cols: 1-D only");
  const int n = v.dim(0);
  std::vector<double> out(static_cast<size_t>(n) * cols);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(i) * cols + j] = v.values()[i];
  return Tensor::make({n, cols}, std::move(out), {v}, [n, cols](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += self.grad[static_cast<size_t>(i) * cols + j];
      p->grad[i] += acc;
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  return Tensor::make({1}, {acc}, {a}, [](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0];
    for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  return Tensor::make({1}, {acc * inv}, {a}, [inv](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0] * inv;
    for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += g;
  });
}

namespace {
Tensor reduce_axis1(const Tensor& a, bool mean) {
  if (a.shape().size() != 2) throw ContractError("reduce_axis1: 2-D only");
  const int r = a.dim(0), c = a.dim(1);
  const double inv = mean ? 1.0 / c : 1.0;
  std::vector<double> out(static_cast<size_t>(r), 0.0);
  for (int i = 0; i < r; ++i) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += a.values()[static_cast<size_t>(i) * c + j];
    out[static_cast<size_t>(i)] = acc * inv;
  }
  return Tensor::make({r}, std::move(out), {a}, [r, c, inv](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double g = self.grad[static_cast<size_t>(i)] * inv;
      for (int j = 0; j < c; ++j) p->grad[static_cast<size_t>(i) * c + j] += g;
    }
  });
}
}  // namespace

Tensor sum_axis1(const Tensor& a) { return reduce_axis1(a, false); }
Tensor mean_axis1(const Tensor& a) { return reduce_axis1(a, true); }

Tensor softmax_rows(const Tensor& a) {
  if (a.shape().size() != 2) throw ContractError("softmax_rows: 2-D only");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(a.values().size());
  for (int i = 0; i < r; ++i) {
    const double* row = a.values().data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    double* orow = out.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= denom;
  }
  return Tensor::make(a.shape(), std::move(out), {a}, [r, c](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int i = 0; i < r; ++i) {
      const double* y = self.value.data() + static_cast<size_t>(i) * c;
      const double* g = self.grad.data() + static_cast<size_t>(i) * c;
      double gy = 0.0;
      for (int j = 0; j < c; ++j) gy += g[j] * y[j];
      double* dx = p->grad.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) dx[j] += y[j] * (g[j] - gy);
    }
  });
}

// ---------------------------------------------------------------------------
// structured NN ops

namespace {

struct ConvDims {
  int B, Cin, H, W, Cout, kh, kw, stride, pad, Hout, Wout;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  if (x.shape().size() != 4 || w.shape().size() != 4)
    throw ContractError("conv2d: x must be (B,C,H,W), w (Cout,Cin,kh,kw)");
  ConvDims d;
  d.B = x.dim(0);
  d.Cin = x.dim(1);
  d.H = x.dim(2);
  d.W = x.dim(3);
  d.Cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.Cin) throw ContractError("conv2d: channel mismatch");
  d.Hout = (d.H + 2 * pad - d.kh) / stride + 1;
  d.Wout = (d.W + 2 * pad - d.kw) / stride + 1;
  if (d.Hout <= 0 || d.Wout <= 0) throw ContractError("conv2d: empty output");
  return d;
}

// col is (Cin*kh*kw) x (Hout*Wout), row index ordered (c, ky, kx).
void im2col(const double* x, const ConvDims& d, double* col) {
  const int HW = d.Hout * d.Wout;
  for (int c = 0; c < d.Cin; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        double* dst = col + (static_cast<int64_t>(c) * d.kh * d.kw + ky * d.kw + kx) * HW;
        for (int oy = 0; oy < d.Hout; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          for (int ox = 0; ox < d.Wout; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            dst[oy * d.Wout + ox] =
                (iy >= 0 && iy < d.H && ix >= 0 && ix < d.W)
                    ? x[(static_cast<int64_t>(c) * d.H + iy) * d.W + ix]
                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, const ConvDims& d, double* dx) {
  const int HW = d.Hout * d.Wout;
  for (int c = 0; c < d.Cin; ++c) {
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const double* src = col + (static_cast<int64_t>(c) * d.kh * d.kw + ky * d.kw + kx) * HW;
        for (int oy = 0; oy < d.Hout; ++oy) {
          const int iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.H) continue;
          for (int ox = 0; ox < d.Wout; ++ox) {
            const int ix = ox * d.stride - d.pad + kx;
            if (ix < 0 || ix >= d.W) continue;
            dx[(static_cast<int64_t>(c) * d.H + iy) * d.W + ix] += src[oy * d.Wout + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const ConvDims d = conv_dims(x, w, stride, pad);
  if (b.shape().size() != 1 || b.dim(0) != d.Cout) throw ContractError("conv2d: bias shape");
  const int CKK = d.Cin * d.kh * d.kw;
  const int HW = d.Hout * d.Wout;
  std::vector<double> out(static_cast<size_t>(d.B) * d.Cout * HW);
  std::vector<double> col(static_cast<size_t>(CKK) * HW);
  CMapRM Wm(w.values().data(), d.Cout, CKK);
  for (int bi = 0; bi < d.B; ++bi) {
    im2col(x.values().data() + static_cast<int64_t>(bi) * d.Cin * d.H * d.W, d, col.data());
    CMapRM C(col.data(), CKK, HW);
    MapRM O(out.data() + static_cast<int64_t>(bi) * d.Cout * HW, d.Cout, HW);
    O.noalias() = Wm * C;
    for (int co = 0; co < d.Cout; ++co) O.row(co).array() += b.values()[co];
  }
  return Tensor::make({d.B, d.Cout, d.Hout, d.Wout}, std::move(out), {x, w, b},
                      [d, CKK, HW](detail::Node& self) {
                        detail::Node* px = parent(self, 0);
                        detail::Node* pw = parent(self, 1);
                        detail::Node* pb = parent(self, 2);
                        std::vector<double> col(static_cast<size_t>(CKK) * HW);
                        std::vector<double> dcol;
                        CMapRM Wm(pw->value.data(), d.Cout, CKK);
                        if (px->requires_grad) {
                          px->ensure_grad();
                          dcol.resize(static_cast<size_t>(CKK) * HW);
                        }
                        if (pw->requires_grad) pw->ensure_grad();
                        if (pb->requires_grad) pb->ensure_grad();
                        for (int bi = 0; bi < d.B; ++bi) {
                          CMapRM G(self.grad.data() + static_cast<int64_t>(bi) * d.Cout * HW,
                                   d.Cout, HW);
                          if (pw->requires_grad || px->requires_grad)
                            im2col(px->value.data() + static_cast<int64_t>(bi) * d.Cin * d.H * d.W,
                                   d, col.data());
                          if (pw->requires_grad) {
                            MapRM dW(pw->grad.data(), d.Cout, CKK);
                            CMapRM C(col.data(), CKK, HW);
                            dW.noalias() += G * C.transpose();
                          }
                          if (pb->requires_grad) {
                            for (int co = 0; co < d.Cout; ++co) pb->grad[co] += G.row(co).sum();
                          }
                          if (px->requires_grad) {
                            MapRM dC(dcol.data(), CKK, HW);
                            dC.noalias() = Wm.transpose() * G;
                            col2im_accum(dcol.data(), d,
                                         px->grad.data() +
                                             static_cast<int64_t>(bi) * d.Cin * d.H * d.W);
                          }
                        }
                      });
}

Tensor upsample_nearest2(const Tensor& x) {
  if (x.shape().size() != 4) throw ContractError("upsample_nearest2: 4-D only");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> out(static_cast<size_t>(B) * C * 4 * H * W);
  const int H2 = 2 * H, W2 = 2 * W;
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x.values().data() + static_cast<int64_t>(bc) * H * W;
    double* dst = out.data() + static_cast<int64_t>(bc) * H2 * W2;
    for (int y = 0; y < H2; ++y)
      for (int xq = 0; xq < W2; ++xq) dst[y * W2 + xq] = src[(y / 2) * W + (xq / 2)];
  }
  return Tensor::make({B, C, H2, W2}, std::move(out), {x}, [B, C, H, W](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    const int H2 = 2 * H, W2 = 2 * W;
    for (int bc = 0; bc < B * C; ++bc) {
      const double* g = self.grad.data() + static_cast<int64_t>(bc) * H2 * W2;
      double* dst = p->grad.data() + static_cast<int64_t>(bc) * H * W;
      for (int y = 0; y < H2; ++y)
        for (int xq = 0; xq < W2; ++xq) dst[(y / 2) * W + (xq / 2)] += g[y * W2 + xq];
    }
  });
}

Tensor mean_spatial(const Tensor& x) {
  if (x.shape().size() != 4) throw ContractError("mean_spatial: 4-D only");
  const int B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double inv = 1.0 / HW;
  std::vector<double> out(static_cast<size_t>(B) * C);
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = x.values().data() + static_cast<int64_t>(bc) * HW;
    double acc = 0.0;
    for (int i = 0; i < HW; ++i) acc += src[i];
    out[static_cast<size_t>(bc)] = acc * inv;
  }
  return Tensor::make({B, C}, std::move(out), {x}, [B, C, HW, inv](detail::Node& self) {
    detail::Node* p = parent(self, 0);
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (int bc = 0; bc < B * C; ++bc) {
      const double g = self.grad[static_cast<size_t>(bc)] * inv;
      double* dst = p->grad.data() + static_cast<int64_t>(bc) * HW;
      for (int i = 0; i < HW; ++i) dst[i] += g;
    }
  });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) throw ContractError("embedding_rows: table must be 2-D");
  const int V = table.dim(0), E = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= V) throw InputError("embedding_rows: id " + std::to_string(id) +
                                            " out of vocabulary range [0," + std::to_string(V) + ")");
  std::vector<double> out(ids.size() * static_cast<size_t>(E));
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(table.values().begin() + static_cast<int64_t>(ids[i]) * E,
              table.values().begin() + static_cast<int64_t>(ids[i] + 1) * E,
              out.begin() + static_cast<int64_t>(i) * E);
  return Tensor::make({static_cast<int>(ids.size()), E}, std::move(out), {table},
                      [ids, E](detail::Node& self) {
                        detail::Node* p = parent(self, 0);
                        if (!p->requires_grad) return;
                        p->ensure_grad();
                        for (size_t i = 0; i < ids.size(); ++i) {
                          const double* g = self.grad.data() + static_cast<int64_t>(i) * E;
                          double* dst = p->grad.data() + static_cast<int64_t>(ids[i]) * E;
                          for (int j = 0; j < E; ++j) dst[j] += g[j];
                        }
                      });
}

void check_finite(const Tensor& t, const std::string& what) {
  for (double x : t.values())
    if (!std::isfinite(x)) throw NumericError("non-finite values in " + what);
}

}  // namespace pedgen
