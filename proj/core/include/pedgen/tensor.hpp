#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pedgen/common.hpp"

namespace pedgen {

// Dense double-precision tensors with reverse-mode automatic differentiation.
// A Tensor is a value-semantic handle to a graph node; ops build the graph,
// Tensor::backward() runs the tape. Everything is single-threaded and
// deterministic: identical inputs produce bit-identical outputs and gradients.

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand during backward
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // reads this->grad, accumulates into parents
  void ensure_grad();
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Internal: build an op node. `backward` may be empty for constants.
  static Tensor make(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                     std::function<void(detail::Node&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  int64_t size() const;
  bool requires_grad() const;

  const std::vector<double>& values() const;
  // In-place value mutation; leaves only (optimizer updates, test probes).
  std::vector<double>& mutable_values();
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  double item() const;  // scalar convenience
  double at(std::initializer_list<int> idx) const;

  Tensor detach() const;  // value copy with no history
  void backward();        // from a scalar node

  detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise / scalar ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale_by(const Tensor& a, const Tensor& s);  // s is a scalar tensor
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor tanh_t(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor square(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- shape / assembly ----
Tensor reshape(const Tensor& a, Shape s);
Tensor transpose(const Tensor& a);  // 2-D
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int start, int end);
Tensor stack0(const std::vector<Tensor>& parts);  // adds a leading axis
Tensor select0(const Tensor& a, int index);       // removes the leading axis

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);            // (m,k)x(k,n)
Tensor outer(const Tensor& u, const Tensor& v);             // (m)x(n) -> (m,n)
Tensor dot(const Tensor& a, const Tensor& b);               // 1-D -> scalar
Tensor add_rowvec(const Tensor& x, const Tensor& b);        // (r,c) + (c)
Tensor broadcast_cols(const Tensor& v, int cols);           // (n) -> (n,cols)

// ---- reductions / normalization ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_axis1(const Tensor& a);   // (r,c) -> (r)
Tensor mean_axis1(const Tensor& a);  // (r,c) -> (r)
Tensor softmax_rows(const Tensor& a);  // (r,c), max-subtracted

// ---- neural-net structured ----
// x (B,Cin,H,W), w (Cout,Cin,kh,kw), b (Cout)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor upsample_nearest2(const Tensor& x);       // (B,C,H,W) -> (B,C,2H,2W)
Tensor mean_spatial(const Tensor& x);            // (B,C,H,W) -> (B,C)
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);  // (V,E) -> (|ids|,E)

// Throws NumericError naming `what` if any entry is non-finite.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace pedgen
