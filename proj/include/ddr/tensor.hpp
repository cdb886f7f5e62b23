// Compact reverse-mode autodiff over dense 2-D double tensors. Graphs are
// built define-by-run; backward replays the recorded tape in reverse creation
// order, visiting each node exactly once.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddr/util.hpp"

namespace ddr {

namespace detail {

struct Buffer {
  std::unique_ptr<double[]> p;
  std::size_t n = 0;

  void alloc(std::size_t m) {
    p = std::make_unique_for_overwrite<double[]>(m);
    n = m;
  }
  void alloc_zero(std::size_t m) {
    p = std::make_unique<double[]>(m);
    n = m;
  }
  double* data() { return p.get(); }
  const double* data() const { return p.get(); }
  bool empty() const { return n == 0; }
};

struct Node {
  std::uint64_t seq = 0;
  std::size_t rows = 0, cols = 0;
  Buffer value;
  Buffer grad;  // allocated lazily by backward()
  bool requires_grad = false;  // leaf owned by an optimizer
  bool needs_grad = false;     // this node participates in backprop
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;  // accumulates into parents' grads

  std::size_t size() const { return rows * cols; }
};

using NodePtr = std::shared_ptr<Node>;

NodePtr new_node(std::size_t rows, std::size_t cols, bool needs_grad,
                 std::vector<NodePtr> parents);

}  // namespace detail

// Handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;

  // Leaf factories. `param` marks the tensor as an optimizer-owned leaf.
  static Tensor constant(std::size_t rows, std::size_t cols, const std::vector<double>& data);
  static Tensor constant(std::size_t rows, std::size_t cols, double fill);
  static Tensor scalar(double v) { return constant(1, 1, std::vector<double>{v}); }
  static Tensor param(std::size_t rows, std::size_t cols, const std::vector<double>& data);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool needs_grad() const { return node_->needs_grad; }

  const double* data() const { return node_->value.data(); }
  double* mutable_data() { return node_->value.data(); }
  double item() const {
    if (size() != 1) throw ShapeError("item() requires a 1x1 tensor");
    return data()[0];
  }
  std::vector<double> to_vector() const { return {data(), data() + size()}; }

  // Gradient of the last backward() pass; null when none was recorded.
  const double* grad() const { return node_->grad.data(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void drop_grad() { node_->grad = {}; }

  detail::NodePtr node() const { return node_; }
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}

 private:
  detail::NodePtr node_;
};

// Ordered record of the operations reachable from a value, newest first.
struct Tape {
  std::vector<detail::NodePtr> nodes;
  static Tape record(const Tensor& value);
};

// Populates gradients of every needs-grad node reachable from `loss`.
// Deterministic: re-running an identical tape yields bit-identical gradients.
void backward(const Tensor& loss);

// Elementwise binary ops with broadcasting over unit dimensions
// (scalar, row vector, column vector).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// y = scale * x + shift, elementwise with scalar constants.
Tensor affine(const Tensor& x, double scale, double shift);

Tensor exp_t(const Tensor& x);
Tensor log_t(const Tensor& x);
Tensor sqrt_t(const Tensor& x);
Tensor pow_t(const Tensor& x, double exponent);
Tensor leaky_relu(const Tensor& x, double slope);
inline Tensor abs_t(const Tensor& x) { return leaky_relu(x, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);  // x*w + bias row-broadcast

Tensor softmax_rows(const Tensor& x);

// out(i, :) = x(indices[i], :). Indices are shared, not copied.
Tensor gather_rows(const Tensor& x, std::shared_ptr<const std::vector<int>> indices);
Tensor gather_rows(const Tensor& x, const std::vector<int>& indices);

// Rows grouped contiguously by CSR offsets; out(g, :) = mean/sum over group g.
Tensor segment_mean(const Tensor& x, std::shared_ptr<const std::vector<int>> offsets);
Tensor segment_sum(const Tensor& x, std::shared_ptr<const std::vector<int>> offsets);

Tensor row_sum(const Tensor& x);   // (r,c) -> (r,1)
Tensor row_mean(const Tensor& x);
Tensor row_max(const Tensor& x);
Tensor col_sum(const Tensor& x);   // (r,c) -> (1,c)
Tensor col_mean(const Tensor& x);
Tensor col_max(const Tensor& x);
Tensor sum_all(const Tensor& x);   // (r,c) -> (1,1)
Tensor mean_all(const Tensor& x);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, std::size_t rows, std::size_t cols);

// Finite-value guard applied to every operation's output (on by default).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();
void check_output_finite(const detail::Node& n, const char* op);

// Smallest |pre-activation| seen by leaky_relu since the last reset; the
// gradient checker uses it to resample points that sit on a kink.
void reset_kink_monitor();
double min_kink_distance();

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  std::size_t components_checked = 0;
  std::size_t resamples = 0;
};

// Compares reverse-mode gradients of fn (a scalar-valued computation over the
// given leaves) against central finite differences. When max_components is
// smaller than the total parameter count, a random subset of coordinates is
// checked. `resample` regenerates the leaves when the forward pass lands
// within 10h of a leaky-rectifier kink.
GradCheckReport check_gradient(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                               std::vector<Tensor> leaves, double h, double rtol,
                               std::size_t max_components = std::size_t(-1),
                               Rng* rng = nullptr,
                               const std::function<std::vector<Tensor>()>& resample = nullptr);

}  // namespace ddr
