#include "ddr/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

namespace ddr {

namespace detail {

namespace {
std::atomic<std::uint64_t> g_seq{1};
bool g_finite_checks = true;
thread_local double g_min_kink = std::numeric_limits<double>::infinity();
}  // namespace

NodePtr new_node(std::size_t rows, std::size_t cols, bool needs_grad,
                 std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  n->rows = rows;
  n->cols = cols;
  n->needs_grad = needs_grad;
  n->parents = std::move(parents);
  n->value.alloc(rows * cols);
  return n;
}

}  // namespace detail

using detail::Node;
using detail::NodePtr;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMat>;
using MapC = Eigen::Map<const RowMat>;

void set_finite_checks(bool enabled) { detail::g_finite_checks = enabled; }
bool finite_checks_enabled() { return detail::g_finite_checks; }

void check_output_finite(const Node& n, const char* op) {
  if (!detail::g_finite_checks) return;
  if (!all_finite(n.value.data(), n.size()))
    throw NumericError(std::string("non-finite value produced by ") + op);
}

void reset_kink_monitor() { detail::g_min_kink = std::numeric_limits<double>::infinity(); }
double min_kink_distance() { return detail::g_min_kink; }

namespace {

bool any_needs_grad(const std::vector<NodePtr>& ps) {
  for (const auto& p : ps)
    if (p->needs_grad) return true;
  return false;
}

// Ensures a parent is ready to accumulate gradient. Backward allocates grads
// for every tape node up front, so this is a cheap guard.
inline double* pgrad(const NodePtr& p) {
  return p->needs_grad ? p->grad.data() : nullptr;
}

}  // namespace

Tensor Tensor::constant(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  if (data.size() != rows * cols) throw ShapeError("constant: data size does not match shape");
  auto n = detail::new_node(rows, cols, false, {});
  std::memcpy(n->value.data(), data.data(), data.size() * sizeof(double));
  check_output_finite(*n, "constant");
  return Tensor(std::move(n));
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, double fill) {
  auto n = detail::new_node(rows, cols, false, {});
  std::fill_n(n->value.data(), rows * cols, fill);
  check_output_finite(*n, "constant");
  return Tensor(std::move(n));
}

Tensor Tensor::param(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  if (data.size() != rows * cols) throw ShapeError("param: data size does not match shape");
  auto n = detail::new_node(rows, cols, true, {});
  n->requires_grad = true;
  std::memcpy(n->value.data(), data.data(), data.size() * sizeof(double));
  check_output_finite(*n, "param");
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with unit-dimension broadcasting.

namespace {

struct OpAdd {
  static double f(double a, double b) { return a + b; }
  static double dfa(double, double, double) { return 1.0; }
  static double dfb(double, double, double) { return 1.0; }
};
struct OpSub {
  static double f(double a, double b) { return a - b; }
  static double dfa(double, double, double) { return 1.0; }
  static double dfb(double, double, double) { return -1.0; }
};
struct OpMul {
  static double f(double a, double b) { return a * b; }
  static double dfa(double, double b, double) { return b; }
  static double dfb(double a, double, double) { return a; }
};
struct OpDiv {
  static double f(double a, double b) { return a / b; }
  static double dfa(double, double b, double) { return 1.0 / b; }
  static double dfb(double a, double b, double) { return -a / (b * b); }
};

template <class Op>
Tensor binary_op(const Tensor& ta, const Tensor& tb, const char* name) {
  const NodePtr a = ta.node(), b = tb.node();
  const std::size_t rows = std::max(a->rows, b->rows);
  const std::size_t cols = std::max(a->cols, b->cols);
  const bool ok_r = a->rows == b->rows || a->rows == 1 || b->rows == 1;
  const bool ok_c = a->cols == b->cols || a->cols == 1 || b->cols == 1;
  if (!ok_r || !ok_c) throw ShapeError(std::string(name) + ": incompatible shapes");

  auto out = detail::new_node(rows, cols, any_needs_grad({a, b}), {a, b});
  const std::size_t sra = a->rows == 1 ? 0 : a->cols;
  const std::size_t sca = a->cols == 1 ? 0 : 1;
  const std::size_t srb = b->rows == 1 ? 0 : b->cols;
  const std::size_t scb = b->cols == 1 ? 0 : 1;

  const double* pa = a->value.data();
  const double* pb = b->value.data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* ra = pa + i * sra;
    const double* rb = pb + i * srb;
    double* ro = po + i * cols;
    for (std::size_t j = 0; j < cols; ++j) ro[j] = Op::f(ra[j * sca], rb[j * scb]);
  }
  check_output_finite(*out, name);

  if (out->needs_grad) {
    out->backward = [a, b, sra, sca, srb, scb](Node& n) {
      const double* g = n.grad.data();
      const double* pa = a->value.data();
      const double* pb = b->value.data();
      const double* po = n.value.data();
      double* ga = pgrad(a);
      double* gb = pgrad(b);
      for (std::size_t i = 0; i < n.rows; ++i)
        for (std::size_t j = 0; j < n.cols; ++j) {
          const std::size_t k = i * n.cols + j;
          const std::size_t ia = i * sra + j * sca;
          const std::size_t ib = i * srb + j * scb;
          if (ga) ga[ia] += g[k] * Op::dfa(pa[ia], pb[ib], po[k]);
          if (gb) gb[ib] += g[k] * Op::dfb(pa[ia], pb[ib], po[k]);
        }
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op<OpAdd>(a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op<OpSub>(a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op<OpMul>(a, b, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op<OpDiv>(a, b, "div"); }

// ---------------------------------------------------------------------------
// Elementwise unary ops.

namespace {

template <class F, class DF>
Tensor unary_op(const Tensor& tx, const char* name, F f, DF df) {
  const NodePtr x = tx.node();
  auto out = detail::new_node(x->rows, x->cols, x->needs_grad, {x});
  const double* px = x->value.data();
  double* po = out->value.data();
  const std::size_t n = x->size();
  for (std::size_t i = 0; i < n; ++i) po[i] = f(px[i]);
  check_output_finite(*out, name);

  if (out->needs_grad) {
    out->backward = [x, df](Node& nd) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = nd.grad.data();
      const double* px = x->value.data();
      const double* po = nd.value.data();
      const std::size_t n = nd.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * df(px[i], po[i]);
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary_op(
      x, "affine", [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double) { return scale; });
}

Tensor exp_t(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt_t(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor pow_t(const Tensor& x, double e) {
  return unary_op(
      x, "pow", [e](double v) { return std::pow(v, e); },
      [e](double v, double) { return e * std::pow(v, e - 1.0); });
}

Tensor leaky_relu(const Tensor& tx, double slope) {
  const NodePtr x = tx.node();
  // Track proximity to the kink for the gradient checker.
  const double* px = x->value.data();
  for (std::size_t i = 0; i < x->size(); ++i)
    detail::g_min_kink = std::min(detail::g_min_kink, std::fabs(px[i]));
  return unary_op(
      tx, "leaky_relu", [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

// ---------------------------------------------------------------------------
// Dense linear algebra.

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const NodePtr a = ta.node(), b = tb.node();
  if (a->cols != b->rows) throw ShapeError("matmul: inner dimensions differ");
  auto out = detail::new_node(a->rows, b->cols, any_needs_grad({a, b}), {a, b});
  MapM(out->value.data(), out->rows, out->cols).noalias() =
      MapC(a->value.data(), a->rows, a->cols) * MapC(b->value.data(), b->rows, b->cols);
  check_output_finite(*out, "matmul");

  if (out->needs_grad) {
    out->backward = [a, b](Node& n) {
      const MapC g(n.grad.data(), n.rows, n.cols);
      if (double* ga = pgrad(a))
        MapM(ga, a->rows, a->cols).noalias() +=
            g * MapC(b->value.data(), b->rows, b->cols).transpose();
      if (double* gb = pgrad(b))
        MapM(gb, b->rows, b->cols).noalias() +=
            MapC(a->value.data(), a->rows, a->cols).transpose() * g;
    };
  }
  return Tensor(std::move(out));
}

Tensor matmul_nt(const Tensor& ta, const Tensor& tb) {
  const NodePtr a = ta.node(), b = tb.node();
  if (a->cols != b->cols) throw ShapeError("matmul_nt: inner dimensions differ");
  auto out = detail::new_node(a->rows, b->rows, any_needs_grad({a, b}), {a, b});
  MapM(out->value.data(), out->rows, out->cols).noalias() =
      MapC(a->value.data(), a->rows, a->cols) *
      MapC(b->value.data(), b->rows, b->cols).transpose();
  check_output_finite(*out, "matmul_nt");

  if (out->needs_grad) {
    out->backward = [a, b](Node& n) {
      const MapC g(n.grad.data(), n.rows, n.cols);
      if (double* ga = pgrad(a))
        MapM(ga, a->rows, a->cols).noalias() += g * MapC(b->value.data(), b->rows, b->cols);
      if (double* gb = pgrad(b))
        MapM(gb, b->rows, b->cols).noalias() +=
            g.transpose() * MapC(a->value.data(), a->rows, a->cols);
    };
  }
  return Tensor(std::move(out));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != w.cols())
    throw ShapeError("linear: bias must be 1 x out_channels");
  return add(matmul(x, w), bias);
}

Tensor softmax_rows(const Tensor& tx) {
  const NodePtr x = tx.node();
  auto out = detail::new_node(x->rows, x->cols, x->needs_grad, {x});
  const std::size_t rows = x->rows, cols = x->cols;
  const double* px = x->value.data();
  double* po = out->value.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* r = px + i * cols;
    double* o = po + i * cols;
    double m = r[0];
    for (std::size_t j = 1; j < cols; ++j) m = std::max(m, r[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      o[j] = std::exp(r[j] - m);
      s += o[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < cols; ++j) o[j] *= inv;
  }
  check_output_finite(*out, "softmax_rows");

  if (out->needs_grad) {
    out->backward = [x](Node& n) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = n.grad.data();
      const double* y = n.value.data();
      for (std::size_t i = 0; i < n.rows; ++i) {
        const double* gi = g + i * n.cols;
        const double* yi = y + i * n.cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < n.cols; ++j) dot += gi[j] * yi[j];
        double* gxi = gx + i * n.cols;
        for (std::size_t j = 0; j < n.cols; ++j) gxi[j] += yi[j] * (gi[j] - dot);
      }
    };
  }
  return Tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// Gather / segment primitives.

Tensor gather_rows(const Tensor& tx, std::shared_ptr<const std::vector<int>> indices) {
  const NodePtr x = tx.node();
  const auto& idx = *indices;
  for (int i : idx)
    if (i < 0 || std::size_t(i) >= x->rows) throw IndexError("gather_rows: index out of range");
  auto out = detail::new_node(idx.size(), x->cols, x->needs_grad, {x});
  const std::size_t c = x->cols;
  const double* px = x->value.data();
  double* po = out->value.data();
  parallel_for(idx.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      std::memcpy(po + i * c, px + std::size_t(idx[i]) * c, c * sizeof(double));
  });

  if (out->needs_grad) {
    out->backward = [x, indices](Node& n) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = n.grad.data();
      const auto& idx = *indices;
      const std::size_t c = n.cols;
      if (c >= 16) {
        // Column-chunked scatter-add: disjoint writes, fixed row order.
        const unsigned workers = std::min<std::size_t>(worker_count(), (c + 15) / 16);
        parallel_for(workers, [&](std::size_t wlo, std::size_t whi) {
          for (std::size_t w = wlo; w < whi; ++w) {
            const std::size_t j0 = w * c / workers, j1 = (w + 1) * c / workers;
            for (std::size_t i = 0; i < idx.size(); ++i) {
              double* dst = gx + std::size_t(idx[i]) * c;
              const double* src = g + i * c;
              for (std::size_t j = j0; j < j1; ++j) dst[j] += src[j];
            }
          }
        });
      } else {
        for (std::size_t i = 0; i < idx.size(); ++i) {
          double* dst = gx + std::size_t(idx[i]) * c;
          const double* src = g + i * c;
          for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return Tensor(std::move(out));
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& indices) {
  return gather_rows(x, std::make_shared<const std::vector<int>>(indices));
}

namespace {

Tensor segment_reduce(const Tensor& tx, std::shared_ptr<const std::vector<int>> offsets,
                      bool mean) {
  const NodePtr x = tx.node();
  const auto& off = *offsets;
  if (off.empty() || off.front() != 0 || std::size_t(off.back()) != x->rows)
    throw ShapeError("segment reduce: offsets must cover all rows");
  const std::size_t groups = off.size() - 1;
  auto out = detail::new_node(groups, x->cols, x->needs_grad, {x});
  const std::size_t c = x->cols;
  const double* px = x->value.data();
  double* po = out->value.data();
  parallel_for(groups, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t g = lo; g < hi; ++g) {
      double* o = po + g * c;
      std::fill_n(o, c, 0.0);
      for (int r = off[g]; r < off[g + 1]; ++r) {
        const double* src = px + std::size_t(r) * c;
        for (std::size_t j = 0; j < c; ++j) o[j] += src[j];
      }
      if (mean && off[g + 1] > off[g]) {
        const double inv = 1.0 / double(off[g + 1] - off[g]);
        for (std::size_t j = 0; j < c; ++j) o[j] *= inv;
      }
    }
  });
  check_output_finite(*out, mean ? "segment_mean" : "segment_sum");

  if (out->needs_grad) {
    out->backward = [x, offsets, mean](Node& n) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = n.grad.data();
      const auto& off = *offsets;
      const std::size_t c = n.cols;
      parallel_for(off.size() - 1, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t grp = lo; grp < hi; ++grp) {
          const double f = mean && off[grp + 1] > off[grp]
                               ? 1.0 / double(off[grp + 1] - off[grp])
                               : 1.0;
          const double* src = g + grp * c;
          for (int r = off[grp]; r < off[grp + 1]; ++r) {
            double* dst = gx + std::size_t(r) * c;
            for (std::size_t j = 0; j < c; ++j) dst[j] += f * src[j];
          }
        }
      });
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor segment_mean(const Tensor& x, std::shared_ptr<const std::vector<int>> offsets) {
  return segment_reduce(x, std::move(offsets), true);
}
Tensor segment_sum(const Tensor& x, std::shared_ptr<const std::vector<int>> offsets) {
  return segment_reduce(x, std::move(offsets), false);
}

// ---------------------------------------------------------------------------
// Reductions.

namespace {

enum class Axis { Rows, Cols, All };

Tensor reduce_sum(const Tensor& tx, Axis axis, bool mean, const char* name) {
  const NodePtr x = tx.node();
  const std::size_t rows = x->rows, cols = x->cols;
  std::size_t orows = 1, ocols = 1;
  if (axis == Axis::Rows) orows = rows;   // reduce across the row -> (r,1)
  if (axis == Axis::Cols) ocols = cols;   // reduce down each column -> (1,c)
  auto out = detail::new_node(orows, ocols, x->needs_grad, {x});
  const double* px = x->value.data();
  double* po = out->value.data();
  std::fill_n(po, orows * ocols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      po[(axis == Axis::Rows ? i : 0) * ocols + (axis == Axis::Cols ? j : 0)] +=
          px[i * cols + j];
  const double f = mean ? (axis == Axis::Rows ? 1.0 / double(cols)
                                              : axis == Axis::Cols ? 1.0 / double(rows)
                                                                   : 1.0 / double(rows * cols))
                        : 1.0;
  if (mean)
    for (std::size_t k = 0; k < orows * ocols; ++k) po[k] *= f;
  check_output_finite(*out, name);

  if (out->needs_grad) {
    out->backward = [x, axis, f](Node& n) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = n.grad.data();
      const std::size_t rows = x->rows, cols = x->cols;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
          gx[i * cols + j] +=
              f * g[(axis == Axis::Rows ? i : 0) * n.cols + (axis == Axis::Cols ? j : 0)];
    };
  }
  return Tensor(std::move(out));
}

Tensor reduce_max(const Tensor& tx, Axis axis, const char* name) {
  const NodePtr x = tx.node();
  const std::size_t rows = x->rows, cols = x->cols;
  const std::size_t orows = axis == Axis::Rows ? rows : 1;
  const std::size_t ocols = axis == Axis::Cols ? cols : 1;
  auto out = detail::new_node(orows, ocols, x->needs_grad, {x});
  const double* px = x->value.data();
  double* po = out->value.data();
  auto argmax = std::make_shared<std::vector<std::size_t>>(orows * ocols, std::size_t(-1));
  std::fill_n(po, orows * ocols, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t k =
          (axis == Axis::Rows ? i : 0) * ocols + (axis == Axis::Cols ? j : 0);
      if (px[i * cols + j] > po[k]) {  // first max wins ties
        po[k] = px[i * cols + j];
        (*argmax)[k] = i * cols + j;
      }
    }
  check_output_finite(*out, name);

  if (out->needs_grad) {
    out->backward = [x, argmax](Node& n) {
      double* gx = pgrad(x);
      if (!gx) return;
      const double* g = n.grad.data();
      for (std::size_t k = 0; k < n.size(); ++k) gx[(*argmax)[k]] += g[k];
    };
  }
  return Tensor(std::move(out));
}

}  // namespace

Tensor row_sum(const Tensor& x) { return reduce_sum(x, Axis::Rows, false, "row_sum"); }
Tensor row_mean(const Tensor& x) { return reduce_sum(x, Axis::Rows, true, "row_mean"); }
Tensor row_max(const Tensor& x) { return reduce_max(x, Axis::Rows, "row_max"); }
Tensor col_sum(const Tensor& x) { return reduce_sum(x, Axis::Cols, false, "col_sum"); }
Tensor col_mean(const Tensor& x) { return reduce_sum(x, Axis::Cols, true, "col_mean"); }
Tensor col_max(const Tensor& x) { return reduce_max(x, Axis::Cols, "col_max"); }
Tensor sum_all(const Tensor& x) { return reduce_sum(x, Axis::All, false, "sum_all"); }
Tensor mean_all(const Tensor& x) { return reduce_sum(x, Axis::All, true, "mean_all"); }

// ---------------------------------------------------------------------------
// Concatenation / reshape.

Tensor concat_cols(const Tensor& ta, const Tensor& tb) {
  const NodePtr a = ta.node(), b = tb.node();
  if (a->rows != b->rows) throw ShapeError("concat_cols: row counts differ");
  auto out = detail::new_node(a->rows, a->cols + b->cols, any_needs_grad({a, b}), {a, b});
  const std::size_t ca = a->cols, cb = b->cols, c = ca + cb;
  for (std::size_t i = 0; i < a->rows; ++i) {
    std::memcpy(out->value.data() + i * c, a->value.data() + i * ca, ca * sizeof(double));
    std::memcpy(out->value.data() + i * c + ca, b->value.data() + i * cb, cb * sizeof(double));
  }

  if (out->needs_grad) {
    out->backward = [a, b](Node& n) {
      const double* g = n.grad.data();
      const std::size_t ca = a->cols, cb = b->cols, c = ca + cb;
      if (double* ga = pgrad(a))
        for (std::size_t i = 0; i < a->rows; ++i)
          for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
      if (double* gb = pgrad(b))
        for (std::size_t i = 0; i < b->rows; ++i)
          for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
    };
  }
  return Tensor(std::move(out));
}

Tensor concat_rows(const Tensor& ta, const Tensor& tb) {
  const NodePtr a = ta.node(), b = tb.node();
  if (a->cols != b->cols) throw ShapeError("concat_rows: column counts differ");
  auto out = detail::new_node(a->rows + b->rows, a->cols, any_needs_grad({a, b}), {a, b});
  std::memcpy(out->value.data(), a->value.data(), a->size() * sizeof(double));
  std::memcpy(out->value.data() + a->size(), b->value.data(), b->size() * sizeof(double));

  if (out->needs_grad) {
    out->backward = [a, b](Node& n) {
      const double* g = n.grad.data();
      if (double* ga = pgrad(a))
        for (std::size_t k = 0; k < a->size(); ++k) ga[k] += g[k];
      if (double* gb = pgrad(b))
        for (std::size_t k = 0; k < b->size(); ++k) gb[k] += g[a->size() + k];
    };
  }
  return Tensor(std::move(out));
}

Tensor reshape(const Tensor& tx, std::size_t rows, std::size_t cols) {
  const NodePtr x = tx.node();
  if (rows * cols != x->size()) throw ShapeError("reshape: element count must be preserved");
  auto out = detail::new_node(rows, cols, x->needs_grad, {x});
  std::memcpy(out->value.data(), x->value.data(), x->size() * sizeof(double));
  if (out->needs_grad) {
    out->backward = [x](Node& n) {
      if (double* gx = pgrad(x)) {
        const double* g = n.grad.data();
        for (std::size_t k = 0; k < n.size(); ++k) gx[k] += g[k];
      }
    };
  }
  return Tensor(std::move(out));
}

// ---------------------------------------------------------------------------
// Tape and backward.

Tape Tape::record(const Tensor& value) {
  Tape tape;
  std::unordered_set<const Node*> seen;
  std::vector<NodePtr> stack{value.node()};
  while (!stack.empty()) {
    NodePtr n = std::move(stack.back());
    stack.pop_back();
    if (!n->needs_grad || !seen.insert(n.get()).second) continue;
    tape.nodes.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p);
  }
  std::sort(tape.nodes.begin(), tape.nodes.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->seq > b->seq; });
  return tape;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  if (!loss.node()->needs_grad)
    throw ContractError("backward: loss does not depend on any gradient leaf");
  Tape tape = Tape::record(loss);
  for (const auto& n : tape.nodes) n->grad.alloc_zero(n->size());
  loss.node()->grad.data()[0] = 1.0;
  for (const auto& n : tape.nodes)
    if (n->backward) n->backward(*n);
}

// ---------------------------------------------------------------------------
// Gradient checking.

GradCheckReport check_gradient(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                               std::vector<Tensor> leaves, double h, double rtol,
                               std::size_t max_components, Rng* rng,
                               const std::function<std::vector<Tensor>()>& resample) {
  GradCheckReport report;

  Tensor loss;
  for (int attempt = 0;; ++attempt) {
    reset_kink_monitor();
    loss = fn(leaves);
    if (min_kink_distance() >= 10.0 * h || !resample || attempt >= 50) break;
    leaves = resample();
    ++report.resamples;
  }
  if (loss.size() != 1) throw ContractError("check_gradient: fn must return a scalar");
  backward(loss);

  std::vector<std::vector<double>> grads;
  std::size_t total = 0;
  for (const auto& leaf : leaves) {
    grads.emplace_back(leaf.grad() ? std::vector<double>(leaf.grad(), leaf.grad() + leaf.size())
                                   : std::vector<double>(leaf.size(), 0.0));
    total += leaf.size();
  }

  // Pick the coordinates to probe.
  std::vector<std::size_t> coords;
  if (total <= max_components || !rng) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    std::unordered_set<std::size_t> chosen;
    while (chosen.size() < max_components && rng)
      chosen.insert(std::size_t(rng->uniform_index(total)));
    coords.assign(chosen.begin(), chosen.end());
    std::sort(coords.begin(), coords.end());
  }

  for (std::size_t flat : coords) {
    std::size_t li = 0, off = flat;
    while (off >= leaves[li].size()) {
      off -= leaves[li].size();
      ++li;
    }
    double* slot = leaves[li].mutable_data() + off;
    const double saved = *slot;
    *slot = saved + h;
    const double fp = fn(leaves).item();
    *slot = saved - h;
    const double fm = fn(leaves).item();
    *slot = saved;

    const double fd = (fp - fm) / (2.0 * h);
    const double g = grads[li][off];
    const double rel = std::fabs(g - fd) / std::max({1.0, std::fabs(g), std::fabs(fd)});
    report.max_rel_err = std::max(report.max_rel_err, rel);
    ++report.components_checked;
  }
  report.pass = report.max_rel_err <= rtol;
  return report;
}

}  // namespace ddr
