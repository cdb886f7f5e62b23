#include "ddr/gradsuite.hpp"

#include <cmath>
#include <memory>

namespace ddr {

namespace {

std::vector<double> randn(Rng& rng, std::size_t n, double scale = 1.0, double shift = 0.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * scale + shift;
  return v;
}

// Contract a tensor to a scalar with weights that depend only on its shape,
// so repeated evaluations of the same function stay identical while every
// entry of the gradient is exercised.
Tensor pin(const Tensor& t) {
  Rng wrng(0x9e3779b9ull ^ (t.rows() * 131 + t.cols()));
  return sum_all(mul(t, Tensor::constant(t.rows(), t.cols(), randn(wrng, t.size()))));
}

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

GradSuiteResult check_many(const std::string& name, const Fn& fn,
                           const std::function<std::vector<Tensor>()>& make, int points,
                           double h, double rtol) {
  GradSuiteResult out{name, {}};
  for (int i = 0; i < points; ++i) {
    const GradCheckReport r = check_gradient(fn, make(), h, rtol, std::size_t(-1), nullptr, make);
    out.report.max_rel_err = std::max(out.report.max_rel_err, r.max_rel_err);
    out.report.components_checked += r.components_checked;
    out.report.resamples += r.resamples;
  }
  out.report.pass = out.report.max_rel_err <= rtol;
  return out;
}

}  // namespace

std::vector<GradSuiteResult> operator_gradient_suite(int points, double h, double rtol,
                                                     std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  std::vector<GradSuiteResult> results;

  const std::size_t R = 4, C = 3;
  auto two = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(R, C, randn(*rng, R * C))};
  };
  auto one = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C))};
  };
  auto one_pos = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C, 0.25, 2.0))};
  };

  auto add2 = [](const std::vector<Tensor>& v) { return pin(add(v[0], v[1])); };
  auto sub2 = [](const std::vector<Tensor>& v) { return pin(sub(v[0], v[1])); };
  auto mul2 = [](const std::vector<Tensor>& v) { return pin(mul(v[0], v[1])); };
  results.push_back(check_many("add", add2, two, points, h, rtol));
  results.push_back(check_many("sub", sub2, two, points, h, rtol));
  results.push_back(check_many("mul", mul2, two, points, h, rtol));

  auto two_div = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(R, C, randn(*rng, R * C, 0.25, 2.0))};
  };
  results.push_back(check_many(
      "div", [](const std::vector<Tensor>& v) { return pin(div(v[0], v[1])); }, two_div,
      points, h, rtol));

  // Broadcast variants: row vector, column vector, and scalar operands.
  auto bcast_row = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(1, C, randn(*rng, C))};
  };
  auto bcast_col = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(R, 1, randn(*rng, R))};
  };
  auto bcast_scalar = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(1, 1, randn(*rng, 1))};
  };
  results.push_back(check_many("add row-broadcast", add2, bcast_row, points, h, rtol));
  results.push_back(check_many("mul col-broadcast", mul2, bcast_col, points, h, rtol));
  results.push_back(check_many("mul scalar-broadcast", mul2, bcast_scalar, points, h, rtol));

  results.push_back(check_many(
      "exp", [](const std::vector<Tensor>& v) { return pin(exp_t(v[0])); }, one, points, h,
      rtol));
  results.push_back(check_many(
      "log", [](const std::vector<Tensor>& v) { return pin(log_t(v[0])); }, one_pos, points,
      h, rtol));
  results.push_back(check_many(
      "sqrt", [](const std::vector<Tensor>& v) { return pin(sqrt_t(v[0])); }, one_pos,
      points, h, rtol));
  results.push_back(check_many(
      "pow", [](const std::vector<Tensor>& v) { return pin(pow_t(v[0], 1.7)); }, one_pos,
      points, h, rtol));
  results.push_back(check_many(
      "leaky_relu", [](const std::vector<Tensor>& v) { return pin(leaky_relu(v[0], 0.2)); },
      one, points, h, rtol));
  results.push_back(check_many(
      "affine", [](const std::vector<Tensor>& v) { return pin(affine(v[0], -1.6, 0.3)); },
      one, points, h, rtol));

  auto linear_leaves = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(C, 5, randn(*rng, C * 5)),
                               Tensor::param(1, 5, randn(*rng, 5))};
  };
  results.push_back(check_many(
      "linear", [](const std::vector<Tensor>& v) { return pin(linear(v[0], v[1], v[2])); },
      linear_leaves, points, h, rtol));

  auto mm_nt_leaves = [rng, R, C] {
    return std::vector<Tensor>{Tensor::param(R, C, randn(*rng, R * C)),
                               Tensor::param(5, C, randn(*rng, 5 * C))};
  };
  results.push_back(check_many(
      "matmul_nt", [](const std::vector<Tensor>& v) { return pin(matmul_nt(v[0], v[1])); },
      mm_nt_leaves, points, h, rtol));

  results.push_back(check_many(
      "softmax_rows", [](const std::vector<Tensor>& v) { return pin(softmax_rows(v[0])); },
      one, points, h, rtol));

  auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{2, 0, 1, 0, 3, 2});
  results.push_back(check_many(
      "gather_rows",
      [idx](const std::vector<Tensor>& v) { return pin(gather_rows(v[0], idx)); }, one,
      points, h, rtol));

  auto off = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2, 2, 4});
  results.push_back(check_many(
      "segment_mean",
      [off](const std::vector<Tensor>& v) { return pin(segment_mean(v[0], off)); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "segment_sum",
      [off](const std::vector<Tensor>& v) { return pin(segment_sum(v[0], off)); }, one,
      points, h, rtol));

  results.push_back(check_many(
      "row_sum", [](const std::vector<Tensor>& v) { return pin(row_sum(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "row_mean", [](const std::vector<Tensor>& v) { return pin(row_mean(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "row_max", [](const std::vector<Tensor>& v) { return pin(row_max(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "col_sum", [](const std::vector<Tensor>& v) { return pin(col_sum(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "col_mean", [](const std::vector<Tensor>& v) { return pin(col_mean(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "col_max", [](const std::vector<Tensor>& v) { return pin(col_max(v[0])); }, one,
      points, h, rtol));
  results.push_back(check_many(
      "mean_all", [](const std::vector<Tensor>& v) { return mean_all(mul(v[0], v[0])); },
      one, points, h, rtol));

  results.push_back(check_many(
      "concat_cols",
      [](const std::vector<Tensor>& v) { return pin(concat_cols(v[0], v[1])); }, two, points,
      h, rtol));
  results.push_back(check_many(
      "concat_rows",
      [](const std::vector<Tensor>& v) { return pin(concat_rows(v[0], v[1])); }, two, points,
      h, rtol));
  results.push_back(check_many(
      "reshape",
      [R, C](const std::vector<Tensor>& v) { return pin(reshape(v[0], C, R)); }, one, points,
      h, rtol));

  return results;
}

}  // namespace ddr
