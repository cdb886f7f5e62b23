#include "ddr/discrete.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace ddr {

ControlGrid build_control_grid(int order, double radius) {
  const Icosphere mesh = build_icosphere(order, radius);
  ControlGrid grid;
  grid.order = order;
  grid.radius = radius;
  grid.n_points = mesh.vertex_count();
  grid.positions = mesh.vertices;
  grid.adj_offsets = mesh.adj_offsets;
  grid.adj = mesh.adj;
  for (std::size_t v = 0; v < grid.n_points; ++v)
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e)
      if (mesh.adj[e] > int(v)) grid.edges.push_back({int(v), mesh.adj[e]});
  return grid;
}

LabelSpace build_label_space(const ControlGrid& grid, const Icosphere& label_mesh,
                             std::size_t n_labels) {
  if (label_mesh.order <= grid.order)
    throw ConfigError("label space: label order must exceed the control order");
  if (n_labels > label_mesh.vertex_count())
    throw ConfigError("label space: more labels requested than label-mesh vertices");
  if (std::fabs(label_mesh.radius - grid.radius) > 1e-9 * grid.radius)
    throw ConfigError("label space: label mesh radius does not match the grid");

  LabelSpace ls;
  ls.label_order = label_mesh.order;
  ls.n_points = grid.n_points;
  ls.n_labels = n_labels;
  ls.radius = grid.radius;
  ls.label_vertex.resize(grid.n_points * n_labels);
  ls.label_coord.resize(grid.n_points * n_labels);

  const std::size_t nv = label_mesh.vertex_count();
  parallel_for(grid.n_points, [&](std::size_t lo, std::size_t hi) {
    std::vector<std::pair<double, int>> dist(nv);
    for (std::size_t c = lo; c < hi; ++c) {
      for (std::size_t v = 0; v < nv; ++v)
        dist[v] = {angle_between(grid.positions[c], label_mesh.vertices[v]), int(v)};
      std::nth_element(dist.begin(), dist.begin() + n_labels, dist.end());
      std::sort(dist.begin(), dist.begin() + n_labels);
      for (std::size_t l = 0; l < n_labels; ++l) {
        ls.label_vertex[c * n_labels + l] = dist[l].second;
        ls.label_coord[c * n_labels + l] = label_mesh.vertices[dist[l].second];
      }
    }
  });
  return ls;
}

std::vector<double> LabelSpace::label_distance_table(std::size_t point) const {
  std::vector<double> table(n_labels * n_labels);
  for (std::size_t a = 0; a < n_labels; ++a)
    for (std::size_t b = 0; b < n_labels; ++b)
      table[a * n_labels + b] = (coord(point, a) - coord(point, b)).norm();
  return table;
}

CrfParams make_crf_params(std::size_t n_labels, double gamma, int iterations) {
  if (!(gamma > 0.0)) throw ConfigError("crf: gamma must be positive");
  if (iterations < 1) throw ConfigError("crf: iteration count must be at least 1");
  CrfParams p;
  std::vector<double> potts(n_labels * n_labels, 1.0);
  for (std::size_t i = 0; i < n_labels; ++i) potts[i * n_labels + i] = 0.0;
  p.mu = Tensor::param(n_labels, n_labels, potts);
  p.omega = Tensor::param(1, 1, {1.0});
  p.gamma = gamma;
  p.iterations = iterations;
  return p;
}

namespace {

void validate_lambda(const std::array<double, 9>& m) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::fabs(m[i * 3 + j] - m[j * 3 + i]) > 1e-12)
        throw ConfigError("crf: Lambda must be symmetric");
  // Sylvester's criterion on the leading minors.
  const double d1 = m[0];
  const double d2 = m[0] * m[4] - m[1] * m[3];
  const double d3 = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                    m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (!(d1 > 0.0 && d2 > 0.0 && d3 > 0.0))
    throw ConfigError("crf: Lambda must be positive-definite");
}

double mahalanobis(const Vec3& d, const std::array<double, 9>& m) {
  const double mx = m[0] * d.x + m[1] * d.y + m[2] * d.z;
  const double my = m[3] * d.x + m[4] * d.y + m[5] * d.z;
  const double mz = m[6] * d.x + m[7] * d.y + m[8] * d.z;
  return d.x * mx + d.y * my + d.z * mz;
}

}  // namespace

double pairwise_kernel_value(const Vec3& la, const Vec3& lb, double radius, double omega,
                             double gamma, const std::array<double, 9>& lambda) {
  const Vec3 d = (la - lb) * (1.0 / radius);
  return omega * std::exp(-mahalanobis(d, lambda) / (2.0 * gamma * gamma));
}

KernelTables build_kernel_tables(const ControlGrid& grid, const LabelSpace& labels,
                                 const CrfParams& params) {
  if (!(params.gamma > 0.0)) throw ConfigError("crf: gamma must be positive");
  validate_lambda(params.lambda);
  if (labels.n_points != grid.n_points)
    throw ShapeError("kernel tables: label space does not match the grid");

  KernelTables kt;
  kt.n_labels = labels.n_labels;
  kt.edges = grid.edges;
  kt.n_points = grid.n_points;
  kt.tables.resize(grid.edges.size());
  const double inv2g2 = 1.0 / (2.0 * params.gamma * params.gamma);
  const double inv_r = 1.0 / labels.radius;
  parallel_for(grid.edges.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t e = lo; e < hi; ++e) {
      const auto [i, j] = kt.edges[e];
      auto& t = kt.tables[e];
      t.resize(kt.n_labels * kt.n_labels);
      for (std::size_t a = 0; a < kt.n_labels; ++a) {
        const Vec3& la = labels.coord(i, a);
        for (std::size_t b = 0; b < kt.n_labels; ++b) {
          const Vec3 d = (la - labels.coord(j, b)) * inv_r;
          t[a * kt.n_labels + b] = float(std::exp(-mahalanobis(d, params.lambda) * inv2g2));
        }
      }
    }
  });
  return kt;
}

double kernel_entry(const KernelTables& kt, std::size_t edge, std::size_t a, std::size_t b,
                    double omega) {
  return omega * double(kt.tables[edge][a * kt.n_labels + b]);
}

Tensor crf_pair_message(const Tensor& q, std::shared_ptr<const KernelTables> tables) {
  const auto& kt = *tables;
  if (q.rows() != kt.n_points || q.cols() != kt.n_labels)
    throw ShapeError("crf_pair_message: distribution shape does not match the tables");

  const std::size_t NL = kt.n_labels;
  const std::size_t NC = kt.n_points;

  // Fused pass: every edge table is read once; both directed messages are
  // accumulated into per-worker buffers merged in worker order (deterministic
  // for a fixed worker count).
  auto run = [NL, NC, &kt](const double* src, double* dst) {
    const std::size_t n_edges = kt.edges.size();
    const unsigned workers = std::max<unsigned>(
        1, std::min<std::size_t>(worker_count(), n_edges / 8 + 1));
    std::vector<std::vector<double>> buf(workers);
    parallel_for(workers, [&](std::size_t wlo, std::size_t whi) {
      for (std::size_t w = wlo; w < whi; ++w) {
        buf[w].assign(NC * NL, 0.0);
        const std::size_t elo = w * n_edges / workers;
        const std::size_t ehi = (w + 1) * n_edges / workers;
        for (std::size_t e = elo; e < ehi; ++e) {
          const auto [i, j] = kt.edges[e];
          const float* t = kt.tables[e].data();
          const double* qi = src + std::size_t(i) * NL;
          const double* qj = src + std::size_t(j) * NL;
          double* mi = buf[w].data() + std::size_t(i) * NL;
          double* mj = buf[w].data() + std::size_t(j) * NL;
          for (std::size_t a = 0; a < NL; ++a) {
            const float* row = t + a * NL;
            double dot = 0.0;
            const double qia = qi[a];
            for (std::size_t b = 0; b < NL; ++b) {
              dot += double(row[b]) * qj[b];
              mj[b] += double(row[b]) * qia;
            }
            mi[a] += dot;
          }
        }
      }
    });
    std::fill_n(dst, NC * NL, 0.0);
    for (unsigned w = 0; w < workers; ++w)
      for (std::size_t k = 0; k < NC * NL; ++k) dst[k] += buf[w][k];
  };

  auto qn = q.node();
  auto out = detail::new_node(NC, NL, qn->needs_grad, {qn});
  run(qn->value.data(), out->value.data());
  check_output_finite(*out, "crf_pair_message");

  if (out->needs_grad) {
    // The adjoint has the same edge structure with transposed tables; the
    // fused pass already handles a table and its transpose together.
    out->backward = [qn, tables, run](detail::Node& n) {
      if (!qn->needs_grad) return;
      std::vector<double> tmp(n.size());
      run(n.grad.data(), tmp.data());
      double* gq = qn->grad.data();
      for (std::size_t k = 0; k < n.size(); ++k) gq[k] += tmp[k];
    };
  }
  return Tensor(std::move(out));
}

Tensor mean_field_step(const Tensor& q, const Tensor& unary,
                       std::shared_ptr<const KernelTables> tables, const CrfParams& params) {
  const Tensor message = mul(crf_pair_message(q, std::move(tables)), params.omega);
  const Tensor compat = matmul_nt(message, params.mu);  // p_i(a) = sum_a' mu(a,a') m_i(a')
  return softmax_rows(sub(unary, compat));
}

Tensor crf_rnn_forward(const Tensor& unary, std::shared_ptr<const KernelTables> tables,
                       const CrfParams& params) {
  if (params.iterations < 1) throw ConfigError("crf: iteration count must be at least 1");
  Tensor q = softmax_rows(unary);
  for (int t = 0; t < params.iterations; ++t) q = mean_field_step(q, unary, tables, params);
  return q;
}

Tensor unary_softmax(const Tensor& logits) { return softmax_rows(logits); }

Tensor downsample_logits(const Tensor& logits, int from_order, int to_order,
                         const MeshStack& stack) {
  if (from_order < to_order)
    throw ConfigError("downsample_logits: data order below the control order");
  if (from_order >= int(stack.meshes.size()))
    throw ConfigError("downsample_logits: mesh stack does not reach the data order");
  Tensor h = logits;
  for (int k = from_order; k > to_order; --k) h = hex_mean_pool(h, stack.pool[k - 1]);
  return h;
}

double crf_energy(const std::vector<int>& labeling, const std::vector<double>& unary_logp,
                  const KernelTables& tables, const std::vector<double>& mu, double omega) {
  const std::size_t NL = tables.n_labels;
  if (labeling.size() != tables.n_points) throw ShapeError("crf_energy: labeling size");
  for (int l : labeling)
    if (l < 0 || std::size_t(l) >= NL) throw IndexError("crf_energy: label out of range");

  double e = 0.0;
  for (std::size_t i = 0; i < labeling.size(); ++i) e -= unary_logp[i * NL + labeling[i]];
  for (std::size_t ed = 0; ed < tables.edges.size(); ++ed) {
    const auto [i, j] = tables.edges[ed];
    const int a = labeling[i], b = labeling[j];
    e += mu[a * NL + b] * omega * double(tables.tables[ed][a * NL + b]);
  }
  return e;
}

namespace {

std::shared_ptr<const std::vector<int>> label_group_offsets(const LabelSpace& labels) {
  auto off = std::make_shared<std::vector<int>>(labels.n_points + 1);
  for (std::size_t i = 0; i <= labels.n_points; ++i) (*off)[i] = int(i * labels.n_labels);
  return off;
}

Tensor label_coord_tensor(const LabelSpace& labels) {
  std::vector<double> data(labels.n_points * labels.n_labels * 3);
  for (std::size_t k = 0; k < labels.label_coord.size(); ++k) {
    data[k * 3 + 0] = labels.label_coord[k].x;
    data[k * 3 + 1] = labels.label_coord[k].y;
    data[k * 3 + 2] = labels.label_coord[k].z;
  }
  return Tensor::constant(labels.label_coord.size(), 3, data);
}

}  // namespace

Tensor expected_deformation(const Tensor& q, const LabelSpace& labels) {
  if (q.rows() != labels.n_points || q.cols() != labels.n_labels)
    throw ShapeError("expected_deformation: distribution shape mismatch");
  const Tensor coords = label_coord_tensor(labels);
  const Tensor weights = reshape(q, q.size(), 1);
  const Tensor sums = segment_sum(mul(coords, weights), label_group_offsets(labels));
  const Tensor norm = sqrt_t(row_sum(mul(sums, sums)));
  // A zero-length weighted sum (antipodal cancellation) divides to non-finite
  // values and trips the numeric guard.
  return affine(div(sums, norm), labels.radius, 0.0);
}

std::vector<Vec3> expected_deformation_positions(const Tensor& q, const LabelSpace& labels) {
  const Tensor out = expected_deformation(q, labels);
  std::vector<Vec3> p(labels.n_points);
  for (std::size_t i = 0; i < labels.n_points; ++i)
    p[i] = {out.data()[i * 3], out.data()[i * 3 + 1], out.data()[i * 3 + 2]};
  return p;
}

std::vector<Vec3> map_deformation(const Tensor& q, const LabelSpace& labels) {
  if (q.rows() != labels.n_points || q.cols() != labels.n_labels)
    throw ShapeError("map_deformation: distribution shape mismatch");
  std::vector<Vec3> out(labels.n_points);
  for (std::size_t i = 0; i < labels.n_points; ++i) {
    const double* row = q.data() + i * labels.n_labels;
    std::size_t best = 0;
    for (std::size_t a = 1; a < labels.n_labels; ++a)
      if (row[a] > row[best]) best = a;  // ties keep the lowest index
    out[i] = labels.coord(i, best);
  }
  return out;
}

}  // namespace ddr
