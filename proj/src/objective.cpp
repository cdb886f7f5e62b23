#include "ddr/objective.hpp"

#include <algorithm>
#include <cmath>

namespace ddr {

double mse(const FeatureMap& a, const FeatureMap& b) {
  if (a.order != b.order || a.channels != b.channels || a.values.size() != b.values.size())
    throw ShapeError("mse: feature maps differ in shape");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    acc += d * d;
  }
  return acc / double(a.values.size());
}

Tensor mse_graph(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return mean_all(mul(d, d));
}

CcResult cross_correlation(const FeatureMap& a, const FeatureMap& b) {
  if (a.order != b.order || a.channels != b.channels || a.values.size() != b.values.size())
    throw ShapeError("cross_correlation: feature maps differ in shape");
  const std::size_t ch = a.channels;
  const std::size_t n = a.values.size() / ch;
  CcResult res;
  res.degenerate.assign(ch, false);
  double sum = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      ma += a.at(v, c);
      mb += b.at(v, c);
    }
    ma /= double(n);
    mb /= double(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double da = a.at(v, c) - ma, db = b.at(v, c) - mb;
      cov += da * db;
      va += da * da;
      vb += db * db;
    }
    va /= double(n);
    vb /= double(n);
    cov /= double(n);
    if (va <= 1e-15 || vb <= 1e-15) {
      res.degenerate[c] = true;  // constant channel contributes 0
      continue;
    }
    sum += cov / std::sqrt(va * vb);
  }
  res.value = sum / double(ch);
  return res;
}

Tensor cross_correlation_graph(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("cross_correlation_graph: shapes differ");
  const Tensor ca = sub(a, col_mean(a));
  const Tensor cb = sub(b, col_mean(b));
  const Tensor cov = col_mean(mul(ca, cb));
  const Tensor va = col_mean(mul(ca, ca));
  const Tensor vb = col_mean(mul(cb, cb));
  return mean_all(div(cov, sqrt_t(mul(va, vb))));
}

DiffusionGeometry DiffusionGeometry::build(const Icosphere& mesh) {
  DiffusionGeometry g;
  g.n_vertices = mesh.vertex_count();
  auto center = std::make_shared<std::vector<int>>();
  auto neighbor = std::make_shared<std::vector<int>>();
  auto off = std::make_shared<std::vector<int>>();
  std::vector<double> inv_len;
  off->push_back(0);
  for (std::size_t v = 0; v < g.n_vertices; ++v) {
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e) {
      const int u = mesh.adj[e];
      center->push_back(int(v));
      neighbor->push_back(u);
      inv_len.push_back(1.0 /
                        (angle_between(mesh.vertices[v], mesh.vertices[u]) * mesh.radius));
    }
    off->push_back(int(center->size()));
  }
  g.edge_center = std::move(center);
  g.edge_neighbor = std::move(neighbor);
  g.offsets = std::move(off);
  g.inv_length = Tensor::constant(inv_len.size(), 1, inv_len);
  std::vector<double> base(g.n_vertices * 3);
  for (std::size_t v = 0; v < g.n_vertices; ++v) {
    base[v * 3] = mesh.vertices[v].x;
    base[v * 3 + 1] = mesh.vertices[v].y;
    base[v * 3 + 2] = mesh.vertices[v].z;
  }
  g.base = Tensor::constant(g.n_vertices, 3, base);
  return g;
}

Tensor diffusion_penalty_graph(const Tensor& positions, const DiffusionGeometry& geom) {
  if (positions.rows() != geom.n_vertices || positions.cols() != 3)
    throw ShapeError("diffusion_penalty_graph: positions must be n_vertices x 3");
  const Tensor disp = sub(positions, geom.base);
  const Tensor diff =
      sub(gather_rows(disp, geom.edge_center), gather_rows(disp, geom.edge_neighbor));
  const Tensor scaled = mul(abs_t(diff), geom.inv_length);
  const Tensor per_vertex = segment_mean(scaled, geom.offsets);  // n x 3
  return col_mean(row_sum(per_vertex));
}

double diffusion_penalty(const WarpField& warp, const Icosphere& mesh) {
  if (warp.order != mesh.order || warp.positions.size() != mesh.vertex_count())
    throw ShapeError("diffusion_penalty: warp does not live on this mesh");
  double total = 0.0;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v) {
    const Vec3 dv = warp.positions[v] - mesh.vertices[v];
    double axis_sum[3] = {0, 0, 0};
    const int deg = mesh.degree(int(v));
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e) {
      const int u = mesh.adj[e];
      const Vec3 du = warp.positions[u] - mesh.vertices[u];
      const double len = angle_between(mesh.vertices[v], mesh.vertices[u]) * mesh.radius;
      axis_sum[0] += std::fabs(dv.x - du.x) / len;
      axis_sum[1] += std::fabs(dv.y - du.y) / len;
      axis_sum[2] += std::fabs(dv.z - du.z) / len;
    }
    total += (axis_sum[0] + axis_sum[1] + axis_sum[2]) / double(deg);
  }
  return total / double(mesh.vertex_count());
}

LossBreakdown registration_loss(const FeatureMap& fixed, const FeatureMap& warped,
                                const WarpField& warp, const Icosphere& mesh, double lambda) {
  LossBreakdown lb;
  lb.mse = mse(fixed, warped);
  lb.cc = cross_correlation(fixed, warped).value;
  lb.diffusion = diffusion_penalty(warp, mesh);
  lb.lambda = lambda;
  lb.total = lb.mse + (1.0 - lb.cc) + lambda * lb.diffusion;
  return lb;
}

RegistrationLossGraph registration_loss_graph(const Tensor& fixed, const Tensor& warped,
                                              const Tensor& positions,
                                              const DiffusionGeometry& geom, double lambda) {
  RegistrationLossGraph out;
  out.mse = mse_graph(fixed, warped);
  out.cc = cross_correlation_graph(fixed, warped);
  out.diffusion = diffusion_penalty_graph(positions, geom);
  out.total = add(add(out.mse, affine(out.cc, -1.0, 1.0)), affine(out.diffusion, lambda, 0.0));
  return out;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const Tensor& p : params_) {
    if (!p.requires_grad()) throw ContractError("adam: parameter does not require gradients");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamOptimizer::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, double(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, double(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    const double* g = p.grad();
    if (!g) continue;
    double* x = p.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g[i];
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      x[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

namespace {

// Singular values and determinant sign of a 2x2 matrix, closed form.
void svd2(const double f[2][2], double& s1, double& s2, double& det) {
  det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
  const double e = 0.5 * (f[0][0] + f[1][1]);
  const double h = 0.5 * (f[0][0] - f[1][1]);
  const double fv = 0.5 * (f[0][1] + f[1][0]);
  const double g = 0.5 * (f[0][1] - f[1][0]);
  const double q = std::sqrt(e * e + g * g);
  const double r = std::sqrt(h * h + fv * fv);
  s1 = q + r;
  s2 = std::fabs(q - r);
}

}  // namespace

std::vector<FaceStrain> deformation_gradient_strains(const Icosphere& mesh,
                                                     const WarpField& warp) {
  if (warp.order != mesh.order || warp.positions.size() != mesh.vertex_count())
    throw ShapeError("strains: warp does not live on this mesh");
  const double area_floor = 1e-12 * mesh.radius * mesh.radius;

  std::vector<FaceStrain> out(mesh.face_count());
  parallel_for(mesh.face_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t fi = lo; fi < hi; ++fi) {
      const Face& f = mesh.faces[fi];
      FaceStrain& s = out[fi];

      // In-plane frames; normals oriented outward so a reflected face flips
      // the sign of det F.
      auto frame_coords = [](const Vec3& a, const Vec3& b, const Vec3& c, double coords[2][2],
                             double area_floor_local) -> bool {
        const Vec3 e1 = b - a, e2 = c - a;
        Vec3 n = e1.cross(e2);
        const double n2 = n.norm();
        if (0.5 * n2 < area_floor_local) return false;
        const Vec3 centroid = (a + b + c) * (1.0 / 3.0);
        if (n.dot(centroid) < 0.0) n = n * -1.0;
        const Vec3 u1 = e1.normalized();
        const Vec3 u2 = (n * (1.0 / n.norm())).cross(u1);
        coords[0][0] = e1.dot(u1);
        coords[1][0] = 0.0;
        coords[0][1] = e2.dot(u1);
        coords[1][1] = e2.dot(u2);
        return true;
      };

      double src[2][2], dst[2][2];
      if (!frame_coords(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]], src,
                        area_floor))
        throw NumericError("strains: degenerate source face");
      if (!frame_coords(warp.positions[f[0]], warp.positions[f[1]], warp.positions[f[2]], dst,
                        area_floor)) {
        s.degenerate = true;
        continue;
      }

      // F = D * S^-1 maps source edge coordinates to deformed ones.
      const double det_s = src[0][0] * src[1][1];
      const double inv[2][2] = {{src[1][1] / det_s, -src[0][1] / det_s},
                                {0.0, src[0][0] / det_s}};
      double fmat[2][2];
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          fmat[i][j] = dst[i][0] * inv[0][j] + dst[i][1] * inv[1][j];

      double det;
      svd2(fmat, s.lambda1, s.lambda2, det);
      s.folded = det < 0.0;
    }
  });
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw ShapeError("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (double(values.size()) - 1.0) * p / 100.0;
  const std::size_t lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = h - double(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

StrainReport strain_report(const std::vector<FaceStrain>& strains) {
  StrainReport rep;
  std::vector<double> abs_log2j, log2r;
  for (const FaceStrain& s : strains) {
    if (s.degenerate) {
      ++rep.degenerate_faces;
      continue;
    }
    if (s.folded) ++rep.folded_faces;
    const double j = s.lambda1 * s.lambda2;
    const double r = s.lambda1 / s.lambda2;
    abs_log2j.push_back(std::fabs(std::log2(j)));
    log2r.push_back(std::log2(r));
  }
  if (abs_log2j.empty()) throw ShapeError("strain_report: no valid faces");
  rep.valid_faces = abs_log2j.size();
  double sj = 0.0, sr = 0.0;
  for (double x : abs_log2j) {
    sj += x;
    rep.max_abs_log2j = std::max(rep.max_abs_log2j, x);
  }
  for (double x : log2r) {
    sr += x;
    rep.max_log2r = std::max(rep.max_log2r, x);
  }
  rep.mean_abs_log2j = sj / double(abs_log2j.size());
  rep.mean_log2r = sr / double(log2r.size());
  rep.p95_abs_log2j = percentile(abs_log2j, 95.0);
  rep.p98_abs_log2j = percentile(abs_log2j, 98.0);
  return rep;
}

}  // namespace ddr
