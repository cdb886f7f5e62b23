#include "ddr/warp.hpp"

#include <cmath>

namespace ddr {

WarpField identity_warp(const Icosphere& mesh) {
  return {mesh.order, mesh.radius, mesh.vertices};
}

WarpField rotation_warp(const Icosphere& mesh, const Mat3& rotation) {
  WarpField w{mesh.order, mesh.radius, {}};
  w.positions.reserve(mesh.vertex_count());
  for (const Vec3& v : mesh.vertices) w.positions.push_back(rotation.apply(v));
  return w;
}

void validate_warp(const WarpField& warp, const Icosphere& mesh) {
  if (warp.order != mesh.order || warp.positions.size() != mesh.vertex_count())
    throw ShapeError("warp does not live on this mesh");
  for (const Vec3& p : warp.positions) {
    if (!all_finite(&p.x, 3)) throw NumericError("warp contains non-finite positions");
    if (std::fabs(p.norm() - warp.radius) > 1e-9 * warp.radius)
      throw NumericError("warp position off the sphere");
  }
}

WarpField upsample_control_warp(const std::vector<Vec3>& deformed_control,
                                const Icosphere& control_mesh, const Icosphere& data_mesh) {
  if (deformed_control.size() != control_mesh.vertex_count())
    throw ShapeError("upsample_control_warp: deformed positions size mismatch");
  if (control_mesh.order > data_mesh.order)
    throw ConfigError("upsample_control_warp: control order above the data order");

  WarpField out{data_mesh.order, data_mesh.radius, {}};
  out.positions.resize(data_mesh.vertex_count());
  parallel_for(data_mesh.vertex_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t v = lo; v < hi; ++v) {
      const BaryLocation loc = locate_triangle(control_mesh, data_mesh.vertices[v]);
      const Face& f = control_mesh.faces[loc.face];
      const Vec3 p = deformed_control[f[0]] * loc.weights[0] +
                     deformed_control[f[1]] * loc.weights[1] +
                     deformed_control[f[2]] * loc.weights[2];
      out.positions[v] = p.normalized() * data_mesh.radius;
    }
  });
  return out;
}

BaryUpsample BaryUpsample::build(const Icosphere& control_mesh, const Icosphere& data_mesh) {
  BaryUpsample up;
  up.n_data = data_mesh.vertex_count();
  up.radius = data_mesh.radius;
  const std::vector<BaryLocation> locs = locate_all(control_mesh, data_mesh.vertices);
  std::vector<double> w[3];
  for (int k = 0; k < 3; ++k) {
    up.corner[k].resize(up.n_data);
    w[k].resize(up.n_data);
  }
  for (std::size_t v = 0; v < up.n_data; ++v) {
    const Face& f = control_mesh.faces[locs[v].face];
    for (int k = 0; k < 3; ++k) {
      up.corner[k][v] = f[k];
      w[k][v] = locs[v].weights[k];
    }
  }
  for (int k = 0; k < 3; ++k) up.weight[k] = Tensor::constant(up.n_data, 1, w[k]);
  return up;
}

Tensor upsample_control_warp_graph(const Tensor& deformed_control, const BaryUpsample& up) {
  if (deformed_control.cols() != 3)
    throw ShapeError("upsample_control_warp_graph: expected n x 3 positions");
  Tensor acc;
  for (int k = 0; k < 3; ++k) {
    const Tensor part = mul(gather_rows(deformed_control, up.corner[k]), up.weight[k]);
    acc = acc.defined() ? add(acc, part) : part;
  }
  const Tensor norm = sqrt_t(row_sum(mul(acc, acc)));
  return affine(div(acc, norm), up.radius, 0.0);
}

FeatureMap apply_warp(const FeatureMap& moving, const Icosphere& mesh, const WarpField& warp) {
  if (moving.order != mesh.order || warp.order != mesh.order)
    throw ShapeError("apply_warp: orders do not match");
  FeatureMap out{moving.order, moving.channels, {}};
  out.values = barycentric_resample(moving, mesh, warp.positions);
  return out;
}

Tensor apply_warp_graph(const Tensor& moving, const Icosphere& mesh, const Tensor& positions) {
  if (moving.rows() != mesh.vertex_count())
    throw ShapeError("apply_warp_graph: moving map does not live on this mesh");
  if (positions.cols() != 3 || positions.rows() != mesh.vertex_count())
    throw ShapeError("apply_warp_graph: positions must be n_vertices x 3");

  const std::size_t n = positions.rows();
  std::vector<Vec3> query(n);
  for (std::size_t v = 0; v < n; ++v)
    query[v] = {positions.data()[v * 3], positions.data()[v * 3 + 1],
                positions.data()[v * 3 + 2]};
  const std::vector<BaryLocation> locs = locate_all(mesh, query);

  // Differentiable barycentric weights: with p' the central projection onto
  // the face plane, each weight is affine in p', and p' = (n.A / n.p) p, so
  // w_k(p) = (n.A) (alpha_k . p) / (n.p) + beta_k with face constants alpha,
  // beta. Row-wise dot products carry the gradient into the positions.
  std::vector<double> nvec(n * 3), avec[3], bvec[3];
  std::vector<int> corner[3];
  for (int k = 0; k < 3; ++k) {
    avec[k].resize(n * 3);
    bvec[k].resize(n);
    corner[k].resize(n);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const Face& f = mesh.faces[locs[v].face];
    const Vec3 &A = mesh.vertices[f[0]], &B = mesh.vertices[f[1]], &C = mesh.vertices[f[2]];
    const Vec3 v0 = B - A, v1 = C - A;
    const Vec3 nrm = v0.cross(v1);
    const double d = nrm.dot(A);
    const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
    const double denom = d00 * d11 - d01 * d01;
    const Vec3 alpha1 = (v0 * d11 - v1 * d01) * (1.0 / denom);
    const Vec3 alpha2 = (v1 * d00 - v0 * d01) * (1.0 / denom);

    nvec[v * 3] = nrm.x;
    nvec[v * 3 + 1] = nrm.y;
    nvec[v * 3 + 2] = nrm.z;
    const Vec3 da1 = alpha1 * d, da2 = alpha2 * d;
    avec[1][v * 3] = da1.x;
    avec[1][v * 3 + 1] = da1.y;
    avec[1][v * 3 + 2] = da1.z;
    avec[2][v * 3] = da2.x;
    avec[2][v * 3 + 1] = da2.y;
    avec[2][v * 3 + 2] = da2.z;
    bvec[1][v] = -alpha1.dot(A);
    bvec[2][v] = -alpha2.dot(A);
    for (int k = 0; k < 3; ++k) corner[k][v] = f[k];
  }

  const Tensor np = row_sum(mul(positions, Tensor::constant(n, 3, nvec)));
  Tensor w[3];
  for (int k = 1; k < 3; ++k) {
    const Tensor t = row_sum(mul(positions, Tensor::constant(n, 3, avec[k])));
    w[k] = add(div(t, np), Tensor::constant(n, 1, bvec[k]));
  }
  w[0] = sub(Tensor::constant(n, 1, 1.0), add(w[1], w[2]));

  Tensor out;
  for (int k = 0; k < 3; ++k) {
    const Tensor part = mul(gather_rows(moving, corner[k]), w[k]);
    out = out.defined() ? add(out, part) : part;
  }
  return out;
}

WarpField compose_warps(const WarpField& first, const WarpField& second,
                        const Icosphere& mesh) {
  if (first.order != second.order || first.order != mesh.order)
    throw ShapeError("compose_warps: orders do not match");
  if (std::fabs(first.radius - second.radius) > 1e-9 * mesh.radius)
    throw ShapeError("compose_warps: radii do not match");

  WarpField out{mesh.order, mesh.radius, {}};
  out.positions.resize(mesh.vertex_count());
  parallel_for(mesh.vertex_count(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t v = lo; v < hi; ++v) {
      const BaryLocation loc = locate_triangle(mesh, first.positions[v]);
      const Face& f = mesh.faces[loc.face];
      const Vec3 p = second.positions[f[0]] * loc.weights[0] +
                     second.positions[f[1]] * loc.weights[1] +
                     second.positions[f[2]] * loc.weights[2];
      out.positions[v] = p.normalized() * mesh.radius;
    }
  });
  return out;
}

std::vector<Vec3> upsample_grid_hex(const std::vector<Vec3>& deformed,
                                    const Icosphere& fine_mesh) {
  const std::size_t coarse_count = icosphere_vertex_count(fine_mesh.order - 1);
  if (fine_mesh.order < 1) throw ConfigError("upsample_grid_hex: no finer level available");
  if (deformed.size() != coarse_count)
    throw ShapeError("upsample_grid_hex: deformed grid is not one order below the mesh");

  std::vector<Vec3> out(fine_mesh.vertex_count());
  for (std::size_t v = 0; v < coarse_count; ++v) out[v] = deformed[v];
  for (std::size_t v = coarse_count; v < fine_mesh.vertex_count(); ++v) {
    const auto [a, b] = fine_mesh.midpoint_parents[v];
    out[v] = ((deformed[a] + deformed[b]) * 0.5).normalized() * fine_mesh.radius;
  }
  return out;
}

}  // namespace ddr
