#include "ddr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <utility>

namespace ddr {

double angle_between(const Vec3& a, const Vec3& b) {
  // atan2 form is stable for nearly parallel and nearly antipodal vectors.
  const Vec3 c = a.cross(b);
  return std::atan2(c.norm(), a.dot(b));
}

std::size_t icosphere_vertex_count(int order) {
  return 10u * (std::size_t(1) << (2 * order)) + 2u;
}

namespace {

struct BaseMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
};

BaseMesh base_icosahedron() {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  BaseMesh m;
  m.vertices = {
      {-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
      {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1},
  };
  m.faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
  };
  return m;
}

void build_adjacency(Icosphere& mesh) {
  const int nv = int(mesh.vertices.size());
  // Successor map around each vertex: face (v, a, b) means b follows a in the
  // CCW ring of v (faces are CCW viewed from outside).
  std::vector<std::vector<std::pair<int, int>>> succ(nv);
  std::vector<std::vector<int>> vface(nv);
  for (int fi = 0; fi < int(mesh.faces.size()); ++fi) {
    const Face& f = mesh.faces[fi];
    for (int k = 0; k < 3; ++k) {
      const int v = f[k], a = f[(k + 1) % 3], b = f[(k + 2) % 3];
      succ[v].push_back({a, b});
      vface[v].push_back(fi);
    }
  }

  mesh.adj_offsets.assign(nv + 1, 0);
  mesh.adj.clear();
  mesh.adj.reserve(std::size_t(nv) * 6);
  for (int v = 0; v < nv; ++v) {
    auto& ring = succ[v];
    int start = ring[0].first;
    for (const auto& e : ring) start = std::min(start, std::min(e.first, e.second));
    int cur = start;
    const std::size_t degree = ring.size();
    for (std::size_t i = 0; i < degree; ++i) {
      mesh.adj.push_back(cur);
      int next = -1;
      for (const auto& e : ring)
        if (e.first == cur) {
          next = e.second;
          break;
        }
      if (next < 0) throw NumericError("icosphere adjacency: open vertex fan");
      cur = next;
    }
    if (cur != start) throw NumericError("icosphere adjacency: fan does not close");
    mesh.adj_offsets[v + 1] = int(mesh.adj.size());
  }

  mesh.vface_offsets.assign(nv + 1, 0);
  mesh.vfaces.clear();
  mesh.vfaces.reserve(std::size_t(nv) * 6);
  for (int v = 0; v < nv; ++v) {
    std::sort(vface[v].begin(), vface[v].end());
    mesh.vfaces.insert(mesh.vfaces.end(), vface[v].begin(), vface[v].end());
    mesh.vface_offsets[v + 1] = int(mesh.vfaces.size());
  }
}

}  // namespace

Icosphere build_icosphere(int order, double radius) {
  if (order < 0 || order > 8) throw ConfigError("icosphere order must be in 0..8");
  if (!(radius > 0.0)) throw ConfigError("icosphere radius must be positive");

  const BaseMesh base = base_icosahedron();
  Icosphere mesh;
  mesh.order = order;
  mesh.radius = radius;
  mesh.vertices.reserve(icosphere_vertex_count(order));
  for (const Vec3& v : base.vertices) mesh.vertices.push_back(v.normalized() * radius);
  mesh.faces = base.faces;
  mesh.midpoint_parents.assign(12, {-1, -1});
  mesh.levels.push_back(mesh.faces);

  for (int level = 1; level <= order; ++level) {
    // Unique undirected parent edges in sorted order; the midpoint of the
    // k-th edge becomes vertex (old_count + k).
    std::vector<std::pair<int, int>> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const Face& f : mesh.faces)
      for (int k = 0; k < 3; ++k) {
        const int a = f[k], b = f[(k + 1) % 3];
        edges.push_back({std::min(a, b), std::max(a, b)});
      }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    const int old_count = int(mesh.vertices.size());
    for (const auto& [a, b] : edges) {
      const Vec3 mid = (mesh.vertices[a] + mesh.vertices[b]) * 0.5;
      mesh.vertices.push_back(mid.normalized() * radius);
      mesh.midpoint_parents.push_back({a, b});
    }

    auto midpoint = [&](int a, int b) {
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      const auto it = std::lower_bound(edges.begin(), edges.end(), key);
      return old_count + int(it - edges.begin());
    };

    std::vector<Face> fine;
    fine.reserve(mesh.faces.size() * 4);
    for (const Face& f : mesh.faces) {
      const int m01 = midpoint(f[0], f[1]);
      const int m12 = midpoint(f[1], f[2]);
      const int m20 = midpoint(f[2], f[0]);
      fine.push_back({f[0], m01, m20});
      fine.push_back({f[1], m12, m01});
      fine.push_back({f[2], m20, m12});
      fine.push_back({m01, m12, m20});
    }
    mesh.faces = std::move(fine);
    mesh.levels.push_back(mesh.faces);
  }

  build_adjacency(mesh);
  return mesh;
}

std::vector<int> vertex_neighbors(const Icosphere& mesh, int v) {
  if (v < 0 || std::size_t(v) >= mesh.vertex_count())
    throw IndexError("vertex index out of range");
  return {mesh.neighbors_begin(v), mesh.neighbors_begin(v) + mesh.degree(v)};
}

PoolingMap pooling_map(const Icosphere& fine) {
  if (fine.order < 1) throw ConfigError("pooling map needs order >= 1 (no coarser level)");
  PoolingMap pm;
  pm.coarse_order = fine.order - 1;
  pm.coarse_count = icosphere_vertex_count(pm.coarse_order);
  pm.offsets.assign(pm.coarse_count + 1, 0);
  pm.fine_indices.reserve(pm.coarse_count * 7);
  for (std::size_t i = 0; i < pm.coarse_count; ++i) {
    pm.fine_indices.push_back(int(i));
    const int deg = fine.degree(int(i));
    const int* nb = fine.neighbors_begin(int(i));
    pm.fine_indices.insert(pm.fine_indices.end(), nb, nb + deg);
    pm.offsets[i + 1] = int(pm.fine_indices.size());
  }
  return pm;
}

namespace {

constexpr double kBaryTol = 1e-12;

// Barycentric weights of p's central (gnomonic) projection onto the plane of
// face f. Returns the minimum weight, or -inf when p is on the far side.
double face_weights(const std::vector<Vec3>& verts, const Face& f, const Vec3& p,
                    std::array<double, 3>& w) {
  const Vec3 &a = verts[f[0]], &b = verts[f[1]], &c = verts[f[2]];
  const Vec3 n = (b - a).cross(c - a);
  const double s = n.dot(p);
  if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
  const Vec3 pp = p * (n.dot(a) / s);

  const Vec3 v0 = b - a, v1 = c - a, v2 = pp - a;
  const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
  const double d20 = v2.dot(v0), d21 = v2.dot(v1);
  const double denom = d00 * d11 - d01 * d01;
  w[1] = (d11 * d20 - d01 * d21) / denom;
  w[2] = (d00 * d21 - d01 * d20) / denom;
  w[0] = 1.0 - w[1] - w[2];
  return std::min({w[0], w[1], w[2]});
}

BaryLocation finish_location(int face, std::array<double, 3> w) {
  double sum = 0.0;
  for (double& wi : w) {
    if (wi < 0.0) wi = 0.0;
    sum += wi;
  }
  for (double& wi : w) wi /= sum;
  return {face, w};
}

}  // namespace

BaryLocation locate_triangle_exhaustive(const Icosphere& mesh, const Vec3& p) {
  const Vec3 q = p.normalized() * mesh.radius;
  std::array<double, 3> w{}, best_w{};
  int best = -1;
  double best_min = -std::numeric_limits<double>::infinity();
  for (int fi = 0; fi < int(mesh.faces.size()); ++fi) {
    const double m = face_weights(mesh.vertices, mesh.faces[fi], q, w);
    if (m >= -kBaryTol) return finish_location(fi, w);
    if (m > best_min) {
      best_min = m;
      best = fi;
      best_w = w;
    }
  }
  return finish_location(best, best_w);
}

BaryLocation locate_triangle(const Icosphere& mesh, const Vec3& p) {
  if (!(p.norm() > 0.0)) throw NumericError("locate_triangle: zero-length query");
  const Vec3 q = p.normalized() * mesh.radius;

  std::array<double, 3> w{}, best_w{};
  int cur = -1;
  double best_min = -std::numeric_limits<double>::infinity();
  for (int fi = 0; fi < 20; ++fi) {
    const double m = face_weights(mesh.vertices, mesh.levels[0][fi], q, w);
    if (m >= -kBaryTol) {
      cur = fi;
      break;
    }
    if (m > best_min) {
      best_min = m;
      cur = fi;
    }
  }

  // Child spherical triangles tile their parent exactly, so a 4-way test per
  // level suffices; the least-violating child absorbs roundoff stragglers.
  for (int level = 1; level <= mesh.order; ++level) {
    int next = -1;
    best_min = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 4; ++k) {
      const int fi = 4 * cur + k;
      const double m = face_weights(mesh.vertices, mesh.levels[level][fi], q, w);
      if (m >= -kBaryTol) {
        next = fi;
        break;
      }
      if (m > best_min) {
        best_min = m;
        next = fi;
      }
    }
    cur = next;
  }

  // Resolve boundary ties exactly as the exhaustive scan would: take the
  // lowest-index containing face among all faces incident to cur's vertices.
  const Face& f = mesh.faces[cur];
  std::array<int, 64> cand{};
  int nc = 0;
  for (int k = 0; k < 3; ++k) {
    const int v = f[k];
    for (int i = mesh.vface_offsets[v]; i < mesh.vface_offsets[v + 1]; ++i)
      cand[nc++] = mesh.vfaces[i];
  }
  std::sort(cand.begin(), cand.begin() + nc);
  int prev = -1;
  for (int i = 0; i < nc; ++i) {
    if (cand[i] == prev) continue;
    prev = cand[i];
    const double m = face_weights(mesh.vertices, mesh.faces[cand[i]], q, w);
    if (m >= -kBaryTol) return finish_location(cand[i], w);
  }
  return locate_triangle_exhaustive(mesh, q);
}

std::vector<BaryLocation> locate_all(const Icosphere& mesh, const std::vector<Vec3>& queries) {
  std::vector<BaryLocation> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = locate_triangle(mesh, queries[i]);
  });
  return out;
}

std::vector<double> barycentric_resample(const FeatureMap& values, const Icosphere& source,
                                         const std::vector<Vec3>& queries) {
  if (values.order != source.order)
    throw ShapeError("barycentric_resample: feature map order does not match mesh");
  if (values.values.size() != source.vertex_count() * values.channels)
    throw ShapeError("barycentric_resample: feature map size mismatch");
  const std::size_t ch = values.channels;
  std::vector<double> out(queries.size() * ch);
  parallel_for(queries.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const BaryLocation loc = locate_triangle(source, queries[i]);
      const Face& f = source.faces[loc.face];
      for (std::size_t c = 0; c < ch; ++c) {
        out[i * ch + c] = loc.weights[0] * values.at(f[0], c) +
                          loc.weights[1] * values.at(f[1], c) +
                          loc.weights[2] * values.at(f[2], c);
      }
    }
  });
  return out;
}

EdgePseudoCoords edge_pseudo_coords(const Icosphere& mesh) {
  const std::size_t nv = mesh.vertex_count();
  std::vector<double> theta(nv), phi(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3& p = mesh.vertices[v];
    const double rho = std::hypot(p.x, p.y);
    theta[v] = std::atan2(rho, p.z);
    const bool at_pole = theta[v] < 1e-9 || kPi - theta[v] < 1e-9;
    phi[v] = at_pole ? 0.0 : std::atan2(p.y, p.x);
  }

  EdgePseudoCoords pc;
  pc.offsets = mesh.adj_offsets;
  pc.dtheta.resize(mesh.adj.size());
  pc.dphi.resize(mesh.adj.size());
  for (std::size_t v = 0; v < nv; ++v) {
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e) {
      const int u = mesh.adj[e];
      pc.dtheta[e] = theta[u] - theta[v];
      double d = std::remainder(phi[u] - phi[v], 2.0 * kPi);
      if (d <= -kPi) d = kPi;  // wrap into (-pi, pi]
      pc.dphi[e] = d;
    }
  }
  return pc;
}

double mean_edge_length(const Icosphere& mesh) {
  return mean_edge_angle(mesh) * mesh.radius;
}

double mean_edge_angle(const Icosphere& mesh) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < mesh.vertex_count(); ++v)
    for (int e = mesh.adj_offsets[v]; e < mesh.adj_offsets[v + 1]; ++e) {
      const int u = mesh.adj[e];
      if (u <= int(v)) continue;
      sum += angle_between(mesh.vertices[v], mesh.vertices[u]);
      ++count;
    }
  return sum / double(count);
}

void write_mesh_text(const Icosphere& mesh, std::ostream& os) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "icosphere %d %.17g %zu %zu\n", mesh.order, mesh.radius,
                mesh.vertex_count(), mesh.face_count());
  os << buf;
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    os << buf;
  }
  for (const Face& f : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", f[0], f[1], f[2]);
    os << buf;
  }
}

}  // namespace ddr
