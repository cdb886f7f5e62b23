#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "ddr/mesh.hpp"
#include "ddr/util.hpp"

using namespace ddr;

TEST_CASE("vertex count formula and basic invariants") {
  for (int k = 0; k <= 4; ++k) {
    const Icosphere m = build_icosphere(k, 1.0);
    CHECK(m.vertex_count() == 10u * (1u << (2 * k)) + 2u);
    CHECK(m.face_count() == 20u * (1u << (2 * k)));
    for (const Vec3& v : m.vertices) CHECK(std::fabs(v.norm() - 1.0) <= 1e-9);

    int fives = 0;
    for (std::size_t v = 0; v < m.vertex_count(); ++v) {
      const int d = m.degree(int(v));
      CHECK((d == 5 || d == 6));
      if (d == 5) ++fives;
    }
    CHECK(fives == 12);

    // Closed 2-manifold: every directed edge appears exactly once and the
    // Euler characteristic is 2.
    std::set<std::pair<int, int>> directed;
    for (const Face& f : m.faces)
      for (int e = 0; e < 3; ++e) {
        const auto ins = directed.insert({f[e], f[(e + 1) % 3]});
        CHECK(ins.second);
      }
    const std::size_t E = directed.size() / 2;
    CHECK(int(m.vertex_count()) - int(E) + int(m.face_count()) == 2);
  }
  CHECK(build_icosphere(6, 1.0).vertex_count() == 40962u);
}

TEST_CASE("order 0 icosahedron and errors") {
  const Icosphere m = build_icosphere(0, 1.0);
  CHECK(m.vertex_count() == 12u);
  CHECK(m.face_count() == 20u);
  for (int v = 0; v < 12; ++v) CHECK(vertex_neighbors(m, v).size() == 5u);
  CHECK_THROWS_AS(build_icosphere(-1, 1.0), ConfigError);
  CHECK_THROWS_AS(build_icosphere(9, 1.0), ConfigError);
  CHECK_THROWS_AS(build_icosphere(2, 0.0), ConfigError);
  CHECK_THROWS_AS(vertex_neighbors(m, 12), IndexError);
}

TEST_CASE("faces are counterclockwise viewed from outside") {
  const Icosphere m = build_icosphere(2, 1.0);
  for (const Face& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]);
    const Vec3 c = (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) * (1.0 / 3.0);
    CHECK(n.dot(c) > 0.0);
  }
}

TEST_CASE("nesting: order-k vertices are an exact prefix of order k+1") {
  for (int k = 0; k <= 3; ++k) {
    const Icosphere coarse = build_icosphere(k, 100.0);
    const Icosphere fine = build_icosphere(k + 1, 100.0);
    for (std::size_t v = 0; v < coarse.vertex_count(); ++v) {
      CHECK(coarse.vertices[v].x == fine.vertices[v].x);
      CHECK(coarse.vertices[v].y == fine.vertices[v].y);
      CHECK(coarse.vertices[v].z == fine.vertices[v].z);
    }
  }
}

TEST_CASE("neighbor degrees after subdivision") {
  const Icosphere m1 = build_icosphere(1, 1.0);
  // Midpoint vertices (index >= 12) all have degree 6.
  for (std::size_t v = 12; v < m1.vertex_count(); ++v)
    CHECK(vertex_neighbors(m1, int(v)).size() == 6u);

  // Cross-check neighbors of vertex 0 at order 2 against face incidence.
  const Icosphere m2 = build_icosphere(2, 1.0);
  std::set<int> from_faces;
  for (const Face& f : m2.faces)
    for (int e = 0; e < 3; ++e)
      if (f[e] == 0) {
        from_faces.insert(f[(e + 1) % 3]);
        from_faces.insert(f[(e + 2) % 3]);
      }
  const auto ring = vertex_neighbors(m2, 0);
  CHECK(ring.size() == 5u);
  CHECK(std::set<int>(ring.begin(), ring.end()) == from_faces);
}

TEST_CASE("adjacency ring order is counterclockwise from outside") {
  const Icosphere m = build_icosphere(2, 1.0);
  for (int v = 0; v < int(m.vertex_count()); ++v) {
    const auto ring = vertex_neighbors(m, v);
    const Vec3& c = m.vertices[v];
    for (std::size_t i = 0; i < ring.size(); ++i) {
      const Vec3& a = m.vertices[ring[i]];
      const Vec3& b = m.vertices[ring[(i + 1) % ring.size()]];
      // Consecutive ring members must form a face with v, wound CCW outward.
      CHECK((a - c).cross(b - c).dot(c) > 0.0);
    }
  }
}

TEST_CASE("mean edge lengths match quoted grid spacings within 15%") {
  const Icosphere m2 = build_icosphere(2, 100.0);
  CHECK(m2.vertex_count() == 162u);
  CHECK(mean_edge_length(m2) == doctest::Approx(26.7).epsilon(0.15));
  const Icosphere m4 = build_icosphere(4, 100.0);
  CHECK(mean_edge_length(m4) == doctest::Approx(6.9).epsilon(0.15));
  const Icosphere m5 = build_icosphere(5, 100.0);
  CHECK(mean_edge_length(m5) == doctest::Approx(3.7).epsilon(0.15));
}

TEST_CASE("pooling map structure") {
  const Icosphere fine = build_icosphere(1, 1.0);
  const PoolingMap pm = pooling_map(fine);
  CHECK(pm.coarse_count == 12u);
  for (std::size_t i = 0; i < pm.coarse_count; ++i) {
    const int len = pm.offsets[i + 1] - pm.offsets[i];
    const int deg = fine.degree(int(i));
    CHECK(len == deg + 1);
    CHECK((len == 6 || len == 7));
    CHECK(pm.fine_indices[pm.offsets[i]] == int(i));
    for (int e = pm.offsets[i]; e < pm.offsets[i + 1]; ++e)
      CHECK(pm.fine_indices[e] < int(fine.vertex_count()));
  }
  // Order-0 vertices are all degree 5, so every entry has 6 indices.
  for (std::size_t i = 0; i < pm.coarse_count; ++i)
    CHECK(pm.offsets[i + 1] - pm.offsets[i] == 6);

  CHECK_THROWS_AS(pooling_map(build_icosphere(0, 1.0)), ConfigError);

  // Mean-pooling a constant map preserves the constant exactly.
  const Icosphere f2 = build_icosphere(2, 1.0);
  const PoolingMap pm2 = pooling_map(f2);
  std::vector<double> vals(f2.vertex_count(), 3.25);
  for (std::size_t i = 0; i < pm2.coarse_count; ++i) {
    double acc = 0.0;
    for (int e = pm2.offsets[i]; e < pm2.offsets[i + 1]; ++e) acc += vals[pm2.fine_indices[e]];
    CHECK(acc / double(pm2.offsets[i + 1] - pm2.offsets[i]) == 3.25);
  }
}

TEST_CASE("locate_triangle basics") {
  const Icosphere m = build_icosphere(3, 1.0);

  // A vertex locates with weight 1 on itself.
  const BaryLocation at_v = locate_triangle(m, m.vertices[17]);
  const Face& f = m.faces[at_v.face];
  double wv = 0.0;
  for (int k = 0; k < 3; ++k)
    if (f[k] == 17) wv = at_v.weights[k];
  CHECK(wv == doctest::Approx(1.0).epsilon(1e-12));

  // A face centroid locates with weights (1/3, 1/3, 1/3).
  const Face& g = m.faces[31];
  const Vec3 centroid =
      ((m.vertices[g[0]] + m.vertices[g[1]] + m.vertices[g[2]]) * (1.0 / 3.0)).normalized();
  const BaryLocation at_c = locate_triangle(m, centroid);
  CHECK(at_c.face == 31);
  for (int k = 0; k < 3; ++k) CHECK(at_c.weights[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

  CHECK_THROWS_AS(locate_triangle(m, Vec3{0, 0, 0}), NumericError);
}

TEST_CASE("locate_triangle agrees with the exhaustive oracle and reconstructs points") {
  const Icosphere m = build_icosphere(3, 100.0);
  Rng rng(991);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto u = rng.unit_vector();
    const Vec3 p{u[0] * 100.0, u[1] * 100.0, u[2] * 100.0};
    const BaryLocation fast = locate_triangle(m, p);
    const BaryLocation slow = locate_triangle_exhaustive(m, p);
    CHECK(fast.face == slow.face);

    // The weights reconstruct the gnomonic projection of p: combining the
    // face vertices and re-projecting to the sphere recovers p.
    const Face& f = m.faces[fast.face];
    const Vec3 rec = (m.vertices[f[0]] * fast.weights[0] + m.vertices[f[1]] * fast.weights[1] +
                      m.vertices[f[2]] * fast.weights[2])
                         .normalized() *
                     100.0;
    CHECK((rec - p).norm() <= 1e-9 * 100.0);
  }
}

TEST_CASE("barycentric resample") {
  const Icosphere m = build_icosphere(3, 1.0);
  Rng rng(5);

  FeatureMap constant{3, 1, std::vector<double>(m.vertex_count(), 2.5)};
  std::vector<Vec3> queries;
  for (int i = 0; i < 200; ++i) {
    const auto u = rng.unit_vector();
    queries.push_back({u[0], u[1], u[2]});
  }
  for (double v : barycentric_resample(constant, m, queries))
    CHECK(v == doctest::Approx(2.5).epsilon(1e-12));

  // Sampling at a vertex returns that vertex's value exactly.
  FeatureMap fm{3, 1, {}};
  fm.values.resize(m.vertex_count());
  for (std::size_t v = 0; v < m.vertex_count(); ++v) fm.values[v] = rng.normal();
  const std::vector<Vec3> vq{m.vertices[100], m.vertices[3]};
  const auto out = barycentric_resample(fm, m, vq);
  CHECK(out[0] == doctest::Approx(fm.values[100]).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(fm.values[3]).epsilon(1e-12));

  // Resampling a map onto the mesh's own vertices is the identity.
  const auto self = barycentric_resample(fm, m, m.vertices);
  for (std::size_t v = 0; v < m.vertex_count(); ++v)
    CHECK(std::fabs(self[v] - fm.values[v]) <= 1e-12);

  // Linear-in-coordinates map: interpolation error bounded by the largest
  // gnomonic chord deviation over faces.
  FeatureMap lin{3, 1, {}};
  lin.values.resize(m.vertex_count());
  for (std::size_t v = 0; v < m.vertex_count(); ++v) lin.values[v] = m.vertices[v].x;
  double max_dev = 0.0;
  for (const Face& f : m.faces) {
    const Vec3 n = (m.vertices[f[1]] - m.vertices[f[0]])
                       .cross(m.vertices[f[2]] - m.vertices[f[0]])
                       .normalized();
    max_dev = std::max(max_dev, 1.0 - n.dot(m.vertices[f[0]]));
  }
  const auto lout = barycentric_resample(lin, m, queries);
  for (std::size_t i = 0; i < queries.size(); ++i)
    CHECK(std::fabs(lout[i] - queries[i].x) <= max_dev + 1e-12);

  FeatureMap wrong{2, 1, std::vector<double>(162, 0.0)};
  CHECK_THROWS_AS(barycentric_resample(wrong, m, queries), ShapeError);
}

TEST_CASE("edge pseudo-coordinates") {
  // Hand-built two-vertex mesh exercises the azimuth wrap: phi_c = 3.1 and
  // phi_n = -3.1 must give a small positive offset, not -6.2.
  Icosphere tiny;
  tiny.order = 0;
  tiny.radius = 1.0;
  const double theta = 1.0;
  tiny.vertices = {
      {std::sin(theta) * std::cos(3.1), std::sin(theta) * std::sin(3.1), std::cos(theta)},
      {std::sin(theta) * std::cos(-3.1), std::sin(theta) * std::sin(-3.1), std::cos(theta)},
  };
  tiny.adj_offsets = {0, 1, 2};
  tiny.adj = {1, 0};
  const EdgePseudoCoords pc = edge_pseudo_coords(tiny);
  CHECK(pc.dtheta[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pc.dphi[0] == doctest::Approx(2 * kPi - 6.2).epsilon(1e-9));
  CHECK(pc.dphi[1] == doctest::Approx(-(2 * kPi - 6.2)).epsilon(1e-9));

  // All polar offsets stay below 2.5x the mean edge angle (exhaustive scan).
  const Icosphere m = build_icosphere(4, 1.0);
  const EdgePseudoCoords mpc = edge_pseudo_coords(m);
  const double bound = 2.5 * mean_edge_angle(m);
  double max_dt = 0.0;
  for (double dt : mpc.dtheta) {
    CHECK(std::isfinite(dt));
    max_dt = std::max(max_dt, std::fabs(dt));
  }
  CHECK(max_dt <= bound);
  for (double dp : mpc.dphi) {
    CHECK(dp > -kPi - 1e-15);
    CHECK(dp <= kPi + 1e-15);
  }
}

TEST_CASE("mesh text export") {
  const Icosphere m = build_icosphere(1, 2.0);
  std::ostringstream os;
  write_mesh_text(m, os);
  std::istringstream is(os.str());
  std::string tag;
  int order, nv, nf;
  double radius;
  is >> tag >> order >> radius >> nv >> nf;
  CHECK(tag == "icosphere");
  CHECK(order == 1);
  CHECK(radius == 2.0);
  CHECK(nv == 42);
  CHECK(nf == 80);
  std::string line;
  std::getline(is, line);
  int vcount = 0, fcount = 0;
  while (std::getline(is, line)) {
    if (line.rfind("v ", 0) == 0) ++vcount;
    if (line.rfind("f ", 0) == 0) ++fcount;
  }
  CHECK(vcount == 42);
  CHECK(fcount == 80);
}
