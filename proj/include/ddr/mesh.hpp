// Icosphere construction, adjacency, pooling maps, spherical barycentric
// location/resampling, and edge pseudo-coordinates.
#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include "ddr/util.hpp"

namespace ddr {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    if (n <= 0.0) throw NumericError("cannot normalize zero-length vector");
    return {x / n, y / n, z / n};
  }
};

// Geodesic angle between two nonzero vectors, robust near 0 and pi.
double angle_between(const Vec3& a, const Vec3& b);

using Face = std::array<int, 3>;

// Vertex count of an order-k icosphere: 10*4^k + 2.
std::size_t icosphere_vertex_count(int order);

// Recursively subdivided icosahedron projected to a sphere. Vertices of order
// k are a prefix of the vertices of order k+1 (nested subdivision ordering);
// midpoint vertices are appended in sorted-parent-edge order. Immutable after
// construction.
struct Icosphere {
  int order = 0;
  double radius = 1.0;
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  // 1-ring adjacency, CSR layout. Neighbors are in counterclockwise order
  // viewed from outside the sphere, starting from the smallest index.
  std::vector<int> adj_offsets;
  std::vector<int> adj;

  // Parent edge endpoints for midpoint vertices (order >= 1); entries for the
  // order-0 prefix are {-1,-1}. parents[i] applies to vertex i of this order.
  std::vector<std::array<int, 2>> midpoint_parents;

  // Face lists of every subdivision level 0..order (levels.back() == faces).
  // Children of face f at level L are faces 4f..4f+3 at level L+1; this makes
  // coarse-to-fine triangle location a 4-way descent.
  std::vector<std::vector<Face>> levels;

  // Top-level vertex -> incident faces, ascending face index, CSR layout.
  std::vector<int> vface_offsets;
  std::vector<int> vfaces;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  int degree(int v) const { return adj_offsets[v + 1] - adj_offsets[v]; }
  const int* neighbors_begin(int v) const { return adj.data() + adj_offsets[v]; }
};

Icosphere build_icosphere(int order, double radius);

// Ordered 1-ring of v (5 or 6 indices, CCW from outside).
std::vector<int> vertex_neighbors(const Icosphere& mesh, int v);

// Per-coarse-vertex fine neighborhoods used by hexagonal mean pooling: entry i
// is fine vertex i followed by its fine 1-ring.
struct PoolingMap {
  int coarse_order = 0;
  std::size_t coarse_count = 0;
  std::vector<int> offsets;       // coarse_count + 1
  std::vector<int> fine_indices;  // grouped per coarse vertex, center first
};

PoolingMap pooling_map(const Icosphere& fine);

struct BaryLocation {
  int face = -1;
  std::array<double, 3> weights{};  // nonnegative, sum to 1
};

// Locates the face containing p (projected to the sphere) via a coarse-to-fine
// descent through the subdivision levels; ties on edges resolve to the lowest
// face index, matching an exhaustive scan.
BaryLocation locate_triangle(const Icosphere& mesh, const Vec3& p);

// Reference implementation: scan all faces in ascending index order.
BaryLocation locate_triangle_exhaustive(const Icosphere& mesh, const Vec3& p);

// Per-vertex multi-channel scalars on an icosphere of a given order.
struct FeatureMap {
  int order = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // vertex-major: values[v*channels + c]

  double& at(std::size_t v, std::size_t c) { return values[v * channels + c]; }
  double at(std::size_t v, std::size_t c) const { return values[v * channels + c]; }
};

std::vector<BaryLocation> locate_all(const Icosphere& mesh, const std::vector<Vec3>& queries);

// Barycentric interpolation of `values` (defined on `source`) at query points.
// Output is query-major with values.channels entries per query.
std::vector<double> barycentric_resample(const FeatureMap& values, const Icosphere& source,
                                         const std::vector<Vec3>& queries);

// Relative angular offsets (dtheta, dphi) for each directed 1-ring edge,
// aligned with the adjacency CSR. theta is the polar angle from +z, phi the
// azimuth; dphi is wrapped into (-pi, pi]. Vertices within 1e-9 rad of a pole
// take phi = 0.
struct EdgePseudoCoords {
  std::vector<int> offsets;  // same as mesh.adj_offsets
  std::vector<double> dtheta;
  std::vector<double> dphi;
};

EdgePseudoCoords edge_pseudo_coords(const Icosphere& mesh);

// Mean 1-ring geodesic edge length (and angle) over all undirected edges.
double mean_edge_length(const Icosphere& mesh);
double mean_edge_angle(const Icosphere& mesh);

// Plain-text mesh export: header line, then `v x y z` and `f i j k` lines.
void write_mesh_text(const Icosphere& mesh, std::ostream& os);

}  // namespace ddr
