// Deformation fields on icospheres: upsampling control deformations,
// feature resampling (pull-back convention), composition, and the hexagonal
// grid upsampling used in the coarse-to-fine handoff.
#pragma once

#include <vector>

#include "ddr/discrete.hpp"
#include "ddr/mesh.hpp"
#include "ddr/net.hpp"
#include "ddr/tensor.hpp"

namespace ddr {

// Per-vertex deformed positions on the sphere of the source mesh's radius.
struct WarpField {
  int order = 0;
  double radius = 1.0;
  std::vector<Vec3> positions;
};

WarpField identity_warp(const Icosphere& mesh);
WarpField rotation_warp(const Icosphere& mesh, const Mat3& rotation);

// Checks the on-sphere invariant (|norm - R| <= 1e-9 R, all finite).
void validate_warp(const WarpField& warp, const Icosphere& mesh);

// Barycentric upsampling of deformed control positions to the data mesh: each
// data vertex is located in the undeformed control triangulation once, then
// its deformed position is the re-projected weight combination of the three
// deformed control points.
WarpField upsample_control_warp(const std::vector<Vec3>& deformed_control,
                                const Icosphere& control_mesh, const Icosphere& data_mesh);

// Static part of the upsampling (locations in the undeformed control mesh),
// reusable across training steps.
struct BaryUpsample {
  std::size_t n_data = 0;
  double radius = 1.0;
  std::vector<int> corner[3];  // control-point index per data vertex
  Tensor weight[3];            // n_data x 1 constants

  static BaryUpsample build(const Icosphere& control_mesh, const Icosphere& data_mesh);
};

// Differentiable version over deformed control positions (n_c x 3).
Tensor upsample_control_warp_graph(const Tensor& deformed_control, const BaryUpsample& up);

// Pull-back resampling: warped(v) = moving sampled at warp(v).
FeatureMap apply_warp(const FeatureMap& moving, const Icosphere& mesh, const WarpField& warp);

// Differentiable in the warp positions; faces are re-located at every
// evaluation, the barycentric weights carry the gradient.
Tensor apply_warp_graph(const Tensor& moving, const Icosphere& mesh, const Tensor& positions);

// (second o first)(v): second's deformed positions interpolated at first(v),
// re-projected to the sphere.
WarpField compose_warps(const WarpField& first, const WarpField& second,
                        const Icosphere& mesh);

// Deformed grid at order k -> order k+1: nested vertices keep their deformed
// positions, midpoints take the re-projected average of their parent-edge
// endpoints. fine_mesh supplies the parent map.
std::vector<Vec3> upsample_grid_hex(const std::vector<Vec3>& deformed,
                                    const Icosphere& fine_mesh);

}  // namespace ddr
