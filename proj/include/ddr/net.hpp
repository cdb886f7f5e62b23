// Spherical network blocks: MoNet convolution over closed 1-rings, hexagonal
// pooling / transpose upsampling, the U-Net, the feedforward spherical
// network, and the rotation head with 6D rotation decoding.
#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "ddr/mesh.hpp"
#include "ddr/tensor.hpp"

namespace ddr {

// Closed-ring edge structure of one icosphere: per vertex, the self edge
// (pseudo-coordinate (0,0)) followed by its 1-ring, CSR layout.
struct ConvGeometry {
  int order = 0;
  std::size_t n_vertices = 0;
  double mean_edge_angle = 0.0;
  std::shared_ptr<const std::vector<int>> edge_src;
  std::shared_ptr<const std::vector<int>> offsets;
  Tensor pseudo;  // E x 2 constant

  static ConvGeometry build(const Icosphere& mesh);
};

// Pooling neighborhoods plus the slot-indexed edge lists used by the
// transpose upsampling (slot 0 = center, slots 1.. = ring positions).
struct PoolGeometry {
  std::size_t n_fine = 0, n_coarse = 0;
  std::shared_ptr<const std::vector<int>> gather_fine;    // pooling gather list
  std::shared_ptr<const std::vector<int>> pool_offsets;   // per-coarse CSR

  struct Slot {
    std::shared_ptr<const std::vector<int>> coarse_src;    // per pair
    std::shared_ptr<const std::vector<int>> fine_offsets;  // CSR over fine vertices
  };
  std::vector<Slot> slots;

  // Adjoint helper: pairs (fine <- coarse, 1/|pool entry|) over all slots.
  std::shared_ptr<const std::vector<int>> adj_coarse_src;
  std::shared_ptr<const std::vector<int>> adj_fine_offsets;
  Tensor adj_scale;  // column of 1/|pool entry| per pair

  static PoolGeometry build(const PoolingMap& pm);
};

// Gaussian-mixture convolution kernel. Precisions are stored as logs so they
// stay positive under optimization.
struct MoNetKernel {
  std::vector<Tensor> mu;        // K tensors, 1 x 2
  std::vector<Tensor> log_prec;  // K tensors, 1 x 2
  std::vector<Tensor> weight;    // K tensors, C_in x C_out
  Tensor bias;                   // 1 x C_out

  std::size_t kernel_size() const { return mu.size(); }
  std::size_t in_channels() const { return weight.front().rows(); }
  std::size_t out_channels() const { return weight.front().cols(); }
};

// Means start on a ring of radius edge_angle at evenly spaced directions;
// precisions start at 1/edge_angle^2; weights uniform scaled by 1/sqrt(fan_in).
MoNetKernel make_monet_kernel(std::size_t kernel_size, std::size_t c_in, std::size_t c_out,
                              double edge_angle, Rng& rng);

// out(v) = bias + sum_k [Gaussian-weighted average of features over the closed
// ring of v] * W_k, with per-ring normalization by the total Gaussian mass.
Tensor monet_conv(const Tensor& features, const ConvGeometry& geom, const MoNetKernel& kernel);

Tensor hex_mean_pool(const Tensor& fine_features, const PoolGeometry& geom);

// Learnable transpose of the pooling pattern: fine vertex value is the sum of
// (slot weight matrix * coarse value) over the pooling neighborhoods that
// contain it. 5-degree coarse vertices use 6 of the 7 slot matrices.
Tensor hex_transpose_upsample(const Tensor& coarse_features, const PoolGeometry& geom,
                              const std::vector<Tensor>& slot_weights);

// Exact linear adjoint of hex_mean_pool (positional weights tied to the
// reciprocal pooling-neighborhood size). Test oracle, no parameters.
Tensor hex_upsample_adjoint(const Tensor& coarse_features, const PoolGeometry& geom);

// Meshes plus conv/pool geometries for orders 0..top, shared across networks.
struct MeshStack {
  double radius = 1.0;
  std::vector<Icosphere> meshes;       // index = order
  std::vector<ConvGeometry> conv;      // index = order
  std::vector<PoolGeometry> pool;      // pool[k] maps order k+1 -> k

  const Icosphere& mesh(int order) const { return meshes.at(order); }
  static std::shared_ptr<const MeshStack> build(int top_order, double radius);
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

struct UNetConfig {
  int top_order = 6;
  std::size_t in_channels = 2;
  std::size_t c1 = 32;
  // Six resolution stages when the data order allows, fewer at desk scale.
  std::size_t stages(int) const;
};

struct UNet {
  UNetConfig config;
  std::size_t n_stages = 0;
  std::vector<std::array<MoNetKernel, 2>> enc;
  std::vector<std::vector<Tensor>> up_weights;  // per decoder stage, 7 slot matrices
  std::vector<std::array<MoNetKernel, 2>> dec;

  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters(const std::string& prefix) const;
};

UNet make_unet(const UNetConfig& cfg, const MeshStack& stack, Rng& rng);
Tensor unet_forward(const Tensor& input, const UNet& net, const MeshStack& stack);

struct FsnParams {
  std::vector<MoNetKernel> layers;
  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters(const std::string& prefix) const;
};

// Channel schedule must end at the label count; leaky rectifier between
// layers, none after the last.
FsnParams make_fsn(std::size_t c_in, const std::vector<std::size_t>& schedule,
                   std::size_t n_labels, double edge_angle, Rng& rng);
Tensor fsn_forward(const Tensor& features, const FsnParams& fsn, const ConvGeometry& geom);

// 6D rotation decoding (Gram-Schmidt of two 3-vectors).
struct Mat3 {
  std::array<std::array<double, 3>, 3> m{};
  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

Mat3 rot6d_to_matrix(const std::array<double, 6>& v);

// Differentiable variant; returns the 3x3 matrix with rows r1, r2, r3, i.e.
// the transpose of the rotation, ready for right-multiplication of N x 3
// vertex arrays.
Tensor rot6d_graph(const Tensor& six);

struct RotationHead {
  UNet unet;
  Tensor dense_w;  // C1 x 6
  Tensor dense_b;  // 1 x 6
  std::vector<Tensor> parameters() const;
  std::vector<NamedParam> named_parameters(const std::string& prefix) const;
};

RotationHead make_rotation_head(const UNetConfig& cfg, const MeshStack& stack, Rng& rng);

// U-Net features -> global mean over vertices -> dense map -> 6 reals ->
// Gram-Schmidt. Returns the transposed rotation (see rot6d_graph).
Tensor rotation_net_forward(const Tensor& input, const RotationHead& head,
                            const MeshStack& stack);

Mat3 tensor_to_rotation(const Tensor& rot_rows);

}  // namespace ddr
