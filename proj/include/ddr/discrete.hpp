// Control grids, label spaces, the label-probability head, and the CRF
// mean-field regularizer.
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "ddr/mesh.hpp"
#include "ddr/net.hpp"
#include "ddr/tensor.hpp"

namespace ddr {

struct ControlGrid {
  int order = 0;
  double radius = 1.0;
  std::size_t n_points = 0;
  std::vector<Vec3> positions;
  std::vector<int> adj_offsets, adj;        // 1-ring over control points
  std::vector<std::array<int, 2>> edges;    // each unordered pair once, i < j
};

ControlGrid build_control_grid(int order, double radius);

// Per-control-point candidate deformation endpoints: the n_labels nearest
// label-mesh vertices by angular distance, ascending, ties by vertex index.
// Label 0 is the nearest vertex to the control point itself.
struct LabelSpace {
  int label_order = 0;
  std::size_t n_points = 0;
  std::size_t n_labels = 0;
  double radius = 1.0;
  std::vector<int> label_vertex;   // n_points * n_labels
  std::vector<Vec3> label_coord;   // n_points * n_labels

  const Vec3& coord(std::size_t point, std::size_t label) const {
    return label_coord[point * n_labels + label];
  }
  // Chord distances among one control point's own labels (n_labels^2,
  // row-major); computed on demand, label geometry is static.
  std::vector<double> label_distance_table(std::size_t point) const;
};

LabelSpace build_label_space(const ControlGrid& grid, const Icosphere& label_mesh,
                             std::size_t n_labels);

struct CrfParams {
  Tensor mu;     // n_labels x n_labels learnable label compatibility
  Tensor omega;  // 1 x 1 learnable kernel weight
  std::array<double, 9> lambda{1, 0, 0, 0, 1, 0, 0, 0, 1};  // fixed SPD matrix
  double gamma = 0.7;
  int iterations = 5;

  std::vector<Tensor> parameters() const { return {mu, omega}; }
  std::vector<NamedParam> named_parameters(const std::string& prefix) const {
    return {{prefix + "crf.mu", mu}, {prefix + "crf.omega", omega}};
  }
};

// mu starts at the Potts matrix (0 diagonal, 1 off), omega at 1.
CrfParams make_crf_params(std::size_t n_labels, double gamma, int iterations);

// Gaussian kernel tables of Eq-style pairwise costs for every control edge,
// excluding the learnable omega factor (it multiplies at use time). Entries
// exp(-d_Lambda(l_a@i, l_b@j) / (2 gamma^2)) with coordinates in units of the
// sphere radius; stored single-precision, accumulated in double.
struct KernelTables {
  std::size_t n_labels = 0;
  std::vector<std::array<int, 2>> edges;
  std::vector<std::vector<float>> tables;  // per edge, row = label of edges[e][0]
  std::size_t n_points = 0;
};

KernelTables build_kernel_tables(const ControlGrid& grid, const LabelSpace& labels,
                                 const CrfParams& params);

// Closed-form Eq. 5 value including omega; unit-radius coordinates.
double pairwise_kernel_value(const Vec3& la, const Vec3& lb, double radius, double omega,
                             double gamma, const std::array<double, 9>& lambda);

// Table lookup including omega (test surface for the precomputed tables).
double kernel_entry(const KernelTables& kt, std::size_t edge, std::size_t a, std::size_t b,
                    double omega);

// Raw pairwise message: m_i(a) = sum over neighbors j and labels b of
// K[(i,j)][a][b] * Q_j(b). One tape operation with a fused two-direction pass.
Tensor crf_pair_message(const Tensor& q, std::shared_ptr<const KernelTables> tables);

// One synchronous mean-field update: softmax(unary - mu^T applied to the
// omega-scaled message). Differentiable in q, unary, mu, omega.
Tensor mean_field_step(const Tensor& q, const Tensor& unary,
                       std::shared_ptr<const KernelTables> tables, const CrfParams& params);

// T unrolled mean-field iterations from Q0 = softmax(unary).
Tensor crf_rnn_forward(const Tensor& unary, std::shared_ptr<const KernelTables> tables,
                       const CrfParams& params);

// Row-wise softmax of control-resolution logits (Q = softmax(U)).
Tensor unary_softmax(const Tensor& logits);

// Repeated hexagonal mean pooling of data-order logits down to the control
// order, one label channel at a time.
Tensor downsample_logits(const Tensor& logits, int from_order, int to_order,
                         const MeshStack& stack);

// Test oracle: Eq. 3 energy of a hard labeling. `unary_logp` holds row-wise
// log-likelihoods (log-softmax of the classifier logits).
double crf_energy(const std::vector<int>& labeling, const std::vector<double>& unary_logp,
                  const KernelTables& tables, const std::vector<double>& mu, double omega);

// Soft decode used in training: expected label coordinate, re-projected to
// the sphere. Differentiable; throws on antipodal cancellation.
Tensor expected_deformation(const Tensor& q, const LabelSpace& labels);

// Hard decode used at inference on request: argmax label coordinate,
// ties to the lowest label index.
std::vector<Vec3> map_deformation(const Tensor& q, const LabelSpace& labels);

// Plain counterpart of expected_deformation for inference paths.
std::vector<Vec3> expected_deformation_positions(const Tensor& q, const LabelSpace& labels);

}  // namespace ddr
