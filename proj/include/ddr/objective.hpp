// Losses (MSE, cross-correlation, diffusion penalty), the adaptive-moment
// optimizer, and strain-based evaluation metrics.
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "ddr/mesh.hpp"
#include "ddr/tensor.hpp"
#include "ddr/warp.hpp"

namespace ddr {

// ---------------------------------------------------------------------------
// Losses. Graph builders carry gradients; plain overloads serve metrics.

double mse(const FeatureMap& a, const FeatureMap& b);
Tensor mse_graph(const Tensor& a, const Tensor& b);

struct CcResult {
  double value = 0.0;                 // mean Pearson correlation over channels
  std::vector<bool> degenerate;      // channels with variance <= 1e-15 contribute 0
  bool any_degenerate() const {
    for (bool d : degenerate)
      if (d) return true;
    return false;
  }
};

CcResult cross_correlation(const FeatureMap& a, const FeatureMap& b);
// Graph version assumes non-degenerate channels (training data is standardized).
Tensor cross_correlation_graph(const Tensor& a, const Tensor& b);

// Constant edge structure for the diffusion penalty on one mesh.
struct DiffusionGeometry {
  std::size_t n_vertices = 0;
  std::shared_ptr<const std::vector<int>> edge_center;
  std::shared_ptr<const std::vector<int>> edge_neighbor;
  std::shared_ptr<const std::vector<int>> offsets;  // per-center CSR
  Tensor inv_length;  // 1 / geodesic edge length, per directed edge
  Tensor base;        // undeformed vertex positions, n x 3

  static DiffusionGeometry build(const Icosphere& mesh);
};

// Mean over vertices of the sum over the 3 coordinate axes of the 1-ring mean
// of |displacement difference| / geodesic edge length.
double diffusion_penalty(const WarpField& warp, const Icosphere& mesh);
Tensor diffusion_penalty_graph(const Tensor& positions, const DiffusionGeometry& geom);

struct LossBreakdown {
  double mse = 0.0;
  double cc = 0.0;
  double diffusion = 0.0;
  double lambda = 0.0;
  double total = 0.0;  // mse + (1 - cc) + lambda * diffusion, by construction
};

LossBreakdown registration_loss(const FeatureMap& fixed, const FeatureMap& warped,
                                const WarpField& warp, const Icosphere& mesh, double lambda);

struct RegistrationLossGraph {
  Tensor total, mse, cc, diffusion;
};

RegistrationLossGraph registration_loss_graph(const Tensor& fixed, const Tensor& warped,
                                              const Tensor& positions,
                                              const DiffusionGeometry& geom, double lambda);

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer over parameter tensors.

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, AdamConfig config = {});

  // Applies one update using the gradients of the last backward pass;
  // parameters without a recorded gradient are left untouched.
  void step();
  std::int64_t step_count() const { return step_; }
  const std::vector<Tensor>& parameters() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Strain metrics from the per-face deformation gradient.

struct FaceStrain {
  double lambda1 = 1.0;  // singular values of the 2x2 deformation gradient
  double lambda2 = 1.0;  // lambda1 >= lambda2 >= 0
  bool folded = false;      // orientation reversal (det F < 0)
  bool degenerate = false;  // deformed area below 1e-12 R^2; excluded from summaries
};

std::vector<FaceStrain> deformation_gradient_strains(const Icosphere& mesh,
                                                     const WarpField& warp);

struct StrainReport {
  double mean_abs_log2j = 0.0;
  double max_abs_log2j = 0.0;
  double p95_abs_log2j = 0.0;
  double p98_abs_log2j = 0.0;
  double mean_log2r = 0.0;
  double max_log2r = 0.0;
  std::size_t folded_faces = 0;
  std::size_t degenerate_faces = 0;
  std::size_t valid_faces = 0;
};

StrainReport strain_report(const std::vector<FaceStrain>& strains);

// Linear-interpolation percentile of an unsorted sample (p in [0, 100]).
double percentile(std::vector<double> values, double p);

}  // namespace ddr
