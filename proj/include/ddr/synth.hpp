// Synthetic spherical cohort: band-limited random feature fields and smooth
// ground-truth warps, deterministic from a single seed.
#pragma once

#include <cstdint>

#include "ddr/mesh.hpp"
#include "ddr/net.hpp"
#include "ddr/warp.hpp"

namespace ddr {

struct SynthParams {
  int order = 4;
  double radius = 100.0;
  int band = 6;               // roughly band^2 Gaussian bumps of width ~pi/band
  double warp_scale = 30.0;   // maximum geodesic displacement (mm)
  double rotation_max_deg = 0.0;  // optional global rotation folded into the warp
};

struct SyntheticSubject {
  std::uint64_t seed = 0;
  FeatureMap features;   // 1 channel, standardized to zero mean / unit variance
  WarpField gt_warp;     // pull-back ground truth: moving(v) = features(gt_warp(v))
  Mat3 gt_rotation;      // identity unless rotation_max_deg > 0
  FeatureMap moving;     // features resampled through gt_warp
};

SyntheticSubject synth_subject(std::uint64_t seed, const SynthParams& params,
                               const Icosphere& mesh);

struct SubjectPair {
  FeatureMap fixed;
  FeatureMap moving;
};

// count subjects with per-subject seeds derived from the base seed.
std::vector<SyntheticSubject> make_synthetic_cohort(std::size_t count, std::uint64_t seed,
                                                    const SynthParams& params,
                                                    const Icosphere& mesh);

std::vector<SubjectPair> to_pairs(const std::vector<SyntheticSubject>& cohort);

}  // namespace ddr
