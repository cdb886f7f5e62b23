#include "ddr/synth.hpp"

#include <cmath>

namespace ddr {

namespace {

struct Bump {
  Vec3 center;
  double sign;
};

std::vector<Bump> random_bumps(Rng& rng, int count) {
  std::vector<Bump> bumps(count);
  for (Bump& b : bumps) {
    const auto u = rng.unit_vector();
    b.center = {u[0], u[1], u[2]};
    b.sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  }
  return bumps;
}

double bump_field(const Vec3& unit_p, const std::vector<Bump>& bumps, double sigma) {
  double acc = 0.0;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (const Bump& b : bumps) {
    const double ang = angle_between(unit_p, b.center);
    acc += b.sign * std::exp(-ang * ang * inv2s2);
  }
  return acc;
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  const Vec3 u = axis.normalized();
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 R;
  R.m = {{{c + u.x * u.x * (1 - c), u.x * u.y * (1 - c) - u.z * s,
           u.x * u.z * (1 - c) + u.y * s},
          {u.y * u.x * (1 - c) + u.z * s, c + u.y * u.y * (1 - c),
           u.y * u.z * (1 - c) - u.x * s},
          {u.z * u.x * (1 - c) - u.y * s, u.z * u.y * (1 - c) + u.x * s,
           c + u.z * u.z * (1 - c)}}};
  return R;
}

}  // namespace

SyntheticSubject synth_subject(std::uint64_t seed, const SynthParams& params,
                               const Icosphere& mesh) {
  if (params.band < 1) throw ConfigError("synth: band must be at least 1");
  if (mesh.order != params.order ||
      std::fabs(mesh.radius - params.radius) > 1e-9 * params.radius)
    throw ConfigError("synth: mesh does not match the synth parameters");

  SyntheticSubject subj;
  subj.seed = seed;
  Rng rng(seed);
  const std::size_t n = mesh.vertex_count();
  const double sigma = kPi / (2.0 * params.band);

  // Feature map: a sum of signed geodesic Gaussian bumps, standardized.
  const auto feature_bumps = random_bumps(rng, params.band * params.band);
  subj.features = FeatureMap{params.order, 1, std::vector<double>(n)};
  for (std::size_t v = 0; v < n; ++v)
    subj.features.values[v] =
        bump_field(mesh.vertices[v] * (1.0 / params.radius), feature_bumps, sigma);
  double mean = 0.0;
  for (double x : subj.features.values) mean += x;
  mean /= double(n);
  double var = 0.0;
  for (double& x : subj.features.values) {
    x -= mean;
    var += x * x;
  }
  var /= double(n);
  const double inv_sd = 1.0 / std::sqrt(std::max(var, 1e-30));
  for (double& x : subj.features.values) x *= inv_sd;

  // Ground-truth warp: exponential-map displacement along a smooth random
  // tangent field (one bump construction per ambient coordinate), scaled so
  // the maximum geodesic displacement equals warp_scale.
  std::vector<Vec3> tangent(n);
  if (params.warp_scale > 0.0) {
    std::array<std::vector<Bump>, 3> field_bumps;
    for (auto& fb : field_bumps) fb = random_bumps(rng, params.band * params.band);
    double max_norm = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const Vec3 unit = mesh.vertices[v] * (1.0 / params.radius);
      Vec3 g{bump_field(unit, field_bumps[0], sigma), bump_field(unit, field_bumps[1], sigma),
             bump_field(unit, field_bumps[2], sigma)};
      g = g - unit * g.dot(unit);
      tangent[v] = g;
      max_norm = std::max(max_norm, g.norm());
    }
    if (max_norm > 0.0)
      for (Vec3& t : tangent) t = t * (1.0 / max_norm);
  }

  Mat3 rot;
  rot.m = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (params.rotation_max_deg > 0.0) {
    const auto axis = rng.unit_vector();
    const double angle = rng.uniform(0.0, params.rotation_max_deg * kPi / 180.0);
    rot = axis_angle({axis[0], axis[1], axis[2]}, angle);
  }
  subj.gt_rotation = rot;

  subj.gt_warp = WarpField{params.order, params.radius, {}};
  subj.gt_warp.positions.resize(n);
  const double max_angle = params.warp_scale / params.radius;
  for (std::size_t v = 0; v < n; ++v) {
    const Vec3 unit = mesh.vertices[v] * (1.0 / params.radius);
    Vec3 p = unit;
    const double tn = tangent[v].norm();
    if (tn > 1e-300) {
      const double theta = max_angle * tn;
      const Vec3 dir = tangent[v] * (1.0 / tn);
      p = unit * std::cos(theta) + dir * std::sin(theta);
    }
    subj.gt_warp.positions[v] = rot.apply(p.normalized() * params.radius);
  }

  subj.moving = apply_warp(subj.features, mesh, subj.gt_warp);
  return subj;
}

std::vector<SyntheticSubject> make_synthetic_cohort(std::size_t count, std::uint64_t seed,
                                                    const SynthParams& params,
                                                    const Icosphere& mesh) {
  // Per-subject seeds come from a splitmix-style stream so cohorts with
  // different counts share prefixes.
  std::vector<SyntheticSubject> cohort;
  cohort.reserve(count);
  Rng seeder(seed);
  for (std::size_t i = 0; i < count; ++i)
    cohort.push_back(synth_subject(seeder.next_u64(), params, mesh));
  return cohort;
}

std::vector<SubjectPair> to_pairs(const std::vector<SyntheticSubject>& cohort) {
  std::vector<SubjectPair> pairs;
  pairs.reserve(cohort.size());
  for (const auto& s : cohort) pairs.push_back({s.features, s.moving});
  return pairs;
}

}  // namespace ddr
