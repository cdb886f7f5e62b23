// Binary feature (DDRS) and warp (DDRF) containers plus the metrics CSV.
#pragma once

#include <string>

#include "ddr/mesh.hpp"
#include "ddr/objective.hpp"
#include "ddr/warp.hpp"

namespace ddr {

// DDRS: magic, version byte, order (u32 LE), channels (u32 LE), radius (f64),
// vertex-major little-endian f64 payload.
void write_feature_file(const std::string& path, const FeatureMap& map, double radius);

struct FeatureFile {
  FeatureMap map;
  double radius = 0.0;
};
FeatureFile read_feature_file(const std::string& path);

// DDRF: magic, version byte, order (u32 LE), radius (f64), 3*N f64 positions.
void write_warp_file(const std::string& path, const WarpField& warp);
WarpField read_warp_file(const std::string& path);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& subject, double cc, const StrainReport& strain);

}  // namespace ddr
