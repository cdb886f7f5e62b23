#include "ddr/formats.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace ddr {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("truncated integer field");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, const double* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}

void get_f64(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n * 8));
  if (!is) throw IoError("truncated payload");
}

void check_magic(std::istream& is, const char expect[4], const char* what) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, expect, 4) != 0)
    throw IoError(std::string(what) + ": bad magic");
  const int version = is.get();
  if (version != 1) throw IoError(std::string(what) + ": unsupported version");
}

}  // namespace

void write_feature_file(const std::string& path, const FeatureMap& map, double radius) {
  if (map.values.size() != icosphere_vertex_count(map.order) * map.channels)
    throw ShapeError("feature file: payload does not match order and channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("DDRS", 4);
  os.put(char(1));
  put_u32(os, std::uint32_t(map.order));
  put_u32(os, std::uint32_t(map.channels));
  put_f64(os, &radius, 1);
  put_f64(os, map.values.data(), map.values.size());
  if (!os) throw IoError("write failed: " + path);
}

FeatureFile read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  check_magic(is, "DDRS", "feature file");
  FeatureFile f;
  f.map.order = int(get_u32(is));
  f.map.channels = get_u32(is);
  if (f.map.order < 0 || f.map.order > 8 || f.map.channels == 0 || f.map.channels > 4096)
    throw IoError("feature file: implausible header");
  get_f64(is, &f.radius, 1);
  f.map.values.resize(icosphere_vertex_count(f.map.order) * f.map.channels);
  get_f64(is, f.map.values.data(), f.map.values.size());
  is.peek();
  if (!is.eof()) throw IoError("feature file: trailing bytes");
  return f;
}

void write_warp_file(const std::string& path, const WarpField& warp) {
  if (warp.positions.size() != icosphere_vertex_count(warp.order))
    throw ShapeError("warp file: position count does not match order");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write("DDRF", 4);
  os.put(char(1));
  put_u32(os, std::uint32_t(warp.order));
  put_f64(os, &warp.radius, 1);
  for (const Vec3& p : warp.positions) put_f64(os, &p.x, 3);
  if (!os) throw IoError("write failed: " + path);
}

WarpField read_warp_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  check_magic(is, "DDRF", "warp file");
  WarpField w;
  w.order = int(get_u32(is));
  if (w.order < 0 || w.order > 8) throw IoError("warp file: implausible order");
  get_f64(is, &w.radius, 1);
  w.positions.resize(icosphere_vertex_count(w.order));
  for (Vec3& p : w.positions) get_f64(is, &p.x, 3);
  is.peek();
  if (!is.eof()) throw IoError("warp file: trailing bytes");
  return w;
}

std::string metrics_csv_header() {
  return "subject,cc,mean_abs_log2J,max_abs_log2J,p95_abs_log2J,p98_abs_log2J,"
         "mean_log2R,max_log2R,folded_faces";
}

std::string metrics_csv_row(const std::string& subject, double cc, const StrainReport& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu",
                subject.c_str(), cc, s.mean_abs_log2j, s.max_abs_log2j, s.p95_abs_log2j,
                s.p98_abs_log2j, s.mean_log2r, s.max_log2r, s.folded_faces);
  return buf;
}

}  // namespace ddr
