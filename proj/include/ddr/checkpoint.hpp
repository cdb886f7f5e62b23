// Binary container for named double tensors: magic "DDRW", one version byte,
// then entries of (name length, name bytes, rank, dims, payload), all integers
// 64-bit little-endian and data little-endian f64.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ddr {

struct DdrwEntry {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

void write_ddrw(std::ostream& os, const std::vector<DdrwEntry>& entries);
std::vector<DdrwEntry> read_ddrw(std::istream& is);

void write_ddrw_file(const std::string& path, const std::vector<DdrwEntry>& entries);
std::vector<DdrwEntry> read_ddrw_file(const std::string& path);

}  // namespace ddr
