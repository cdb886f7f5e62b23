#include "ddr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ddr/util.hpp"

namespace ddr {

namespace {

constexpr char kMagic[4] = {'D', 'D', 'R', 'W'};
constexpr std::uint8_t kVersion = 1;

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("ddrw: truncated integer field");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, const double* p, std::size_t n) {
  // This artifact targets little-endian hosts; bytes go out verbatim.
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 8));
}

void get_f64(std::istream& is, double* p, std::size_t n) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n * 8));
  if (!is) throw IoError("ddrw: truncated payload");
}

}  // namespace

void write_ddrw(std::ostream& os, const std::vector<DdrwEntry>& entries) {
  os.write(kMagic, 4);
  os.put(char(kVersion));
  for (const auto& e : entries) {
    std::uint64_t count = 1;
    for (auto d : e.dims) count *= d;
    if (count != e.data.size()) throw ShapeError("ddrw: entry dims do not match payload");
    put_u64(os, e.name.size());
    os.write(e.name.data(), std::streamsize(e.name.size()));
    put_u64(os, e.dims.size());
    for (auto d : e.dims) put_u64(os, d);
    put_f64(os, e.data.data(), e.data.size());
  }
  if (!os) throw IoError("ddrw: write failed");
}

std::vector<DdrwEntry> read_ddrw(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("ddrw: bad magic");
  const int version = is.get();
  if (version != kVersion) throw IoError("ddrw: unsupported version");

  std::vector<DdrwEntry> entries;
  while (true) {
    is.peek();
    if (is.eof()) break;
    DdrwEntry e;
    const std::uint64_t name_len = get_u64(is);
    if (name_len > (1u << 20)) throw IoError("ddrw: implausible name length");
    e.name.resize(name_len);
    is.read(e.name.data(), std::streamsize(name_len));
    if (!is) throw IoError("ddrw: truncated name");
    const std::uint64_t rank = get_u64(is);
    if (rank > 8) throw IoError("ddrw: implausible rank");
    e.dims.resize(rank);
    std::uint64_t count = 1;
    for (auto& d : e.dims) {
      d = get_u64(is);
      count *= d;
    }
    e.data.resize(count);
    get_f64(is, e.data.data(), count);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_ddrw_file(const std::string& path, const std::vector<DdrwEntry>& entries) {
  // Write-temp-then-rename keeps checkpoint files atomic.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + tmp);
    write_ddrw(os, entries);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename checkpoint into place: " + path);
}

std::vector<DdrwEntry> read_ddrw_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return read_ddrw(is);
}

}  // namespace ddr
