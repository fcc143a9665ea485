#include "codedevent/grid_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "codedevent/config.hpp"

namespace codedevent {

namespace {

constexpr std::array<char, 4> kMagic{'C', 'E', 'O', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                       static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  if (!is) throw ConfigError("ceo1: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_ceo1(const std::filesystem::path& path, const Eigen::ArrayXXd& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("ceo1: cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(grid.rows()));
  put_u32(os, static_cast<std::uint32_t>(grid.cols()));
  for (Eigen::Index r = 0; r < grid.rows(); ++r) {
    for (Eigen::Index c = 0; c < grid.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid(r, c)));
      put_u32(os, bits);
    }
  }
  if (!os) throw ConfigError("ceo1: write failed for " + path.string());
}

Eigen::ArrayXXd read_ceo1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("ceo1: cannot open " + path.string());
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) throw ConfigError("ceo1: bad magic in " + path.string());
  const std::uint32_t rows = get_u32(is);
  const std::uint32_t cols = get_u32(is);
  if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw ConfigError("ceo1: implausible size");
  Eigen::ArrayXXd out(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      out(r, c) = std::bit_cast<float>(get_u32(is));
    }
  }
  return out;
}

std::filesystem::path metadata_path(const std::filesystem::path& grid_path) {
  return std::filesystem::path(grid_path.string() + ".meta");
}

void write_metadata(const std::filesystem::path& grid_path, const std::map<std::string, std::string>& meta) {
  std::ofstream os(metadata_path(grid_path));
  if (!os) throw ConfigError("metadata: cannot write " + metadata_path(grid_path).string());
  for (const auto& [k, v] : meta) os << k << '=' << v << '\n';
}

std::map<std::string, std::string> read_metadata(const std::filesystem::path& grid_path) {
  std::ifstream is(metadata_path(grid_path));
  std::map<std::string, std::string> meta;
  if (!is) return meta;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#') continue;
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

}  // namespace codedevent
