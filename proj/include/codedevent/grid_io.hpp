#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <string>

namespace codedevent {

/// CEO1 grid files: the magic "CEO1", little-endian uint32 rows and cols,
/// then rows*cols little-endian float32 values in row-major order.
void write_ceo1(const std::filesystem::path& path, const Eigen::ArrayXXd& grid);
Eigen::ArrayXXd read_ceo1(const std::filesystem::path& path);

/// Sidecar metadata lives next to the grid as "<file>.meta", one key=value per line.
std::filesystem::path metadata_path(const std::filesystem::path& grid_path);
void write_metadata(const std::filesystem::path& grid_path, const std::map<std::string, std::string>& meta);
std::map<std::string, std::string> read_metadata(const std::filesystem::path& grid_path);

}  // namespace codedevent
