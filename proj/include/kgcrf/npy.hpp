#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kgcrf/grid.hpp"

namespace kgcrf::npy {

// Reads an NPY (v1.0 or v2.0) array of rank 2 or 3 into an H x W x C grid.
// Accepted dtypes: f8, f4, i8, i4, u1 in either byte order; Fortran-ordered
// arrays are transposed into row-major layout. Rank-2 arrays get C = 1.
RealGrid read_tensor(const std::filesystem::path& path);
RealGrid decode(const std::vector<std::uint8_t>& bytes);

// Writes a little-endian float64 C-order NPY v1.0 file with the same header
// layout numpy produces. Rank 2 when the grid has one channel and
// `squeeze_single_channel` is set, rank 3 otherwise.
void write_tensor(const RealGrid& grid, const std::filesystem::path& path,
                  bool squeeze_single_channel = false);
std::vector<std::uint8_t> encode(const RealGrid& grid, bool squeeze_single_channel = false);

// Label maps are stored as H x W little-endian int64.
void write_labels(const LabelMap& labels, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_labels(const LabelMap& labels);

}  // namespace kgcrf::npy
