#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "kgcrf/errors.hpp"
#include "kgcrf/npy.hpp"

using namespace kgcrf;

namespace {

std::filesystem::path fixture(const char* name) { return std::filesystem::path(KGCRF_TEST_DATA) / name; }

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("rank-3 float64 fixture decodes in C order") {
  const RealGrid g = npy::read_tensor(fixture("arange_3x4x5.npy"));
  CHECK(g.height() == 3);
  CHECK(g.width() == 4);
  CHECK(g.channels() == 5);
  for (std::size_t i = 0; i < 60; ++i) CHECK(g.values()[i] == static_cast<double>(i));
}

TEST_CASE("encoder reproduces the reference writer byte for byte") {
  for (const char* name : {"arange_3x4x5.npy", "zeros_2x2.npy", "one_zero_1x1x1.npy"}) {
    const auto bytes = file_bytes(fixture(name));
    const RealGrid g = npy::decode(bytes);
    const bool rank2 = std::strcmp(name, "zeros_2x2.npy") == 0;
    CHECK_MESSAGE(npy::encode(g, rank2) == bytes, name);
  }
}

TEST_CASE("rank-2 arrays get one channel") {
  const RealGrid g = npy::read_tensor(fixture("zeros_2x2.npy"));
  CHECK(g.channels() == 1);
  CHECK(g.pixels() == 4);
}

TEST_CASE("other dtypes and layouts are converted") {
  const RealGrid f32 = npy::read_tensor(fixture("float32_2x3.npy"));
  CHECK(f32.data() == std::vector<double>{0.5, 1.5, -2.0, 3.25, 0.0, 7.0});

  const RealGrid i64 = npy::read_tensor(fixture("int64_2x3.npy"));
  CHECK(i64.data() == std::vector<double>{0, 1, 2, 2, 1, 0});

  const RealGrid fortran = npy::read_tensor(fixture("fortran_2x3.npy"));
  CHECK(fortran.height() == 2);
  CHECK(fortran.width() == 3);
  CHECK(fortran.data() == std::vector<double>{0, 1, 2, 3, 4, 5});

  const RealGrid be = npy::read_tensor(fixture("big_endian_2x2.npy"));
  CHECK(be.data() == std::vector<double>{0, 1, 2, 3});
}

TEST_CASE("invalid tensors are rejected with typed errors") {
  CHECK_THROWS_AS(npy::read_tensor(fixture("rank4.npy")), ShapeError);
  CHECK_THROWS_AS(npy::read_tensor(fixture("nan_2x2.npy")), DataError);
  CHECK_THROWS_AS(npy::read_tensor(fixture("does_not_exist.npy")), IoError);
  CHECK_THROWS_AS(npy::decode({'n', 'o', 't', ' ', 'n', 'p', 'y', 0, 0, 0, 0, 0}), FormatError);

  auto truncated = file_bytes(fixture("arange_3x4x5.npy"));
  truncated.resize(truncated.size() - 8);
  CHECK_THROWS_AS(npy::decode(truncated), FormatError);
}

TEST_CASE("round trip preserves every bit") {
  RealGrid g(3, 2, 2, std::vector<double>{-0.0, 1e-308, 3.5, -7.25, 1e300, 0.1, 2.0 / 3.0, -1.0, 42.0, 5e-324, 1.0, 0.0});
  const auto bytes = npy::encode(g);
  const RealGrid back = npy::decode(bytes);
  CHECK(std::memcmp(back.values().data(), g.values().data(), g.size() * sizeof(double)) == 0);
  CHECK(npy::encode(back) == bytes);
  CHECK((bytes.size() - g.size() * sizeof(double)) % 64 == 0);  // header padded to a 64-byte boundary
}

TEST_CASE("label maps are written as int64") {
  const LabelMap m(Grid2D<std::int64_t>(2, 3, 1, std::vector<std::int64_t>{0, 1, 2, 2, 1, 0}), 3);
  const auto bytes = npy::encode_labels(m);
  CHECK(bytes == file_bytes(fixture("int64_2x3.npy")));
}

TEST_CASE("writing to an unwritable path is an IO error") {
  CHECK_THROWS_AS(npy::write_tensor(RealGrid(1, 1, 1), "/nonexistent_dir/x.npy"), IoError);
}
