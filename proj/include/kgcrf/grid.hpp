#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kgcrf/errors.hpp"

namespace kgcrf {

// Row-major H x W x C lattice, channel index fastest.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;

  Grid2D(std::size_t height, std::size_t width, std::size_t channels, T fill = T{})
      : height_(height), width_(width), channels_(channels), data_(height * width * channels, fill) {
    check_dims();
  }

  Grid2D(std::size_t height, std::size_t width, std::size_t channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_dims();
    if (data_.size() != height_ * width_ * channels_) {
      throw ShapeError("grid data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(height_) + "x" + std::to_string(width_) + "x" +
                       std::to_string(channels_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * width_ + col) * channels_ + ch];
  }
  const T& at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * width_ + col) * channels_ + ch];
  }

  // Channel vector of the pixel with flat index `pixel` (row * width + col).
  std::span<T> pixel(std::size_t pixel) { return {data_.data() + pixel * channels_, channels_}; }
  std::span<const T> pixel(std::size_t pixel) const {
    return {data_.data() + pixel * channels_, channels_};
  }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_lattice(const Grid2D& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  template <typename U>
  bool same_lattice(const Grid2D<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;

 private:
  void check_dims() const {
    if (height_ < 1 || width_ < 1 || channels_ < 1) {
      throw ShapeError("grid dimensions must be >= 1, got " + std::to_string(height_) + "x" +
                       std::to_string(width_) + "x" + std::to_string(channels_));
    }
  }

  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<T> data_;
};

using RealGrid = Grid2D<double>;

// Dense row-major real matrix; used for K x K label matrices.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  static Matrix square(std::size_t n, double fill = 0.0) { return Matrix(n, n, fill); }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Per-pixel categorical distribution over K labels. Every instance satisfies
// the probability invariants; construction re-normalizes or throws.
class ProbMap {
 public:
  static constexpr double kSumTolerance = 1e-6;

  // Validates values in [0, 1] and per-pixel sums within kSumTolerance of 1,
  // then re-normalizes each pixel exactly.
  static ProbMap from_grid(RealGrid grid);

  // Accepts any finite nonnegative grid with positive per-pixel mass and
  // normalizes it. Used for internally produced distributions.
  static ProbMap normalize(RealGrid grid);

  std::size_t height() const noexcept { return grid_.height(); }
  std::size_t width() const noexcept { return grid_.width(); }
  std::size_t pixels() const noexcept { return grid_.pixels(); }
  std::size_t num_labels() const noexcept { return grid_.channels(); }

  double operator()(std::size_t pixel, std::size_t label) const {
    return grid_.values()[pixel * grid_.channels() + label];
  }
  std::span<const double> pixel(std::size_t pixel) const { return grid_.pixel(pixel); }

  const RealGrid& grid() const noexcept { return grid_; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  friend bool operator==(const ProbMap&, const ProbMap&) = default;

 private:
  explicit ProbMap(RealGrid grid);

  RealGrid grid_;
  std::vector<int> labels_;
};

// Dense per-pixel descriptors; all values finite.
class FeatureMap {
 public:
  explicit FeatureMap(RealGrid grid);

  std::size_t height() const noexcept { return grid_.height(); }
  std::size_t width() const noexcept { return grid_.width(); }
  std::size_t pixels() const noexcept { return grid_.pixels(); }
  std::size_t dims() const noexcept { return grid_.channels(); }
  std::span<const double> pixel(std::size_t pixel) const { return grid_.pixel(pixel); }
  const RealGrid& grid() const noexcept { return grid_; }

 private:
  RealGrid grid_;
};

// Hard segmentation with values in [0, num_labels).
class LabelMap {
 public:
  LabelMap(Grid2D<std::int64_t> grid, std::size_t num_labels);

  std::size_t height() const noexcept { return grid_.height(); }
  std::size_t width() const noexcept { return grid_.width(); }
  std::size_t pixels() const noexcept { return grid_.pixels(); }
  std::size_t num_labels() const noexcept { return num_labels_; }
  std::int64_t operator[](std::size_t pixel) const { return grid_.values()[pixel]; }
  const Grid2D<std::int64_t>& grid() const noexcept { return grid_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  Grid2D<std::int64_t> grid_;
  std::size_t num_labels_;
};

// Per-pixel argmax; ties resolve to the lowest label index.
LabelMap argmax(const ProbMap& p);

// One-hot distribution of a label map (exact 0/1 entries).
ProbMap one_hot(const LabelMap& m);

// Converts a real grid holding integral label values (as read from NPY).
LabelMap to_label_map(const RealGrid& grid, std::size_t num_labels);

RealGrid to_real(const LabelMap& m);

}  // namespace kgcrf
