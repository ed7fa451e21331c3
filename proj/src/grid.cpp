#include "kgcrf/grid.hpp"

#include <cmath>
#include <numeric>

namespace kgcrf {

ProbMap::ProbMap(RealGrid grid) : grid_(std::move(grid)), labels_(grid_.channels()) {
  std::iota(labels_.begin(), labels_.end(), 0);
}

ProbMap ProbMap::from_grid(RealGrid grid) {
  const std::size_t k = grid.channels();
  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    auto px = grid.pixel(i);
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      const double v = px[m];
      if (!std::isfinite(v) || v < 0.0 || v > 1.0 + kSumTolerance) {
        throw DataError("probability " + std::to_string(v) + " out of [0, 1] at pixel " +
                        std::to_string(i) + ", label " + std::to_string(m));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      throw DataError("probabilities at pixel " + std::to_string(i) + " sum to " +
                      std::to_string(sum));
    }
    for (auto& v : px) v = std::min(v, 1.0) / sum;
  }
  return ProbMap(std::move(grid));
}

ProbMap ProbMap::normalize(RealGrid grid) {
  for (std::size_t i = 0; i < grid.pixels(); ++i) {
    auto px = grid.pixel(i);
    double sum = 0.0;
    for (double v : px) {
      if (!std::isfinite(v) || v < 0.0) {
        throw DataError("cannot normalize value " + std::to_string(v) + " at pixel " +
                        std::to_string(i));
      }
      sum += v;
    }
    if (!(sum > 0.0)) throw DataError("zero mass at pixel " + std::to_string(i));
    for (auto& v : px) v /= sum;
  }
  return ProbMap(std::move(grid));
}

FeatureMap::FeatureMap(RealGrid grid) : grid_(std::move(grid)) {
  for (double v : grid_.values()) {
    if (!std::isfinite(v)) throw DataError("feature map contains a non-finite value");
  }
}

LabelMap::LabelMap(Grid2D<std::int64_t> grid, std::size_t num_labels)
    : grid_(std::move(grid)), num_labels_(num_labels) {
  if (grid_.channels() != 1) throw ShapeError("label map must have one channel");
  for (std::int64_t v : grid_.values()) {
    if (v < 0 || static_cast<std::size_t>(v) >= num_labels_) {
      throw DataError("label " + std::to_string(v) + " outside [0, " +
                      std::to_string(num_labels_) + ")");
    }
  }
}

LabelMap argmax(const ProbMap& p) {
  Grid2D<std::int64_t> out(p.height(), p.width(), 1);
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    auto px = p.pixel(i);
    std::size_t best = 0;
    for (std::size_t m = 1; m < px.size(); ++m) {
      if (px[m] > px[best]) best = m;
    }
    out.values()[i] = static_cast<std::int64_t>(best);
  }
  return LabelMap(std::move(out), p.num_labels());
}

ProbMap one_hot(const LabelMap& m) {
  RealGrid g(m.height(), m.width(), m.num_labels(), 0.0);
  for (std::size_t i = 0; i < m.pixels(); ++i) g.pixel(i)[static_cast<std::size_t>(m[i])] = 1.0;
  return ProbMap::from_grid(std::move(g));
}

LabelMap to_label_map(const RealGrid& grid, std::size_t num_labels) {
  if (grid.channels() != 1) throw ShapeError("label tensor must be H x W");
  Grid2D<std::int64_t> out(grid.height(), grid.width(), 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = grid.values()[i];
    if (v != std::floor(v)) throw DataError("non-integral label value " + std::to_string(v));
    out.values()[i] = static_cast<std::int64_t>(v);
  }
  return LabelMap(std::move(out), num_labels);
}

RealGrid to_real(const LabelMap& m) {
  RealGrid g(m.height(), m.width(), 1);
  for (std::size_t i = 0; i < m.pixels(); ++i) g.values()[i] = static_cast<double>(m[i]);
  return g;
}

}  // namespace kgcrf
