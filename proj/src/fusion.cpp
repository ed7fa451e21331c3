#include "kgcrf/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "kgcrf/errors.hpp"

namespace kgcrf {

RealGrid resample_to(const RealGrid& grid, std::size_t target_h, std::size_t target_w) {
  if (target_h < 1 || target_w < 1) throw ShapeError("resample target must be at least 1x1");
  if (grid.height() == target_h && grid.width() == target_w) return grid;

  const std::size_t c = grid.channels();
  RealGrid out(target_h, target_w, c);
  auto src_coord = [](std::size_t dst, std::size_t dst_n, std::size_t src_n) {
    if (dst_n == 1) return 0.0;
    return static_cast<double>(dst) * static_cast<double>(src_n - 1) / static_cast<double>(dst_n - 1);
  };
  for (std::size_t r = 0; r < target_h; ++r) {
    const double y = src_coord(r, target_h, grid.height());
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, grid.height() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t col = 0; col < target_w; ++col) {
      const double x = src_coord(col, target_w, grid.width());
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, grid.width() - 1);
      const double fx = x - static_cast<double>(x0);
      for (std::size_t k = 0; k < c; ++k) {
        const double top = (1.0 - fx) * grid.at(y0, x0, k) + fx * grid.at(y0, x1, k);
        const double bottom = (1.0 - fx) * grid.at(y1, x0, k) + fx * grid.at(y1, x1, k);
        out.at(r, col, k) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

LevelStack::LevelStack(std::vector<RealGrid> levels, std::vector<RealGrid> uncertainties) {
  if (levels.empty()) throw ShapeError("fusion needs at least one level");
  if (uncertainties.size() != 1 && uncertainties.size() != levels.size()) {
    throw ShapeError("expected 1 or " + std::to_string(levels.size()) + " uncertainty maps, got " +
                     std::to_string(uncertainties.size()));
  }
  const std::size_t channels = levels.front().channels();
  std::size_t h = 0;
  std::size_t w = 0;
  for (const auto& l : levels) {
    if (l.channels() != channels) {
      throw ShapeError("fusion levels differ in channel count (" + std::to_string(channels) + " vs " +
                       std::to_string(l.channels()) + ")");
    }
    h = std::max(h, l.height());
    w = std::max(w, l.width());
  }
  for (const auto& u : uncertainties) {
    if (u.channels() != 1) throw ShapeError("uncertainty maps must have one channel");
  }
  for (auto& l : levels) levels_.push_back(resample_to(l, h, w));
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const RealGrid& u = uncertainties.size() == 1 ? uncertainties.front() : uncertainties[l];
    uncertainties_.push_back(resample_to(u, h, w));
  }
}

std::vector<RealGrid> fusion_weights(const std::vector<RealGrid>& level_uncertainties, double beta) {
  if (!(beta > 0.0)) throw ConfigError("beta", "must be > 0");
  if (level_uncertainties.empty()) throw ShapeError("fusion needs at least one uncertainty map");
  const RealGrid& first = level_uncertainties.front();
  for (const auto& u : level_uncertainties) {
    if (!u.same_lattice(first) || u.channels() != 1) throw ShapeError("uncertainty maps must share one lattice");
  }
  const std::size_t levels = level_uncertainties.size();
  std::vector<RealGrid> alpha(levels, RealGrid(first.height(), first.width(), 1));
  std::vector<double> s(levels);
  for (std::size_t i = 0; i < first.pixels(); ++i) {
    for (std::size_t l = 0; l < levels; ++l) s[l] = -beta * level_uncertainties[l].values()[i];
    const double hi = *std::max_element(s.begin(), s.end());
    double z = 0.0;
    for (double& v : s) {
      v = std::exp(v - hi);
      z += v;
    }
    for (std::size_t l = 0; l < levels; ++l) alpha[l].values()[i] = s[l] / z;
  }
  return alpha;
}

FusionResult fuse(const LevelStack& stack, double beta) {
  const auto alpha = fusion_weights(stack.uncertainties(), beta);
  const RealGrid& first = stack.levels().front();
  const std::size_t c = first.channels();
  FusionResult out{RealGrid(first.height(), first.width(), c, 0.0),
                   RealGrid(first.height(), first.width(), stack.size(), 0.0)};
  for (std::size_t i = 0; i < first.pixels(); ++i) {
    auto dst = out.fused.pixel(i);
    for (std::size_t l = 0; l < stack.size(); ++l) {
      const double a = alpha[l].values()[i];
      out.weights.pixel(i)[l] = a;
      const auto src = stack.levels()[l].pixel(i);
      for (std::size_t k = 0; k < c; ++k) dst[k] += a * src[k];
    }
  }
  return out;
}

ProbMap fuse_probabilities(const std::vector<ProbMap>& levels, const std::vector<RealGrid>& uncertainties,
                           double beta) {
  std::vector<RealGrid> grids;
  grids.reserve(levels.size());
  for (const auto& p : levels) grids.push_back(p.grid());
  return ProbMap::normalize(fuse(LevelStack(std::move(grids), uncertainties), beta).fused);
}

}  // namespace kgcrf
