#pragma once

#include <vector>

#include "kgcrf/grid.hpp"

namespace kgcrf {

// Corner-aligned bilinear resampling; returns the input unchanged when the
// dimensions already match.
RealGrid resample_to(const RealGrid& grid, std::size_t target_h, std::size_t target_w);

// L per-level tensors with L per-level uncertainty maps (or a single shared
// map). Construction resamples everything onto the largest level lattice.
class LevelStack {
 public:
  LevelStack(std::vector<RealGrid> levels, std::vector<RealGrid> uncertainties);

  std::size_t size() const noexcept { return levels_.size(); }
  const std::vector<RealGrid>& levels() const noexcept { return levels_; }
  const std::vector<RealGrid>& uncertainties() const noexcept { return uncertainties_; }

 private:
  std::vector<RealGrid> levels_;
  std::vector<RealGrid> uncertainties_;  // always L single-channel maps after construction
};

// alpha_l = exp(-beta U_l) / sum_k exp(-beta U_k), per pixel.
std::vector<RealGrid> fusion_weights(const std::vector<RealGrid>& level_uncertainties, double beta);

struct FusionResult {
  RealGrid fused;
  RealGrid weights;  // H x W x L
};

// Per-pixel convex combination sum_l alpha_l F_l.
FusionResult fuse(const LevelStack& stack, double beta);

// Fusion of probability maps; the output is re-normalized.
ProbMap fuse_probabilities(const std::vector<ProbMap>& levels, const std::vector<RealGrid>& uncertainties,
                           double beta);

}  // namespace kgcrf
