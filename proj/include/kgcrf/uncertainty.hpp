#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "json.hpp"
#include "kgcrf/config.hpp"
#include "kgcrf/graph.hpp"
#include "kgcrf/grid.hpp"

namespace kgcrf {

// M stochastic probability maps sharing one lattice and label set.
class StochasticEnsemble {
 public:
  explicit StochasticEnsemble(std::vector<ProbMap> maps);

  std::size_t size() const noexcept { return maps_.size(); }
  const std::vector<ProbMap>& maps() const noexcept { return maps_; }
  const ProbMap& operator[](std::size_t m) const { return maps_[m]; }

 private:
  std::vector<ProbMap> maps_;
};

// U = entropy_part + lambda_a * violation_part; the structural term carries
// no pixel index and is added uniformly.
struct UncertaintyMap {
  RealGrid grid;
  RealGrid entropy_part;
  double violation_part = 0.0;
  double lambda_a = 0.0;
};

// softmax(log max(P, 1e-8) + N(0, noise_scale^2)) per pixel, one Gaussian draw
// per pixel and label, in raster order.
ProbMap perturb_logits(const ProbMap& p, double noise_scale, std::mt19937_64& rng);

// cfg.mc_passes members drawn with perturb_logits(cfg.noise_scale) from one
// generator seeded with `seed`. noise_scale = 0 returns exact copies of P.
StochasticEnsemble synthesize_ensemble(const ProbMap& p, const EngineConfig& cfg, std::uint64_t seed);

// Entropy (natural log) of the across-member mean distribution, clamped to
// [0, log K]. Member order does not affect the result.
RealGrid predictive_entropy(const StochasticEnsemble& ensemble);

// Frobenius norm of (target - realized) over the cells where target > 0.
double violation_norm(const ConstraintMatrix& target, const Matrix& realized);

UncertaintyMap uncertainty_map(const StochasticEnsemble& ensemble, const ConstraintMatrix& target,
                               const Matrix& realized, const EngineConfig& cfg);

// {"entropy_max", "violation_part", "lambda_a"}
nlohmann::json uncertainty_sidecar(const UncertaintyMap& u);

}  // namespace kgcrf
