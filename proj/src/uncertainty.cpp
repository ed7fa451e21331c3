#include "kgcrf/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include "kgcrf/crf.hpp"
#include "kgcrf/errors.hpp"

namespace kgcrf {

StochasticEnsemble::StochasticEnsemble(std::vector<ProbMap> maps) : maps_(std::move(maps)) {
  if (maps_.empty()) throw ShapeError("ensemble needs at least one member");
  const ProbMap& first = maps_.front();
  for (const auto& m : maps_) {
    if (m.height() != first.height() || m.width() != first.width() || m.num_labels() != first.num_labels()) {
      throw ShapeError("ensemble members differ in shape or label count");
    }
  }
}

ProbMap perturb_logits(const ProbMap& p, double noise_scale, std::mt19937_64& rng) {
  if (noise_scale < 0.0) throw ConfigError("noise_scale", "must be >= 0");
  std::normal_distribution<double> noise(0.0, noise_scale > 0.0 ? noise_scale : 1.0);
  const std::size_t k = p.num_labels();
  RealGrid out(p.height(), p.width(), k);
  std::vector<double> logit(k);
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      logit[m] = std::log(std::max(p(i, m), kUnaryFloor)) + (noise_scale > 0.0 ? noise(rng) : 0.0);
    }
    const double hi = *std::max_element(logit.begin(), logit.end());
    auto px = out.pixel(i);
    for (std::size_t m = 0; m < k; ++m) px[m] = std::exp(logit[m] - hi);
  }
  return ProbMap::normalize(std::move(out));
}

StochasticEnsemble synthesize_ensemble(const ProbMap& p, const EngineConfig& cfg, std::uint64_t seed) {
  if (cfg.mc_passes < 1) throw ConfigError("mc_passes", "must be >= 1");
  if (cfg.noise_scale < 0.0) throw ConfigError("noise_scale", "must be >= 0");
  std::vector<ProbMap> members;
  members.reserve(static_cast<std::size_t>(cfg.mc_passes));
  if (cfg.noise_scale == 0.0) {
    members.assign(static_cast<std::size_t>(cfg.mc_passes), p);
    return StochasticEnsemble(std::move(members));
  }
  std::mt19937_64 rng(seed);
  for (int m = 0; m < cfg.mc_passes; ++m) members.push_back(perturb_logits(p, cfg.noise_scale, rng));
  return StochasticEnsemble(std::move(members));
}

RealGrid predictive_entropy(const StochasticEnsemble& ensemble) {
  const ProbMap& first = ensemble[0];
  const std::size_t k = first.num_labels();
  const double log_k = std::log(static_cast<double>(k));
  const double count = static_cast<double>(ensemble.size());
  RealGrid h(first.height(), first.width(), 1);
  std::vector<double> column(ensemble.size());
  for (std::size_t i = 0; i < first.pixels(); ++i) {
    double entropy = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
      // Sorted summation makes the mean independent of member order.
      for (std::size_t e = 0; e < ensemble.size(); ++e) column[e] = ensemble[e](i, m);
      std::sort(column.begin(), column.end());
      double mean = 0.0;
      for (double v : column) mean += v;
      mean /= count;
      if (mean > 0.0) entropy -= mean * std::log(mean);
    }
    h.values()[i] = std::clamp(entropy, 0.0, log_k);
  }
  return h;
}

double violation_norm(const ConstraintMatrix& target, const Matrix& realized) {
  if (realized.rows != target.size() || realized.cols != target.size()) {
    throw ShapeError("realized score matrix is " + std::to_string(realized.rows) + "x" +
                     std::to_string(realized.cols) + ", constraint matrix is " + std::to_string(target.size()) +
                     "x" + std::to_string(target.size()));
  }
  double sq = 0.0;
  for (std::size_t r = 0; r < target.size(); ++r) {
    for (std::size_t c = 0; c < target.size(); ++c) {
      if (target(r, c) > 0.0) {
        const double d = target(r, c) - realized(r, c);
        sq += d * d;
      }
    }
  }
  return std::sqrt(sq);
}

UncertaintyMap uncertainty_map(const StochasticEnsemble& ensemble, const ConstraintMatrix& target,
                               const Matrix& realized, const EngineConfig& cfg) {
  UncertaintyMap u;
  u.entropy_part = predictive_entropy(ensemble);
  u.violation_part = violation_norm(target, realized);
  u.lambda_a = cfg.lambda_a;
  u.grid = u.entropy_part;
  const double offset = cfg.lambda_a * u.violation_part;
  for (double& v : u.grid.values()) v += offset;
  return u;
}

nlohmann::json uncertainty_sidecar(const UncertaintyMap& u) {
  const auto e = u.entropy_part.values();
  return {{"entropy_max", *std::max_element(e.begin(), e.end())},
          {"violation_part", u.violation_part},
          {"lambda_a", u.lambda_a}};
}

}  // namespace kgcrf
