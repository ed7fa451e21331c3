#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace kgcrf {

enum class UpdateSchedule { kParallel, kSequential };

// Run parameters for refinement, uncertainty and fusion.
struct EngineConfig {
  double sigma = 1.0;       // pairwise kernel bandwidth, feature units
  double lambda_f = 0.5;    // pairwise term weight
  double lambda_a = 0.3;    // structural-uncertainty coefficient
  double beta = 1.0;        // fusion sharpness
  double epsilon = 1e-4;    // convergence threshold on max per-pixel L1 change
  int max_iters = 20;
  UpdateSchedule update_schedule = UpdateSchedule::kParallel;
  int kernel_radius = 5;    // Chebyshev window; 0 = fully dense
  int mc_passes = 8;
  double noise_scale = 0.5;
  // Optional K x K label compatibility; Potts when absent.
  std::optional<std::vector<std::vector<double>>> compatibility;

  // Throws ConfigError naming the first violated field.
  void validate() const;

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

EngineConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const EngineConfig& cfg);
EngineConfig load_config(const std::filesystem::path& path);

// Hex SHA-256 of the canonical JSON serialization.
std::string config_digest(const EngineConfig& cfg);

}  // namespace kgcrf
