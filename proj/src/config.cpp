#include "kgcrf/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <openssl/evp.h>

#include "kgcrf/errors.hpp"

namespace kgcrf {
namespace {

double number_field(const nlohmann::json& doc, const char* name, double fallback) {
  if (!doc.contains(name)) return fallback;
  const auto& v = doc.at(name);
  if (!v.is_number()) throw ConfigError(name, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(name, "must be finite");
  return d;
}

int int_field(const nlohmann::json& doc, const char* name, int fallback) {
  if (!doc.contains(name)) return fallback;
  const auto& v = doc.at(name);
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float() && v.get<double>() == std::floor(v.get<double>())) {
    return static_cast<int>(v.get<double>());
  }
  throw ConfigError(name, "expected an integer");
}

}  // namespace

void EngineConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("sigma", "must be > 0");
  if (!(beta > 0.0)) throw ConfigError("beta", "must be > 0");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
  if (max_iters < 1) throw ConfigError("max_iters", "must be >= 1");
  if (mc_passes < 1) throw ConfigError("mc_passes", "must be >= 1");
  if (lambda_f < 0.0) throw ConfigError("lambda_f", "must be >= 0");
  if (lambda_a < 0.0) throw ConfigError("lambda_a", "must be >= 0");
  if (kernel_radius < 0) throw ConfigError("kernel_radius", "must be >= 0");
  if (noise_scale < 0.0) throw ConfigError("noise_scale", "must be >= 0");
  if (compatibility) {
    const auto& mu = *compatibility;
    for (std::size_t a = 0; a < mu.size(); ++a) {
      if (mu[a].size() != mu.size()) throw ConfigError("compatibility", "must be square");
      for (std::size_t b = 0; b < mu.size(); ++b) {
        if (!std::isfinite(mu[a][b]) || mu[a][b] < 0.0) {
          throw ConfigError("compatibility", "entries must be finite and >= 0");
        }
        if (a == b && mu[a][b] != 0.0) throw ConfigError("compatibility", "diagonal must be 0");
      }
    }
  }
}

EngineConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  static const std::set<std::string> known = {
      "sigma", "lambda_f", "lambda_a", "beta", "epsilon", "max_iters", "update_schedule",
      "kernel_radius", "mc_passes", "noise_scale", "compatibility"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError(key, "unknown field");
  }

  EngineConfig cfg;
  cfg.sigma = number_field(doc, "sigma", cfg.sigma);
  cfg.lambda_f = number_field(doc, "lambda_f", cfg.lambda_f);
  cfg.lambda_a = number_field(doc, "lambda_a", cfg.lambda_a);
  cfg.beta = number_field(doc, "beta", cfg.beta);
  cfg.epsilon = number_field(doc, "epsilon", cfg.epsilon);
  cfg.max_iters = int_field(doc, "max_iters", cfg.max_iters);
  cfg.kernel_radius = int_field(doc, "kernel_radius", cfg.kernel_radius);
  cfg.mc_passes = int_field(doc, "mc_passes", cfg.mc_passes);
  cfg.noise_scale = number_field(doc, "noise_scale", cfg.noise_scale);

  if (doc.contains("update_schedule")) {
    const auto& v = doc.at("update_schedule");
    if (v == "parallel") {
      cfg.update_schedule = UpdateSchedule::kParallel;
    } else if (v == "sequential") {
      cfg.update_schedule = UpdateSchedule::kSequential;
    } else {
      throw ConfigError("update_schedule", "expected \"parallel\" or \"sequential\"");
    }
  }
  if (doc.contains("compatibility") && !doc.at("compatibility").is_null()) {
    try {
      cfg.compatibility = doc.at("compatibility").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("compatibility", "expected a matrix of numbers");
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const EngineConfig& cfg) {
  nlohmann::json doc = {
      {"sigma", cfg.sigma},
      {"lambda_f", cfg.lambda_f},
      {"lambda_a", cfg.lambda_a},
      {"beta", cfg.beta},
      {"epsilon", cfg.epsilon},
      {"max_iters", cfg.max_iters},
      {"update_schedule", cfg.update_schedule == UpdateSchedule::kParallel ? "parallel" : "sequential"},
      {"kernel_radius", cfg.kernel_radius},
      {"mc_passes", cfg.mc_passes},
      {"noise_scale", cfg.noise_scale},
  };
  if (cfg.compatibility) doc["compatibility"] = *cfg.compatibility;
  return doc;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<root>", std::string("invalid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

std::string config_digest(const EngineConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

}  // namespace kgcrf
