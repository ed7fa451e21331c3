#include "kgcrf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgcrf/config.hpp"
#include "kgcrf/crf.hpp"
#include "kgcrf/errors.hpp"
#include "kgcrf/fusion.hpp"
#include "kgcrf/graph.hpp"
#include "kgcrf/npy.hpp"
#include "kgcrf/phantom.hpp"
#include "kgcrf/uncertainty.hpp"

namespace kgcrf::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Manifest {
  std::string command;
  std::vector<std::string> inputs;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // paths relative to the manifest
  json metrics = json::object();

  json to_json() const {
    json outs = json::array();
    for (const auto& [name, path] : outputs) outs.push_back({{"name", name}, {"path", path}});
    return {{"command", command}, {"input_paths", inputs}, {"config_digest", config_digest},
            {"seed", seed},       {"outputs", outs},       {"metrics", metrics}};
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + what + " '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError("invalid " + what + " JSON: " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::string dims(const RealGrid& g) { return std::to_string(g.height()) + "x" + std::to_string(g.width()); }

void require_same_lattice(const RealGrid& a, const std::string& a_name, const RealGrid& b, const std::string& b_name) {
  if (!a.same_lattice(b)) {
    throw ShapeError(a_name + " is " + dims(a) + " but " + b_name + " is " + dims(b));
  }
}

ProbMap load_prob(const std::string& path, const std::string& name) {
  try {
    return ProbMap::from_grid(npy::read_tensor(path));
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw DataError(name + " '" + path + "': " + e.what());
  }
}

EngineConfig load_effective_config(const std::string& path) {
  EngineConfig cfg = path.empty() ? EngineConfig{} : load_config(path);
  cfg.validate();
  return cfg;
}

void require_graph_fits(const KnowledgeGraph& graph, std::size_t labels) {
  if (graph.min_labels() > labels) {
    throw ShapeError("graph references label " + std::to_string(graph.min_labels() - 1) + " but prob has " +
                     std::to_string(labels) + " channels");
  }
}

AffineTransform load_transform(const KnowledgeGraph& graph, const std::string& landmarks_path) {
  if (landmarks_path.empty()) return AffineTransform::identity();
  return register_to_atlas(graph, landmarks_from_json(read_json(landmarks_path, "landmarks"))).transform;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& doc, const std::string& what) {
  if (!doc.is_array() || doc.empty()) throw SchemaError(what + " must be a non-empty array of rows");
  Matrix m(doc.size(), doc.size());
  for (std::size_t r = 0; r < doc.size(); ++r) {
    if (!doc[r].is_array() || doc[r].size() != doc.size()) throw SchemaError(what + " must be square");
    for (std::size_t c = 0; c < doc.size(); ++c) {
      if (!doc[r][c].is_number()) throw SchemaError(what + "[" + std::to_string(r) + "][" + std::to_string(c) + "] must be a number");
      m(r, c) = doc[r][c].get<double>();
    }
  }
  return m;
}

json pairwise_scores_json(const KnowledgeGraph& graph, const Matrix& scores) {
  json edges = json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"source", e.source},
                     {"target", e.target},
                     {"relation", std::string(to_string(e.relation))},
                     {"score", scores(static_cast<std::size_t>(e.source), static_cast<std::size_t>(e.target))}});
  }
  return {{"scores", matrix_to_json(scores)},
          {"target", matrix_to_json(graph.constraint().resized(scores.rows).entries())},
          {"edges", edges}};
}

StochasticEnsemble load_or_synthesize(const std::vector<std::string>& paths, const ProbMap& p,
                                      const EngineConfig& cfg, std::uint64_t seed) {
  if (paths.empty()) return synthesize_ensemble(p, cfg, seed);
  std::vector<ProbMap> members;
  for (std::size_t m = 0; m < paths.size(); ++m) {
    const std::string name = "ensemble[" + std::to_string(m) + "]";
    ProbMap member = load_prob(paths[m], name);
    require_same_lattice(member.grid(), name, p.grid(), "prob");
    if (member.num_labels() != p.num_labels()) {
      throw ShapeError(name + " has " + std::to_string(member.num_labels()) + " labels, prob has " +
                       std::to_string(p.num_labels()));
    }
    members.push_back(std::move(member));
  }
  return StochasticEnsemble(std::move(members));
}

LabelMap load_labels(const std::string& path, const std::string& name, std::size_t num_labels) {
  const RealGrid g = npy::read_tensor(path);
  if (g.channels() != 1) throw ShapeError(name + " must be a 2-D label map");
  return to_label_map(g, num_labels);
}

std::size_t label_count(const std::string& path) {
  const RealGrid g = npy::read_tensor(path);
  const auto v = g.values();
  const double hi = *std::max_element(v.begin(), v.end());
  return static_cast<std::size_t>(std::max(0.0, std::floor(hi))) + 1;
}

// ---- commands -------------------------------------------------------------

struct RefineArgs {
  std::string prob, features, graph, config, landmarks, out_dir;
  std::vector<std::string> ensemble;
  std::uint64_t seed = 0;
};

Manifest cmd_refine(const RefineArgs& a) {
  const EngineConfig cfg = load_effective_config(a.config);
  const ProbMap p = load_prob(a.prob, "prob");
  const FeatureMap features(npy::read_tensor(a.features));
  require_same_lattice(p.grid(), "prob", features.grid(), "features");
  const KnowledgeGraph graph = load_graph(a.graph);
  require_graph_fits(graph, p.num_labels());
  const AffineTransform t = load_transform(graph, a.landmarks);
  const StochasticEnsemble ensemble = load_or_synthesize(a.ensemble, p, cfg, a.seed);

  const auto mu = CompatibilityMatrix::from_config(cfg, p.num_labels());
  const RefineResult r = mean_field_refine(p, features, mu, graph, t, cfg);
  const UncertaintyMap u =
      uncertainty_map(ensemble, graph.constraint().resized(p.num_labels()), r.pairwise_scores, cfg);

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  npy::write_tensor(r.state.q.grid(), dir / "refined_prob.npy");
  npy::write_labels(argmax(r.state.q), dir / "labels.npy");
  npy::write_tensor(u.grid, dir / "uncertainty.npy", true);
  write_json(dir / "uncertainty.json", uncertainty_sidecar(u));
  write_json(dir / "pairwise_scores.json", pairwise_scores_json(graph, r.pairwise_scores));

  Manifest m{"refine", {a.prob, a.features, a.graph}, config_digest(cfg), a.seed, {}, json::object()};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  if (!a.landmarks.empty()) m.inputs.push_back(a.landmarks);
  for (const auto& e : a.ensemble) m.inputs.push_back(e);
  m.outputs = {{"refined_prob", "refined_prob.npy"},
               {"labels", "labels.npy"},
               {"uncertainty", "uncertainty.npy"},
               {"uncertainty_sidecar", "uncertainty.json"},
               {"pairwise_scores", "pairwise_scores.json"},
               {"manifest", "manifest.json"}};
  m.metrics = {{"iterations", r.state.iteration},
               {"final_delta", r.state.last_delta},
               {"converged", r.state.converged},
               {"violation_part", u.violation_part},
               {"ensemble_members", ensemble.size()}};
  write_json(dir / "manifest.json", m.to_json());
  return m;
}

struct UncertaintyArgs {
  std::string prob, graph, scores, config, out_dir;
  std::vector<std::string> ensemble;
  std::uint64_t seed = 0;
};

Manifest cmd_uncertainty(const UncertaintyArgs& a) {
  const EngineConfig cfg = load_effective_config(a.config);
  const ProbMap p = load_prob(a.prob, "prob");
  const KnowledgeGraph graph = load_graph(a.graph);
  require_graph_fits(graph, p.num_labels());
  const json scores_doc = read_json(a.scores, "pairwise scores");
  if (!scores_doc.contains("scores")) throw SchemaError("pairwise scores JSON lacks 'scores'");
  const Matrix realized = matrix_from_json(scores_doc["scores"], "scores");
  const StochasticEnsemble ensemble = load_or_synthesize(a.ensemble, p, cfg, a.seed);
  const UncertaintyMap u = uncertainty_map(ensemble, graph.constraint().resized(p.num_labels()), realized, cfg);

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  npy::write_tensor(u.grid, dir / "uncertainty.npy", true);
  write_json(dir / "uncertainty.json", uncertainty_sidecar(u));

  Manifest m{"uncertainty", {a.prob, a.graph, a.scores}, config_digest(cfg), a.seed, {}, json::object()};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  for (const auto& e : a.ensemble) m.inputs.push_back(e);
  m.outputs = {{"uncertainty", "uncertainty.npy"},
               {"uncertainty_sidecar", "uncertainty.json"},
               {"manifest", "manifest.json"}};
  m.metrics = {{"violation_part", u.violation_part}, {"ensemble_members", ensemble.size()}};
  write_json(dir / "manifest.json", m.to_json());
  return m;
}

struct FuseArgs {
  std::vector<std::string> levels, uncertainties;
  std::optional<double> beta;
  std::string config, out;
};

Manifest cmd_fuse(const FuseArgs& a) {
  EngineConfig cfg = load_effective_config(a.config);
  if (a.beta) cfg.beta = *a.beta;
  cfg.validate();

  std::vector<RealGrid> levels;
  for (const auto& p : a.levels) levels.push_back(npy::read_tensor(p));
  std::vector<RealGrid> uncertainties;
  for (const auto& p : a.uncertainties) uncertainties.push_back(npy::read_tensor(p));
  const bool squeeze = levels.front().channels() == 1;
  const FusionResult r = fuse(LevelStack(std::move(levels), std::move(uncertainties)), cfg.beta);

  const fs::path out(a.out);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  const std::string stem = out.stem().string();
  const fs::path weights = out.parent_path() / (stem + "_weights.npy");
  const fs::path manifest = out.parent_path() / (stem + "_manifest.json");
  npy::write_tensor(r.fused, out, squeeze);
  npy::write_tensor(r.weights, weights);

  Manifest m{"fuse", a.levels, config_digest(cfg), 0, {}, json::object()};
  m.inputs.insert(m.inputs.end(), a.uncertainties.begin(), a.uncertainties.end());
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs = {{"fused", out.filename().string()},
               {"weights", weights.filename().string()},
               {"manifest", manifest.filename().string()}};
  m.metrics = {{"beta", cfg.beta}, {"levels", a.levels.size()}};
  write_json(manifest, m.to_json());
  return m;
}

struct PhantomArgs {
  std::string template_name, corruption_kind = "fragment_swap", out_dir;
  std::size_t size = 64;
  double corruption_magnitude = 0.0;
  std::uint64_t seed = 0;
};

Manifest cmd_phantom(const PhantomArgs& a) {
  const auto kind = phantom::template_from_string(a.template_name);
  const auto corruption = phantom::corruption_from_string(a.corruption_kind);
  const phantom::PhantomScene scene = phantom::generate_scene(kind, a.size, a.size, a.seed);
  const ProbMap corrupted = phantom::corrupt(scene, {corruption, a.corruption_magnitude, a.seed});

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  npy::write_labels(scene.truth, dir / "truth.npy");
  npy::write_tensor(scene.clean_prob.grid(), dir / "clean_prob.npy");
  npy::write_tensor(corrupted.grid(), dir / "corrupted_prob.npy");
  npy::write_tensor(scene.features.grid(), dir / "features.npy");
  write_json(dir / "graph.json", graph_to_json(scene.graph));
  write_json(dir / "landmarks.json", landmarks_to_json(scene.landmarks));

  Manifest m{"phantom", {}, config_digest(EngineConfig{}), a.seed, {}, json::object()};
  m.outputs = {{"truth", "truth.npy"},
               {"clean_prob", "clean_prob.npy"},
               {"corrupted_prob", "corrupted_prob.npy"},
               {"features", "features.npy"},
               {"graph", "graph.json"},
               {"landmarks", "landmarks.json"},
               {"manifest", "manifest.json"}};
  m.metrics = {{"template", a.template_name},
               {"size", a.size},
               {"labels", scene.truth.num_labels()},
               {"corruption_kind", a.corruption_kind},
               {"corruption_magnitude", a.corruption_magnitude},
               {"corrupted_mean_dice", phantom::mean_foreground_dice(argmax(corrupted), scene.truth)}};
  write_json(dir / "manifest.json", m.to_json());
  return m;
}

struct EvalArgs {
  std::string pred, truth;
};

Manifest cmd_eval(const EvalArgs& a) {
  const std::size_t k = std::max(label_count(a.pred), label_count(a.truth));
  const LabelMap pred = load_labels(a.pred, "pred", k);
  const LabelMap truth = load_labels(a.truth, "truth", k);
  require_same_lattice(to_real(pred), "pred", to_real(truth), "truth");

  json per_label = json::object();
  for (std::size_t l = 1; l < k; ++l) per_label[std::to_string(l)] = phantom::dice(pred, truth, static_cast<int>(l));
  Manifest m{"eval", {a.pred, a.truth}, config_digest(EngineConfig{}), 0, {}, json::object()};
  m.metrics = {{"dice", per_label}, {"mean_dice", phantom::mean_foreground_dice(pred, truth)}};
  return m;
}

struct OracleArgs {
  std::string prob, features, graph, config, landmarks, out_dir;
};

Manifest cmd_oracle(const OracleArgs& a) {
  const EngineConfig cfg = load_effective_config(a.config);
  const ProbMap p = load_prob(a.prob, "prob");
  const FeatureMap features(npy::read_tensor(a.features));
  require_same_lattice(p.grid(), "prob", features.grid(), "features");
  const KnowledgeGraph graph = load_graph(a.graph);
  require_graph_fits(graph, p.num_labels());
  const AffineTransform t = load_transform(graph, a.landmarks);
  const auto mu = CompatibilityMatrix::from_config(cfg, p.num_labels());

  const ProbMap exact = exact_marginals(p, features, mu, graph, t, cfg);
  const RefineResult r = mean_field_refine(p, features, mu, graph, t, cfg);
  double gap = 0.0;
  const auto ev = exact.grid().values();
  const auto mv = r.state.q.grid().values();
  for (std::size_t i = 0; i < ev.size(); ++i) gap = std::max(gap, std::abs(ev[i] - mv[i]));

  const fs::path dir(a.out_dir);
  ensure_dir(dir);
  npy::write_tensor(exact.grid(), dir / "exact.npy");
  npy::write_tensor(r.state.q.grid(), dir / "meanfield.npy");

  Manifest m{"oracle", {a.prob, a.features, a.graph}, config_digest(cfg), 0, {}, json::object()};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  if (!a.landmarks.empty()) m.inputs.push_back(a.landmarks);
  m.outputs = {{"exact", "exact.npy"}, {"meanfield", "meanfield.npy"}, {"manifest", "manifest.json"}};
  m.metrics = {{"max_abs_gap", gap}, {"iterations", r.state.iteration}, {"converged", r.state.converged}};
  write_json(dir / "manifest.json", m.to_json());
  return m;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-graph-guided CRF refinement engine", "kgcrf"};
  app.require_subcommand(1);

  RefineArgs refine;
  auto* sc_refine = app.add_subcommand("refine", "Refine a probability map and estimate its uncertainty");
  sc_refine->add_option("--prob", refine.prob, "H x W x K probability map (.npy)")->required();
  sc_refine->add_option("--features", refine.features, "H x W x D feature map (.npy)")->required();
  sc_refine->add_option("--graph", refine.graph, "Knowledge graph (.json)")->required();
  sc_refine->add_option("--config", refine.config, "Engine config (.json); defaults when omitted");
  sc_refine->add_option("--landmarks", refine.landmarks, "Image landmarks (.json) for atlas registration");
  sc_refine->add_option("--ensemble", refine.ensemble, "Stochastic ensemble members (.npy)");
  sc_refine->add_option("--out-dir", refine.out_dir, "Output directory")->required();
  sc_refine->add_option("--seed", refine.seed, "Ensemble seed");

  UncertaintyArgs unc;
  auto* sc_unc = app.add_subcommand("uncertainty", "Uncertainty map from an ensemble and realized relation scores");
  sc_unc->add_option("--prob", unc.prob, "Probability map (.npy)")->required();
  sc_unc->add_option("--graph", unc.graph, "Knowledge graph (.json)")->required();
  sc_unc->add_option("--scores", unc.scores, "pairwise_scores.json from refine")->required();
  sc_unc->add_option("--config", unc.config, "Engine config (.json)");
  sc_unc->add_option("--ensemble", unc.ensemble, "Stochastic ensemble members (.npy)");
  sc_unc->add_option("--out-dir", unc.out_dir, "Output directory")->required();
  sc_unc->add_option("--seed", unc.seed, "Ensemble seed");

  FuseArgs fuse_args;
  auto* sc_fuse = app.add_subcommand("fuse", "Uncertainty-weighted fusion of multi-level tensors");
  sc_fuse->add_option("--levels", fuse_args.levels, "Level tensors (.npy)")->required();
  sc_fuse->add_option("--uncertainties", fuse_args.uncertainties, "1 or L uncertainty maps (.npy)")->required();
  sc_fuse->add_option("--beta", fuse_args.beta, "Fusion sharpness; config value when omitted");
  sc_fuse->add_option("--config", fuse_args.config, "Engine config (.json)");
  sc_fuse->add_option("--out", fuse_args.out, "Fused tensor path (.npy)")->required();

  PhantomArgs ph;
  auto* sc_ph = app.add_subcommand("phantom", "Generate a synthetic scene");
  sc_ph->add_option("--template", ph.template_name, "two_organ_lr | three_organ_nested | five_organ_abdomen")
      ->required();
  sc_ph->add_option("--size", ph.size, "Side length in pixels (>= 32)");
  sc_ph->add_option("--seed", ph.seed, "Scene and corruption seed");
  sc_ph->add_option("--corruption-kind", ph.corruption_kind, "boundary_blur | fragment_swap | logit_noise");
  sc_ph->add_option("--corruption-magnitude", ph.corruption_magnitude, "Corruption strength; 0 disables");
  sc_ph->add_option("--out-dir", ph.out_dir, "Output directory")->required();

  EvalArgs ev;
  auto* sc_eval = app.add_subcommand("eval", "Dice between a predicted and a reference label map");
  sc_eval->add_option("--pred", ev.pred, "Predicted labels (.npy)")->required();
  sc_eval->add_option("--truth", ev.truth, "Reference labels (.npy)")->required();

  OracleArgs orc;
  auto* sc_orc = app.add_subcommand("oracle", "Exact marginals by enumeration against mean-field");
  sc_orc->add_option("--prob", orc.prob, "Probability map (.npy)")->required();
  sc_orc->add_option("--features", orc.features, "Feature map (.npy)")->required();
  sc_orc->add_option("--graph", orc.graph, "Knowledge graph (.json)")->required();
  sc_orc->add_option("--config", orc.config, "Engine config (.json)");
  sc_orc->add_option("--landmarks", orc.landmarks, "Image landmarks (.json)");
  sc_orc->add_option("--out-dir", orc.out_dir, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    Manifest m;
    if (*sc_refine) m = cmd_refine(refine);
    else if (*sc_unc) m = cmd_uncertainty(unc);
    else if (*sc_fuse) m = cmd_fuse(fuse_args);
    else if (*sc_ph) m = cmd_phantom(ph);
    else if (*sc_eval) m = cmd_eval(ev);
    else m = cmd_oracle(orc);
    out << m.to_json().dump(2) << "\n";
    return 0;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace kgcrf::cli
