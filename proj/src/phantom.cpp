#include "kgcrf/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <tuple>
#include <random>

#include "kgcrf/errors.hpp"
#include "kgcrf/relations.hpp"
#include "kgcrf/uncertainty.hpp"

namespace kgcrf::phantom {
namespace {

constexpr int kMaxAttempts = 200;
constexpr double kMargin = 2.0;
constexpr double kFeatureNoise = 0.3;
constexpr Point2 kAtlasOffset{6.0, -4.0};

// Feature signatures per label; pairwise distances are >= 3.
constexpr std::array<std::array<double, 3>, 6> kSignatures{{
    {0.0, 0.0, 0.0},
    {3.0, 0.0, 0.0},
    {0.0, 3.0, 0.0},
    {0.0, 0.0, 3.0},
    {3.0, 3.0, 0.0},
    {0.0, 3.0, 3.0},
}};

// Ellipse in fractions of the image size.
struct Ellipse {
  double cx, cy, rx, ry;
};

struct Layout {
  std::size_t labels;
  std::vector<std::string> names;
  std::vector<Ellipse> organs;  // organ l + 1; later entries paint over earlier ones
  std::vector<AnatomyEdge> edges;
};

AnatomyEdge edge(int source, int target, Relation r) { return {source, target, r, 1.0, kMargin}; }

Layout draw_layout(Template kind, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto j = [&](double amount) { return amount * u(rng); };
  auto scale = [&](double lo, double hi) { return lo + (hi - lo) * 0.5 * (u(rng) + 1.0); };

  Layout l;
  switch (kind) {
    case Template::kTwoOrganLR: {
      const double s1 = scale(0.9, 1.1);
      const double s2 = scale(0.9, 1.1);
      l.labels = 3;
      l.names = {"left_organ", "right_organ"};
      l.organs = {{0.26 + j(0.02), 0.5 + j(0.05), 0.14 * s1, 0.25 * s1},
                  {0.72 + j(0.02), 0.5 + j(0.05), 0.11 * s2, 0.22 * s2}};
      l.edges = {edge(1, 2, Relation::kLeftOf)};
      break;
    }
    case Template::kThreeOrganNested: {
      const double s = scale(0.93, 1.0);
      const Ellipse outer{0.5 + j(0.03), 0.5 + j(0.03), 0.40 * s, 0.36 * s};
      const Ellipse middle{outer.cx + j(0.02), outer.cy + j(0.02), 0.6 * outer.rx, 0.6 * outer.ry};
      const Ellipse inner{middle.cx + j(0.01), middle.cy + j(0.01), 0.45 * middle.rx, 0.45 * middle.ry};
      l.labels = 4;
      l.names = {"outer", "middle", "inner"};
      l.organs = {outer, middle, inner};
      l.edges = {edge(2, 1, Relation::kInside), edge(3, 2, Relation::kInside)};
      break;
    }
    case Template::kFiveOrganAbdomen: {
      auto s = [&] { return scale(0.92, 1.05); };
      const double s1 = s(), s2 = s(), s3 = s(), s4 = s(), s5 = s();
      l.labels = 6;
      l.names = {"liver", "spleen", "stomach", "kidney_right", "kidney_left"};
      l.organs = {{0.225 + j(0.015), 0.30 + j(0.02), 0.17 * s1, 0.19 * s1},
                  {0.855 + j(0.015), 0.28 + j(0.02), 0.09 * s2, 0.14 * s2},
                  {0.58 + j(0.01), 0.30 + j(0.02), 0.065 * s3, 0.12 * s3},
                  {0.24 + j(0.015), 0.76 + j(0.02), 0.10 * s4, 0.12 * s4},
                  {0.72 + j(0.015), 0.76 + j(0.02), 0.10 * s5, 0.12 * s5}};
      l.edges = {edge(1, 2, Relation::kLeftOf),  edge(3, 1, Relation::kRightOf), edge(3, 2, Relation::kLeftOf),
                 edge(4, 1, Relation::kBelow),   edge(5, 2, Relation::kBelow),   edge(4, 5, Relation::kLeftOf),
                 edge(5, 3, Relation::kDisjointFrom)};
      break;
    }
  }
  return l;
}

LabelMap paint(const Layout& l, std::size_t h, std::size_t w) {
  Grid2D<std::int64_t> g(h, w, 1, 0);
  for (std::size_t o = 0; o < l.organs.size(); ++o) {
    const Ellipse& e = l.organs[o];
    const double cx = e.cx * static_cast<double>(w);
    const double cy = e.cy * static_cast<double>(h);
    const double rx = e.rx * static_cast<double>(w);
    const double ry = e.ry * static_cast<double>(h);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double dx = (static_cast<double>(c) - cx) / rx;
        const double dy = (static_cast<double>(r) - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) g.at(r, c) = static_cast<std::int64_t>(o + 1);
      }
    }
  }
  return LabelMap(std::move(g), l.labels);
}

ProbMap soften(const LabelMap& truth) {
  const std::size_t k = truth.num_labels();
  const double rest = (1.0 - kCleanConfidence) / static_cast<double>(k - 1);
  RealGrid g(truth.height(), truth.width(), k, rest);
  for (std::size_t i = 0; i < truth.pixels(); ++i) g.pixel(i)[static_cast<std::size_t>(truth[i])] = kCleanConfidence;
  return ProbMap::from_grid(std::move(g));
}

FeatureMap make_features(const LabelMap& truth, std::mt19937_64& rng) {
  const std::size_t h = truth.height();
  const std::size_t w = truth.width();
  const std::size_t d = kSignatures[0].size();
  RealGrid sig(h, w, d);
  for (std::size_t i = 0; i < truth.pixels(); ++i) {
    const auto& s = kSignatures[static_cast<std::size_t>(truth[i]) % kSignatures.size()];
    std::copy(s.begin(), s.end(), sig.pixel(i).begin());
  }
  // 3x3 box smoothing with clamped borders, then additive noise.
  RealGrid out(h, w, d, 0.0);
  std::normal_distribution<double> noise(0.0, kFeatureNoise);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = 0; k < d; ++k) {
        double acc = 0.0;
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const auto rr = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(h) - 1));
            const auto cc = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(c) + dc, 0, static_cast<long>(w) - 1));
            acc += sig.at(rr, cc, k);
          }
        }
        out.at(r, c, k) = acc / 9.0 + noise(rng);
      }
    }
  }
  return FeatureMap(std::move(out));
}

std::vector<NamedLandmark> make_landmarks(const LabelMap& truth) {
  const double w1 = static_cast<double>(truth.width() - 1);
  const double h1 = static_cast<double>(truth.height() - 1);
  std::vector<NamedLandmark> out{{"corner_tl", {0.0, 0.0}},
                                 {"corner_tr", {w1, 0.0}},
                                 {"corner_bl", {0.0, h1}},
                                 {"corner_br", {w1, h1}}};
  for (std::size_t l = 1; l < truth.num_labels(); ++l) {
    double sx = 0.0, sy = 0.0, n = 0.0;
    for (std::size_t i = 0; i < truth.pixels(); ++i) {
      if (static_cast<std::size_t>(truth[i]) != l) continue;
      sx += static_cast<double>(i % truth.width());
      sy += static_cast<double>(i / truth.width());
      n += 1.0;
    }
    out.push_back({"organ_" + std::to_string(l), {sx / n, sy / n}});
  }
  return out;
}

std::vector<std::size_t> pixels_of(const LabelMap& m, std::int64_t label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    if (m[i] == label) out.push_back(i);
  }
  return out;
}

// Relation whose satisfaction is a clear violation of `r`.
AnatomyEdge opposite(const AnatomyEdge& e) {
  AnatomyEdge o = e;
  switch (e.relation) {
    case Relation::kLeftOf: o.relation = Relation::kRightOf; break;
    case Relation::kRightOf: o.relation = Relation::kLeftOf; break;
    case Relation::kAbove: o.relation = Relation::kBelow; break;
    case Relation::kBelow: o.relation = Relation::kAbove; break;
    case Relation::kInside: o.relation = Relation::kDisjointFrom; break;
    case Relation::kDisjointFrom: o.relation = Relation::kInside; break;
    case Relation::kAdjacentTo:
      o.relation = Relation::kDisjointFrom;
      o.margin = 2.0 * e.margin + 1.0;
      break;
  }
  return o;
}

RealGrid gaussian_blur(const RealGrid& g, double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double z = 0.0;
  for (long t = -radius; t <= radius; ++t) {
    const double v = std::exp(-0.5 * static_cast<double>(t * t) / (sigma * sigma));
    taps[static_cast<std::size_t>(t + radius)] = v;
    z += v;
  }
  for (double& v : taps) v /= z;

  const long h = static_cast<long>(g.height());
  const long w = static_cast<long>(g.width());
  const std::size_t c = g.channels();
  RealGrid tmp(g.height(), g.width(), c, 0.0);
  RealGrid out(g.height(), g.width(), c, 0.0);
  for (long r = 0; r < h; ++r) {
    for (long x = 0; x < w; ++x) {
      for (long t = -radius; t <= radius; ++t) {
        const auto xx = static_cast<std::size_t>(std::clamp(x + t, 0L, w - 1));
        const double tap = taps[static_cast<std::size_t>(t + radius)];
        for (std::size_t k = 0; k < c; ++k) {
          tmp.at(static_cast<std::size_t>(r), static_cast<std::size_t>(x), k) += tap * g.at(static_cast<std::size_t>(r), xx, k);
        }
      }
    }
  }
  for (long r = 0; r < h; ++r) {
    for (long x = 0; x < w; ++x) {
      for (long t = -radius; t <= radius; ++t) {
        const auto rr = static_cast<std::size_t>(std::clamp(r + t, 0L, h - 1));
        const double tap = taps[static_cast<std::size_t>(t + radius)];
        for (std::size_t k = 0; k < c; ++k) {
          out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(x), k) += tap * tmp.at(rr, static_cast<std::size_t>(x), k);
        }
      }
    }
  }
  return out;
}

struct Relocation {
  std::vector<std::size_t> blob;
  long dr = 0;
  long dc = 0;
};

// Blob of `e.source` and an offset that moves it onto background where the
// opposite relation holds; nullopt when no such placement exists.
std::optional<Relocation> plan_relocation(const PhantomScene& scene, const AnatomyEdge& e, double magnitude,
                                          std::mt19937_64& rng) {
  const auto organ = pixels_of(scene.truth, e.source);
  const auto area = static_cast<std::size_t>(std::llround(magnitude * static_cast<double>(organ.size())));
  if (area < 1) throw DegenerateError("fragment_swap magnitude selects no pixels of organ " + std::to_string(e.source));
  if (area >= organ.size()) throw DegenerateError("fragment_swap magnitude would empty organ " + std::to_string(e.source));

  const std::size_t w = scene.truth.width();
  // Compact blob: the `area` organ pixels nearest a random organ pixel.
  const std::size_t center = organ[std::uniform_int_distribution<std::size_t>(0, organ.size() - 1)(rng)];
  auto dist2 = [&](std::size_t i) {
    const double dx = static_cast<double>(i % w) - static_cast<double>(center % w);
    const double dy = static_cast<double>(i / w) - static_cast<double>(center / w);
    return dx * dx + dy * dy;
  };
  Relocation plan{organ};
  std::stable_sort(plan.blob.begin(), plan.blob.end(), [&](std::size_t a, std::size_t b) { return dist2(a) < dist2(b); });
  plan.blob.resize(area);

  const RealGrid violating = rasterize_relation(opposite(e), one_hot(scene.truth), scene_transform(scene));
  std::vector<std::pair<long, long>> offsets;
  const long H = static_cast<long>(scene.truth.height());
  const long W = static_cast<long>(w);
  for (long dr = -H; dr <= H; ++dr) {
    for (long dc = -W; dc <= W; ++dc) {
      bool ok = true;
      for (std::size_t i : plan.blob) {
        const long r = static_cast<long>(i / w) + dr;
        const long c = static_cast<long>(i % w) + dc;
        if (r < 0 || c < 0 || r >= H || c >= W) {
          ok = false;
          break;
        }
        const auto j = static_cast<std::size_t>(r * W + c);
        if (scene.truth[j] != 0 || violating.values()[j] < 1.0 - 1e-12) {
          ok = false;
          break;
        }
      }
      if (ok) offsets.emplace_back(dr, dc);
    }
  }
  if (offsets.empty()) return std::nullopt;
  std::tie(plan.dr, plan.dc) = offsets[std::uniform_int_distribution<std::size_t>(0, offsets.size() - 1)(rng)];
  return plan;
}

ProbMap fragment_swap(const PhantomScene& scene, const ProbMap& base, const CorruptionSpec& spec) {
  const auto& edges = scene.graph.edges();
  if (edges.empty()) throw DegenerateError("fragment_swap needs a graph edge");
  std::mt19937_64 rng(spec.seed);
  // Start at the seed-selected edge; fall through to the next one when the
  // blob has nowhere to go (e.g. a kidney cannot fit inside the stomach).
  for (std::size_t n = 0; n < edges.size(); ++n) {
    const auto plan = plan_relocation(scene, edges[(spec.seed + n) % edges.size()], spec.magnitude, rng);
    if (!plan) continue;
    const long W = static_cast<long>(scene.truth.width());
    RealGrid g = base.grid();
    for (std::size_t i : plan->blob) {
      const long r = static_cast<long>(i) / W + plan->dr;
      const long c = static_cast<long>(i) % W + plan->dc;
      auto a = g.pixel(i);
      auto b = g.pixel(static_cast<std::size_t>(r * W + c));
      std::swap_ranges(a.begin(), a.end(), b.begin());
    }
    return ProbMap::from_grid(std::move(g));
  }
  throw DegenerateError("no background location violates any relation of the scene");
}

}  // namespace

Template template_from_string(std::string_view name) {
  if (name == "two_organ_lr") return Template::kTwoOrganLR;
  if (name == "three_organ_nested") return Template::kThreeOrganNested;
  if (name == "five_organ_abdomen") return Template::kFiveOrganAbdomen;
  throw ConfigError("template", "unknown template '" + std::string(name) + "'");
}

std::string_view to_string(Template t) {
  switch (t) {
    case Template::kTwoOrganLR: return "two_organ_lr";
    case Template::kThreeOrganNested: return "three_organ_nested";
    case Template::kFiveOrganAbdomen: return "five_organ_abdomen";
  }
  return "unknown";
}

CorruptionKind corruption_from_string(std::string_view name) {
  if (name == "boundary_blur") return CorruptionKind::kBoundaryBlur;
  if (name == "fragment_swap") return CorruptionKind::kFragmentSwap;
  if (name == "logit_noise") return CorruptionKind::kLogitNoise;
  throw ConfigError("corruption_kind", "unknown corruption '" + std::string(name) + "'");
}

std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kBoundaryBlur: return "boundary_blur";
    case CorruptionKind::kFragmentSwap: return "fragment_swap";
    case CorruptionKind::kLogitNoise: return "logit_noise";
  }
  return "unknown";
}

PhantomScene generate_scene(Template kind, std::size_t h, std::size_t w, std::uint64_t seed) {
  if (h < kMinSize || w < kMinSize) {
    throw ConfigError("size", "phantoms need at least " + std::to_string(kMinSize) + "x" + std::to_string(kMinSize) +
                                  " pixels");
  }
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(kind) + 1);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Layout layout = draw_layout(kind, rng);
    LabelMap truth = paint(layout, h, w);

    bool valid = true;
    for (std::size_t l = 1; l < layout.labels && valid; ++l) {
      valid = pixels_of(truth, static_cast<std::int64_t>(l)).size() >= 4;
    }
    if (!valid) continue;

    const auto landmarks = make_landmarks(truth);
    std::vector<NamedLandmark> atlas = landmarks;
    for (auto& a : atlas) a.position = {a.position.x + kAtlasOffset.x, a.position.y + kAtlasOffset.y};

    std::vector<AnatomyNode> nodes;
    for (std::size_t l = 1; l < layout.labels; ++l) {
      const auto px = pixels_of(truth, static_cast<std::int64_t>(l));
      const auto& c = landmarks[3 + l].position;
      nodes.push_back({static_cast<int>(l), layout.names[l - 1],
                       {static_cast<double>(px.size()) / static_cast<double>(truth.pixels()),
                        c.x / static_cast<double>(w), c.y / static_cast<double>(h)}});
    }
    KnowledgeGraph graph(std::move(nodes), layout.edges, std::move(atlas));
    const AffineTransform t = register_to_atlas(graph, landmarks).transform;
    for (const auto& e : graph.edges()) {
      if (!relation_holds(truth, e, t)) {
        valid = false;
        break;
      }
    }
    if (!valid) continue;

    ProbMap clean = soften(truth);
    FeatureMap features = make_features(truth, rng);
    return PhantomScene{kind, std::move(truth), std::move(clean), std::move(features), std::move(graph), landmarks};
  }
  throw DegenerateError("could not place template " + std::string(to_string(kind)) + " at " + std::to_string(h) + "x" +
                        std::to_string(w));
}

AffineTransform scene_transform(const PhantomScene& scene) {
  return register_to_atlas(scene.graph, scene.landmarks).transform;
}

ProbMap corrupt(const PhantomScene& scene, const CorruptionSpec& spec) { return corrupt(scene, scene.clean_prob, spec); }

ProbMap corrupt(const PhantomScene& scene, const ProbMap& base, const CorruptionSpec& spec) {
  if (!(spec.magnitude >= 0.0) || !std::isfinite(spec.magnitude)) {
    throw ConfigError("corruption_magnitude", "must be finite and >= 0");
  }
  if (base.height() != scene.truth.height() || base.width() != scene.truth.width() ||
      base.num_labels() != scene.truth.num_labels()) {
    throw ShapeError("probability map does not match the scene");
  }
  if (spec.magnitude == 0.0) return base;
  switch (spec.kind) {
    case CorruptionKind::kBoundaryBlur:
      return ProbMap::normalize(gaussian_blur(base.grid(), spec.magnitude));
    case CorruptionKind::kFragmentSwap:
      return fragment_swap(scene, base, spec);
    case CorruptionKind::kLogitNoise: {
      std::mt19937_64 rng(spec.seed);
      return perturb_logits(base, spec.magnitude, rng);
    }
  }
  return base;
}

double dice(const LabelMap& a, const LabelMap& b, int label) {
  if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("label maps differ in lattice");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.pixels(); ++i) {
    const bool in_a = a[i] == label;
    const bool in_b = b[i] == label;
    na += in_a;
    nb += in_b;
    both += in_a && in_b;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double mean_foreground_dice(const LabelMap& pred, const LabelMap& truth) {
  const std::size_t k = std::max(pred.num_labels(), truth.num_labels());
  if (k < 2) return 1.0;
  double sum = 0.0;
  for (std::size_t l = 1; l < k; ++l) sum += dice(pred, truth, static_cast<int>(l));
  return sum / static_cast<double>(k - 1);
}

}  // namespace kgcrf::phantom
