#include "kgcrf/relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "kgcrf/errors.hpp"

namespace kgcrf {
namespace {

double ramp(double d) { return std::clamp(d, 0.0, 1.0); }

double gate(double q) { return std::clamp(2.0 * q - 1.0, 0.0, 1.0); }

struct Weighted {
  double coord;
  double weight;
  std::size_t index;
};

// Smallest coordinate whose cumulative weight reaches `fraction` of the total,
// scanning from the low end (or from the high end when `from_top`).
double weighted_quantile(std::vector<Weighted> items, double fraction, bool from_top) {
  std::sort(items.begin(), items.end(), [](const Weighted& a, const Weighted& b) {
    return a.coord != b.coord ? a.coord < b.coord : a.index < b.index;
  });
  if (from_top) std::reverse(items.begin(), items.end());
  double total = 0.0;
  for (const auto& w : items) total += w.weight;
  const double threshold = fraction * total;
  double acc = 0.0;
  for (const auto& w : items) {
    acc += w.weight;
    if (acc >= threshold) return w.coord;
  }
  return items.back().coord;
}

// Cells of `inside` with an in-image 4-neighbor outside it. When `frame` is
// set the lattice is embedded in a one-pixel frame that belongs to the set;
// frame cells carry coordinates just beyond the image.
std::vector<Point2> boundary_of(const std::vector<char>& inside, std::size_t h, std::size_t w, bool frame) {
  std::vector<Point2> out;
  const auto H = static_cast<long>(h);
  const auto W = static_cast<long>(w);
  auto in_image = [&](long r, long c) { return r >= 0 && c >= 0 && r < H && c < W; };
  auto member = [&](long r, long c) {
    return in_image(r, c) ? inside[static_cast<std::size_t>(r * W + c)] != 0 : frame;
  };
  const long lo = frame ? -1 : 0;
  for (long r = lo; r < H - lo; ++r) {
    for (long c = lo; c < W - lo; ++c) {
      if (!member(r, c)) continue;
      for (auto [dr, dc] : {std::pair{-1L, 0L}, {1L, 0L}, {0L, -1L}, {0L, 1L}}) {
        if (in_image(r + dr, c + dc) && !member(r + dr, c + dc)) {
          out.push_back({static_cast<double>(c), static_cast<double>(r)});
          break;
        }
      }
    }
  }
  return out;
}

// Distance (through the linear part of T) from each pixel to the nearest of
// `targets`; pixels flagged in `zero` get distance 0.
std::vector<double> distance_to(const std::vector<Point2>& targets, const std::vector<char>& zero, std::size_t h,
                                std::size_t w, const AffineTransform& t) {
  std::vector<double> d(h * w, std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t i = r * w + c;
      if (zero[i]) {
        d[i] = 0.0;
        continue;
      }
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : targets) {
        const Point2 v = t.apply_linear({static_cast<double>(c) - p.x, static_cast<double>(r) - p.y});
        best = std::min(best, v.x * v.x + v.y * v.y);
      }
      d[i] = std::sqrt(best);
    }
  }
  return d;
}

// Support with enclosed holes filled: everything not reachable from the
// image border through non-support pixels.
std::vector<char> fill_holes(const std::vector<char>& support, std::size_t h, std::size_t w) {
  std::vector<char> outside(h * w, 0);
  std::vector<std::size_t> stack;
  auto push = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * w + c;
    if (!support[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(i);
    }
  };
  for (std::size_t c = 0; c < w; ++c) {
    push(0, c);
    push(h - 1, c);
  }
  for (std::size_t r = 0; r < h; ++r) {
    push(r, 0);
    push(r, w - 1);
  }
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    const std::size_t r = i / w;
    const std::size_t c = i % w;
    if (r > 0) push(r - 1, c);
    if (r + 1 < h) push(r + 1, c);
    if (c > 0) push(r, c - 1);
    if (c + 1 < w) push(r, c + 1);
  }
  std::vector<char> filled(h * w);
  for (std::size_t i = 0; i < h * w; ++i) filled[i] = outside[i] ? 0 : 1;
  return filled;
}

}  // namespace

RegionSummary summarize_region(const ProbMap& q, int label, const AffineTransform& transform) {
  if (label < 0 || static_cast<std::size_t>(label) >= q.num_labels()) {
    throw ShapeError("label " + std::to_string(label) + " outside the probability map");
  }
  const auto l = static_cast<std::size_t>(label);
  RegionSummary s;
  std::vector<Weighted> xs;
  std::vector<Weighted> ys;
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < q.pixels(); ++i) {
    const double v = q(i, l);
    s.mass += v;
    const double g = gate(v);
    if (g <= 0.0) continue;
    const Point2 a = transform.apply({static_cast<double>(i % q.width()), static_cast<double>(i / q.width())});
    s.gated_mass += g;
    cx += g * a.x;
    cy += g * a.y;
    xs.push_back({a.x, g, i});
    ys.push_back({a.y, g, i});
  }
  if (s.mass < RegionSummary::kMinMass || s.gated_mass <= 0.0) {
    throw EmptyConditioningError("organ " + std::to_string(label) + " has no conditioning mass");
  }
  s.centroid = {cx / s.gated_mass, cy / s.gated_mass};
  s.x_min = weighted_quantile(xs, RegionSummary::kExtentQuantile, false);
  s.x_max = weighted_quantile(xs, RegionSummary::kExtentQuantile, true);
  s.y_min = weighted_quantile(ys, RegionSummary::kExtentQuantile, false);
  s.y_max = weighted_quantile(std::move(ys), RegionSummary::kExtentQuantile, true);
  return s;
}

RealGrid rasterize_relation(const AnatomyEdge& edge, const ProbMap& conditioning, const AffineTransform& transform) {
  const std::size_t h = conditioning.height();
  const std::size_t w = conditioning.width();
  const double m = edge.margin;
  const RegionSummary s = summarize_region(conditioning, edge.target, transform);
  RealGrid field(h, w, 1, 0.0);
  auto out = field.values();

  auto atlas = [&](std::size_t i) {
    return transform.apply({static_cast<double>(i % w), static_cast<double>(i / w)});
  };

  switch (edge.relation) {
    case Relation::kLeftOf:
      for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp(s.x_min - m - atlas(i).x);
      return field;
    case Relation::kRightOf:
      for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp(atlas(i).x - s.x_max - m);
      return field;
    case Relation::kAbove:
      for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp(s.y_min - m - atlas(i).y);
      return field;
    case Relation::kBelow:
      for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp(atlas(i).y - s.y_max - m);
      return field;
    default:
      break;
  }

  const auto target = static_cast<std::size_t>(edge.target);
  std::vector<char> support(h * w);
  for (std::size_t i = 0; i < h * w; ++i) support[i] = conditioning(i, target) >= 0.5 ? 1 : 0;

  if (edge.relation == Relation::kInside) {
    const auto filled = fill_holes(support, h, w);
    std::vector<char> complement(h * w);
    for (std::size_t i = 0; i < h * w; ++i) complement[i] = filled[i] ? 0 : 1;
    const auto border = boundary_of(complement, h, w, true);
    const auto d_in = distance_to(border, complement, h, w, transform);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = filled[i] ? ramp(d_in[i] - m) : 0.0;
    return field;
  }

  const auto border = boundary_of(support, h, w, false);
  if (std::find(support.begin(), support.end(), 1) == support.end()) {
    throw EmptyConditioningError("organ " + std::to_string(edge.target) + " has no support with q >= 0.5");
  }
  const auto d = distance_to(border, support, h, w, transform);
  if (edge.relation == Relation::kAdjacentTo) {
    const double width = std::max(m, 1.0);
    for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp((m + width - d[i]) / width);
  } else {
    for (std::size_t i = 0; i < h * w; ++i) out[i] = ramp(d[i] - m);
  }
  return field;
}

RealGrid rasterize_expected_region(const KnowledgeGraph& graph, int o1, int o2, const ProbMap& conditioning,
                                   const AffineTransform& transform) {
  const AnatomyEdge* edge = graph.find_edge(o1, o2);
  if (!edge) throw SchemaError("graph has no edge (" + std::to_string(o1) + ", " + std::to_string(o2) + ")");
  return rasterize_relation(*edge, conditioning, transform);
}

bool relation_holds(const LabelMap& labels, const AnatomyEdge& edge, const AffineTransform& transform) {
  const ProbMap cond = one_hot(labels);
  const RealGrid field = rasterize_relation(edge, cond, transform);
  for (std::size_t i = 0; i < labels.pixels(); ++i) {
    if (labels[i] == edge.source && field.values()[i] < 1.0 - 1e-9) return false;
  }
  return true;
}

}  // namespace kgcrf
