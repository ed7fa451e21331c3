#include "kgcrf/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kgcrf/errors.hpp"
#include "kgcrf/parallel.hpp"
#include "kgcrf/relations.hpp"

namespace kgcrf {
namespace {

void require_lattice(const ProbMap& p, const FeatureMap& f) {
  if (p.height() != f.height() || p.width() != f.width()) {
    throw ShapeError("probability map is " + std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                     " but feature map is " + std::to_string(f.height()) + "x" + std::to_string(f.width()));
  }
}

void require_labels(const KnowledgeGraph& graph, std::size_t k) {
  for (const auto& e : graph.edges()) {
    if (static_cast<std::size_t>(std::max(e.source, e.target)) >= k) {
      throw ShapeError("graph edge (" + std::to_string(e.source) + ", " + std::to_string(e.target) +
                       ") references a label outside " + std::to_string(k) + " labels");
    }
  }
}

// Sum over unordered window pairs i < j of k(i, j) * mu[m_i][m_j].
double pairwise_energy(const LabelMap& m, const PairwiseKernel& kernel, const CompatibilityMatrix& mu) {
  double e = 0.0;
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    const auto a = static_cast<std::size_t>(m[i]);
    kernel.for_each_neighbor(i, [&](std::size_t j, double k) {
      if (j > i) e += k * mu(a, static_cast<std::size_t>(m[j]));
    });
  }
  return e;
}

double anatomical_energy(const LabelMap& m, const KnowledgeGraph& graph, const AffineTransform& transform) {
  if (graph.edges().empty()) return 0.0;
  const ProbMap hard = one_hot(m);
  return anatomical_penalty(hard, active_relations(hard, graph, transform));
}

}  // namespace

CompatibilityMatrix::CompatibilityMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows != entries_.cols) throw ConfigError("compatibility", "must be square");
  for (std::size_t a = 0; a < entries_.rows; ++a) {
    for (std::size_t b = 0; b < entries_.cols; ++b) {
      const double v = entries_(a, b);
      if (!std::isfinite(v) || v < 0.0) throw ConfigError("compatibility", "entries must be finite and >= 0");
      if (a == b && v != 0.0) throw ConfigError("compatibility", "diagonal must be 0");
    }
  }
}

CompatibilityMatrix CompatibilityMatrix::potts(std::size_t k) {
  Matrix m = Matrix::square(k, 1.0);
  for (std::size_t a = 0; a < k; ++a) m(a, a) = 0.0;
  return CompatibilityMatrix(std::move(m));
}

CompatibilityMatrix CompatibilityMatrix::from_config(const EngineConfig& cfg, std::size_t k) {
  if (!cfg.compatibility) return potts(k);
  const auto& rows = *cfg.compatibility;
  if (rows.size() != k) {
    throw ConfigError("compatibility", "expected " + std::to_string(k) + "x" + std::to_string(k) + " matrix");
  }
  Matrix m = Matrix::square(k);
  for (std::size_t a = 0; a < k; ++a) {
    if (rows[a].size() != k) throw ConfigError("compatibility", "must be square");
    for (std::size_t b = 0; b < k; ++b) m(a, b) = rows[a][b];
  }
  return CompatibilityMatrix(std::move(m));
}

CompatibilityMatrix CompatibilityMatrix::permuted(const std::vector<int>& perm) const {
  Matrix m = Matrix::square(size());
  for (std::size_t a = 0; a < size(); ++a) {
    for (std::size_t b = 0; b < size(); ++b) {
      m(static_cast<std::size_t>(perm[a]), static_cast<std::size_t>(perm[b])) = entries_(a, b);
    }
  }
  return CompatibilityMatrix(std::move(m));
}

PotentialField unary_potential(const ProbMap& p) {
  PotentialField u(p.height(), p.width(), p.num_labels());
  auto out = u.values();
  const auto in = p.grid().values();
  for (std::size_t n = 0; n < in.size(); ++n) out[n] = -std::log(std::max(in[n], kUnaryFloor));
  return u;
}

double pairwise_kernel(const FeatureMap& features, std::size_t i, std::size_t j, double sigma, int kernel_radius) {
  const auto fi = features.pixel(i);
  const auto fj = features.pixel(j);
  double d2 = 0.0;
  for (std::size_t d = 0; d < fi.size(); ++d) {
    const double diff = fi[d] - fj[d];
    d2 += diff * diff;
  }
  if (kernel_radius > 0) {
    const std::size_t w = features.width();
    const double dx = (static_cast<double>(i % w) - static_cast<double>(j % w)) / kernel_radius;
    const double dy = (static_cast<double>(i / w) - static_cast<double>(j / w)) / kernel_radius;
    d2 += dx * dx + dy * dy;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

PairwiseKernel::PairwiseKernel(const FeatureMap& features, double sigma, int kernel_radius)
    : features_(&features),
      sigma_(sigma),
      radius_(kernel_radius),
      height_(features.height()),
      width_(features.width()) {
  if (radius_ == 0) return;
  const long side = 2 * radius_ + 1;
  window_ = static_cast<std::size_t>(side * side - 1);
  weights_.assign(pixels() * window_, 0.0);
  parallel_for(pixels(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const long r = static_cast<long>(i / width_);
      const long c = static_cast<long>(i % width_);
      double* w = weights_.data() + i * window_;
      std::size_t slot = 0;
      for (long dr = -radius_; dr <= radius_; ++dr) {
        for (long dc = -radius_; dc <= radius_; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const long rr = r + dr;
          const long cc = c + dc;
          double k = 0.0;
          if (rr >= 0 && cc >= 0 && rr < static_cast<long>(height_) && cc < static_cast<long>(width_)) {
            k = pairwise_kernel(*features_, i, static_cast<std::size_t>(rr) * width_ + static_cast<std::size_t>(cc),
                                sigma_, static_cast<int>(radius_));
          }
          w[slot++] = k;
        }
      }
    }
  });
}

double PairwiseKernel::dense_weight(std::size_t i, std::size_t j) const {
  return pairwise_kernel(*features_, i, j, sigma_, 0);
}

PotentialField pairwise_message(const ProbMap& q, const FeatureMap& features, const CompatibilityMatrix& mu,
                                const EngineConfig& cfg) {
  require_lattice(q, features);
  return pairwise_message(q, PairwiseKernel(features, cfg.sigma, cfg.kernel_radius), mu, cfg.lambda_f);
}

PotentialField pairwise_message(const ProbMap& q, const PairwiseKernel& kernel, const CompatibilityMatrix& mu,
                                double lambda_f) {
  const std::size_t k = q.num_labels();
  if (mu.size() != k) throw ShapeError("compatibility matrix does not match the label count");
  const std::size_t n = q.pixels();

  // nu_j(a) = sum_b mu[a][b] Q_j(b)
  std::vector<double> nu(n * k, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < k; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < k; ++b) s += mu(a, b) * q(j, b);
      nu[j * k + a] = s;
    }
  }

  PotentialField msg(q.height(), q.width(), k, 0.0);
  auto out = msg.values();
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* m = out.data() + i * k;
      kernel.for_each_neighbor(i, [&](std::size_t j, double w) {
        const double* v = nu.data() + j * k;
        for (std::size_t a = 0; a < k; ++a) m[a] += w * v[a];
      });
      for (std::size_t a = 0; a < k; ++a) m[a] *= lambda_f;
    }
  });
  return msg;
}

double soft_iou_loss(const RealGrid& region, const RealGrid& expected) {
  if (!region.same_lattice(expected) || region.channels() != 1 || expected.channels() != 1) {
    throw ShapeError("soft IoU needs two single-channel fields on one lattice");
  }
  double inter = 0.0;
  double uni = 0.0;
  const auto r = region.values();
  const auto a = expected.values();
  for (std::size_t i = 0; i < r.size(); ++i) {
    inter += r[i] * a[i];
    uni += r[i] + a[i] - r[i] * a[i];
  }
  return 1.0 - inter / (uni + kIouEpsilon);
}

RealGrid soft_iou_gradient(const RealGrid& region, const RealGrid& expected) {
  if (!region.same_lattice(expected) || region.channels() != 1 || expected.channels() != 1) {
    throw ShapeError("soft IoU needs two single-channel fields on one lattice");
  }
  double inter = 0.0;
  double uni = kIouEpsilon;
  const auto r = region.values();
  const auto a = expected.values();
  for (std::size_t i = 0; i < r.size(); ++i) {
    inter += r[i] * a[i];
    uni += r[i] + a[i] - r[i] * a[i];
  }
  RealGrid grad(region.height(), region.width(), 1);
  auto g = grad.values();
  const double u2 = uni * uni;
  for (std::size_t i = 0; i < r.size(); ++i) g[i] = -(a[i] * uni - inter * (1.0 - a[i])) / u2;
  return grad;
}

RealGrid channel(const ProbMap& q, std::size_t label) {
  RealGrid out(q.height(), q.width(), 1);
  for (std::size_t i = 0; i < q.pixels(); ++i) out.values()[i] = q(i, label);
  return out;
}

std::vector<ActiveRelation> active_relations(const ProbMap& q, const KnowledgeGraph& graph,
                                             const AffineTransform& transform) {
  require_labels(graph, q.num_labels());
  std::vector<ActiveRelation> out;
  for (const auto& e : graph.edges()) {
    try {
      RealGrid field = rasterize_relation(e, q, transform);
      RealGrid expected = channel(q, static_cast<std::size_t>(e.source));
      for (std::size_t i = 0; i < expected.size(); ++i) expected.values()[i] *= field.values()[i];
      out.push_back({e, std::move(field), std::move(expected)});
    } catch (const EmptyConditioningError&) {
      // Inactive for this labeling/iteration.
    }
  }
  return out;
}

AnatomicalMessage anatomical_message(const ProbMap& q, const KnowledgeGraph& graph, const AffineTransform& transform) {
  const std::size_t k = q.num_labels();
  AnatomicalMessage msg{PotentialField(q.height(), q.width(), k, 0.0), Matrix::square(k)};
  for (const auto& rel : active_relations(q, graph, transform)) {
    const auto o1 = static_cast<std::size_t>(rel.edge.source);
    const auto o2 = static_cast<std::size_t>(rel.edge.target);
    const RealGrid region = channel(q, o1);
    msg.scores(o1, o2) = 1.0 - soft_iou_loss(region, rel.expected);
    const RealGrid grad = soft_iou_gradient(region, rel.expected);
    for (std::size_t i = 0; i < q.pixels(); ++i) msg.field.pixel(i)[o1] += rel.edge.weight * grad.values()[i];
  }
  return msg;
}

double anatomical_penalty(const ProbMap& q, const std::vector<ActiveRelation>& relations) {
  double total = 0.0;
  for (const auto& rel : relations) {
    total += rel.edge.weight * soft_iou_loss(channel(q, static_cast<std::size_t>(rel.edge.source)), rel.expected);
  }
  return total;
}

double evaluate_energy(const LabelMap& m, const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                       const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg) {
  require_lattice(p, features);
  if (m.height() != p.height() || m.width() != p.width() || m.num_labels() != p.num_labels()) {
    throw ShapeError("label map does not match the probability map");
  }
  require_labels(graph, p.num_labels());
  double e = 0.0;
  for (std::size_t i = 0; i < m.pixels(); ++i) {
    e -= std::log(std::max(p(i, static_cast<std::size_t>(m[i])), kUnaryFloor));
  }
  if (cfg.lambda_f != 0.0) {
    e += cfg.lambda_f * pairwise_energy(m, PairwiseKernel(features, cfg.sigma, cfg.kernel_radius), mu);
  }
  return e + anatomical_energy(m, graph, transform);
}

MeanFieldSolver::MeanFieldSolver(const ProbMap& p, const FeatureMap& features, CompatibilityMatrix mu,
                                 KnowledgeGraph graph, AffineTransform transform, EngineConfig cfg)
    : p_(p),
      features_(features),
      mu_(std::move(mu)),
      graph_(std::move(graph)),
      transform_(transform),
      cfg_(std::move(cfg)),
      kernel_((require_lattice(p, features), features), cfg_.sigma, cfg_.kernel_radius),
      unary_(unary_potential(p)),
      anatomical_(p.height(), p.width(), p.num_labels(), 0.0),
      q_(p.grid()) {
  cfg_.validate();
  if (mu_.size() != p.num_labels()) throw ShapeError("compatibility matrix does not match the label count");
  require_labels(graph_, p.num_labels());
}

ProbMap MeanFieldSolver::q() const { return ProbMap::normalize(q_); }

void MeanFieldSolver::softmax_into(std::span<double> out, std::span<const double> field) const {
  const double lo = *std::min_element(field.begin(), field.end());
  double z = 0.0;
  for (std::size_t m = 0; m < field.size(); ++m) {
    out[m] = std::exp(-(field[m] - lo));
    z += out[m];
  }
  for (double& v : out) v /= z;
}

double MeanFieldSolver::step() {
  const std::size_t k = p_.num_labels();
  const std::size_t n = p_.pixels();
  const ProbMap current = q();

  if (graph_.edges().empty()) {
    std::fill(anatomical_.values().begin(), anatomical_.values().end(), 0.0);
  } else {
    anatomical_ = anatomical_message(current, graph_, transform_).field;
  }

  std::vector<double> row_delta(n, 0.0);
  if (cfg_.update_schedule == UpdateSchedule::kParallel) {
    PotentialField msg = cfg_.lambda_f != 0.0 ? pairwise_message(current, kernel_, mu_, cfg_.lambda_f)
                                              : PotentialField(p_.height(), p_.width(), k, 0.0);
    RealGrid next(p_.height(), p_.width(), k);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      std::vector<double> field(k);
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t m = 0; m < k; ++m) field[m] = unary_.pixel(i)[m] + msg.pixel(i)[m] + anatomical_.pixel(i)[m];
        auto out = next.pixel(i);
        softmax_into(out, field);
        double d = 0.0;
        for (std::size_t m = 0; m < k; ++m) d += std::abs(out[m] - q_.pixel(i)[m]);
        row_delta[i] = d;
      }
    });
    q_ = std::move(next);
  } else {
    std::vector<double> field(k);
    std::vector<double> updated(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t m = 0; m < k; ++m) field[m] = unary_.pixel(i)[m] + anatomical_.pixel(i)[m];
      if (cfg_.lambda_f != 0.0) {
        kernel_.for_each_neighbor(i, [&](std::size_t j, double w) {
          const auto qj = q_.pixel(j);
          for (std::size_t a = 0; a < k; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < k; ++b) s += mu_(a, b) * qj[b];
            field[a] += cfg_.lambda_f * w * s;
          }
        });
      }
      softmax_into(updated, field);
      auto qi = q_.pixel(i);
      double d = 0.0;
      for (std::size_t m = 0; m < k; ++m) {
        d += std::abs(updated[m] - qi[m]);
        qi[m] = updated[m];
      }
      row_delta[i] = d;
    }
  }

  ++iteration_;
  last_delta_ = *std::max_element(row_delta.begin(), row_delta.end());
  return last_delta_;
}

double MeanFieldSolver::free_energy(const ProbMap& q, const PotentialField& anatomical) const {
  const std::size_t k = q.num_labels();
  double linear = 0.0;
  double entropy = 0.0;
  for (std::size_t i = 0; i < q.pixels(); ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      const double v = q(i, m);
      linear += v * (unary_.pixel(i)[m] + anatomical.pixel(i)[m]);
      if (v > 0.0) entropy += v * std::log(v);
    }
  }
  double quadratic = 0.0;
  if (cfg_.lambda_f != 0.0) {
    const PotentialField msg = pairwise_message(q, kernel_, mu_, cfg_.lambda_f);
    for (std::size_t i = 0; i < q.pixels(); ++i) {
      for (std::size_t m = 0; m < k; ++m) quadratic += q(i, m) * msg.pixel(i)[m];
    }
    quadratic *= 0.5;
  }
  return linear + quadratic + entropy;
}

Matrix MeanFieldSolver::scores() const {
  if (graph_.edges().empty()) return Matrix::square(p_.num_labels());
  return anatomical_message(q(), graph_, transform_).scores;
}

RefineResult MeanFieldSolver::run() {
  bool converged = false;
  while (true) {
    const double delta = step();
    if (delta < cfg_.epsilon) {
      converged = true;
      break;
    }
    if (iteration_ >= cfg_.max_iters) break;
  }
  return RefineResult{MeanFieldState{q(), iteration_, last_delta_, converged}, scores()};
}

RefineResult mean_field_refine(const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                               const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg) {
  return MeanFieldSolver(p, features, mu, graph, transform, cfg).run();
}

ProbMap exact_marginals(const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                        const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg) {
  require_lattice(p, features);
  require_labels(graph, p.num_labels());
  if (mu.size() != p.num_labels()) throw ShapeError("compatibility matrix does not match the label count");
  const std::size_t n = p.pixels();
  const std::size_t k = p.num_labels();

  std::size_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (count > kExactCapacity / k) {
      throw CapacityError(std::to_string(k) + "^" + std::to_string(n) + " labelings exceed the enumeration capacity");
    }
    count *= k;
  }

  const PairwiseKernel kernel(features, cfg.sigma, cfg.kernel_radius);
  Grid2D<std::int64_t> labels(p.height(), p.width(), 1, 0);
  std::vector<double> energies(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t code = idx;
    for (std::size_t i = 0; i < n; ++i) {
      labels.values()[i] = static_cast<std::int64_t>(code % k);
      code /= k;
    }
    const LabelMap m(labels, k);
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e -= std::log(std::max(p(i, static_cast<std::size_t>(m[i])), kUnaryFloor));
    if (cfg.lambda_f != 0.0) e += cfg.lambda_f * pairwise_energy(m, kernel, mu);
    e += anatomical_energy(m, graph, transform);
    energies[idx] = e;
  }

  const double e_min = *std::min_element(energies.begin(), energies.end());
  RealGrid marg(p.height(), p.width(), k, 0.0);
  double z = 0.0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    const double w = std::exp(-(energies[idx] - e_min));
    z += w;
    std::size_t code = idx;
    for (std::size_t i = 0; i < n; ++i) {
      marg.pixel(i)[code % k] += w;
      code /= k;
    }
  }
  for (double& v : marg.values()) v /= z;
  return ProbMap::normalize(std::move(marg));
}

}  // namespace kgcrf
