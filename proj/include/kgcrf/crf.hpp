#pragma once

#include <cstddef>
#include <vector>

#include "kgcrf/affine.hpp"
#include "kgcrf/config.hpp"
#include "kgcrf/graph.hpp"
#include "kgcrf/grid.hpp"

namespace kgcrf {

// Additive per-pixel, per-label energy contributions (K channels).
using PotentialField = RealGrid;

inline constexpr double kUnaryFloor = 1e-8;
inline constexpr double kIouEpsilon = 1e-8;

// Label compatibility mu: zero diagonal, nonnegative entries.
class CompatibilityMatrix {
 public:
  explicit CompatibilityMatrix(Matrix entries);

  static CompatibilityMatrix potts(std::size_t k);
  // The config's explicit matrix when present (must be K x K), else Potts.
  static CompatibilityMatrix from_config(const EngineConfig& cfg, std::size_t k);

  std::size_t size() const noexcept { return entries_.rows; }
  double operator()(std::size_t a, std::size_t b) const { return entries_(a, b); }
  const Matrix& entries() const noexcept { return entries_; }

  CompatibilityMatrix permuted(const std::vector<int>& perm) const;

 private:
  Matrix entries_;
};

// psi_u(i, m) = -log(max(P_i(m), kUnaryFloor)).
PotentialField unary_potential(const ProbMap& p);

// exp(-||f~_i - f~_j||^2 / (2 sigma^2)); f~ appends (col, row) / kernel_radius
// to the features when kernel_radius > 0.
double pairwise_kernel(const FeatureMap& features, std::size_t i, std::size_t j, double sigma, int kernel_radius);

// Gaussian weights over the Chebyshev window (or all pixels when the radius
// is 0), precomputed once per feature map.
class PairwiseKernel {
 public:
  PairwiseKernel(const FeatureMap& features, double sigma, int kernel_radius);

  std::size_t pixels() const noexcept { return height_ * width_; }

  // Calls f(j, k_ij) for every j != i in the window of i, in raster order.
  template <typename F>
  void for_each_neighbor(std::size_t i, F&& f) const {
    if (radius_ == 0) {
      for (std::size_t j = 0; j < pixels(); ++j) {
        if (j != i) f(j, dense_weight(i, j));
      }
      return;
    }
    const long r = static_cast<long>(i / width_);
    const long c = static_cast<long>(i % width_);
    const double* w = weights_.data() + i * window_;
    std::size_t slot = 0;
    for (long dr = -radius_; dr <= radius_; ++dr) {
      for (long dc = -radius_; dc <= radius_; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const long rr = r + dr;
        const long cc = c + dc;
        const double k = w[slot++];
        if (rr < 0 || cc < 0 || rr >= static_cast<long>(height_) || cc >= static_cast<long>(width_)) continue;
        f(static_cast<std::size_t>(rr) * width_ + static_cast<std::size_t>(cc), k);
      }
    }
  }

 private:
  double dense_weight(std::size_t i, std::size_t j) const;

  const FeatureMap* features_;
  double sigma_;
  long radius_;
  std::size_t height_;
  std::size_t width_;
  std::size_t window_ = 0;
  std::vector<double> weights_;
};

// msg(i, a) = lambda_f * sum_{j != i in window} k(i, j) * sum_b mu[a][b] Q_j(b).
PotentialField pairwise_message(const ProbMap& q, const FeatureMap& features, const CompatibilityMatrix& mu,
                                const EngineConfig& cfg);
PotentialField pairwise_message(const ProbMap& q, const PairwiseKernel& kernel, const CompatibilityMatrix& mu,
                                double lambda_f);

// L = 1 - sum(r a) / (sum(r + a - r a) + 1e-8).
double soft_iou_loss(const RealGrid& region, const RealGrid& expected);
// dL / dr_i with `expected` held fixed.
RealGrid soft_iou_gradient(const RealGrid& region, const RealGrid& expected);

// Channel `label` of q as a one-channel grid.
RealGrid channel(const ProbMap& q, std::size_t label);

// An edge whose conditioning organ carried mass. `field` is the rasterized
// relation A(o1|o2); `expected` is the source marginal restricted to it, the
// region o1 would occupy if it honored the relation. Both are frozen snapshots
// of the Q they were built from.
struct ActiveRelation {
  AnatomyEdge edge;
  RealGrid field;
  RealGrid expected;
};

// Rasterizes every edge against q; pairs with empty conditioning are skipped.
std::vector<ActiveRelation> active_relations(const ProbMap& q, const KnowledgeGraph& graph,
                                             const AffineTransform& transform);

struct AnatomicalMessage {
  PotentialField field;  // K channels, nonzero only on edge sources
  Matrix scores;         // scores(o1, o2) = soft IoU of R(o1) against A(o1|o2)
};

// Per-pixel gradient message of sum_edges w * L_IoU(Q(o1), A(o1|o2)).
AnatomicalMessage anatomical_message(const ProbMap& q, const KnowledgeGraph& graph, const AffineTransform& transform);

// sum_edges w * L_IoU(Q(o1), expected) for fixed rasterized fields.
double anatomical_penalty(const ProbMap& q, const std::vector<ActiveRelation>& relations);

// E(M) = sum_i psi_u(m_i) + lambda_f sum_{i<j} k(i,j) mu[m_i][m_j]
//        + sum_edges w L_IoU(1[M = o1], A(o1|o2 | one-hot M)).
double evaluate_energy(const LabelMap& m, const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                       const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg);

struct MeanFieldState {
  ProbMap q;
  int iteration = 0;
  double last_delta = 0.0;  // max per-pixel L1 change of the last update
  bool converged = false;
};

struct RefineResult {
  MeanFieldState state;
  Matrix pairwise_scores;  // realized relation satisfaction on the final Q
};

// Stateful mean-field iteration; mean_field_refine drives it to convergence.
class MeanFieldSolver {
 public:
  MeanFieldSolver(const ProbMap& p, const FeatureMap& features, CompatibilityMatrix mu, KnowledgeGraph graph,
                  AffineTransform transform, EngineConfig cfg);

  // One parallel update or one sequential raster sweep. Returns the max
  // per-pixel L1 change.
  double step();

  ProbMap q() const;
  int iteration() const noexcept { return iteration_; }
  const PotentialField& unary() const noexcept { return unary_; }
  // Anatomical field frozen during the most recent step.
  const PotentialField& anatomical_field() const noexcept { return anatomical_; }

  // F(Q) = sum Q (unary + anatomical) + lambda_f sum_{i<j} k Q_i^T mu Q_j
  //        + sum Q log Q. Assumes symmetric mu.
  double free_energy(const ProbMap& q, const PotentialField& anatomical) const;

  Matrix scores() const;

  RefineResult run();

 private:
  void softmax_into(std::span<double> out, std::span<const double> field) const;

  ProbMap p_;
  const FeatureMap& features_;
  CompatibilityMatrix mu_;
  KnowledgeGraph graph_;
  AffineTransform transform_;
  EngineConfig cfg_;
  PairwiseKernel kernel_;
  PotentialField unary_;
  PotentialField anatomical_;
  RealGrid q_;
  int iteration_ = 0;
  double last_delta_ = 0.0;
};

RefineResult mean_field_refine(const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                               const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg);

// Largest K^(H*W) accepted by exact_marginals.
inline constexpr std::size_t kExactCapacity = std::size_t{1} << 20;

// Exact Gibbs marginals by enumerating every labeling; throws CapacityError
// above kExactCapacity labelings.
ProbMap exact_marginals(const ProbMap& p, const FeatureMap& features, const CompatibilityMatrix& mu,
                        const KnowledgeGraph& graph, const AffineTransform& transform, const EngineConfig& cfg);

}  // namespace kgcrf
