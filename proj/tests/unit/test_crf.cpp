#include <cmath>
#include <random>

#include "doctest.h"
#include "kgcrf/crf.hpp"
#include "kgcrf/errors.hpp"
#include "kgcrf/relations.hpp"

using namespace kgcrf;

namespace {

ProbMap prob(std::size_t h, std::size_t w, std::size_t k, std::vector<double> v) {
  return ProbMap::from_grid(RealGrid(h, w, k, std::move(v)));
}

FeatureMap flat_features(std::size_t h, std::size_t w) { return FeatureMap(RealGrid(h, w, 1, 0.0)); }

EngineConfig dense(double lambda_f) {
  EngineConfig cfg;
  cfg.lambda_f = lambda_f;
  cfg.kernel_radius = 0;
  cfg.max_iters = 200;
  cfg.epsilon = 1e-12;
  return cfg;
}

// The 1x2 instance: unaries (0.9, 0.1) and (0.6, 0.4), identical features.
const ProbMap& pair_instance() {
  static const ProbMap p = prob(1, 2, 2, {0.9, 0.1, 0.6, 0.4});
  return p;
}

}  // namespace

TEST_CASE("unary potential is the floored negative log") {
  const PotentialField u = unary_potential(prob(1, 1, 3, {1.0, 0.0, 0.0}));
  CHECK(u.values()[0] == 0.0);
  CHECK(u.values()[1] == doctest::Approx(18.420680743952367).epsilon(1e-12));
  CHECK(unary_potential(prob(1, 1, 2, {0.5, 0.5})).values()[0] == doctest::Approx(0.6931471805599453).epsilon(1e-14));
}

TEST_CASE("pairwise kernel evaluates the Gaussian formula") {
  const FeatureMap f(RealGrid(1, 2, 1, std::vector<double>{0.0, std::sqrt(2.0)}));
  CHECK(pairwise_kernel(f, 0, 0, 1.0, 0) == 1.0);
  CHECK(pairwise_kernel(f, 0, 1, 1.0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  // With coordinates: one column apart at radius 2 adds (1/2)^2.
  CHECK(pairwise_kernel(f, 0, 1, 1.0, 2) == doctest::Approx(std::exp(-(2.0 + 0.25) / 2.0)).epsilon(1e-14));
}

TEST_CASE("pairwise message matches an independent double loop") {
  // Oracle values from a direct numpy evaluation of the message formula.
  const FeatureMap f(RealGrid(2, 2, 2, std::vector<double>{0.0, 1.0, 0.5, -0.5, 1.5, 0.2, -1.0, 0.3}));
  const ProbMap q = prob(2, 2, 2, {0.7, 0.3, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1});
  Matrix m = Matrix::square(2);
  m(0, 1) = 1.0;
  m(1, 0) = 2.0;
  EngineConfig cfg;
  cfg.sigma = 1.3;
  cfg.kernel_radius = 1;
  cfg.lambda_f = 0.5;
  const PotentialField msg = pairwise_message(q, f, CompatibilityMatrix(m), cfg);
  const std::vector<double> expected{0.23891306, 0.54967726, 0.1580999, 0.71130358,
                                     0.19572956, 0.39772213, 0.20913872, 0.37090382};
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(msg.values()[i] == doctest::Approx(expected[i]).epsilon(1e-7));
}

TEST_CASE("pairwise message symmetry and empty sums") {
  const ProbMap uniform = prob(3, 3, 3, std::vector<double>(27, 1.0 / 3.0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  RealGrid fg(3, 3, 2);
  for (double& v : fg.values()) v = n(rng);
  const PotentialField msg = pairwise_message(uniform, FeatureMap(fg), CompatibilityMatrix::potts(3), EngineConfig{});
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(msg.pixel(i)[0] == doctest::Approx(msg.pixel(i)[1]).epsilon(1e-14));
    CHECK(msg.pixel(i)[1] == doctest::Approx(msg.pixel(i)[2]).epsilon(1e-14));
  }
  const PotentialField single = pairwise_message(prob(1, 1, 2, {0.3, 0.7}), flat_features(1, 1),
                                                 CompatibilityMatrix::potts(2), EngineConfig{});
  CHECK(single.values()[0] == 0.0);
  CHECK(single.values()[1] == 0.0);
}

TEST_CASE("soft IoU loss closed forms") {
  const RealGrid a(4, 4, 1, 1.0);
  CHECK(soft_iou_loss(a, a) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(soft_iou_loss(RealGrid(4, 4, 1, 0.5), a) == doctest::Approx(0.5).epsilon(1e-9));
  RealGrid left(1, 4, 1, std::vector<double>{1, 1, 0, 0});
  RealGrid right(1, 4, 1, std::vector<double>{0, 0, 1, 1});
  CHECK(soft_iou_loss(left, right) == 1.0);
  CHECK_THROWS_AS(soft_iou_loss(left, a), ShapeError);
}

TEST_CASE("soft IoU gradient agrees with central differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RealGrid r(5, 6, 1), a(5, 6, 1);
  for (double& v : r.values()) v = u(rng);
  for (double& v : a.values()) v = u(rng);
  const RealGrid g = soft_iou_gradient(r, a);
  for (std::size_t i = 0; i < r.size(); ++i) {
    RealGrid up = r, down = r;
    up.values()[i] += 1e-6;
    down.values()[i] -= 1e-6;
    const double fd = (soft_iou_loss(up, a) - soft_iou_loss(down, a)) / 2e-6;
    CHECK(g.values()[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("anatomical message on an empty graph is zero") {
  const ProbMap q = prob(1, 2, 3, {0.2, 0.3, 0.5, 0.6, 0.2, 0.2});
  const AnatomicalMessage m = anatomical_message(q, KnowledgeGraph(), AffineTransform::identity());
  for (double v : m.field.values()) CHECK(v == 0.0);
  for (double v : m.scores.values) CHECK(v == 0.0);
}

TEST_CASE("satisfied and violated left_of relations") {
  const KnowledgeGraph g({{1, "a", {}}, {2, "b", {}}}, {{1, 2, Relation::kLeftOf, 1.0, 0.0}});
  // 8x8: organ 1 in columns 0-1, organ 2 in columns 6-7.
  Grid2D<std::int64_t> lab(8, 8, 1, 0);
  for (std::size_t r = 0; r < 8; ++r) {
    lab.at(r, 0) = lab.at(r, 1) = 1;
    lab.at(r, 6) = lab.at(r, 7) = 2;
  }
  const LabelMap good(lab, 3);
  const AnatomicalMessage ok = anatomical_message(one_hot(good), g, AffineTransform::identity());
  CHECK(ok.scores(1, 2) == doctest::Approx(1.0).epsilon(1e-9));

  lab.at(3, 7) = 1;  // one organ-1 pixel on the wrong side
  const LabelMap bad(lab, 3);
  const ProbMap q = one_hot(bad);
  const AnatomicalMessage viol = anatomical_message(q, g, AffineTransform::identity());
  CHECK(viol.scores(1, 2) < 1.0);
  CHECK(viol.field.at(3, 7, 1) > 0.0);
  // Central differences of the frozen penalty at the violating pixel.
  const auto rel = active_relations(q, g, AffineTransform::identity());
  RealGrid up = channel(q, 1), down = channel(q, 1);
  up.at(3, 7) += 1e-6;
  down.at(3, 7) -= 1e-6;
  const double fd = (soft_iou_loss(up, rel[0].expected) - soft_iou_loss(down, rel[0].expected)) / 2e-6;
  CHECK(std::abs(viol.field.at(3, 7, 1) - fd) <= 1e-4 * std::abs(fd));

  const PotentialField none(8, 8, 3, 0.0);
  CHECK(evaluate_energy(bad, q, flat_features(8, 8), CompatibilityMatrix::potts(3), g, AffineTransform::identity(),
                        dense(0.0)) >
        evaluate_energy(good, one_hot(good), flat_features(8, 8), CompatibilityMatrix::potts(3), g,
                        AffineTransform::identity(), dense(0.0)));
}

TEST_CASE("energy of hand-checkable labelings") {
  const ProbMap& p = pair_instance();
  const auto mu = CompatibilityMatrix::potts(2);
  const LabelMap differ(Grid2D<std::int64_t>(1, 2, 1, std::vector<std::int64_t>{0, 1}), 2);
  CHECK(evaluate_energy(differ, p, flat_features(1, 2), mu, KnowledgeGraph(), AffineTransform::identity(),
                        dense(0.5)) == doctest::Approx(1.5216512475319812).epsilon(1e-12));
  const LabelMap best = argmax(p);
  CHECK(evaluate_energy(best, p, flat_features(1, 2), mu, KnowledgeGraph(), AffineTransform::identity(), dense(0.0)) ==
        doctest::Approx(-std::log(0.9) - std::log(0.6)).epsilon(1e-12));
}

TEST_CASE("mean field on the 1x2 instance") {
  const ProbMap& p = pair_instance();
  const auto mu = CompatibilityMatrix::potts(2);
  const ProbMap exact = exact_marginals(p, flat_features(1, 2), mu, KnowledgeGraph(), AffineTransform::identity(), dense(0.5));
  // 4-term enumeration done independently.
  CHECK(exact(0, 0) == doctest::Approx(0.90848459).epsilon(1e-7));
  CHECK(exact(1, 0) == doctest::Approx(0.69050226).epsilon(1e-7));
  const RefineResult r = mean_field_refine(p, flat_features(1, 2), mu, KnowledgeGraph(), AffineTransform::identity(), dense(0.5));
  CHECK(r.state.converged);
  // Fixed point of an independent mean-field iteration.
  CHECK(r.state.q(0, 0) == doctest::Approx(0.91620098).epsilon(1e-6));
  CHECK(r.state.q(1, 0) == doctest::Approx(0.69458989).epsilon(1e-6));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(exact.grid().values()[i] - r.state.q.grid().values()[i]) <= 0.05);
}

TEST_CASE("unary-only refinement is a fixed point after one iteration") {
  const ProbMap p = prob(2, 2, 3, {0.2, 0.3, 0.5, 0.6, 0.2, 0.2, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8});
  EngineConfig cfg;
  cfg.lambda_f = 0.0;
  const RefineResult r = mean_field_refine(p, flat_features(2, 2), CompatibilityMatrix::potts(3), KnowledgeGraph(),
                                           AffineTransform::identity(), cfg);
  CHECK(r.state.iteration == 1);
  CHECK(r.state.converged);
  for (std::size_t i = 0; i < 12; ++i) CHECK(r.state.q.grid().values()[i] == doctest::Approx(p.grid().values()[i]).epsilon(1e-7));
}

TEST_CASE("exact marginals of a single site equal P") {
  const ProbMap p = prob(1, 1, 3, {0.2, 0.5, 0.3});
  const ProbMap e = exact_marginals(p, flat_features(1, 1), CompatibilityMatrix::potts(3), KnowledgeGraph(),
                                    AffineTransform::identity(), EngineConfig{});
  for (std::size_t m = 0; m < 3; ++m) CHECK(e(0, m) == doctest::Approx(p(0, m)).epsilon(1e-12));
}

TEST_CASE("exact marginals refuse oversized instances") {
  const ProbMap p = ProbMap::normalize(RealGrid(1, 13, 3, 1.0));
  CHECK_THROWS_AS(exact_marginals(p, flat_features(1, 13), CompatibilityMatrix::potts(3), KnowledgeGraph(),
                                  AffineTransform::identity(), EngineConfig{}),
                  CapacityError);
}

TEST_CASE("iterates stay normalized under both schedules") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  RealGrid g(6, 7, 3);
  for (double& v : g.values()) v = u(rng);
  RealGrid fg(6, 7, 2);
  for (double& v : fg.values()) v = u(rng);
  const FeatureMap f(fg);
  for (auto schedule : {UpdateSchedule::kParallel, UpdateSchedule::kSequential}) {
    EngineConfig cfg;
    cfg.update_schedule = schedule;
    MeanFieldSolver s(ProbMap::normalize(g), f, CompatibilityMatrix::potts(3), KnowledgeGraph(),
                      AffineTransform::identity(), cfg);
    for (int it = 0; it < 5; ++it) {
      CHECK(s.step() >= 0.0);
      const ProbMap q = s.q();
      for (std::size_t i = 0; i < q.pixels(); ++i) {
        double sum = 0.0;
        for (double v : q.pixel(i)) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-9);
      }
    }
  }
}

TEST_CASE("label permutation is equivariant") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  RealGrid g(8, 8, 3);
  for (double& v : g.values()) v = u(rng);
  const ProbMap p = ProbMap::normalize(g);
  RealGrid fg(8, 8, 2);
  for (double& v : fg.values()) v = u(rng);
  const FeatureMap f(fg);
  const KnowledgeGraph graph({{1, "a", {}}, {2, "b", {}}}, {{1, 2, Relation::kAbove, 1.0, 1.0}});
  Matrix m = Matrix::square(3, 1.0);
  for (std::size_t a = 0; a < 3; ++a) m(a, a) = 0.0;
  m(0, 2) = m(2, 0) = 0.5;
  const CompatibilityMatrix mu(m);

  const std::vector<int> perm{0, 2, 1};
  RealGrid pg(8, 8, 3);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t l = 0; l < 3; ++l) pg.pixel(i)[static_cast<std::size_t>(perm[l])] = p(i, l);
  }
  const EngineConfig cfg;
  const RefineResult a = mean_field_refine(p, f, mu, graph, AffineTransform::identity(), cfg);
  const RefineResult b = mean_field_refine(ProbMap::normalize(pg), f, mu.permuted(perm), graph.relabeled(perm),
                                           AffineTransform::identity(), cfg);
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t l = 0; l < 3; ++l) {
      CHECK(b.state.q(i, static_cast<std::size_t>(perm[l])) == doctest::Approx(a.state.q(i, l)).epsilon(1e-9));
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(mean_field_refine(pair_instance(), flat_features(2, 1), CompatibilityMatrix::potts(2),
                                    KnowledgeGraph(), AffineTransform::identity(), EngineConfig{}),
                  ShapeError);
  const KnowledgeGraph big({{1, "a", {}}, {4, "b", {}}}, {{1, 4, Relation::kLeftOf, 1.0, 0.0}});
  CHECK_THROWS(mean_field_refine(pair_instance(), flat_features(1, 2), CompatibilityMatrix::potts(2), big,
                                 AffineTransform::identity(), EngineConfig{}));
}
