#include "doctest.h"
#include "kgcrf/errors.hpp"
#include "kgcrf/graph.hpp"

using namespace kgcrf;
using nlohmann::json;

namespace {

json two_node_doc() {
  return {{"nodes", {{{"id", 1}, {"name", "liver"}, {"features", {0.2, 0.3}}}, {{"id", 2}, {"name", "spleen"}}}},
          {"edges", {{{"source", 1}, {"target", 2}, {"relation", "left_of"}, {"weight", 1.0}, {"margin", 2.0}}}},
          {"atlas_landmarks", {{{"name", "a"}, {"x", 0.0}, {"y", 0.0}}}}};
}

std::string schema_message(const json& doc) {
  try {
    graph_from_json(doc);
  } catch (const SchemaError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("constraint matrix is synthesized from the edges") {
  const KnowledgeGraph g = graph_from_json(two_node_doc());
  REQUIRE(g.constraint().size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(g.constraint()(r, c) == (r == 1 && c == 2 ? 1.0 : 0.0));
  }
  CHECK(g.min_labels() == 3);
  CHECK(g.find_edge(1, 2)->relation == Relation::kLeftOf);
  CHECK(g.find_edge(2, 1) == nullptr);
  CHECK(g.find_node(1)->features == std::vector<double>{0.2, 0.3});
}

TEST_CASE("synthesis is deterministic") {
  CHECK(graph_from_json(two_node_doc()).constraint() == graph_from_json(two_node_doc()).constraint());
}

TEST_CASE("schema violations are reported") {
  json dangling = two_node_doc();
  dangling["edges"][0]["target"] = 9;
  CHECK(schema_message(dangling).find("does not exist") != std::string::npos);

  json bad_relation = two_node_doc();
  bad_relation["edges"][0]["relation"] = "north_of";
  CHECK(schema_message(bad_relation).find("north_of") != std::string::npos);

  json contradicting = two_node_doc();
  contradicting["constraint"] = {{0, 0, 0}, {0, 0, 0}, {0, 1, 0}};
  const std::string msg = schema_message(contradicting);
  CHECK(msg.find("constraint[1][2]") != std::string::npos);

  json self_loop = two_node_doc();
  self_loop["edges"][0]["target"] = 1;
  CHECK_FALSE(schema_message(self_loop).empty());

  json duplicate = two_node_doc();
  duplicate["nodes"][1]["id"] = 1;
  CHECK_FALSE(schema_message(duplicate).empty());

  json negative = two_node_doc();
  negative["edges"][0]["weight"] = -1.0;
  CHECK_FALSE(schema_message(negative).empty());

  json background = two_node_doc();
  background["nodes"][0]["id"] = 0;
  CHECK_FALSE(schema_message(background).empty());
}

TEST_CASE("an explicit consistent matrix is accepted") {
  json doc = two_node_doc();
  doc["constraint"] = {{0, 0, 0}, {0, 0, 0.75}, {0, 0, 0}};
  CHECK(graph_from_json(doc).constraint()(1, 2) == 0.75);
}

TEST_CASE("json round trip preserves the graph") {
  const KnowledgeGraph g = graph_from_json(two_node_doc());
  const KnowledgeGraph back = graph_from_json(graph_to_json(g));
  CHECK(back.constraint() == g.constraint());
  REQUIRE(back.edges().size() == 1);
  CHECK(back.edges()[0].margin == 2.0);
  CHECK(back.atlas_landmarks().size() == 1);
}

TEST_CASE("relabeling permutes ids and the constraint matrix") {
  const KnowledgeGraph g = graph_from_json(two_node_doc());
  const KnowledgeGraph r = g.relabeled({0, 2, 1});
  CHECK(r.find_edge(2, 1) != nullptr);
  CHECK(r.constraint()(2, 1) == 1.0);
  CHECK(r.constraint()(1, 2) == 0.0);
  CHECK(g.without_edges().edges().empty());
}

TEST_CASE("relation names round trip") {
  for (auto r : {Relation::kLeftOf, Relation::kRightOf, Relation::kAbove, Relation::kBelow, Relation::kAdjacentTo,
                 Relation::kInside, Relation::kDisjointFrom}) {
    CHECK(relation_from_string(to_string(r)) == r);
  }
}

TEST_CASE("registration pairs landmarks by name") {
  std::vector<NamedLandmark> atlas{{"a", {1, 2}}, {"b", {11, 2}}, {"c", {1, 12}}, {"unused", {0, 0}}};
  const KnowledgeGraph g({{1, "x", {}}}, {}, atlas);
  const std::vector<NamedLandmark> image{{"c", {0, 10}}, {"a", {0, 0}}, {"b", {10, 0}}, {"extra", {5, 5}}};
  const AffineFit fit = register_to_atlas(g, image);
  CHECK(fit.transform.offset[0] == doctest::Approx(1.0));
  CHECK(fit.transform.offset[1] == doctest::Approx(2.0));
  CHECK_THROWS_AS(register_to_atlas(g, {{"a", {0, 0}}, {"b", {1, 0}}}), DegenerateError);
}
