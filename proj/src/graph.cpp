#include "kgcrf/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <set>

#include "kgcrf/errors.hpp"

namespace kgcrf {
namespace {

constexpr std::array<std::pair<Relation, std::string_view>, 7> kRelationNames{{
    {Relation::kLeftOf, "left_of"},
    {Relation::kRightOf, "right_of"},
    {Relation::kAbove, "above"},
    {Relation::kBelow, "below"},
    {Relation::kAdjacentTo, "adjacent_to"},
    {Relation::kInside, "inside"},
    {Relation::kDisjointFrom, "disjoint_from"},
}};

std::string cell_name(std::size_t r, std::size_t c) {
  return "constraint[" + std::to_string(r) + "][" + std::to_string(c) + "]";
}

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw SchemaError(where + " is missing '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(where + " has an invalid '" + key + "'");
  }
}

}  // namespace

std::string_view to_string(Relation r) {
  for (const auto& [rel, name] : kRelationNames) {
    if (rel == r) return name;
  }
  return "unknown";
}

Relation relation_from_string(std::string_view name) {
  for (const auto& [rel, n] : kRelationNames) {
    if (n == name) return rel;
  }
  throw SchemaError("unknown relation '" + std::string(name) + "'");
}

ConstraintMatrix ConstraintMatrix::resized(std::size_t k) const {
  Matrix out = Matrix::square(k);
  for (std::size_t r = 0; r < size(); ++r) {
    for (std::size_t c = 0; c < size(); ++c) {
      if (r < k && c < k) {
        out(r, c) = entries_(r, c);
      } else if (entries_(r, c) != 0.0) {
        throw ShapeError("constraint matrix references label " + std::to_string(std::max(r, c)) +
                         " outside " + std::to_string(k) + " labels");
      }
    }
  }
  return ConstraintMatrix(std::move(out));
}

KnowledgeGraph::KnowledgeGraph(std::vector<AnatomyNode> nodes, std::vector<AnatomyEdge> edges,
                               std::vector<NamedLandmark> atlas_landmarks, std::optional<Matrix> constraint)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), atlas_landmarks_(std::move(atlas_landmarks)) {
  std::set<int> ids;
  int max_id = 0;
  for (const auto& n : nodes_) {
    if (n.id < 1) throw SchemaError("node '" + n.name + "' has id " + std::to_string(n.id) + " (must be >= 1)");
    if (!ids.insert(n.id).second) throw SchemaError("duplicate node id " + std::to_string(n.id));
    max_id = std::max(max_id, n.id);
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& e : edges_) {
    const std::string where = "edge (" + std::to_string(e.source) + ", " + std::to_string(e.target) + ")";
    if (!ids.contains(e.source) || !ids.contains(e.target)) {
      throw SchemaError(where + " references a node that does not exist");
    }
    if (e.source == e.target) throw SchemaError(where + " is a self-loop");
    if (!std::isfinite(e.weight) || e.weight < 0.0) throw SchemaError(where + " has a negative weight");
    if (!std::isfinite(e.margin) || e.margin < 0.0) throw SchemaError(where + " has a negative margin");
    if (!pairs.insert({e.source, e.target}).second) throw SchemaError("duplicate " + where);
  }

  const std::size_t n = static_cast<std::size_t>(max_id) + 1;
  if (!constraint) {
    Matrix a = Matrix::square(n);
    for (const auto& e : edges_) a(static_cast<std::size_t>(e.source), static_cast<std::size_t>(e.target)) = 1.0;
    constraint_ = ConstraintMatrix(std::move(a));
    return;
  }

  const Matrix& a = *constraint;
  if (a.rows != a.cols || a.rows < n) {
    throw SchemaError("constraint matrix must be square with at least " + std::to_string(n) + " rows");
  }
  for (std::size_t r = 0; r < a.rows; ++r) {
    for (std::size_t c = 0; c < a.cols; ++c) {
      const double v = a(r, c);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw SchemaError(cell_name(r, c) + " outside [0, 1]");
      const bool edge = pairs.contains({static_cast<int>(r), static_cast<int>(c)});
      if (edge != (v != 0.0)) {
        throw SchemaError(cell_name(r, c) + (edge ? " is zero but an edge exists" : " is nonzero without an edge"));
      }
    }
  }
  constraint_ = ConstraintMatrix(a);
}

const AnatomyNode* KnowledgeGraph::find_node(int id) const {
  auto it = std::find_if(nodes_.begin(), nodes_.end(), [id](const AnatomyNode& n) { return n.id == id; });
  return it == nodes_.end() ? nullptr : &*it;
}

const AnatomyEdge* KnowledgeGraph::find_edge(int source, int target) const {
  auto it = std::find_if(edges_.begin(), edges_.end(),
                         [&](const AnatomyEdge& e) { return e.source == source && e.target == target; });
  return it == edges_.end() ? nullptr : &*it;
}

KnowledgeGraph KnowledgeGraph::relabeled(const std::vector<int>& perm) const {
  auto map = [&](int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= perm.size()) {
      throw ShapeError("permutation does not cover label " + std::to_string(id));
    }
    return perm[static_cast<std::size_t>(id)];
  };
  auto nodes = nodes_;
  for (auto& n : nodes) n.id = map(n.id);
  auto edges = edges_;
  for (auto& e : edges) {
    e.source = map(e.source);
    e.target = map(e.target);
  }
  std::size_t k = perm.size();
  Matrix a = Matrix::square(std::max(k, constraint_.size()));
  for (std::size_t r = 0; r < constraint_.size(); ++r) {
    for (std::size_t c = 0; c < constraint_.size(); ++c) {
      if (constraint_(r, c) != 0.0) {
        a(static_cast<std::size_t>(map(static_cast<int>(r))), static_cast<std::size_t>(map(static_cast<int>(c)))) =
            constraint_(r, c);
      }
    }
  }
  return KnowledgeGraph(std::move(nodes), std::move(edges), atlas_landmarks_, std::move(a));
}

KnowledgeGraph KnowledgeGraph::without_edges() const {
  return KnowledgeGraph(nodes_, {}, atlas_landmarks_);
}

KnowledgeGraph graph_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("graph document must be a JSON object");
  std::vector<AnatomyNode> nodes;
  if (doc.contains("nodes")) {
    for (const auto& jn : doc.at("nodes")) {
      AnatomyNode n;
      n.id = required<int>(jn, "id", "node");
      n.name = jn.value("name", std::string{});
      if (jn.contains("features")) n.features = required<std::vector<double>>(jn, "features", "node");
      nodes.push_back(std::move(n));
    }
  }
  std::vector<AnatomyEdge> edges;
  if (doc.contains("edges")) {
    for (const auto& je : doc.at("edges")) {
      AnatomyEdge e;
      e.source = required<int>(je, "source", "edge");
      e.target = required<int>(je, "target", "edge");
      e.relation = relation_from_string(required<std::string>(je, "relation", "edge"));
      e.weight = je.contains("weight") ? required<double>(je, "weight", "edge") : 1.0;
      e.margin = je.contains("margin") ? required<double>(je, "margin", "edge") : 0.0;
      edges.push_back(e);
    }
  }
  std::vector<NamedLandmark> landmarks;
  if (doc.contains("atlas_landmarks")) landmarks = landmarks_from_json(doc.at("atlas_landmarks"));

  std::optional<Matrix> constraint;
  if (doc.contains("constraint") && !doc.at("constraint").is_null()) {
    const auto rows = required<std::vector<std::vector<double>>>(doc, "constraint", "graph");
    Matrix a(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != a.cols) throw SchemaError("constraint matrix rows differ in length");
      for (std::size_t c = 0; c < a.cols; ++c) a(r, c) = rows[r][c];
    }
    constraint = std::move(a);
  }
  return KnowledgeGraph(std::move(nodes), std::move(edges), std::move(landmarks), std::move(constraint));
}

nlohmann::json graph_to_json(const KnowledgeGraph& graph) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& n : graph.nodes()) {
    doc["nodes"].push_back({{"id", n.id}, {"name", n.name}, {"features", n.features}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : graph.edges()) {
    doc["edges"].push_back({{"source", e.source},
                            {"target", e.target},
                            {"relation", std::string(to_string(e.relation))},
                            {"weight", e.weight},
                            {"margin", e.margin}});
  }
  doc["atlas_landmarks"] = landmarks_to_json(graph.atlas_landmarks());
  return doc;
}

KnowledgeGraph load_graph(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open graph '" + path.string() + "'");
  try {
    return graph_from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("invalid graph JSON: ") + e.what());
  }
}

std::vector<NamedLandmark> landmarks_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw SchemaError("landmarks must be a JSON array");
  std::vector<NamedLandmark> out;
  for (const auto& jl : doc) {
    out.push_back({required<std::string>(jl, "name", "landmark"),
                   {required<double>(jl, "x", "landmark"), required<double>(jl, "y", "landmark")}});
  }
  return out;
}

nlohmann::json landmarks_to_json(const std::vector<NamedLandmark>& landmarks) {
  auto out = nlohmann::json::array();
  for (const auto& l : landmarks) out.push_back({{"name", l.name}, {"x", l.position.x}, {"y", l.position.y}});
  return out;
}

AffineFit register_to_atlas(const KnowledgeGraph& graph, const std::vector<NamedLandmark>& image_landmarks) {
  std::vector<Point2> img;
  std::vector<Point2> atl;
  for (const auto& a : graph.atlas_landmarks()) {
    auto it = std::find_if(image_landmarks.begin(), image_landmarks.end(),
                           [&](const NamedLandmark& l) { return l.name == a.name; });
    if (it != image_landmarks.end()) {
      img.push_back(it->position);
      atl.push_back(a.position);
    }
  }
  return estimate_affine(img, atl);
}

}  // namespace kgcrf
