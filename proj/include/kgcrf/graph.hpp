#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "kgcrf/affine.hpp"
#include "kgcrf/grid.hpp"

namespace kgcrf {

enum class Relation { kLeftOf, kRightOf, kAbove, kBelow, kAdjacentTo, kInside, kDisjointFrom };

std::string_view to_string(Relation r);
// Throws SchemaError for names outside the closed enumeration.
Relation relation_from_string(std::string_view name);

struct AnatomyNode {
  int id = 0;  // label index, never 0 (background)
  std::string name;
  std::vector<double> features;
};

// Directed relation "source <relation> target" with penalty weight and slack.
struct AnatomyEdge {
  int source = 0;
  int target = 0;
  Relation relation = Relation::kAdjacentTo;
  double weight = 1.0;
  double margin = 0.0;  // pixels
};

struct NamedLandmark {
  std::string name;
  Point2 position;
};

// Target satisfaction degrees A[o1][o2] in [0, 1]; nonzero exactly where an
// edge (o1, o2) exists, zero diagonal.
class ConstraintMatrix {
 public:
  ConstraintMatrix() = default;
  explicit ConstraintMatrix(Matrix entries) : entries_(std::move(entries)) {}

  std::size_t size() const noexcept { return entries_.rows; }
  double operator()(std::size_t o1, std::size_t o2) const { return entries_(o1, o2); }
  const Matrix& entries() const noexcept { return entries_; }

  // Zero-padded (or checked-truncated) copy on K labels.
  ConstraintMatrix resized(std::size_t k) const;

  friend bool operator==(const ConstraintMatrix&, const ConstraintMatrix&) = default;

 private:
  Matrix entries_;
};

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Validates ids, endpoints and relations. When `constraint` is absent it is
  // synthesized from the edges (1 per edge); otherwise it must agree with them.
  KnowledgeGraph(std::vector<AnatomyNode> nodes, std::vector<AnatomyEdge> edges,
                 std::vector<NamedLandmark> atlas_landmarks = {},
                 std::optional<Matrix> constraint = std::nullopt);

  const std::vector<AnatomyNode>& nodes() const noexcept { return nodes_; }
  const std::vector<AnatomyEdge>& edges() const noexcept { return edges_; }
  const ConstraintMatrix& constraint() const noexcept { return constraint_; }
  const std::vector<NamedLandmark>& atlas_landmarks() const noexcept { return atlas_landmarks_; }

  const AnatomyNode* find_node(int id) const;
  const AnatomyEdge* find_edge(int source, int target) const;

  // Smallest label count that covers every node id.
  std::size_t min_labels() const noexcept { return constraint_.size(); }

  // Graph with node ids remapped through `perm` (new_id = perm[old_id]).
  KnowledgeGraph relabeled(const std::vector<int>& perm) const;
  KnowledgeGraph without_edges() const;

 private:
  std::vector<AnatomyNode> nodes_;
  std::vector<AnatomyEdge> edges_;
  std::vector<NamedLandmark> atlas_landmarks_;
  ConstraintMatrix constraint_;
};

KnowledgeGraph graph_from_json(const nlohmann::json& doc);
nlohmann::json graph_to_json(const KnowledgeGraph& graph);
KnowledgeGraph load_graph(const std::filesystem::path& path);

std::vector<NamedLandmark> landmarks_from_json(const nlohmann::json& doc);
nlohmann::json landmarks_to_json(const std::vector<NamedLandmark>& landmarks);

// Pairs image landmarks with the graph's atlas landmarks by name and fits the
// image-to-atlas affine. Throws DegenerateError when fewer than 3 names match.
AffineFit register_to_atlas(const KnowledgeGraph& graph, const std::vector<NamedLandmark>& image_landmarks);

}  // namespace kgcrf
