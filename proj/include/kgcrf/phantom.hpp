#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kgcrf/affine.hpp"
#include "kgcrf/graph.hpp"
#include "kgcrf/grid.hpp"

namespace kgcrf::phantom {

enum class Template { kTwoOrganLR, kThreeOrganNested, kFiveOrganAbdomen };

// Throws ConfigError("template") for unknown names.
Template template_from_string(std::string_view name);
std::string_view to_string(Template t);

inline constexpr std::size_t kMinSize = 32;
inline constexpr double kCleanConfidence = 0.9;

struct PhantomScene {
  Template kind;
  LabelMap truth;
  ProbMap clean_prob;
  FeatureMap features;
  KnowledgeGraph graph;                 // atlas landmarks are the image landmarks shifted by a fixed offset
  std::vector<NamedLandmark> landmarks;  // image-space landmarks
};

// Deterministic per (template, h, w, seed). Requires h, w >= kMinSize.
//
//   two_organ_lr        K = 3: organ 1 left_of organ 2.
//   three_organ_nested  K = 4: organ 3 inside 2, organ 2 inside 1.
//   five_organ_abdomen  K = 6: liver (1), spleen (2), stomach (3) on top,
//                       two kidneys (4, 5) below, linked by left_of,
//                       right_of, below and disjoint_from edges.
//
// Every edge has weight 1 and margin 2; the truth satisfies each of them.
PhantomScene generate_scene(Template kind, std::size_t h, std::size_t w, std::uint64_t seed);

// Image-to-atlas transform fitted from the scene's landmarks.
AffineTransform scene_transform(const PhantomScene& scene);

enum class CorruptionKind { kBoundaryBlur, kFragmentSwap, kLogitNoise };

CorruptionKind corruption_from_string(std::string_view name);
std::string_view to_string(CorruptionKind k);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kFragmentSwap;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
};

// boundary_blur: Gaussian blur of every channel with sigma = magnitude pixels.
// fragment_swap: a compact blob holding `magnitude` of an edge source's area
//   swaps probability vectors with a background patch where the opposite
//   relation holds (e.g. right of the target for left_of). The edge is
//   picked by seed among the graph's edges; when its blob fits nowhere the
//   following edges are tried in order.
// logit_noise: one perturb_logits draw with noise_scale = magnitude.
// Magnitude 0 returns the input unchanged. Throws DegenerateError when the
// blob would be empty, would consume the whole organ, or no edge admits a
// relocation.
ProbMap corrupt(const PhantomScene& scene, const CorruptionSpec& spec);
ProbMap corrupt(const PhantomScene& scene, const ProbMap& base, const CorruptionSpec& spec);

// 2|A n B| / (|A| + |B|); 1 when both regions are empty.
double dice(const LabelMap& a, const LabelMap& b, int label);
// Mean Dice over labels 1..K-1.
double mean_foreground_dice(const LabelMap& pred, const LabelMap& truth);

}  // namespace kgcrf::phantom
