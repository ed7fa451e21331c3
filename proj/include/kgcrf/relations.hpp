#pragma once

#include "kgcrf/affine.hpp"
#include "kgcrf/graph.hpp"
#include "kgcrf/grid.hpp"

namespace kgcrf {

// Summary of one organ's current marginal, in atlas coordinates.
//
// Support weights are gated as clamp(2q - 1, 0, 1) so that the diffuse
// low-probability tail of a softmax map does not stretch the extents. The
// extents are weighted quantiles of the gated mass at kExtentQuantile from
// either end.
struct RegionSummary {
  static constexpr double kMinMass = 1e-6;
  static constexpr double kExtentQuantile = 0.01;

  double mass = 0.0;        // raw soft mass sum_i q_i(label)
  double gated_mass = 0.0;
  Point2 centroid;          // gated-mass centroid
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
};

// Throws EmptyConditioningError when the organ has no usable mass.
RegionSummary summarize_region(const ProbMap& q, int label, const AffineTransform& transform);

// Soft indicator of where `edge.source` is expected to lie given the
// current marginal of `edge.target`. Values in [0, 1] on the image lattice.
//
//   left_of / right_of / above / below: half-plane beyond the target's soft
//     extent plus margin, with a 1-pixel linear ramp at the boundary.
//   adjacent_to: 1 within distance m of the target support (q >= 0.5),
//     decaying linearly to 0 at 2m (at 1 pixel when m = 0).
//   disjoint_from: ramp(d - m), d = distance to the target support.
//   inside: ramp(d_in - m) over the hole-filled target support, d_in the
//     distance to its complement (the image frame counts as outside).
//
// Predicates are evaluated at T(p) for each pixel p, with distances measured
// through the linear part of T.
RealGrid rasterize_relation(const AnatomyEdge& edge, const ProbMap& conditioning, const AffineTransform& transform);

// Looks up edge (o1, o2) in the graph; throws SchemaError when absent.
RealGrid rasterize_expected_region(const KnowledgeGraph& graph, int o1, int o2, const ProbMap& conditioning,
                                   const AffineTransform& transform);

// Hard check on a label map: every pixel of the edge's source organ lies
// where the rasterized field (conditioned on the one-hot labeling) is 1.
bool relation_holds(const LabelMap& labels, const AnatomyEdge& edge, const AffineTransform& transform);

}  // namespace kgcrf
