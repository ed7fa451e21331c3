#pragma once

#include <array>
#include <span>

namespace kgcrf {

struct Point2 {
  double x = 0.0;  // column
  double y = 0.0;  // row

  friend bool operator==(const Point2&, const Point2&) = default;
};

// x_atlas = linear * x_image + offset. `linear` is row-major 2x2.
struct AffineTransform {
  std::array<double, 4> linear{1.0, 0.0, 0.0, 1.0};
  std::array<double, 2> offset{0.0, 0.0};

  static AffineTransform identity() { return {}; }

  double determinant() const { return linear[0] * linear[3] - linear[1] * linear[2]; }

  Point2 apply(Point2 p) const {
    return {linear[0] * p.x + linear[1] * p.y + offset[0], linear[2] * p.x + linear[3] * p.y + offset[1]};
  }

  // Applies only the linear part (maps displacements).
  Point2 apply_linear(Point2 d) const {
    return {linear[0] * d.x + linear[1] * d.y, linear[2] * d.x + linear[3] * d.y};
  }

  bool is_identity() const {
    return linear == std::array<double, 4>{1.0, 0.0, 0.0, 1.0} && offset == std::array<double, 2>{0.0, 0.0};
  }

  // Throws DegenerateError when the linear part is singular.
  AffineTransform inverse() const;

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

struct AffineFit {
  AffineTransform transform;
  double rms_residual = 0.0;  // sqrt(mean ||T(x_img) - x_atlas||^2)
  double max_residual = 0.0;  // max_k ||T(x_img_k) - x_atlas_k||
};

// Least-squares affine mapping image landmarks onto atlas landmarks.
// Requires >= 3 pairs with non-collinear image landmarks; throws
// DegenerateError otherwise.
AffineFit estimate_affine(std::span<const Point2> image_landmarks, std::span<const Point2> atlas_landmarks);

}  // namespace kgcrf
