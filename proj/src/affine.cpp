#include "kgcrf/affine.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "kgcrf/errors.hpp"

namespace kgcrf {

AffineTransform AffineTransform::inverse() const {
  const double det = determinant();
  if (det == 0.0 || !std::isfinite(det)) throw DegenerateError("affine transform is not invertible");
  AffineTransform inv;
  inv.linear = {linear[3] / det, -linear[1] / det, -linear[2] / det, linear[0] / det};
  inv.offset = {-(inv.linear[0] * offset[0] + inv.linear[1] * offset[1]),
                -(inv.linear[2] * offset[0] + inv.linear[3] * offset[1])};
  return inv;
}

AffineFit estimate_affine(std::span<const Point2> image_landmarks, std::span<const Point2> atlas_landmarks) {
  if (image_landmarks.size() != atlas_landmarks.size()) {
    throw DegenerateError("landmark lists differ in length (" + std::to_string(image_landmarks.size()) +
                          " vs " + std::to_string(atlas_landmarks.size()) + ")");
  }
  const auto n = static_cast<Eigen::Index>(image_landmarks.size());
  if (n < 3) throw DegenerateError("affine estimation needs at least 3 landmark pairs");

  Eigen::Vector2d img_mean = Eigen::Vector2d::Zero();
  Eigen::Vector2d atl_mean = Eigen::Vector2d::Zero();
  for (Eigen::Index k = 0; k < n; ++k) {
    img_mean += Eigen::Vector2d(image_landmarks[k].x, image_landmarks[k].y);
    atl_mean += Eigen::Vector2d(atlas_landmarks[k].x, atlas_landmarks[k].y);
  }
  img_mean /= static_cast<double>(n);
  atl_mean /= static_cast<double>(n);

  // Centering decouples the offset and conditions the 2-column system.
  Eigen::MatrixX2d src(n, 2);
  Eigen::MatrixX2d dst(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) {
    src.row(k) = Eigen::Vector2d(image_landmarks[k].x, image_landmarks[k].y) - img_mean;
    dst.row(k) = Eigen::Vector2d(atlas_landmarks[k].x, atlas_landmarks[k].y) - atl_mean;
  }

  const Eigen::JacobiSVD<Eigen::MatrixX2d> svd(src);
  const auto sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-10 * sv(0)) {
    throw DegenerateError("image landmarks are collinear");
  }

  // Solves src * L^T = dst in the least-squares sense.
  const Eigen::Matrix2d lin_t = src.colPivHouseholderQr().solve(dst);
  const Eigen::Matrix2d lin = lin_t.transpose();
  const Eigen::Vector2d off = atl_mean - lin * img_mean;

  AffineFit fit;
  fit.transform.linear = {lin(0, 0), lin(0, 1), lin(1, 0), lin(1, 1)};
  fit.transform.offset = {off(0), off(1)};

  double sq = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Point2 mapped = fit.transform.apply(image_landmarks[k]);
    const double err = std::hypot(mapped.x - atlas_landmarks[k].x, mapped.y - atlas_landmarks[k].y);
    sq += err * err;
    fit.max_residual = std::max(fit.max_residual, err);
  }
  fit.rms_residual = std::sqrt(sq / static_cast<double>(n));
  return fit;
}

}  // namespace kgcrf
