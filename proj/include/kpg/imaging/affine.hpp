#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "kpg/core/errors.hpp"
#include "kpg/imaging/image.hpp"

namespace kpg {

// 2 x 3 affine map in pixel units: [x', y'] = A [x, y] + t.
class AffineTransform {
 public:
  AffineTransform() : m_{1, 0, 0, 0, 1, 0} {}
  explicit AffineTransform(std::array<double, 6> row_major) : m_(row_major) {}

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double dx, double dy) { return AffineTransform({1, 0, dx, 0, 1, dy}); }

  // Positive angles turn clockwise on screen (the y axis points down).
  static AffineTransform rotation_deg(double degrees, Point2 center = {}) {
    const double r = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    return about(AffineTransform({c, -s, 0, s, c, 0}), center);
  }

  static AffineTransform scaling(double factor, Point2 center = {}) {
    return about(AffineTransform({factor, 0, 0, 0, factor, 0}), center);
  }

  // Scale, then rotation about `center`, then translation.
  static AffineTransform composed(double scale, double degrees, double dx, double dy, Point2 center) {
    return translation(dx, dy).after(rotation_deg(degrees, center)).after(scaling(scale, center));
  }

  // (this o other)(p) = this(other(p)).
  AffineTransform after(const AffineTransform& o) const {
    const auto& a = m_;
    const auto& b = o.m_;
    return AffineTransform({a[0] * b[0] + a[1] * b[3], a[0] * b[1] + a[1] * b[4], a[0] * b[2] + a[1] * b[5] + a[2],
                            a[3] * b[0] + a[4] * b[3], a[3] * b[1] + a[4] * b[4], a[3] * b[2] + a[4] * b[5] + a[5]});
  }

  double determinant() const { return m_[0] * m_[4] - m_[1] * m_[3]; }
  bool invertible() const { return std::abs(determinant()) > 1e-12; }

  AffineTransform inverse() const {
    if (!invertible()) throw ParameterError("affine transform is singular");
    const double det = determinant();
    const double a = m_[4] / det, b = -m_[1] / det, c = -m_[3] / det, d = m_[0] / det;
    return AffineTransform({a, b, -(a * m_[2] + b * m_[5]), c, d, -(c * m_[2] + d * m_[5])});
  }

  Point2 apply(const Point2& p) const {
    return {m_[0] * p.x + m_[1] * p.y + m_[2], m_[3] * p.x + m_[4] * p.y + m_[5]};
  }

  const std::array<double, 6>& matrix() const { return m_; }

 private:
  static AffineTransform about(const AffineTransform& linear, Point2 center) {
    return translation(center.x, center.y).after(linear).after(translation(-center.x, -center.y));
  }

  std::array<double, 6> m_;
};

inline Point2 transform_point(const Point2& p, const AffineTransform& t) { return t.apply(p); }

}  // namespace kpg
