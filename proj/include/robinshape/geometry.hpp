#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "robinshape/error.hpp"
#include "robinshape/mesh.hpp"

namespace robinshape {

using Matrix2 = Eigen::Matrix2d;

/// Height profile value and its slope d/dx1.
struct HeightSample {
  double f = 1.0;
  double df = 0.0;
};

/// Anything that describes the dimensionless top-boundary height f(x1),
/// so that the physical top boundary is x2 = H f(x1).
template <class P>
concept HeightProfile = requires(const P& profile, double x1) {
  { profile.eval(x1) } -> std::convertible_to<HeightSample>;
  { profile.length() } -> std::convertible_to<double>;
  { profile.height() } -> std::convertible_to<double>;
};

/// Truncated Fourier series for the top boundary,
///
///   f(x1) = 1 + a_0 + sum_{n=1..p} a_{2n} cos(2 pi n x1 / L) + a_{2n-1} sin(2 pi n x1 / L).
class FourierShape {
 public:
  FourierShape() = default;

  FourierShape(Eigen::VectorXd alpha, double L, double H) : alpha_(std::move(alpha)), L_(L), H_(H) {
    if (alpha_.size() < 1 || alpha_.size() % 2 == 0) {
      throw InvalidArgument("Fourier coefficient vector must have odd length 2p+1");
    }
    if (!(L > 0.0) || !(H > 0.0)) throw InvalidArgument("slab dimensions must be positive");
  }

  static FourierShape flat(int p, double L, double H) {
    return FourierShape(Eigen::VectorXd::Zero(2 * p + 1), L, H);
  }

  [[nodiscard]] const Eigen::VectorXd& alpha() const { return alpha_; }
  [[nodiscard]] int p() const { return static_cast<int>(alpha_.size() / 2); }
  [[nodiscard]] int size() const { return static_cast<int>(alpha_.size()); }
  [[nodiscard]] double length() const { return L_; }
  [[nodiscard]] double height() const { return H_; }

  /// i-th basis function and its slope at x1.
  [[nodiscard]] HeightSample basis(int i, double x1) const {
    if (i < 0 || i >= size()) throw InvalidArgument("Fourier index out of range");
    if (i == 0) return {1.0, 0.0};
    const int n = (i + 1) / 2;
    const double w = 2.0 * std::numbers::pi * n / L_;
    if (i % 2 == 1) return {std::sin(w * x1), w * std::cos(w * x1)};
    return {std::cos(w * x1), -w * std::sin(w * x1)};
  }

  /// All basis values and slopes at x1 (output vectors of length 2p+1).
  void basis_all(double x1, Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::VectorXd> slope) const {
    value[0] = 1.0;
    slope[0] = 0.0;
    const double w1 = 2.0 * std::numbers::pi / L_;
    for (int n = 1; n <= p(); ++n) {
      const double w = w1 * n;
      const double s = std::sin(w * x1);
      const double c = std::cos(w * x1);
      value[2 * n - 1] = s;
      slope[2 * n - 1] = w * c;
      value[2 * n] = c;
      slope[2 * n] = -w * s;
    }
  }

  [[nodiscard]] HeightSample eval(double x1) const {
    HeightSample out{1.0 + alpha_[0], 0.0};
    const double w1 = 2.0 * std::numbers::pi / L_;
    for (int n = 1; n <= p(); ++n) {
      const double w = w1 * n;
      const double s = std::sin(w * x1);
      const double c = std::cos(w * x1);
      out.f += alpha_[2 * n] * c + alpha_[2 * n - 1] * s;
      out.df += w * (alpha_[2 * n - 1] * c - alpha_[2 * n] * s);
    }
    return out;
  }

  /// min f over 16(p+1) uniform samples of [0, L].
  [[nodiscard]] double sampled_min() const {
    const int n = 16 * (p() + 1);
    double lo = eval(0.0).f;
    for (int k = 1; k <= n; ++k) lo = std::min(lo, eval(L_ * k / n).f);
    return lo;
  }

  [[nodiscard]] bool is_valid() const { return sampled_min() > 0.0; }

  void require_valid() const {
    if (!is_valid()) throw InvalidShape("boundary height profile is not strictly positive");
  }

 private:
  Eigen::VectorXd alpha_ = Eigen::VectorXd::Zero(1);
  double L_ = 1.0;
  double H_ = 1.0;
};

inline HeightSample eval_f(const FourierShape& shape, double x1) { return shape.eval(x1); }

namespace detail {

inline Matrix2 pushforward_from(double f, double df, double x2_ref) {
  if (!(f > 0.0)) throw InvalidShape("push-forward needs f > 0");
  // Physical x2 = x2_ref f, so x2/f f' = x2_ref f'.
  const double off = -x2_ref * df;
  Matrix2 out;
  out << f, off, off, 1.0 / f + x2_ref * x2_ref * df * df / f;
  return out;
}

/// d/dt of the push-forward tensor along f -> f + t phi.
inline Matrix2 pushforward_derivative_from(double f, double df, double phi, double dphi, double x2_ref) {
  const double x2sq = x2_ref * x2_ref;
  const double off = -x2_ref * dphi;
  Matrix2 out;
  out << phi, off, off,
      -phi / (f * f) + x2sq * (2.0 * df * dphi / f - df * df * phi / (f * f));
  return out;
}

inline double admittance_from(double df, double H) { return std::sqrt(1.0 + df * df * H * H); }

inline double admittance_derivative_from(double df, double dphi, double H) {
  return H * H * df * dphi / admittance_from(df, H);
}

}  // namespace detail

/// Conductivity tensor of the transformed problem on the reference slab
/// for unit physical conductivity, evaluated at the pre-image of `xt`.
/// Symmetric, positive definite, unit determinant.
template <HeightProfile P>
Matrix2 pushforward_tensor(const P& profile, const Point& xt) {
  const HeightSample s = profile.eval(xt.x());
  return detail::pushforward_from(s.f, s.df, xt.y());
}

/// Arc-length factor of the physical top boundary, sqrt(1 + (H f')^2).
template <HeightProfile P>
double admittance_factor(const P& profile, double s) {
  return detail::admittance_from(profile.eval(s).df, profile.height());
}

inline Matrix2 tensor_alpha_derivative(const FourierShape& shape, const Point& xt, int i) {
  const HeightSample b = shape.basis(i, xt.x());
  const HeightSample s = shape.eval(xt.x());
  if (!(s.f > 0.0)) throw InvalidShape("push-forward needs f > 0");
  return detail::pushforward_derivative_from(s.f, s.df, b.f, b.df, xt.y());
}

inline double admittance_alpha_derivative(const FourierShape& shape, double s, int i) {
  const HeightSample b = shape.basis(i, s);
  return detail::admittance_derivative_from(shape.eval(s).df, b.df, shape.height());
}

/// Physical point of a reference point, (x1, x2) -> (x1, x2 f(x1)).
template <HeightProfile P>
Point to_physical(const P& profile, const Point& xt) {
  return {xt.x(), xt.y() * profile.eval(xt.x()).f};
}

}  // namespace robinshape
