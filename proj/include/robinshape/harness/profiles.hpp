#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "robinshape/error.hpp"
#include "robinshape/geometry.hpp"

namespace robinshape::harness {

/// One additive feature of an analytic 1-D profile.
///   bump:    amplitude * exp(1 - 1 / (1 - r^2)) for |r| < 1, r = (x - center) / width
///   plateau: amplitude * (tanh((x - a) / edge) - tanh((x - b) / edge)) / 2, [a, b] = center -+ width
///   cosine:  amplitude * cos(2 pi frequency x / L + phase)
///   noise:   band-limited random Fourier series over k_min..k_max with rms `amplitude`
struct ProfileTerm {
  std::string kind;
  double amplitude = 0.0;
  double center = 0.0;
  double width = 0.0;
  double edge = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
  int k_min = 0;
  int k_max = 0;
  std::uint64_t seed = 0;

  bool operator==(const ProfileTerm&) const = default;
};

struct ProfileSpec {
  double base = 0.0;
  std::vector<ProfileTerm> terms;

  bool operator==(const ProfileSpec&) const = default;
};

/// A sum of analytic terms with exact derivative.
class AnalyticProfile {
 public:
  AnalyticProfile() = default;

  AnalyticProfile(ProfileSpec spec, double L) : spec_(std::move(spec)), L_(L) {
    if (!(L > 0.0)) throw InvalidArgument("profile length must be positive");
    for (const ProfileTerm& t : spec_.terms) {
      if (t.kind == "bump") {
        if (!(t.width > 0.0)) throw InvalidArgument("bump width must be positive");
      } else if (t.kind == "plateau") {
        if (!(t.width > 0.0) || !(t.edge > 0.0)) throw InvalidArgument("plateau width and edge must be positive");
      } else if (t.kind == "cosine") {
      } else if (t.kind == "noise") {
        if (t.k_min < 1 || t.k_max < t.k_min) throw InvalidArgument("noise band must satisfy 1 <= k_min <= k_max");
      } else {
        throw InvalidArgument("unknown profile term kind '" + t.kind + "'");
      }
    }
    for (const ProfileTerm& t : spec_.terms) {
      if (t.kind != "noise") continue;
      // Independent N(0,1) coefficients, scaled so the series has rms amplitude.
      std::mt19937_64 rng(t.seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      Noise n;
      n.k_min = t.k_min;
      const int count = t.k_max - t.k_min + 1;
      n.a.resize(count);
      n.b.resize(count);
      for (int i = 0; i < count; ++i) {
        n.a[i] = normal(rng);
        n.b[i] = normal(rng);
      }
      const double rms = std::sqrt(0.5 * (n.a.squaredNorm() + n.b.squaredNorm()));
      n.a *= t.amplitude / rms;
      n.b *= t.amplitude / rms;
      noise_.push_back(std::move(n));
    }
  }

  [[nodiscard]] const ProfileSpec& spec() const { return spec_; }
  [[nodiscard]] double length() const { return L_; }

  [[nodiscard]] HeightSample eval(double x) const {
    HeightSample out{spec_.base, 0.0};
    std::size_t noise_index = 0;
    const double two_pi_L = 2.0 * std::numbers::pi / L_;
    for (const ProfileTerm& t : spec_.terms) {
      if (t.kind == "bump") {
        const double r = (x - t.center) / t.width;
        if (std::abs(r) < 1.0) {
          const double q = 1.0 - r * r;
          const double v = t.amplitude * std::exp(1.0 - 1.0 / q);
          out.f += v;
          out.df += v * (-2.0 * r / (q * q)) / t.width;
        }
      } else if (t.kind == "plateau") {
        const double ta = std::tanh((x - (t.center - t.width)) / t.edge);
        const double tb = std::tanh((x - (t.center + t.width)) / t.edge);
        out.f += 0.5 * t.amplitude * (ta - tb);
        out.df += 0.5 * t.amplitude * ((1.0 - ta * ta) - (1.0 - tb * tb)) / t.edge;
      } else if (t.kind == "cosine") {
        const double w = two_pi_L * t.frequency;
        out.f += t.amplitude * std::cos(w * x + t.phase);
        out.df -= t.amplitude * w * std::sin(w * x + t.phase);
      } else {
        const Noise& n = noise_[noise_index++];
        for (Eigen::Index i = 0; i < n.a.size(); ++i) {
          const double w = two_pi_L * static_cast<double>(n.k_min + i);
          out.f += n.a[i] * std::cos(w * x) + n.b[i] * std::sin(w * x);
          out.df += w * (-n.a[i] * std::sin(w * x) + n.b[i] * std::cos(w * x));
        }
      }
    }
    return out;
  }

  [[nodiscard]] double operator()(double x) const { return eval(x).f; }

 private:
  struct Noise {
    int k_min = 1;
    Eigen::VectorXd a, b;
  };
  ProfileSpec spec_;
  double L_ = 1.0;
  std::vector<Noise> noise_;
};

/// Boundary height profile usable by the forward solver.
class TruthShape {
 public:
  TruthShape(AnalyticProfile f, double H) : f_(std::move(f)), H_(H) {}
  [[nodiscard]] HeightSample eval(double x) const { return f_.eval(x); }
  [[nodiscard]] double length() const { return f_.length(); }
  [[nodiscard]] double height() const { return H_; }
  [[nodiscard]] const AnalyticProfile& profile() const { return f_; }

  [[nodiscard]] double sampled_min(int n = 4096) const {
    double lo = eval(0.0).f;
    for (int k = 1; k <= n; ++k) lo = std::min(lo, eval(length() * k / n).f);
    return lo;
  }
  void require_valid() const {
    if (!(sampled_min() > 0.0)) throw InvalidShape("truth boundary profile is not strictly positive");
  }

 private:
  AnalyticProfile f_;
  double H_;
};

struct TruthSpec {
  std::string name = "example1";
  ProfileSpec boundary;  // f(x1)
  ProfileSpec robin;     // beta(s)

  bool operator==(const TruthSpec&) const = default;
};

/// Named default truths. Boundary profiles are relative heights f with f = 1
/// for the uncorroded slab.
inline TruthSpec default_truth(const std::string& name) {
  TruthSpec t;
  t.name = name;
  t.boundary.base = 1.0;
  if (name == "example1") {
    t.boundary.terms = {{.kind = "bump", .amplitude = -0.25, .center = 0.5, .width = 0.3}};
    t.robin.base = 1.5;
    t.robin.terms = {{.kind = "cosine", .amplitude = 0.5, .frequency = 1.0, .phase = 0.0},
                     {.kind = "bump", .amplitude = 0.6, .center = 0.35, .width = 0.25}};
  } else if (name == "example2") {
    t.boundary.terms = {{.kind = "bump", .amplitude = -0.2, .center = 0.3, .width = 0.3},
                        {.kind = "bump", .amplitude = 0.12, .center = 0.8, .width = 0.15},
                        {.kind = "noise", .amplitude = 0.004, .k_min = 16, .k_max = 48, .seed = 2}};
    t.robin.base = 1.0;
    t.robin.terms = {{.kind = "cosine", .amplitude = 0.6, .frequency = 1.0, .phase = 1.0},
                     {.kind = "noise", .amplitude = 0.1, .k_min = 16, .k_max = 48, .seed = 3}};
  } else if (name == "example3") {
    t.boundary.terms = {{.kind = "plateau", .amplitude = -0.5, .center = 0.2, .width = 0.05, .edge = 0.003},
                        {.kind = "plateau", .amplitude = -0.5, .center = 0.5, .width = 0.05, .edge = 0.003},
                        {.kind = "plateau", .amplitude = -0.5, .center = 0.8, .width = 0.05, .edge = 0.003}};
    t.robin.base = 1.0;
    t.robin.terms = {{.kind = "plateau", .amplitude = 1.2, .center = 0.35, .width = 0.1, .edge = 0.02},
                     {.kind = "plateau", .amplitude = -0.8, .center = 0.75, .width = 0.08, .edge = 0.02}};
  } else if (name == "custom") {
    t.robin.base = 0.0;
  } else {
    throw InvalidArgument("unknown truth profile '" + name + "'");
  }
  return t;
}

struct TruthProfiles {
  AnalyticProfile boundary;
  AnalyticProfile robin;
};

inline TruthProfiles truth_profiles(const TruthSpec& spec, double L) {
  if (spec.name != "example1" && spec.name != "example2" && spec.name != "example3" && spec.name != "custom") {
    throw InvalidArgument("unknown truth profile '" + spec.name + "'");
  }
  return {AnalyticProfile(spec.boundary, L), AnalyticProfile(spec.robin, L)};
}

inline TruthProfiles truth_profiles(const std::string& name, double L = 1.0) {
  return truth_profiles(default_truth(name), L);
}

/// L2 projection of a profile onto the Fourier basis of size 2p + 1 in the
/// parameterization f = 1 + sum alpha_i phi_i (composite midpoint rule).
inline Eigen::VectorXd fourier_projection(const AnalyticProfile& f, int p, double L, int samples = 20000) {
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(2 * p + 1);
  const double h = L / samples;
  for (int k = 0; k < samples; ++k) {
    const double x = (k + 0.5) * h;
    const double v = f(x) - 1.0;
    alpha[0] += v * h / L;
    for (int n = 1; n <= p; ++n) {
      const double w = 2.0 * std::numbers::pi * n * x / L;
      alpha[2 * n - 1] += 2.0 * v * std::sin(w) * h / L;
      alpha[2 * n] += 2.0 * v * std::cos(w) * h / L;
    }
  }
  return alpha;
}

}  // namespace robinshape::harness
