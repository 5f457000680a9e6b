#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mpopf/network.hpp"

namespace mpopf {

/// Minimizer of a1/2 p^2 + b1 p + a2/2 q^2 + b2 q over an injection region.
struct InjectionPoint {
  double p = 0.0;
  double q = 0.0;
};

/// Which branch of the disk solution fired.
enum class DiskCase { boundary_p_zero = 1, interior = 2, on_circle = 3 };

inline double clamp_to(double x, double lo, double hi) { return std::min(hi, std::max(lo, x)); }

inline InjectionPoint project_injection_box(double a1, double b1, double a2, double b2, const BoxRegion& box) {
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw std::invalid_argument("project_injection_box: curvature must be positive");
  if (!(box.p_lo <= box.p_hi) || !(box.q_lo <= box.q_hi))
    throw std::invalid_argument("project_injection_box: bounds out of order");
  return {clamp_to(-b1 / a1, box.p_lo, box.p_hi), clamp_to(-b2 / a2, box.q_lo, box.q_hi)};
}

/// g(lambda) = b1^2/(a1+2 lambda)^2 + b2^2/(a2+2 lambda)^2 - c^2; the circle
/// condition p^2 + q^2 = c^2 written in the multiplier of the disk constraint.
inline double disk_multiplier_residual(double a1, double b1, double a2, double b2, double c, double lambda) {
  const double d1 = a1 + 2.0 * lambda;
  const double d2 = a2 + 2.0 * lambda;
  return b1 * b1 / (d1 * d1) + b2 * b2 / (d2 * d2) - c * c;
}

/// Unique positive root of g. For lambda >= 0, g is strictly decreasing and
/// convex, so Newton from the left end of the bracket never overshoots;
/// bisection guards against round-off.
inline double solve_disk_multiplier(double a1, double b1, double a2, double b2, double c) {
  if (!(a1 > 0.0) || !(a2 > 0.0) || !(c > 0.0))
    throw std::invalid_argument("solve_disk_multiplier: a1, a2 and c must be positive");
  auto g = [&](double l) { return disk_multiplier_residual(a1, b1, a2, b2, c, l); };
  auto dg = [&](double l) {
    const double d1 = a1 + 2.0 * l, d2 = a2 + 2.0 * l;
    return -4.0 * b1 * b1 / (d1 * d1 * d1) - 4.0 * b2 * b2 / (d2 * d2 * d2);
  };
  double lo = 0.0;
  if (!(g(lo) > 0.0)) throw std::domain_error("solve_disk_multiplier: unconstrained minimizer is inside the disk");
  // At hi, min(a1, a2) + 2 hi = |b| / c, hence g(hi) <= 0.
  double hi = std::max(0.0, (std::hypot(b1, b2) / c - std::min(a1, a2)) / 2.0);
  while (g(hi) > 0.0) hi = 2.0 * hi + 1.0;

  double x = lo;
  for (int it = 0; it < 200; ++it) {
    const double gx = g(x);
    if (gx == 0.0) return x;
    if (gx > 0.0) lo = x; else hi = x;
    double next = x - gx / dg(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-16 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  if (!(std::abs(g(x)) <= 1e-10)) throw std::runtime_error("solve_disk_multiplier: failed to bracket the root");
  return x;
}

inline DiskCase classify_disk_case(double a1, double b1, double a2, double b2, double c) {
  if (b1 >= 0.0) return DiskCase::boundary_p_zero;
  const double p = b1 / a1, q = b2 / a2;
  return p * p + q * q <= c * c ? DiskCase::interior : DiskCase::on_circle;
}

// Pulls a point that rounding left just outside |s| <= c back onto the disk.
inline InjectionPoint onto_disk(InjectionPoint x, double c) {
  x.p = std::max(x.p, 0.0);
  for (double r = std::hypot(x.p, x.q); r > c; r = std::hypot(x.p, x.q)) {
    const double k = std::nextafter(c / r, 0.0);
    x.p *= k;
    x.q *= k;
  }
  return x;
}

/// Minimizer over {p >= 0, p^2 + q^2 <= c^2}.
inline InjectionPoint project_injection_disk(double a1, double b1, double a2, double b2, double c) {
  if (!(a1 > 0.0) || !(a2 > 0.0)) throw std::invalid_argument("project_injection_disk: curvature must be positive");
  if (!(c > 0.0)) throw std::invalid_argument("project_injection_disk: radius must be positive");
  switch (classify_disk_case(a1, b1, a2, b2, c)) {
    case DiskCase::boundary_p_zero:
      return {0.0, clamp_to(-b2 / a2, -c, c)};
    case DiskCase::interior:
      return onto_disk({-b1 / a1, -b2 / a2}, c);
    case DiskCase::on_circle: {
      const double lambda = solve_disk_multiplier(a1, b1, a2, b2, c);
      return onto_disk({-b1 / (a1 + 2.0 * lambda), -b2 / (a2 + 2.0 * lambda)}, c);
    }
  }
  return {};
}

/// Per-phase injection step of the x-update:
/// argmin over s in region of f(Re s) + rho/2 |s - s_hat|^2.
inline complex solve_injection(const InjectionRegion& region, const ObjectiveCoeffs& cost, complex s_hat, double rho) {
  const double a1 = cost.alpha + rho;
  const double b1 = cost.beta - rho * s_hat.real();
  const double a2 = rho;
  const double b2 = -rho * s_hat.imag();
  InjectionPoint pt;
  if (const auto* box = std::get_if<BoxRegion>(&region)) {
    pt = project_injection_box(a1, b1, a2, b2, *box);
  } else {
    const double c = std::get<DiskRegion>(region).s_max;
    // A zero-radius inverter pins the injection at the origin.
    pt = c > 0.0 ? project_injection_disk(a1, b1, a2, b2, c) : InjectionPoint{};
  }
  return {pt.p, pt.q};
}

}  // namespace mpopf
