#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fracfb/special.hpp"

namespace fracfb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/*
 * Piecewise-constant vector function on consecutive cells:
 *
 *   value(tau) = values[j]   for tau in [bounds[j], bounds[j+1])
 *
 * bounds has size K+1 (strictly increasing), values has size K. A StepFn
 * with K = 0 is the empty function on the degenerate interval {bounds[0]}.
 * Histories, control records and solver outputs all share this layout, so
 * restriction and concatenation are exact (no resampling).
 */
struct StepFn {
  std::vector<double> bounds;
  std::vector<Vec> values;

  StepFn() : bounds{0.0} {}
  StepFn(std::vector<double> b, std::vector<Vec> v)
      : bounds(std::move(b)), values(std::move(v)) {
    validate();
  }

  static StepFn uniform(double lo, double step, std::vector<Vec> v) {
    std::vector<double> b(v.size() + 1);
    for (std::size_t j = 0; j < b.size(); ++j) b[j] = lo + step * double(j);
    return StepFn(std::move(b), std::move(v));
  }

  void validate() const {
    if (bounds.empty() || bounds.size() != values.size() + 1)
      throw std::invalid_argument("StepFn: bounds must have one more entry than values");
    for (std::size_t j = 0; j + 1 < bounds.size(); ++j)
      if (!(bounds[j] < bounds[j + 1]))
        throw std::invalid_argument("StepFn: bounds must be strictly increasing");
    for (std::size_t j = 1; j < values.size(); ++j)
      if (values[j].size() != values[0].size())
        throw std::invalid_argument("StepFn: mixed value dimensions");
  }

  std::size_t cells() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double lo() const { return bounds.front(); }
  double hi() const { return bounds.back(); }
  Eigen::Index dim() const { return values.empty() ? 0 : values[0].size(); }

  // Index of the cell containing tau; tau == hi() maps to the last cell.
  std::size_t cell_index(double tau) const {
    if (empty() || tau < lo() || tau > hi())
      throw std::out_of_range("StepFn: argument outside support");
    auto it = std::upper_bound(bounds.begin(), bounds.end(), tau);
    std::size_t j = std::size_t(it - bounds.begin());
    if (j == 0) j = 1;
    if (j > cells()) j = cells();
    return j - 1;
  }

  const Vec& value_at(double tau) const { return values[cell_index(tau)]; }

  void append_cell(double new_hi, Vec v) {
    if (!(new_hi > hi())) throw std::invalid_argument("StepFn: cell must extend the support");
    if (!values.empty() && v.size() != dim())
      throw std::invalid_argument("StepFn: cell dimension mismatch");
    bounds.push_back(new_hi);
    values.push_back(std::move(v));
  }

  // Restriction to [lo(), tau]; tau must be positive distance from lo().
  StepFn restrict_to(double tau) const {
    if (!(tau > lo()) || tau > hi() + 1e-12 * (1.0 + std::fabs(hi())))
      throw std::out_of_range("StepFn: restriction point outside support");
    tau = std::min(tau, hi());
    StepFn out;
    out.bounds.assign(1, lo());
    for (std::size_t j = 0; j < cells(); ++j) {
      if (bounds[j + 1] < tau) {
        out.bounds.push_back(bounds[j + 1]);
        out.values.push_back(values[j]);
      } else {
        out.bounds.push_back(tau);
        out.values.push_back(values[j]);
        break;
      }
    }
    return out;
  }
};

/*
 * Exact cell moments of the weakly singular kernels. For s >= b > a:
 *
 *   int_a^b (s - xi)^{alpha-1} dxi = ((s-a)^alpha - (s-b)^alpha) / alpha
 *   int_a^b (s - xi)^{alpha-2} dxi = ((s-b)^{alpha-1} - (s-a)^{alpha-1}) / (1-alpha)
 *
 * The first is finite at s == b; the second requires s > b.
 */
inline double weak_moment(double s, double a, double b, double alpha) {
  return (std::pow(s - a, alpha) - std::pow(s - b, alpha)) / alpha;
}

inline double hyper_moment(double s, double a, double b, double alpha) {
  return (std::pow(s - b, alpha - 1.0) - std::pow(s - a, alpha - 1.0)) / (1.0 - alpha);
}

// Riemann-Liouville integral of a piecewise-constant integrand:
//   (1/Gamma(alpha)) int_{lo}^{min(tau, hi)} f(xi) (tau - xi)^{alpha-1} dxi.
// Zero vector for tau <= lo. tau may exceed the support (kernel stays regular).
inline Vec rl_integral(const StepFn& f, double alpha, double tau) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::domain_error("rl_integral: alpha must lie in (0,1)");
  Vec acc = Vec::Zero(f.dim());
  if (f.empty() || tau <= f.lo()) return acc;
  const double top = std::min(tau, f.hi());
  for (std::size_t j = 0; j < f.cells(); ++j) {
    const double a = f.bounds[j];
    if (a >= top) break;
    const double b = std::min(f.bounds[j + 1], top);
    acc += f.values[j] * weak_moment(tau, a, b, alpha);
  }
  return acc / gamma_fn(alpha);
}

}  // namespace fracfb
