#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fracfb/grid.hpp"

namespace fracfb {

// Finite set of admissible control points in R^{n_u}.
struct ControlSet {
  std::vector<Vec> points;

  void validate() const {
    if (points.empty()) throw std::invalid_argument("ControlSet: empty");
    for (const Vec& u : points) {
      if (u.size() != points[0].size())
        throw std::invalid_argument("ControlSet: mixed dimensions");
      if (!u.allFinite()) throw std::invalid_argument("ControlSet: non-finite point");
    }
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = i + 1; j < points.size(); ++j)
        if ((points[i] - points[j]).norm() == 0.0)
          throw std::invalid_argument("ControlSet: duplicate points");
  }

  std::size_t size() const { return points.size(); }
  Eigen::Index dim() const { return points.empty() ? 0 : points[0].size(); }
};

inline ControlSet scalar_controls(std::vector<double> us) {
  ControlSet P;
  for (double u : us) {
    Vec v(1);
    v << u;
    P.points.push_back(v);
  }
  P.validate();
  return P;
}

namespace detail {

// Piece boundaries are stored as fractions of the carrier interval, so a
// time change onto [0, 1] and back is an exact identity on the stored data.
inline void validate_pieces(const std::vector<double>& frac_until) {
  if (frac_until.empty()) throw std::invalid_argument("control: no pieces");
  double prev = 0.0;
  for (double f : frac_until) {
    if (!(f > prev) || f > 1.0 + 1e-15)
      throw std::invalid_argument("control: piece boundaries must increase through (0,1]");
    prev = f;
  }
  if (std::fabs(frac_until.back() - 1.0) > 1e-12)
    throw std::invalid_argument("control: pieces must cover the whole interval");
}

inline std::size_t piece_at(const std::vector<double>& frac_until, double frac) {
  auto it = std::lower_bound(frac_until.begin(), frac_until.end(), frac);
  if (it == frac_until.end()) --it;
  return std::size_t(it - frac_until.begin());
}

}  // namespace detail

// Piecewise-constant ordinary control on [lo, hi], one ControlSet index per piece.
struct PiecewiseControl {
  double lo = 0.0, hi = 1.0;
  std::vector<double> frac_until;
  std::vector<int> idx;

  void validate(const ControlSet& P) const {
    if (!(lo < hi)) throw std::invalid_argument("PiecewiseControl: empty interval");
    detail::validate_pieces(frac_until);
    if (idx.size() != frac_until.size())
      throw std::invalid_argument("PiecewiseControl: piece/value count mismatch");
    for (int k : idx)
      if (k < 0 || std::size_t(k) >= P.size())
        throw std::invalid_argument("PiecewiseControl: index outside ControlSet");
  }

  double until_abs(std::size_t i) const { return lo + frac_until[i] * (hi - lo); }
  double frac_of(double tau) const { return (tau - lo) / (hi - lo); }
  int index_at(double tau) const {
    return idx[detail::piece_at(frac_until, frac_of(tau))];
  }

  static PiecewiseControl constant(double lo, double hi, int k) {
    PiecewiseControl u;
    u.lo = lo;
    u.hi = hi;
    u.frac_until = {1.0};
    u.idx = {k};
    return u;
  }

  static PiecewiseControl uniform(double lo, double hi, std::vector<int> ids) {
    PiecewiseControl u;
    u.lo = lo;
    u.hi = hi;
    const std::size_t m = ids.size();
    for (std::size_t i = 1; i <= m; ++i) u.frac_until.push_back(double(i) / double(m));
    u.idx = std::move(ids);
    return u;
  }
};

// Relaxed (measure-valued) control: per piece, probability weights over the
// points of a ControlSet.
struct RelaxedControl {
  double lo = 0.0, hi = 1.0;
  std::vector<double> frac_until;
  std::vector<Vec> weights;

  void validate(const ControlSet& P) const {
    if (!(lo < hi)) throw std::invalid_argument("RelaxedControl: empty interval");
    detail::validate_pieces(frac_until);
    if (weights.size() != frac_until.size())
      throw std::invalid_argument("RelaxedControl: piece/weight count mismatch");
    for (const Vec& w : weights) {
      if (std::size_t(w.size()) != P.size())
        throw std::invalid_argument("RelaxedControl: weight size != |ControlSet|");
      if (w.minCoeff() < -1e-14)
        throw std::invalid_argument("RelaxedControl: negative weight");
      if (std::fabs(w.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("RelaxedControl: weights must sum to 1");
    }
  }

  double until_abs(std::size_t i) const { return lo + frac_until[i] * (hi - lo); }
  double frac_of(double tau) const { return (tau - lo) / (hi - lo); }
  const Vec& weights_at_frac(double frac) const {
    return weights[detail::piece_at(frac_until, frac)];
  }
  const Vec& weights_at(double tau) const { return weights_at_frac(frac_of(tau)); }

  static RelaxedControl constant_dirac(double lo, double hi, std::size_t k,
                                       std::size_t set_size) {
    RelaxedControl mu;
    mu.lo = lo;
    mu.hi = hi;
    mu.frac_until = {1.0};
    Vec w = Vec::Zero(Eigen::Index(set_size));
    w[Eigen::Index(k)] = 1.0;
    mu.weights = {w};
    return mu;
  }
};

// Dirac lift of an ordinary control: each piece puts unit mass on its point.
inline RelaxedControl lift_ordinary(const PiecewiseControl& u, const ControlSet& P) {
  u.validate(P);
  RelaxedControl mu;
  mu.lo = u.lo;
  mu.hi = u.hi;
  mu.frac_until = u.frac_until;
  for (int k : u.idx) {
    Vec w = Vec::Zero(Eigen::Index(P.size()));
    w[k] = 1.0;
    mu.weights.push_back(std::move(w));
  }
  return mu;
}

// Time change onto [0, 1]: nu(theta) = mu(lo + theta (hi - lo)). The stored
// piece data is carried over unchanged, so the round trip is exact.
inline RelaxedControl time_change_pi(const RelaxedControl& mu) {
  RelaxedControl nu = mu;
  nu.lo = 0.0;
  nu.hi = 1.0;
  return nu;
}

inline RelaxedControl time_change_pi_inverse(const RelaxedControl& nu, double lo,
                                             double hi) {
  if (!(lo < hi)) throw std::invalid_argument("time_change_pi_inverse: empty interval");
  RelaxedControl mu = nu;
  mu.lo = lo;
  mu.hi = hi;
  return mu;
}

}  // namespace fracfb
