#pragma once

// Truncated Rayleigh flow: gradient ascent on the generalized Rayleigh
// quotient alternated with top-k hard truncation and renormalization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rifle/linalg.hpp"
#include "rifle/random.hpp"

namespace rifle {

/// Seeded standard-normal initial vector, normalized to unit length.
struct RandomInit {
  std::uint64_t seed = 0;
};

struct RifleConfig {
  std::size_t k = 1;
  std::optional<double> eta;  // nullopt selects default_step_size(B)
  int max_iter = 2000;
  double tol = 1e-10;
  std::variant<RandomInit, Vector> init = RandomInit{};
  bool record_trajectory = false;
};

struct TrajectoryPoint {
  double rho;      // Rayleigh quotient at the previous iterate
  IndexSet support;
  double change;   // 1 - |v_t^T v_{t-1}|
};

struct RifleResult {
  Vector v;
  double rho = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<TrajectoryPoint> trajectory;
  std::vector<int> stage_iterations;  // one entry per warm-start stage
};

/// Strictly decreasing truncation levels; each stage initializes the next.
class WarmStartSchedule {
 public:
  explicit WarmStartSchedule(std::vector<std::size_t> k_sequence) : k_(std::move(k_sequence)) {
    if (k_.empty()) throw Error(Errc::InvalidArgument, "warm-start schedule is empty");
    for (std::size_t i = 0; i < k_.size(); ++i) {
      if (k_[i] == 0) throw Error(Errc::InvalidArgument, "warm-start cardinality must be positive");
      if (i > 0 && k_[i] >= k_[i - 1])
        throw Error(Errc::InvalidArgument, "warm-start schedule must be strictly decreasing");
    }
  }

  const std::vector<std::size_t>& k_sequence() const { return k_; }
  std::size_t target() const { return k_.back(); }

 private:
  std::vector<std::size_t> k_;
};

/// (min(d,8k), min(d,4k), min(d,2k), k) with duplicates removed.
inline WarmStartSchedule default_schedule(std::size_t d, std::size_t k) {
  std::vector<std::size_t> seq;
  for (std::size_t mult : {8u, 4u, 2u}) {
    const std::size_t level = std::min(d, mult * k);
    if (level > k && (seq.empty() || level < seq.back())) seq.push_back(level);
  }
  seq.push_back(k);
  return WarmStartSchedule(std::move(seq));
}

inline constexpr double kDenominatorTolerance = 1e-12;
inline constexpr double kZeroUpdateTolerance = 1e-14;

inline double rayleigh_quotient(const MatrixPair& pair, const Vector& v) {
  const double num = quadratic_form(pair.a, v);
  const double den = quadratic_form(pair.b, v);
  if (!(den > kDenominatorTolerance * v.squaredNorm()))
    throw Error(Errc::DegenerateDenominator, "v^T B v = " + std::to_string(den));
  return num / den;
}

/// Keeps the k entries of largest magnitude (ties to the smaller index) and
/// zeroes the rest. Zero entries are never selected, so the returned set may
/// hold fewer than k indices. The result is not renormalized.
inline std::pair<Vector, IndexSet> truncate_top_k(const Vector& v, std::size_t k) {
  const auto d = static_cast<std::size_t>(v.size());
  if (k == 0 || k > d)
    throw Error(Errc::InvalidArgument, "truncation level " + std::to_string(k) + " outside 1.." + std::to_string(d));
  std::vector<std::size_t> order;
  order.reserve(d);
  for (std::size_t i = 0; i < d; ++i)
    if (v(static_cast<Eigen::Index>(i)) != 0.0) order.push_back(i);
  const auto by_magnitude = [&](std::size_t x, std::size_t y) {
    const double ax = std::abs(v(static_cast<Eigen::Index>(x)));
    const double ay = std::abs(v(static_cast<Eigen::Index>(y)));
    return ax > ay || (ax == ay && x < y);
  };
  const std::size_t keep = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), by_magnitude);
  order.resize(keep);
  IndexSet selected = IndexSet::from_unsorted(std::move(order));
  Vector out = Vector::Zero(v.size());
  for (std::size_t i : selected) out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(i));
  return {std::move(out), std::move(selected)};
}

struct StepResult {
  Vector v;          // unit-norm, at most k nonzeros
  double rho;        // Rayleigh quotient of v_prev
  IndexSet support;  // top-k set of the pre-truncation update
};

namespace detail {

inline StepResult rifle_step_impl(const MatrixPair& pair, const Vector& v_prev, double eta, std::size_t k,
                                  double a_norm) {
  const Vector av = pair.a.matrix() * v_prev;
  const Vector bv = pair.b.matrix() * v_prev;
  const double den = v_prev.dot(bv);
  if (!(den > kDenominatorTolerance * v_prev.squaredNorm()))
    throw Error(Errc::DegenerateDenominator, "v^T B v = " + std::to_string(den));
  const double rho = v_prev.dot(av) / den;
  if (!(std::abs(rho) > kDenominatorTolerance * a_norm))
    throw Error(Errc::DegenerateDenominator, "Rayleigh quotient " + std::to_string(rho) + " is numerically zero");

  Vector cv = v_prev + (eta / rho) * (av - rho * bv);
  const double cv_norm = cv.norm();
  if (!(cv_norm > kZeroUpdateTolerance)) throw Error(Errc::ZeroUpdate, "||C v|| = " + std::to_string(cv_norm));
  cv /= cv_norm;

  auto [truncated, support] = truncate_top_k(cv, k);
  const double t_norm = truncated.norm();
  if (!(t_norm > 0.0)) throw Error(Errc::ZeroUpdate, "truncated update is zero");
  truncated /= t_norm;
  return StepResult{std::move(truncated), rho, std::move(support)};
}

}  // namespace detail

/// One iteration: rho, C = I + (eta/rho)(A - rho B), normalize C v, truncate, renormalize.
inline StepResult rifle_step(const MatrixPair& pair, const Vector& v_prev, double eta, std::size_t k) {
  if (static_cast<std::size_t>(v_prev.size()) != pair.dim())
    throw Error(Errc::DimMismatch, "iterate length does not match pair dimension");
  if (!(eta > 0.0)) throw Error(Errc::InvalidArgument, "step size must be positive");
  return detail::rifle_step_impl(pair, v_prev, eta, k, pair.a.frobenius_norm());
}

inline constexpr int kPowerIterations = 200;
inline constexpr double kPowerInflation = 1.05;

/// eta = 1 / (2 * 1.05 * lambda_max estimate), the estimate coming from a
/// 200-step power method on B started from a fixed non-symmetric vector.
inline double default_step_size(const SymMatrix& b) {
  if (!(b.frobenius_norm() > 0.0)) throw Error(Errc::ZeroMatrix, "step size for a zero matrix");
  const auto d = static_cast<Eigen::Index>(b.dim());
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = 1.0 + 1.0 / static_cast<double>(i + 2);
  v.normalize();
  double estimate = 0.0;
  for (int it = 0; it < kPowerIterations; ++it) {
    Vector w = b.matrix() * v;
    const double norm = w.norm();
    if (!(norm > 0.0)) break;
    estimate = norm;
    v = w / norm;
  }
  estimate = std::max(estimate, std::abs(quadratic_form(b, v)));
  if (!(estimate > 0.0)) throw Error(Errc::ZeroMatrix, "power method found no nonzero direction");
  return 1.0 / (2.0 * kPowerInflation * estimate);
}

inline void validate(const RifleConfig& config, std::size_t d) {
  if (config.k < 1 || config.k > d)
    throw Error(Errc::InvalidArgument, "k = " + std::to_string(config.k) + " outside 1.." + std::to_string(d));
  if (config.eta && !(*config.eta > 0.0)) throw Error(Errc::InvalidArgument, "step size must be positive");
  if (!(config.tol >= 0.0)) throw Error(Errc::InvalidArgument, "tolerance must be nonnegative");
  if (config.max_iter < 0) throw Error(Errc::InvalidArgument, "max_iter must be nonnegative");
  if (const auto* v = std::get_if<Vector>(&config.init); v && static_cast<std::size_t>(v->size()) != d)
    throw Error(Errc::DimMismatch, "initial vector length does not match pair dimension");
}

inline Vector initial_vector(const RifleConfig& config, std::size_t d) {
  Vector v;
  if (const auto* given = std::get_if<Vector>(&config.init)) {
    v = *given;
  } else {
    RngState rng(std::get<RandomInit>(config.init).seed, 0);
    v = rng.normal_vector(d);
  }
  const double norm = v.norm();
  if (!(norm > 0.0) || !v.allFinite()) throw Error(Errc::ZeroVector, "initial vector is zero or non-finite");
  return v / norm;
}

/// Iterates rifle_step until 1 - |v_t^T v_{t-1}| <= tol or max_iter steps.
inline RifleResult rifle(const MatrixPair& pair, const RifleConfig& config) {
  const std::size_t d = pair.dim();
  validate(config, d);
  const double eta = config.eta ? *config.eta : default_step_size(pair.b);
  const double a_norm = pair.a.frobenius_norm();

  RifleResult result;
  result.v = initial_vector(config, d);
  for (int t = 1; t <= config.max_iter; ++t) {
    StepResult step = detail::rifle_step_impl(pair, result.v, eta, config.k, a_norm);
    if (!step.v.allFinite()) throw Error(Errc::NonFiniteIterate, "iterate " + std::to_string(t));
    const double change = 1.0 - std::abs(step.v.dot(result.v));
    if (config.record_trajectory) result.trajectory.push_back({step.rho, std::move(step.support), change});
    result.v = std::move(step.v);
    result.iterations = t;
    if (change <= config.tol) {
      result.converged = true;
      break;
    }
  }
  result.rho = rayleigh_quotient(pair, result.v);
  result.stage_iterations = {result.iterations};
  return result;
}

/// Runs rifle once per schedule level, each solution seeding the next stage.
inline RifleResult rifle_warm_start(const MatrixPair& pair, const RifleConfig& target,
                                    const WarmStartSchedule& schedule) {
  if (schedule.target() != target.k)
    throw Error(Errc::InvalidArgument, "schedule ends at " + std::to_string(schedule.target()) +
                                           " but target k is " + std::to_string(target.k));
  RifleConfig stage = target;
  if (!stage.eta) stage.eta = default_step_size(pair.b);
  RifleResult combined;
  for (std::size_t i = 0; i < schedule.k_sequence().size(); ++i) {
    stage.k = schedule.k_sequence()[i];
    RifleResult r = rifle(pair, stage);
    stage.init = Vector(r.v / r.v.norm());
    combined.v = std::move(r.v);
    combined.rho = r.rho;
    combined.converged = r.converged;
    combined.iterations += r.iterations;
    combined.stage_iterations.push_back(r.iterations);
    for (auto& point : r.trajectory) combined.trajectory.push_back(std::move(point));
  }
  return combined;
}

}  // namespace rifle
