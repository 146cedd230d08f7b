#pragma once

#include <cmath>
#include <cstddef>
#include <optional>

#include "broker_nash/errors.hpp"

namespace broker_nash {

/// Uniform grid 0 = t_0 < ... < t_n = T.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_(n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon) || n_steps == 0)
      throw SolverError(ErrorKind::InvalidInput,
                        "time grid needs horizon > 0 and n_steps >= 1");
  }

  double horizon() const { return horizon_; }
  std::size_t n_steps() const { return n_; }
  std::size_t n_nodes() const { return n_ + 1; }
  double dt() const { return horizon_ / static_cast<double>(n_); }

  /// t_k, with t_n equal to T exactly.
  double node(std::size_t k) const {
    if (k >= n_) return horizon_;
    return horizon_ * static_cast<double>(k) / static_cast<double>(n_);
  }

  /// Index of the node at time t, if t is one (to 1e-9 of a step).
  std::optional<std::size_t> index_of(double t) const {
    const double x = t / dt();
    const double k = std::round(x);
    if (k < 0.0 || k > static_cast<double>(n_) || std::abs(x - k) > 1e-9)
      return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  bool operator==(const TimeGrid& o) const {
    return horizon_ == o.horizon_ && n_ == o.n_;
  }

 private:
  double horizon_ = 1.0;
  std::size_t n_ = 1;
};

/// One classical fourth-order Runge-Kutta step of y' = f(t, y) with step h
/// (h may be negative for backward integration).
template <typename State, typename Rhs>
State rk4_step(const State& y, double t, double h, Rhs&& f) {
  const State k1 = f(t, y);
  const State k2 = f(t + 0.5 * h, State(y + (0.5 * h) * k1));
  const State k3 = f(t + 0.5 * h, State(y + (0.5 * h) * k2));
  const State k4 = f(t + h, State(y + h * k3));
  return State(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

}  // namespace broker_nash
