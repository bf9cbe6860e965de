#pragma once

// Test-only helpers and independent oracles. Nothing here calls into the
// library's SSM evaluation paths.

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "s4drc/diagnostics.hpp"
#include "s4drc/error.hpp"
#include "s4drc/ssm.hpp"
#include "s4drc/types.hpp"

namespace s4drc::test {

template <typename Scalar>
Signal<Scalar> white_noise(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, scale);
  Signal<Scalar> s(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) s(i, j) = static_cast<Scalar>(dist(rng));
  return s;
}

template <typename Scalar>
Vector<Scalar> uniform_noise(Index n, std::uint64_t seed, double amplitude = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  Vector<Scalar> v(n);
  for (Index i = 0; i < n; ++i) v(i) = static_cast<Scalar>(dist(rng));
  return v;
}

template <typename A, typename B>
double relative_l2(const Eigen::MatrixBase<A>& estimate, const Eigen::MatrixBase<B>& reference) {
  const auto e = estimate.template cast<double>().eval();
  const auto r = reference.template cast<double>().eval();
  const double denom = r.norm();
  return denom == 0.0 ? (e - r).norm() : (e - r).norm() / denom;
}

template <typename A, typename B>
double max_abs_diff(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return (a.template cast<double>() - b.template cast<double>()).cwiseAbs().maxCoeff();
}

/// Impulse response by explicit powers: 2 Re(sum_n c bbar abar^t).
inline Signal<double> power_kernel(const DiscreteSsm& ssm, Index length) {
  Signal<double> k(ssm.channels(), length);
  for (Index h = 0; h < ssm.channels(); ++h) {
    for (Index t = 0; t < length; ++t) {
      std::complex<double> acc = 0.0;
      for (Index n = 0; n < ssm.order(); ++n) {
        acc += ssm.c(h, n) * ssm.bbar(h, n) * std::pow(ssm.abar(h, n), static_cast<double>(t));
      }
      k(h, t) = 2.0 * acc.real();
    }
  }
  return k;
}

/// O(L^2) direct evaluation of the SSM response: causal convolution with the
/// power kernel + feedthrough + ring-down of the initial state x0.
inline Signal<double> direct_response(const DiscreteSsm& ssm, const Signal<double>& u,
                                      const ModeMatrix<double>& x0) {
  const Index length = u.cols();
  const Signal<double> k = power_kernel(ssm, length);
  Signal<double> y = Signal<double>::Zero(u.rows(), length);
  for (Index h = 0; h < u.rows(); ++h) {
    for (Index t = 0; t < length; ++t) {
      double acc = ssm.d(h) * u(h, t);
      for (Index s = 0; s <= t; ++s) acc += k(h, t - s) * u(h, s);
      std::complex<double> ring = 0.0;
      for (Index n = 0; n < ssm.order(); ++n) {
        ring += ssm.c(h, n) * std::pow(ssm.abar(h, n), static_cast<double>(t + 1)) * x0(h, n);
      }
      y(h, t) = acc + 2.0 * ring.real();
    }
  }
  return y;
}

/// Random stable continuous-time coefficients with varied poles (not S4D-Lin).
template <typename Scalar>
SsmCoefficients<Scalar> random_coefficients(Index order, Index channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> decay(0.05, 2.0);
  std::uniform_real_distribution<double> freq(0.0, 40.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  using C = std::complex<Scalar>;
  SsmCoefficients<Scalar> s;
  s.lambda.resize(channels, order);
  s.b.resize(channels, order);
  s.c.resize(channels, order);
  s.d.resize(channels);
  s.dt.resize(channels);
  for (Index h = 0; h < channels; ++h) {
    for (Index n = 0; n < order; ++n) {
      s.lambda(h, n) = C(static_cast<Scalar>(-decay(rng)), static_cast<Scalar>(freq(rng)));
      s.b(h, n) = C(static_cast<Scalar>(normal(rng)), static_cast<Scalar>(normal(rng)));
      s.c(h, n) = C(static_cast<Scalar>(normal(rng)), static_cast<Scalar>(normal(rng)));
    }
    s.d(h) = static_cast<Scalar>(normal(rng));
    s.dt(h) = static_cast<Scalar>(std::exp(log_dt(rng)));
  }
  return s;
}

/// Error code thrown by `fn`, or nullopt when it returns normally.
template <typename F>
std::optional<ErrorCode> error_code(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Collects warnings for the lifetime of the object.
class CapturedWarnings {
 public:
  CapturedWarnings() {
    previous_ = set_warning_handler([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~CapturedWarnings() { set_warning_handler(previous_); }
  CapturedWarnings(const CapturedWarnings&) = delete;
  CapturedWarnings& operator=(const CapturedWarnings&) = delete;

  std::vector<std::string> messages;

 private:
  WarningHandler previous_;
};

}  // namespace s4drc::test
