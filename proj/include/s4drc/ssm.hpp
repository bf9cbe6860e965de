#pragma once

// Diagonal state-space (S4D) layer math.
//
// Each of H channels runs an independent bank of N complex first-order modes
//
//   x[t] = abar * x[t-1] + bbar * u[t]
//   y[t] = 2 Re(sum_n c_n x_n[t]) + d u[t]
//
// The factor 2 realises the conjugate-pair convention: every stored mode
// stands for itself and its complex conjugate, so the output is real.
// Recurrences and kernels are evaluated in double precision whatever the
// scalar type of the audio passing through.

#include <cstdint>
#include <memory>

#include "s4drc/error.hpp"
#include "s4drc/types.hpp"

namespace s4drc {

enum class SsmMode { Fft, Recurrent };

/// Continuous-time diagonal SSM parameters for H channels of N modes each.
/// `dt` is the per-channel step size relative to the sample period.
template <typename Scalar>
struct SsmCoefficients {
  ModeMatrix<Scalar> lambda;
  ModeMatrix<Scalar> b;
  ModeMatrix<Scalar> c;
  Vector<Scalar> d;
  Vector<Scalar> dt;

  Index channels() const { return lambda.rows(); }
  Index order() const { return lambda.cols(); }

  /// Throws DimensionMismatch, NonFinite, or Unstable (Re(lambda) >= 0 or dt <= 0).
  void validate() const;

  template <typename NewScalar>
  SsmCoefficients<NewScalar> cast() const {
    return {lambda.template cast<std::complex<NewScalar>>(),
            b.template cast<std::complex<NewScalar>>(),
            c.template cast<std::complex<NewScalar>>(),
            d.template cast<NewScalar>(),
            dt.template cast<NewScalar>()};
  }
};

/// Zero-order-hold discretization of SsmCoefficients. Immutable once built.
struct DiscreteSsm {
  ModeMatrix<double> abar;
  ModeMatrix<double> bbar;
  ModeMatrix<double> c;
  Vector<double> d;

  Index channels() const { return abar.rows(); }
  Index order() const { return abar.cols(); }
};

struct SsmState {
  ModeMatrix<double> x;
  std::uint64_t position = 0;

  static SsmState zeros(Index channels, Index order) {
    return {ModeMatrix<double>::Zero(channels, order), 0};
  }
  static SsmState zeros(const DiscreteSsm& ssm) { return zeros(ssm.channels(), ssm.order()); }

  bool matches(const DiscreteSsm& ssm) const {
    return x.rows() == ssm.channels() && x.cols() == ssm.order();
  }
  void reset() {
    x.setZero();
    position = 0;
  }
};

/// abar = exp(dt * lambda), bbar = (abar - 1) / lambda * b, with the limit
/// bbar = dt * b when |lambda| < 1e-8.
template <typename Scalar>
DiscreteSsm discretize(const SsmCoefficients<Scalar>& coeffs);

/// Impulse response K[h][t] = 2 Re(sum_n c * bbar * abar^t), t in [0, length).
/// The feedthrough d is not part of the kernel.
Signal<double> kernel(const DiscreteSsm& ssm, Index length);

/// One sample of the recurrence for all channels. `u` is a frame of H values.
template <typename Derived>
Vector<typename Derived::Scalar> step(const DiscreteSsm& ssm, SsmState& state,
                                      const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  if (!state.matches(ssm) || u.size() != ssm.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "step: state or frame does not match ssm");
  }
  Vector<Scalar> y(ssm.channels());
  for (Index h = 0; h < ssm.channels(); ++h) {
    const double uh = static_cast<double>(u(h));
    double acc = 0.0;
    for (Index n = 0; n < ssm.order(); ++n) {
      std::complex<double>& x = state.x(h, n);
      x = ssm.abar(h, n) * x + ssm.bbar(h, n) * uh;
      acc += (ssm.c(h, n) * x).real();
    }
    y(h) = static_cast<Scalar>(2.0 * acc + ssm.d(h) * uh);
  }
  ++state.position;
  return y;
}

/// Sample-by-sample evaluation of a block (H x L). `y` may not alias `u`.
void process_block_recurrent(const DiscreteSsm& ssm, SsmState& state,
                             const ConstSignalRef<float>& u, SignalRef<float> y);
void process_block_recurrent(const DiscreteSsm& ssm, SsmState& state,
                             const ConstSignalRef<double>& u, SignalRef<double> y);

template <typename Derived>
Signal<typename Derived::Scalar> process_block_recurrent(const DiscreteSsm& ssm, SsmState& state,
                                                         const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  Signal<Scalar> y(u.rows(), u.cols());
  process_block_recurrent(ssm, state, ConstSignalRef<Scalar>(u), y);
  return y;
}

/// Block processor that filters by causal FFT convolution with the SSM
/// kernel, adds the ring-down of the incoming state, and hands off the exact
/// state after the last sample.
///
/// Owns FFT plans, the cached kernel spectrum for the most recent block
/// length, and scratch storage. Scratch only grows; once reserve() has been
/// called for the largest block length, process() does not allocate.
/// Not thread-safe; use one filter per stream.
class FftBlockFilter {
 public:
  explicit FftBlockFilter(DiscreteSsm ssm);
  FftBlockFilter(FftBlockFilter&&) noexcept;
  FftBlockFilter& operator=(FftBlockFilter&&) noexcept;
  ~FftBlockFilter();

  const DiscreteSsm& ssm() const;

  void reserve(Index max_length);

  void process(SsmState& state, const ConstSignalRef<float>& u, SignalRef<float> y);
  void process(SsmState& state, const ConstSignalRef<double>& u, SignalRef<double> y);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

template <typename Derived>
Signal<typename Derived::Scalar> process_block_fft(const DiscreteSsm& ssm, SsmState& state,
                                                   const Eigen::MatrixBase<Derived>& u) {
  using Scalar = typename Derived::Scalar;
  Signal<Scalar> y(u.rows(), u.cols());
  FftBlockFilter filter(ssm);
  filter.process(state, ConstSignalRef<Scalar>(u), y);
  return y;
}

/// S4D-Lin initialisation: lambda_n = -1/2 + i*pi*n, b = 1, c standard complex
/// normal, dt log-uniform in [1e-3, 1e-1], d = 0. Deterministic in `seed`.
template <typename Scalar>
SsmCoefficients<Scalar> init_s4d(Index order, Index channels, std::uint64_t seed);

}  // namespace s4drc
