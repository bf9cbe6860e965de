#include "s4drc/ssm.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace s4drc {

namespace {

using cd = std::complex<double>;

// Plain complex product. operator* goes through libgcc's __muldc3, which
// recovers infinities and costs a call per multiply in the hot loops.
inline cd cmul(const cd& a, const cd& b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

bool is_finite(const cd& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (!is_finite(cd(m(i, j)))) return false;
    }
  }
  return true;
}

Index fft_size_for(Index length) {
  Index n = 2;
  while (n < 2 * length) n <<= 1;
  return n;
}

template <typename Scalar>
void check_block_dims(const DiscreteSsm& ssm, const SsmState& state,
                      const ConstSignalRef<Scalar>& u, const SignalRef<Scalar>& y) {
  if (!state.matches(ssm)) {
    throw Error(ErrorCode::DimensionMismatch, "state shape does not match ssm");
  }
  if (u.rows() != ssm.channels() || y.rows() != u.rows() || y.cols() != u.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "block shape does not match ssm channels");
  }
  if (u.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "block length must be at least 1");
  }
}

template <typename Scalar>
void check_output_finite(const SignalRef<Scalar>& y) {
  if (!y.allFinite()) throw Error(ErrorCode::NonFinite, "ssm output is not finite");
}

template <typename Scalar>
void recurrent_impl(const DiscreteSsm& ssm, SsmState& state, const ConstSignalRef<Scalar>& u,
                    SignalRef<Scalar> y) {
  check_block_dims(ssm, state, u, y);
  const Index length = u.cols();
  const Index order = ssm.order();
  for (Index h = 0; h < ssm.channels(); ++h) {
    const cd* a = &ssm.abar(h, 0);
    const cd* b = &ssm.bbar(h, 0);
    const cd* c = &ssm.c(h, 0);
    cd* x = &state.x(h, 0);
    const double d = ssm.d(h);
    for (Index t = 0; t < length; ++t) {
      const double ut = static_cast<double>(u(h, t));
      double acc = 0.0;
      for (Index n = 0; n < order; ++n) {
        x[n] = cmul(a[n], x[n]) + b[n] * ut;
        acc += c[n].real() * x[n].real() - c[n].imag() * x[n].imag();
      }
      y(h, t) = static_cast<Scalar>(2.0 * acc + d * ut);
    }
  }
  state.position += static_cast<std::uint64_t>(length);
  check_output_finite(y);
}

}  // namespace

template <typename Scalar>
void SsmCoefficients<Scalar>::validate() const {
  const Index h = channels();
  const Index n = order();
  if (h < 1) throw Error(ErrorCode::DimensionMismatch, "ssm needs at least one channel");
  if (n < 1) throw Error(ErrorCode::InvalidOrder, "ssm order must be at least 1");
  if (b.rows() != h || b.cols() != n || c.rows() != h || c.cols() != n || d.size() != h ||
      dt.size() != h) {
    throw Error(ErrorCode::DimensionMismatch, "ssm coefficient shapes disagree");
  }
  if (!all_finite(lambda) || !all_finite(b) || !all_finite(c) || !d.allFinite() ||
      !dt.allFinite()) {
    throw Error(ErrorCode::NonFinite, "ssm coefficients contain NaN or Inf");
  }
  if ((lambda.real().array() >= Scalar(0)).any()) {
    throw Error(ErrorCode::Unstable, "every pole needs Re(lambda) < 0");
  }
  if ((dt.array() <= Scalar(0)).any()) {
    throw Error(ErrorCode::Unstable, "every step size dt must be positive");
  }
}

template <typename Scalar>
DiscreteSsm discretize(const SsmCoefficients<Scalar>& coeffs) {
  const Index h_count = coeffs.channels();
  const Index order = coeffs.order();
  if (coeffs.b.rows() != h_count || coeffs.b.cols() != order || coeffs.c.rows() != h_count ||
      coeffs.c.cols() != order || coeffs.d.size() != h_count || coeffs.dt.size() != h_count) {
    throw Error(ErrorCode::DimensionMismatch, "ssm coefficient shapes disagree");
  }

  DiscreteSsm out;
  out.abar.resize(h_count, order);
  out.bbar.resize(h_count, order);
  out.c = coeffs.c.template cast<cd>();
  out.d = coeffs.d.template cast<double>();

  for (Index h = 0; h < h_count; ++h) {
    const double dt = static_cast<double>(coeffs.dt(h));
    for (Index n = 0; n < order; ++n) {
      const cd lambda(coeffs.lambda(h, n));
      const cd b(coeffs.b(h, n));
      const cd abar = std::exp(dt * lambda);
      out.abar(h, n) = abar;
      out.bbar(h, n) = std::abs(lambda) < 1e-8 ? dt * b : (abar - 1.0) / lambda * b;
    }
  }

  if (!all_finite(out.abar) || !all_finite(out.bbar) || !all_finite(out.c) || !out.d.allFinite()) {
    throw Error(ErrorCode::NonFinite, "discretized ssm is not finite");
  }
  if ((out.abar.cwiseAbs().array() >= 1.0).any()) {
    throw Error(ErrorCode::Unstable, "discrete pole on or outside the unit circle");
  }
  return out;
}

Signal<double> kernel(const DiscreteSsm& ssm, Index length) {
  if (length < 1) throw Error(ErrorCode::DimensionMismatch, "kernel length must be at least 1");
  Signal<double> k(ssm.channels(), length);
  std::vector<cd> p(static_cast<std::size_t>(ssm.order()));
  for (Index h = 0; h < ssm.channels(); ++h) {
    for (Index n = 0; n < ssm.order(); ++n) p[n] = ssm.c(h, n) * ssm.bbar(h, n);
    for (Index t = 0; t < length; ++t) {
      double acc = 0.0;
      for (Index n = 0; n < ssm.order(); ++n) {
        acc += p[n].real();
        p[n] *= ssm.abar(h, n);
      }
      k(h, t) = 2.0 * acc;
    }
  }
  if (!k.allFinite()) throw Error(ErrorCode::NonFinite, "kernel overflow");
  return k;
}

void process_block_recurrent(const DiscreteSsm& ssm, SsmState& state,
                             const ConstSignalRef<float>& u, SignalRef<float> y) {
  recurrent_impl<float>(ssm, state, u, y);
}

void process_block_recurrent(const DiscreteSsm& ssm, SsmState& state,
                             const ConstSignalRef<double>& u, SignalRef<double> y) {
  recurrent_impl<double>(ssm, state, u, y);
}

struct FftBlockFilter::Impl {
  explicit Impl(DiscreteSsm s) : ssm(std::move(s)), modes(static_cast<std::size_t>(ssm.order())) {
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  }

  DiscreteSsm ssm;
  Eigen::FFT<double> fft;

  // Sized for the largest block seen; never shrunk.
  std::vector<double> time_buf;
  std::vector<cd> freq_buf;
  std::vector<cd> kernel_spec;  // channels x bins, row stride = bins of cached length
  std::vector<cd> modes;
  Index cached_length = -1;
  Index max_nfft = 0;

  void grow(Index length) {
    const Index nfft = fft_size_for(length);
    if (nfft <= max_nfft) return;
    const Index bins = nfft / 2 + 1;
    time_buf.resize(static_cast<std::size_t>(nfft));
    freq_buf.resize(static_cast<std::size_t>(bins));
    kernel_spec.resize(static_cast<std::size_t>(bins * ssm.channels()));
    // Build FFT plans for every size up to nfft so later length changes stay allocation-free.
    for (Index n = 2; n <= nfft; n <<= 1) {
      std::fill_n(time_buf.begin(), n, 0.0);
      fft.fwd(freq_buf.data(), time_buf.data(), n);
      fft.inv(time_buf.data(), freq_buf.data(), n);
    }
    max_nfft = nfft;
  }

  void prepare_kernel(Index length) {
    if (length == cached_length) return;
    grow(length);
    const Index nfft = fft_size_for(length);
    const Index bins = nfft / 2 + 1;
    const Index order = ssm.order();
    for (Index h = 0; h < ssm.channels(); ++h) {
      for (Index n = 0; n < order; ++n) modes[n] = ssm.c(h, n) * ssm.bbar(h, n);
      for (Index t = 0; t < length; ++t) {
        double acc = 0.0;
        for (Index n = 0; n < order; ++n) {
          acc += modes[n].real();
          modes[n] = cmul(modes[n], ssm.abar(h, n));
        }
        time_buf[t] = 2.0 * acc;
      }
      std::fill(time_buf.begin() + length, time_buf.begin() + nfft, 0.0);
      fft.fwd(kernel_spec.data() + h * bins, time_buf.data(), nfft);
    }
    cached_length = length;
  }

  template <typename Scalar>
  void process(SsmState& state, const ConstSignalRef<Scalar>& u, SignalRef<Scalar> y) {
    check_block_dims(ssm, state, u, y);
    const Index length = u.cols();
    prepare_kernel(length);
    const Index nfft = fft_size_for(length);
    const Index bins = nfft / 2 + 1;
    const Index order = ssm.order();

    for (Index h = 0; h < ssm.channels(); ++h) {
      // Linear convolution with the kernel.
      for (Index t = 0; t < length; ++t) time_buf[t] = static_cast<double>(u(h, t));
      std::fill(time_buf.begin() + length, time_buf.begin() + nfft, 0.0);
      fft.fwd(freq_buf.data(), time_buf.data(), nfft);
      const cd* spec = kernel_spec.data() + h * bins;
      for (Index k = 0; k < bins; ++k) freq_buf[k] = cmul(freq_buf[k], spec[k]);
      fft.inv(time_buf.data(), freq_buf.data(), nfft);

      const double d = ssm.d(h);
      cd* x = &state.x(h, 0);
      const cd* a = &ssm.abar(h, 0);
      const cd* c = &ssm.c(h, 0);
      const cd* b = &ssm.bbar(h, 0);

      bool has_state = false;
      for (Index n = 0; n < order; ++n) has_state = has_state || x[n] != cd(0.0, 0.0);

      if (has_state) {
        // Ring-down of the incoming state: 2 Re(sum_n c abar^(t+1) x).
        for (Index n = 0; n < order; ++n) modes[n] = cmul(a[n], x[n]);
        for (Index t = 0; t < length; ++t) {
          double acc = 0.0;
          for (Index n = 0; n < order; ++n) {
            acc += c[n].real() * modes[n].real() - c[n].imag() * modes[n].imag();
            modes[n] = cmul(modes[n], a[n]);
          }
          time_buf[t] += 2.0 * acc;
        }
      }

      for (Index t = 0; t < length; ++t) {
        y(h, t) = static_cast<Scalar>(time_buf[t] + d * static_cast<double>(u(h, t)));
      }

      // State after the last sample: abar^L x + sum_t abar^(L-1-t) bbar u[t].
      for (Index t = 0; t < length; ++t) {
        const double ut = static_cast<double>(u(h, t));
        for (Index n = 0; n < order; ++n) x[n] = cmul(a[n], x[n]) + b[n] * ut;
      }
    }
    state.position += static_cast<std::uint64_t>(length);
    check_output_finite(y);
  }
};

FftBlockFilter::FftBlockFilter(DiscreteSsm ssm) : impl_(std::make_unique<Impl>(std::move(ssm))) {}
FftBlockFilter::FftBlockFilter(FftBlockFilter&&) noexcept = default;
FftBlockFilter& FftBlockFilter::operator=(FftBlockFilter&&) noexcept = default;
FftBlockFilter::~FftBlockFilter() = default;

const DiscreteSsm& FftBlockFilter::ssm() const { return impl_->ssm; }

void FftBlockFilter::reserve(Index max_length) {
  if (max_length >= 1) impl_->grow(max_length);
}

void FftBlockFilter::process(SsmState& state, const ConstSignalRef<float>& u,
                             SignalRef<float> y) {
  impl_->process<float>(state, u, y);
}

void FftBlockFilter::process(SsmState& state, const ConstSignalRef<double>& u,
                             SignalRef<double> y) {
  impl_->process<double>(state, u, y);
}

template <typename Scalar>
SsmCoefficients<Scalar> init_s4d(Index order, Index channels, std::uint64_t seed) {
  if (order < 1) throw Error(ErrorCode::InvalidOrder, "ssm order must be at least 1");
  if (channels < 1) throw Error(ErrorCode::DimensionMismatch, "ssm needs at least one channel");

  using C = std::complex<Scalar>;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> half_normal(0.0, std::sqrt(0.5));
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));

  SsmCoefficients<Scalar> out;
  out.lambda.resize(channels, order);
  out.b.resize(channels, order);
  out.c.resize(channels, order);
  out.d = Vector<Scalar>::Zero(channels);
  out.dt.resize(channels);
  for (Index h = 0; h < channels; ++h) {
    for (Index n = 0; n < order; ++n) {
      out.lambda(h, n) = C(Scalar(-0.5), static_cast<Scalar>(M_PI * static_cast<double>(n)));
      out.b(h, n) = C(Scalar(1), Scalar(0));
      const double re = half_normal(rng);
      const double im = half_normal(rng);
      out.c(h, n) = C(static_cast<Scalar>(re), static_cast<Scalar>(im));
    }
    out.dt(h) = static_cast<Scalar>(std::exp(log_dt(rng)));
  }
  return out;
}

template struct SsmCoefficients<float>;
template struct SsmCoefficients<double>;
template DiscreteSsm discretize(const SsmCoefficients<float>&);
template DiscreteSsm discretize(const SsmCoefficients<double>&);
template SsmCoefficients<float> init_s4d<float>(Index, Index, std::uint64_t);
template SsmCoefficients<double> init_s4d<double>(Index, Index, std::uint64_t);

}  // namespace s4drc
