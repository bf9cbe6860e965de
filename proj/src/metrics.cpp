#include "s4drc/metrics.hpp"

#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace s4drc::metrics {

namespace {

void check_pair(const Audio& y, const Audio& yhat) {
  if (y.size() == 0 || yhat.size() == 0) throw Error(ErrorCode::Empty, "empty signal");
  if (y.size() != yhat.size()) {
    throw Error(ErrorCode::LengthMismatch, "signals have different lengths (" +
                                               std::to_string(y.size()) + " vs " +
                                               std::to_string(yhat.size()) + ")");
  }
}

Eigen::VectorXd periodic_hann(Index length) {
  Eigen::VectorXd w(length);
  for (Index n = 0; n < length; ++n) {
    w(n) = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(length));
  }
  return w;
}

// Reflect padding without edge repetition: ... x2 x1 | x0 x1 ... xn-1 | xn-2 xn-3 ...
double reflected(const Audio& x, Index i) {
  const Index n = x.size();
  if (i < 0) return x(-i);
  if (i >= n) return x(2 * (n - 1) - i);
  return x(i);
}

nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

double mae(const Audio& y, const Audio& yhat) {
  check_pair(y, yhat);
  return (y - yhat).cwiseAbs().mean();
}

double mse(const Audio& y, const Audio& yhat) {
  check_pair(y, yhat);
  return (y - yhat).squaredNorm() / static_cast<double>(y.size());
}

Eigen::VectorXd pre_emphasis(const Audio& x, double coeff) {
  if (x.size() == 0) throw Error(ErrorCode::Empty, "empty signal");
  Eigen::VectorXd out(x.size());
  out(0) = x(0);
  out.tail(x.size() - 1) = x.tail(x.size() - 1) - coeff * x.head(x.size() - 1);
  return out;
}

double esr_dc(const Audio& y, const Audio& yhat) {
  check_pair(y, yhat);
  const Eigen::VectorXd pe_y = pre_emphasis(y);
  const Eigen::VectorXd pe_yhat = pre_emphasis(yhat);
  const double energy = pe_y.squaredNorm();
  const double power = y.squaredNorm() / static_cast<double>(y.size());
  if (energy == 0.0 || power == 0.0) {
    throw Error(ErrorCode::SilentReference, "reference signal is silent");
  }
  const double esr = (pe_yhat - pe_y).squaredNorm() / energy;
  const double dc_offset = (y - yhat).mean();
  return esr + dc_offset * dc_offset / power;
}

Eigen::MatrixXd stft_magnitude(const Audio& x, const StftResolution& res) {
  if (res.fft_size < 2 || res.hop_size < 1 || res.win_length < 1 || res.win_length > res.fft_size) {
    throw Error(ErrorCode::InvalidArgument, "invalid STFT resolution");
  }
  if (x.size() < res.fft_size) {
    throw Error(ErrorCode::TooShort, "signal shorter than the FFT size " +
                                         std::to_string(res.fft_size));
  }
  const Index pad = res.fft_size / 2;
  const Index frames = 1 + x.size() / res.hop_size;
  const Index bins = res.fft_size / 2 + 1;
  const Index win_offset = (res.fft_size - res.win_length) / 2;
  const Eigen::VectorXd window = periodic_hann(res.win_length);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(res.fft_size));
  std::vector<std::complex<double>> spectrum(static_cast<std::size_t>(bins));
  Eigen::MatrixXd mag(frames, bins);
  for (Index f = 0; f < frames; ++f) {
    const Index start = f * res.hop_size - pad;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (Index k = 0; k < res.win_length; ++k) {
      const Index i = win_offset + k;
      frame[i] = window(k) * reflected(x, start + i);
    }
    fft.fwd(spectrum.data(), frame.data(), res.fft_size);
    for (Index k = 0; k < bins; ++k) mag(f, k) = std::abs(spectrum[k]);
  }
  return mag;
}

StftLossTerms stft_loss(const Audio& y, const Audio& yhat, const StftResolution& res) {
  check_pair(y, yhat);
  const Eigen::MatrixXd my = stft_magnitude(y, res);
  const Eigen::MatrixXd myhat = stft_magnitude(yhat, res);
  const double ref_norm = my.norm();
  if (ref_norm == 0.0) throw Error(ErrorCode::SilentReference, "reference spectrum is zero");
  StftLossTerms out;
  out.spectral_convergence = (my - myhat).norm() / ref_norm;
  out.log_magnitude = (my.array().max(kLogMagnitudeFloor).log() -
                       myhat.array().max(kLogMagnitudeFloor).log())
                          .abs()
                          .mean();
  return out;
}

double multi_stft(const Audio& y, const Audio& yhat, std::span<const StftResolution> resolutions) {
  check_pair(y, yhat);
  if (resolutions.empty()) throw Error(ErrorCode::InvalidArgument, "no STFT resolutions");
  Index largest = 0;
  for (const auto& r : resolutions) largest = std::max(largest, r.fft_size);
  if (y.size() < largest) {
    throw Error(ErrorCode::TooShort, "signal shorter than the largest FFT size " +
                                         std::to_string(largest));
  }
  double total = 0.0;
  for (const auto& r : resolutions) {
    const auto terms = stft_loss(y, yhat, r);
    total += terms.spectral_convergence + terms.log_magnitude;
  }
  return total / static_cast<double>(resolutions.size());
}

std::array<Biquad, 2> k_weighting(double sample_rate) {
  // Analog prototypes matched to the 48 kHz coefficients tabulated in BS.1770.
  double f0 = 1681.974450955533;
  const double gain_db = 3.999843853973347;
  double q = 0.7071752369554196;
  double k = std::tan(M_PI * f0 / sample_rate);
  const double vh = std::pow(10.0, gain_db / 20.0);
  const double vb = std::pow(vh, 0.4996667741545416);
  double a0 = 1.0 + k / q + k * k;
  const Biquad shelf{(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0,
                     (vh - vb * k / q + k * k) / a0, 2.0 * (k * k - 1.0) / a0,
                     (1.0 - k / q + k * k) / a0};

  f0 = 38.13547087602444;
  q = 0.5003270373238773;
  k = std::tan(M_PI * f0 / sample_rate);
  a0 = 1.0 + k / q + k * k;
  const Biquad highpass{1.0, -2.0, 1.0, 2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0};
  return {shelf, highpass};
}

double lufs(const Audio& x, double sample_rate) {
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const auto step = static_cast<Index>(std::lround(sample_rate / 10.0));  // 100 ms
  const Index block = 4 * step;                                           // 400 ms
  if (x.size() < block) throw Error(ErrorCode::TooShort, "loudness needs at least 400 ms of audio");

  // K-weighting, transposed direct form II.
  Eigen::VectorXd z = x;
  for (const Biquad& f : k_weighting(sample_rate)) {
    double s1 = 0.0;
    double s2 = 0.0;
    for (Index t = 0; t < z.size(); ++t) {
      const double in = z(t);
      const double out = f.b0 * in + s1;
      s1 = f.b1 * in - f.a1 * out + s2;
      s2 = f.b2 * in - f.a2 * out;
      z(t) = out;
    }
  }

  std::vector<double> prefix(static_cast<std::size_t>(z.size() + 1), 0.0);
  for (Index t = 0; t < z.size(); ++t) prefix[t + 1] = prefix[t] + z(t) * z(t);

  constexpr double kOffset = -0.691;
  constexpr double kAbsoluteGate = -70.0;
  auto loudness = [](double mean_square) { return kOffset + 10.0 * std::log10(mean_square); };

  std::vector<double> powers;
  for (Index start = 0; start + block <= z.size(); start += step) {
    powers.push_back((prefix[start + block] - prefix[start]) / static_cast<double>(block));
  }

  double sum = 0.0;
  std::size_t count = 0;
  for (double p : powers) {
    if (p > 0.0 && loudness(p) > kAbsoluteGate) {
      sum += p;
      ++count;
    }
  }
  if (count == 0) return -std::numeric_limits<double>::infinity();

  const double relative_gate = loudness(sum / static_cast<double>(count)) - 10.0;
  sum = 0.0;
  count = 0;
  for (double p : powers) {
    if (p > 0.0 && loudness(p) > kAbsoluteGate && loudness(p) > relative_gate) {
      sum += p;
      ++count;
    }
  }
  if (count == 0) return -std::numeric_limits<double>::infinity();
  return loudness(sum / static_cast<double>(count));
}

nlohmann::json MetricReport::to_json() const {
  return {{"schema", kMetricReportSchema},
          {"mae", finite_or_null(mae)},
          {"mse", finite_or_null(mse)},
          {"esr_dc", finite_or_null(esr_dc)},
          {"multi_stft", finite_or_null(multi_stft)},
          {"lufs_target", finite_or_null(lufs_target)},
          {"lufs_render", finite_or_null(lufs_render)},
          {"lufs_diff", finite_or_null(lufs_diff)},
          {"units",
           {{"lufs_target", "LUFS"}, {"lufs_render", "LUFS"}, {"lufs_diff", "LU"}}}};
}

MetricReport compare(const Audio& y, const Audio& yhat, double sample_rate) {
  check_pair(y, yhat);
  MetricReport r;
  r.mae = mae(y, yhat);
  r.mse = mse(y, yhat);
  r.esr_dc = esr_dc(y, yhat);
  r.multi_stft = multi_stft(y, yhat);
  r.lufs_target = lufs(y, sample_rate);
  r.lufs_render = lufs(yhat, sample_rate);
  if (is_all_gated(r.lufs_target) || is_all_gated(r.lufs_render)) {
    r.lufs_diff = std::numeric_limits<double>::quiet_NaN();
  } else {
    r.lufs_diff = std::abs(r.lufs_target - r.lufs_render);
  }
  return r;
}

}  // namespace s4drc::metrics
