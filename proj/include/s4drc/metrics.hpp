#pragma once

// Objective comparison metrics between a reference (target) signal `y` and a
// rendered estimate `yhat`. All computation is in double precision; pass
// float audio as `x.cast<double>()`.

#include <array>
#include <limits>
#include <span>

#include <Eigen/Core>
#include <json.hpp>

#include "s4drc/error.hpp"
#include "s4drc/types.hpp"

namespace s4drc::metrics {

using Audio = Eigen::Ref<const Eigen::VectorXd>;

double mae(const Audio& y, const Audio& yhat);
double mse(const Audio& y, const Audio& yhat);

/// First-order FIR x'[t] = x[t] - coeff * x[t-1], with x[-1] = 0.
Eigen::VectorXd pre_emphasis(const Audio& x, double coeff = 0.85);

/// Error-to-signal ratio of the pre-emphasised signals plus the DC term
///   ESR = sum (pe(yhat) - pe(y))^2 / sum pe(y)^2
///   DC  = mean(y - yhat)^2 / mean(y^2)
/// Throws SilentReference when either denominator is zero.
double esr_dc(const Audio& y, const Audio& yhat);

struct StftResolution {
  Index fft_size;
  Index hop_size;
  Index win_length;
};

inline constexpr std::array<StftResolution, 3> kDefaultResolutions{{
    {1024, 120, 600},
    {2048, 240, 1200},
    {512, 50, 240},
}};

/// Floor applied to magnitudes before taking logs.
inline constexpr double kLogMagnitudeFloor = 1e-8;

/// |STFT| as frames x (fft_size/2 + 1). Frames are centred: the signal is
/// reflect-padded by fft_size/2 on both sides and hopped by hop_size, giving
/// 1 + n / hop_size frames. The periodic Hann window of win_length samples
/// sits in the middle of each fft_size frame.
Eigen::MatrixXd stft_magnitude(const Audio& x, const StftResolution& res);

struct StftLossTerms {
  double spectral_convergence;
  double log_magnitude;
};

/// SC = ||S(y)| - |S(yhat)||_F / ||S(y)||_F and LM = mean |log|S(y)| - log|S(yhat)||.
StftLossTerms stft_loss(const Audio& y, const Audio& yhat, const StftResolution& res);

/// Mean over resolutions of (SC + LM). Throws TooShort if the signal is
/// shorter than the largest FFT size, SilentReference if |S(y)| is all zero.
double multi_stft(const Audio& y, const Audio& yhat,
                  std::span<const StftResolution> resolutions = kDefaultResolutions);

/// ITU-R BS.1770-4 integrated loudness of a mono signal in LUFS: K-weighting,
/// 400 ms blocks at 75% overlap, absolute gate -70 LUFS and relative gate
/// -10 LU. Returns -infinity when every block is gated out (see
/// is_all_gated). Throws TooShort below one 400 ms block.
double lufs(const Audio& x, double sample_rate);

inline bool is_all_gated(double loudness) {
  return loudness == -std::numeric_limits<double>::infinity();
}

/// Biquad coefficients (b0, b1, b2, a1, a2), a0 normalised to 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// The two K-weighting stages (high shelf, then high pass) for a sample rate.
std::array<Biquad, 2> k_weighting(double sample_rate);

struct MetricReport {
  double mae = 0;
  double mse = 0;
  double esr_dc = 0;
  double multi_stft = 0;
  double lufs_target = 0;
  double lufs_render = 0;
  /// |lufs_target - lufs_render|; NaN when either side is all-gated.
  double lufs_diff = 0;

  nlohmann::json to_json() const;
};

inline constexpr const char* kMetricReportSchema = "s4drc.metric_report.v1";

MetricReport compare(const Audio& y, const Audio& yhat, double sample_rate);

}  // namespace s4drc::metrics
