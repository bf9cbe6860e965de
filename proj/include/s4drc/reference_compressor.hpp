#pragma once

// Classical feedforward compressor used as a test oracle and to synthesise
// input/target pairs. It is not an LA-2A emulation.

#include <Eigen/Core>

#include "s4drc/types.hpp"

namespace s4drc {

struct DrcParams {
  double threshold_db = -20.0;
  double ratio = 4.0;
  double attack_ms = 10.0;
  double release_ms = 300.0;
  double makeup_db = 0.0;
  double knee_db = 6.0;

  /// Throws InvalidArgument when ratio < 1, times are not positive or knee < 0.
  void validate() const;
};

/// Static gain curve in dB with a quadratic soft knee of width knee_db.
double static_gain_db(double level_db, const DrcParams& p);

/// Stateful compressor. Signal chain per sample:
///   peak detector (instant attack, one-pole release)
///   -> static_gain_db
///   -> one-pole gain smoothing in dB (attack coefficient while gain reduction
///      grows, release coefficient while it recovers)
///   -> apply gain and makeup.
/// Coefficients are exp(-1 / (tau_ms * fs / 1000)).
class Compressor {
 public:
  Compressor(const DrcParams& params, double sample_rate);

  double process_sample(double x);
  /// `out` may alias `in`.
  void process(const Eigen::Ref<const Eigen::VectorXd>& in, Eigen::Ref<Eigen::VectorXd> out);
  void reset();

  double envelope() const { return envelope_; }
  /// Current smoothed gain in dB, excluding makeup.
  double gain_db() const { return gain_db_; }
  const DrcParams& params() const { return params_; }

 private:
  DrcParams params_;
  double attack_coeff_;
  double release_coeff_;
  double makeup_;
  double envelope_ = 0.0;
  double gain_db_ = 0.0;
};

/// One-shot compression from a fresh state.
Eigen::VectorXd compress(const Eigen::Ref<const Eigen::VectorXd>& x, const DrcParams& p,
                         double sample_rate);

}  // namespace s4drc
