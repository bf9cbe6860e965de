#include "s4drc/reference_compressor.hpp"

#include <cmath>
#include <limits>

#include "s4drc/error.hpp"

namespace s4drc {

namespace {

double one_pole_coeff(double tau_ms, double sample_rate) {
  return std::exp(-1.0 / (tau_ms * sample_rate / 1000.0));
}

double to_db(double amplitude) {
  if (amplitude <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(amplitude);
}

}  // namespace

void DrcParams::validate() const {
  if (!(ratio >= 1.0)) throw Error(ErrorCode::InvalidArgument, "ratio must be >= 1");
  if (!(attack_ms > 0.0) || !(release_ms > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "attack and release must be positive");
  }
  if (!(knee_db >= 0.0)) throw Error(ErrorCode::InvalidArgument, "knee must be >= 0 dB");
  if (!std::isfinite(threshold_db) || !std::isfinite(makeup_db)) {
    throw Error(ErrorCode::InvalidArgument, "threshold and makeup must be finite");
  }
}

double static_gain_db(double level_db, const DrcParams& p) {
  const double over = level_db - p.threshold_db;
  if (p.knee_db > 0.0 && std::abs(2.0 * over) <= p.knee_db) {
    const double x = over + p.knee_db / 2.0;
    return (1.0 / p.ratio - 1.0) * x * x / (2.0 * p.knee_db);
  }
  if (over <= 0.0) return 0.0;
  return p.threshold_db + over / p.ratio - level_db;
}

Compressor::Compressor(const DrcParams& params, double sample_rate) : params_(params) {
  params_.validate();
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  attack_coeff_ = one_pole_coeff(params_.attack_ms, sample_rate);
  release_coeff_ = one_pole_coeff(params_.release_ms, sample_rate);
  makeup_ = std::pow(10.0, params_.makeup_db / 20.0);
}

double Compressor::process_sample(double x) {
  envelope_ = std::max(std::abs(x), release_coeff_ * envelope_);
  const double target = static_gain_db(to_db(envelope_), params_);
  const double coeff = target < gain_db_ ? attack_coeff_ : release_coeff_;
  gain_db_ = coeff * gain_db_ + (1.0 - coeff) * target;
  if (gain_db_ == 0.0) return x * makeup_;
  return x * std::pow(10.0, gain_db_ / 20.0) * makeup_;
}

void Compressor::process(const Eigen::Ref<const Eigen::VectorXd>& in,
                         Eigen::Ref<Eigen::VectorXd> out) {
  if (in.size() != out.size()) {
    throw Error(ErrorCode::DimensionMismatch, "compressor input and output lengths differ");
  }
  for (Index t = 0; t < in.size(); ++t) out(t) = process_sample(in(t));
}

void Compressor::reset() {
  envelope_ = 0.0;
  gain_db_ = 0.0;
}

Eigen::VectorXd compress(const Eigen::Ref<const Eigen::VectorXd>& x, const DrcParams& p,
                         double sample_rate) {
  Compressor comp(p, sample_rate);
  Eigen::VectorXd y(x.size());
  comp.process(x, y);
  return y;
}

}  // namespace s4drc
