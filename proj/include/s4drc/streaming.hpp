#pragma once

#include <cstdint>
#include <memory>

#include "s4drc/error.hpp"
#include "s4drc/model.hpp"

namespace s4drc {

/// Real-time stream over a fixed control setting.
///
/// Output is identical (up to rounding) to one-shot model_forward over the
/// concatenation of all buffers, for any sequence of buffer lengths. Changing
/// controls requires a new stream. After the first call at a given length (or
/// a matching buffer_size_hint) process_buffer performs no heap allocation,
/// takes no locks and does no I/O.
///
/// A non-finite output poisons the stream: every later call throws NonFinite
/// until reset().
template <typename Scalar>
class StreamProcessor {
 public:
  StreamProcessor(std::shared_ptr<const ModelWeights<Scalar>> weights, const ControlVector& ctrl,
                  SsmMode mode = SsmMode::Fft, Index buffer_size_hint = 4096)
      : engine_(std::move(weights), ctrl, mode),
        controls_(ctrl),
        state_(ModelState::zeros(engine_.config())) {
    engine_.reserve(std::max<Index>(buffer_size_hint, 1));
  }

  void process_buffer(const Eigen::Ref<const Vector<Scalar>>& in, Eigen::Ref<Vector<Scalar>> out) {
    if (poisoned_) throw Error(ErrorCode::NonFinite, "stream poisoned by non-finite output; reset() it");
    try {
      out_of_range_ += engine_.run(in, out, state_);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NonFinite) poisoned_ = true;
      throw;
    }
  }

  Vector<Scalar> process_buffer(const Eigen::Ref<const Vector<Scalar>>& in) {
    Vector<Scalar> out(in.size());
    process_buffer(in, out);
    return out;
  }

  /// Single-sample path; runs the SSMs through the recurrence, never the FFT.
  Scalar process_sample(Scalar u) {
    Scalar y = 0;
    process_buffer(Eigen::Map<const Vector<Scalar>>(&u, 1), Eigen::Map<Vector<Scalar>>(&y, 1));
    return y;
  }

  void reset() {
    state_.reset();
    poisoned_ = false;
    out_of_range_ = 0;
  }

  const ModelState& state() const { return state_; }
  std::uint64_t position() const { return state_.blocks.empty() ? 0 : state_.blocks.front().position; }
  bool poisoned() const { return poisoned_; }
  /// Input samples seen outside [-1, 1] since construction or reset.
  Index out_of_range_count() const { return out_of_range_; }
  const ControlVector& controls() const { return controls_; }
  const Vector<Scalar>& embedding() const { return engine_.embedding(); }
  const ModelConfig& config() const { return engine_.config(); }

 private:
  ModelEngine<Scalar> engine_;
  ControlVector controls_;
  ModelState state_;
  bool poisoned_ = false;
  Index out_of_range_ = 0;
};

template <typename Scalar>
StreamProcessor<Scalar> open_stream(std::shared_ptr<const ModelWeights<Scalar>> weights,
                                    const ControlVector& ctrl, SsmMode mode = SsmMode::Fft,
                                    Index buffer_size_hint = 4096) {
  return StreamProcessor<Scalar>(std::move(weights), ctrl, mode, buffer_size_hint);
}

}  // namespace s4drc
