#pragma once

// Real-time benchmark: stream synthetic audio through a processor in fixed
// buffers, time only the processing calls, and report the speed ratio
// (audio duration / processing wall time) per buffer size.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "s4drc/model.hpp"

namespace s4drc::bench {

inline const std::vector<Index> kDefaultBufferSizes{128, 256, 512, 1024, 2048, 4096};

struct BenchOptions {
  std::vector<Index> buffer_sizes = kDefaultBufferSizes;
  double audio_seconds = 60.0;
  double sample_rate = 44100.0;
  /// Leading buffers excluded from timing.
  Index warmup_buffers = 8;
  /// Repetitions per size; the median wall time is reported.
  int runs = 3;
  bool pin_to_core = true;
  std::uint64_t seed = 1;
};

struct BenchRow {
  Index buffer_size = 0;
  double audio_seconds = 0;
  double wall_seconds = 0;
  double speed_ratio = 0;
  double per_buffer_p50 = 0;
  double per_buffer_p99 = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;  // sorted by buffer_size
  std::string processor;

  std::string to_table() const;
  nlohmann::json to_json() const;
};

inline constexpr const char* kBenchReportSchema = "s4drc.bench_report.v1";

double speed_ratio(double audio_seconds, double wall_seconds);

using BufferProcessor = std::function<void(std::span<const float>, std::span<float>)>;
/// Returns a fresh processor (zero state) for each timed stream.
using ProcessorFactory = std::function<BufferProcessor()>;

/// Deterministic test signal: a sum of sines with 1/f amplitudes, peak < 1.
std::vector<float> synthetic_input(Index samples, double sample_rate, std::uint64_t seed);

/// Times `factory` processors. Throws InvalidArgument on an empty size list,
/// non-positive sizes, or audio_seconds < 10.
BenchReport run_bench(const ProcessorFactory& factory, const BenchOptions& options,
                      std::string processor_name = "custom");

/// Times StreamProcessor<float> over `weights` with state passing.
BenchReport run_bench(std::shared_ptr<const ModelWeights<float>> weights,
                      const BenchOptions& options, SsmMode mode = SsmMode::Fft);

/// Processor that does no work and busy-waits `seconds` per buffer.
ProcessorFactory fixed_delay_stub(double seconds);

/// Pins the calling thread to one core where supported. Returns false otherwise.
bool pin_current_thread();

}  // namespace s4drc::bench
