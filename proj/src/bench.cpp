#include "s4drc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#if defined(__linux__)
#include <pthread.h>
#include <sched.h>
#endif

#include "s4drc/streaming.hpp"

namespace s4drc::bench {

namespace {

using Clock = std::chrono::steady_clock;

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

}  // namespace

double speed_ratio(double audio_seconds, double wall_seconds) {
  if (!(wall_seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "wall time must be positive");
  return audio_seconds / wall_seconds;
}

std::vector<float> synthetic_input(Index samples, double sample_rate, std::uint64_t seed) {
  constexpr int kPartials = 24;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> octave(std::log2(40.0), std::log2(12000.0));
  std::vector<double> freq(kPartials), amp(kPartials), ph(kPartials);
  double amp_sum = 0.0;
  for (int k = 0; k < kPartials; ++k) {
    freq[k] = std::exp2(octave(rng));
    amp[k] = 1.0 / std::sqrt(freq[k]);  // pink-ish: power ~ 1/f
    ph[k] = phase(rng);
    amp_sum += amp[k];
  }
  std::vector<float> out(static_cast<std::size_t>(samples));
  for (Index t = 0; t < samples; ++t) {
    double v = 0.0;
    for (int k = 0; k < kPartials; ++k) {
      v += amp[k] * std::sin(2.0 * M_PI * freq[k] * static_cast<double>(t) / sample_rate + ph[k]);
    }
    out[t] = static_cast<float>(0.9 * v / amp_sum);
  }
  return out;
}

bool pin_current_thread() {
#if defined(__linux__)
  const int cpu = sched_getcpu();
  if (cpu < 0) return false;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(cpu, &set);
  return pthread_setaffinity_np(pthread_self(), sizeof(set), &set) == 0;
#else
  return false;
#endif
}

BenchReport run_bench(const ProcessorFactory& factory, const BenchOptions& options,
                      std::string processor_name) {
  if (options.buffer_sizes.empty()) throw Error(ErrorCode::InvalidArgument, "no buffer sizes");
  if (options.audio_seconds < 10.0) {
    throw Error(ErrorCode::InvalidArgument, "audio_seconds must be at least 10 for stable timing");
  }
  if (options.runs < 1 || options.warmup_buffers < 0 || !(options.sample_rate > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "invalid bench options");
  }
  for (Index size : options.buffer_sizes) {
    if (size < 1) throw Error(ErrorCode::InvalidArgument, "buffer sizes must be positive");
  }
  if (options.pin_to_core) pin_current_thread();

  std::vector<Index> sizes = options.buffer_sizes;
  std::sort(sizes.begin(), sizes.end());

  BenchReport report;
  report.processor = std::move(processor_name);
  for (Index size : sizes) {
    const auto timed_buffers = static_cast<Index>(
        std::ceil(options.audio_seconds * options.sample_rate / static_cast<double>(size)));
    const Index total_buffers = timed_buffers + options.warmup_buffers;
    const std::vector<float> input = synthetic_input(total_buffers * size, options.sample_rate,
                                                     options.seed);
    std::vector<float> output(static_cast<std::size_t>(size));

    std::vector<double> run_walls;
    std::vector<double> per_buffer;
    for (int run = 0; run < options.runs; ++run) {
      BufferProcessor process = factory();
      double wall = 0.0;
      for (Index b = 0; b < total_buffers; ++b) {
        std::span<const float> in(input.data() + b * size, static_cast<std::size_t>(size));
        const auto start = Clock::now();
        process(in, output);
        const auto stop = Clock::now();
        if (b >= options.warmup_buffers) {
          const double dt = std::chrono::duration<double>(stop - start).count();
          wall += dt;
          per_buffer.push_back(dt);
        }
      }
      run_walls.push_back(wall);
    }

    BenchRow row;
    row.buffer_size = size;
    row.audio_seconds = static_cast<double>(timed_buffers * size) / options.sample_rate;
    row.wall_seconds = median(run_walls);
    row.speed_ratio = speed_ratio(row.audio_seconds, row.wall_seconds);
    row.per_buffer_p50 = percentile(per_buffer, 0.50);
    row.per_buffer_p99 = percentile(per_buffer, 0.99);
    report.rows.push_back(row);
  }
  return report;
}

BenchReport run_bench(std::shared_ptr<const ModelWeights<float>> weights,
                      const BenchOptions& options, SsmMode mode) {
  const std::string name = weights->config.name() + (mode == SsmMode::Fft ? " fft" : " recurrent");
  // Buffer size is unknown to the factory; the stream's scratch grows on the first (warm-up) call.
  ProcessorFactory factory = [weights, mode]() -> BufferProcessor {
    auto stream = std::make_shared<StreamProcessor<float>>(weights, ControlVector{}, mode, 1);
    return [stream](std::span<const float> in, std::span<float> out) {
      const auto n = static_cast<Index>(in.size());
      stream->process_buffer(Eigen::Map<const Vector<float>>(in.data(), n),
                             Eigen::Map<Vector<float>>(out.data(), n));
    };
  };
  return run_bench(factory, options, name);
}

ProcessorFactory fixed_delay_stub(double seconds) {
  return [seconds]() -> BufferProcessor {
    return [seconds](std::span<const float>, std::span<float>) {
      const auto deadline =
          Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
      while (Clock::now() < deadline) {
      }
    };
  };
}

std::string BenchReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-8s %10s %10s %10s %12s %12s\n", "buffer", "audio_s",
                "wall_s", "ratio", "p50_ms", "p99_ms");
  os << "processor: " << processor << '\n' << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-8ld %10.3f %10.4f %10.2f %12.4f %12.4f\n",
                  static_cast<long>(r.buffer_size), r.audio_seconds, r.wall_seconds, r.speed_ratio,
                  r.per_buffer_p50 * 1e3, r.per_buffer_p99 * 1e3);
    os << line;
  }
  return os.str();
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"buffer_size", r.buffer_size},
                         {"audio_seconds", r.audio_seconds},
                         {"wall_seconds", r.wall_seconds},
                         {"speed_ratio", r.speed_ratio},
                         {"per_buffer_p50", r.per_buffer_p50},
                         {"per_buffer_p99", r.per_buffer_p99}});
  }
  return {{"schema", kBenchReportSchema}, {"processor", processor}, {"rows", rows_json}};
}

}  // namespace s4drc::bench
