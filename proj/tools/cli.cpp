#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "s4drc/audio_io.hpp"
#include "s4drc/bench.hpp"
#include "s4drc/diagnostics.hpp"
#include "s4drc/error.hpp"
#include "s4drc/metrics.hpp"
#include "s4drc/reference_compressor.hpp"
#include "s4drc/streaming.hpp"
#include "s4drc/weights_io.hpp"

namespace s4drc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ProcessArgs {
  std::string weights, input, output;
  double peak_reduction = 0.5;
  int limit = 0;
  Index buffer = 4096;
  bool per_sample = false;
  std::string mode = "fft";
};

struct MetricsArgs {
  std::string reference, render;
  bool json = false;
};

struct BenchArgs {
  std::string weights;
  std::vector<Index> sizes = bench::kDefaultBufferSizes;
  double seconds = 60.0;
  int runs = 3;
  std::string mode = "fft";
  bool json = false;
  bool stub = false;
  double stub_ms = 1.0;
};

struct InitArgs {
  std::string config = "32,4,4";
  std::uint64_t seed = 0;
  std::string out;
  bool passthrough = false;
};

struct SynthArgs {
  double seconds = 10.0;
  std::uint64_t seed = 0;
  DrcParams drc;
  std::string out_dir;
};

struct InspectArgs {
  std::string weights;
  bool json = false;
};

SsmMode parse_mode(const std::string& s) { return s == "recurrent" ? SsmMode::Recurrent : SsmMode::Fft; }

ModelConfig parse_config(const std::string& spec) {
  std::vector<Index> v;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stol(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument, "--config expects integers c,N,blocks; got '" + spec + "'");
    }
  }
  if (v.size() != 3) throw Error(ErrorCode::InvalidArgument, "--config expects c,N,blocks");
  ModelConfig cfg;
  cfg.channels = v[0];
  cfg.ssm_order = v[1];
  cfg.num_blocks = v[2];
  cfg.validate();
  return cfg;
}

int cmd_process(const ProcessArgs& a, std::ostream& out) {
  const ControlVector ctrl{a.peak_reduction, static_cast<double>(a.limit)};
  ctrl.validate();
  if (a.buffer < 1) throw Error(ErrorCode::InvalidArgument, "--buffer must be positive");
  auto weights = std::make_shared<const ModelWeights<float>>(weights_io::load_file(a.weights));
  const audio::WavData in = audio::read_wav_file(a.input);

  const Index n = in.samples.size();
  Eigen::VectorXf y(n);
  auto stream = open_stream(weights, ctrl, parse_mode(a.mode), a.per_sample ? 1 : a.buffer);
  if (a.per_sample) {
    for (Index t = 0; t < n; ++t) y(t) = stream.process_sample(in.samples(t));
  } else {
    for (Index t = 0; t < n; t += a.buffer) {
      const Index len = std::min(a.buffer, n - t);
      stream.process_buffer(in.samples.segment(t, len), y.segment(t, len));
    }
  }
  audio::write_wav_file(a.output, y, in.sample_rate);
  out << "rendered " << n << " samples with " << weights->config.name() << " ("
      << (a.per_sample ? "per-sample" : "buffer " + std::to_string(a.buffer)) << ") -> " << a.output
      << '\n';
  return kOk;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const audio::WavData ref = audio::read_wav_file(a.reference);
  const audio::WavData ren = audio::read_wav_file(a.render);
  if (ref.sample_rate != ren.sample_rate) {
    throw Error(ErrorCode::InvalidArgument, "sample rates differ: " + std::to_string(ref.sample_rate) +
                                                " vs " + std::to_string(ren.sample_rate));
  }
  const Eigen::VectorXd y = ref.samples.cast<double>();
  const Eigen::VectorXd yhat = ren.samples.cast<double>();
  const metrics::MetricReport r = metrics::compare(y, yhat, ref.sample_rate);
  if (a.json) {
    out << r.to_json().dump(2) << '\n';
    return kOk;
  }
  const std::pair<const char*, double> rows[] = {
      {"mae", r.mae},           {"mse", r.mse},
      {"esr_dc", r.esr_dc},     {"multi_stft", r.multi_stft},
      {"lufs_target", r.lufs_target}, {"lufs_render", r.lufs_render},
      {"lufs_diff", r.lufs_diff}};
  for (const auto& [name, v] : rows) {
    char line[64];
    std::snprintf(line, sizeof(line), "%-12s %s\n", name, format_value(v).c_str());
    out << line;
  }
  return kOk;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  bench::BenchOptions opts;
  opts.buffer_sizes = a.sizes;
  opts.audio_seconds = a.seconds;
  opts.runs = a.runs;
  bench::BenchReport report;
  if (a.stub) {
    report = bench::run_bench(bench::fixed_delay_stub(a.stub_ms * 1e-3), opts,
                              "stub " + format_value(a.stub_ms) + " ms");
  } else {
    if (a.weights.empty()) throw Error(ErrorCode::InvalidArgument, "--weights is required unless --stub");
    auto weights = std::make_shared<const ModelWeights<float>>(weights_io::load_file(a.weights));
    report = bench::run_bench(weights, opts, parse_mode(a.mode));
  }
  out << (a.json ? report.to_json().dump(2) + "\n" : report.to_table());
  return kOk;
}

int cmd_init(const InitArgs& a, std::ostream& out) {
  const ModelConfig cfg = parse_config(a.config);
  const ModelWeights<float> w =
      a.passthrough ? make_passthrough_weights<float>(cfg) : make_random_weights<float>(cfg, a.seed);
  weights_io::save_file(w, a.out);
  out << "wrote " << cfg.name() << (a.passthrough ? " passthrough" : " seed " + std::to_string(a.seed))
      << " (" << weights_io::count_params(cfg) << " parameters) -> " << a.out << '\n';
  return kOk;
}

/// Tone bursts at levels from -30 to -3 dBFS, so most material crosses the
/// default threshold. Deterministic per seed.
Eigen::VectorXd synth_input(Index n, double fs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level_db(-30.0, -3.0);
  std::uniform_real_distribution<double> seg_seconds(0.25, 1.0);
  std::uniform_real_distribution<double> log_f0(std::log(80.0), std::log(800.0));
  std::normal_distribution<double> noise(0.0, 1.0);

  Eigen::VectorXd x(n);
  const double smooth = std::exp(-1.0 / (0.02 * fs));
  double amp = 0.0, phase = 0.0;
  Index t = 0;
  while (t < n) {
    const Index len = std::min<Index>(n - t, static_cast<Index>(seg_seconds(rng) * fs));
    const double target = std::pow(10.0, level_db(rng) / 20.0);
    const double f0 = std::exp(log_f0(rng));
    for (Index k = 0; k < len; ++k, ++t) {
      amp = smooth * amp + (1.0 - smooth) * target;
      phase += 2.0 * M_PI * f0 / fs;
      const double tone = 0.6 * std::sin(phase) + 0.25 * std::sin(2.0 * phase) + 0.1 * std::sin(3.0 * phase);
      x(t) = amp * (tone + 0.05 * noise(rng));
    }
  }
  return x;
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  a.drc.validate();
  if (!(a.seconds > 0.0)) throw Error(ErrorCode::InvalidArgument, "--seconds must be positive");
  const double fs = audio::kModelSampleRate;
  const auto n = static_cast<Index>(std::llround(a.seconds * fs));
  const Eigen::VectorXd x = synth_input(n, fs, a.seed);
  const Eigen::VectorXd y = compress(x, a.drc, fs);

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + a.out_dir + "': " + ec.message());
  const fs::path dir(a.out_dir);
  audio::write_wav_file(dir / "input.wav", x.cast<float>(), audio::kModelSampleRate);
  audio::write_wav_file(dir / "target.wav", y.cast<float>(), audio::kModelSampleRate);
  out << "wrote " << n << " samples to " << (dir / "input.wav").string() << " and "
      << (dir / "target.wav").string() << '\n';
  return kOk;
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  std::ifstream f(a.weights, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + a.weights + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const weights_io::Container container = weights_io::read_container(bytes);
  const ModelWeights<float> w = weights_io::from_container(container);
  const std::int64_t params = weights_io::count_params(w);

  if (a.json) {
    json tensors = json::array();
    for (const auto& t : container.tensors) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    out << json{{"name", w.config.name()},
                {"config", weights_io::config_to_json(w.config)},
                {"params", params},
                {"file_bytes", bytes.size()},
                {"tensors", tensors}}
               .dump(2)
        << '\n';
    return kOk;
  }
  out << "name        " << w.config.name() << '\n'
      << "blocks      " << w.config.num_blocks << '\n'
      << "channels    " << w.config.channels << '\n'
      << "ssm_order   " << w.config.ssm_order << '\n'
      << "params      " << params << '\n'
      << "tensors     " << container.tensors.size() << '\n'
      << "file_bytes  " << bytes.size() << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"S4D compressor inference engine"};
  app.require_subcommand(1);
  const auto modes = CLI::IsMember({"fft", "recurrent"});

  ProcessArgs pa;
  auto* process = app.add_subcommand("process", "Render a mono WAV through a model");
  process->add_option("--weights", pa.weights, "Weight container")->required();
  process->add_option("--input", pa.input, "Input WAV")->required();
  process->add_option("--output", pa.output, "Output WAV (32-bit float)")->required();
  process->add_option("--peak-reduction", pa.peak_reduction, "Peak reduction in [0, 1] (panel value x 0.01)");
  process->add_option("--limit", pa.limit, "Compress (0) or limit (1)");
  process->add_option("--buffer", pa.buffer, "Buffer size in samples")->capture_default_str();
  process->add_flag("--per-sample", pa.per_sample, "Step one sample at a time");
  process->add_option("--mode", pa.mode, "SSM evaluation in buffered mode")->check(modes)->capture_default_str();

  MetricsArgs ma;
  auto* metrics_cmd = app.add_subcommand("metrics", "Compare a render against a reference");
  metrics_cmd->add_option("--reference", ma.reference, "Reference (target) WAV")->required();
  metrics_cmd->add_option("--render", ma.render, "Rendered WAV")->required();
  metrics_cmd->add_flag("--json", ma.json, "Emit JSON");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Real-time speed ratio per buffer size");
  bench_cmd->add_option("--weights", ba.weights, "Weight container");
  bench_cmd->add_option("--sizes", ba.sizes, "Buffer sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--seconds", ba.seconds, "Audio seconds per size (>= 10)")->capture_default_str();
  bench_cmd->add_option("--runs", ba.runs, "Runs per size; the median is reported")->capture_default_str();
  bench_cmd->add_option("--mode", ba.mode, "SSM evaluation")->check(modes)->capture_default_str();
  bench_cmd->add_flag("--json", ba.json, "Emit JSON");
  bench_cmd->add_flag("--stub", ba.stub, "Time a fixed-delay stub instead of a model");
  bench_cmd->add_option("--stub-ms", ba.stub_ms, "Stub delay per buffer")->capture_default_str();

  InitArgs ia;
  auto* init = app.add_subcommand("init", "Write random or passthrough weights");
  init->add_option("--config", ia.config, "channels,order,blocks")->capture_default_str();
  init->add_option("--seed", ia.seed, "Random seed")->capture_default_str();
  init->add_option("--out", ia.out, "Output container")->required();
  init->add_flag("--passthrough", ia.passthrough, "Weights computing y = tanh(u)");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Write an input/target pair via the reference compressor");
  synth->add_option("--seconds", sa.seconds)->capture_default_str();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--threshold", sa.drc.threshold_db, "dBFS")->capture_default_str();
  synth->add_option("--ratio", sa.drc.ratio)->capture_default_str();
  synth->add_option("--attack", sa.drc.attack_ms, "ms")->capture_default_str();
  synth->add_option("--release", sa.drc.release_ms, "ms")->capture_default_str();
  synth->add_option("--knee", sa.drc.knee_db, "dB")->capture_default_str();
  synth->add_option("--makeup", sa.drc.makeup_db, "dB")->capture_default_str();
  synth->add_option("--out-dir", sa.out_dir)->required();

  InspectArgs na;
  auto* inspect = app.add_subcommand("inspect", "Print a container's config and parameter count");
  inspect->add_option("--weights", na.weights, "Weight container")->required();
  inspect->add_flag("--json", na.json, "Emit JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  WarningHandler previous = set_warning_handler([&err](std::string_view m) { err << "warning: " << m << '\n'; });
  struct Restore {
    WarningHandler& h;
    ~Restore() { set_warning_handler(std::move(h)); }
  } restore{previous};

  try {
    if (*process) return cmd_process(pa, out);
    if (*metrics_cmd) return cmd_metrics(ma, out);
    if (*bench_cmd) return cmd_bench(ba, out);
    if (*init) return cmd_init(ia, out);
    if (*synth) return cmd_synth(sa, out);
    if (*inspect) return cmd_inspect(na, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace s4drc::cli
