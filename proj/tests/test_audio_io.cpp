#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <limits>

#include "s4drc/audio_io.hpp"
#include "support.hpp"

using namespace s4drc;
using namespace s4drc::audio;
using s4drc::test::error_code;

namespace {

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void tag(std::vector<std::uint8_t>& out, const char* t) { out.insert(out.end(), t, t + 4); }

/// Hand-assembled WAV with arbitrary format fields and raw data bytes.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                    std::uint16_t bits, const std::vector<std::uint8_t>& data,
                                    bool with_list_chunk = false) {
  std::vector<std::uint8_t> body;
  tag(body, "WAVE");
  if (with_list_chunk) {
    tag(body, "LIST");
    put(body, 3, 4);
    body.insert(body.end(), {'a', 'b', 'c', 0});  // odd size plus pad byte
  }
  tag(body, "fmt ");
  put(body, 16, 4);
  put(body, format, 2);
  put(body, channels, 2);
  put(body, rate, 4);
  put(body, rate * channels * bits / 8, 4);
  put(body, channels * bits / 8, 2);
  put(body, bits, 2);
  tag(body, "data");
  put(body, data.size(), 4);
  body.insert(body.end(), data.begin(), data.end());
  std::vector<std::uint8_t> out;
  tag(out, "RIFF");
  put(out, body.size(), 4);
  out.insert(out.end(), body.begin(), body.end());
  return out;
}

}  // namespace

TEST_CASE("float32 round trip is bit-exact") {
  Eigen::VectorXf x = s4drc::test::uniform_noise<float>(1001, 1, 1.5);
  x(0) = -0.0f;
  x(1) = std::numeric_limits<float>::denorm_min();
  x(2) = 1.0f;
  const WavData back = read_wav(write_wav(x, 44100));
  CHECK(back.sample_rate == 44100);
  REQUIRE(back.samples.size() == x.size());
  CHECK(std::memcmp(back.samples.data(), x.data(), sizeof(float) * x.size()) == 0);
}

TEST_CASE("writer emits the canonical 44-byte header") {
  Eigen::VectorXf x(2);
  x << 0.5f, -0.25f;
  const auto b = write_wav(x, 44100);
  REQUIRE(b.size() == 44 + 8);
  CHECK(std::memcmp(b.data(), "RIFF", 4) == 0);
  CHECK(b[4] == 44);  // 36 + 8
  CHECK(std::memcmp(b.data() + 8, "WAVEfmt ", 8) == 0);
  CHECK(b[16] == 16);
  CHECK(b[20] == 3);  // IEEE float
  CHECK(b[22] == 1);  // mono
  CHECK((b[24] | b[25] << 8 | b[26] << 16) == 44100);
  CHECK(b[34] == 32);
  CHECK(std::memcmp(b.data() + 36, "data", 4) == 0);
  CHECK(b[40] == 8);
}

TEST_CASE("PCM decoding normalises by 2^(bits-1)") {
  SUBCASE("16-bit") {
    std::vector<std::uint8_t> d;
    for (std::uint64_t v : {0x7FFFull, 0x8000ull, 0x0000ull, 0x4000ull}) put(d, v, 2);
    const WavData w = read_wav(wav_bytes(1, 1, 44100, 16, d));
    REQUIRE(w.samples.size() == 4);
    CHECK(w.samples(0) == 32767.0f / 32768.0f);
    CHECK(w.samples(1) == -1.0f);
    CHECK(w.samples(2) == 0.0f);
    CHECK(w.samples(3) == 0.5f);
  }
  SUBCASE("24-bit") {
    std::vector<std::uint8_t> d;
    for (std::uint64_t v : {0x7FFFFFull, 0x800000ull, 0xFFFFFFull, 0x200000ull}) put(d, v, 3);
    const WavData w = read_wav(wav_bytes(1, 1, 44100, 24, d));
    REQUIRE(w.samples.size() == 4);
    CHECK(w.samples(0) == static_cast<float>(8388607.0 / 8388608.0));
    CHECK(w.samples(1) == -1.0f);
    CHECK(w.samples(2) == static_cast<float>(-1.0 / 8388608.0));
    CHECK(w.samples(3) == 0.25f);
  }
  SUBCASE("32-bit") {
    std::vector<std::uint8_t> d;
    put(d, 0x80000000ull, 4);
    put(d, 0x40000000ull, 4);
    const WavData w = read_wav(wav_bytes(1, 1, 44100, 32, d));
    CHECK(w.samples(0) == -1.0f);
    CHECK(w.samples(1) == 0.5f);
  }
}

TEST_CASE("unknown chunks are skipped") {
  std::vector<std::uint8_t> d;
  put(d, 0x4000, 2);
  const WavData w = read_wav(wav_bytes(1, 1, 44100, 16, d, true));
  REQUIRE(w.samples.size() == 1);
  CHECK(w.samples(0) == 0.5f);
}

TEST_CASE("empty data chunk is a valid empty signal") {
  const WavData w = read_wav(write_wav(Eigen::VectorXf(0), 44100));
  CHECK(w.samples.size() == 0);
}

TEST_CASE("rejections") {
  const std::vector<std::uint8_t> two_samples = {0, 0, 0, 0};
  CHECK(error_code([&] { read_wav(wav_bytes(1, 2, 44100, 16, two_samples)); }) == ErrorCode::MultichannelInput);
  CHECK(error_code([&] { read_wav(wav_bytes(1, 1, 44100, 8, two_samples)); }) == ErrorCode::UnsupportedFormat);
  CHECK(error_code([&] { read_wav(wav_bytes(3, 1, 44100, 64, std::vector<std::uint8_t>(8))); }) ==
        ErrorCode::UnsupportedFormat);
  CHECK(error_code([&] { read_wav(wav_bytes(0xFFFE, 1, 44100, 16, two_samples)); }) ==
        ErrorCode::UnsupportedFormat);
  CHECK(error_code([&] { read_wav(wav_bytes(1, 1, 44100, 24, two_samples)); }) == ErrorCode::Corrupt);
  CHECK(error_code([&] { read_wav(wav_bytes(1, 1, 0, 16, two_samples)); }) == ErrorCode::Corrupt);

  const std::vector<std::uint8_t> garbage = {'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'};
  CHECK(error_code([&] { read_wav(garbage); }) == ErrorCode::Corrupt);
  CHECK(error_code([&] { read_wav(std::vector<std::uint8_t>{}); }) == ErrorCode::Corrupt);

  auto truncated = write_wav(Eigen::VectorXf::Ones(10), 44100);
  truncated.resize(truncated.size() - 3);
  CHECK(error_code([&] { read_wav(truncated); }) == ErrorCode::Corrupt);

  auto no_fmt = write_wav(Eigen::VectorXf::Ones(1), 44100);
  std::memcpy(no_fmt.data() + 12, "junk", 4);
  CHECK(error_code([&] { read_wav(no_fmt); }) == ErrorCode::Corrupt);
}

TEST_CASE("truncation fuzz never escapes as anything but s4drc::Error") {
  const auto full = wav_bytes(1, 1, 44100, 24, std::vector<std::uint8_t>(30, 0x11), true);
  for (std::size_t n = 0; n < full.size(); ++n) {
    std::vector<std::uint8_t> cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n));
    try {
      read_wav(cut);
    } catch (const Error&) {
    }
  }
}

TEST_CASE("non-44.1 kHz input warns and keeps the rate") {
  s4drc::test::CapturedWarnings warnings;
  const WavData w = read_wav(write_wav(Eigen::VectorXf::Zero(4), 48000));
  CHECK(w.sample_rate == 48000);
  REQUIRE(warnings.messages.size() == 1);
  CHECK(warnings.messages[0].find("48000") != std::string::npos);

  s4drc::test::CapturedWarnings quiet;
  read_wav(write_wav(Eigen::VectorXf::Zero(4), 44100));
  CHECK(quiet.messages.empty());
}

TEST_CASE("file helpers") {
  const auto path = std::filesystem::temp_directory_path() / "s4drc_test_audio_io.wav";
  Eigen::VectorXf x = s4drc::test::uniform_noise<float>(300, 9, 0.9);
  write_wav_file(path, x, 44100);
  CHECK(read_wav_file(path).samples == x);
  std::filesystem::remove(path);
  CHECK(error_code([&] { read_wav_file(path); }) == ErrorCode::Io);
  CHECK(error_code([] { write_wav_file("/nonexistent-dir/x.wav", Eigen::VectorXf(1), 44100); }) ==
        ErrorCode::Io);
}
