#include "s4drc/audio_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "s4drc/diagnostics.hpp"
#include "s4drc/error.hpp"

namespace s4drc::audio {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

struct Format {
  std::uint16_t tag;
  std::uint16_t channels;
  std::uint32_t rate;
  std::uint16_t bits;
};

}  // namespace

WavData read_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::Corrupt, "not a RIFF/WAVE file");
  }

  std::optional<Format> fmt;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) throw Error(ErrorCode::Corrupt, "chunk runs past end of file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw Error(ErrorCode::Corrupt, "fmt chunk too small");
      const std::uint8_t* f = bytes.data() + body;
      fmt = Format{le16(f), le16(f + 2), le32(f + 4), le16(f + 14)};
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.subspan(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1u);  // chunks are word aligned
  }
  if (!fmt) throw Error(ErrorCode::Corrupt, "missing fmt chunk");
  if (!have_data) throw Error(ErrorCode::Corrupt, "missing data chunk");

  const bool pcm = fmt->tag == kFormatPcm && (fmt->bits == 16 || fmt->bits == 24 || fmt->bits == 32);
  const bool ieee = fmt->tag == kFormatFloat && fmt->bits == 32;
  if (!pcm && !ieee) {
    throw Error(ErrorCode::UnsupportedFormat, "format tag " + std::to_string(fmt->tag) + " with " +
                                                  std::to_string(fmt->bits) + " bits");
  }
  if (fmt->channels != 1) {
    throw Error(ErrorCode::MultichannelInput, std::to_string(fmt->channels) + " channels; mono only");
  }
  if (fmt->rate == 0) throw Error(ErrorCode::Corrupt, "sample rate is zero");

  const std::size_t width = fmt->bits / 8;
  if (data.size() % width != 0) throw Error(ErrorCode::Corrupt, "partial sample in data chunk");
  const auto count = static_cast<Eigen::Index>(data.size() / width);

  WavData out;
  out.sample_rate = fmt->rate;
  out.samples.resize(count);
  const double scale = 1.0 / static_cast<double>(1ull << (fmt->bits - 1));
  for (Eigen::Index i = 0; i < count; ++i) {
    const std::uint8_t* p = data.data() + static_cast<std::size_t>(i) * width;
    if (ieee) {
      out.samples(i) = std::bit_cast<float>(le32(p));
    } else if (fmt->bits == 16) {
      out.samples(i) = static_cast<float>(static_cast<std::int16_t>(le16(p)) * scale);
    } else if (fmt->bits == 24) {
      std::int32_t v = static_cast<std::int32_t>(p[0] | p[1] << 8 | p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      out.samples(i) = static_cast<float>(v * scale);
    } else {
      out.samples(i) = static_cast<float>(static_cast<std::int32_t>(le32(p)) * scale);
    }
  }
  if (fmt->rate != kModelSampleRate) {
    warn("sample rate " + std::to_string(fmt->rate) +
         " Hz; the model was trained at 44100 Hz and does not resample");
  }
  return out;
}

std::vector<std::uint8_t> write_wav(const Eigen::Ref<const Eigen::VectorXf>& samples,
                                    std::uint32_t sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 4);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, kFormatFloat);
  put16(out, 1);
  put32(out, sample_rate);
  put32(out, sample_rate * 4);
  put16(out, 4);
  put16(out, 32);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (Eigen::Index i = 0; i < samples.size(); ++i) put32(out, std::bit_cast<std::uint32_t>(samples(i)));
  return out;
}

WavData read_wav_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return read_wav(bytes);
}

void write_wav_file(const std::filesystem::path& path,
                    const Eigen::Ref<const Eigen::VectorXf>& samples, std::uint32_t sample_rate) {
  const auto bytes = write_wav(samples, sample_rate);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

}  // namespace s4drc::audio
