#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace s4drc::audio {

inline constexpr std::uint32_t kModelSampleRate = 44100;

struct WavData {
  Eigen::VectorXf samples;
  std::uint32_t sample_rate = kModelSampleRate;
};

/// Mono RIFF/WAVE: PCM 16/24/32-bit (normalised by 2^(bits-1)) or 32-bit
/// IEEE float. Unknown chunks are skipped. Warns when the rate is not 44.1 kHz.
/// Throws UnsupportedFormat, MultichannelInput or Corrupt.
WavData read_wav(std::span<const std::uint8_t> bytes);

/// 32-bit float mono WAV with a 44-byte header (RIFF, fmt chunk of 16 bytes
/// with format tag 3, data chunk).
std::vector<std::uint8_t> write_wav(const Eigen::Ref<const Eigen::VectorXf>& samples,
                                    std::uint32_t sample_rate);

WavData read_wav_file(const std::filesystem::path& path);
void write_wav_file(const std::filesystem::path& path,
                    const Eigen::Ref<const Eigen::VectorXf>& samples, std::uint32_t sample_rate);

}  // namespace s4drc::audio
