#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace melstream {

inline constexpr int kCanonicalSampleRate = 16000;

// Mono samples in [-1, 1] at a positive sample rate.
struct AudioBuffer {
  std::vector<float> samples;
  int sample_rate = kCanonicalSampleRate;
  // Samples hard-clipped to [-1, 1] while producing this buffer.
  std::size_t clipped_samples = 0;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// Decoded but not yet mixed down: one vector per channel.
struct PcmData {
  std::vector<std::vector<float>> channels;
  int sample_rate = 0;
  std::size_t clipped_samples = 0;

  std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
};

enum class WavEncoding { Pcm16, Pcm24, Pcm32, Float32 };

// Parses a RIFF/WAVE image (PCM 16/24/32-bit integer or 32-bit float,
// 1-8 channels). Float values outside [-1, 1] are clipped and counted.
PcmData decode_wav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_wav(const PcmData& pcm, WavEncoding encoding);

// Arithmetic mean of channels.
AudioBuffer mixdown(const PcmData& pcm);

// Windowed-sinc (Kaiser) band-limited resampling. Output length is
// round(len * target / source). Edges are handled by replicating the
// boundary samples so DC is preserved everywhere.
AudioBuffer resample(const AudioBuffer& buf, int target_rate);

// Decode, mix down, resample to target_rate.
AudioBuffer load_pcm(const std::filesystem::path& path, int target_rate = kCanonicalSampleRate);

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf,
               WavEncoding encoding = WavEncoding::Float32);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace melstream
