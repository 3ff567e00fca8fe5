#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "melstream/audio_io.hpp"
#include "melstream/fft.hpp"

namespace melstream {

enum class Window { Hann, Hamming, BlackmanHarris, Rectangular };
enum class MelScale { Htk, Slaney };
enum class FilterNorm { None, Area, BandWidth };
enum class SpectrumType { Magnitude, Power };

// Lower clamp applied before natural-log and log10 compression.
inline constexpr double kLogFloor = 1e-10;

struct Compression {
  enum class Kind { None, NaturalLog, Log10, ShiftedLog };
  Kind kind = Kind::None;
  // Only used by ShiftedLog: x -> log10(1 + scale * x).
  double scale = 1.0;

  bool operator==(const Compression&) const = default;
};

struct MelConfig {
  int frame_size = 512;
  int hop_size = 256;
  Window window = Window::Hann;
  int fft_size = 512;
  int n_mels = 96;
  double f_min = 0.0;
  double f_max = 8000.0;
  MelScale mel_scale = MelScale::Htk;
  FilterNorm filter_norm = FilterNorm::None;
  SpectrumType spectrum_type = SpectrumType::Power;
  Compression compression{Compression::Kind::ShiftedLog, 10000.0};

  int n_bins() const { return fft_size / 2 + 1; }

  bool operator==(const MelConfig&) const = default;
};

// Throws InvalidConfig. Filter coverage is checked separately when the
// filterbank is built (EmptyFilter).
void validate(const MelConfig& config, int sample_rate);

// Named front ends. Band counts match the well-known models of the same
// name; framing and scaling details are approximations.
struct Preset {
  std::string_view name;
  MelConfig config;
  int sample_rate;
};

std::span<const Preset> presets();
const Preset& find_preset(std::string_view name);

double hz_to_mel(double hz, MelScale scale);
double mel_to_hz(double mel, MelScale scale);

// Periodic (FFT-style) windows.
std::vector<double> make_window(Window window, int size);

std::string to_string(Window w);
std::string to_string(MelScale s);
std::string to_string(FilterNorm n);
std::string to_string(SpectrumType t);
std::string to_string(const Compression& c);

// floor((len - frame_size) / hop_size) + 1; SignalTooShort if len < frame_size.
std::size_t frame_count(std::size_t len, int frame_size, int hop_size);

std::vector<std::vector<float>> frame_signal(const AudioBuffer& buf, int frame_size, int hop_size);

// Windowed, zero-padded to fft_size, fft_size/2 + 1 bins of |X|^2 or |X|.
std::vector<double> power_spectrum(std::span<const float> frame, Window window, int fft_size,
                                   SpectrumType type = SpectrumType::Power);

class MelFilterbank {
 public:
  MelFilterbank(const MelConfig& config, int sample_rate);

  int n_mels() const { return n_mels_; }
  int n_bins() const { return n_bins_; }

  // Weight of filter m at FFT bin k.
  float weight(int m, int k) const { return weights_[static_cast<std::size_t>(m) * n_bins_ + k]; }

  // Nonzero support [first, last) of filter m.
  std::pair<int, int> support(int m) const { return support_[static_cast<std::size_t>(m)]; }

  std::span<const float> row(int m) const {
    return {weights_.data() + static_cast<std::size_t>(m) * n_bins_, static_cast<std::size_t>(n_bins_)};
  }

  // out[m] = sum_k weight(m, k) * spectrum[k]
  void apply(std::span<const float> spectrum, std::span<float> out) const;

 private:
  int n_mels_;
  int n_bins_;
  std::vector<float> weights_;
  std::vector<std::pair<int, int>> support_;
};

inline MelFilterbank mel_filterbank(const MelConfig& config, int sample_rate) {
  return MelFilterbank(config, sample_rate);
}

float compress(float value, const Compression& c);

// Per-frame mel computation with reusable scratch. Not thread-safe; use one
// extractor per thread.
class MelExtractor {
 public:
  MelExtractor(const MelConfig& config, int sample_rate);

  const MelConfig& config() const { return config_; }
  int sample_rate() const { return sample_rate_; }
  const MelFilterbank& filterbank() const { return filterbank_; }

  // frame.size() == frame_size; out.size() == n_mels.
  void compute_frame(std::span<const float> frame, std::span<float> out);

 private:
  MelConfig config_;
  int sample_rate_;
  std::vector<double> window_;
  Fft fft_;
  MelFilterbank filterbank_;
  std::vector<double> windowed_;
  std::vector<std::complex<double>> bins_;
  std::vector<std::complex<double>> scratch_;
  std::vector<float> spectrum_;
  std::vector<float> mel_;
};

struct MelSpectrogram {
  std::size_t n_frames = 0;
  int n_mels = 0;
  std::vector<float> data;  // n_frames x n_mels, row-major
  MelConfig config;
  int sample_rate = 0;

  std::span<const float> frame(std::size_t t) const {
    return {data.data() + t * static_cast<std::size_t>(n_mels), static_cast<std::size_t>(n_mels)};
  }
  float at(std::size_t t, int m) const { return data[t * static_cast<std::size_t>(n_mels) + m]; }
};

MelSpectrogram mel_spectrogram(const AudioBuffer& buf, const MelConfig& config);

// Flat key-value form, keys named after the MelConfig fields.
std::vector<std::pair<std::string, std::string>> to_key_values(const MelConfig& config);
MelConfig mel_config_from_key_values(const std::map<std::string, std::string>& kv);

std::string format_double(double v);

}  // namespace melstream
