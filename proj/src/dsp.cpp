#include "melstream/dsp.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>

#include "melstream/error.hpp"
#include "melstream/kernels.hpp"

namespace melstream {

namespace {

constexpr std::array kPresets{
    Preset{"musicnn-96",
           MelConfig{512, 256, Window::Hann, 512, 96, 0.0, 8000.0, MelScale::Htk, FilterNorm::None,
                     SpectrumType::Power, Compression{Compression::Kind::ShiftedLog, 10000.0}},
           16000},
    Preset{"vgg-64",
           MelConfig{400, 160, Window::Hann, 512, 64, 125.0, 7500.0, MelScale::Htk, FilterNorm::None,
                     SpectrumType::Magnitude, Compression{Compression::Kind::NaturalLog, 1.0}},
           16000},
};

// Slaney's auditory toolbox scale: linear below 1 kHz, logarithmic above.
constexpr double kSlaneyLinearStep = 200.0 / 3.0;
constexpr double kSlaneyBreakHz = 1000.0;
constexpr double kSlaneyBreakMel = kSlaneyBreakHz / kSlaneyLinearStep;
const double kSlaneyLogStep = std::log(6.4) / 27.0;

template <typename Enum, std::size_t N>
Enum parse_enum(const std::array<std::pair<std::string_view, Enum>, N>& names, std::string_view value,
                std::string_view field) {
  for (const auto& [name, e] : names) {
    if (name == value) return e;
  }
  throw Error(ErrorCode::InvalidConfig,
              "bad value '" + std::string(value) + "' for " + std::string(field));
}

constexpr std::array<std::pair<std::string_view, Window>, 4> kWindowNames{{
    {"hann", Window::Hann},
    {"hamming", Window::Hamming},
    {"blackman-harris", Window::BlackmanHarris},
    {"rectangular", Window::Rectangular},
}};
constexpr std::array<std::pair<std::string_view, MelScale>, 2> kScaleNames{{
    {"htk", MelScale::Htk},
    {"slaney", MelScale::Slaney},
}};
constexpr std::array<std::pair<std::string_view, FilterNorm>, 3> kNormNames{{
    {"none", FilterNorm::None},
    {"area", FilterNorm::Area},
    {"band-width", FilterNorm::BandWidth},
}};
constexpr std::array<std::pair<std::string_view, SpectrumType>, 2> kSpectrumNames{{
    {"magnitude", SpectrumType::Magnitude},
    {"power", SpectrumType::Power},
}};

template <typename Enum, std::size_t N>
std::string enum_name(const std::array<std::pair<std::string_view, Enum>, N>& names, Enum e) {
  for (const auto& [name, v] : names) {
    if (v == e) return std::string(name);
  }
  return "?";
}

Compression parse_compression(std::string_view s) {
  if (s == "none") return {Compression::Kind::None, 1.0};
  if (s == "natural-log") return {Compression::Kind::NaturalLog, 1.0};
  if (s == "log10") return {Compression::Kind::Log10, 1.0};
  constexpr std::string_view prefix = "shifted-log(";
  if (s.starts_with(prefix) && s.ends_with(")")) {
    const std::string_view num = s.substr(prefix.size(), s.size() - prefix.size() - 1);
    double scale = 0.0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), scale);
    if (ec == std::errc{} && ptr == num.data() + num.size()) {
      return {Compression::Kind::ShiftedLog, scale};
    }
  }
  throw Error(ErrorCode::InvalidConfig, "bad compression '" + std::string(s) + "'");
}

int parse_int(const std::string& value, std::string_view field) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidConfig, "bad integer for " + std::string(field));
  }
  return v;
}

double parse_double(const std::string& value, std::string_view field) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidConfig, "bad number for " + std::string(field));
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

void validate(const MelConfig& c, int sample_rate) {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (c.frame_size < 1) fail("frame_size must be positive");
  if (c.hop_size < 1 || c.hop_size > c.frame_size) fail("hop_size must be in [1, frame_size]");
  if (c.fft_size < c.frame_size || !is_power_of_two(static_cast<std::size_t>(c.fft_size))) {
    fail("fft_size must be a power of two >= frame_size");
  }
  if (c.n_mels < 1) fail("n_mels must be positive");
  if (!(c.f_min >= 0.0)) fail("f_min must be >= 0");
  if (!(c.f_min < c.f_max)) fail("f_min must be below f_max");
  if (c.f_max > sample_rate / 2.0) fail("f_max exceeds Nyquist");
  if (c.compression.kind == Compression::Kind::ShiftedLog && !(c.compression.scale > 0.0)) {
    fail("shifted-log scale must be positive");
  }
}

std::span<const Preset> presets() { return kPresets; }

const Preset& find_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "'");
}

double hz_to_mel(double hz, MelScale scale) {
  if (scale == MelScale::Htk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  if (hz < kSlaneyBreakHz) return hz / kSlaneyLinearStep;
  return kSlaneyBreakMel + std::log(hz / kSlaneyBreakHz) / kSlaneyLogStep;
}

double mel_to_hz(double mel, MelScale scale) {
  if (scale == MelScale::Htk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  if (mel < kSlaneyBreakMel) return mel * kSlaneyLinearStep;
  return kSlaneyBreakHz * std::exp(kSlaneyLogStep * (mel - kSlaneyBreakMel));
}

std::vector<double> make_window(Window window, int size) {
  std::vector<double> w(static_cast<std::size_t>(size), 1.0);
  const double n_total = size;
  for (int n = 0; n < size; ++n) {
    const double x = 2.0 * std::numbers::pi * n / n_total;
    switch (window) {
      case Window::Hann:
        w[n] = 0.5 - 0.5 * std::cos(x);
        break;
      case Window::Hamming:
        w[n] = 0.54 - 0.46 * std::cos(x);
        break;
      case Window::BlackmanHarris:
        w[n] = 0.35875 - 0.48829 * std::cos(x) + 0.14128 * std::cos(2.0 * x) -
               0.01168 * std::cos(3.0 * x);
        break;
      case Window::Rectangular:
        break;
    }
  }
  return w;
}

std::string to_string(Window w) { return enum_name(kWindowNames, w); }
std::string to_string(MelScale s) { return enum_name(kScaleNames, s); }
std::string to_string(FilterNorm n) { return enum_name(kNormNames, n); }
std::string to_string(SpectrumType t) { return enum_name(kSpectrumNames, t); }

std::string to_string(const Compression& c) {
  switch (c.kind) {
    case Compression::Kind::None: return "none";
    case Compression::Kind::NaturalLog: return "natural-log";
    case Compression::Kind::Log10: return "log10";
    case Compression::Kind::ShiftedLog: return "shifted-log(" + format_double(c.scale) + ")";
  }
  return "?";
}

std::size_t frame_count(std::size_t len, int frame_size, int hop_size) {
  if (frame_size < 1 || hop_size < 1 || hop_size > frame_size) {
    throw Error(ErrorCode::InvalidConfig, "need frame_size >= 1 and 1 <= hop_size <= frame_size");
  }
  const auto frame = static_cast<std::size_t>(frame_size);
  if (len < frame) {
    throw Error(ErrorCode::SignalTooShort, std::to_string(len) + " samples < frame_size " +
                                               std::to_string(frame_size));
  }
  return (len - frame) / static_cast<std::size_t>(hop_size) + 1;
}

std::vector<std::vector<float>> frame_signal(const AudioBuffer& buf, int frame_size, int hop_size) {
  const std::size_t count = frame_count(buf.samples.size(), frame_size, hop_size);
  std::vector<std::vector<float>> frames;
  frames.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    const auto begin = buf.samples.begin() + static_cast<std::ptrdiff_t>(t * hop_size);
    frames.emplace_back(begin, begin + frame_size);
  }
  return frames;
}

std::vector<double> power_spectrum(std::span<const float> frame, Window window, int fft_size,
                                   SpectrumType type) {
  if (fft_size < 1 || frame.size() > static_cast<std::size_t>(fft_size)) {
    throw Error(ErrorCode::InvalidConfig, "frame longer than fft_size");
  }
  const Fft fft(static_cast<std::size_t>(fft_size));
  const auto w = make_window(window, static_cast<int>(frame.size()));
  std::vector<double> windowed(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) windowed[i] = frame[i] * w[i];
  std::vector<std::complex<double>> bins(static_cast<std::size_t>(fft_size / 2 + 1));
  std::vector<std::complex<double>> scratch;
  fft.forward_real(windowed, bins, scratch);
  std::vector<double> out(bins.size());
  for (std::size_t k = 0; k < bins.size(); ++k) {
    const double p = std::norm(bins[k]);
    out[k] = type == SpectrumType::Power ? p : std::sqrt(p);
  }
  return out;
}

MelFilterbank::MelFilterbank(const MelConfig& config, int sample_rate)
    : n_mels_(config.n_mels), n_bins_(config.n_bins()) {
  validate(config, sample_rate);
  const double mel_lo = hz_to_mel(config.f_min, config.mel_scale);
  const double mel_hi = hz_to_mel(config.f_max, config.mel_scale);
  std::vector<double> edges(static_cast<std::size_t>(n_mels_) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels_ + 1);
    edges[i] = mel_to_hz(mel, config.mel_scale);
  }

  weights_.assign(static_cast<std::size_t>(n_mels_) * n_bins_, 0.0f);
  support_.resize(static_cast<std::size_t>(n_mels_));
  const double bin_hz = static_cast<double>(sample_rate) / config.fft_size;
  std::vector<double> row(static_cast<std::size_t>(n_bins_));
  for (int m = 0; m < n_mels_; ++m) {
    const double lo = edges[m];
    const double center = edges[m + 1];
    const double hi = edges[m + 2];
    double sum = 0.0;
    for (int k = 0; k < n_bins_; ++k) {
      const double f = k * bin_hz;
      const double rising = (f - lo) / (center - lo);
      const double falling = (hi - f) / (hi - center);
      row[k] = std::max(0.0, std::min(rising, falling));
      sum += row[k];
    }
    if (sum <= 0.0) {
      throw Error(ErrorCode::EmptyFilter, "mel filter " + std::to_string(m) +
                                              " covers no FFT bin; raise fft_size or lower n_mels");
    }
    double scale = 1.0;
    if (config.filter_norm == FilterNorm::Area) scale = 1.0 / sum;
    if (config.filter_norm == FilterNorm::BandWidth) scale = 2.0 / (hi - lo);
    int first = n_bins_;
    int last = 0;
    for (int k = 0; k < n_bins_; ++k) {
      if (row[k] > 0.0) {
        weights_[static_cast<std::size_t>(m) * n_bins_ + k] = static_cast<float>(row[k] * scale);
        first = std::min(first, k);
        last = k + 1;
      }
    }
    support_[static_cast<std::size_t>(m)] = {first, last};
  }
}

void MelFilterbank::apply(std::span<const float> spectrum, std::span<float> out) const {
  for (int m = 0; m < n_mels_; ++m) {
    const auto [first, last] = support_[static_cast<std::size_t>(m)];
    const auto len = static_cast<std::size_t>(last - first);
    out[static_cast<std::size_t>(m)] =
        kernels::dot(row(m).subspan(static_cast<std::size_t>(first), len),
                     spectrum.subspan(static_cast<std::size_t>(first), len));
  }
}

float compress(float value, const Compression& c) {
  const double v = value;
  switch (c.kind) {
    case Compression::Kind::None:
      return value;
    case Compression::Kind::NaturalLog:
      return static_cast<float>(std::log(std::max(v, kLogFloor)));
    case Compression::Kind::Log10:
      return static_cast<float>(std::log10(std::max(v, kLogFloor)));
    case Compression::Kind::ShiftedLog:
      return static_cast<float>(std::log10(1.0 + c.scale * v));
  }
  return value;
}

MelExtractor::MelExtractor(const MelConfig& config, int sample_rate)
    : config_(config),
      sample_rate_(sample_rate),
      window_(make_window(config.window, config.frame_size)),
      fft_(static_cast<std::size_t>(config.fft_size)),
      filterbank_(config, sample_rate),
      windowed_(static_cast<std::size_t>(config.frame_size)),
      bins_(static_cast<std::size_t>(config.n_bins())),
      spectrum_(static_cast<std::size_t>(config.n_bins())),
      mel_(static_cast<std::size_t>(config.n_mels)) {}

void MelExtractor::compute_frame(std::span<const float> frame, std::span<float> out) {
  for (std::size_t i = 0; i < windowed_.size(); ++i) windowed_[i] = frame[i] * window_[i];
  fft_.forward_real(windowed_, bins_, scratch_);
  const bool power = config_.spectrum_type == SpectrumType::Power;
  for (std::size_t k = 0; k < bins_.size(); ++k) {
    const double p = std::norm(bins_[k]);
    spectrum_[k] = static_cast<float>(power ? p : std::sqrt(p));
  }
  filterbank_.apply(spectrum_, out);
  if (config_.compression.kind != Compression::Kind::None) {
    for (float& v : out) v = compress(v, config_.compression);
  }
}

MelSpectrogram mel_spectrogram(const AudioBuffer& buf, const MelConfig& config) {
  validate(config, buf.sample_rate);
  const std::size_t count = frame_count(buf.samples.size(), config.frame_size, config.hop_size);
  MelExtractor extractor(config, buf.sample_rate);
  MelSpectrogram out;
  out.n_frames = count;
  out.n_mels = config.n_mels;
  out.config = config;
  out.sample_rate = buf.sample_rate;
  out.data.resize(count * static_cast<std::size_t>(config.n_mels));
  const std::span<const float> samples(buf.samples);
  for (std::size_t t = 0; t < count; ++t) {
    extractor.compute_frame(samples.subspan(t * config.hop_size, static_cast<std::size_t>(config.frame_size)),
                            std::span<float>(out.data).subspan(t * config.n_mels,
                                                               static_cast<std::size_t>(config.n_mels)));
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> to_key_values(const MelConfig& c) {
  return {
      {"frame_size", std::to_string(c.frame_size)},
      {"hop_size", std::to_string(c.hop_size)},
      {"window", to_string(c.window)},
      {"fft_size", std::to_string(c.fft_size)},
      {"n_mels", std::to_string(c.n_mels)},
      {"f_min", format_double(c.f_min)},
      {"f_max", format_double(c.f_max)},
      {"mel_scale", to_string(c.mel_scale)},
      {"filter_norm", to_string(c.filter_norm)},
      {"spectrum_type", to_string(c.spectrum_type)},
      {"compression", to_string(c.compression)},
  };
}

MelConfig mel_config_from_key_values(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::InvalidConfig, std::string("missing key ") + key);
    return it->second;
  };
  for (const auto& [key, value] : kv) {
    static constexpr std::array<std::string_view, 11> kKnown{
        "frame_size", "hop_size",  "window",      "fft_size",      "n_mels",     "f_min",
        "f_max",      "mel_scale", "filter_norm", "spectrum_type", "compression"};
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw Error(ErrorCode::InvalidConfig, "unknown key " + key);
    }
  }
  MelConfig c;
  c.frame_size = parse_int(get("frame_size"), "frame_size");
  c.hop_size = parse_int(get("hop_size"), "hop_size");
  c.window = parse_enum(kWindowNames, get("window"), "window");
  c.fft_size = parse_int(get("fft_size"), "fft_size");
  c.n_mels = parse_int(get("n_mels"), "n_mels");
  c.f_min = parse_double(get("f_min"), "f_min");
  c.f_max = parse_double(get("f_max"), "f_max");
  c.mel_scale = parse_enum(kScaleNames, get("mel_scale"), "mel_scale");
  c.filter_norm = parse_enum(kNormNames, get("filter_norm"), "filter_norm");
  c.spectrum_type = parse_enum(kSpectrumNames, get("spectrum_type"), "spectrum_type");
  c.compression = parse_compression(get("compression"));
  return c;
}

}  // namespace melstream
