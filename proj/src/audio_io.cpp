#include "melstream/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <string_view>

#include "melstream/error.hpp"

namespace melstream {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) |
         (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, std::string_view tag) {
  return std::memcmp(b.data() + at, tag.data(), 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

float decode_sample(const std::uint8_t* p, const FormatChunk& fmt) {
  if (fmt.format == kFormatFloat) {
    std::uint32_t raw = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                        (static_cast<std::uint32_t>(p[2]) << 16) |
                        (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(raw);
  }
  switch (fmt.bits) {
    case 16: {
      const auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return static_cast<float>(v) / 32768.0f;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return static_cast<float>(static_cast<double>(v) / 8388608.0);
    }
    default: {
      const auto v = static_cast<std::int32_t>(
          static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
          (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24));
      return static_cast<float>(static_cast<double>(v) / 2147483648.0);
    }
  }
}

// Normalized Kaiser window argument: I0(beta * sqrt(1 - x^2)) / I0(beta).
double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

// Design: passband edge 0.45 * min_rate, stopband edge 0.5 * min_rate, 90 dB
// stopband attenuation.
struct SincDesign {
  double cutoff_hz;
  double half_width_s;
  double beta;
};

SincDesign design_for(int source_rate, int target_rate) {
  const double min_rate = static_cast<double>(std::min(source_rate, target_rate));
  const double attenuation_db = 90.0;
  const double transition_hz = 0.05 * min_rate;
  SincDesign d{};
  d.cutoff_hz = 0.475 * min_rate;
  d.beta = 0.1102 * (attenuation_db - 8.7);
  d.half_width_s = (attenuation_db - 8.0) / (2.285 * 2.0 * M_PI * transition_hz) / 2.0;
  return d;
}

double kernel_at(const SincDesign& d, double t_seconds) {
  const double ratio = t_seconds / d.half_width_s;
  if (std::abs(ratio) >= 1.0) return 0.0;
  const double x = 2.0 * d.cutoff_hz * t_seconds;
  const double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
  return sinc * bessel_i0(d.beta * std::sqrt(1.0 - ratio * ratio));
}

// Tap weights for one fractional phase, normalized to unit sum so constant
// input maps to the same constant.
void fill_phase(const SincDesign& d, double frac, long taps_half, double source_rate,
                std::vector<double>& row) {
  row.resize(static_cast<std::size_t>(2 * taps_half));
  double sum = 0.0;
  for (long t = 0; t < 2 * taps_half; ++t) {
    const double offset = frac - static_cast<double>(t - taps_half + 1);
    const double w = kernel_at(d, offset / source_rate);
    row[static_cast<std::size_t>(t)] = w;
    sum += w;
  }
  for (double& w : row) w /= sum;
}

}  // namespace

PcmData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw Error(ErrorCode::CorruptHeader, "not a RIFF/WAVE container");
  }
  FormatChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t declared = get_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (tag_is(bytes, pos, "fmt ")) {
      if (declared < 16 || declared > avail) throw Error(ErrorCode::CorruptHeader, "short fmt chunk");
      fmt.format = get_u16(bytes, body);
      fmt.channels = get_u16(bytes, body + 2);
      fmt.sample_rate = get_u32(bytes, body + 4);
      fmt.block_align = get_u16(bytes, body + 12);
      fmt.bits = get_u16(bytes, body + 14);
      if (fmt.format == kFormatExtensible) {
        if (declared < 40) throw Error(ErrorCode::CorruptHeader, "short WAVE_FORMAT_EXTENSIBLE chunk");
        fmt.format = get_u16(bytes, body + 24);
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      // Streamed writers often leave the size as 0 or 0xFFFFFFFF; take what is there.
      const std::size_t len = declared == 0 || declared > avail ? avail : declared;
      data = bytes.subspan(body, len);
      have_data = true;
      if (len == avail) break;
    }
    const std::size_t step = static_cast<std::size_t>(declared) + (declared & 1u);
    if (step > avail) break;
    pos = body + step;
  }

  if (!have_fmt) throw Error(ErrorCode::CorruptHeader, "missing fmt chunk");
  if (!have_data) throw Error(ErrorCode::CorruptHeader, "missing data chunk");
  if (fmt.format != kFormatPcm && fmt.format != kFormatFloat) {
    throw Error(ErrorCode::UnsupportedFormat, "codec tag " + std::to_string(fmt.format));
  }
  const bool bits_ok = fmt.format == kFormatFloat
                           ? fmt.bits == 32
                           : (fmt.bits == 16 || fmt.bits == 24 || fmt.bits == 32);
  if (!bits_ok) {
    throw Error(ErrorCode::UnsupportedFormat, std::to_string(fmt.bits) + "-bit samples");
  }
  if (fmt.channels < 1 || fmt.channels > 8) {
    throw Error(ErrorCode::UnsupportedFormat, std::to_string(fmt.channels) + " channels");
  }
  if (fmt.sample_rate == 0) throw Error(ErrorCode::CorruptHeader, "zero sample rate");
  const std::size_t bytes_per_sample = fmt.bits / 8u;
  if (fmt.block_align != bytes_per_sample * fmt.channels) {
    throw Error(ErrorCode::CorruptHeader, "block_align inconsistent with channels and bit depth");
  }

  const std::size_t frames = data.size() / fmt.block_align;
  if (frames == 0) throw Error(ErrorCode::EmptyAudio, "no sample frames");

  PcmData pcm;
  pcm.sample_rate = static_cast<int>(fmt.sample_rate);
  pcm.channels.assign(fmt.channels, std::vector<float>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    const std::uint8_t* frame = data.data() + f * fmt.block_align;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      float v = decode_sample(frame + c * bytes_per_sample, fmt);
      if (!std::isfinite(v)) throw Error(ErrorCode::CorruptData, "non-finite float sample");
      if (v > 1.0f || v < -1.0f) {
        v = std::clamp(v, -1.0f, 1.0f);
        ++pcm.clipped_samples;
      }
      pcm.channels[c][f] = v;
    }
  }
  return pcm;
}

std::vector<std::uint8_t> encode_wav(const PcmData& pcm, WavEncoding encoding) {
  const std::size_t channels = pcm.channels.size();
  const std::size_t frames = pcm.frames();
  std::uint16_t bits = 32;
  std::uint16_t format = kFormatPcm;
  switch (encoding) {
    case WavEncoding::Pcm16: bits = 16; break;
    case WavEncoding::Pcm24: bits = 24; break;
    case WavEncoding::Pcm32: bits = 32; break;
    case WavEncoding::Float32: format = kFormatFloat; break;
  }
  const std::size_t block = channels * (bits / 8u);
  const std::size_t data_len = block * frames;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_len));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(pcm.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(pcm.sample_rate * block));
  put_u16(out, static_cast<std::uint16_t>(block));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_len));

  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::clamp(static_cast<double>(pcm.channels[c][f]), -1.0, 1.0);
      switch (encoding) {
        case WavEncoding::Pcm16: {
          const auto q = static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L));
          put_u16(out, static_cast<std::uint16_t>(q));
          break;
        }
        case WavEncoding::Pcm24: {
          const auto q = static_cast<std::int32_t>(std::clamp(std::lround(v * 8388608.0), -8388608L, 8388607L));
          const auto u = static_cast<std::uint32_t>(q);
          out.push_back(static_cast<std::uint8_t>(u & 0xFF));
          out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xFF));
          out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xFF));
          break;
        }
        case WavEncoding::Pcm32: {
          const auto q = static_cast<std::int32_t>(
              std::clamp(std::llround(v * 2147483648.0), -2147483648LL, 2147483647LL));
          put_u32(out, static_cast<std::uint32_t>(q));
          break;
        }
        case WavEncoding::Float32:
          put_u32(out, std::bit_cast<std::uint32_t>(pcm.channels[c][f]));
          break;
      }
    }
  }
  return out;
}

AudioBuffer mixdown(const PcmData& pcm) {
  if (pcm.channels.empty() || pcm.frames() == 0) throw Error(ErrorCode::EmptyAudio, "no samples");
  AudioBuffer out;
  out.sample_rate = pcm.sample_rate;
  out.clipped_samples = pcm.clipped_samples;
  if (pcm.channels.size() == 1) {
    out.samples = pcm.channels.front();
    return out;
  }
  const std::size_t n = pcm.frames();
  const double inv = 1.0 / static_cast<double>(pcm.channels.size());
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (const auto& ch : pcm.channels) acc += ch[i];
    out.samples[i] = static_cast<float>(acc * inv);
  }
  return out;
}

AudioBuffer resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidConfig, "target_rate must be positive");
  if (buf.sample_rate <= 0) throw Error(ErrorCode::InvalidConfig, "source sample_rate must be positive");
  if (target_rate == buf.sample_rate) return buf;
  if (buf.samples.empty()) return AudioBuffer{{}, target_rate, buf.clipped_samples};

  // Output n sits at input position n * down / up (reduced rational).
  const long g = std::gcd(static_cast<long>(buf.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = buf.sample_rate / g;
  const std::size_t in_len = buf.samples.size();
  const auto out_len = static_cast<std::size_t>(std::llround(
      static_cast<double>(in_len) * static_cast<double>(target_rate) / buf.sample_rate));

  const SincDesign design = design_for(buf.sample_rate, target_rate);
  const double source_rate = buf.sample_rate;
  const long taps_half = static_cast<long>(std::ceil(design.half_width_s * source_rate)) + 1;

  constexpr long kMaxTabulatedPhases = 4096;
  std::vector<std::vector<double>> table;
  if (up <= kMaxTabulatedPhases) {
    table.resize(static_cast<std::size_t>(up));
    for (long p = 0; p < up; ++p) {
      fill_phase(design, static_cast<double>(p) / static_cast<double>(up), taps_half, source_rate,
                 table[static_cast<std::size_t>(p)]);
    }
  }

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.clipped_samples = buf.clipped_samples;
  out.samples.resize(out_len);
  std::vector<double> scratch;
  const long last = static_cast<long>(in_len) - 1;
  for (std::size_t n = 0; n < out_len; ++n) {
    const long long num = static_cast<long long>(n) * down;
    const long base = static_cast<long>(num / up);
    const long phase = static_cast<long>(num % up);
    const std::vector<double>* row = nullptr;
    if (!table.empty()) {
      row = &table[static_cast<std::size_t>(phase)];
    } else {
      fill_phase(design, static_cast<double>(phase) / static_cast<double>(up), taps_half,
                 source_rate, scratch);
      row = &scratch;
    }
    const long first = base - taps_half + 1;
    double acc = 0.0;
    for (long t = 0; t < 2 * taps_half; ++t) {
      const long j = std::clamp(first + t, 0L, last);
      acc += (*row)[static_cast<std::size_t>(t)] * buf.samples[static_cast<std::size_t>(j)];
    }
    if (acc > 1.0 || acc < -1.0) {
      acc = std::clamp(acc, -1.0, 1.0);
      ++out.clipped_samples;
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

AudioBuffer load_pcm(const std::filesystem::path& path, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidConfig, "target_rate must be positive");
  const auto bytes = read_file(path);
  return resample(mixdown(decode_wav(bytes)), target_rate);
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buf, WavEncoding encoding) {
  PcmData pcm;
  pcm.sample_rate = buf.sample_rate;
  pcm.channels.push_back(buf.samples);
  const auto bytes = encode_wav(pcm, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace melstream
