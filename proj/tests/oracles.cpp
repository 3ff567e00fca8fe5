#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include <unistd.h>

using namespace melstream;

namespace oracle {

namespace {

double window_value(Window w, int n, int size) {
  const double x = 2.0 * std::numbers::pi * n / size;
  switch (w) {
    case Window::Hann: return 0.5 * (1.0 - std::cos(x));
    case Window::Hamming: return 0.54 - 0.46 * std::cos(x);
    case Window::BlackmanHarris:
      return 0.35875 - 0.48829 * std::cos(x) + 0.14128 * std::cos(2 * x) - 0.01168 * std::cos(3 * x);
    case Window::Rectangular: return 1.0;
  }
  return 1.0;
}

double to_mel(double hz, MelScale s) {
  if (s == MelScale::Htk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  // Slaney: linear below 1 kHz (200/3 Hz per mel), log above.
  const double step = 200.0 / 3.0;
  if (hz < 1000.0) return hz / step;
  return 1000.0 / step + std::log(hz / 1000.0) / (std::log(6.4) / 27.0);
}

double from_mel(double mel, MelScale s) {
  if (s == MelScale::Htk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  const double step = 200.0 / 3.0;
  const double break_mel = 1000.0 / step;
  if (mel < break_mel) return mel * step;
  return 1000.0 * std::exp((std::log(6.4) / 27.0) * (mel - break_mel));
}

}  // namespace

std::vector<double> dft_spectrum(std::span<const float> frame, Window window, int fft_size, SpectrumType type) {
  const int n_frame = static_cast<int>(frame.size());
  std::vector<double> x(static_cast<std::size_t>(fft_size), 0.0);
  for (int n = 0; n < n_frame; ++n) x[n] = frame[n] * window_value(window, n, n_frame);
  std::vector<double> cos_table(static_cast<std::size_t>(fft_size)), sin_table(static_cast<std::size_t>(fft_size));
  for (int i = 0; i < fft_size; ++i) {
    cos_table[i] = std::cos(2.0 * std::numbers::pi * i / fft_size);
    sin_table[i] = std::sin(2.0 * std::numbers::pi * i / fft_size);
  }
  std::vector<double> out(static_cast<std::size_t>(fft_size / 2 + 1));
  for (int k = 0; k <= fft_size / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (int n = 0; n < fft_size; ++n) {
      const auto idx = static_cast<std::size_t>((static_cast<long>(k) * n) % fft_size);
      re += x[n] * cos_table[idx];
      im -= x[n] * sin_table[idx];
    }
    const double p = re * re + im * im;
    out[k] = type == SpectrumType::Power ? p : std::sqrt(p);
  }
  return out;
}

std::vector<std::vector<double>> triangle_filters(const MelConfig& c, int sample_rate) {
  const int n_bins = c.fft_size / 2 + 1;
  const double lo_mel = to_mel(c.f_min, c.mel_scale);
  const double hi_mel = to_mel(c.f_max, c.mel_scale);
  std::vector<std::vector<double>> filters(static_cast<std::size_t>(c.n_mels),
                                           std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  for (int m = 0; m < c.n_mels; ++m) {
    auto edge = [&](int i) { return from_mel(lo_mel + (hi_mel - lo_mel) * i / (c.n_mels + 1), c.mel_scale); };
    const double left = edge(m), centre = edge(m + 1), right = edge(m + 2);
    double area = 0.0;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / c.fft_size;
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      if (f > centre && f < right) w = (right - f) / (right - centre);
      filters[m][k] = w;
      area += w;
    }
    for (auto& w : filters[m]) {
      if (c.filter_norm == FilterNorm::Area) w /= area;
      if (c.filter_norm == FilterNorm::BandWidth) w *= 2.0 / (right - left);
    }
  }
  return filters;
}

std::vector<double> mel_spectrogram(std::span<const float> signal, const MelConfig& c, int sample_rate) {
  const auto filters = triangle_filters(c, sample_rate);
  std::vector<double> out;
  for (std::size_t start = 0; start + c.frame_size <= signal.size(); start += c.hop_size) {
    const auto spec = dft_spectrum(signal.subspan(start, c.frame_size), c.window, c.fft_size, c.spectrum_type);
    for (const auto& filter : filters) {
      double e = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k) e += filter[k] * spec[k];
      switch (c.compression.kind) {
        case Compression::Kind::None: break;
        case Compression::Kind::NaturalLog: e = std::log(std::max(e, 1e-10)); break;
        case Compression::Kind::Log10: e = std::log10(std::max(e, 1e-10)); break;
        case Compression::Kind::ShiftedLog: e = std::log10(1.0 + c.compression.scale * e); break;
      }
      out.push_back(e);
    }
  }
  return out;
}

double max_relative_error(std::span<const float> got, std::span<const double> want) {
  if (got.size() != want.size()) return INFINITY;
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(std::abs(want[i]), 1.0));
  }
  return worst;
}

// --- graphs -------------------------------------------------------------------

namespace {

int pick(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<float> v(shape_product(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor(std::move(shape), std::move(v));
}

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t s, bool same) {
  return same ? (in + s - 1) / s : (in - k) / s + 1;
}

}  // namespace

GraphDef random_graph(Rng& rng, const RandomGraphOptions& o) {
  GraphDef def;
  Shape shape{static_cast<std::size_t>(pick(rng, 3, o.max_dim)), static_cast<std::size_t>(pick(rng, 3, o.max_dim)),
              static_cast<std::size_t>(pick(rng, 1, 4))};
  def.input = "x";
  def.nodes.push_back({"x", OpKind::Input,
                       {{"shape", std::to_string(shape[0]) + "," + std::to_string(shape[1]) + "," +
                                      std::to_string(shape[2])}},
                       {}});
  def.patch_frames = static_cast<int>(shape[0]);
  def.feature_config.n_mels = static_cast<int>(shape[1] * shape[2]);
  std::string prev = "x";
  const int layers = pick(rng, 1, o.max_layers);
  for (int l = 0; l < layers; ++l) {
    const std::string name = "n" + std::to_string(l);
    const bool spatial = shape.size() == 3;
    const bool last = l + 1 == layers;
    int choice = pick(rng, 0, spatial ? 10 : 4);
    NodeDef node{name, OpKind::Relu, {}, {prev}};
    if (!spatial) {
      // dense, relu, elu, sigmoid, softmax
      const OpKind ops[] = {OpKind::Dense, OpKind::Relu, OpKind::Elu, OpKind::Sigmoid, OpKind::Softmax};
      node.op = ops[choice];
    } else {
      const OpKind ops[] = {OpKind::Conv2d, OpKind::Conv2d,    OpKind::Dense,      OpKind::BatchNorm,
                            OpKind::Relu,   OpKind::Elu,       OpKind::Sigmoid,    OpKind::MaxPool2d,
                            OpKind::MeanPool2d, OpKind::Flatten, OpKind::Concat};
      node.op = ops[choice];
      if (last && node.op == OpKind::Flatten) node.op = OpKind::Conv2d;
    }
    switch (node.op) {
      case OpKind::Conv2d: {
        const std::size_t kh = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(std::min<std::size_t>(3, shape[0]))));
        const std::size_t kw = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(std::min<std::size_t>(3, shape[1]))));
        const std::size_t sh = static_cast<std::size_t>(pick(rng, 1, 2)), sw = static_cast<std::size_t>(pick(rng, 1, 2));
        const bool same = rng.below(2) == 1;
        const auto cout = static_cast<std::size_t>(pick(rng, 1, 8));
        def.weights.emplace(name + "/k", random_tensor({kh, kw, shape[2], cout}, rng, -0.5, 0.5));
        node.inputs.push_back(name + "/k");
        if (rng.below(3) != 0) {
          def.weights.emplace(name + "/b", random_tensor({cout}, rng, -0.5, 0.5));
          node.inputs.push_back(name + "/b");
        }
        node.params["stride"] = std::to_string(sh) + "," + std::to_string(sw);
        if (same || rng.below(2) == 1) node.params["padding"] = same ? "same" : "valid";
        shape = {out_extent(shape[0], kh, sh, same), out_extent(shape[1], kw, sw, same), cout};
        break;
      }
      case OpKind::Dense: {
        const auto units = static_cast<std::size_t>(pick(rng, 1, 8));
        def.weights.emplace(name + "/k", random_tensor({shape.back(), units}, rng, -0.5, 0.5));
        node.inputs.push_back(name + "/k");
        if (rng.below(3) != 0) {
          def.weights.emplace(name + "/b", random_tensor({units}, rng, -0.5, 0.5));
          node.inputs.push_back(name + "/b");
        }
        shape.back() = units;
        break;
      }
      case OpKind::BatchNorm: {
        const std::size_t c = shape.back();
        for (const char* p : {"gamma", "beta", "mean"}) {
          def.weights.emplace(name + "/" + p, random_tensor({c}, rng, -1.0, 1.0));
          node.inputs.push_back(name + "/" + p);
        }
        def.weights.emplace(name + "/var", random_tensor({c}, rng, 0.1, 2.0));
        node.inputs.push_back(name + "/var");
        if (rng.below(2) == 1) node.params["epsilon"] = "0.001";
        break;
      }
      case OpKind::Elu:
        if (rng.below(2) == 1) node.params["alpha"] = "0.7";
        break;
      case OpKind::MaxPool2d:
      case OpKind::MeanPool2d: {
        const std::size_t ph = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(std::min<std::size_t>(3, shape[0]))));
        const std::size_t pw = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(std::min<std::size_t>(3, shape[1]))));
        std::size_t sh = ph, sw = pw;
        node.params["pool"] = std::to_string(ph) + "," + std::to_string(pw);
        if (rng.below(2) == 1) {
          sh = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(ph)));
          sw = static_cast<std::size_t>(pick(rng, 1, static_cast<int>(pw)));
          node.params["stride"] = std::to_string(sh) + "," + std::to_string(sw);
        }
        const bool same = rng.below(2) == 1;
        if (same) node.params["padding"] = "same";
        shape = {out_extent(shape[0], ph, sh, same), out_extent(shape[1], pw, sw, same), shape[2]};
        break;
      }
      case OpKind::Flatten:
        shape = {shape_product(shape)};
        break;
      case OpKind::Concat: {
        // Concatenate with a 1x1 conv branch of the same input.
        const std::string branch = name + "_branch";
        const auto extra = static_cast<std::size_t>(pick(rng, 1, 4));
        def.weights.emplace(branch + "/k", random_tensor({1, 1, shape[2], extra}, rng, -0.5, 0.5));
        def.nodes.push_back({branch, OpKind::Conv2d, {}, {prev, branch + "/k"}});
        node.inputs = {prev, branch};
        shape.back() += extra;
        break;
      }
      default:
        break;
    }
    def.nodes.push_back(std::move(node));
    prev = name;
  }
  def.output = prev;
  def.embedding = prev;
  return def;
}

Tensor random_input(const Shape& shape, Rng& rng) { return random_tensor(shape, rng, -1.0, 1.0); }

namespace {

struct Value {
  Shape shape;
  std::vector<double> data;
};

std::vector<std::size_t> parse_pair(const std::map<std::string, std::string>& params, const std::string& key,
                                    std::vector<std::size_t> fallback) {
  const auto it = params.find(key);
  if (it == params.end()) return fallback;
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  const std::string& s = it->second;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    out.push_back(std::stoul(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.size() == 1) out.push_back(out[0]);
  return out;
}

double param(const std::map<std::string, std::string>& params, const std::string& key, double fallback) {
  const auto it = params.find(key);
  return it == params.end() ? fallback : std::stod(it->second);
}

// TF "same": out = ceil(in / s), total pad = max((out - 1) * s + k - in, 0), top gets the floor half.
void geometry(std::size_t in, std::size_t k, std::size_t s, bool same, std::size_t& out, long& pad) {
  if (same) {
    out = (in + s - 1) / s;
    const long total = std::max<long>(static_cast<long>((out - 1) * s + k) - static_cast<long>(in), 0);
    pad = total / 2;
  } else {
    out = (in - k) / s + 1;
    pad = 0;
  }
}

}  // namespace

std::vector<double> evaluate(const GraphDef& def, const Tensor& input, const std::string& until) {
  std::map<std::string, Value> values;
  auto get = [&](const std::string& name) -> Value {
    if (const auto it = values.find(name); it != values.end()) return it->second;
    const Tensor& t = def.weights.at(name);
    return {t.shape, std::vector<double>(t.data.begin(), t.data.end())};
  };
  const std::string target = until.empty() ? def.output : until;
  for (const auto& node : def.nodes) {
    Value out;
    const auto& p = node.params;
    switch (node.op) {
      case OpKind::Input:
        out = {input.shape, std::vector<double>(input.data.begin(), input.data.end())};
        break;
      case OpKind::Conv2d: {
        const Value x = get(node.inputs[0]);
        const Value k = get(node.inputs[1]);
        const bool has_bias = node.inputs.size() > 2;
        const Value b = has_bias ? get(node.inputs[2]) : Value{};
        const auto stride = parse_pair(p, "stride", {1, 1});
        const bool same = p.count("padding") != 0 && p.at("padding") == "same";
        const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
        const std::size_t KH = k.shape[0], KW = k.shape[1], F = k.shape[3];
        std::size_t OH, OW;
        long top, left;
        geometry(H, KH, stride[0], same, OH, top);
        geometry(W, KW, stride[1], same, OW, left);
        out.shape = {OH, OW, F};
        out.data.assign(OH * OW * F, 0.0);
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox)
            for (std::size_t f = 0; f < F; ++f) {
              double acc = has_bias ? b.data[f] : 0.0;
              for (std::size_t ky = 0; ky < KH; ++ky)
                for (std::size_t kx = 0; kx < KW; ++kx) {
                  const long iy = static_cast<long>(oy * stride[0] + ky) - top;
                  const long ix = static_cast<long>(ox * stride[1] + kx) - left;
                  if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                  for (std::size_t c = 0; c < C; ++c) {
                    acc += x.data[(static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C + c] *
                           k.data[((ky * KW + kx) * C + c) * F + f];
                  }
                }
              out.data[(oy * OW + ox) * F + f] = acc;
            }
        break;
      }
      case OpKind::Dense: {
        const Value x = get(node.inputs[0]);
        const Value k = get(node.inputs[1]);
        const bool has_bias = node.inputs.size() > 2;
        const Value b = has_bias ? get(node.inputs[2]) : Value{};
        const std::size_t in = k.shape[0], units = k.shape[1], rows = x.data.size() / in;
        out.shape = x.shape;
        out.shape.back() = units;
        out.data.assign(rows * units, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t u = 0; u < units; ++u) {
            double acc = has_bias ? b.data[u] : 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += x.data[r * in + i] * k.data[i * units + u];
            out.data[r * units + u] = acc;
          }
        break;
      }
      case OpKind::BatchNorm: {
        out = get(node.inputs[0]);
        const Value g = get(node.inputs[1]), be = get(node.inputs[2]), mu = get(node.inputs[3]),
                    var = get(node.inputs[4]);
        const double eps = param(p, "epsilon", 1e-6);
        const std::size_t C = g.data.size();
        for (std::size_t i = 0; i < out.data.size(); ++i) {
          const std::size_t c = i % C;
          out.data[i] = g.data[c] * (out.data[i] - mu.data[c]) / std::sqrt(var.data[c] + eps) + be.data[c];
        }
        break;
      }
      case OpKind::Relu:
        out = get(node.inputs[0]);
        for (auto& v : out.data) v = std::max(v, 0.0);
        break;
      case OpKind::Elu: {
        out = get(node.inputs[0]);
        const double alpha = param(p, "alpha", 1.0);
        for (auto& v : out.data) v = v > 0 ? v : alpha * (std::exp(v) - 1.0);
        break;
      }
      case OpKind::Sigmoid:
        out = get(node.inputs[0]);
        for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        break;
      case OpKind::Softmax: {
        out = get(node.inputs[0]);
        const std::size_t n = out.shape.back();
        for (std::size_t r = 0; r < out.data.size(); r += n) {
          double sum = 0.0;
          for (std::size_t i = 0; i < n; ++i) sum += std::exp(out.data[r + i]);
          for (std::size_t i = 0; i < n; ++i) out.data[r + i] = std::exp(out.data[r + i]) / sum;
        }
        break;
      }
      case OpKind::Dropout:
        out = get(node.inputs[0]);
        break;
      case OpKind::MaxPool2d:
      case OpKind::MeanPool2d: {
        const Value x = get(node.inputs[0]);
        const auto pool = parse_pair(p, "pool", {1, 1});
        const auto stride = parse_pair(p, "stride", pool);
        const bool same = p.count("padding") != 0 && p.at("padding") == "same";
        const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
        std::size_t OH, OW;
        long top, left;
        geometry(H, pool[0], stride[0], same, OH, top);
        geometry(W, pool[1], stride[1], same, OW, left);
        out.shape = {OH, OW, C};
        out.data.assign(OH * OW * C, 0.0);
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox)
            for (std::size_t c = 0; c < C; ++c) {
              double best = -INFINITY, sum = 0.0;
              int count = 0;
              for (std::size_t py = 0; py < pool[0]; ++py)
                for (std::size_t px = 0; px < pool[1]; ++px) {
                  const long iy = static_cast<long>(oy * stride[0] + py) - top;
                  const long ix = static_cast<long>(ox * stride[1] + px) - left;
                  if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                  const double v = x.data[(static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C + c];
                  best = std::max(best, v);
                  sum += v;
                  ++count;
                }
              out.data[(oy * OW + ox) * C + c] = node.op == OpKind::MaxPool2d ? best : sum / count;
            }
        break;
      }
      case OpKind::Flatten:
        out = get(node.inputs[0]);
        out.shape = {out.data.size()};
        break;
      case OpKind::Concat: {
        std::vector<Value> parts;
        for (const auto& in : node.inputs) parts.push_back(get(in));
        out.shape = parts[0].shape;
        out.shape.back() = 0;
        for (const auto& part : parts) out.shape.back() += part.shape.back();
        const std::size_t rows = parts[0].data.size() / parts[0].shape.back();
        for (std::size_t r = 0; r < rows; ++r)
          for (const auto& part : parts) {
            const std::size_t n = part.shape.back();
            out.data.insert(out.data.end(), part.data.begin() + static_cast<long>(r * n),
                            part.data.begin() + static_cast<long>((r + 1) * n));
          }
        break;
      }
    }
    if (node.name == target) return out.data;
    values[node.name] = std::move(out);
  }
  throw std::runtime_error("oracle: no node " + target);
}

double brute_force_ap(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  std::set<double, std::greater<>> thresholds(scores.begin(), scores.end());
  double total_pos = 0.0;
  for (auto p : positive) total_pos += p;
  double ap = 0.0, prev_recall = 0.0;
  for (const double t : thresholds) {
    double tp = 0.0, selected = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) {
        selected += 1.0;
        tp += positive[i];
      }
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / selected);
    prev_recall = recall;
  }
  return ap;
}

std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("melstream-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
