#include "melstream/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "melstream/error.hpp"
#include "melstream/kernels.hpp"

namespace melstream {

namespace {

// Leading padding for TF-style "same": total = max((out-1)*stride + window - in, 0).
std::size_t pad_before(std::size_t in, std::size_t out, std::size_t window, std::size_t stride, bool same) {
  if (!same) return 0;
  const std::size_t needed = (out - 1) * stride + window;
  return needed > in ? (needed - in) / 2 : 0;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias, const CompiledNode& c) {
  const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
  const std::size_t KH = kernel.shape[0], KW = kernel.shape[1], F = kernel.shape[3];
  const std::size_t OH = c.shape[0], OW = c.shape[1];
  const std::size_t top = pad_before(H, OH, KH, c.stride_h, c.same_padding);
  const std::size_t left = pad_before(W, OW, KW, c.stride_w, c.same_padding);
  Tensor out(c.shape);
  const auto& k = kernels::active();
  for (std::size_t oy = 0; oy < OH; ++oy) {
    for (std::size_t ox = 0; ox < OW; ++ox) {
      float* acc = out.data.data() + (oy * OW + ox) * F;
      if (bias != nullptr) std::copy(bias->data.begin(), bias->data.end(), acc);
      for (std::size_t ky = 0; ky < KH; ++ky) {
        const long iy = static_cast<long>(oy * c.stride_h + ky) - static_cast<long>(top);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t kx = 0; kx < KW; ++kx) {
          const long ix = static_cast<long>(ox * c.stride_w + kx) - static_cast<long>(left);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const float* px = x.data.data() + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C;
          const float* pk = kernel.data.data() + (ky * KW + kx) * C * F;
          for (std::size_t ci = 0; ci < C; ++ci) k.axpy(px[ci], pk + ci * F, acc, F);
        }
      }
    }
  }
  return out;
}

Tensor dense(const Tensor& x, const Tensor& kernel, const Tensor* bias, const CompiledNode& c) {
  const std::size_t in = kernel.shape[0], units = kernel.shape[1];
  const std::size_t rows = x.size() / in;
  Tensor out(c.shape);
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < rows; ++r) {
    float* acc = out.data.data() + r * units;
    if (bias != nullptr) std::copy(bias->data.begin(), bias->data.end(), acc);
    const float* px = x.data.data() + r * in;
    for (std::size_t i = 0; i < in; ++i) k.axpy(px[i], kernel.data.data() + i * units, acc, units);
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& mean,
                  const Tensor& variance, float epsilon) {
  const std::size_t C = gamma.size();
  std::vector<float> scale(C), shift(C);
  for (std::size_t ch = 0; ch < C; ++ch) {
    scale[ch] = gamma.data[ch] / std::sqrt(variance.data[ch] + epsilon);
    shift[ch] = beta.data[ch] - mean.data[ch] * scale[ch];
  }
  Tensor out = x;
  const auto& k = kernels::active();
  for (std::size_t off = 0; off < out.size(); off += C) {
    k.scale_shift(scale.data(), shift.data(), out.data.data() + off, C);
  }
  return out;
}

Tensor pool2d(const Tensor& x, const CompiledNode& c, bool is_max) {
  const std::size_t H = x.shape[0], W = x.shape[1], C = x.shape[2];
  const std::size_t OH = c.shape[0], OW = c.shape[1];
  const std::size_t top = pad_before(H, OH, c.pool_h, c.stride_h, c.same_padding);
  const std::size_t left = pad_before(W, OW, c.pool_w, c.stride_w, c.same_padding);
  Tensor out(c.shape);
  const auto& k = kernels::active();
  for (std::size_t oy = 0; oy < OH; ++oy) {
    for (std::size_t ox = 0; ox < OW; ++ox) {
      float* acc = out.data.data() + (oy * OW + ox) * C;
      std::fill(acc, acc + C, is_max ? -std::numeric_limits<float>::infinity() : 0.0f);
      std::size_t count = 0;
      for (std::size_t py = 0; py < c.pool_h; ++py) {
        const long iy = static_cast<long>(oy * c.stride_h + py) - static_cast<long>(top);
        if (iy < 0 || iy >= static_cast<long>(H)) continue;
        for (std::size_t px = 0; px < c.pool_w; ++px) {
          const long ix = static_cast<long>(ox * c.stride_w + px) - static_cast<long>(left);
          if (ix < 0 || ix >= static_cast<long>(W)) continue;
          const float* src = x.data.data() + (static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix)) * C;
          if (is_max) {
            k.max(src, acc, C);
          } else {
            k.add(src, acc, C);
          }
          ++count;
        }
      }
      if (!is_max) {
        const float inv = 1.0f / static_cast<float>(count);
        for (std::size_t ch = 0; ch < C; ++ch) acc[ch] *= inv;
      }
    }
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  Tensor out = x;
  const std::size_t n = x.shape.back();
  for (std::size_t off = 0; off < out.size(); off += n) {
    float* row = out.data.data() + off;
    const float peak = *std::max_element(row, row + n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = std::exp(row[i] - peak);
      sum += row[i];
    }
    const auto inv = static_cast<float>(1.0 / sum);
    for (std::size_t i = 0; i < n; ++i) row[i] *= inv;
  }
  return out;
}

Tensor concat(const std::vector<const Tensor*>& parts, const Shape& shape) {
  Tensor out(shape);
  const std::size_t rows = out.size() / shape.back();
  float* dst = out.data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (const Tensor* t : parts) {
      const std::size_t n = t->shape.back();
      dst = std::copy_n(t->data.data() + r * n, n, dst);
    }
  }
  return out;
}

class Evaluator {
 public:
  explicit Evaluator(const ModelGraph& graph) : graph_(graph), values_(graph.node_count()) {}

  void seed(std::size_t index, Tensor value) {
    const Shape& expected = graph_.compiled(index).shape;
    if (value.shape != expected) {
      throw Error(ErrorCode::InputShapeMismatch, "node '" + graph_.nodes()[index].name + "' expects " +
                                                     shape_string(expected) + ", got " +
                                                     shape_string(value.shape));
    }
    values_[index] = std::move(value);
  }

  const Tensor& resolve(std::size_t index) {
    if (!values_[index]) values_[index] = compute(index);
    return *values_[index];
  }

 private:
  Tensor compute(std::size_t index) {
    const CompiledNode& c = graph_.compiled(index);
    if (c.op == OpKind::Input) {
      throw Error(ErrorCode::InputShapeMismatch, "no value supplied for input '" + graph_.nodes()[index].name + "'");
    }
    std::vector<const Tensor*> acts;
    for (const std::size_t a : c.activations) acts.push_back(&resolve(a));
    auto w = [&](std::size_t k) -> const Tensor& { return graph_.weight(c.weights[k]); };
    const Tensor* bias = c.weights.size() > 1 ? &w(1) : nullptr;

    switch (c.op) {
      case OpKind::Input:
        break;
      case OpKind::Conv2d:
        return conv2d(*acts[0], w(0), bias, c);
      case OpKind::Dense:
        return dense(*acts[0], w(0), bias, c);
      case OpKind::BatchNorm:
        return batch_norm(*acts[0], w(0), w(1), w(2), w(3), c.epsilon);
      case OpKind::Relu: {
        Tensor out = *acts[0];
        kernels::relu(out.data);
        return out;
      }
      case OpKind::Elu: {
        Tensor out = *acts[0];
        for (float& v : out.data) v = v > 0.0f ? v : c.alpha * std::expm1(v);
        return out;
      }
      case OpKind::Sigmoid: {
        Tensor out = *acts[0];
        for (float& v : out.data) v = 1.0f / (1.0f + std::exp(-v));
        return out;
      }
      case OpKind::Softmax:
        return softmax(*acts[0]);
      case OpKind::Dropout:
        return *acts[0];
      case OpKind::MaxPool2d:
        return pool2d(*acts[0], c, true);
      case OpKind::MeanPool2d:
        return pool2d(*acts[0], c, false);
      case OpKind::Flatten:
        return Tensor(c.shape, acts[0]->data);
      case OpKind::Concat:
        return concat(acts, c.shape);
    }
    throw Error(ErrorCode::UnsupportedOp, std::string(to_string(c.op)));
  }

  const ModelGraph& graph_;
  std::vector<std::optional<Tensor>> values_;
};

}  // namespace

Tensor forward(const ModelGraph& graph, const Tensor& input, std::string_view until) {
  const std::size_t target = graph.index_of(until);
  Evaluator eval(graph);
  eval.seed(graph.input_index(), input);
  return eval.resolve(target);
}

Tensor forward(const ModelGraph& graph, const Tensor& input) {
  return forward(graph, input, graph.output_name());
}

Tensor forward_from(const ModelGraph& graph, const std::vector<std::pair<std::string, Tensor>>& seeds,
                    std::string_view until) {
  const std::size_t target = graph.index_of(until);
  Evaluator eval(graph);
  for (const auto& [name, value] : seeds) eval.seed(graph.index_of(name), value);
  return eval.resolve(target);
}

std::size_t patch_count(std::size_t n_frames, int patch_frames) {
  return n_frames / static_cast<std::size_t>(patch_frames);
}

Tensor patch_input(const ModelGraph& graph, std::span<const float> frames, std::size_t n_frames,
                   std::size_t first) {
  const auto n_mels = static_cast<std::size_t>(graph.feature_config().n_mels);
  const auto pf = static_cast<std::size_t>(graph.patch_frames());
  Tensor t(graph.input_shape());
  const std::size_t available = first < n_frames ? std::min(pf, n_frames - first) : 0;
  std::copy_n(frames.begin() + static_cast<std::ptrdiff_t>(first * n_mels), available * n_mels, t.data.begin());
  return t;
}

std::vector<Tensor> patch_activations(const ModelGraph& graph, const MelSpectrogram& mel,
                                      std::string_view layer, bool pad_short) {
  if (mel.n_mels != graph.feature_config().n_mels) {
    throw Error(ErrorCode::InputShapeMismatch, "spectrogram has " + std::to_string(mel.n_mels) +
                                                   " bands, model expects " +
                                                   std::to_string(graph.feature_config().n_mels));
  }
  const std::size_t target = graph.index_of(layer);
  std::size_t patches = patch_count(mel.n_frames, graph.patch_frames());
  if (patches == 0) {
    if (!pad_short || mel.n_frames == 0) {
      throw Error(ErrorCode::TrackTooShort, std::to_string(mel.n_frames) + " frames < patch of " +
                                                std::to_string(graph.patch_frames()));
    }
    patches = 1;
  }
  std::vector<Tensor> out;
  out.reserve(patches);
  const auto pf = static_cast<std::size_t>(graph.patch_frames());
  for (std::size_t p = 0; p < patches; ++p) {
    Evaluator eval(graph);
    eval.seed(graph.input_index(), patch_input(graph, mel.data, mel.n_frames, p * pf));
    out.push_back(eval.resolve(target));
  }
  return out;
}

std::vector<float> aggregate(const std::vector<std::vector<float>>& per_patch, Aggregation how) {
  if (per_patch.empty()) throw Error(ErrorCode::TrackTooShort, "no patches to aggregate");
  const std::size_t n = per_patch.front().size();
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (how == Aggregation::Max) {
      float best = per_patch.front()[i];
      for (const auto& row : per_patch) best = std::max(best, row[i]);
      out[i] = best;
    } else {
      double sum = 0.0;
      for (const auto& row : per_patch) sum += row[i];
      out[i] = static_cast<float>(sum / static_cast<double>(per_patch.size()));
    }
  }
  return out;
}

Prediction predict(const ModelGraph& graph, const MelSpectrogram& mel, const PredictOptions& options) {
  Prediction pred;
  for (auto& t : patch_activations(graph, mel, graph.output_name(), options.pad_short)) {
    pred.per_patch.push_back(std::move(t.data));
  }
  pred.aggregated = aggregate(pred.per_patch, options.aggregation);
  pred.labels = graph.labels();
  return pred;
}

Prediction predict(const ModelGraph& graph, const AudioBuffer& buf, const PredictOptions& options) {
  const MelConfig& config = graph.feature_config();
  if (buf.sample_rate != graph.sample_rate()) {
    return predict(graph, mel_spectrogram(resample(buf, graph.sample_rate()), config), options);
  }
  if (buf.samples.size() < static_cast<std::size_t>(config.frame_size)) {
    if (!options.pad_short) {
      throw Error(ErrorCode::TrackTooShort, "track shorter than one analysis frame");
    }
    AudioBuffer padded = buf;
    padded.samples.resize(static_cast<std::size_t>(config.frame_size), 0.0f);
    return predict(graph, mel_spectrogram(padded, config), options);
  }
  return predict(graph, mel_spectrogram(buf, config), options);
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::string top_label(const Prediction& pred) {
  if (pred.aggregated.empty()) throw Error(ErrorCode::EmptyInput, "empty prediction");
  const std::size_t i = argmax(pred.aggregated);
  return i < pred.labels.size() ? pred.labels[i] : std::to_string(i);
}

}  // namespace melstream
