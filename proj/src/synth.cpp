#include "melstream/synth.hpp"

#include <cmath>
#include <numbers>

#include "melstream/rng.hpp"

namespace melstream {

AudioBuffer sine_wave(double freq_hz, double seconds, int sample_rate, double amplitude, double phase) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(static_cast<std::size_t>(std::llround(seconds * sample_rate)));
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    buf.samples[i] = static_cast<float>(amplitude * std::sin(w * static_cast<double>(i) + phase));
  }
  return buf;
}

AudioBuffer white_noise(double seconds, int sample_rate, double amplitude, std::uint64_t seed) {
  Rng rng(seed);
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.resize(static_cast<std::size_t>(std::llround(seconds * sample_rate)));
  for (float& s : buf.samples) s = static_cast<float>(rng.uniform(-amplitude, amplitude));
  return buf;
}

namespace {

Tensor random_tensor(Shape shape, double scale, Rng& rng) {
  std::vector<float> data(shape_product(shape));
  for (float& v : data) v = static_cast<float>(rng.uniform(-scale, scale));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

ModelGraph make_toy_tagger(const MelConfig& config, int sample_rate, int patch_frames,
                           std::vector<std::string> labels, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n_classes = labels.size();
  GraphDef def;
  def.feature_config = config;
  def.sample_rate = sample_rate;
  def.patch_frames = patch_frames;
  def.labels = std::move(labels);
  def.input = "mel";
  def.embedding = "embedding";
  def.output = "probs";

  def.weights.emplace("conv1/kernel", random_tensor({3, 3, 1, 8}, 0.5, rng));
  def.weights.emplace("conv1/bias", random_tensor({8}, 0.1, rng));
  def.weights.emplace("conv2/kernel", random_tensor({3, 3, 8, 16}, 0.2, rng));
  def.weights.emplace("conv2/bias", random_tensor({16}, 0.1, rng));
  def.weights.emplace("dense/kernel", random_tensor({16, n_classes}, 0.5, rng));
  def.weights.emplace("dense/bias", random_tensor({n_classes}, 0.1, rng));

  const std::size_t pooled_t = (static_cast<std::size_t>(patch_frames) + 3) / 4;
  const std::size_t pooled_m = (static_cast<std::size_t>(config.n_mels) + 3) / 4;
  auto node = [&](std::string name, OpKind op, std::vector<std::string> inputs,
                  std::map<std::string, std::string> params = {}) {
    def.nodes.push_back({std::move(name), op, std::move(params), std::move(inputs)});
  };
  node("mel", OpKind::Input, {},
       {{"shape", std::to_string(patch_frames) + "," + std::to_string(config.n_mels) + ",1"}});
  node("conv1", OpKind::Conv2d, {"mel", "conv1/kernel", "conv1/bias"}, {{"padding", "same"}});
  node("relu1", OpKind::Relu, {"conv1"});
  node("pool1", OpKind::MaxPool2d, {"relu1"}, {{"pool", "4"}, {"padding", "same"}});
  node("conv2", OpKind::Conv2d, {"pool1", "conv2/kernel", "conv2/bias"}, {{"padding", "same"}});
  node("relu2", OpKind::Relu, {"conv2"});
  node("pool2", OpKind::MeanPool2d, {"relu2"},
       {{"pool", std::to_string(pooled_t) + "," + std::to_string(pooled_m)}});
  node("embedding", OpKind::Flatten, {"pool2"});
  node("dense", OpKind::Dense, {"embedding", "dense/kernel", "dense/bias"});
  node("probs", OpKind::Softmax, {"dense"});
  return ModelGraph(std::move(def));
}

}  // namespace melstream
