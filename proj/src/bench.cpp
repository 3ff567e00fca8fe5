#include "melstream/bench.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <cstdio>

#include <json.hpp>

#include "melstream/audio_io.hpp"
#include "melstream/error.hpp"
#include "melstream/inference.hpp"
#include "melstream/model.hpp"

namespace melstream {

const PhaseTiming& BenchReport::phase(const std::string& name) const {
  for (const auto& p : phases) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::InvalidConfig, "no phase '" + name + "'");
}

std::string BenchReport::to_json() const {
  nlohmann::ordered_json j;
  j["audio_seconds"] = audio_seconds;
  j["trials"] = trials;
  j["patches"] = patches;
  for (const auto& p : phases) {
    j["phases"][p.name] = {{"mean_s", p.mean_seconds}, {"min_s", p.min_seconds}, {"max_s", p.max_seconds}};
  }
  j["real_time_factor"] = real_time_factor();
  return j.dump(2);
}

std::string BenchReport::to_text() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "audio: %.2f s, %zu patches, %zu trial(s)\n", audio_seconds, patches, trials);
  out += line;
  for (const auto& p : phases) {
    std::snprintf(line, sizeof line, "  %-20s %9.4f s  (min %.4f, max %.4f)\n", p.name.c_str(), p.mean_seconds,
                  p.min_seconds, p.max_seconds);
    out += line;
  }
  std::snprintf(line, sizeof line, "real-time factor: %.4f\n", real_time_factor());
  out += line;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
double time_once(Fn&& fn) {
  const auto start = Clock::now();
  fn();
  return std::chrono::duration<double>(Clock::now() - start).count();
}

PhaseTiming summarize(std::string name, const std::vector<double>& samples) {
  PhaseTiming t;
  t.name = std::move(name);
  double sum = 0.0;
  for (double s : samples) sum += s;
  t.mean_seconds = sum / static_cast<double>(samples.size());
  t.min_seconds = *std::min_element(samples.begin(), samples.end());
  t.max_seconds = *std::max_element(samples.begin(), samples.end());
  return t;
}

}  // namespace

BenchReport run_bench(const std::filesystem::path& audio, const std::filesystem::path& manifest,
                      const std::filesystem::path& weights, std::size_t trials) {
  if (trials == 0) throw Error(ErrorCode::InvalidConfig, "trials must be positive");
  std::vector<double> t_audio, t_features, t_load, t_infer, t_total;
  BenchReport report;
  report.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::optional<ModelGraph> graph;
    t_load.push_back(time_once([&] { graph.emplace(load_model(manifest, weights)); }));
    AudioBuffer buf;
    t_audio.push_back(time_once([&] { buf = load_pcm(audio, graph->sample_rate()); }));
    MelSpectrogram mel;
    t_features.push_back(time_once([&] { mel = mel_spectrogram(buf, graph->feature_config()); }));
    Prediction pred;
    t_infer.push_back(time_once([&] { pred = predict(*graph, mel); }));
    report.audio_seconds = static_cast<double>(buf.samples.size()) / buf.sample_rate;
    report.patches = pred.per_patch.size();

    t_total.push_back(time_once([&] {
      const ModelGraph g = load_model(manifest, weights);
      const AudioBuffer b = load_pcm(audio, g.sample_rate());
      const Prediction p = predict(g, mel_spectrogram(b, g.feature_config()));
      if (p.aggregated.empty()) throw Error(ErrorCode::InvalidConfig, "empty prediction");
    }));
  }
  report.phases = {summarize("audio_load", t_audio), summarize("feature_extraction", t_features),
                   summarize("model_load", t_load), summarize("inference", t_infer),
                   summarize("end_to_end", t_total)};
  return report;
}

}  // namespace melstream
