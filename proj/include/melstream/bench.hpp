#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace melstream {

struct PhaseTiming {
  std::string name;
  double mean_seconds = 0.0;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
};

struct BenchReport {
  double audio_seconds = 0.0;
  std::size_t trials = 0;
  std::size_t patches = 0;
  // audio load, feature extraction, model load, inference, end-to-end
  std::vector<PhaseTiming> phases;

  const PhaseTiming& phase(const std::string& name) const;
  double real_time_factor() const { return phase("end_to_end").mean_seconds / audio_seconds; }

  std::string to_json() const;
  std::string to_text() const;
};

// Each trial times every phase once in sequence, then the whole pipeline
// (load audio, extract, load model, predict) end to end.
BenchReport run_bench(const std::filesystem::path& audio, const std::filesystem::path& manifest,
                      const std::filesystem::path& weights, std::size_t trials = 10);

}  // namespace melstream
