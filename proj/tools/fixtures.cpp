// Generates demo inputs: tone WAVs, a two-tone dataset and a random toy model.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "melstream/audio_io.hpp"
#include "melstream/dataset.hpp"
#include "melstream/error.hpp"
#include "melstream/synth.hpp"
#include "melstream/text_io.hpp"
#include "melstream/transfer.hpp"

namespace fs = std::filesystem;
using namespace melstream;

int main(int argc, char** argv) {
  CLI::App app{"melstream-fixtures: synthetic audio and models for demos and tests"};
  app.require_subcommand(1);

  double freq = 1000.0, seconds = 3.0, amplitude = 0.5;
  int rate = kCanonicalSampleRate;
  std::string out;
  auto* tone = app.add_subcommand("tone", "Write a sine tone WAV");
  tone->add_option("output", out, "WAV path")->required();
  tone->add_option("--freq", freq, "Frequency in Hz");
  tone->add_option("--seconds", seconds, "Duration");
  tone->add_option("--rate", rate, "Sample rate");
  tone->add_option("--amplitude", amplitude, "Peak amplitude");

  std::string preset = "musicnn-96";
  std::string labels_csv = "low,high";
  double patch_seconds = 3.0;
  std::uint64_t seed = 42;
  auto* toy = app.add_subcommand("toy-model", "Write a randomly initialised tagger as PREFIX.manifest/.weights");
  toy->add_option("prefix", out, "Output prefix")->required();
  toy->add_option("--preset", preset, "Mel front end");
  toy->add_option("--labels", labels_csv, "Comma-separated labels");
  toy->add_option("--patch-seconds", patch_seconds, "Patch length");
  toy->add_option("--seed", seed, "Weight seed");

  std::size_t per_class = 10;
  auto* tones = app.add_subcommand("tone-dataset", "Write 1 kHz / 4 kHz clips and dataset.csv into a directory");
  tones->add_option("dir", out, "Output directory")->required();
  tones->add_option("--per-class", per_class, "Clips per class");
  tones->add_option("--seconds", seconds, "Clip duration");
  tones->add_option("--seed", seed, "Noise seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (tone->parsed()) {
      write_wav(out, sine_wave(freq, seconds, rate, amplitude));
    } else if (toy->parsed()) {
      const Preset& p = find_preset(preset);
      const auto labels = text::split(labels_csv, ',');
      const ModelGraph g =
          make_toy_tagger(p.config, p.sample_rate, frames_for_seconds(p.config, p.sample_rate, patch_seconds),
                          labels, seed);
      save_model(g, out + ".manifest", out + ".weights");
    } else {
      fs::create_directories(out);
      DatasetManifest ds;
      ds.name = "tones";
      for (std::size_t i = 0; i < 2 * per_class; ++i) {
        const bool high = i % 2 == 1;
        AudioBuffer buf = sine_wave(high ? 4000.0 : 1000.0, seconds, kCanonicalSampleRate, 0.3, 0.1 * i);
        const AudioBuffer noise = white_noise(seconds, kCanonicalSampleRate, 0.05, seed + i);
        for (std::size_t s = 0; s < buf.samples.size(); ++s) buf.samples[s] += noise.samples[s];
        char name[32];
        std::snprintf(name, sizeof name, "clip%03zu.wav", i);
        write_wav(fs::path(out) / name, buf);
        ds.entries.push_back({std::string(name, 7), name, {high ? "high" : "low"}});
      }
      text::write_text(fs::path(out) / "dataset.csv", write_dataset(ds));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
