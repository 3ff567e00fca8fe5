#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melstream/audio_io.hpp"
#include "melstream/dsp.hpp"
#include "melstream/model.hpp"

namespace melstream {

// Test signals and a small randomly initialised tagger, used by the fixture
// tool, the benchmarks and the tests.

AudioBuffer sine_wave(double freq_hz, double seconds, int sample_rate, double amplitude = 0.5,
                      double phase = 0.0);

// Uniform white noise in [-amplitude, amplitude).
AudioBuffer white_noise(double seconds, int sample_rate, double amplitude, std::uint64_t seed);

// conv3x3(8) relu maxpool4 conv3x3(16) relu global-meanpool flatten dense softmax.
// The flatten node is the embedding.
ModelGraph make_toy_tagger(const MelConfig& config, int sample_rate, int patch_frames,
                           std::vector<std::string> labels, std::uint64_t seed);

}  // namespace melstream
