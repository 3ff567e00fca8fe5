#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "melstream/dsp.hpp"
#include "melstream/model.hpp"
#include "melstream/rng.hpp"
#include "melstream/tensor.hpp"

// Slow, independent reference implementations used by the unit and
// acceptance tests.
namespace oracle {

// Direct O(N^2) DFT of the windowed, zero-padded frame.
std::vector<double> dft_spectrum(std::span<const float> frame, melstream::Window window, int fft_size,
                                 melstream::SpectrumType type);

// Explicit triangle weights in Hz, [n_mels][n_bins], normalisation applied.
std::vector<std::vector<double>> triangle_filters(const melstream::MelConfig& config, int sample_rate);

// Whole pipeline: frames x n_mels, row-major.
std::vector<double> mel_spectrogram(std::span<const float> signal, const melstream::MelConfig& config,
                                    int sample_rate);

// Relative error with a unit floor on the denominator (log outputs cross 0).
double max_relative_error(std::span<const float> got, std::span<const double> want);

struct RandomGraphOptions {
  int max_layers = 4;
  int max_dim = 16;
};

// Random valid network over [H, W, C] input with random weights.
melstream::GraphDef random_graph(melstream::Rng& rng, const RandomGraphOptions& options = {});

melstream::Tensor random_input(const melstream::Shape& shape, melstream::Rng& rng);

// Evaluates every node of `def` with nested loops in double precision;
// returns the activation of `until` (output when empty).
std::vector<double> evaluate(const melstream::GraphDef& def, const melstream::Tensor& input,
                             const std::string& until = {});

// Step-wise AP over every distinct score threshold.
double brute_force_ap(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

}  // namespace oracle
