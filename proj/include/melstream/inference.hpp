#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "melstream/audio_io.hpp"
#include "melstream/dsp.hpp"
#include "melstream/model.hpp"
#include "melstream/tensor.hpp"

namespace melstream {

// Activation of node `until`. The input must match the graph's input shape
// exactly (InputShapeMismatch); `until` must exist (UnknownNode).
Tensor forward(const ModelGraph& graph, const Tensor& input, std::string_view until);
Tensor forward(const ModelGraph& graph, const Tensor& input);

// Evaluates `until` given known activations for any set of nodes. Only the
// nodes between the seeds and `until` are computed, so forward(g, x, out)
// equals forward_from(g, {{k, forward(g, x, k)}}, out) whenever every path
// from the input to `out` passes through k.
Tensor forward_from(const ModelGraph& graph, const std::vector<std::pair<std::string, Tensor>>& seeds,
                    std::string_view until);

enum class Aggregation { Mean, Max };

struct PredictOptions {
  Aggregation aggregation = Aggregation::Mean;
  // Zero-pad a track shorter than one patch instead of TrackTooShort.
  bool pad_short = false;
};

struct Prediction {
  std::vector<std::vector<float>> per_patch;  // P x n_classes
  std::vector<float> aggregated;
  std::vector<std::string> labels;
};

// Non-overlapping patches in a spectrogram of n_frames frames.
std::size_t patch_count(std::size_t n_frames, int patch_frames);

// Frames [first, first + patch_frames) reshaped to the graph input. Frames
// past the end of `frames` are zero.
Tensor patch_input(const ModelGraph& graph, std::span<const float> frames, std::size_t n_frames,
                   std::size_t first);

// Per-patch activations of `layer`, the patch grid of predict().
std::vector<Tensor> patch_activations(const ModelGraph& graph, const MelSpectrogram& mel,
                                      std::string_view layer, bool pad_short = false);

std::vector<float> aggregate(const std::vector<std::vector<float>>& per_patch, Aggregation how);

Prediction predict(const ModelGraph& graph, const MelSpectrogram& mel, const PredictOptions& options = {});

// Resamples to the model rate when needed, extracts features and predicts.
Prediction predict(const ModelGraph& graph, const AudioBuffer& buf, const PredictOptions& options = {});

// Label of the largest aggregated activation; ties go to the lowest index.
std::string top_label(const Prediction& pred);
std::size_t argmax(std::span<const float> values);

}  // namespace melstream
