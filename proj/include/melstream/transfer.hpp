#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "melstream/dataset.hpp"
#include "melstream/model.hpp"
#include "melstream/rng.hpp"

namespace melstream {

// --- embeddings -------------------------------------------------------------

struct TrackEmbeddings {
  std::string track_id;
  std::vector<std::vector<float>> patches;
};

struct SkippedTrack {
  std::string track_id;
  std::string reason;
};

struct EmbeddingTable {
  std::vector<TrackEmbeddings> rows;
  std::size_t dim = 0;
  std::string source_layer;
  std::vector<SkippedTrack> skipped;

  // DimMismatch if a vector has the wrong length; InvalidDataset on an empty
  // patch list or a duplicate id.
  void add(std::string track_id, std::vector<std::vector<float>> patches);
  const TrackEmbeddings* find(const std::string& track_id) const;

 private:
  std::map<std::string, std::size_t> index_;
};

struct ExtractOptions {
  std::size_t jobs = 1;
};

// One vector per patch per track from the graph's embedding layer. Tracks that
// fail to load or are too short are recorded in `skipped`; rows keep manifest order.
EmbeddingTable extract_embeddings(const ModelGraph& graph, const DatasetManifest& dataset,
                                  const ExtractOptions& options = {});

// Tensor container with one [patches, dim] entry per track.
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Input -> flatten. Its embedding is the mel patch itself.
ModelGraph make_identity_backbone(const MelConfig& config, int sample_rate, int patch_frames);

// Frames in a window of `seconds` (e.g. 186 for 3 s with the musicnn-96 preset).
int frames_for_seconds(const MelConfig& config, int sample_rate, double seconds);

// --- head -------------------------------------------------------------------

enum class HeadVariant { A, B };

struct HeadSpec {
  HeadVariant variant = HeadVariant::A;
  std::size_t n_classes = 2;
  std::size_t hidden = 100;  // variant B only
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainSpec {
  std::size_t batch_size = 32;
  double segment_seconds = 3.0;
  AdamConfig adam;
  double initial_lr = 0.001;
  std::size_t lr_patience_epochs = 75;
  double lr_factor = 0.5;
  std::size_t max_epochs = 150;
  std::uint64_t seed = 42;
  double val_fraction = 0.2;
};

inline constexpr std::size_t kFromScratchEpochs = 600;

void validate(const TrainSpec& spec);

struct DenseShape {
  std::size_t in = 0;
  std::size_t out = 0;
};

// Dense layers stored flat, per layer the kernel [in, out] then the bias [out].
// Hidden layers use ReLU; the last layer feeds a softmax.
struct HeadParams {
  std::vector<DenseShape> layers;
  std::vector<double> values;

  std::size_t offset(std::size_t layer) const;
  std::span<const double> kernel(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }
};

// Glorot-uniform kernels, zero biases.
HeadParams init_head(const HeadSpec& spec, std::size_t input_dim, Rng& rng);

std::vector<double> head_probabilities(const HeadParams& head, std::span<const float> x);

// Mean cross-entropy over the batch; fills `grad` (same layout as head) when given.
double head_loss(const HeadParams& head, std::span<const std::span<const float>> xs,
                 std::span<const std::size_t> ys, std::vector<double>* grad = nullptr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update in place. NonFiniteGradient on NaN/Inf.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config = {});

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct HeadWeights {
  HeadSpec spec;
  std::vector<std::string> classes;  // output unit order
  HeadParams params;
  std::vector<EpochLog> training_log;
  std::size_t best_epoch = 0;
  std::vector<std::string> train_tracks;
  std::vector<std::string> val_tracks;
};

// Stratified 80/20 track split; batches of distinct tracks with one random
// patch each; LR multiplied by lr_factor after lr_patience_epochs without a
// new best validation loss (patience restarts after each drop); returns the
// best-validation-loss weights. Deterministic given the seed.
HeadWeights train_head(const EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                       const HeadSpec& spec, const TrainSpec& train);

// Track-level class probabilities: mean over the track's patches.
std::vector<double> track_probabilities(const HeadParams& head, const TrackEmbeddings& track);

// Backbone up to its embedding followed by the head; DimMismatch if the head
// input differs from the embedding size.
ModelGraph export_head(const HeadWeights& weights, const ModelGraph& backbone);

std::string training_log_jsonl(const std::vector<EpochLog>& log);

}  // namespace melstream
