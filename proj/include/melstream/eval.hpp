#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "melstream/dataset.hpp"
#include "melstream/metrics.hpp"
#include "melstream/model.hpp"
#include "melstream/taxonomy.hpp"
#include "melstream/transfer.hpp"

namespace melstream {

struct EvalReport {
  double balanced_accuracy = 0.0;
  std::map<std::string, double> per_class_recall;
  ConfusionMatrix confusion;  // empty for multi-label runs
  std::size_t n_evaluated = 0;
  std::size_t n_discarded = 0;
  std::optional<double> stdev_across_folds;
  std::vector<double> fold_balanced_accuracy;

  std::string to_json() const;
};

// "0.94±0.02"; just the mean when there is no stdev.
std::string format_mean_stdev(double mean, std::optional<double> stdev, int decimals = 2);

// Top label for one external track.
using TrackClassifier = std::function<std::string(const DatasetEntry&)>;

// Tags are mapped through the taxonomy; tracks whose mapped set shares no
// class with `model_classes` are discarded. Kept tracks are scored with the
// multi-label hit rule. Class names are compared after normalize_tag.
// NoEvaluableTracks if nothing is kept.
EvalReport cross_collection_eval(const TrackClassifier& classify, const std::vector<std::string>& model_classes,
                                 const DatasetManifest& external, const Taxonomy& tax);

// As above with the model's top label. Tracks that fail to load or are
// shorter than one patch are counted as discarded.
EvalReport cross_collection_eval(const ModelGraph& graph, const DatasetManifest& external, const Taxonomy& tax,
                                 std::size_t jobs = 1);

struct CrossvalOptions {
  std::size_t k = 5;
  std::size_t jobs = 1;
};

// k-fold protocol on precomputed embeddings. Fold f trains with seed
// train.seed + f + 1 on the other folds (which are split again into
// train/validation) and predicts the held-out fold. Per-class recall is the
// fold mean; the confusion matrix is summed over folds.
EvalReport crossval_run(const EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                        const HeadSpec& spec, const TrainSpec& train, const CrossvalOptions& options = {});

// Extracts embeddings from `backbone` first; tracks that cannot be embedded
// are counted as discarded.
EvalReport crossval_run(const DatasetManifest& dataset, const ModelGraph& backbone, const HeadSpec& spec,
                        const TrainSpec& train, const CrossvalOptions& options = {});

}  // namespace melstream
