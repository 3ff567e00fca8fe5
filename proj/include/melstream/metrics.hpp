#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace melstream {

using Truth = std::map<std::string, std::set<std::string>>;
using Predictions = std::map<std::string, std::string>;

struct RecallSummary {
  double balanced_accuracy = 0.0;
  std::map<std::string, double> per_class_recall;
  std::map<std::string, std::size_t> support;  // tracks with the class in their truth set
  std::map<std::string, std::size_t> hits;
};

// Per-class recall over the predicted tracks. A prediction is correct when
// it is one of the track's true labels; it then counts as a hit for the
// predicted class only, while the track enters the denominator of every one
// of its true classes. Classes without truth instances are left out.
// EmptyInput if there are no predictions; InvalidDataset if a predicted
// track has no truth.
RecallSummary recall_summary(const Predictions& predictions, const Truth& truth);

double balanced_accuracy(const Predictions& predictions, const Truth& truth);

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;  // [truth][predicted]
};

// Single-label truth only; classes are the sorted union of truth and predictions.
ConfusionMatrix confusion_matrix(const Predictions& predictions, const std::map<std::string, std::string>& truth);

// Average precision with tied scores treated as one threshold:
// AP = sum over distinct thresholds of (R_t - R_{t-1}) * P_t.
// DegenerateClass when there are no positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Macro-averaged AP over `labels`; scores[track][i] belongs to labels[i].
double auc_pr(const std::map<std::string, std::vector<float>>& scores, const Truth& truth,
              const std::vector<std::string>& labels);

// Deals each class's shuffled members round-robin over k folds, continuing
// the fold cursor across classes so fold sizes also stay within one.
// ClassTooSmall if a class has fewer than k members.
std::vector<std::vector<std::string>> stratified_kfold(const std::map<std::string, std::string>& labels,
                                                       std::size_t k, std::uint64_t seed);

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

// Per class, round(fraction * n) tracks (clamped to [1, n-1]) go to validation.
Split stratified_split(const std::map<std::string, std::string>& labels, double validation_fraction,
                       std::uint64_t seed);

double mean(std::span<const double> values);
// Population standard deviation.
double stdev(std::span<const double> values);

}  // namespace melstream
