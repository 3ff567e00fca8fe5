#include "melstream/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "melstream/error.hpp"
#include "melstream/rng.hpp"

namespace melstream {

namespace {

std::map<std::string, std::vector<std::string>> members_by_class(const std::map<std::string, std::string>& labels) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [track, label] : labels) out[label].push_back(track);
  return out;
}

}  // namespace

RecallSummary recall_summary(const Predictions& predictions, const Truth& truth) {
  if (predictions.empty()) throw Error(ErrorCode::EmptyInput, "no predictions");
  RecallSummary s;
  for (const auto& [track, predicted] : predictions) {
    const auto it = truth.find(track);
    if (it == truth.end() || it->second.empty()) {
      throw Error(ErrorCode::InvalidDataset, "no ground truth for track '" + track + "'");
    }
    for (const auto& cls : it->second) {
      ++s.support[cls];
      s.hits.try_emplace(cls, 0);
    }
    if (it->second.contains(predicted)) ++s.hits[predicted];
  }
  double sum = 0.0;
  for (const auto& [cls, n] : s.support) {
    const double recall = static_cast<double>(s.hits[cls]) / static_cast<double>(n);
    s.per_class_recall[cls] = recall;
    sum += recall;
  }
  s.balanced_accuracy = sum / static_cast<double>(s.support.size());
  return s;
}

double balanced_accuracy(const Predictions& predictions, const Truth& truth) {
  return recall_summary(predictions, truth).balanced_accuracy;
}

ConfusionMatrix confusion_matrix(const Predictions& predictions, const std::map<std::string, std::string>& truth) {
  std::set<std::string> classes;
  for (const auto& [track, predicted] : predictions) {
    const auto it = truth.find(track);
    if (it == truth.end()) throw Error(ErrorCode::InvalidDataset, "no ground truth for track '" + track + "'");
    classes.insert(it->second);
    classes.insert(predicted);
  }
  ConfusionMatrix m;
  m.classes.assign(classes.begin(), classes.end());
  m.counts.assign(m.classes.size(), std::vector<std::size_t>(m.classes.size(), 0));
  auto index = [&](const std::string& c) {
    return static_cast<std::size_t>(std::lower_bound(m.classes.begin(), m.classes.end(), c) - m.classes.begin());
  };
  for (const auto& [track, predicted] : predictions) ++m.counts[index(truth.at(track))][index(predicted)];
  return m;
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  const std::size_t n = scores.size();
  const auto total_pos = static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(),
                                                                [](std::uint8_t p) { return p != 0; }));
  if (total_pos == 0) throw Error(ErrorCode::DegenerateClass, "class has no positive items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t i = 0;
  while (i < n) {
    const double threshold = scores[order[i]];
    while (i < n && scores[order[i]] == threshold) {
      tp += positive[order[i]] != 0 ? 1 : 0;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(i);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double auc_pr(const std::map<std::string, std::vector<float>>& scores, const Truth& truth,
              const std::vector<std::string>& labels) {
  if (scores.empty() || labels.empty()) throw Error(ErrorCode::EmptyInput, "no scores");
  double sum = 0.0;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    std::vector<double> s;
    std::vector<std::uint8_t> pos;
    for (const auto& [track, row] : scores) {
      const auto it = truth.find(track);
      if (it == truth.end()) throw Error(ErrorCode::InvalidDataset, "no ground truth for track '" + track + "'");
      if (row.size() != labels.size()) throw Error(ErrorCode::DimMismatch, "score vector length differs from labels");
      s.push_back(row[c]);
      pos.push_back(it->second.contains(labels[c]) ? 1 : 0);
    }
    try {
      sum += average_precision(s, pos);
    } catch (const Error&) {
      throw Error(ErrorCode::DegenerateClass, "class '" + labels[c] + "' has no positive tracks");
    }
  }
  return sum / static_cast<double>(labels.size());
}

std::vector<std::vector<std::string>> stratified_kfold(const std::map<std::string, std::string>& labels,
                                                       std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "k must be at least 2");
  const auto groups = members_by_class(labels);
  for (const auto& [cls, members] : groups) {
    if (members.size() < k) {
      throw Error(ErrorCode::ClassTooSmall, "class '" + cls + "' has " + std::to_string(members.size()) +
                                                " tracks, fewer than k = " + std::to_string(k));
    }
  }
  Rng rng(seed);
  std::vector<std::vector<std::string>> folds(k);
  std::size_t cursor = 0;
  for (auto [cls, members] : groups) {
    rng.shuffle(members);
    for (auto& track : members) {
      folds[cursor].push_back(std::move(track));
      cursor = (cursor + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Split stratified_split(const std::map<std::string, std::string>& labels, double validation_fraction,
                       std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "validation fraction must be in (0, 1)");
  }
  Rng rng(seed);
  Split split;
  for (auto [cls, members] : members_by_class(labels)) {
    if (members.size() < 2) {
      throw Error(ErrorCode::DegenerateDataset, "class '" + cls + "' needs at least 2 tracks for a validation split");
    }
    rng.shuffle(members);
    const auto n = static_cast<long>(members.size());
    const long n_val = std::clamp(std::lround(validation_fraction * static_cast<double>(n)), 1L, n - 1);
    for (long i = 0; i < n; ++i) {
      (i < n_val ? split.validation : split.train).push_back(members[static_cast<std::size_t>(i)]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

double mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double stdev(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double m = mean(values);
  double acc = 0.0;
  for (const double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size()));
}

}  // namespace melstream
