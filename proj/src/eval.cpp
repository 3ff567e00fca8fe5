#include "melstream/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "melstream/error.hpp"
#include "melstream/inference.hpp"
#include "melstream/parallel.hpp"

namespace melstream {

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["balanced_accuracy"] = balanced_accuracy;
  j["per_class_recall"] = nlohmann::ordered_json::object();
  for (const auto& [c, r] : per_class_recall) j["per_class_recall"][c] = r;
  j["confusion"] = {{"classes", confusion.classes}, {"counts", confusion.counts}};
  j["n_evaluated"] = n_evaluated;
  j["n_discarded"] = n_discarded;
  j["stdev_across_folds"] = stdev_across_folds ? nlohmann::ordered_json(*stdev_across_folds) : nullptr;
  if (!fold_balanced_accuracy.empty()) j["fold_balanced_accuracy"] = fold_balanced_accuracy;
  return j.dump(2);
}

std::string format_mean_stdev(double mean, std::optional<double> stdev, int decimals) {
  char buf[64];
  if (stdev) {
    std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, mean, decimals, *stdev);
  } else {
    std::snprintf(buf, sizeof buf, "%.*f", decimals, mean);
  }
  return buf;
}

namespace {

EvalReport score_multilabel(const Predictions& predictions, const Truth& truth, std::size_t discarded) {
  const RecallSummary summary = recall_summary(predictions, truth);
  EvalReport report;
  report.balanced_accuracy = summary.balanced_accuracy;
  report.per_class_recall = summary.per_class_recall;
  report.n_evaluated = predictions.size();
  report.n_discarded = discarded;
  return report;
}

}  // namespace

EvalReport cross_collection_eval(const TrackClassifier& classify, const std::vector<std::string>& model_classes,
                                 const DatasetManifest& external, const Taxonomy& tax) {
  std::set<std::string> known;
  for (const auto& c : model_classes) known.insert(normalize_tag(c));

  Predictions predictions;
  Truth truth;
  std::size_t discarded = 0;
  for (const auto& entry : external.entries) {
    std::set<std::string> mapped;
    for (const auto& c : map_tags({entry.labels.begin(), entry.labels.end()}, tax)) {
      if (known.count(c) != 0) mapped.insert(c);
    }
    if (mapped.empty()) {
      ++discarded;
      continue;
    }
    std::string predicted;
    try {
      predicted = classify(entry);
    } catch (const Error&) {
      ++discarded;
      continue;
    }
    predictions[entry.track_id] = normalize_tag(predicted);
    truth[entry.track_id] = std::move(mapped);
  }
  if (predictions.empty()) {
    throw Error(ErrorCode::NoEvaluableTracks, "no track of '" + external.name + "' maps to a model class");
  }
  return score_multilabel(predictions, truth, discarded);
}

EvalReport cross_collection_eval(const ModelGraph& graph, const DatasetManifest& external, const Taxonomy& tax,
                                 std::size_t jobs) {
  if (graph.labels().empty()) throw Error(ErrorCode::InvalidConfig, "model has no labels");
  // Predict up front in parallel; failures become empty labels (discarded).
  std::vector<std::string> top(external.entries.size());
  parallel_for(external.entries.size(), jobs, [&](std::size_t i) {
    try {
      top[i] = top_label(predict(graph, load_pcm(external.entries[i].audio_path, graph.sample_rate())));
    } catch (const Error&) {
      top[i].clear();
    }
  });
  std::map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < external.entries.size(); ++i) row[external.entries[i].track_id] = i;
  auto classify = [&](const DatasetEntry& entry) {
    const std::string& label = top[row.at(entry.track_id)];
    if (label.empty()) throw Error(ErrorCode::TrackTooShort, "track '" + entry.track_id + "' not predicted");
    return label;
  };
  return cross_collection_eval(classify, graph.labels(), external, tax);
}

EvalReport crossval_run(const EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                        const HeadSpec& spec, const TrainSpec& train, const CrossvalOptions& options) {
  validate(train);
  const auto folds = stratified_kfold(labels, options.k, train.seed);

  struct FoldResult {
    Predictions predictions;
    RecallSummary summary;
  };
  std::vector<FoldResult> results(folds.size());
  parallel_for(folds.size(), options.jobs, [&](std::size_t f) {
    std::map<std::string, std::string> fold_train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g == f) continue;
      for (const auto& id : folds[g]) fold_train.emplace(id, labels.at(id));
    }
    TrainSpec fold_spec = train;
    fold_spec.seed = train.seed + f + 1;
    const HeadWeights head = train_head(table, fold_train, spec, fold_spec);
    Truth truth;
    for (const auto& id : folds[f]) {
      const auto probs = track_probabilities(head.params, *table.find(id));
      const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
      results[f].predictions[id] = head.classes[best];
      truth[id] = {labels.at(id)};
    }
    results[f].summary = recall_summary(results[f].predictions, truth);
  });

  EvalReport report;
  Predictions all;
  for (const auto& r : results) {
    report.fold_balanced_accuracy.push_back(r.summary.balanced_accuracy);
    for (const auto& [c, v] : r.summary.per_class_recall) report.per_class_recall[c] += v;
    all.insert(r.predictions.begin(), r.predictions.end());
  }
  for (auto& [c, v] : report.per_class_recall) v /= static_cast<double>(folds.size());
  double sum = 0.0;
  for (const auto& [c, v] : report.per_class_recall) sum += v;
  report.balanced_accuracy = sum / static_cast<double>(report.per_class_recall.size());
  report.stdev_across_folds = stdev(report.fold_balanced_accuracy);
  report.confusion = confusion_matrix(all, labels);
  report.n_evaluated = all.size();
  return report;
}

EvalReport crossval_run(const DatasetManifest& dataset, const ModelGraph& backbone, const HeadSpec& spec,
                        const TrainSpec& train, const CrossvalOptions& options) {
  const auto all_labels = dataset.single_labels();
  const EmbeddingTable table = extract_embeddings(backbone, dataset, {options.jobs});
  std::map<std::string, std::string> labels;
  for (const auto& [id, label] : all_labels) {
    if (table.find(id) != nullptr) labels.emplace(id, label);
  }
  EvalReport report = crossval_run(table, labels, spec, train, options);
  report.n_discarded = table.skipped.size();
  return report;
}

}  // namespace melstream
