#include <doctest.h>

#include <cmath>
#include <set>

#include "melstream/error.hpp"
#include "melstream/eval.hpp"
#include "melstream/metrics.hpp"
#include "melstream/synth.hpp"
#include "melstream/taxonomy.hpp"
#include "oracles.hpp"
#include "transfer_fixtures.hpp"

using namespace melstream;

namespace {

std::map<std::string, std::string> class_sizes(const std::vector<std::size_t>& sizes) {
  std::map<std::string, std::string> labels;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    for (std::size_t i = 0; i < sizes[c]; ++i) {
      labels["c" + std::to_string(c) + "_" + std::to_string(i)] = "c" + std::to_string(c);
    }
  }
  return labels;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

const char* kTaxonomy =
    "classes\trock\tpop\tjazz\n"
    "alias\thiphop\thip hop\n"
    "classes\thip hop\n"
    "progressive rock\trock\n"
    "art rock\tprogressive rock\n"
    "bebop\tjazz\n";

}  // namespace

TEST_CASE("stratified k-fold examples") {
  SUBCASE("gtzan-shaped") {
    const auto labels = class_sizes(std::vector<std::size_t>(10, 100));
    const auto folds = stratified_kfold(labels, 5, 42);
    REQUIRE(folds.size() == 5);
    std::set<std::string> seen;
    for (const auto& f : folds) {
      CHECK(f.size() == 200);
      std::map<std::string, int> per_class;
      for (const auto& id : f) {
        ++per_class[labels.at(id)];
        CHECK(seen.insert(id).second);
      }
      for (const auto& [c, n] : per_class) CHECK(n == 20);
    }
    CHECK(seen.size() == 1000);
  }
  SUBCASE("two classes of five") {
    const auto labels = class_sizes({5, 5});
    for (const auto& f : stratified_kfold(labels, 5, 1)) {
      std::map<std::string, int> per_class;
      for (const auto& id : f) ++per_class[labels.at(id)];
      CHECK(per_class == std::map<std::string, int>{{"c0", 1}, {"c1", 1}});
    }
  }
  SUBCASE("seven and eight") {
    const auto labels = class_sizes({7, 8});
    for (const auto& f : stratified_kfold(labels, 5, 3)) {
      std::map<std::string, int> per_class;
      for (const auto& id : f) ++per_class[labels.at(id)];
      for (const auto& [c, n] : per_class) CHECK((n == 1 || n == 2));
    }
  }
  CHECK(code_of([] { stratified_kfold(class_sizes({3, 10}), 5, 1); }) == ErrorCode::ClassTooSmall);
  CHECK(stratified_kfold(class_sizes({9, 11}), 5, 7) == stratified_kfold(class_sizes({9, 11}), 5, 7));
}

TEST_CASE("balanced accuracy examples") {
  Truth truth;
  Predictions pred;
  for (int i = 0; i < 4; ++i) {
    truth["a" + std::to_string(i)] = {"a"};
    pred["a" + std::to_string(i)] = i < 3 ? "a" : "b";
  }
  for (int i = 0; i < 2; ++i) {
    truth["b" + std::to_string(i)] = {"b"};
    pred["b" + std::to_string(i)] = i < 1 ? "b" : "a";
  }
  CHECK(balanced_accuracy(pred, truth) == doctest::Approx(0.625).epsilon(1e-12));

  Predictions all_a;
  for (const auto& [id, t] : truth) all_a[id] = "a";
  Truth balanced = truth;
  balanced.erase("a2");
  balanced.erase("a3");
  Predictions all_a_balanced = all_a;
  all_a_balanced.erase("a2");
  all_a_balanced.erase("a3");
  CHECK(balanced_accuracy(all_a_balanced, balanced) == doctest::Approx(0.5));

  Predictions perfect;
  for (const auto& [id, t] : truth) perfect[id] = *t.begin();
  CHECK(balanced_accuracy(perfect, truth) == 1.0);

  CHECK(code_of([] { balanced_accuracy({}, {}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("multi-label hits count for the predicted class only") {
  const Truth truth{{"t1", {"a", "b"}}, {"t2", {"b"}}};
  const Predictions pred{{"t1", "a"}, {"t2", "b"}};
  const RecallSummary s = recall_summary(pred, truth);
  CHECK(s.per_class_recall.at("a") == 1.0);
  CHECK(s.per_class_recall.at("b") == 0.5);
  CHECK(s.balanced_accuracy == 0.75);
}

TEST_CASE("balanced accuracy ignores duplication of one class") {
  Truth truth;
  Predictions pred;
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    const std::string id = "t" + std::to_string(i);
    truth[id] = {std::string(1, static_cast<char>('a' + i % 3))};
    pred[id] = std::string(1, static_cast<char>('a' + rng.below(3)));
  }
  const double base = balanced_accuracy(pred, truth);
  Truth t2 = truth;
  Predictions p2 = pred;
  for (const auto& [id, t] : truth) {
    if (*t.begin() == "b") {
      t2[id + "dup"] = t;
      p2[id + "dup"] = pred.at(id);
    }
  }
  CHECK(balanced_accuracy(p2, t2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("average precision examples") {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6};
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  CHECK(average_precision(s, y) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(average_precision(s, std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
  CHECK(code_of([&] { average_precision(s, std::vector<std::uint8_t>{0, 0, 0, 0}); }) == ErrorCode::DegenerateClass);

  const std::vector<double> tied{0.5, 0.5, 0.5, 0.1};
  const std::vector<std::uint8_t> ty{1, 0, 1, 1};
  CHECK(average_precision(tied, ty) == doctest::Approx(oracle::brute_force_ap(tied, ty)).epsilon(1e-12));
}

TEST_CASE("average precision matches enumeration on small random sets") {
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    std::vector<double> scores(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.below(5)) / 4.0;  // many ties
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    y[0] = 1;
    CHECK(average_precision(scores, y) == doctest::Approx(oracle::brute_force_ap(scores, y)).epsilon(1e-12));
  }
}

TEST_CASE("auc_pr is macro-averaged") {
  const std::vector<std::string> labels{"x", "y"};
  const std::map<std::string, std::vector<float>> scores{
      {"t1", {0.9f, 0.1f}}, {"t2", {0.8f, 0.7f}}, {"t3", {0.2f, 0.6f}}, {"t4", {0.1f, 0.3f}}};
  const Truth truth{{"t1", {"x"}}, {"t2", {"y"}}, {"t3", {"x", "y"}}, {"t4", {}}};
  const double ap_x = average_precision(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<std::uint8_t>{1, 0, 1, 0});
  const double ap_y = average_precision(std::vector<double>{0.1, 0.7, 0.6, 0.3}, std::vector<std::uint8_t>{0, 1, 1, 0});
  CHECK(auc_pr(scores, truth, labels) == doctest::Approx((ap_x + ap_y) / 2.0));
}

TEST_CASE("AP of random scores is near the positive rate") {
  Rng rng(5);
  double sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(100);
    std::vector<std::uint8_t> y(100);
    for (std::size_t i = 0; i < 100; ++i) {
      s[i] = rng.uniform();
      y[i] = i < 50;
    }
    sum += average_precision(s, y);
  }
  CHECK(std::abs(sum / 1000.0 - 0.5) <= 0.05);
}

TEST_CASE("stratified split proportions") {
  const auto labels = class_sizes({10, 7, 2});
  const Split s = stratified_split(labels, 0.2, 1);
  std::map<std::string, int> val;
  for (const auto& id : s.validation) ++val[labels.at(id)];
  CHECK(val["c0"] == 2);
  CHECK(val["c1"] == 1);
  CHECK(val["c2"] == 1);
  CHECK(s.train.size() + s.validation.size() == 19);
  CHECK(code_of([] { stratified_split(class_sizes({5, 1}), 0.2, 1); }) == ErrorCode::DegenerateDataset);
}

TEST_CASE("mean and population stdev") {
  CHECK(mean(std::vector<double>{1, 2, 3}) == 2.0);
  CHECK(stdev(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(2.0));
}

TEST_CASE("confusion matrix rows sum to class counts") {
  const std::map<std::string, std::string> truth{{"1", "a"}, {"2", "a"}, {"3", "b"}};
  const Predictions pred{{"1", "a"}, {"2", "b"}, {"3", "b"}};
  const ConfusionMatrix m = confusion_matrix(pred, truth);
  CHECK(m.classes == std::vector<std::string>{"a", "b"});
  CHECK(m.counts == std::vector<std::vector<std::size_t>>{{1, 1}, {0, 1}});
}

TEST_CASE("taxonomy mapping") {
  const Taxonomy tax = parse_taxonomy(kTaxonomy);
  CHECK(map_tags({"progressive rock"}, tax) == std::set<std::string>{"rock"});
  CHECK(map_tags({"Art Rock "}, tax) == std::set<std::string>{"rock"});
  CHECK(map_tags({"rock"}, tax) == std::set<std::string>{"rock"});
  CHECK(map_tags({"zzz-unknown-tag"}, tax).empty());
  CHECK(map_tags({"hiphop", "bebop"}, tax) == std::set<std::string>{"hip hop", "jazz"});
  const auto once = map_tags({"art rock", "bebop", "pop"}, tax);
  CHECK(map_tags(once, tax) == once);

  CHECK(code_of([] { parse_taxonomy("classes\trock\na\tb\nb\ta\n"); }) == ErrorCode::InvalidDataset);
  CHECK(code_of([] { parse_taxonomy("classes\trock\nalias\tx\tpolka\n"); }) == ErrorCode::InvalidDataset);
}

TEST_CASE("shipped taxonomy maps progressive rock to rock") {
  const Taxonomy tax = load_taxonomy(MELSTREAM_DATA_DIR "/taxonomy.tsv");
  CHECK(map_tags({"progressive rock"}, tax) == std::set<std::string>{"rock"});
}

TEST_CASE("cross-collection evaluation with a callback") {
  const Taxonomy tax = parse_taxonomy(kTaxonomy);
  DatasetManifest ext;
  ext.label_mode = LabelMode::Multi;
  ext.entries = {{"1", "", {"progressive rock"}}, {"2", "", {"bebop", "pop"}}, {"3", "", {"polka"}},
                 {"4", "", {"hiphop"}}, {"5", "", {"pop"}}};
  // Model knows rock, pop and jazz only; hip hop is not predictable.
  const std::vector<std::string> classes{"Rock", "Pop", "Jazz"};
  const std::map<std::string, std::string> answers{{"1", "rock"}, {"2", "pop"}, {"5", "pop"}};
  const EvalReport r = cross_collection_eval(
      [&](const DatasetEntry& e) { return answers.at(e.track_id); }, classes, ext, tax);
  CHECK(r.n_evaluated == 3);
  CHECK(r.n_discarded == 2);
  CHECK(r.balanced_accuracy == doctest::Approx((1.0 + 1.0 + 0.0) / 3.0));
  double sum = 0.0;
  for (const auto& [c, v] : r.per_class_recall) sum += v;
  CHECK(std::abs(r.balanced_accuracy - sum / r.per_class_recall.size()) <= 1e-12);

  DatasetManifest none;
  none.entries = {{"1", "", {"polka"}}};
  CHECK(code_of([&] { cross_collection_eval([](const DatasetEntry&) { return std::string("rock"); }, classes, none, tax); }) ==
        ErrorCode::NoEvaluableTracks);
}

TEST_CASE("cross-collection evaluation with a model") {
  const auto dir = oracle::temp_dir("xeval");
  const MelConfig c = find_preset("musicnn-96").config;
  const ModelGraph g = make_toy_tagger(c, 16000, 50, {"rock", "jazz"}, 1);
  write_wav(dir / "a.wav", white_noise(2.0, 16000, 0.3, 1));
  write_wav(dir / "b.wav", white_noise(2.0, 16000, 0.3, 2));
  const DatasetManifest ds = parse_dataset(
      "track_id,audio_path,labels\na,a.wav,progressive rock;bebop\nb,b.wav,rock\nc,missing.wav,rock\nd,a.wav,polka\n",
      dir, "ext", LabelMode::Multi);
  const EvalReport r = cross_collection_eval(g, ds, parse_taxonomy(kTaxonomy));
  CHECK(r.n_evaluated == 2);
  CHECK(r.n_discarded == 2);
}

TEST_CASE("crossval with perfect and random features") {
  auto perfect = fixtures::separable_embeddings(100, 10, 2, 1);
  TrainSpec t;
  t.max_epochs = 40;
  t.initial_lr = 0.01;
  const EvalReport r = crossval_run(perfect.table, perfect.labels, {HeadVariant::A, 2, 100}, t);
  CHECK(r.balanced_accuracy == 1.0);
  CHECK(*r.stdev_across_folds == 0.0);
  CHECK(r.n_evaluated == 100);
  CHECK(format_mean_stdev(r.balanced_accuracy, r.stdev_across_folds) == "1.00±0.00");

  std::size_t row_total = 0;
  for (const auto& row : r.confusion.counts) {
    for (auto n : row) row_total += n;
  }
  CHECK(row_total == 100);

  auto noise = fixtures::separable_embeddings(200, 10, 2, 2);
  // Balanced labels independent of the features.
  std::vector<std::string> shuffled;
  for (std::size_t i = 0; i < noise.labels.size(); ++i) shuffled.push_back(i % 2 ? "a" : "b");
  Rng rng(3);
  rng.shuffle(shuffled);
  std::size_t i = 0;
  for (auto& [id, label] : noise.labels) label = shuffled[i++];
  const EvalReport chance = crossval_run(noise.table, noise.labels, {HeadVariant::A, 2, 100}, t, {5, 2});
  CHECK(std::abs(chance.balanced_accuracy - 0.5) <= 0.1);

  const EvalReport parallel = crossval_run(perfect.table, perfect.labels, {HeadVariant::A, 2, 100}, t, {5, 3});
  CHECK(parallel.to_json() == r.to_json());
}

TEST_CASE("report formatting") {
  CHECK(format_mean_stdev(0.9412, 0.0203) == "0.94±0.02");
  CHECK(format_mean_stdev(0.5, std::nullopt) == "0.50");
}
