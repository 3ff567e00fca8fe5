#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "melstream/error.hpp"
#include "melstream/inference.hpp"
#include "melstream/kernels.hpp"
#include "melstream/model.hpp"
#include "melstream/synth.hpp"
#include "oracles.hpp"

using namespace melstream;

namespace {

ErrorCode build_error(GraphDef def) {
  try {
    ModelGraph g(std::move(def));
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

GraphDef dense_def(std::size_t in, std::size_t out) {
  GraphDef def;
  def.input = "x";
  def.output = "y";
  def.embedding = "x";
  def.feature_config.n_mels = static_cast<int>(in);
  def.patch_frames = 1;
  def.nodes = {{"x", OpKind::Input, {{"shape", std::to_string(in)}}, {}},
               {"y", OpKind::Dense, {}, {"x", "w1", "b1"}}};
  def.weights.emplace("w1", Tensor({in, out}, std::vector<float>(in * out, 0.01f)));
  def.weights.emplace("b1", Tensor({out}, std::vector<float>(out, 0.0f)));
  for (std::size_t i = 0; i < out; ++i) def.labels.push_back("c" + std::to_string(i));
  return def;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace

TEST_CASE("dense head over a 200-d input has 50 outputs") {
  const ModelGraph g(dense_def(200, 50));
  CHECK(g.output_size() == 50);
  CHECK(ModelGraph(dense_def(16, 3087)).output_size() == 3087);
}

TEST_CASE("graph construction errors") {
  GraphDef def = dense_def(4, 2);
  def.weights.erase("w1");
  CHECK(build_error(def) == ErrorCode::MissingWeight);

  def = dense_def(4, 2);
  def.nodes.push_back({"z", OpKind::Relu, {}, {"z"}});
  CHECK(build_error(def) == ErrorCode::CyclicGraph);

  def = dense_def(4, 2);
  def.nodes[1].inputs[0] = "later";
  def.nodes.push_back({"later", OpKind::Relu, {}, {"x"}});
  CHECK(build_error(def) == ErrorCode::CyclicGraph);

  def = dense_def(4, 2);
  def.weights.at("w1") = Tensor({5, 2}, std::vector<float>(10, 0.0f));
  CHECK(build_error(def) == ErrorCode::ShapeMismatch);

  def = dense_def(4, 2);
  def.output = "nowhere";
  CHECK(build_error(def) == ErrorCode::UnknownNode);

  def = dense_def(4, 2);
  def.labels.pop_back();
  CHECK(build_error(def) == ErrorCode::ShapeMismatch);

  CHECK_THROWS_AS(parse_op("lstm"), Error);
}

TEST_CASE("manifest and weights round trip") {
  const ModelGraph g = make_toy_tagger(find_preset("musicnn-96").config, 16000, 20, {"x", "y"}, 3);
  const auto dir = oracle::temp_dir("model");
  save_model(g, dir / "m.manifest", dir / "m.weights");
  const ModelGraph back = load_model(dir / "m.manifest", dir / "m.weights");
  CHECK(write_manifest(back.def()) == write_manifest(g.def()));
  CHECK(encode_tensors(back.def().weights) == encode_tensors(g.def().weights));

  try {
    load_model(dir / "m.manifest", dir / "missing.weights");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}

TEST_CASE("manifest parse errors") {
  CHECK_THROWS_AS(parse_manifest("this is not a manifest"), Error);
  CHECK_THROWS_AS(parse_manifest("format_version = 1\nnodes[0].name = x\n"), Error);
}

TEST_CASE("tensor container rejects damage") {
  TensorMap m;
  m.emplace("a", Tensor({2, 2}, {1, 2, 3, 4}));
  auto bytes = encode_tensors(m);
  CHECK(decode_tensors(bytes).at("a").data == m.at("a").data);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensors(bad_magic), Error);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_tensors(truncated), Error);
  CHECK_THROWS_AS(Tensor({3}, {1.0f, 2.0f}), Error);
}

TEST_CASE("forward until the input is a passthrough") {
  const ModelGraph g(dense_def(4, 2));
  const Tensor x({4}, {1, 2, 3, 4});
  CHECK(forward(g, x, "x").data == x.data);
  CHECK_THROWS_AS(forward(g, Tensor({5}, std::vector<float>(5, 0.0f))), Error);
  CHECK_THROWS_AS(forward(g, x, "missing"), Error);
}

TEST_CASE("every op matches the nested-loop oracle") {
  Rng rng(2024);
  for (auto op : {OpKind::Conv2d, OpKind::Dense, OpKind::BatchNorm, OpKind::Relu, OpKind::Elu, OpKind::MaxPool2d,
                  OpKind::MeanPool2d, OpKind::Flatten, OpKind::Concat, OpKind::Sigmoid, OpKind::Softmax}) {
    CAPTURE(to_string(op));
    int found = 0;
    for (int attempt = 0; attempt < 2000 && found < 10; ++attempt) {
      const GraphDef def = oracle::random_graph(rng, {2, 12});
      if (std::none_of(def.nodes.begin(), def.nodes.end(), [&](const NodeDef& n) { return n.op == op; })) continue;
      ++found;
      const ModelGraph g(def);
      const Tensor x = oracle::random_input(g.input_shape(), rng);
      CHECK(max_abs_diff(forward(g, x).data, oracle::evaluate(def, x)) <= 1e-5);
    }
    CHECK(found == 10);
  }
}

TEST_CASE("dropout is the identity at inference") {
  GraphDef def = dense_def(4, 2);
  def.nodes.push_back({"d", OpKind::Dropout, {{"rate", "0.5"}}, {"y"}});
  def.output = "d";
  const ModelGraph g(def);
  const Tensor x({4}, {1, -2, 3, -4});
  CHECK(forward(g, x).data == forward(g, x, "y").data);
}

TEST_CASE("random graphs match the oracle under every kernel ISA") {
  const auto original = kernels::active().isa;
  for (const auto isa : kernels::available_isas()) {
    kernels::set_active_isa(isa);
    Rng rng(77);
    for (int i = 0; i < 50; ++i) {
      const GraphDef def = oracle::random_graph(rng);
      const ModelGraph g(def);
      const Tensor x = oracle::random_input(g.input_shape(), rng);
      CHECK(max_abs_diff(forward(g, x).data, oracle::evaluate(def, x)) <= 1e-5);
    }
  }
  kernels::set_active_isa(original);
}

TEST_CASE("forward is compositional at every node") {
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    const GraphDef def = oracle::random_graph(rng);
    const ModelGraph g(def);
    const Tensor x = oracle::random_input(g.input_shape(), rng);
    const Tensor full = forward(g, x);
    for (const auto& node : def.nodes) {
      // Concat branches are bypassed by the concat's other input.
      if (node.name.find("_branch") != std::string::npos) continue;
      const Tensor mid = forward(g, x, node.name);
      CHECK(forward_from(g, {{node.name, mid}}, g.output_name()).data == full.data);
    }
  }
}

TEST_CASE("unit batch norm is the identity and softmax is a distribution") {
  GraphDef def;
  def.input = "x";
  def.output = "s";
  def.embedding = "bn";
  def.nodes = {{"x", OpKind::Input, {{"shape", "3,4,5"}}, {}},
               {"bn", OpKind::BatchNorm, {{"epsilon", "0"}}, {"x", "g", "b", "m", "v"}},
               {"s", OpKind::Softmax, {}, {"bn"}}};
  def.weights.emplace("g", Tensor({5}, std::vector<float>(5, 1.0f)));
  def.weights.emplace("b", Tensor({5}, std::vector<float>(5, 0.0f)));
  def.weights.emplace("m", Tensor({5}, std::vector<float>(5, 0.0f)));
  def.weights.emplace("v", Tensor({5}, std::vector<float>(5, 1.0f)));
  def.patch_frames = 3;
  def.feature_config.n_mels = 20;
  const ModelGraph g(def);
  Rng rng(4);
  const Tensor x = oracle::random_input({3, 4, 5}, rng);
  const Tensor bn = forward(g, x, "bn");
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(bn.data[i] - x.data[i]) <= 1e-6f);
  const Tensor s = forward(g, x);
  for (std::size_t r = 0; r < s.size(); r += 5) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(s.data[r + c] > 0.0f);
      sum += s.data[r + c];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("patch tiling and aggregation") {
  const MelConfig c = find_preset("musicnn-96").config;
  const ModelGraph g = make_toy_tagger(c, 16000, 186, {"a", "b"}, 5);

  const Prediction one = predict(g, white_noise(3.0, 16000, 0.3, 1));
  REQUIRE(one.per_patch.size() == 1);
  CHECK(one.aggregated == one.per_patch[0]);

  const Prediction two = predict(g, white_noise(6.2, 16000, 0.3, 2));
  REQUIRE(two.per_patch.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(two.aggregated[k] == doctest::Approx((two.per_patch[0][k] + two.per_patch[1][k]) / 2.0));
  }
  PredictOptions max_opts;
  max_opts.aggregation = Aggregation::Max;
  const Prediction mx = predict(g, white_noise(6.2, 16000, 0.3, 2), max_opts);
  for (std::size_t k = 0; k < 2; ++k) CHECK(mx.aggregated[k] == std::max(mx.per_patch[0][k], mx.per_patch[1][k]));

  const std::size_t frames_207s = frame_count(207 * 16000, c.frame_size, c.hop_size);
  CHECK(patch_count(frames_207s, 186) == 69);
}

TEST_CASE("short tracks") {
  const MelConfig c = find_preset("musicnn-96").config;
  const ModelGraph g = make_toy_tagger(c, 16000, 186, {"a", "b"}, 5);
  const AudioBuffer short_track = white_noise(1.0, 16000, 0.3, 1);
  try {
    predict(g, short_track);
    FAIL("expected TrackTooShort");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TrackTooShort);
  }
  PredictOptions pad;
  pad.pad_short = true;
  CHECK(predict(g, short_track, pad).per_patch.size() == 1);
  CHECK(predict(g, white_noise(0.01, 16000, 0.3, 1), pad).per_patch.size() == 1);
}

TEST_CASE("predict resamples foreign rates") {
  const ModelGraph g = make_toy_tagger(find_preset("musicnn-96").config, 16000, 50, {"a", "b"}, 5);
  const AudioBuffer at_44k = sine_wave(440.0, 2.0, 44100);
  const Prediction a = predict(g, at_44k);
  const Prediction b = predict(g, resample(at_44k, 16000));
  CHECK(a.aggregated == b.aggregated);
}

TEST_CASE("top label and ties") {
  Prediction p;
  p.labels = {"a", "b"};
  p.aggregated = {0.1f, 0.9f};
  CHECK(top_label(p) == "b");
  p.aggregated = {0.5f, 0.5f};
  CHECK(top_label(p) == "a");
}
