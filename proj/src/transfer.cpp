#include "melstream/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "melstream/error.hpp"
#include "melstream/inference.hpp"
#include "melstream/metrics.hpp"
#include "melstream/parallel.hpp"
#include <json.hpp>

namespace melstream {

// --- embeddings -------------------------------------------------------------

void EmbeddingTable::add(std::string track_id, std::vector<std::vector<float>> patches) {
  if (patches.empty()) throw Error(ErrorCode::InvalidDataset, "track '" + track_id + "' has no patches");
  if (dim == 0) dim = patches.front().size();
  for (const auto& p : patches) {
    if (p.size() != dim) {
      throw Error(ErrorCode::DimMismatch, "track '" + track_id + "': embedding of length " +
                                              std::to_string(p.size()) + ", table dim " + std::to_string(dim));
    }
  }
  if (!index_.emplace(track_id, rows.size()).second) {
    throw Error(ErrorCode::InvalidDataset, "duplicate track '" + track_id + "'");
  }
  rows.push_back({std::move(track_id), std::move(patches)});
}

const TrackEmbeddings* EmbeddingTable::find(const std::string& track_id) const {
  const auto it = index_.find(track_id);
  return it == index_.end() ? nullptr : &rows[it->second];
}

EmbeddingTable extract_embeddings(const ModelGraph& graph, const DatasetManifest& dataset,
                                  const ExtractOptions& options) {
  struct Result {
    std::vector<std::vector<float>> patches;
    std::string error;
  };
  std::vector<Result> results(dataset.entries.size());
  parallel_for(dataset.entries.size(), options.jobs, [&](std::size_t i) {
    const auto& entry = dataset.entries[i];
    try {
      const AudioBuffer audio = load_pcm(entry.audio_path, graph.sample_rate());
      const MelSpectrogram mel = mel_spectrogram(audio, graph.feature_config());
      for (auto& t : patch_activations(graph, mel, graph.embedding_name())) {
        results[i].patches.push_back(std::move(t.data));
      }
    } catch (const Error& e) {
      results[i].patches.clear();
      results[i].error = e.what();
    }
  });
  EmbeddingTable table;
  table.source_layer = graph.embedding_name();
  table.dim = shape_product(graph.shape_of(graph.embedding_name()));
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].error.empty()) {
      table.add(dataset.entries[i].track_id, std::move(results[i].patches));
    } else {
      table.skipped.push_back({dataset.entries[i].track_id, std::move(results[i].error)});
    }
  }
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  TensorMap tensors;
  for (const auto& row : table.rows) {
    std::vector<float> flat;
    flat.reserve(row.patches.size() * table.dim);
    for (const auto& p : row.patches) flat.insert(flat.end(), p.begin(), p.end());
    tensors.emplace(row.track_id, Tensor({row.patches.size(), table.dim}, std::move(flat)));
  }
  write_tensors(path, tensors);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  EmbeddingTable table;
  for (const auto& [id, t] : read_tensors(path)) {
    if (t.rank() != 2) throw Error(ErrorCode::DimMismatch, "embedding entry '" + id + "' is not [patches, dim]");
    std::vector<std::vector<float>> patches;
    for (std::size_t p = 0; p < t.shape[0]; ++p) {
      const auto begin = t.data.begin() + static_cast<std::ptrdiff_t>(p * t.shape[1]);
      patches.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(t.shape[1]));
    }
    table.add(id, std::move(patches));
  }
  return table;
}

ModelGraph make_identity_backbone(const MelConfig& config, int sample_rate, int patch_frames) {
  GraphDef def;
  def.feature_config = config;
  def.sample_rate = sample_rate;
  def.patch_frames = patch_frames;
  def.input = "mel";
  def.output = "embedding";
  def.embedding = "embedding";
  NodeDef input{"mel", OpKind::Input, {}, {}};
  input.params["shape"] = std::to_string(patch_frames) + "," + std::to_string(config.n_mels);
  def.nodes.push_back(std::move(input));
  def.nodes.push_back({"embedding", OpKind::Flatten, {}, {"mel"}});
  return ModelGraph(std::move(def));
}

int frames_for_seconds(const MelConfig& config, int sample_rate, double seconds) {
  const auto samples = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  return static_cast<int>(frame_count(samples, config.frame_size, config.hop_size));
}

// --- head -------------------------------------------------------------------

void validate(const TrainSpec& s) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (s.batch_size == 0) fail("batch_size must be positive");
  if (!(s.segment_seconds > 0.0)) fail("segment_seconds must be positive");
  if (!(s.initial_lr > 0.0)) fail("initial_lr must be positive");
  if (s.lr_patience_epochs == 0) fail("lr_patience_epochs must be positive");
  if (!(s.lr_factor > 0.0 && s.lr_factor < 1.0)) fail("lr_factor must be in (0, 1)");
  if (!(s.val_fraction > 0.0 && s.val_fraction < 1.0)) fail("val_fraction must be in (0, 1)");
  if (!(s.adam.beta1 > 0.0 && s.adam.beta1 < 1.0 && s.adam.beta2 > 0.0 && s.adam.beta2 < 1.0 &&
        s.adam.epsilon > 0.0)) {
    fail("Adam betas must be in (0, 1) and epsilon positive");
  }
}

std::size_t HeadParams::offset(std::size_t layer) const {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += layers[l].in * layers[l].out + layers[l].out;
  return off;
}

std::span<const double> HeadParams::kernel(std::size_t layer) const {
  return std::span<const double>(values).subspan(offset(layer), layers[layer].in * layers[layer].out);
}

std::span<const double> HeadParams::bias(std::size_t layer) const {
  return std::span<const double>(values).subspan(offset(layer) + layers[layer].in * layers[layer].out,
                                                 layers[layer].out);
}

HeadParams init_head(const HeadSpec& spec, std::size_t input_dim, Rng& rng) {
  if (spec.n_classes < 1 || input_dim < 1) throw Error(ErrorCode::InvalidConfig, "empty head");
  HeadParams head;
  if (spec.variant == HeadVariant::A) {
    head.layers = {{input_dim, spec.n_classes}};
  } else {
    if (spec.hidden < 1) throw Error(ErrorCode::InvalidConfig, "hidden size must be positive");
    head.layers = {{input_dim, spec.hidden}, {spec.hidden, spec.n_classes}};
  }
  for (const auto& l : head.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (std::size_t i = 0; i < l.in * l.out; ++i) head.values.push_back(rng.uniform(-limit, limit));
    head.values.insert(head.values.end(), l.out, 0.0);
  }
  return head;
}

namespace {

struct Activations {
  std::vector<std::vector<double>> pre;   // per layer pre-activation
  std::vector<std::vector<double>> post;  // per layer output (ReLU or softmax)
};

void dense_forward(std::span<const double> kernel, std::span<const double> bias, std::size_t in,
                   std::size_t out, auto&& input_at, std::vector<double>& z) {
  z.assign(bias.begin(), bias.end());
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = input_at(i);
    if (xi == 0.0) continue;
    const double* row = kernel.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) z[j] += xi * row[j];
  }
}

void softmax_inplace(std::vector<double>& z) {
  const double peak = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - peak);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

Activations run_head(const HeadParams& head, std::span<const float> x) {
  if (x.size() != head.input_dim()) {
    throw Error(ErrorCode::DimMismatch, "head expects " + std::to_string(head.input_dim()) +
                                            " inputs, got " + std::to_string(x.size()));
  }
  Activations a;
  const std::size_t n = head.layers.size();
  a.pre.resize(n);
  a.post.resize(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto& shape = head.layers[l];
    if (l == 0) {
      dense_forward(head.kernel(l), head.bias(l), shape.in, shape.out,
                    [&](std::size_t i) { return static_cast<double>(x[i]); }, a.pre[l]);
    } else {
      const auto& prev = a.post[l - 1];
      dense_forward(head.kernel(l), head.bias(l), shape.in, shape.out, [&](std::size_t i) { return prev[i]; },
                    a.pre[l]);
    }
    a.post[l] = a.pre[l];
    if (l + 1 < n) {
      for (double& v : a.post[l]) v = std::max(v, 0.0);
    } else {
      softmax_inplace(a.post[l]);
    }
  }
  return a;
}

}  // namespace

std::vector<double> head_probabilities(const HeadParams& head, std::span<const float> x) {
  return std::move(run_head(head, x).post.back());
}

double head_loss(const HeadParams& head, std::span<const std::span<const float>> xs,
                 std::span<const std::size_t> ys, std::vector<double>* grad) {
  if (xs.empty() || xs.size() != ys.size()) throw Error(ErrorCode::InvalidConfig, "empty or mismatched batch");
  const double inv_batch = 1.0 / static_cast<double>(xs.size());
  if (grad != nullptr) grad->assign(head.values.size(), 0.0);
  const std::size_t n_layers = head.layers.size();
  double loss = 0.0;
  std::vector<double> delta;
  std::vector<double> back;
  for (std::size_t b = 0; b < xs.size(); ++b) {
    const Activations a = run_head(head, xs[b]);
    const auto& probs = a.post.back();
    if (ys[b] >= probs.size()) throw Error(ErrorCode::InvalidConfig, "label index out of range");
    loss -= std::log(std::max(probs[ys[b]], std::numeric_limits<double>::min()));
    if (grad == nullptr) continue;

    // Softmax + cross-entropy: dL/dz = p - onehot.
    delta = probs;
    delta[ys[b]] -= 1.0;
    for (double& d : delta) d *= inv_batch;
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto& shape = head.layers[l];
      const std::size_t off = head.offset(l);
      double* gk = grad->data() + off;
      double* gb = gk + shape.in * shape.out;
      auto input_at = [&](std::size_t i) {
        return l == 0 ? static_cast<double>(xs[b][i]) : a.post[l - 1][i];
      };
      for (std::size_t i = 0; i < shape.in; ++i) {
        const double xi = input_at(i);
        if (xi == 0.0) continue;
        double* row = gk + i * shape.out;
        for (std::size_t j = 0; j < shape.out; ++j) row[j] += xi * delta[j];
      }
      for (std::size_t j = 0; j < shape.out; ++j) gb[j] += delta[j];
      if (l == 0) break;
      const auto kernel = head.kernel(l);
      back.assign(shape.in, 0.0);
      for (std::size_t i = 0; i < shape.in; ++i) {
        if (a.pre[l - 1][i] <= 0.0) continue;  // ReLU gate
        const double* row = kernel.data() + i * shape.out;
        double acc = 0.0;
        for (std::size_t j = 0; j < shape.out; ++j) acc += row[j] * delta[j];
        back[i] = acc;
      }
      delta.swap(back);
    }
  }
  return loss * inv_batch;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw Error(ErrorCode::DimMismatch, "Adam parameter, gradient and moment sizes differ");
  }
  for (const double g : grads) {
    if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "gradient contains NaN or Inf");
  }
  ++state.t;
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

std::vector<double> track_probabilities(const HeadParams& head, const TrackEmbeddings& track) {
  std::vector<double> sum(head.output_dim(), 0.0);
  for (const auto& p : track.patches) {
    const auto probs = head_probabilities(head, p);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += probs[j];
  }
  for (double& v : sum) v /= static_cast<double>(track.patches.size());
  return sum;
}

namespace {

struct ValidationResult {
  double loss = 0.0;
  double balanced_accuracy = 0.0;
};

ValidationResult evaluate_split(const HeadParams& head, const EmbeddingTable& table,
                                const std::vector<std::string>& tracks,
                                const std::map<std::string, std::size_t>& class_of,
                                const std::vector<std::string>& classes) {
  ValidationResult r;
  std::size_t patches = 0;
  Predictions predictions;
  Truth truth;
  for (const auto& id : tracks) {
    const TrackEmbeddings& row = *table.find(id);
    const std::size_t y = class_of.at(id);
    std::vector<double> sum(classes.size(), 0.0);
    for (const auto& p : row.patches) {
      const auto probs = head_probabilities(head, p);
      r.loss -= std::log(std::max(probs[y], std::numeric_limits<double>::min()));
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += probs[j];
      ++patches;
    }
    const auto best = static_cast<std::size_t>(std::max_element(sum.begin(), sum.end()) - sum.begin());
    predictions[id] = classes[best];
    truth[id] = {classes[y]};
  }
  r.loss /= static_cast<double>(patches);
  r.balanced_accuracy = balanced_accuracy(predictions, truth);
  return r;
}

}  // namespace

HeadWeights train_head(const EmbeddingTable& table, const std::map<std::string, std::string>& labels,
                       const HeadSpec& spec, const TrainSpec& train) {
  validate(train);
  std::set<std::string> class_set;
  for (const auto& [id, label] : labels) {
    if (table.find(id) == nullptr) {
      throw Error(ErrorCode::InvalidDataset, "labeled track '" + id + "' has no embeddings");
    }
    class_set.insert(label);
  }
  if (class_set.size() < 2) throw Error(ErrorCode::DegenerateDataset, "need at least 2 classes");
  if (spec.n_classes != class_set.size()) {
    throw Error(ErrorCode::DimMismatch, "head has " + std::to_string(spec.n_classes) + " outputs but labels have " +
                                            std::to_string(class_set.size()) + " classes");
  }

  HeadWeights out;
  out.spec = spec;
  out.classes.assign(class_set.begin(), class_set.end());
  std::map<std::string, std::size_t> class_of;
  for (const auto& [id, label] : labels) {
    class_of[id] =
        static_cast<std::size_t>(std::lower_bound(out.classes.begin(), out.classes.end(), label) - out.classes.begin());
  }

  Split split = stratified_split(labels, train.val_fraction, train.seed);
  out.train_tracks = split.train;
  out.val_tracks = split.validation;

  Rng rng(train.seed ^ 0x9e3779b97f4a7c15ULL);
  out.params = init_head(spec, table.dim, rng);
  if (train.max_epochs == 0) return out;

  HeadParams params = out.params;
  AdamState adam(params.values.size());
  double lr = train.initial_lr;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t stale_epochs = 0;
  std::vector<std::string> order = split.train;
  std::vector<double> grad;
  std::vector<std::span<const float>> batch_x;
  std::vector<std::size_t> batch_y;

  for (std::size_t epoch = 0; epoch < train.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = start; i < end; ++i) {
        const TrackEmbeddings& row = *table.find(order[i]);
        const auto patch = static_cast<std::size_t>(rng.below(row.patches.size()));
        batch_x.emplace_back(row.patches[patch]);
        batch_y.push_back(class_of.at(order[i]));
      }
      const double loss = head_loss(params, batch_x, batch_y, &grad);
      if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "training loss diverged");
      adam_step(params.values, grad, adam, lr, train.adam);
      loss_sum += loss * static_cast<double>(end - start);
    }
    const ValidationResult val = evaluate_split(params, table, split.validation, class_of, out.classes);
    if (!std::isfinite(val.loss)) throw Error(ErrorCode::NonFiniteLoss, "validation loss diverged");
    out.training_log.push_back(
        {epoch, loss_sum / static_cast<double>(order.size()), val.loss, lr, val.balanced_accuracy});

    if (val.loss < best_val) {
      best_val = val.loss;
      out.params = params;
      out.best_epoch = epoch;
      stale_epochs = 0;
    } else if (++stale_epochs >= train.lr_patience_epochs) {
      lr *= train.lr_factor;
      stale_epochs = 0;
    }
  }
  return out;
}

ModelGraph export_head(const HeadWeights& weights, const ModelGraph& backbone) {
  const std::size_t embed_index = backbone.index_of(backbone.embedding_name());
  const Shape& embed_shape = backbone.compiled(embed_index).shape;
  if (shape_product(embed_shape) != weights.params.input_dim()) {
    throw Error(ErrorCode::DimMismatch, "head input " + std::to_string(weights.params.input_dim()) +
                                            " != embedding size " + std::to_string(shape_product(embed_shape)));
  }

  // Keep only the ancestors of the embedding.
  std::vector<bool> keep(backbone.node_count(), false);
  keep[embed_index] = true;
  for (std::size_t i = embed_index + 1; i-- > 0;) {
    if (!keep[i]) continue;
    for (const std::size_t a : backbone.compiled(i).activations) keep[a] = true;
  }

  GraphDef def;
  const GraphDef& src = backbone.def();
  def.format_version = src.format_version;
  def.input = src.input;
  def.embedding = src.embedding;
  def.patch_frames = src.patch_frames;
  def.sample_rate = src.sample_rate;
  def.feature_config = src.feature_config;
  def.labels = weights.classes;
  for (std::size_t i = 0; i < backbone.node_count(); ++i) {
    if (!keep[i]) continue;
    def.nodes.push_back(src.nodes[i]);
    for (const auto& w : backbone.compiled(i).weights) def.weights.emplace(w, src.weights.at(w));
  }

  std::string prev = src.embedding;
  if (embed_shape.size() != 1) {
    def.nodes.push_back({"head/flatten", OpKind::Flatten, {}, {prev}});
    prev = "head/flatten";
  }
  const auto& params = weights.params;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string name = "head/dense" + std::to_string(l);
    const auto kernel = params.kernel(l);
    const auto bias = params.bias(l);
    def.weights.emplace(name + "/kernel", Tensor({params.layers[l].in, params.layers[l].out},
                                                 std::vector<float>(kernel.begin(), kernel.end())));
    def.weights.emplace(name + "/bias", Tensor({params.layers[l].out}, std::vector<float>(bias.begin(), bias.end())));
    def.nodes.push_back({name, OpKind::Dense, {}, {prev, name + "/kernel", name + "/bias"}});
    prev = name;
    if (l + 1 < params.layers.size()) {
      const std::string relu = "head/relu" + std::to_string(l);
      def.nodes.push_back({relu, OpKind::Relu, {}, {prev}});
      prev = relu;
    }
  }
  def.nodes.push_back({"head/softmax", OpKind::Softmax, {}, {prev}});
  def.output = "head/softmax";
  return ModelGraph(std::move(def));
}

std::string training_log_jsonl(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["lr"] = e.lr;
    j["val_balanced_accuracy"] = e.val_balanced_accuracy;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace melstream
