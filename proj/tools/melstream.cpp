#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "melstream/audio_io.hpp"
#include "melstream/bench.hpp"
#include "melstream/dataset.hpp"
#include "melstream/dsp.hpp"
#include "melstream/error.hpp"
#include "melstream/eval.hpp"
#include "melstream/inference.hpp"
#include "melstream/model.hpp"
#include "melstream/streaming.hpp"
#include "melstream/taxonomy.hpp"
#include "melstream/text_io.hpp"
#include "melstream/transfer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace melstream;

namespace {

// Exit codes. Documented in the README; keep stable.
enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kConfig = 3,
  kModel = 4,
  kTooShort = 5,
  kTraining = 6,
  kEvaluation = 7,
  kInternal = 8,
};

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat:
    case ErrorCode::CorruptHeader:
    case ErrorCode::CorruptData:
    case ErrorCode::EmptyAudio:
    case ErrorCode::Io:
      return kIo;
    case ErrorCode::InvalidConfig:
    case ErrorCode::EmptyFilter:
      return kConfig;
    case ErrorCode::ManifestParse:
    case ErrorCode::MissingWeight:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::UnsupportedOp:
    case ErrorCode::CyclicGraph:
    case ErrorCode::UnknownNode:
    case ErrorCode::InputShapeMismatch:
      return kModel;
    case ErrorCode::SignalTooShort:
    case ErrorCode::TrackTooShort:
      return kTooShort;
    case ErrorCode::NonFiniteGradient:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DegenerateDataset:
    case ErrorCode::DimMismatch:
      return kTraining;
    case ErrorCode::ClassTooSmall:
    case ErrorCode::EmptyInput:
    case ErrorCode::DegenerateClass:
    case ErrorCode::NoEvaluableTracks:
    case ErrorCode::InvalidDataset:
      return kEvaluation;
    case ErrorCode::BufferOverflow:
    case ErrorCode::AlreadyFlushed:
      return kInternal;
  }
  return kInternal;
}

// Carries an explicit exit code past the generic mapping (e.g. any failure
// while loading a model is a model-load error).
struct ExitError {
  int code;
  std::string message;
};

struct Globals {
  std::string seed = "42";
  std::size_t jobs = 1;
  std::string output;
  std::string format;
};

std::uint64_t resolve_seed(const std::string& text) {
  if (text == "random") {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) | rd();
  }
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::InvalidConfig, "--seed must be an integer or 'random'");
}

void emit(const Globals& g, const std::string& data) {
  if (g.output.empty() || g.output == "-") {
    std::cout << data;
    std::cout.flush();
  } else {
    text::write_text(g.output, data);
  }
}

void emit_bytes(const Globals& g, const std::vector<std::uint8_t>& bytes) {
  if (g.output.empty() || g.output == "-") {
    std::cout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::cout.flush();
  } else {
    std::FILE* f = std::fopen(g.output.c_str(), "wb");
    if (f == nullptr) throw Error(ErrorCode::Io, "cannot open " + g.output);
    const bool ok = std::fwrite(bytes.data(), 1, bytes.size(), f) == bytes.size();
    if (std::fclose(f) != 0 || !ok) throw Error(ErrorCode::Io, "cannot write " + g.output);
  }
}

std::string format_or(const Globals& g, const std::string& fallback, std::initializer_list<const char*> allowed) {
  const std::string f = g.format.empty() ? fallback : g.format;
  for (const char* a : allowed) {
    if (f == a) return f;
  }
  throw Error(ErrorCode::InvalidConfig, "--format " + f + " is not supported by this command");
}

json reproducibility(std::uint64_t seed, const std::vector<std::pair<std::string, std::string>>& params) {
  std::string canonical;
  json listed = json::object();
  for (const auto& [k, v] : params) {
    canonical += k + "=" + v + "\n";
    listed[k] = v;
  }
  return {{"seed", seed},
          {"config_hash", text::hex64(text::fnv1a(canonical))},
          {"toolkit_version", MELSTREAM_VERSION},
          {"parameters", listed}};
}

// --- feature configuration --------------------------------------------------

struct MelFlags {
  std::string preset;
  int sample_rate = kCanonicalSampleRate;
  std::optional<int> frame_size, hop_size, fft_size, n_mels;
  std::optional<double> f_min, f_max;
  std::optional<std::string> window, mel_scale, norm, spectrum, compression;

  void add(CLI::App* cmd) {
    auto* p = cmd->add_option("--preset", preset, "Named front end (musicnn-96, vgg-64)");
    std::vector<CLI::Option*> explicit_flags{
        cmd->add_option("--frame-size", frame_size, "Frame length in samples"),
        cmd->add_option("--hop-size", hop_size, "Hop length in samples"),
        cmd->add_option("--fft-size", fft_size, "FFT length (power of two)"),
        cmd->add_option("--n-mels", n_mels, "Number of mel bands"),
        cmd->add_option("--f-min", f_min, "Lowest filter edge in Hz"),
        cmd->add_option("--f-max", f_max, "Highest filter edge in Hz"),
        cmd->add_option("--window", window, "hann, hamming, blackman-harris or rectangular"),
        cmd->add_option("--mel-scale", mel_scale, "htk or slaney"),
        cmd->add_option("--norm", norm, "none, area or band-width"),
        cmd->add_option("--spectrum", spectrum, "magnitude or power"),
        cmd->add_option("--compression", compression, "none, natural-log, log10 or shifted-log(S)"),
        cmd->add_option("--sample-rate", sample_rate, "Analysis sample rate"),
    };
    for (auto* f : explicit_flags) p->excludes(f);
  }

  std::pair<MelConfig, int> resolve() const {
    if (!preset.empty()) {
      const Preset& pr = find_preset(preset);
      return {pr.config, pr.sample_rate};
    }
    std::map<std::string, std::string> kv;
    for (const auto& [k, v] : to_key_values(MelConfig{})) kv[k] = v;
    auto set_int = [&](const char* key, const std::optional<int>& v) {
      if (v) kv[key] = std::to_string(*v);
    };
    auto set_real = [&](const char* key, const std::optional<double>& v) {
      if (v) kv[key] = format_double(*v);
    };
    auto set_text = [&](const char* key, const std::optional<std::string>& v) {
      if (v) kv[key] = *v;
    };
    set_int("frame_size", frame_size);
    set_int("hop_size", hop_size);
    set_int("fft_size", fft_size);
    set_int("n_mels", n_mels);
    set_real("f_min", f_min);
    set_real("f_max", f_max);
    set_text("window", window);
    set_text("mel_scale", mel_scale);
    set_text("filter_norm", norm);
    set_text("spectrum_type", spectrum);
    set_text("compression", compression);
    MelConfig config = mel_config_from_key_values(kv);
    validate(config, sample_rate);
    return {config, sample_rate};
  }
};

// --- model loading ------------------------------------------------------------

struct ModelFlags {
  std::string manifest;
  std::string weights;

  void add(CLI::App* cmd, bool required) {
    auto* m = cmd->add_option("--model", manifest, "Model manifest");
    if (required) m->required();
    cmd->add_option("--weights", weights, "Weights file (default: manifest with .weights extension)");
  }

  fs::path weights_path() const {
    if (!weights.empty()) return weights;
    return fs::path(manifest).replace_extension(".weights");
  }

  ModelGraph load() const {
    try {
      return load_model(manifest, weights_path());
    } catch (const Error& e) {
      throw ExitError{kModel, e.what()};
    }
  }
};

AudioBuffer read_audio(const std::string& path, int rate) {
  if (path != "-") return load_pcm(path, rate);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
  return resample(mixdown(decode_wav(bytes)), rate);
}

json config_json(const MelConfig& config, int sample_rate) {
  json j;
  j["sample_rate"] = sample_rate;
  for (const auto& [k, v] : to_key_values(config)) j[k] = v;
  return j;
}

// --- melspec ------------------------------------------------------------------

struct MelspecCmd {
  std::string audio;
  MelFlags mel;
  bool stream = false;
  std::size_t chunk = 1024;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("melspec", "Compute a log-mel spectrogram");
    cmd->add_option("audio", audio, "WAV file")->required();
    mel.add(cmd);
    cmd->add_flag("--stream", stream, "Compute through the streaming pipeline");
    cmd->add_option("--chunk", chunk, "Samples per pushed chunk with --stream")->check(CLI::PositiveNumber);
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    const auto [config, rate] = mel.resolve();
    const std::string fmt = format_or(g, "json", {"json", "csv", "bin"});
    const AudioBuffer buf = load_pcm(audio, rate);
    MelSpectrogram spec;
    if (stream) {
      StreamPipeline pipe(config, rate);
      spec.n_mels = config.n_mels;
      spec.config = config;
      spec.sample_rate = rate;
      std::span<const float> rest(buf.samples);
      while (!rest.empty()) {
        const std::size_t n = std::min(chunk, rest.size());
        auto out = pipe.push(rest.first(n));
        spec.data.insert(spec.data.end(), out.mel_frames.begin(), out.mel_frames.end());
        rest = rest.subspan(n);
      }
      auto tail = pipe.flush();
      spec.data.insert(spec.data.end(), tail.mel_frames.begin(), tail.mel_frames.end());
      spec.n_frames = spec.data.size() / static_cast<std::size_t>(config.n_mels);
      if (spec.n_frames == 0) throw Error(ErrorCode::SignalTooShort, "audio shorter than one frame");
    } else {
      spec = mel_spectrogram(buf, config);
    }
    if (fmt == "bin") {
      emit_bytes(g, encode_tensors({{"mel", Tensor({spec.n_frames, static_cast<std::size_t>(spec.n_mels)},
                                                   spec.data)}}));
    } else if (fmt == "csv") {
      std::string out;
      for (std::size_t t = 0; t < spec.n_frames; ++t) {
        for (int m = 0; m < spec.n_mels; ++m) {
          if (m > 0) out += ',';
          out += format_double(spec.at(t, m));
        }
        out += '\n';
      }
      emit(g, out);
    } else {
      json j;
      j["n_frames"] = spec.n_frames;
      j["n_mels"] = spec.n_mels;
      j["config"] = config_json(config, rate);
      json rows = json::array();
      for (std::size_t t = 0; t < spec.n_frames; ++t) {
        const auto f = spec.frame(t);
        rows.push_back(std::vector<float>(f.begin(), f.end()));
      }
      j["data"] = std::move(rows);
      emit(g, j.dump() + "\n");
    }
  }
};

// --- predict ------------------------------------------------------------------

struct PredictCmd {
  std::string audio;
  ModelFlags model;
  std::string layer;
  bool patches = false;
  bool pad = false;
  std::string aggregation = "mean";
  bool stream = false;
  std::size_t chunk = 4096;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("predict", "Run a model over a track (\"-\" reads WAV from stdin)");
    cmd->add_option("audio", audio, "WAV file or -")->required();
    model.add(cmd, true);
    cmd->add_option("--layer", layer, "Emit this node's per-patch activations instead");
    cmd->add_flag("--patches", patches, "Include per-patch activations");
    cmd->add_flag("--pad", pad, "Zero-pad tracks shorter than one patch");
    cmd->add_option("--aggregate", aggregation, "mean or max")->check(CLI::IsMember({"mean", "max"}));
    auto* st = cmd->add_flag("--stream", stream, "Run through the streaming pipeline");
    cmd->add_option("--chunk", chunk, "Samples per pushed chunk with --stream")->check(CLI::PositiveNumber);
    st->excludes("--layer");
    cmd->callback([this, &g] { run(g); });
  }

  Prediction run_stream(const ModelGraph& graph, const AudioBuffer& buf, Aggregation how) const {
    StreamOptions so;
    so.pad_short = pad;
    StreamPipeline pipe(std::make_shared<const ModelGraph>(graph), so);
    Prediction pred;
    pred.labels = graph.labels();
    std::span<const float> rest(buf.samples);
    while (true) {
      const std::size_t n = std::min(chunk, rest.size());
      StreamOutput out = n == 0 ? pipe.flush() : pipe.push(rest.first(n));
      for (auto& p : out.predictions) pred.per_patch.push_back(std::move(p));
      if (n == 0) break;
      rest = rest.subspan(n);
    }
    if (pred.per_patch.empty()) throw Error(ErrorCode::TrackTooShort, "track shorter than one patch");
    pred.aggregated = aggregate(pred.per_patch, how);
    return pred;
  }

  void run(const Globals& g) const {
    const std::string fmt = format_or(g, "json", {"json", "csv"});
    const ModelGraph graph = model.load();
    if (!layer.empty()) graph.index_of(layer);
    AudioBuffer buf = read_audio(audio, graph.sample_rate());
    const auto frame = static_cast<std::size_t>(graph.feature_config().frame_size);
    if (pad && buf.samples.size() < frame) buf.samples.resize(frame, 0.0f);

    PredictOptions opts;
    opts.aggregation = aggregation == "max" ? Aggregation::Max : Aggregation::Mean;
    opts.pad_short = pad;
    if (stream) {
      write_prediction(g, fmt, run_stream(graph, buf, opts.aggregation));
      return;
    }
    const MelSpectrogram mel = mel_spectrogram(buf, graph.feature_config());

    if (!layer.empty()) {
      const auto acts = patch_activations(graph, mel, layer, pad);
      json j;
      j["layer"] = layer;
      j["shape"] = graph.shape_of(layer);
      json rows = json::array();
      for (const auto& t : acts) rows.push_back(t.data);
      j["patches"] = std::move(rows);
      emit(g, j.dump() + "\n");
      return;
    }

    write_prediction(g, fmt, predict(graph, mel, opts));
  }

  void write_prediction(const Globals& g, const std::string& fmt, const Prediction& pred) const {
    if (fmt == "csv") {
      std::string out = "label,activation\n";
      for (std::size_t i = 0; i < pred.aggregated.size(); ++i) {
        const std::string name = i < pred.labels.size() ? pred.labels[i] : std::to_string(i);
        out += text::csv_field(name) + "," + format_double(pred.aggregated[i]) + "\n";
      }
      emit(g, out);
      return;
    }
    json j;
    j["labels"] = pred.labels;
    j["activations"] = pred.aggregated;
    j["top_label"] = pred.labels.empty() ? json(nullptr) : json(top_label(pred));
    j["n_patches"] = pred.per_patch.size();
    if (patches) j["per_patch"] = pred.per_patch;
    emit(g, j.dump(2) + "\n");
  }
};

// --- embeddings source --------------------------------------------------------

// Backbone from --model, or the identity backbone over a mel front end.
struct BackboneFlags {
  ModelFlags model;
  MelFlags mel;
  double patch_seconds = 3.0;

  void add(CLI::App* cmd) {
    model.add(cmd, false);
    mel.add(cmd);
    cmd->add_option("--patch-seconds", patch_seconds, "Patch length for the identity backbone");
  }

  ModelGraph load() const {
    if (!model.manifest.empty()) return model.load();
    const auto [config, rate] = mel.resolve();
    return make_identity_backbone(config, rate, frames_for_seconds(config, rate, patch_seconds));
  }

  std::vector<std::pair<std::string, std::string>> describe() const {
    if (!model.manifest.empty()) return {{"backbone", model.manifest}};
    const auto [config, rate] = mel.resolve();
    std::vector<std::pair<std::string, std::string>> out{{"backbone", "identity"},
                                                         {"patch_seconds", format_double(patch_seconds)},
                                                         {"sample_rate", std::to_string(rate)}};
    for (const auto& kv : to_key_values(config)) out.push_back(kv);
    return out;
  }
};

struct EmbedCmd {
  std::string dataset;
  BackboneFlags backbone;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("embed", "Extract per-patch embeddings for a dataset");
    cmd->add_option("dataset", dataset, "Dataset CSV (track_id,audio_path,labels)")->required();
    backbone.add(cmd);
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    const std::string fmt = format_or(g, "bin", {"bin", "json"});
    const ModelGraph graph = backbone.load();
    const DatasetManifest ds = load_dataset(dataset);
    const EmbeddingTable table = extract_embeddings(graph, ds, {g.jobs});
    for (const auto& s : table.skipped) std::cerr << "skipped " << s.track_id << ": " << s.reason << "\n";
    std::cerr << table.rows.size() << " tracks embedded (dim " << table.dim << "), " << table.skipped.size()
              << " skipped\n";
    if (fmt == "json") {
      json j;
      j["layer"] = table.source_layer;
      j["dim"] = table.dim;
      for (const auto& row : table.rows) j["tracks"][row.track_id] = row.patches;
      emit(g, j.dump() + "\n");
    } else if (g.output.empty() || g.output == "-") {
      TensorMap tensors;
      for (const auto& row : table.rows) {
        std::vector<float> flat;
        for (const auto& p : row.patches) flat.insert(flat.end(), p.begin(), p.end());
        tensors.emplace(row.track_id, Tensor({row.patches.size(), table.dim}, std::move(flat)));
      }
      emit_bytes(g, encode_tensors(tensors));
    } else {
      save_embeddings(g.output, table);
    }
  }
};

// --- training -----------------------------------------------------------------

struct TrainFlags {
  std::string variant = "A";
  TrainSpec train;
  std::size_t hidden = 100;

  void add(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "Head variant: A (softmax) or B (hidden ReLU layer)")
        ->check(CLI::IsMember({"A", "B"}));
    cmd->add_option("--hidden", hidden, "Hidden units for variant B")->check(CLI::PositiveNumber);
    cmd->add_option("--batch-size", train.batch_size, "Tracks per batch")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", train.initial_lr, "Initial learning rate");
    cmd->add_option("--patience", train.lr_patience_epochs, "Epochs without improvement before an LR drop");
    cmd->add_option("--lr-factor", train.lr_factor, "LR multiplier on plateau");
    cmd->add_option("--epochs", train.max_epochs, "Training epochs");
    cmd->add_option("--val-fraction", train.val_fraction, "Validation share of each class");
  }

  HeadSpec head(std::size_t n_classes) const {
    return {variant == "B" ? HeadVariant::B : HeadVariant::A, n_classes, hidden};
  }

  std::vector<std::pair<std::string, std::string>> describe() const {
    return {{"variant", variant},
            {"hidden", std::to_string(hidden)},
            {"batch_size", std::to_string(train.batch_size)},
            {"lr", format_double(train.initial_lr)},
            {"patience", std::to_string(train.lr_patience_epochs)},
            {"lr_factor", format_double(train.lr_factor)},
            {"epochs", std::to_string(train.max_epochs)},
            {"val_fraction", format_double(train.val_fraction)}};
  }
};

std::size_t count_classes(const std::map<std::string, std::string>& labels) {
  std::set<std::string> classes;
  for (const auto& [id, c] : labels) classes.insert(c);
  return classes.size();
}

// Embeddings + labels from --embeddings/--labels, or extracted from a dataset.
struct TableSource {
  std::string dataset;
  std::string embeddings;
  std::string labels;
  BackboneFlags backbone;

  void add(CLI::App* cmd) {
    auto* d = cmd->add_option("dataset", dataset, "Single-label dataset CSV");
    auto* e = cmd->add_option("--embeddings", embeddings, "Precomputed embeddings (from embed)");
    auto* l = cmd->add_option("--labels", labels, "CSV track_id,label for --embeddings");
    d->excludes(e);
    e->needs(l);
    backbone.add(cmd);
  }

  std::pair<EmbeddingTable, std::map<std::string, std::string>> load(std::size_t jobs,
                                                                     std::size_t& skipped) const {
    if (!embeddings.empty()) {
      EmbeddingTable table = load_embeddings(embeddings);
      auto lab = load_labels(labels);
      std::map<std::string, std::string> kept;
      for (const auto& [id, c] : lab) {
        if (table.find(id) != nullptr) kept.emplace(id, c);
      }
      skipped = lab.size() - kept.size();
      return {std::move(table), std::move(kept)};
    }
    if (dataset.empty()) throw Error(ErrorCode::InvalidConfig, "need a dataset or --embeddings");
    const ModelGraph graph = backbone.load();
    const DatasetManifest ds = load_dataset(dataset);
    const auto all = ds.single_labels();
    EmbeddingTable table = extract_embeddings(graph, ds, {jobs});
    for (const auto& s : table.skipped) std::cerr << "skipped " << s.track_id << ": " << s.reason << "\n";
    std::map<std::string, std::string> kept;
    for (const auto& [id, c] : all) {
      if (table.find(id) != nullptr) kept.emplace(id, c);
    }
    skipped = table.skipped.size();
    return {std::move(table), std::move(kept)};
  }

  std::vector<std::pair<std::string, std::string>> describe() const {
    if (!embeddings.empty()) return {{"embeddings", embeddings}, {"labels", labels}};
    auto out = backbone.describe();
    out.insert(out.begin(), {"dataset", dataset});
    return out;
  }
};

struct TrainHeadCmd {
  TableSource source;
  TrainFlags flags;
  std::string export_prefix;
  std::string log_path;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("train-head", "Train a classifier head on embeddings");
    source.add(cmd);
    flags.add(cmd);
    cmd->add_option("--export", export_prefix, "Write backbone+head as PREFIX.manifest / PREFIX.weights")
        ->excludes("--embeddings");
    cmd->add_option("--log", log_path, "Write the per-epoch training log (JSON lines)");
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    format_or(g, "json", {"json"});
    const std::uint64_t seed = resolve_seed(g.seed);
    TrainSpec train = flags.train;
    train.seed = seed;
    std::size_t skipped = 0;
    const auto [table, labels] = source.load(g.jobs, skipped);
    const HeadWeights head = train_head(table, labels, flags.head(count_classes(labels)), train);

    json j;
    auto params = source.describe();
    const auto more = flags.describe();
    params.insert(params.end(), more.begin(), more.end());
    j["reproducibility"] = reproducibility(seed, params);
    j["classes"] = head.classes;
    j["n_train"] = head.train_tracks.size();
    j["n_val"] = head.val_tracks.size();
    j["n_skipped"] = skipped;
    j["best_epoch"] = head.best_epoch;
    if (!head.training_log.empty()) {
      const auto& best = head.training_log[head.best_epoch];
      j["best_val_loss"] = best.val_loss;
      j["best_val_balanced_accuracy"] = best.val_balanced_accuracy;
      j["final_lr"] = head.training_log.back().lr;
    }
    if (!log_path.empty()) text::write_text(log_path, training_log_jsonl(head.training_log));
    if (!export_prefix.empty()) {
      const ModelGraph full = export_head(head, source.backbone.load());
      save_model(full, export_prefix + ".manifest", export_prefix + ".weights");
      j["exported"] = export_prefix + ".manifest";
    }
    emit(g, j.dump(2) + "\n");
  }
};

// --- evaluation ---------------------------------------------------------------

void print_report_summary(const EvalReport& r) {
  std::cerr << "balanced accuracy: " << format_mean_stdev(r.balanced_accuracy, r.stdev_across_folds) << " ("
            << r.n_evaluated << " tracks evaluated, " << r.n_discarded << " discarded)\n";
  for (const auto& [c, v] : r.per_class_recall) {
    std::cerr << "  " << c << ": " << format_mean_stdev(v, std::nullopt) << "\n";
  }
}

json report_with_block(const EvalReport& r, json block) {
  json j = json::parse(r.to_json());
  j["mean_stdev"] = format_mean_stdev(r.balanced_accuracy, r.stdev_across_folds);
  j["reproducibility"] = std::move(block);
  return j;
}

struct CrossvalCmd {
  TableSource source;
  TrainFlags flags;
  std::size_t k = 5;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("crossval", "Stratified k-fold evaluation of a trained head");
    source.add(cmd);
    flags.add(cmd);
    cmd->add_option("--k", k, "Number of folds")->check(CLI::Range(2, 1000));
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    format_or(g, "json", {"json"});
    const std::uint64_t seed = resolve_seed(g.seed);
    TrainSpec train = flags.train;
    train.seed = seed;
    std::size_t skipped = 0;
    const auto [table, labels] = source.load(g.jobs, skipped);
    EvalReport report = crossval_run(table, labels, flags.head(count_classes(labels)), train, {k, g.jobs});
    report.n_discarded = skipped;
    print_report_summary(report);
    auto params = source.describe();
    const auto more = flags.describe();
    params.insert(params.end(), more.begin(), more.end());
    params.emplace_back("k", std::to_string(k));
    emit(g, report_with_block(report, reproducibility(seed, params)).dump(2) + "\n");
  }
};

struct CrossEvalCmd {
  std::string dataset;
  ModelFlags model;
  std::string taxonomy;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("cross-eval", "Evaluate a model on an external multi-label collection");
    cmd->add_option("dataset", dataset, "External dataset CSV")->required();
    model.add(cmd, true);
    cmd->add_option("--taxonomy", taxonomy, "Taxonomy TSV")->required();
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    format_or(g, "json", {"json"});
    const std::uint64_t seed = resolve_seed(g.seed);
    const ModelGraph graph = model.load();
    const Taxonomy tax = load_taxonomy(taxonomy);
    const DatasetManifest ds = load_dataset(dataset, LabelMode::Multi);
    const EvalReport report = cross_collection_eval(graph, ds, tax, g.jobs);
    print_report_summary(report);
    const json block =
        reproducibility(seed, {{"dataset", dataset}, {"model", model.manifest}, {"taxonomy", taxonomy}});
    emit(g, report_with_block(report, block).dump(2) + "\n");
  }
};

// --- bench --------------------------------------------------------------------

struct BenchCmd {
  std::string audio;
  ModelFlags model;
  std::size_t trials = 10;

  void add(CLI::App& app, Globals& g) {
    auto* cmd = app.add_subcommand("bench", "Time feature extraction, model loading and inference");
    cmd->add_option("audio", audio, "WAV file")->required();
    model.add(cmd, true);
    cmd->add_option("--trials", trials, "Number of trials to average")->check(CLI::PositiveNumber);
    cmd->callback([this, &g] { run(g); });
  }

  void run(const Globals& g) const {
    format_or(g, "json", {"json"});
    model.load();  // fail early with the model-load exit code
    const BenchReport report = run_bench(audio, model.manifest, model.weights_path(), trials);
    std::cerr << report.to_text();
    emit(g, report.to_json() + "\n");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"melstream: mel-spectrogram streaming, CNN inference and transfer-learning tools"};
  app.set_version_flag("--version", std::string(MELSTREAM_VERSION));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Random seed (integer or 'random')")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads (capped by MELSTREAM_THREADS)")->check(CLI::PositiveNumber);
  app.add_option("--output,-o", g.output, "Output file (default stdout)");
  app.add_option("--format", g.format, "json, csv or bin")->check(CLI::IsMember({"json", "csv", "bin"}));

  MelspecCmd melspec;
  PredictCmd predict_cmd;
  EmbedCmd embed;
  TrainHeadCmd train_head_cmd;
  CrossvalCmd crossval;
  CrossEvalCmd cross_eval;
  BenchCmd bench;
  melspec.add(app, g);
  predict_cmd.add(app, g);
  embed.add(app, g);
  train_head_cmd.add(app, g);
  crossval.add(app, g);
  cross_eval.add(app, g);
  bench.add(app, g);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  } catch (const ExitError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}
