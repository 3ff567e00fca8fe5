#include "melstream/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <set>
#include <sstream>

#include "melstream/error.hpp"
#include "melstream/text_io.hpp"

namespace melstream {

namespace {

constexpr std::array<std::pair<std::string_view, OpKind>, 13> kOpNames{{
    {"input", OpKind::Input},
    {"conv2d", OpKind::Conv2d},
    {"dense", OpKind::Dense},
    {"batch_norm", OpKind::BatchNorm},
    {"relu", OpKind::Relu},
    {"elu", OpKind::Elu},
    {"max_pool2d", OpKind::MaxPool2d},
    {"mean_pool2d", OpKind::MeanPool2d},
    {"flatten", OpKind::Flatten},
    {"concat", OpKind::Concat},
    {"sigmoid", OpKind::Sigmoid},
    {"softmax", OpKind::Softmax},
    {"dropout", OpKind::Dropout},
}};

[[noreturn]] void fail(ErrorCode code, const std::string& node, const std::string& msg) {
  throw Error(code, "node '" + node + "': " + msg);
}

std::vector<std::size_t> parse_dims(std::string_view s, const std::string& what) {
  std::vector<std::size_t> dims;
  if (text::trim(s).empty()) return dims;
  for (const auto& part : text::split(s, ',')) {
    const auto t = text::trim(part);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || v == 0) {
      throw Error(ErrorCode::ManifestParse, "bad dimension list '" + std::string(s) + "' for " + what);
    }
    dims.push_back(v);
  }
  return dims;
}

std::string join_dims(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out;
}

std::map<std::string, std::string> parse_params(std::string_view s) {
  std::map<std::string, std::string> out;
  if (text::trim(s).empty()) return out;
  for (const auto& part : text::split(s, ';')) {
    if (text::trim(part).empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ManifestParse, "bad param '" + part + "'");
    out[std::string(text::trim(std::string_view(part).substr(0, eq)))] =
        std::string(text::trim(std::string_view(part).substr(eq + 1)));
  }
  return out;
}

std::string format_params(const std::map<std::string, std::string>& params) {
  std::string out;
  for (const auto& [k, v] : params) {
    if (!out.empty()) out += ";";
    out += k + "=" + v;
  }
  return out;
}

std::pair<std::size_t, std::size_t> pair_param(const NodeDef& node, const std::string& key,
                                               std::pair<std::size_t, std::size_t> fallback,
                                               bool required) {
  const auto it = node.params.find(key);
  if (it == node.params.end()) {
    if (required) fail(ErrorCode::ManifestParse, node.name, "missing param '" + key + "'");
    return fallback;
  }
  const auto dims = parse_dims(it->second, node.name + "." + key);
  if (dims.size() == 1) return {dims[0], dims[0]};
  if (dims.size() != 2) fail(ErrorCode::ManifestParse, node.name, "param '" + key + "' needs 1 or 2 values");
  return {dims[0], dims[1]};
}

float float_param(const NodeDef& node, const std::string& key, float fallback) {
  const auto it = node.params.find(key);
  if (it == node.params.end()) return fallback;
  float v = 0.0f;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(ErrorCode::ManifestParse, node.name, "bad number for '" + key + "'");
  }
  return v;
}

bool padding_param(const NodeDef& node) {
  const auto it = node.params.find("padding");
  if (it == node.params.end() || it->second == "valid") return false;
  if (it->second == "same") return true;
  fail(ErrorCode::ManifestParse, node.name, "padding must be 'same' or 'valid'");
}

std::size_t out_extent(std::size_t in, std::size_t window, std::size_t stride, bool same,
                       const std::string& node) {
  if (same) return (in + stride - 1) / stride;
  if (in < window) fail(ErrorCode::ShapeMismatch, node, "window larger than input with valid padding");
  return (in - window) / stride + 1;
}

void expect_counts(const NodeDef& node, const CompiledNode& c, std::size_t acts_min,
                   std::size_t acts_max, std::size_t w_min, std::size_t w_max) {
  if (c.activations.size() < acts_min || c.activations.size() > acts_max || c.weights.size() < w_min ||
      c.weights.size() > w_max) {
    fail(ErrorCode::ManifestParse, node.name,
         "op " + std::string(to_string(node.op)) + " got " + std::to_string(c.activations.size()) +
             " activation and " + std::to_string(c.weights.size()) + " weight inputs");
  }
}

}  // namespace

std::string_view to_string(OpKind op) {
  for (const auto& [name, k] : kOpNames) {
    if (k == op) return name;
  }
  return "?";
}

OpKind parse_op(std::string_view name) {
  for (const auto& [n, k] : kOpNames) {
    if (n == name) return k;
  }
  throw Error(ErrorCode::UnsupportedOp, "op '" + std::string(name) + "'");
}

ModelGraph::ModelGraph(GraphDef def) : def_(std::move(def)) {
  if (def_.format_version != 1) {
    throw Error(ErrorCode::UnsupportedFormat, "manifest format_version " + std::to_string(def_.format_version));
  }
  if (def_.nodes.empty()) throw Error(ErrorCode::ManifestParse, "graph has no nodes");
  validate(def_.feature_config, def_.sample_rate);
  if (def_.patch_frames < 1) throw Error(ErrorCode::InvalidConfig, "patch_frames must be positive");

  for (const auto& [name, declared] : def_.declared_shapes) {
    const auto it = def_.weights.find(name);
    if (it == def_.weights.end()) throw Error(ErrorCode::MissingWeight, "'" + name + "' not in weights file");
    if (it->second.shape != declared) {
      throw Error(ErrorCode::ShapeMismatch, "weight '" + name + "' declared " + shape_string(declared) +
                                                " but stored " + shape_string(it->second.shape));
    }
  }

  std::map<std::string, std::size_t, std::less<>> all_names;
  for (std::size_t i = 0; i < def_.nodes.size(); ++i) {
    if (!all_names.emplace(def_.nodes[i].name, i).second) {
      throw Error(ErrorCode::ManifestParse, "duplicate node name '" + def_.nodes[i].name + "'");
    }
  }

  std::size_t input_nodes = 0;
  compiled_.resize(def_.nodes.size());
  for (std::size_t i = 0; i < def_.nodes.size(); ++i) {
    const NodeDef& node = def_.nodes[i];
    CompiledNode& c = compiled_[i];
    c.op = node.op;
    for (const auto& in : node.inputs) {
      const auto it = all_names.find(in);
      if (it != all_names.end()) {
        if (it->second >= i) {
          fail(ErrorCode::CyclicGraph, node.name, "input '" + in + "' is not an earlier node");
        }
        c.activations.push_back(it->second);
      } else if (def_.weights.contains(in)) {
        c.weights.push_back(in);
      } else {
        fail(ErrorCode::MissingWeight, node.name, "input '" + in + "' is neither a node nor a weight");
      }
    }
    auto in_shape = [&](std::size_t k) -> const Shape& { return compiled_[c.activations[k]].shape; };
    auto w_shape = [&](std::size_t k) -> const Shape& { return def_.weights.at(c.weights[k]).shape; };

    switch (node.op) {
      case OpKind::Input: {
        expect_counts(node, c, 0, 0, 0, 0);
        const auto it = node.params.find("shape");
        if (it == node.params.end()) fail(ErrorCode::ManifestParse, node.name, "input needs shape=");
        c.shape = parse_dims(it->second, node.name);
        if (c.shape.empty()) fail(ErrorCode::ManifestParse, node.name, "empty input shape");
        ++input_nodes;
        input_index_ = i;
        break;
      }
      case OpKind::Conv2d: {
        expect_counts(node, c, 1, 1, 1, 2);
        const Shape& x = in_shape(0);
        const Shape& k = w_shape(0);
        if (x.size() != 3) fail(ErrorCode::ShapeMismatch, node.name, "conv2d input must be [H,W,C]");
        if (k.size() != 4 || k[2] != x[2]) {
          fail(ErrorCode::ShapeMismatch, node.name,
               "kernel " + shape_string(k) + " incompatible with input " + shape_string(x));
        }
        if (c.weights.size() == 2 && w_shape(1) != Shape{k[3]}) {
          fail(ErrorCode::ShapeMismatch, node.name, "bias must be [" + std::to_string(k[3]) + "]");
        }
        std::tie(c.stride_h, c.stride_w) = pair_param(node, "stride", {1, 1}, false);
        c.same_padding = padding_param(node);
        c.shape = {out_extent(x[0], k[0], c.stride_h, c.same_padding, node.name),
                   out_extent(x[1], k[1], c.stride_w, c.same_padding, node.name), k[3]};
        break;
      }
      case OpKind::Dense: {
        expect_counts(node, c, 1, 1, 1, 2);
        const Shape& x = in_shape(0);
        const Shape& k = w_shape(0);
        if (k.size() != 2 || k[0] != x.back()) {
          fail(ErrorCode::ShapeMismatch, node.name,
               "kernel " + shape_string(k) + " incompatible with input " + shape_string(x));
        }
        if (c.weights.size() == 2 && w_shape(1) != Shape{k[1]}) {
          fail(ErrorCode::ShapeMismatch, node.name, "bias must be [" + std::to_string(k[1]) + "]");
        }
        c.shape = x;
        c.shape.back() = k[1];
        break;
      }
      case OpKind::BatchNorm: {
        expect_counts(node, c, 1, 1, 4, 4);
        const Shape& x = in_shape(0);
        for (std::size_t w = 0; w < 4; ++w) {
          if (w_shape(w) != Shape{x.back()}) {
            fail(ErrorCode::ShapeMismatch, node.name, "batch_norm parameters must be [channels]");
          }
        }
        c.epsilon = float_param(node, "epsilon", 1e-6f);
        if (!(c.epsilon >= 0.0f)) fail(ErrorCode::ManifestParse, node.name, "epsilon must be >= 0");
        c.shape = x;
        break;
      }
      case OpKind::Elu:
        c.alpha = float_param(node, "alpha", 1.0f);
        [[fallthrough]];
      case OpKind::Relu:
      case OpKind::Sigmoid:
      case OpKind::Softmax:
      case OpKind::Dropout:
        expect_counts(node, c, 1, 1, 0, 0);
        c.shape = in_shape(0);
        break;
      case OpKind::MaxPool2d:
      case OpKind::MeanPool2d: {
        expect_counts(node, c, 1, 1, 0, 0);
        const Shape& x = in_shape(0);
        if (x.size() != 3) fail(ErrorCode::ShapeMismatch, node.name, "pooling input must be [H,W,C]");
        std::tie(c.pool_h, c.pool_w) = pair_param(node, "pool", {1, 1}, true);
        std::tie(c.stride_h, c.stride_w) = pair_param(node, "stride", {c.pool_h, c.pool_w}, false);
        c.same_padding = padding_param(node);
        c.shape = {out_extent(x[0], c.pool_h, c.stride_h, c.same_padding, node.name),
                   out_extent(x[1], c.pool_w, c.stride_w, c.same_padding, node.name), x[2]};
        break;
      }
      case OpKind::Flatten:
        expect_counts(node, c, 1, 1, 0, 0);
        c.shape = {shape_product(in_shape(0))};
        break;
      case OpKind::Concat: {
        expect_counts(node, c, 1, SIZE_MAX, 0, 0);
        c.shape = in_shape(0);
        for (std::size_t k = 1; k < c.activations.size(); ++k) {
          const Shape& s = in_shape(k);
          if (s.size() != c.shape.size() || !std::equal(s.begin(), s.end() - 1, c.shape.begin())) {
            fail(ErrorCode::ShapeMismatch, node.name, "concat inputs differ outside the last axis");
          }
          c.shape.back() += s.back();
        }
        break;
      }
    }
  }

  if (input_nodes != 1) {
    throw Error(ErrorCode::ManifestParse, "graph needs exactly one input node, found " + std::to_string(input_nodes));
  }
  index_ = std::move(all_names);
  if (def_.nodes[input_index_].name != def_.input) {
    throw Error(ErrorCode::UnknownNode, "declared input '" + def_.input + "' is not the input node");
  }
  output_index_ = index_of(def_.output);
  index_of(def_.embedding);
  if (!def_.labels.empty() && def_.labels.size() != output_size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(def_.labels.size()) + " labels for output size " +
                                              std::to_string(output_size()));
  }
  const std::size_t patch_values = static_cast<std::size_t>(def_.patch_frames) *
                                   static_cast<std::size_t>(def_.feature_config.n_mels);
  if (shape_product(input_shape()) != patch_values) {
    throw Error(ErrorCode::ShapeMismatch, "input shape " + shape_string(input_shape()) +
                                              " does not hold patch_frames x n_mels = " +
                                              std::to_string(patch_values) + " values");
  }
}

std::optional<std::size_t> ModelGraph::find(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ModelGraph::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw Error(ErrorCode::UnknownNode, "no node named '" + std::string(name) + "'");
}

GraphDef parse_manifest(std::string_view text) {
  GraphDef def;
  std::map<std::string, std::string> feature;
  std::map<std::size_t, std::map<std::string, std::string>> node_fields;
  std::map<std::size_t, std::map<std::string, std::string>> weight_fields;
  std::set<std::string> seen;

  auto parse_indexed = [](const std::string& key, std::string_view prefix, std::size_t& index,
                          std::string& field) {
    if (!key.starts_with(prefix)) return false;
    const auto close = key.find("].", prefix.size());
    if (close == std::string::npos) throw Error(ErrorCode::ManifestParse, "bad key '" + key + "'");
    const std::string_view num = std::string_view(key).substr(prefix.size(), close - prefix.size());
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), index);
    if (ec != std::errc{} || ptr != num.data() + num.size()) {
      throw Error(ErrorCode::ManifestParse, "bad index in '" + key + "'");
    }
    field = key.substr(close + 2);
    return true;
  };
  auto to_int = [](const std::string& key, const std::string& v) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw Error(ErrorCode::ManifestParse, "bad integer for '" + key + "'");
    }
    return out;
  };

  for (auto& [key, value] : text::parse_key_values(text)) {
    if (!seen.insert(key).second) throw Error(ErrorCode::ManifestParse, "duplicate key '" + key + "'");
    std::size_t index = 0;
    std::string field;
    if (key.starts_with("feature_config.")) {
      feature[key.substr(15)] = value;
    } else if (parse_indexed(key, "nodes[", index, field)) {
      node_fields[index][field] = value;
    } else if (parse_indexed(key, "weights[", index, field)) {
      weight_fields[index][field] = value;
    } else if (key == "format_version") {
      def.format_version = to_int(key, value);
    } else if (key == "input") {
      def.input = value;
    } else if (key == "output") {
      def.output = value;
    } else if (key == "embedding") {
      def.embedding = value;
    } else if (key == "labels") {
      def.labels.clear();
      if (!value.empty()) {
        for (const auto& l : text::split(value, ';')) def.labels.emplace_back(text::trim(l));
      }
    } else if (key == "patch_frames") {
      def.patch_frames = to_int(key, value);
    } else if (key == "sample_rate") {
      def.sample_rate = to_int(key, value);
    } else {
      throw Error(ErrorCode::ManifestParse, "unknown key '" + key + "'");
    }
  }

  for (const char* required : {"format_version", "input", "output", "embedding", "labels", "patch_frames"}) {
    if (!seen.contains(required)) throw Error(ErrorCode::ManifestParse, std::string("missing key '") + required + "'");
  }
  try {
    def.feature_config = mel_config_from_key_values(feature);
  } catch (const Error& e) {
    throw Error(ErrorCode::ManifestParse, std::string("feature_config: ") + e.what());
  }

  std::size_t expected = 0;
  for (auto& [index, fields] : node_fields) {
    if (index != expected++) throw Error(ErrorCode::ManifestParse, "node indices must be contiguous from 0");
    for (const char* f : {"name", "op", "params", "inputs"}) {
      if (!fields.contains(f)) {
        throw Error(ErrorCode::ManifestParse, "nodes[" + std::to_string(index) + "] missing '" + f + "'");
      }
    }
    NodeDef node;
    node.name = fields["name"];
    node.op = parse_op(fields["op"]);
    node.params = parse_params(fields["params"]);
    if (!fields["inputs"].empty()) {
      for (const auto& in : text::split(fields["inputs"], ',')) node.inputs.emplace_back(text::trim(in));
    }
    if (fields.size() != 4) throw Error(ErrorCode::ManifestParse, "unknown field in nodes[" + std::to_string(index) + "]");
    def.nodes.push_back(std::move(node));
  }
  for (auto& [index, fields] : weight_fields) {
    if (!fields.contains("name") || !fields.contains("shape")) {
      throw Error(ErrorCode::ManifestParse, "weights[" + std::to_string(index) + "] needs name and shape");
    }
    def.declared_shapes[fields["name"]] = parse_dims(fields["shape"], fields["name"]);
  }
  return def;
}

std::string write_manifest(const GraphDef& def) {
  std::ostringstream out;
  out << "# melstream model manifest\n";
  out << "format_version = " << def.format_version << "\n";
  out << "input = " << def.input << "\n";
  out << "output = " << def.output << "\n";
  out << "embedding = " << def.embedding << "\n";
  out << "labels = ";
  for (std::size_t i = 0; i < def.labels.size(); ++i) out << (i ? ";" : "") << def.labels[i];
  out << "\n";
  out << "patch_frames = " << def.patch_frames << "\n";
  out << "sample_rate = " << def.sample_rate << "\n";
  for (const auto& [k, v] : to_key_values(def.feature_config)) out << "feature_config." << k << " = " << v << "\n";
  std::size_t w = 0;
  for (const auto& [name, tensor] : def.weights) {
    out << "weights[" << w << "].name = " << name << "\n";
    out << "weights[" << w << "].shape = " << join_dims(tensor.shape) << "\n";
    ++w;
  }
  for (std::size_t i = 0; i < def.nodes.size(); ++i) {
    const auto& n = def.nodes[i];
    out << "nodes[" << i << "].name = " << n.name << "\n";
    out << "nodes[" << i << "].op = " << to_string(n.op) << "\n";
    out << "nodes[" << i << "].params = " << format_params(n.params) << "\n";
    out << "nodes[" << i << "].inputs = ";
    for (std::size_t k = 0; k < n.inputs.size(); ++k) out << (k ? "," : "") << n.inputs[k];
    out << "\n";
  }
  return out.str();
}

ModelGraph load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path) {
  GraphDef def = parse_manifest(text::read_text(manifest_path));
  def.weights = read_tensors(weights_path);
  return ModelGraph(std::move(def));
}

void save_model(const ModelGraph& graph, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path) {
  text::write_text(manifest_path, write_manifest(graph.def()));
  write_tensors(weights_path, graph.def().weights);
}

}  // namespace melstream
