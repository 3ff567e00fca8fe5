#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "melstream/dsp.hpp"
#include "melstream/tensor.hpp"

namespace melstream {

enum class OpKind {
  Input,
  Conv2d,
  Dense,
  BatchNorm,
  Relu,
  Elu,
  MaxPool2d,
  MeanPool2d,
  Flatten,
  Concat,
  Sigmoid,
  Softmax,
  Dropout,
};

std::string_view to_string(OpKind op);
OpKind parse_op(std::string_view name);  // UnsupportedOp

struct NodeDef {
  std::string name;
  OpKind op = OpKind::Input;
  std::map<std::string, std::string> params;
  // Earlier node names (activations) and/or weight names, in op order.
  std::vector<std::string> inputs;
};

// Mutable description of a network; ModelGraph is its validated form.
struct GraphDef {
  int format_version = 1;
  std::vector<NodeDef> nodes;
  TensorMap weights;
  // Optional declared shapes, checked against the stored tensors at load.
  std::map<std::string, Shape> declared_shapes;
  std::string input;
  std::string output;
  std::string embedding;
  std::vector<std::string> labels;
  int patch_frames = 1;
  int sample_rate = kCanonicalSampleRate;
  MelConfig feature_config;
};

struct CompiledNode {
  OpKind op = OpKind::Input;
  std::vector<std::size_t> activations;  // producer node indices
  std::vector<std::string> weights;      // keys into GraphDef::weights
  Shape shape;                           // inferred output shape
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pool_h = 1, pool_w = 1;
  bool same_padding = false;
  float epsilon = 1e-6f;
  float alpha = 1.0f;
};

// Validated, shape-inferred, immutable network. Safe to share across threads.
class ModelGraph {
 public:
  // Throws MissingWeight, ShapeMismatch, UnsupportedOp, CyclicGraph,
  // UnknownNode, ManifestParse or InvalidConfig.
  explicit ModelGraph(GraphDef def);

  const GraphDef& def() const { return def_; }
  const std::vector<NodeDef>& nodes() const { return def_.nodes; }
  const CompiledNode& compiled(std::size_t i) const { return compiled_[i]; }
  std::size_t node_count() const { return compiled_.size(); }

  const std::string& input_name() const { return def_.input; }
  const std::string& output_name() const { return def_.output; }
  const std::string& embedding_name() const { return def_.embedding; }
  const std::vector<std::string>& labels() const { return def_.labels; }
  int patch_frames() const { return def_.patch_frames; }
  int sample_rate() const { return def_.sample_rate; }
  const MelConfig& feature_config() const { return def_.feature_config; }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // UnknownNode
  std::size_t input_index() const { return input_index_; }
  std::size_t output_index() const { return output_index_; }

  const Shape& shape_of(std::string_view name) const { return compiled_[index_of(name)].shape; }
  const Shape& input_shape() const { return compiled_[input_index_].shape; }
  std::size_t output_size() const { return shape_product(compiled_[output_index_].shape); }
  const Tensor& weight(const std::string& name) const { return def_.weights.at(name); }

  bool softmax_output() const { return compiled_[output_index_].op == OpKind::Softmax; }

 private:
  GraphDef def_;
  std::vector<CompiledNode> compiled_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t input_index_ = 0;
  std::size_t output_index_ = 0;
};

// Manifest text <-> GraphDef (weights left empty by parse).
GraphDef parse_manifest(std::string_view text);
std::string write_manifest(const GraphDef& def);

ModelGraph load_model(const std::filesystem::path& manifest_path,
                      const std::filesystem::path& weights_path);
void save_model(const ModelGraph& graph, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path);

}  // namespace melstream
