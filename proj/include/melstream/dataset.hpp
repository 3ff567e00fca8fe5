#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace melstream {

enum class LabelMode { Single, Multi };

struct DatasetEntry {
  std::string track_id;
  std::filesystem::path audio_path;
  std::vector<std::string> labels;  // non-empty, unique, in file order
};

struct DatasetManifest {
  std::string name;
  LabelMode label_mode = LabelMode::Single;
  std::vector<DatasetEntry> entries;

  // track_id -> single label. InvalidDataset for multi-label manifests.
  std::map<std::string, std::string> single_labels() const;
  std::map<std::string, std::set<std::string>> label_sets() const;
};

// CSV with header `track_id,audio_path,labels`; labels are ';'-separated.
// Relative audio paths resolve against base_dir. With no explicit mode the
// manifest is single-label iff every row has exactly one label.
DatasetManifest parse_dataset(std::string_view csv, const std::filesystem::path& base_dir,
                              std::string name = {}, std::optional<LabelMode> mode = std::nullopt);
DatasetManifest load_dataset(const std::filesystem::path& path, std::optional<LabelMode> mode = std::nullopt);
std::string write_dataset(const DatasetManifest& dataset);

// CSV with header `track_id,label`.
std::map<std::string, std::string> parse_labels(std::string_view csv);
std::map<std::string, std::string> load_labels(const std::filesystem::path& path);
std::string write_labels(const std::map<std::string, std::string>& labels);

}  // namespace melstream
