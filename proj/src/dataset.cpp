#include "melstream/dataset.hpp"

#include <algorithm>

#include "melstream/error.hpp"
#include "melstream/text_io.hpp"

namespace melstream {

namespace {

void expect_header(const std::vector<std::vector<std::string>>& rows, const std::vector<std::string>& header) {
  if (rows.empty()) throw Error(ErrorCode::InvalidDataset, "empty CSV (header row required)");
  std::vector<std::string> got;
  for (const auto& f : rows.front()) got.emplace_back(text::trim(f));
  if (got != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw Error(ErrorCode::InvalidDataset, "expected header '" + want + "'");
  }
}

}  // namespace

std::map<std::string, std::string> DatasetManifest::single_labels() const {
  std::map<std::string, std::string> out;
  for (const auto& e : entries) {
    if (e.labels.size() != 1) {
      throw Error(ErrorCode::InvalidDataset, "track '" + e.track_id + "' has " +
                                                 std::to_string(e.labels.size()) + " labels; single-label required");
    }
    out[e.track_id] = e.labels.front();
  }
  return out;
}

std::map<std::string, std::set<std::string>> DatasetManifest::label_sets() const {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& e : entries) out[e.track_id] = {e.labels.begin(), e.labels.end()};
  return out;
}

DatasetManifest parse_dataset(std::string_view csv, const std::filesystem::path& base_dir, std::string name,
                              std::optional<LabelMode> mode) {
  const auto rows = text::parse_csv(csv);
  expect_header(rows, {"track_id", "audio_path", "labels"});
  DatasetManifest ds;
  ds.name = std::move(name);
  std::set<std::string> ids;
  bool all_single = true;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 3) {
      throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(r + 1) + ": expected 3 fields");
    }
    DatasetEntry e;
    e.track_id = std::string(text::trim(row[0]));
    if (e.track_id.empty()) throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(r + 1) + ": empty track_id");
    if (!ids.insert(e.track_id).second) throw Error(ErrorCode::InvalidDataset, "duplicate track_id '" + e.track_id + "'");
    std::filesystem::path p(std::string(text::trim(row[1])));
    e.audio_path = p.is_relative() ? base_dir / p : p;
    for (const auto& l : text::split(row[2], ';')) {
      std::string label(text::trim(l));
      if (!label.empty() && std::find(e.labels.begin(), e.labels.end(), label) == e.labels.end()) {
        e.labels.push_back(std::move(label));
      }
    }
    if (e.labels.empty()) throw Error(ErrorCode::InvalidDataset, "track '" + e.track_id + "' has no labels");
    all_single = all_single && e.labels.size() == 1;
    ds.entries.push_back(std::move(e));
  }
  ds.label_mode = mode.value_or(all_single ? LabelMode::Single : LabelMode::Multi);
  if (ds.label_mode == LabelMode::Single && !all_single) {
    throw Error(ErrorCode::InvalidDataset, "single-label manifest has rows with several labels");
  }
  return ds;
}

DatasetManifest load_dataset(const std::filesystem::path& path, std::optional<LabelMode> mode) {
  return parse_dataset(text::read_text(path), path.parent_path(), path.stem().string(), mode);
}

std::string write_dataset(const DatasetManifest& dataset) {
  std::string out = "track_id,audio_path,labels\n";
  for (const auto& e : dataset.entries) {
    std::string labels;
    for (const auto& l : e.labels) labels += (labels.empty() ? "" : ";") + l;
    out += text::csv_field(e.track_id) + "," + text::csv_field(e.audio_path.string()) + "," +
           text::csv_field(labels) + "\n";
  }
  return out;
}

std::map<std::string, std::string> parse_labels(std::string_view csv) {
  const auto rows = text::parse_csv(csv);
  expect_header(rows, {"track_id", "label"});
  std::map<std::string, std::string> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(r + 1) + ": expected 2 fields");
    std::string id(text::trim(rows[r][0]));
    std::string label(text::trim(rows[r][1]));
    if (id.empty() || label.empty()) throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(r + 1) + ": empty field");
    if (!out.emplace(id, label).second) throw Error(ErrorCode::InvalidDataset, "duplicate track_id '" + id + "'");
  }
  return out;
}

std::map<std::string, std::string> load_labels(const std::filesystem::path& path) {
  return parse_labels(text::read_text(path));
}

std::string write_labels(const std::map<std::string, std::string>& labels) {
  std::string out = "track_id,label\n";
  for (const auto& [id, label] : labels) out += text::csv_field(id) + "," + text::csv_field(label) + "\n";
  return out;
}

}  // namespace melstream
