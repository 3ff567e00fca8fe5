#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace melstream {

// Genre taxonomy: a class list, direct tag aliases, and a tag hierarchy.
// Tags are compared case-insensitively after trimming.
struct Taxonomy {
  std::vector<std::string> classes;
  std::map<std::string, std::string> tag_to_class;
  std::map<std::string, std::string> parent;

  bool is_class(std::string_view tag) const;

  // InvalidDataset if an alias targets a non-class or the hierarchy has a cycle.
  void validate() const;
};

// Tab-separated lines:
//   classes<TAB>rock<TAB>pop ...   class list (may repeat)
//   alias<TAB>hiphop<TAB>hip hop   direct tag -> class
//   progressive rock<TAB>rock      tag -> parent tag
// Blank lines and lines starting with '#' are ignored.
Taxonomy parse_taxonomy(std::string_view tsv);
Taxonomy load_taxonomy(const std::filesystem::path& path);

std::string normalize_tag(std::string_view tag);

// Direct class matches win; aliases next; otherwise the hierarchy is walked
// upwards until a class (or alias) is reached. Unmatched tags are dropped.
std::set<std::string> map_tags(const std::set<std::string>& raw_tags, const Taxonomy& tax);

}  // namespace melstream
