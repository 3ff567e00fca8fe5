#include "melstream/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "melstream/error.hpp"
#include "melstream/text_io.hpp"

namespace melstream {

std::string normalize_tag(std::string_view tag) {
  std::string out(text::trim(tag));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool Taxonomy::is_class(std::string_view tag) const {
  return std::find(classes.begin(), classes.end(), tag) != classes.end();
}

void Taxonomy::validate() const {
  for (const auto& [tag, cls] : tag_to_class) {
    if (!is_class(cls)) throw Error(ErrorCode::InvalidDataset, "alias '" + tag + "' maps to non-class '" + cls + "'");
  }
  for (const auto& [start, unused] : parent) {
    std::set<std::string> seen{start};
    auto it = parent.find(start);
    while (it != parent.end()) {
      if (!seen.insert(it->second).second) {
        throw Error(ErrorCode::InvalidDataset, "taxonomy hierarchy has a cycle through '" + it->second + "'");
      }
      it = parent.find(it->second);
    }
  }
}

Taxonomy parse_taxonomy(std::string_view tsv) {
  Taxonomy tax;
  std::size_t line_no = 0;
  for (const auto& raw : text::split(tsv, '\n')) {
    ++line_no;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto fields = text::split(line, '\t');
    for (auto& f : fields) f = normalize_tag(f);
    const std::string where = "taxonomy line " + std::to_string(line_no);
    if (fields[0] == "classes") {
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (!fields[i].empty() && !tax.is_class(fields[i])) tax.classes.push_back(fields[i]);
      }
    } else if (fields[0] == "alias") {
      if (fields.size() != 3) throw Error(ErrorCode::InvalidDataset, where + ": alias needs tag and class");
      tax.tag_to_class[fields[1]] = fields[2];
    } else {
      if (fields.size() != 2 || fields[1].empty()) {
        throw Error(ErrorCode::InvalidDataset, where + ": expected tag<TAB>parent");
      }
      if (fields[0] == fields[1]) throw Error(ErrorCode::InvalidDataset, where + ": tag is its own parent");
      tax.parent[fields[0]] = fields[1];
    }
  }
  tax.validate();
  return tax;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) { return parse_taxonomy(text::read_text(path)); }

std::set<std::string> map_tags(const std::set<std::string>& raw_tags, const Taxonomy& tax) {
  std::set<std::string> out;
  for (const auto& raw : raw_tags) {
    std::string tag = normalize_tag(raw);
    // Acyclic hierarchy (validated at load) bounds this walk.
    for (std::size_t guard = 0; guard <= tax.parent.size(); ++guard) {
      if (tax.is_class(tag)) {
        out.insert(tag);
        break;
      }
      if (const auto alias = tax.tag_to_class.find(tag); alias != tax.tag_to_class.end()) {
        out.insert(alias->second);
        break;
      }
      const auto up = tax.parent.find(tag);
      if (up == tax.parent.end()) break;
      tag = up->second;
    }
  }
  return out;
}

}  // namespace melstream
