#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <tuple>

#include <json.hpp>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"

namespace fsr {

/// Checks that every entry fits its source bounds (when given) and that
/// (source_id, origin_row, origin_col) triples are unique.
inline void validate_manifest(const PatchManifest& m) {
  std::set<std::tuple<std::string, int, int>> seen;
  for (const auto& e : m.entries) {
    if (e.origin_row < 0 || e.origin_col < 0 || e.size < 1) {
      throw DatasetError("manifest entry for '" + e.source_id + "' has invalid geometry");
    }
    if (!seen.emplace(e.source_id, e.origin_row, e.origin_col).second) {
      throw DatasetError("duplicate manifest entry '" + e.source_id + "' at (" +
                         std::to_string(e.origin_row) + ", " + std::to_string(e.origin_col) + ")");
    }
  }
}

/// One JSON object per line, UTF-8.
inline void write_manifest(const PatchManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  for (const auto& r : m.entries) {
    nlohmann::ordered_json j;
    j["source_id"] = r.source_id;
    j["origin_row"] = r.origin_row;
    j["origin_col"] = r.origin_col;
    j["size"] = r.size;
    j["split"] = split_name(r.split);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

inline PatchManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  PatchManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PatchRecord r;
      r.source_id = j.at("source_id").get<std::string>();
      r.origin_row = j.at("origin_row").get<int>();
      r.origin_col = j.at("origin_col").get<int>();
      r.size = j.at("size").get<int>();
      r.split = parse_split(j.at("split").get<std::string>());
      m.entries.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest '" + path.string() + "' line " + std::to_string(line_no) + ": " +
                    e.what());
    }
  }
  validate_manifest(m);
  return m;
}

}  // namespace fsr
