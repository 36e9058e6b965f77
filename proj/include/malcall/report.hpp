#pragma once

// Tables emitted as both JSON and CSV, and small file-writing helpers.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "malcall/error.hpp"

#ifndef MALCALL_VERSION
#define MALCALL_VERSION "0.1.0"
#endif

namespace malcall {

inline constexpr const char* kVersion = MALCALL_VERSION;

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void add(std::vector<nlohmann::json> row) {
    if (row.size() != columns.size())
      throw ContractError("table '" + name + "': row has " + std::to_string(row.size()) + " cells, expected " +
                          std::to_string(columns.size()));
    rows.push_back(std::move(row));
  }

  // Array of row objects keyed by column name.
  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json o = nlohmann::json::object();
      for (std::size_t c = 0; c < columns.size(); ++c) o[columns[c]] = r[c];
      arr.push_back(std::move(o));
    }
    return arr;
  }

  void write_csv(std::ostream& out) const {
    auto cell = [](const nlohmann::json& v) -> std::string {
      if (v.is_null()) return "";
      if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) {
          if (ch == '"') q += '"';
          q += ch;
        }
        return q + "\"";
      }
      return v.dump();
    };
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << cell(r[c]);
      out << '\n';
    }
  }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

// <dir>/<table.name>.json and <dir>/<table.name>.csv
inline void write_table(const std::filesystem::path& dir, const Table& t) {
  write_json(dir / (t.name + ".json"), t.to_json());
  std::ostringstream csv;
  t.write_csv(csv);
  write_text(dir / (t.name + ".csv"), csv.str());
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace malcall
