#pragma once

// Canonical JSON + small file helpers.
//
// Every artifact the stack writes (checkpoints, records, summaries, reports)
// must serialize to identical bytes for identical content. nlohmann::json
// with the default std::map object container already gives us both halves of
// that guarantee:
//   * object keys serialize in sorted order, and
//   * doubles use the shortest representation that round-trips bit-exactly.
// This header pins those conventions behind named helpers.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"

#include "ppai/errors.hpp"

namespace ppai {

using json = nlohmann::json;

// Canonical byte form: compact separators, sorted keys (map-backed objects).
inline std::string canonical_dump(const json& j) { return j.dump(); }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::FileNotFound, "cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::FileNotFound, "cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) fail(Errc::FileNotFound, "short write: " + path);
}

inline json parse_json(const std::string& text, const std::string& origin) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail(Errc::ParseError, "invalid JSON in " + origin);
  return j;
}

inline json load_json_file(const std::string& path) {
  return parse_json(read_text_file(path), path);
}

// Field accessors used by the config/checkpoint loaders: presence and type
// are validated so a malformed file fails with a named error instead of a
// silent default or a library exception.
inline const json& require_field(const json& j, const std::string& key,
                                 const std::string& origin) {
  auto it = j.find(key);
  if (it == j.end()) fail(Errc::ParseError, origin + ": missing field '" + key + "'");
  return *it;
}

inline double require_number(const json& j, const std::string& key,
                             const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_number()) fail(Errc::ParseError, origin + ": field '" + key + "' must be a number");
  return f.get<double>();
}

inline std::int64_t require_int(const json& j, const std::string& key,
                                const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_number_integer()) fail(Errc::ParseError, origin + ": field '" + key + "' must be an integer");
  return f.get<std::int64_t>();
}

inline std::uint64_t require_uint(const json& j, const std::string& key,
                                  const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_number_unsigned() && !(f.is_number_integer() && f.get<std::int64_t>() >= 0))
    fail(Errc::ParseError, origin + ": field '" + key + "' must be a non-negative integer");
  return f.get<std::uint64_t>();
}

inline std::string require_string(const json& j, const std::string& key,
                                  const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_string()) fail(Errc::ParseError, origin + ": field '" + key + "' must be a string");
  return f.get<std::string>();
}

inline bool require_bool(const json& j, const std::string& key, const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_boolean()) fail(Errc::ParseError, origin + ": field '" + key + "' must be a boolean");
  return f.get<bool>();
}

// Strict-schema guard: every key present must be in the allowed set, so a
// typo in a config surfaces as an error instead of silently taking defaults.
inline void reject_unknown(const json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& origin) {
  if (!j.is_object()) fail(Errc::ParseError, origin + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (std::string_view k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(Errc::ParseError, origin + ": unknown key '" + it.key() + "'");
  }
}

inline std::vector<double> require_double_array(const json& j, const std::string& key,
                                                const std::string& origin) {
  const json& f = require_field(j, key, origin);
  if (!f.is_array()) fail(Errc::ParseError, origin + ": field '" + key + "' must be an array");
  std::vector<double> out;
  out.reserve(f.size());
  for (const auto& v : f) {
    if (!v.is_number()) fail(Errc::ParseError, origin + ": field '" + key + "' must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace ppai
