// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#include "json_util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mrvm::detail {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw InvalidArgument(what + ": JSON parse error at line " + std::to_string(line) +
                          ", column " + std::to_string(column));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& what) {
  if (!j.is_object()) throw InvalidArgument(what + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw InvalidArgument(what + ": unknown field '" + key + "'");
  }
}

json vec3_json(const geometry::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

geometry::Vec3 vec3_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument(what + ": expected 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace mrvm::detail
