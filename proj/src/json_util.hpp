// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>

#include "json.hpp"
#include "mrvm/error.hpp"
#include "mrvm/geometry.hpp"

namespace mrvm::detail {

using json = nlohmann::json;

/// Parses JSON, reporting syntax errors as "line L, column C".
json parse_json(const std::string& text, const std::string& what);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Rejects keys outside `known`.
void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& what);

json vec3_json(const geometry::Vec3& v);
geometry::Vec3 vec3_from(const json& j, const std::string& what);

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw InvalidArgument(std::string("field '") + key + "': " + e.what());
    }
  }
}

}  // namespace mrvm::detail
