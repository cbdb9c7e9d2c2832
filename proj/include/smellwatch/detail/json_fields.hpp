// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "smellwatch/error.hpp"

namespace smellwatch::detail {

using nlohmann::json;

/// Parses text as JSON, reporting failures as Error{parse} with a line number.
json parse_json(std::string_view text, std::string_view what);

std::string field_path(std::string_view ctx, std::string_view key);

[[noreturn]] void field_error(std::string_view ctx, std::string_view key, std::string_view expected);

template <class T>
bool json_is(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else {
    return true;
  }
}

template <class T>
constexpr std::string_view json_type_name() {
  if constexpr (std::is_same_v<T, bool>) {
    return "boolean";
  } else if constexpr (std::is_same_v<T, std::string>) {
    return "string";
  } else if constexpr (std::is_integral_v<T>) {
    return "integer";
  } else {
    return "number";
  }
}

template <class T>
T required(const json& obj, std::string_view key, std::string_view ctx) {
  if (!obj.is_object()) field_error(ctx, "", "object");
  auto it = obj.find(key);
  if (it == obj.end()) field_error(ctx, key, std::string("required ") + std::string(json_type_name<T>()));
  if (!json_is<T>(*it)) field_error(ctx, key, json_type_name<T>());
  return it->template get<T>();
}

template <class T>
std::optional<T> optional_field(const json& obj, std::string_view key, std::string_view ctx) {
  if (!obj.is_object()) field_error(ctx, "", "object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!json_is<T>(*it)) field_error(ctx, key, json_type_name<T>());
  return it->template get<T>();
}

template <class T>
T field_or(const json& obj, std::string_view key, std::string_view ctx, T fallback) {
  auto v = optional_field<T>(obj, key, ctx);
  return v ? *v : fallback;
}

const json& required_array(const json& obj, std::string_view key, std::string_view ctx);
const json* optional_array(const json& obj, std::string_view key, std::string_view ctx);
const json* optional_object(const json& obj, std::string_view key, std::string_view ctx);

}  // namespace smellwatch::detail
