// SPDX-License-Identifier: Apache-2.0

#include "smellwatch/detail/json_fields.hpp"

#include <algorithm>

namespace smellwatch {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::argument: return "argument_error";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::configuration: return "configuration_error";
    case ErrorCode::store: return "store_unavailable";
    case ErrorCode::startup: return "startup_error";
    case ErrorCode::unreachable: return "unreachable";
  }
  return "error";
}

}  // namespace smellwatch

namespace smellwatch::detail {

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    fail(ErrorCode::parse, std::string(what) + ": line " + std::to_string(line) + ": " + e.what());
  }
}

std::string field_path(std::string_view ctx, std::string_view key) {
  if (ctx.empty()) return std::string(key);
  if (key.empty()) return std::string(ctx);
  return std::string(ctx) + "." + std::string(key);
}

void field_error(std::string_view ctx, std::string_view key, std::string_view expected) {
  fail(ErrorCode::parse, field_path(ctx, key) + ": expected " + std::string(expected));
}

const json& required_array(const json& obj, std::string_view key, std::string_view ctx) {
  if (!obj.is_object()) field_error(ctx, "", "object");
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) field_error(ctx, key, "array");
  return *it;
}

const json* optional_array(const json& obj, std::string_view key, std::string_view ctx) {
  if (!obj.is_object()) field_error(ctx, "", "object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  if (!it->is_array()) field_error(ctx, key, "array");
  return &*it;
}

const json* optional_object(const json& obj, std::string_view key, std::string_view ctx) {
  if (!obj.is_object()) field_error(ctx, "", "object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  if (!it->is_object()) field_error(ctx, key, "object");
  return &*it;
}

}  // namespace smellwatch::detail
