// Minimal structural validator for the subset of JSON Schema used by the
// shipped schema files: type, properties, required, items, enum, minimum,
// minItems, additionalProperties, anyOf.
#pragma once

#include <string>

#include <json.hpp>

namespace schema_check {

using Json = nlohmann::json;

inline bool validate(const Json& value, const Json& schema, std::string& error);

inline bool type_matches(const Json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "integer") return value.is_number_integer();
  if (type == "number") return value.is_number();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

inline bool validate(const Json& value, const Json& schema, std::string& error) {
  if (schema.contains("type") && !type_matches(value, schema["type"].get<std::string>())) {
    error = "expected type " + schema["type"].get<std::string>();
    return false;
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& candidate : schema["enum"])
      if (candidate == value) found = true;
    if (!found) {
      error = "value not in enum";
      return false;
    }
  }
  if (schema.contains("minimum") && value.is_number() &&
      value.get<double>() < schema["minimum"].get<double>()) {
    error = "below minimum";
    return false;
  }
  if (schema.contains("anyOf")) {
    bool any = false;
    for (const auto& branch : schema["anyOf"]) {
      std::string branch_error;
      if (validate(value, branch, branch_error)) any = true;
    }
    if (!any) {
      error = "no anyOf branch matched";
      return false;
    }
  }
  if (value.is_object()) {
    if (schema.contains("required"))
      for (const auto& key : schema["required"])
        if (!value.contains(key.get<std::string>())) {
          error = "missing required key " + key.get<std::string>();
          return false;
        }
    const bool sealed = schema.value("additionalProperties", Json(true)) == Json(false);
    for (const auto& [key, member] : value.items()) {
      if (schema.contains("properties") && schema["properties"].contains(key)) {
        if (!validate(member, schema["properties"][key], error)) {
          error = key + ": " + error;
          return false;
        }
      } else if (sealed) {
        error = "unexpected key " + key;
        return false;
      }
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") &&
        value.size() < schema["minItems"].get<size_t>()) {
      error = "too few items";
      return false;
    }
    if (schema.contains("items"))
      for (size_t i = 0; i < value.size(); ++i)
        if (!validate(value[i], schema["items"], error)) {
          error = "item " + std::to_string(i) + ": " + error;
          return false;
        }
  }
  return true;
}

}  // namespace schema_check
