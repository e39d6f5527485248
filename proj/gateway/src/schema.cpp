#include "crowdshape/gateway/schema.hpp"

#include "schema_data.hpp"

namespace crowdshape::gateway {

using nlohmann::json;

std::string_view schema_text() { return kSchemaText; }

SchemaChecker::SchemaChecker(const json& schema) : schema_(schema), version_(schema.value("version", 0)) {}

const SchemaChecker& SchemaChecker::builtin() {
  static const SchemaChecker checker(json::parse(schema_text()));
  return checker;
}

const json* SchemaChecker::lookup(std::string_view name) const {
  for (const char* section : {"messages", "types", "stream"}) {
    if (!schema_.contains(section)) continue;
    const json& s = schema_.at(section);
    const auto it = s.find(std::string(name));
    if (it != s.end()) return &*it;
  }
  return nullptr;
}

std::vector<std::string> SchemaChecker::check_message(std::string_view name, const json& value) const {
  std::vector<std::string> errors;
  const json* spec = lookup(name);
  if (!spec) {
    errors.push_back("unknown message " + std::string(name));
    return errors;
  }
  check_value(*spec, value, std::string(name), errors);
  return errors;
}

std::vector<std::string> SchemaChecker::check_stream(const json& value) const {
  std::vector<std::string> errors;
  if (!value.is_object() || !value.contains("kind") || !value.at("kind").is_string()) {
    errors.push_back("stream message needs a string 'kind'");
    return errors;
  }
  const std::string kind = value.at("kind").get<std::string>();
  const json& stream = schema_.at("stream");
  if (!stream.contains(kind)) {
    errors.push_back("unknown stream kind " + kind);
    return errors;
  }
  check_fields(stream.at(kind), value, kind, errors);
  return errors;
}

void SchemaChecker::check_fields(const json& fields, const json& value, const std::string& where,
                                 std::vector<std::string>& errors) const {
  if (!value.is_object()) {
    errors.push_back(where + ": expected an object");
    return;
  }
  for (const auto& [raw_key, spec] : fields.items()) {
    const bool optional = !raw_key.empty() && raw_key.back() == '?';
    const std::string key = optional ? raw_key.substr(0, raw_key.size() - 1) : raw_key;
    if (!value.contains(key)) {
      if (!optional) errors.push_back(where + ": missing field " + key);
      continue;
    }
    check_value(spec, value.at(key), where + "." + key, errors);
  }
  for (const auto& [key, _] : value.items()) {
    if (!fields.contains(key) && !fields.contains(key + "?")) errors.push_back(where + ": unexpected field " + key);
  }
}

void SchemaChecker::check_value(const json& spec, const json& value, const std::string& where,
                                std::vector<std::string>& errors) const {
  if (spec.is_string()) {
    const std::string t = spec.get<std::string>();
    if (t == "string") {
      if (!value.is_string()) errors.push_back(where + ": expected string");
    } else if (t == "integer") {
      if (!value.is_number_integer()) errors.push_back(where + ": expected integer");
    } else if (t == "number") {
      if (!value.is_number()) errors.push_back(where + ": expected number");
    } else if (t == "boolean") {
      if (!value.is_boolean()) errors.push_back(where + ": expected boolean");
    } else if (const json* named = lookup(t)) {
      check_value(*named, value, where, errors);
    } else {
      errors.push_back(where + ": schema names unknown type " + t);
    }
    return;
  }
  if (spec.is_object() && spec.contains("enum")) {
    bool found = false;
    for (const auto& option : spec.at("enum")) found = found || option == value;
    if (!found) errors.push_back(where + ": value " + value.dump() + " not in enum");
    return;
  }
  if (spec.is_object() && spec.contains("array")) {
    if (!value.is_array()) {
      errors.push_back(where + ": expected array");
      return;
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      check_value(spec.at("array"), value.at(i), where + "[" + std::to_string(i) + "]", errors);
    }
    return;
  }
  check_fields(spec, value, where, errors);
}

}  // namespace crowdshape::gateway
