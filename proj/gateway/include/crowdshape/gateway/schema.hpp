#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace crowdshape::gateway {

/// The frozen wire schema shipped in gateway/schema/gateway.v1.json, compiled in.
std::string_view schema_text();

/// Checks JSON values against the compact schema format. Field maps are
/// closed: unknown keys are errors.
class SchemaChecker {
 public:
  explicit SchemaChecker(const nlohmann::json& schema);
  static const SchemaChecker& builtin();

  /// Errors for a request/response body named in "messages" (or "types").
  [[nodiscard]] std::vector<std::string> check_message(std::string_view name, const nlohmann::json& value) const;
  /// Errors for a stream message, dispatched on its "kind".
  [[nodiscard]] std::vector<std::string> check_stream(const nlohmann::json& value) const;

  [[nodiscard]] int version() const { return version_; }

 private:
  void check_value(const nlohmann::json& spec, const nlohmann::json& value, const std::string& where,
                   std::vector<std::string>& errors) const;
  void check_fields(const nlohmann::json& fields, const nlohmann::json& value, const std::string& where,
                    std::vector<std::string>& errors) const;
  [[nodiscard]] const nlohmann::json* lookup(std::string_view name) const;

  nlohmann::json schema_;
  int version_ = 0;
};

}  // namespace crowdshape::gateway
