#pragma once

#include <json.hpp>
#include <set>
#include <string>

#include "hsiseg/errors.hpp"

namespace hsiseg {

inline void json_require_object(const nlohmann::json& j, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
}

// Strict schema check: every listed key must be present and nothing else may
// appear, so typos in config files fail loudly instead of being ignored.
inline void json_require_exact_keys(const nlohmann::json& j,
                                    const std::set<std::string>& keys,
                                    const std::string& ctx) {
  json_require_object(j, ctx);
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) {
      throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
    }
  }
  for (const std::string& k : keys) {
    if (!j.contains(k)) throw ConfigError(ctx + ": missing key '" + k + "'");
  }
}

}  // namespace hsiseg
