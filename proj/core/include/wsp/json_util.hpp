#pragma once

#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "wsp/error.hpp"

namespace wsp {

/// Reads keys out of a JSON object, keeping defaults for absent keys and
/// rejecting keys nobody asked for once finish() is called.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& object, std::string context)
      : object_(object), context_(std::move(context)) {
    if (!object_.is_object()) throw ConfigError(context_ + ": expected a JSON object");
  }

  template <typename T>
  StrictObject& read(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end() || it->is_null()) return *this;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(context_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  bool has(const std::string& key) const { return object_.contains(key); }

  const nlohmann::json* child(const std::string& key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return (it == object_.end() || it->is_null()) ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : object_.items()) {
      if (!seen_.count(key)) throw ConfigError(context_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const nlohmann::json& object_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace wsp
