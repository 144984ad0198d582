#pragma once

// run configuration: json-backed settings with typed accessors, dotted-path
// flag overrides, and strict unknown-key rejection that names the offender.
// every consumer declares its allowed key tree up front, so a typo in a
// config file fails loudly instead of silently using a default.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hupor/io.hpp"

namespace hupor {

struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

struct missing_input_error : std::runtime_error {
  explicit missing_input_error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline bool key_allowed(const std::string& path, const std::vector<std::string>& allowed) {
  for (const std::string& a : allowed) {
    if (a == path) return true;
    // a declared "scene.camera" admits the whole subtree under it
    if (path.size() > a.size() && path.compare(0, a.size(), a) == 0 && path[a.size()] == '.')
      return true;
  }
  return false;
}

inline void walk_keys(const JsonValue& v, const std::string& prefix,
                      const std::vector<std::string>& allowed) {
  if (!v.is_object()) return;
  for (const auto& [key, child] : v.members) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!detail::key_allowed(path, allowed)) {
      // an interior object is fine if some allowed key lives underneath it
      bool is_prefix = false;
      for (const std::string& a : allowed)
        if (a.size() > path.size() && a.compare(0, path.size(), path) == 0 &&
            a[path.size()] == '.')
          is_prefix = true;
      if (!is_prefix || !child.is_object())
        throw config_error("unknown config key: " + path);
    }
    walk_keys(child, path, allowed);
  }
}

}  // namespace detail

// rejects the first config key (dotted path) that is not part of the schema
inline void reject_unknown_keys(const JsonValue& root, const std::vector<std::string>& allowed) {
  if (!root.is_object()) throw config_error("config root must be a json object");
  detail::walk_keys(root, "", allowed);
}

namespace detail {

inline const JsonValue* at_path(const JsonValue& root, const std::string& path) {
  const JsonValue* v = &root;
  size_t start = 0;
  while (start <= path.size()) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!v->is_object()) return nullptr;
    v = v->find(key);
    if (!v) return nullptr;
    if (dot == std::string::npos) return v;
    start = dot + 1;
  }
  return nullptr;
}

}  // namespace detail

inline double cfg_number(const JsonValue& root, const std::string& path, double fallback) {
  const JsonValue* v = detail::at_path(root, path);
  if (!v) return fallback;
  if (v->kind != JsonValue::Kind::number)
    throw config_error("config key " + path + " must be a number");
  return v->number;
}

inline int cfg_int(const JsonValue& root, const std::string& path, int fallback) {
  const double d = cfg_number(root, path, static_cast<double>(fallback));
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw config_error("config key " + path + " must be an integer");
  return i;
}

inline bool cfg_bool(const JsonValue& root, const std::string& path, bool fallback) {
  const JsonValue* v = detail::at_path(root, path);
  if (!v) return fallback;
  if (v->kind != JsonValue::Kind::boolean)
    throw config_error("config key " + path + " must be true or false");
  return v->boolean;
}

inline std::string cfg_string(const JsonValue& root, const std::string& path,
                              const std::string& fallback) {
  const JsonValue* v = detail::at_path(root, path);
  if (!v) return fallback;
  if (v->kind != JsonValue::Kind::string)
    throw config_error("config key " + path + " must be a string");
  return v->text;
}

// seeds accept a json number (exact up to 2^53) or a decimal string for the
// full 64-bit range
inline std::uint64_t cfg_seed(const JsonValue& root, const std::string& path,
                              std::uint64_t fallback) {
  const JsonValue* v = detail::at_path(root, path);
  if (!v) return fallback;
  if (v->kind == JsonValue::Kind::number) {
    if (v->number < 0 || v->number != std::floor(v->number) || v->number > 9007199254740992.0)
      throw config_error("config key " + path + " must be a non-negative integer seed");
    return static_cast<std::uint64_t>(v->number);
  }
  if (v->kind == JsonValue::Kind::string) {
    try {
      size_t used = 0;
      const std::uint64_t s = std::stoull(v->text, &used);
      if (used != v->text.size()) throw std::invalid_argument("trailing");
      return s;
    } catch (const std::exception&) {
      throw config_error("config key " + path + " is not a valid seed");
    }
  }
  throw config_error("config key " + path + " must be a number or decimal string");
}

// sets a dotted path to a scalar parsed from flag text: true/false stay
// boolean, numeric text becomes a number, everything else a string.
inline void apply_override(JsonValue& root, const std::string& path, const std::string& text) {
  if (!root.is_object()) throw config_error("config root must be a json object");
  if (path.empty()) throw config_error("override key must not be empty");
  JsonValue* v = &root;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (key.empty()) throw config_error("override key has an empty segment: " + path);
    if (dot == std::string::npos) {
      JsonValue leaf;
      if (text == "true" || text == "false") {
        leaf = JsonValue::of(text == "true");
      } else {
        double num = 0;
        const auto res = std::from_chars(text.data(), text.data() + text.size(), num);
        if (res.ec == std::errc() && res.ptr == text.data() + text.size())
          leaf = JsonValue::of(num);
        else
          leaf = JsonValue::of(text);
      }
      v->set(key, std::move(leaf));
      return;
    }
    JsonValue* next = nullptr;
    for (auto& m : v->members)
      if (m.first == key) next = &m.second;
    if (!next) next = &v->set(key, JsonValue::object());
    if (!next->is_object()) throw config_error("override path crosses a non-object at " + key);
    v = next;
    start = dot + 1;
  }
}

// the build computes in 64-bit floating point throughout; the precision knob
// exists so configs are explicit about it, and anything else is rejected.
inline void validate_precision(const JsonValue& root) {
  const std::string p = cfg_string(root, "precision", "64");
  if (p != "64")
    throw config_error("config key precision: only \"64\" is supported by this build");
}

}  // namespace hupor
