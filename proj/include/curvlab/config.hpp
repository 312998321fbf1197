#pragma once

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "curvlab/io.hpp"

namespace curvlab {

// Strict key = value text with [section] headers; '#' starts a comment.
// Every diagnostic carries the origin and line number.
struct ConfigEntry {
  std::string key, value;
  std::size_t line = 0;
};

class ConfigSection {
 public:
  std::string name;
  std::string origin;
  std::size_t line = 0;
  std::vector<ConfigEntry> entries;

  const ConfigEntry* find(const std::string& key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }
  bool has(const std::string& key) const { return find(key) != nullptr; }

  std::string where(const ConfigEntry& e) const { return origin + ":" + std::to_string(e.line) + ": [" + name + "] " + e.key; }

  void require_keys(const std::vector<std::string>& allowed) const {
    for (const auto& e : entries)
      if (std::find(allowed.begin(), allowed.end(), e.key) == allowed.end())
        throw InputError(origin + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "' in [" + name + "]");
  }

  const ConfigEntry& require(const std::string& key) const {
    if (auto* e = find(key)) return *e;
    throw InputError(origin + ":" + std::to_string(line) + ": [" + name + "] missing required key '" + key + "'");
  }

  std::string str(const std::string& key, const std::string& def) const {
    auto* e = find(key);
    return e ? e->value : def;
  }
  double number(const std::string& key) const {
    const auto& e = require(key);
    return io::to_double(e.value, where(e));
  }
  double number(const std::string& key, double def) const { return has(key) ? number(key) : def; }
  long long integer(const std::string& key) const {
    const auto& e = require(key);
    return io::to_int(e.value, where(e));
  }
  long long integer(const std::string& key, long long def) const { return has(key) ? integer(key) : def; }
  std::size_t count(const std::string& key, std::size_t def) const {
    if (!has(key)) return def;
    const long long v = integer(key);
    if (v < 0) throw InputError(where(*find(key)) + ": must be >= 0");
    return static_cast<std::size_t>(v);
  }
  bool flag(const std::string& key, bool def) const {
    auto* e = find(key);
    if (!e) return def;
    if (e->value == "true" || e->value == "yes" || e->value == "1") return true;
    if (e->value == "false" || e->value == "no" || e->value == "0") return false;
    throw InputError(where(*e) + ": expected true/false, got '" + e->value + "'");
  }
  // Whitespace or comma separated numbers.
  std::vector<double> numbers(const std::string& key) const {
    const auto& e = require(key);
    std::string v = e.value;
    std::replace(v.begin(), v.end(), ',', ' ');
    std::istringstream is(v);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(io::to_double(tok, where(e)));
    if (out.empty()) throw InputError(where(e) + ": empty list");
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> def) const {
    return has(key) ? numbers(key) : def;
  }
};

class ConfigDocument {
 public:
  std::string origin;
  std::vector<ConfigSection> sections;

  std::vector<const ConfigSection*> all(const std::string& name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections)
      if (s.name == name) out.push_back(&s);
    return out;
  }
  const ConfigSection* get(const std::string& name) const {
    const auto v = all(name);
    if (v.size() > 1)
      throw InputError(origin + ":" + std::to_string(v[1]->line) + ": section [" + name + "] given more than once");
    return v.empty() ? nullptr : v.front();
  }
};

// `repeatable` sections may occur several times (e.g. one per asset); any
// section outside `known` is rejected.
inline ConfigDocument parse_config(std::istream& is, const std::string& origin, const std::vector<std::string>& known,
                                   const std::vector<std::string>& repeatable = {}) {
  ConfigDocument doc;
  doc.origin = origin;
  std::string raw;
  std::size_t ln = 0;
  while (std::getline(is, raw)) {
    ++ln;
    std::string_view line = raw;
    if (auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = io::trim(line);
    if (line.empty()) continue;
    const std::string at = origin + ":" + std::to_string(ln) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw InputError(at + "malformed section header");
      std::string name(io::trim(line.substr(1, line.size() - 2)));
      if (std::find(known.begin(), known.end(), name) == known.end())
        throw InputError(at + "unknown section [" + name + "]");
      if (std::find(repeatable.begin(), repeatable.end(), name) == repeatable.end())
        for (const auto& s : doc.sections)
          if (s.name == name) throw InputError(at + "section [" + name + "] given more than once");
      doc.sections.push_back({name, origin, ln, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw InputError(at + "expected 'key = value'");
    if (doc.sections.empty()) throw InputError(at + "key outside of any [section]");
    std::string key(io::trim(line.substr(0, eq))), value(io::trim(line.substr(eq + 1)));
    if (key.empty()) throw InputError(at + "empty key");
    if (value.empty()) throw InputError(at + "empty value for '" + key + "'");
    auto& sec = doc.sections.back();
    if (sec.has(key)) throw InputError(at + "duplicate key '" + key + "' in [" + sec.name + "]");
    sec.entries.push_back({key, value, ln});
  }
  return doc;
}

}  // namespace curvlab
