#pragma once

// Setting lookup with precedence: command-line flag, then environment
// variable MMVU_<KEY>, then a JSON config file, then the built-in default.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "json.hpp"
#include "mmvu/error.hpp"

namespace mmvu {

enum class SettingSource { Flag, Environment, ConfigFile, Default };

constexpr std::string_view source_name(SettingSource s) {
  switch (s) {
    case SettingSource::Flag: return "flag";
    case SettingSource::Environment: return "environment";
    case SettingSource::ConfigFile: return "config file";
    case SettingSource::Default: return "default";
  }
  return "default";
}

// "max_error_rate" -> "MMVU_MAX_ERROR_RATE"
inline std::string env_name(std::string_view key) {
  std::string s = "MMVU_";
  for (char c : key) s += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

template <typename T>
T parse_setting(std::string_view key, std::string_view text);

template <>
inline std::string parse_setting<std::string>(std::string_view, std::string_view text) {
  return std::string(text);
}

template <>
inline bool parse_setting<bool>(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw UsageError(std::string(key) + ": expected true/false, got \"" + std::string(text) + "\"");
}

template <>
inline double parse_setting<double>(std::string_view key, std::string_view text) {
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw UsageError(std::string(key) + ": expected a number, got \"" + std::string(text) + "\"");
  return v;
}

template <typename T>
  requires std::is_integral_v<T>
inline T parse_integer_setting(std::string_view key, std::string_view text) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size())
    throw UsageError(std::string(key) + ": expected an integer, got \"" + std::string(text) + "\"");
  return v;
}

template <>
inline std::size_t parse_setting<std::size_t>(std::string_view key, std::string_view text) {
  return parse_integer_setting<std::size_t>(key, text);
}

template <>
inline int parse_setting<int>(std::string_view key, std::string_view text) {
  return parse_integer_setting<int>(key, text);
}

class ConfigResolver {
 public:
  using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

  static std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  }

  explicit ConfigResolver(EnvLookup env = process_env) : env_(std::move(env)) {}

  ConfigResolver(const std::filesystem::path& config_file, EnvLookup env = process_env)
      : env_(std::move(env)) {
    std::ifstream in(config_file);
    if (!in) throw UsageError("cannot open config file " + config_file.string());
    try {
      file_ = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("config file " + config_file.string() + " is not valid JSON (" + e.what() + ")");
    }
    if (!file_.is_object()) throw UsageError("config file " + config_file.string() + " must hold a JSON object");
  }

  static ConfigResolver from_json(nlohmann::json file, EnvLookup env = process_env) {
    ConfigResolver r(std::move(env));
    r.file_ = std::move(file);
    return r;
  }

  // Value below flag level, with where it came from.
  std::optional<std::pair<std::string, SettingSource>> lookup(std::string_view key) const {
    if (auto v = env_(env_name(key))) return std::make_pair(*v, SettingSource::Environment);
    if (file_.is_object()) {
      auto it = file_.find(std::string(key));
      if (it != file_.end() && !it->is_null()) {
        if (it->is_string()) return std::make_pair(it->get<std::string>(), SettingSource::ConfigFile);
        if (it->is_boolean()) return std::make_pair(std::string(it->get<bool>() ? "true" : "false"),
                                                    SettingSource::ConfigFile);
        if (it->is_number()) return std::make_pair(it->dump(), SettingSource::ConfigFile);
        throw UsageError("config file: \"" + std::string(key) + "\" must be a string, number or boolean");
      }
    }
    return std::nullopt;
  }

  // Fills `target` from the environment or file unless the flag was given.
  template <typename T>
  SettingSource apply(std::string_view key, bool flag_given, T& target) const {
    if (flag_given) return SettingSource::Flag;
    if (auto v = lookup(key)) {
      target = parse_setting<T>(key, v->first);
      return v->second;
    }
    return SettingSource::Default;
  }

  template <typename T>
  SettingSource apply(std::string_view key, bool flag_given, std::optional<T>& target) const {
    if (flag_given) return SettingSource::Flag;
    if (auto v = lookup(key)) {
      target = parse_setting<T>(key, v->first);
      return v->second;
    }
    return SettingSource::Default;
  }

 private:
  EnvLookup env_;
  nlohmann::json file_;
};

}  // namespace mmvu
