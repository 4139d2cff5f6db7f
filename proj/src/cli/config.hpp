#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "hj/smooth_map.hpp"

namespace hj::cli {

/// A problem with the configuration file, located by line when possible.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string message, int line) : std::runtime_error(std::move(message)), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Typed read access to one TOML table. Every accessor throws ConfigError
/// naming the table, the key and the line.
class Section {
 public:
  Section(const toml::table* table, std::string name);

  const std::string& name() const { return name_; }
  bool present() const { return table_ != nullptr; }
  bool has(std::string_view key) const;
  int line() const;
  int line_of(std::string_view key) const;

  std::string string(std::string_view key) const;
  std::optional<std::string> optional_string(std::string_view key) const;
  double number(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
  std::optional<double> optional_number(std::string_view key) const;
  long long integer(std::string_view key) const;
  long long integer(std::string_view key, long long fallback) const;
  bool boolean(std::string_view key, bool fallback) const;
  std::vector<std::string> strings(std::string_view key) const;
  std::vector<double> numbers(std::string_view key) const;
  std::vector<Vector> points(std::string_view key) const;
  Section table(std::string_view key) const;
  std::vector<std::string> keys() const;
  /// Scalar and array entries as JSON, in file order; nested tables are skipped.
  nlohmann::ordered_json to_json() const;

  [[noreturn]] void fail(std::string_view key, const std::string& message) const;

 private:
  const toml::node* node(std::string_view key) const;
  const toml::node& required(std::string_view key) const;
  double as_number(const toml::node& n, std::string_view key) const;

  const toml::table* table_;
  std::string name_;
};

/// A parsed configuration file with its raw bytes (for the digest).
class Config {
 public:
  static Config load(const std::filesystem::path& path);
  static Config parse(std::string text, std::string source_name);

  const std::string& bytes() const { return bytes_; }
  const std::string& source_name() const { return source_; }
  Section section(std::string_view name) const;

 private:
  toml::table root_;
  std::string bytes_;
  std::string source_;
};

/// Compile an expression from `section.key`, turning syntax and identifier
/// errors into ConfigErrors at the key's line.
ScalarField compile_expression(const Section& section, std::string_view key, const std::string& text,
                               const std::vector<std::string>& vars, const AliasMap& aliases = {});

std::vector<ScalarField> compile_expressions(const Section& section, std::string_view key,
                                             const std::vector<std::string>& texts,
                                             const std::vector<std::string>& vars, const AliasMap& aliases = {});

}  // namespace hj::cli
