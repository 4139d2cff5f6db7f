#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace hj::cli {

Section::Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

const toml::node* Section::node(std::string_view key) const { return table_ ? table_->get(key) : nullptr; }

bool Section::has(std::string_view key) const { return node(key) != nullptr; }

int Section::line() const { return table_ ? static_cast<int>(table_->source().begin.line) : 0; }

int Section::line_of(std::string_view key) const {
  const toml::node* n = node(key);
  return n ? static_cast<int>(n->source().begin.line) : line();
}

void Section::fail(std::string_view key, const std::string& message) const {
  std::string where = "[" + name_ + "]";
  if (!key.empty()) where += " " + std::string(key);
  throw ConfigError(where + ": " + message, line_of(key));
}

const toml::node& Section::required(std::string_view key) const {
  const toml::node* n = node(key);
  if (!n) fail(key, "missing required key");
  return *n;
}

double Section::as_number(const toml::node& n, std::string_view key) const {
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_integer()) return static_cast<double>(v->get());
  fail(key, "expected a number");
}

std::string Section::string(std::string_view key) const {
  const toml::node& n = required(key);
  if (auto v = n.as_string()) return v->get();
  fail(key, "expected a string");
}

std::optional<std::string> Section::optional_string(std::string_view key) const {
  if (!has(key)) return std::nullopt;
  return string(key);
}

double Section::number(std::string_view key) const { return as_number(required(key), key); }

double Section::number(std::string_view key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

std::optional<double> Section::optional_number(std::string_view key) const {
  if (!has(key)) return std::nullopt;
  return number(key);
}

long long Section::integer(std::string_view key) const {
  const toml::node& n = required(key);
  if (auto v = n.as_integer()) return v->get();
  fail(key, "expected an integer");
}

long long Section::integer(std::string_view key, long long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool Section::boolean(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  if (auto v = node(key)->as_boolean()) return v->get();
  fail(key, "expected true or false");
}

std::vector<std::string> Section::strings(std::string_view key) const {
  const toml::node& n = required(key);
  if (auto s = n.as_string()) return {s->get()};
  const toml::array* a = n.as_array();
  if (!a) fail(key, "expected an array of strings");
  std::vector<std::string> out;
  for (const toml::node& e : *a) {
    auto s = e.as_string();
    if (!s) fail(key, "expected an array of strings");
    out.push_back(s->get());
  }
  return out;
}

std::vector<double> Section::numbers(std::string_view key) const {
  const toml::node& n = required(key);
  const toml::array* a = n.as_array();
  if (!a) return {as_number(n, key)};
  std::vector<double> out;
  for (const toml::node& e : *a) out.push_back(as_number(e, key));
  return out;
}

std::vector<Vector> Section::points(std::string_view key) const {
  const toml::array* a = required(key).as_array();
  if (!a) fail(key, "expected an array of points");
  std::vector<Vector> out;
  for (const toml::node& e : *a) {
    const toml::array* row = e.as_array();
    if (!row) fail(key, "expected an array of points (arrays of numbers)");
    Vector p(static_cast<Eigen::Index>(row->size()));
    Eigen::Index i = 0;
    for (const toml::node& c : *row) p[i++] = as_number(c, key);
    out.push_back(std::move(p));
  }
  return out;
}

Section Section::table(std::string_view key) const {
  const toml::node* n = node(key);
  if (!n) return Section(nullptr, name_ + "." + std::string(key));
  const toml::table* t = n->as_table();
  if (!t) fail(key, "expected a table");
  return Section(t, name_ + "." + std::string(key));
}

std::vector<std::string> Section::keys() const {
  std::vector<std::string> out;
  if (table_)
    for (const auto& [k, v] : *table_) out.emplace_back(k.str());
  return out;
}

namespace {

nlohmann::ordered_json node_json(const toml::node& n) {
  if (auto v = n.as_string()) return v->get();
  if (auto v = n.as_integer()) return v->get();
  if (auto v = n.as_floating_point()) return v->get();
  if (auto v = n.as_boolean()) return v->get();
  if (auto a = n.as_array()) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const toml::node& e : *a) out.push_back(node_json(e));
    return out;
  }
  return nullptr;
}

}  // namespace

nlohmann::ordered_json Section::to_json() const {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  if (!table_) return out;
  std::vector<std::pair<const toml::key*, const toml::node*>> entries;
  for (const auto& [k, v] : *table_)
    if (!v.is_table()) entries.emplace_back(&k, &v);
  // toml++ tables are ordered by key; file order keeps reports readable
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second->source().begin.line < b.second->source().begin.line;
  });
  for (const auto& [k, v] : entries) out[std::string(k->str())] = node_json(*v);
  return out;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

Config Config::parse(std::string text, std::string source_name) {
  Config c;
  c.bytes_ = std::move(text);
  c.source_ = std::move(source_name);
  try {
    c.root_ = toml::parse(c.bytes_, c.source_);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string(e.description()), static_cast<int>(e.source().begin.line));
  }
  return c;
}

Section Config::section(std::string_view name) const {
  const toml::node* n = root_.get(name);
  if (!n) return Section(nullptr, std::string(name));
  const toml::table* t = n->as_table();
  if (!t) throw ConfigError("[" + std::string(name) + "] must be a table", static_cast<int>(n->source().begin.line));
  return Section(t, std::string(name));
}

ScalarField compile_expression(const Section& section, std::string_view key, const std::string& text,
                               const std::vector<std::string>& vars, const AliasMap& aliases) {
  try {
    return ScalarField::compile(text, vars, aliases);
  } catch (const SyntaxError& e) {
    section.fail(key, std::string("SyntaxError in \"") + text + "\": " + e.what());
  } catch (const UnknownIdentifier& e) {
    section.fail(key, std::string("UnknownIdentifier in \"") + text + "\": " + e.what());
  }
}

std::vector<ScalarField> compile_expressions(const Section& section, std::string_view key,
                                             const std::vector<std::string>& texts,
                                             const std::vector<std::string>& vars, const AliasMap& aliases) {
  std::vector<ScalarField> out;
  for (const auto& t : texts) out.push_back(compile_expression(section, key, t, vars, aliases));
  return out;
}

}  // namespace hj::cli
