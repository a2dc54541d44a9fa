#include "agw/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "agw/csv.hpp"
#include "agw/error.hpp"
#include "agw/random.hpp"

namespace agw {

std::string config_key(std::string_view section, std::string_view key) {
  return "[" + std::string(section) + "] " + std::string(key);
}

namespace {

[[noreturn]] void bad_value(std::string_view section, std::string_view key, const std::string& value,
                            std::string_view expected) {
  throw Error(ErrorCode::InvalidConfig,
              config_key(section, key) + ": cannot read '" + value + "' as " + std::string(expected));
}

std::string strip_comment(std::string_view line) {
  const auto pos = line.find_first_of(";#");
  return std::string(trim(line.substr(0, pos)));
}

}  // namespace

Config Config::parse(std::string_view text) {
  Config c;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto line = strip_comment(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": malformed section header");
      section = std::string(trim(std::string_view(line).substr(1, line.size() - 2)));
      c.sections_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": key outside any section");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": empty key");
    c.set(section, key, trim(std::string_view(line).substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto lhs = trim(assignment.substr(0, eq));
  const auto dot = lhs.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot == 0 || dot + 1 == lhs.size())
    throw Error(ErrorCode::InvalidConfig, "override '" + std::string(assignment) + "' is not section.key=value");
  auto section = lhs.substr(0, dot);
  auto key = lhs.substr(dot + 1);
  const auto value = trim(assignment.substr(eq + 1));
  if (section == "battery") {
    if (key == "countries" || key == "schemes" || key == "metrics" || key == "specs") {
      set(key, "use", value);
      return;
    }
    if (key == "outcomes" || key == "combinations" || key == "rule") {
      set("specs", key, value);
      return;
    }
    if (key == "threads") {
      set("run", key, value);
      return;
    }
  }
  set(section, key, value);
}

void Config::set(std::string_view section, std::string_view key, std::string_view value) {
  sections_[std::string(section)][std::string(key)] = std::string(value);
}

bool Config::has_section(std::string_view section) const { return sections_.find(section) != sections_.end(); }

void Config::require_section(std::string_view section) const {
  if (!has_section(section))
    throw Error(ErrorCode::InvalidConfig, "missing section [" + std::string(section) + "]");
}

std::optional<std::string> Config::find(std::string_view section, std::string_view key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return std::nullopt;
  const auto k = s->second.find(std::string(key));
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::string Config::get(std::string_view section, std::string_view key) const {
  require_section(section);
  auto v = find(section, key);
  if (!v) throw Error(ErrorCode::InvalidConfig, "missing key " + config_key(section, key));
  return *v;
}

std::string Config::get_or(std::string_view section, std::string_view key, std::string_view fallback) const {
  auto v = find(section, key);
  return v ? *v : std::string(fallback);
}

namespace {

template <class T>
bool parse_number(std::string_view text, T& out) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end && !text.empty();
}

}  // namespace

double Config::get_double(std::string_view section, std::string_view key) const {
  const auto v = get(section, key);
  double out = 0.0;
  if (!parse_number(v, out)) bad_value(section, key, v, "a number");
  return out;
}

double Config::get_double_or(std::string_view section, std::string_view key, double fallback) const {
  return find(section, key) ? get_double(section, key) : fallback;
}

long long Config::get_int(std::string_view section, std::string_view key) const {
  const auto v = get(section, key);
  long long out = 0;
  if (!parse_number(v, out)) bad_value(section, key, v, "an integer");
  return out;
}

long long Config::get_int_or(std::string_view section, std::string_view key, long long fallback) const {
  return find(section, key) ? get_int(section, key) : fallback;
}

bool Config::get_bool_or(std::string_view section, std::string_view key, bool fallback) const {
  const auto v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
  if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
  bad_value(section, key, *v, "a boolean");
}

std::vector<std::string> Config::get_list(std::string_view section, std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& item : split(get(section, key), ',')) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> Config::get_doubles(std::string_view section, std::string_view key) const {
  std::vector<double> out;
  for (const auto& item : get_list(section, key)) {
    double v = 0.0;
    if (!parse_number(item, v)) bad_value(section, key, item, "a number");
    out.push_back(v);
  }
  return out;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [section, keys] : sections_) {
    out += "[" + section + "]\n";
    for (const auto& [k, v] : keys) out += k + "=" + v + "\n";
  }
  return out;
}

std::uint64_t Config::hash() const { return fnv1a64(canonical()); }

}  // namespace agw
