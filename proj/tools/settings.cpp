#include "settings.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"

namespace crashgan::cli {

namespace {

std::string where(const std::string& key) { return "setting '" + key + "'"; }

}  // namespace

void Settings::declare(const std::string& key, const std::string& default_value) {
  if (!defaults_.count(key)) order_.push_back(key);
  defaults_[key] = default_value;
}

void Settings::preset(const std::string& key, const std::string& value) {
  if (!defaults_.count(key)) throw ValidationError("preset sets unknown " + where(key));
  preset_[key] = value;
}

void Settings::load_ini(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file '" + path.string() + "' not found");
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ParseError("config file: " + std::string(e.what()));
  }
  // Keys meant for other subcommands are ignored.
  for (const auto& [section, body] : tree) {
    for (const auto& [name, value] : body) {
      const auto key = section + "." + name;
      if (defaults_.count(key)) file_[key] = value.get_value<std::string>();
    }
  }
}

void Settings::flag(const std::string& key, const std::string& value) {
  if (!defaults_.count(key)) throw ValidationError("unknown " + where(key));
  flags_[key] = value;
}

std::string Settings::str(const std::string& key) const {
  for (const auto* layer : {&flags_, &file_, &preset_, &defaults_}) {
    if (auto it = layer->find(key); it != layer->end()) return std::string(trim(it->second));
  }
  throw ValidationError("unknown " + where(key));
}

double Settings::num(const std::string& key) const {
  try {
    return parse_double(str(key));
  } catch (const ParseError&) {
    throw ValidationError(where(key) + ": expected a number, got '" + str(key) + "'");
  }
}

long long Settings::integer(const std::string& key) const {
  try {
    return parse_int(str(key));
  } catch (const ParseError&) {
    throw ValidationError(where(key) + ": expected an integer, got '" + str(key) + "'");
  }
}

std::size_t Settings::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ValidationError(where(key) + " must be >= 0");
  return static_cast<std::size_t>(v);
}

bool Settings::boolean(const std::string& key) const {
  const auto v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(where(key) + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> Settings::names(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(str(key));
  for (std::string item; std::getline(ss, item, ',');) {
    const auto t = trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> Settings::nums(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : names(key)) {
    try {
      out.push_back(parse_double(s));
    } catch (const ParseError&) {
      throw ValidationError(where(key) + ": '" + s + "' is not a number");
    }
  }
  return out;
}

std::vector<std::size_t> Settings::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& s : names(key)) {
    long long v = 0;
    try {
      v = parse_int(s);
    } catch (const ParseError&) {
      throw ValidationError(where(key) + ": '" + s + "' is not an integer");
    }
    if (v < 0) throw ValidationError(where(key) + ": values must be >= 0");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::string Settings::ini() const {
  std::vector<std::string> sections;
  for (const auto& key : order_) {
    const auto section = key.substr(0, key.find('.'));
    if (std::find(sections.begin(), sections.end(), section) == sections.end()) sections.push_back(section);
  }
  std::ostringstream out;
  for (const auto& section : sections) {
    if (out.tellp() > 0) out << '\n';
    out << '[' << section << "]\n";
    for (const auto& key : order_) {
      const auto dot = key.find('.');
      if (key.substr(0, dot) == section) out << key.substr(dot + 1) << " = " << str(key) << '\n';
    }
  }
  return out.str();
}

}  // namespace crashgan::cli
