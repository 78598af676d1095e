#pragma once

// Layered run settings: built-in defaults < preset < INI file < command-line
// flags. Keys are "section.name".

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace crashgan::cli {

class Settings {
 public:
  void declare(const std::string& key, const std::string& default_value);
  void preset(const std::string& key, const std::string& value);
  void load_ini(const std::filesystem::path& path);
  void flag(const std::string& key, const std::string& value);

  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // integer >= 0
  bool boolean(const std::string& key) const;
  std::vector<double> nums(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::vector<std::string> names(const std::string& key) const;  // empty string -> empty list

  // Every declared key with its resolved value, grouped by section.
  std::string ini() const;

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::string> defaults_, preset_, file_, flags_;
};

}  // namespace crashgan::cli
