#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lfd {

/// Flat `key = value` text: one pair per line, `#` or `;` starts a comment,
/// `[section]` headers are accepted and ignored. Later keys override earlier ones.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<long> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& entries() const { return values_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

/// Converts a value with a message naming the key and file on failure.
double parse_double(const std::string& value, const std::string& key, const std::string& origin);
long parse_int(const std::string& value, const std::string& key, const std::string& origin);
bool parse_bool(const std::string& value, const std::string& key, const std::string& origin);
std::vector<double> parse_double_list(const std::string& value, const std::string& key, const std::string& origin);

}  // namespace lfd
