#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace linkgate {

// Localized UI strings keyed by message id. Files hold one "id = text" per
// line; placeholders are written {name}.
class StringTable {
 public:
  StringTable() = default;
  explicit StringTable(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {}

  static const StringTable& english();
  static StringTable parse(std::string_view text);
  // Loads `<dir>/<locale>.txt` over the English defaults.
  static StringTable load(const std::string& dir, const std::string& locale);

  // Falls back to the message id itself when unknown.
  std::string get(const std::string& id) const;
  std::string format(const std::string& id,
                     const std::vector<std::pair<std::string, std::string>>& args) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace linkgate
