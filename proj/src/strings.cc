#include "linkgate/strings.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "linkgate/url_model.h"

namespace linkgate {

const StringTable& StringTable::english() {
  static const StringTable table{{
      {"task.click.prompt", "Click on the domain of this link."},
      {"task.highlight.prompt", "Highlight the domain of this link, then press Confirm."},
      {"task.type.prompt", "Type the domain of this link."},
      {"task.passive.prompt", "You are about to visit this page. Do you want to continue?"},
      {"task.active.prompt", "Drag the pieces of the link to the center line, then confirm."},
      {"help.domain",
       "The domain is the part right before the first single slash, e.g. example.com in "
       "https://mail.example.com/inbox. It tells you who runs the site."},
      {"mistake.title", "Check this link"},
      {"mistake.body", "You answered {answer}, but this link leads to {domain}."},
      {"mistake.diff", "Look closely: the highlighted characters differ."},
      {"action.confirm", "Continue anyway"},
      {"action.report", "Report"},
      {"action.back", "Back to mailbox"},
      {"error.bad_target", "This link could not be inspected."},
  }};
  return table;
}

StringTable StringTable::parse(std::string_view text) {
  std::map<std::string, std::string> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) continue;
    entries[std::string(trim(view.substr(0, eq)))] = std::string(trim(view.substr(eq + 1)));
  }
  return StringTable(std::move(entries));
}

StringTable StringTable::load(const std::string& dir, const std::string& locale) {
  auto merged = english().entries();
  std::ifstream in(dir + "/" + locale + ".txt");
  if (!in) {
    if (locale == "en") return english();
    throw std::runtime_error("missing string table for locale " + locale + " in " + dir);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto localized = parse(buffer.str());
  for (auto& [k, v] : localized.entries()) merged[k] = v;
  return StringTable(std::move(merged));
}

std::string StringTable::get(const std::string& id) const {
  auto it = entries_.find(id);
  return it == entries_.end() ? id : it->second;
}

std::string StringTable::format(const std::string& id,
                                const std::vector<std::pair<std::string, std::string>>& args) const {
  std::string out = get(id);
  for (const auto& [name, value] : args) {
    const std::string key = "{" + name + "}";
    for (size_t pos = out.find(key); pos != std::string::npos;
         pos = out.find(key, pos + value.size()))
      out.replace(pos, key.size(), value);
  }
  return out;
}

}  // namespace linkgate
