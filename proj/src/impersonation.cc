#include "linkgate/impersonation.h"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace linkgate {

std::string_view to_string(Pattern p) {
  switch (p) {
    case Pattern::kNone: return "none";
    case Pattern::kSub: return "sub";
    case Pattern::kFirst: return "first";
    case Pattern::kLast: return "last";
    case Pattern::kPath: return "path";
    case Pattern::kSquat: return "squat";
  }
  return "none";
}

std::optional<Pattern> pattern_from_string(std::string_view name) {
  for (auto p : {Pattern::kNone, Pattern::kSub, Pattern::kFirst, Pattern::kLast, Pattern::kPath,
                 Pattern::kSquat}) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::kAddition: return "addition";
    case EditKind::kDeletion: return "deletion";
    case EditKind::kSubstitution: return "substitution";
    case EditKind::kTransposition: return "transposition";
  }
  return "substitution";
}

BrandProfile make_brand(std::string token, std::string legit_domain,
                        std::vector<std::string> prefixes) {
  token = to_lower(token);
  ParsedUrl parsed;
  try {
    parsed = parse_url(legit_domain);
  } catch (const UrlError& err) {
    throw std::invalid_argument("brand domain does not parse: " + std::string(err.what()));
  }
  if (!parsed.subdomains.empty() || parsed.registrable_domain != to_lower(legit_domain))
    throw std::invalid_argument("brand domain is not a registrable domain: " + legit_domain);
  BrandProfile brand{token, parsed.registrable_domain, std::move(prefixes)};
  if (token.empty() || brand.domain_label().find(token) == std::string::npos)
    throw std::invalid_argument("brand token '" + token + "' is not part of " + legit_domain);
  return brand;
}

std::vector<BrandProfile> parse_brands(std::string_view text) {
  std::vector<BrandProfile> brands;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string token, domain, prefixes;
    if (!(fields >> token)) continue;
    if (!(fields >> domain))
      throw std::invalid_argument("brands line " + std::to_string(line_no) + ": missing domain");
    fields >> prefixes;
    std::vector<std::string> prefix_list;
    if (!prefixes.empty()) {
      for (auto& p : split(prefixes, ','))
        if (!p.empty()) prefix_list.push_back(to_lower(p));
    }
    brands.push_back(make_brand(token, domain, std::move(prefix_list)));
  }
  return brands;
}

std::vector<BrandProfile> load_brands(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open brands file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_brands(buffer.str());
}

const HomoglyphMap& HomoglyphMap::standard() {
  static const HomoglyphMap map{{
      {"l", "i"}, {"l", "1"}, {"o", "0"}, {"m", "rn"}, {"w", "vv"}, {"d", "cl"},
  }};
  return map;
}

std::string HomoglyphMap::fold(std::string_view text) const {
  std::string out;
  size_t i = 0;
  while (i < text.size()) {
    bool replaced = false;
    // Longer spellings first so "rn" folds before its single letters.
    for (size_t len : {size_t{2}, size_t{1}}) {
      for (const auto& [canonical, variant] : pairs) {
        if (variant.size() == len && text.compare(i, len, variant) == 0) {
          out += canonical;
          i += len;
          replaced = true;
          break;
        }
      }
      if (replaced) break;
    }
    if (!replaced) out += text[i++];
  }
  return out;
}

namespace {

std::pair<std::string_view, std::string_view> split_label(std::string_view domain) {
  auto dot = domain.find('.');
  if (dot == std::string_view::npos) return {domain, {}};
  return {domain.substr(0, dot), domain.substr(dot + 1)};
}

std::optional<SquatEdit> distance_one_edit(std::string_view cand, std::string_view legit) {
  if (cand.size() == legit.size()) {
    std::vector<size_t> diffs;
    for (size_t i = 0; i < cand.size() && diffs.size() < 3; ++i)
      if (cand[i] != legit[i]) diffs.push_back(i);
    if (diffs.size() == 1) return SquatEdit{EditKind::kSubstitution, diffs[0], 1};
    if (diffs.size() == 2 && diffs[1] == diffs[0] + 1 && cand[diffs[0]] == legit[diffs[1]] &&
        cand[diffs[1]] == legit[diffs[0]])
      return SquatEdit{EditKind::kTransposition, diffs[0], 2};
    return std::nullopt;
  }
  bool addition = cand.size() == legit.size() + 1;
  bool deletion = legit.size() == cand.size() + 1;
  if (!addition && !deletion) return std::nullopt;
  std::string_view longer = addition ? cand : legit;
  std::string_view shorter = addition ? legit : cand;
  size_t i = 0;
  while (i < shorter.size() && longer[i] == shorter[i]) ++i;
  if (longer.substr(i + 1) != shorter.substr(i)) return std::nullopt;
  return SquatEdit{addition ? EditKind::kAddition : EditKind::kDeletion, i, addition ? 1u : 0u};
}

std::optional<SquatEdit> expansion_edit(std::string_view cand, std::string_view legit,
                                        const HomoglyphMap& map) {
  for (const auto& [a, b] : map.pairs) {
    if (a.size() == b.size()) continue;
    // legit spelled with `from`, candidate with `to`.
    for (auto [from, to] : {std::pair{a, b}, std::pair{b, a}}) {
      for (size_t pos = legit.find(from); pos != std::string_view::npos;
           pos = legit.find(from, pos + 1)) {
        std::string rebuilt(legit);
        rebuilt.replace(pos, from.size(), to);
        if (rebuilt == cand) return SquatEdit{EditKind::kSubstitution, pos, to.size()};
      }
    }
  }
  return std::nullopt;
}

bool token_matches(const std::string& token, const BrandProfile& brand, const HomoglyphMap& map) {
  if (token.empty()) return false;
  auto folded = map.fold(token);
  return folded == map.fold(brand.token) || folded == map.fold(brand.domain_label());
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Pattern pattern_for_brand(const ParsedUrl& url, const BrandProfile& brand,
                          const HomoglyphMap& map, std::optional<SquatEdit>* edit) {
  if (auto squat = detect_typosquat(url.registrable_domain, brand.legit_domain, map)) {
    *edit = squat;
    return Pattern::kSquat;
  }
  for (const auto& label : url.subdomains) {
    if (token_matches(label, brand, map)) return Pattern::kSub;
    for (const auto& piece : split(label, '-'))
      if (token_matches(piece, brand, map)) return Pattern::kSub;
  }

  auto label = url.domain_label();
  auto pieces = split(label, '-');
  if (pieces.size() >= 2) {
    if (token_matches(pieces.front(), brand, map)) return Pattern::kFirst;
    if (token_matches(pieces.back(), brand, map)) return Pattern::kLast;
    for (size_t i = 1; i + 1 < pieces.size(); ++i)
      if (token_matches(pieces[i], brand, map)) return Pattern::kFirst;
  }
  // Same name under a foreign suffix.
  if (token_matches(label, brand, map)) return Pattern::kFirst;

  for (const auto& word : word_tokens(url.path + url.query_fragment))
    if (token_matches(word, brand, map)) return Pattern::kPath;
  return Pattern::kNone;
}

int precedence(Pattern p) {
  switch (p) {
    case Pattern::kSquat: return 5;
    case Pattern::kSub: return 4;
    case Pattern::kFirst: return 3;
    case Pattern::kLast: return 2;
    case Pattern::kPath: return 1;
    case Pattern::kNone: return 0;
  }
  return 0;
}

bool valid_label(std::string_view label) {
  if (label.empty() || label.front() == '-' || label.back() == '-') return false;
  return std::all_of(label.begin(), label.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
  });
}

// Candidate squats of `label`, most deceptive first.
std::vector<std::string> squat_candidates(const std::string& label) {
  std::vector<std::string> out;
  for (auto [from, to] : {std::pair{'l', 'i'}, std::pair{'i', 'l'}, std::pair{'o', '0'},
                          std::pair{'0', 'o'}, std::pair{'1', 'l'}}) {
    if (auto pos = label.rfind(from); pos != std::string::npos) {
      auto s = label;
      s[pos] = to;
      out.push_back(s);
    }
  }
  if (auto pos = label.find('m'); pos != std::string::npos) {
    auto s = label;
    s.replace(pos, 1, "rn");
    out.push_back(s);
  }
  // Adjacent swaps starting from the middle of the label.
  if (label.size() >= 2) {
    std::vector<size_t> order(label.size() - 1);
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto mid = static_cast<long>(label.size() / 2);
    std::stable_sort(order.begin(), order.end(), [mid](size_t a, size_t b) {
      return std::labs(static_cast<long>(a) - mid) < std::labs(static_cast<long>(b) - mid);
    });
    for (size_t i : order) {
      if (label[i] == label[i + 1]) continue;
      auto s = label;
      std::swap(s[i], s[i + 1]);
      out.push_back(s);
    }
    auto s = label;
    s.insert(label.size() / 2, "-");
    out.push_back(s);
    for (size_t i = 0; i + 1 < label.size(); ++i) {
      if (label[i] == label[i + 1]) {
        auto d = label;
        d.erase(i, 1);
        out.push_back(d);
      }
    }
  }
  return out;
}

}  // namespace

std::optional<SquatEdit> detect_typosquat(std::string_view candidate_domain,
                                          std::string_view legit_domain, const HomoglyphMap& map) {
  auto [cand_label, cand_suffix] = split_label(candidate_domain);
  auto [legit_label, legit_suffix] = split_label(legit_domain);
  if (cand_suffix != legit_suffix || cand_label == legit_label) return std::nullopt;
  if (auto edit = distance_one_edit(cand_label, legit_label)) return edit;
  return expansion_edit(cand_label, legit_label, map);
}

ImpersonationVerdict classify(const ParsedUrl& url, const std::vector<BrandProfile>& brands,
                              const HomoglyphMap& map) {
  ImpersonationVerdict verdict;
  for (const auto& brand : brands) {
    if (url.registrable_domain == brand.legit_domain) {
      verdict.matched_brand = brand.token;
      verdict.matched_domain = brand.legit_domain;
      return verdict;
    }
  }
  for (const auto& brand : brands) {
    std::optional<SquatEdit> edit;
    Pattern p = pattern_for_brand(url, brand, map, &edit);
    if (precedence(p) > precedence(verdict.pattern)) {
      verdict.pattern = p;
      verdict.squat_edit = edit;
      verdict.matched_brand = brand.token;
      verdict.matched_domain = brand.legit_domain;
    }
  }
  return verdict;
}

VariantSet generate_variants(const ParsedUrl& legit, const BrandProfile& brand,
                             std::string_view lure_view) {
  const auto& map = HomoglyphMap::standard();
  const std::string lure(lure_view);
  const std::string label = legit.domain_label();
  const std::string& suffix = legit.public_suffix;
  const std::string tail = legit.path + legit.query_fragment;

  // Legit subdomains stay in front of every variant, except labels naming the
  // brand, which would turn the variant into a subdomain impersonation.
  std::string prefix;
  for (const auto& sub : legit.subdomains)
    if (!token_matches(sub, brand, map)) prefix += sub + ".";
  std::string scheme = legit.explicit_scheme ? legit.scheme + "://" : "";

  VariantSet set;
  set.variants[Pattern::kSub] =
      parse_url(scheme + legit.host() + "-" + lure + "." + suffix + tail);
  set.variants[Pattern::kFirst] =
      parse_url(scheme + prefix + label + "-" + lure + "." + suffix + tail);
  set.variants[Pattern::kLast] =
      parse_url(scheme + prefix + lure + "-" + label + "." + suffix + tail);
  set.variants[Pattern::kPath] = parse_url(scheme + prefix + "secure-" + lure + "." + suffix +
                                           "/" + legit.host() + tail);

  set.squat_unavailable = true;
  for (const auto& squatted : squat_candidates(label)) {
    if (!valid_label(squatted)) continue;
    if (!detect_typosquat(squatted + "." + suffix, legit.registrable_domain, map)) continue;
    set.variants[Pattern::kSquat] = parse_url(scheme + prefix + squatted + "." + suffix + tail);
    set.squat_unavailable = false;
    break;
  }
  return set;
}

}  // namespace linkgate
