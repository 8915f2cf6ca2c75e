#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linkgate/url_model.h"

namespace linkgate {

// Where a brand is embedded in a phishing URL.
enum class Pattern { kNone, kSub, kFirst, kLast, kPath, kSquat };

std::string_view to_string(Pattern p);
std::optional<Pattern> pattern_from_string(std::string_view name);

// The five impersonation patterns, in table column order.
inline constexpr Pattern kPhishingPatterns[] = {Pattern::kSub, Pattern::kFirst, Pattern::kLast,
                                                Pattern::kPath, Pattern::kSquat};

enum class EditKind { kAddition, kDeletion, kSubstitution, kTransposition };

std::string_view to_string(EditKind kind);

// One character-level edit turning the legitimate label into the candidate.
// Positions index the candidate for additions and the legitimate label
// otherwise. `length` is the number of candidate characters covered: 2 for
// transpositions and multi-character homoglyphs ("rn" for "m").
struct SquatEdit {
  EditKind kind = EditKind::kSubstitution;
  size_t position = 0;
  size_t length = 1;
  bool operator==(const SquatEdit&) const = default;
};

struct BrandProfile {
  std::string token;         // recognizable service name, e.g. "paypal"
  std::string legit_domain;  // registrable domain, e.g. "paypal.com"
  std::vector<std::string> legit_subdomain_prefixes;

  // First label of legit_domain.
  std::string domain_label() const { return legit_domain.substr(0, legit_domain.find('.')); }
};

// Validates the profile invariants; throws std::invalid_argument.
BrandProfile make_brand(std::string token, std::string legit_domain,
                        std::vector<std::string> prefixes = {});

// One brand per line: token, domain, optional comma-separated prefixes,
// separated by whitespace. '#' starts a comment.
std::vector<BrandProfile> parse_brands(std::string_view text);
std::vector<BrandProfile> load_brands(const std::string& path);

// Visually confusable character sequences. Single-character pairs are
// symmetric; multi-character entries ("rn" for "m") are expansions.
struct HomoglyphMap {
  std::vector<std::pair<std::string, std::string>> pairs;

  static const HomoglyphMap& standard();
  // Maps every confusable sequence to one canonical spelling.
  std::string fold(std::string_view text) const;
};

struct ImpersonationVerdict {
  Pattern pattern = Pattern::kNone;
  std::optional<SquatEdit> squat_edit;
  std::optional<std::string> matched_brand;
  std::optional<std::string> matched_domain;  // legit_domain of matched_brand
};

std::optional<SquatEdit> detect_typosquat(std::string_view candidate_domain,
                                          std::string_view legit_domain,
                                          const HomoglyphMap& map = HomoglyphMap::standard());

// Precedence: Squat > Sub > First > Last > Path. A URL on a brand's own
// registrable domain is never a phish, whatever its subdomains or path say.
ImpersonationVerdict classify(const ParsedUrl& url, const std::vector<BrandProfile>& brands,
                              const HomoglyphMap& map = HomoglyphMap::standard());

struct VariantSet {
  std::map<Pattern, ParsedUrl> variants;
  // Set when no single edit of the brand label yields a usable squat; the
  // set then holds four variants.
  bool squat_unavailable = false;
};

inline constexpr std::string_view kDefaultLure = "login";

VariantSet generate_variants(const ParsedUrl& legit, const BrandProfile& brand,
                             std::string_view lure = kDefaultLure);

}  // namespace linkgate
