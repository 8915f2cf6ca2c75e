#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace linkgate {

enum class UrlErrorKind { kMalformedUrl, kNonAsciiHost };

class UrlError : public std::runtime_error {
 public:
  UrlError(UrlErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  UrlErrorKind kind() const { return kind_; }

 private:
  UrlErrorKind kind_;
};

// Structural decomposition of a URL. The host is always lowercase and
// carries no trailing dot; path and query_fragment are kept byte-exact.
struct ParsedUrl {
  std::string scheme = "https";
  bool explicit_scheme = false;
  std::vector<std::string> subdomains;  // leftmost first
  std::string registrable_domain;
  std::string public_suffix;
  std::string path;            // empty or starts with '/'
  std::string query_fragment;  // opaque tail starting with '?' or '#'

  std::string host() const;
  // Subdomain labels joined with '.', empty when there are none.
  std::string subdomain_chain() const;
  // First label of the registrable domain ("com-login" for com-login.com).
  std::string domain_label() const;
  // Normalized form of the input: the scheme is only emitted if it was given.
  std::string to_string() const;
  // Always carries a scheme; used for redirects.
  std::string href() const;

  bool operator==(const ParsedUrl&) const = default;
};

enum class SegmentRole { kScheme, kSubdomain, kDomain, kSuffix, kPath, kOther };

std::string_view to_string(SegmentRole role);

struct UrlSegment {
  std::string text;
  SegmentRole role;
  bool operator==(const UrlSegment&) const = default;
};

struct UrlRenderModel {
  std::vector<UrlSegment> segments;
  std::string text() const;
};

ParsedUrl parse_url(std::string_view raw);
UrlRenderModel render_segments(const ParsedUrl& url);

// Canonical form of a user-entered domain: trimmed, lowercased, scheme,
// trailing slashes, leading "www." and one trailing dot removed.
std::string normalize_domain_answer(std::string_view raw);

// Public suffix of a lowercase host, or empty if the host is only a suffix.
std::string public_suffix_of(std::string_view host);
bool is_known_suffix(std::string_view label);

std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string to_lower(std::string_view text);
std::string_view trim(std::string_view text);

}  // namespace linkgate
