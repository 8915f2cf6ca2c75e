#include "linkgate/url_model.h"

#include <algorithm>
#include <array>
#include <cctype>

namespace linkgate {

namespace {

// Static suffix snapshot. Single-label suffixes only matter for
// is_known_suffix(); any unknown last label still acts as the suffix.
constexpr std::array<std::string_view, 46> kSuffixes = {
    "com",    "org",    "net",    "edu",    "gov",   "mil",    "int",
    "io",     "co",     "me",     "info",   "biz",   "app",    "dev",
    "us",     "uk",     "jp",     "de",     "fr",    "it",     "es",
    "nl",     "ch",     "ca",     "au",     "ru",    "cn",     "in",
    "br",     "eu",     "ly",     "tv",     "xyz",   "online", "site",
    "co.uk",  "org.uk", "ac.uk",  "co.jp",  "ne.jp", "or.jp",  "ac.jp",
    "com.au", "com.br", "co.in",  "co.nz",
};

bool is_label_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
}

// Length of a leading "scheme://" prefix, or 0.
size_t scheme_length(std::string_view text) {
  auto pos = text.find("://");
  if (pos == std::string_view::npos || pos == 0) return 0;
  if (!std::isalpha(static_cast<unsigned char>(text[0]))) return 0;
  for (size_t i = 1; i < pos; ++i) {
    char c = text[i];
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' &&
        c != '.')
      return 0;
  }
  return pos + 3;
}

}  // namespace

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      return out;
    }
    out.emplace_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front())))
    text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back())))
    text.remove_suffix(1);
  return text;
}

bool is_known_suffix(std::string_view label) {
  return std::find(kSuffixes.begin(), kSuffixes.end(), label) != kSuffixes.end();
}

std::string public_suffix_of(std::string_view host) {
  auto labels = split(host, '.');
  if (labels.size() < 2) return {};
  // Longest snapshot match that still leaves one registrable label.
  for (size_t take = labels.size() - 1; take >= 2; --take) {
    std::vector<std::string> tail(labels.end() - static_cast<long>(take), labels.end());
    auto candidate = join(tail, ".");
    if (is_known_suffix(candidate)) return candidate;
  }
  return labels.back();
}

std::string ParsedUrl::host() const {
  if (subdomains.empty()) return registrable_domain;
  return subdomain_chain() + "." + registrable_domain;
}

std::string ParsedUrl::subdomain_chain() const { return join(subdomains, "."); }

std::string ParsedUrl::domain_label() const {
  return registrable_domain.substr(0, registrable_domain.find('.'));
}

std::string ParsedUrl::to_string() const {
  std::string out;
  if (explicit_scheme) out = scheme + "://";
  return out + host() + path + query_fragment;
}

std::string ParsedUrl::href() const {
  return scheme + "://" + host() + path + query_fragment;
}

ParsedUrl parse_url(std::string_view raw) {
  if (raw.empty()) throw UrlError(UrlErrorKind::kMalformedUrl, "empty URL");
  for (char c : raw) {
    if (static_cast<unsigned char>(c) >= 0x80)
      throw UrlError(UrlErrorKind::kNonAsciiHost, "non-ASCII character in URL");
    if (static_cast<unsigned char>(c) <= 0x20 || c == 0x7f)
      throw UrlError(UrlErrorKind::kMalformedUrl, "whitespace or control character in URL");
  }

  ParsedUrl url;
  std::string_view rest = raw;
  if (size_t n = scheme_length(rest); n > 0) {
    url.scheme = to_lower(rest.substr(0, n - 3));
    url.explicit_scheme = true;
    rest.remove_prefix(n);
  }

  auto host_end = rest.find_first_of("/?#");
  std::string_view host_view = rest.substr(0, host_end);
  std::string_view tail =
      host_end == std::string_view::npos ? std::string_view{} : rest.substr(host_end);

  if (host_view.find('@') != std::string_view::npos)
    throw UrlError(UrlErrorKind::kMalformedUrl, "userinfo is not supported");
  if (host_view.find(':') != std::string_view::npos)
    throw UrlError(UrlErrorKind::kMalformedUrl, "ports are not supported");

  std::string host = to_lower(host_view);
  if (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty()) throw UrlError(UrlErrorKind::kMalformedUrl, "empty host");
  if (host.find('.') == std::string::npos)
    throw UrlError(UrlErrorKind::kMalformedUrl, "host has no dot: " + host);

  auto labels = split(host, '.');
  for (const auto& label : labels) {
    if (label.empty())
      throw UrlError(UrlErrorKind::kMalformedUrl, "empty label in host: " + host);
    if (!std::all_of(label.begin(), label.end(), is_label_char))
      throw UrlError(UrlErrorKind::kMalformedUrl, "illegal character in label: " + label);
  }

  url.public_suffix = public_suffix_of(host);
  size_t suffix_labels = split(url.public_suffix, '.').size();
  size_t registrable_start = labels.size() - suffix_labels - 1;
  url.subdomains.assign(labels.begin(), labels.begin() + static_cast<long>(registrable_start));
  url.registrable_domain =
      join({labels.begin() + static_cast<long>(registrable_start), labels.end()}, ".");

  auto path_end = tail.find_first_of("?#");
  url.path = std::string(tail.substr(0, path_end));
  if (path_end != std::string_view::npos) url.query_fragment = std::string(tail.substr(path_end));
  return url;
}

std::string_view to_string(SegmentRole role) {
  switch (role) {
    case SegmentRole::kScheme: return "scheme";
    case SegmentRole::kSubdomain: return "subdomain";
    case SegmentRole::kDomain: return "domain";
    case SegmentRole::kSuffix: return "suffix";
    case SegmentRole::kPath: return "path";
    case SegmentRole::kOther: return "other";
  }
  return "other";
}

std::string UrlRenderModel::text() const {
  std::string out;
  for (const auto& s : segments) out += s.text;
  return out;
}

UrlRenderModel render_segments(const ParsedUrl& url) {
  UrlRenderModel model;
  if (url.explicit_scheme)
    model.segments.push_back({url.scheme + "://", SegmentRole::kScheme});
  for (const auto& label : url.subdomains)
    model.segments.push_back({label + ".", SegmentRole::kSubdomain});
  model.segments.push_back({url.registrable_domain, SegmentRole::kDomain});
  if (!url.path.empty()) model.segments.push_back({url.path, SegmentRole::kPath});
  if (!url.query_fragment.empty())
    model.segments.push_back({url.query_fragment, SegmentRole::kOther});
  return model;
}

std::string normalize_domain_answer(std::string_view raw) {
  std::string out = to_lower(trim(raw));
  std::string_view view = out;
  if (size_t n = scheme_length(view); n > 0) view.remove_prefix(n);
  while (!view.empty() && view.back() == '/') view.remove_suffix(1);
  if (view.starts_with("www.")) view.remove_prefix(4);
  if (!view.empty() && view.back() == '.') view.remove_suffix(1);
  return std::string(view);
}

}  // namespace linkgate
