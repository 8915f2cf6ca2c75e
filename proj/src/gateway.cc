#include "linkgate/gateway.h"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace linkgate {

namespace {

int64_t now_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

bool iequals_prefix(std::string_view text, size_t pos, std::string_view prefix) {
  if (text.size() - pos < prefix.size()) return false;
  for (size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != prefix[i]) return false;
  return true;
}

bool is_attr_boundary(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == '<' || c == '"' || c == '\'' ||
         c == '/';
}

std::string redirect_location(const std::string& raw, const ParsedUrl& url) {
  return url.explicit_scheme ? raw : url.href();
}

uint64_t attempt_seed(uint64_t base, int attempt) {
  return base ^ (static_cast<uint64_t>(attempt) * 0x9E3779B97F4A7C15ull);
}

std::string resolve(const std::string& base_dir, const std::string& value) {
  if (value.empty()) return value;
  std::filesystem::path p(value);
  if (p.is_absolute()) return value;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("config " + key + ": expected a boolean, got '" + value + "'");
}

TaskKind parse_kind(const std::string& key, const std::string& name) {
  auto kind = task_kind_from_string(trim(name));
  if (!kind) throw std::invalid_argument("config " + key + ": unknown task kind '" + name + "'");
  return *kind;
}

}  // namespace

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out;
}

std::optional<std::string> url_decode(std::string_view text) {
  std::string out;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%') {
      if (i + 2 >= text.size()) return std::nullopt;
      int hi = hex_value(text[i + 1]), lo = hex_value(text[i + 2]);
      if (hi < 0 || lo < 0) return std::nullopt;
      out += static_cast<char>(hi * 16 + lo);
      i += 2;
    } else if (text[i] == '+') {
      out += ' ';
    } else {
      out += text[i];
    }
  }
  return out;
}

RewriteResult rewrite_links(std::string_view html, std::string_view base_endpoint) {
  RewriteResult result;
  std::string base(base_endpoint);
  while (!base.empty() && base.back() == '/') base.pop_back();

  size_t copied = 0;
  for (size_t pos = 0; pos < html.size(); ++pos) {
    if (!iequals_prefix(html, pos, "href") || (pos > 0 && !is_attr_boundary(html[pos - 1])))
      continue;
    size_t i = pos + 4;
    while (i < html.size() && std::isspace(static_cast<unsigned char>(html[i]))) ++i;
    if (i >= html.size() || html[i] != '=') continue;
    ++i;
    while (i < html.size() && std::isspace(static_cast<unsigned char>(html[i]))) ++i;
    if (i >= html.size()) break;

    size_t value_start, value_end;
    if (html[i] == '"' || html[i] == '\'') {
      value_start = i + 1;
      value_end = html.find(html[i], value_start);
      if (value_end == std::string_view::npos) break;
    } else {
      value_start = i;
      value_end = value_start;
      while (value_end < html.size() && !std::isspace(static_cast<unsigned char>(html[value_end])) &&
             html[value_end] != '>')
        ++value_end;
    }
    auto value = html.substr(value_start, value_end - value_start);
    if (iequals_prefix(value, 0, "http://") || iequals_prefix(value, 0, "https://")) {
      result.html.append(html.substr(copied, value_start - copied));
      result.html += base + "/inspect?target=" + url_encode(value);
      copied = value_end;
      ++result.rewritten;
    } else {
      ++result.skipped;
    }
    pos = value_end;
  }
  result.html.append(html.substr(copied));
  return result;
}

Allowlist Allowlist::parse(std::string_view text) {
  Allowlist list;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto entry = trim(line);
    if (!entry.empty()) list.add(entry);
  }
  return list;
}

Allowlist Allowlist::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open allowlist " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void Allowlist::add(std::string_view host) {
  auto url = parse_url(host);
  if (!url.path.empty() || !url.query_fragment.empty())
    throw std::invalid_argument("allowlist entry must be a host: " + std::string(host));
  entries_.push_back({url.registrable_domain, url.subdomain_chain()});
}

bool Allowlist::allows(const ParsedUrl& url) const {
  for (const auto& e : entries_) {
    if (url.registrable_domain != e.registrable_domain) continue;
    if (e.required_prefix.empty()) return true;
    auto chain = url.subdomain_chain();
    if (chain == e.required_prefix || chain.ends_with("." + e.required_prefix)) return true;
  }
  return false;
}

GatewayConfig parse_config(std::string_view text, const std::string& base_dir) {
  GatewayConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(view.substr(0, eq)));
    std::string value(trim(view.substr(eq + 1)));

    if (key == "listen") {
      auto colon = value.rfind(':');
      if (colon == std::string::npos) throw std::invalid_argument("config listen: expected host:port");
      config.listen_host = value.substr(0, colon);
      try {
        config.port = std::stoi(value.substr(colon + 1));
      } catch (const std::exception&) {
        throw std::invalid_argument("config listen: bad port in '" + value + "'");
      }
      if (config.port < 0 || config.port > 65535)
        throw std::invalid_argument("config listen: port out of range");
    } else if (key == "allowlist") {
      config.allowlist_path = resolve(base_dir, value);
    } else if (key == "brands") {
      config.brands_path = resolve(base_dir, value);
    } else if (key == "strings") {
      config.strings_dir = resolve(base_dir, value);
    } else if (key == "locale") {
      config.locale = value;
    } else if (key == "event_log") {
      config.event_log_path = resolve(base_dir, value);
    } else if (key == "weights") {
      config.weights.clear();
      for (const auto& item : split(value, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos)
          throw std::invalid_argument("config weights: expected kind:weight, got '" + item + "'");
        double w = std::stod(item.substr(colon + 1));
        if (w < 0) throw std::invalid_argument("config weights: negative weight");
        config.weights[parse_kind(key, item.substr(0, colon))] = w;
      }
    } else if (key == "fallback") {
      config.fallback.clear();
      for (const auto& item : split(value, ',')) config.fallback.push_back(parse_kind(key, item));
    } else if (key == "policy") {
      if (value == "domain_only")
        config.policy.subdomain_tolerance = SubdomainTolerance::kDomainOnly;
      else if (value == "allow_subdomain_chains")
        config.policy.subdomain_tolerance = SubdomainTolerance::kAllowSubdomainChains;
      else
        throw std::invalid_argument("config policy: unknown mode '" + value + "'");
    } else if (key == "session_ttl") {
      config.session_ttl = std::chrono::seconds(std::stol(value));
    } else if (key == "allow_kind_override") {
      config.allow_kind_override = parse_bool(key, value);
    } else if (key == "fsync") {
      config.fsync = parse_bool(key, value);
    } else if (key == "seed") {
      config.seed = std::stoull(value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  double total = 0;
  for (auto& [k, w] : config.weights) total += w;
  if (total <= 0) throw std::invalid_argument("config weights: all weights are zero");
  return config;
}

GatewayConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto dir = std::filesystem::path(path).parent_path().string();
  return parse_config(buffer.str(), dir.empty() ? "." : dir);
}

Gateway::Gateway(GatewayConfig config, std::vector<BrandProfile> brands, Allowlist allowlist,
                 std::shared_ptr<EventSink> log, StringTable strings)
    : config_(std::move(config)),
      brands_(std::move(brands)),
      allowlist_(std::move(allowlist)),
      log_(std::move(log)),
      strings_(std::move(strings)),
      clock_([] { return std::chrono::steady_clock::now(); }),
      rng_(config_.seed ? config_.seed : std::random_device{}()) {}

std::unique_ptr<Gateway> Gateway::from_config(const GatewayConfig& config) {
  auto brands = config.brands_path.empty() ? std::vector<BrandProfile>{}
                                           : load_brands(config.brands_path);
  auto allowlist = config.allowlist_path.empty() ? Allowlist{} : Allowlist::load(config.allowlist_path);
  auto strings = config.strings_dir.empty() ? StringTable::english()
                                            : StringTable::load(config.strings_dir, config.locale);
  auto log = std::make_shared<FileEventLog>(config.event_log_path, config.fsync);
  return std::make_unique<Gateway>(config, std::move(brands), std::move(allowlist), std::move(log),
                                   std::move(strings));
}

std::string Gateway::random_token(size_t bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  std::lock_guard lock(rng_mu_);
  while (out.size() < bytes * 2) {
    uint64_t word = rng_();
    for (int i = 0; i < 16 && out.size() < bytes * 2; ++i, word >>= 4) out += kHex[word & 0xF];
  }
  return out;
}

void Gateway::append(Session& s, EventKind kind, Json payload) {
  SessionEvent e;
  e.session_id = s.id;
  {
    std::lock_guard lock(time_mu_);
    last_timestamp_us_ = std::max(now_us(), last_timestamp_us_ + 1);
    e.timestamp_us = last_timestamp_us_;
  }
  e.kind = kind;
  e.payload = std::move(payload);
  log_->append(e);
  s.updated_at = clock_();
}

GatewayResponse Gateway::error(int status, std::string_view code, std::string_view message) const {
  GatewayResponse r;
  r.status = status;
  r.body = {{"error", code}, {"message", message}};
  return r;
}

std::shared_ptr<Gateway::Session> Gateway::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  if (clock_() - it->second->updated_at > config_.session_ttl) {
    sessions_.erase(it);
    return nullptr;
  }
  return it->second;
}

TaskInstance Gateway::pick_task(Session& s, std::optional<TaskKind> requested) {
  const uint64_t seed = attempt_seed(s.base_seed, s.attempt_count);
  TaskKind kind;
  if (requested) {
    kind = *requested;
  } else {
    std::mt19937_64 rng(seed);
    double total = 0;
    for (auto& [k, w] : config_.weights) total += w;
    double draw = std::uniform_real_distribution<double>(0.0, total)(rng);
    kind = config_.weights.rbegin()->first;
    for (auto& [k, w] : config_.weights) {
      if (w > 0 && draw < w) {
        kind = k;
        break;
      }
      draw -= w;
    }
  }
  try {
    return build_task(s.target, kind, seed);
  } catch (const ClickUnavailable&) {
    for (auto fallback : config_.fallback) {
      if (fallback == TaskKind::kClick) continue;
      return build_task(s.target, fallback, seed);
    }
    return build_task(s.target, TaskKind::kType, seed);
  }
}

Json Gateway::task_page(const Session& s) const {
  std::string prompt_id = "task." + std::string(to_string(s.task.kind)) + ".prompt";
  return {{"session_id", s.id},
          {"attempt", s.attempt_count},
          {"state", to_string(s.state)},
          {"url", s.target.to_string()},
          {"task", to_json(s.task)},
          {"prompt", strings_.get(prompt_id)},
          {"help", strings_.get("help.domain")},
          {"actions", {"submit", "report", "back"}},
          {"locale", config_.locale}};
}

GatewayResponse Gateway::handle_inspect(const InspectRequest& request) {
  ParsedUrl url;
  try {
    url = parse_url(request.target);
    if (url.scheme != "http" && url.scheme != "https")
      throw UrlError(UrlErrorKind::kMalformedUrl, "unsupported scheme " + url.scheme);
  } catch (const UrlError& err) {
    {
      std::lock_guard lock(stats_mu_);
      ++bad_targets_;
    }
    std::clog << "linkgate: bad target rejected: " << err.what() << "\n";
    auto r = error(400, "bad_target", strings_.get("error.bad_target"));
    r.body["detail"] = err.what();
    return r;
  }

  if (allowlist_.allows(url)) {
    GatewayResponse r;
    r.status = 302;
    r.location = redirect_location(request.target, url);
    return r;
  }

  std::optional<TaskKind> requested;
  if (request.kind && config_.allow_kind_override) requested = request.kind;

  std::shared_ptr<Session> session;
  if (request.session_cookie) {
    auto existing = find_session(*request.session_cookie);
    if (existing && existing->target == url) session = existing;
  }

  if (session) {
    std::lock_guard lock(session->mu);
    if (session->state == SessionState::kServed || session->state == SessionState::kReturned) {
      try {
        append(*session, EventKind::kLinkClicked, {{"target", request.target}, {"tags", request.tags}});
        if (session->state == SessionState::kServed) {
          append(*session, EventKind::kReturnedToMailbox, {{"implicit", true}});
          session->state = SessionState::kReturned;
        }
        ++session->attempt_count;
        session->task = pick_task(*session, requested);
        append(*session, EventKind::kTaskServed,
               {{"task", to_json(session->task)},
                {"verdict", to_json(session->verdict)},
                {"attempt", session->attempt_count}});
      } catch (const StorageFailure& err) {
        return error(503, "storage_failure", err.what());
      }
      session->state = SessionState::kServed;
      session->served_at = clock_();
      GatewayResponse r;
      r.body = task_page(*session);
      r.session_id = session->id;
      return r;
    }
    // Finished sessions are never reopened; a new click starts over.
  }

  session = std::make_shared<Session>();
  session->id = random_token(16);
  session->target = url;
  session->raw_target = request.target;
  session->verdict = classify(url, brands_);
  session->tags = request.tags;
  session->base_seed = std::stoull(random_token(8), nullptr, 16);
  session->created_at = session->updated_at = session->served_at = clock_();
  session->attempt_count = 1;
  session->task = pick_task(*session, requested);
  try {
    append(*session, EventKind::kLinkClicked, {{"target", request.target}, {"tags", request.tags}});
    append(*session, EventKind::kTaskServed,
           {{"task", to_json(session->task)},
            {"verdict", to_json(session->verdict)},
            {"attempt", 1}});
  } catch (const StorageFailure& err) {
    return error(503, "storage_failure", err.what());
  }
  {
    std::lock_guard lock(sessions_mu_);
    sessions_[session->id] = session;
  }
  GatewayResponse r;
  r.body = task_page(*session);
  r.session_id = session->id;
  return r;
}

std::string Gateway::mint_token(Session& s) {
  auto token = random_token(16);
  std::lock_guard lock(tokens_mu_);
  if (s.pending_token) tokens_.erase(*s.pending_token);
  tokens_[token] = {s.id, redirect_location(s.raw_target, s.target)};
  s.pending_token = token;
  return token;
}

GatewayResponse Gateway::handle_answer(const std::string& session_id, std::string_view answer,
                                       std::optional<int64_t> elapsed_ms) {
  auto session = find_session(session_id);
  if (!session) return error(404, "unknown_session", "no such session");
  std::lock_guard lock(session->mu);
  if (session->state != SessionState::kServed) {
    std::clog << "linkgate: stale answer for session " << session_id << " in state "
              << to_string(session->state) << "\n";
    return error(409, "stale_state", "session is " + std::string(to_string(session->state)));
  }

  auto result = validate(session->task, answer, config_.policy, session->verdict, elapsed_ms);
  if (result.empty_answer) {
    auto r = error(422, "empty_answer", strings_.get("task." + std::string(to_string(session->task.kind)) + ".prompt"));
    r.body["reprompt"] = true;
    return r;
  }

  auto received_ms = std::chrono::duration_cast<std::chrono::milliseconds>(clock_() - session->served_at).count();
  Json payload = {{"answer", std::string(answer)},
                  {"elapsed_ms", elapsed_ms ? Json(*elapsed_ms) : Json(nullptr)},
                  {"server_elapsed_ms", received_ms},
                  {"kind", to_string(session->task.kind)},
                  {"result", to_json(result)}};
  GatewayResponse r;
  try {
    append(*session, EventKind::kAnswerSubmitted, payload);
    if (result.outcome == Outcome::kCorrect) {
      session->state = SessionState::kSolvedCorrect;
      auto token = mint_token(*session);
      r.body = {{"outcome", "correct"}, {"proceed_token", token}, {"proceed_url", "/proceed?token=" + token}};
    } else {
      session->state = SessionState::kSolvedWrong;
      auto page = mistake_page_model(result, session->task, strings_);
      append(*session, EventKind::kMistakeShown, {{"page", to_json(page)}});
      session->state = SessionState::kMistakeShown;
      r.body = {{"outcome", "mismatch"}, {"mistake_page", to_json(page)}, {"result", to_json(result)}};
    }
  } catch (const StorageFailure& err) {
    return error(503, "storage_failure", err.what());
  }
  r.body["session_id"] = session->id;
  r.body["state"] = to_string(session->state);
  return r;
}

GatewayResponse Gateway::leave_session(const std::string& session_id, SessionState to, EventKind kind) {
  auto session = find_session(session_id);
  if (!session) return error(404, "unknown_session", "no such session");
  std::lock_guard lock(session->mu);
  if (!is_legal_transition(session->state, to))
    return error(409, "stale_state", "session is " + std::string(to_string(session->state)));
  try {
    append(*session, kind, {{"from", to_string(session->state)}});
  } catch (const StorageFailure& err) {
    return error(503, "storage_failure", err.what());
  }
  session->state = to;
  if (session->pending_token) {
    std::lock_guard tlock(tokens_mu_);
    tokens_.erase(*session->pending_token);
    session->pending_token.reset();
  }
  GatewayResponse r;
  r.body = {{"session_id", session->id}, {"state", to_string(to)}};
  return r;
}

GatewayResponse Gateway::handle_report(const std::string& session_id) {
  return leave_session(session_id, SessionState::kReported, EventKind::kReported);
}

GatewayResponse Gateway::handle_back(const std::string& session_id) {
  return leave_session(session_id, SessionState::kReturned, EventKind::kReturnedToMailbox);
}

GatewayResponse Gateway::handle_confirm(const std::string& session_id) {
  auto session = find_session(session_id);
  if (!session) return error(404, "unknown_session", "no such session");
  std::lock_guard lock(session->mu);
  if (session->state != SessionState::kMistakeShown)
    return error(409, "stale_state", "session is " + std::string(to_string(session->state)));
  auto token = mint_token(*session);
  GatewayResponse r;
  r.body = {{"session_id", session->id},
            {"state", to_string(session->state)},
            {"proceed_token", token},
            {"proceed_url", "/proceed?token=" + token}};
  return r;
}

GatewayResponse Gateway::handle_proceed(const std::string& token) {
  Token entry;
  {
    std::lock_guard lock(tokens_mu_);
    auto it = tokens_.find(token);
    if (it == tokens_.end()) return error(410, "token_used", "proceed token is unknown or already used");
    entry = it->second;
    tokens_.erase(it);
  }
  auto session = find_session(entry.session_id);
  if (!session) return error(410, "token_used", "session expired");
  std::lock_guard lock(session->mu);
  if (session->pending_token != token ||
      (session->state != SessionState::kSolvedCorrect && session->state != SessionState::kMistakeShown))
    return error(410, "token_used", "proceed token no longer valid");
  session->pending_token.reset();
  try {
    append(*session, EventKind::kProceedConfirmed,
           {{"target", entry.target}, {"from", to_string(session->state)}});
  } catch (const StorageFailure& err) {
    return error(503, "storage_failure", err.what());
  }
  session->state = SessionState::kProceeded;
  GatewayResponse r;
  r.status = 302;
  r.location = entry.target;
  r.session_id = session->id;
  return r;
}

GatewayResponse Gateway::session_status(const std::string& session_id) {
  auto session = find_session(session_id);
  if (!session) return error(404, "unknown_session", "no such session");
  std::lock_guard lock(session->mu);
  GatewayResponse r;
  r.body = task_page(*session);
  return r;
}

size_t Gateway::expire_sessions() {
  auto now = clock_();
  std::lock_guard lock(sessions_mu_);
  return std::erase_if(sessions_, [&](const auto& item) {
    return now - item.second->updated_at > config_.session_ttl;
  });
}

size_t Gateway::session_count() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

size_t Gateway::bad_targets() const {
  std::lock_guard lock(stats_mu_);
  return bad_targets_;
}

}  // namespace linkgate
