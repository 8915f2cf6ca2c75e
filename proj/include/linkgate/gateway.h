#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "linkgate/event_log.h"
#include "linkgate/impersonation.h"
#include "linkgate/strings.h"
#include "linkgate/task_engine.h"

namespace linkgate {

std::string url_encode(std::string_view text);
// Returns nullopt on a malformed escape.
std::optional<std::string> url_decode(std::string_view text);

struct RewriteResult {
  std::string html;
  size_t rewritten = 0;
  size_t skipped = 0;  // hrefs that are not absolute http(s)
};

// Points every absolute http(s) href at `<base_endpoint>/inspect?target=...`;
// everything else is left byte-identical.
RewriteResult rewrite_links(std::string_view html, std::string_view base_endpoint);

// Trusted registrable domains, optionally narrowed to a subdomain chain
// ("intranet.futuracom.org" only admits intranet.futuracom.org and below).
class Allowlist {
 public:
  struct Entry {
    std::string registrable_domain;
    std::string required_prefix;  // subdomain chain, may be empty
  };

  static Allowlist parse(std::string_view text);
  static Allowlist load(const std::string& path);
  void add(std::string_view host);
  bool allows(const ParsedUrl& url) const;
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

struct GatewayConfig {
  std::string listen_host = "127.0.0.1";
  int port = 8080;
  std::string allowlist_path;
  std::string brands_path;
  std::string strings_dir;
  std::string locale = "en";
  std::string event_log_path = "linkgate-events.jsonl";
  std::map<TaskKind, double> weights = {
      {TaskKind::kClick, 1.0}, {TaskKind::kHighlight, 1.0}, {TaskKind::kType, 1.0}};
  // Tried in order when the drawn kind cannot be built (Click on a bare domain).
  std::vector<TaskKind> fallback = {TaskKind::kHighlight, TaskKind::kType};
  ValidationPolicy policy;
  std::chrono::seconds session_ttl{3600};
  bool allow_kind_override = false;
  bool fsync = true;
  uint64_t seed = 0;  // 0 draws from std::random_device
};

// key = value lines; relative paths resolve against `base_dir`.
// Throws std::invalid_argument on unknown keys or bad values.
GatewayConfig parse_config(std::string_view text, const std::string& base_dir = ".");
GatewayConfig load_config(const std::string& path);

struct InspectRequest {
  std::string target;
  std::optional<std::string> session_cookie;
  std::optional<TaskKind> kind;
  std::map<std::string, std::string> tags;  // e.g. participant, email
};

struct GatewayResponse {
  int status = 200;
  Json body = Json::object();
  std::string location;         // set for 302
  std::string session_id;       // set when a session cookie should be issued
};

class Gateway {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;

  Gateway(GatewayConfig config, std::vector<BrandProfile> brands, Allowlist allowlist,
          std::shared_ptr<EventSink> log, StringTable strings = StringTable::english());

  // Loads brands, allowlist, strings and opens the event log named in config.
  static std::unique_ptr<Gateway> from_config(const GatewayConfig& config);

  GatewayResponse handle_inspect(const InspectRequest& request);
  GatewayResponse handle_answer(const std::string& session_id, std::string_view answer,
                                std::optional<int64_t> elapsed_ms);
  GatewayResponse handle_report(const std::string& session_id);
  GatewayResponse handle_back(const std::string& session_id);
  GatewayResponse handle_confirm(const std::string& session_id);
  GatewayResponse handle_proceed(const std::string& token);
  GatewayResponse session_status(const std::string& session_id);

  // Drops sessions idle for longer than the configured TTL.
  size_t expire_sessions();
  size_t session_count() const;
  size_t bad_targets() const;
  void set_clock(Clock clock) { clock_ = std::move(clock); }
  const GatewayConfig& config() const { return config_; }

 private:
  struct Session {
    std::mutex mu;
    std::string id;
    ParsedUrl target;
    std::string raw_target;
    ImpersonationVerdict verdict;
    TaskInstance task;
    SessionState state = SessionState::kServed;
    int attempt_count = 0;
    uint64_t base_seed = 0;
    std::map<std::string, std::string> tags;
    std::optional<std::string> pending_token;
    std::chrono::steady_clock::time_point created_at;
    std::chrono::steady_clock::time_point updated_at;
    std::chrono::steady_clock::time_point served_at;
  };

  struct Token {
    std::string session_id;
    std::string target;
  };

  std::shared_ptr<Session> find_session(const std::string& id);
  std::string random_token(size_t bytes);
  void append(Session& s, EventKind kind, Json payload);
  TaskInstance pick_task(Session& s, std::optional<TaskKind> requested);
  Json task_page(const Session& s) const;
  std::string mint_token(Session& s);
  GatewayResponse error(int status, std::string_view code, std::string_view message) const;
  GatewayResponse leave_session(const std::string& session_id, SessionState to, EventKind kind);

  GatewayConfig config_;
  std::vector<BrandProfile> brands_;
  Allowlist allowlist_;
  std::shared_ptr<EventSink> log_;
  StringTable strings_;
  Clock clock_;

  mutable std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex tokens_mu_;
  std::map<std::string, Token> tokens_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
  std::mutex time_mu_;
  int64_t last_timestamp_us_ = 0;
  mutable std::mutex stats_mu_;
  size_t bad_targets_ = 0;
};

}  // namespace linkgate
