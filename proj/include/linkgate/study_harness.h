#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linkgate/event_log.h"
#include "linkgate/impersonation.h"
#include "linkgate/serialization.h"
#include "linkgate/task_engine.h"

namespace linkgate {

// ---- Corpus ---------------------------------------------------------------

enum class EmailCategory { kGroup, kServiceLegit, kServicePhish, kDirectLegit, kDirectPhish };

std::string_view to_string(EmailCategory c);
std::optional<EmailCategory> email_category_from_string(std::string_view name);
inline bool is_phishing(EmailCategory c) {
  return c == EmailCategory::kServicePhish || c == EmailCategory::kDirectPhish;
}

struct Service {
  std::string id;
  std::string name;
  BrandProfile brand;
  std::string legit_url;
  std::map<Pattern, std::string> phishing_urls;  // missing pattern: not available
  bool followup = false;                         // hard rows of the follow-up study
  bool verbatim = false;                         // URLs copied from the published table

  bool has_all_patterns() const { return phishing_urls.size() == 5; }
};

struct EmailSpec {
  std::string id;
  EmailCategory category = EmailCategory::kGroup;
  std::string subject;
  std::string body;  // "{link}" marks the link slot
  std::optional<std::string> service;
};

struct Corpus {
  std::vector<Service> services;
  std::vector<EmailSpec> emails;
  std::string unknown_url;

  static Corpus parse(const Json& j);
  static Corpus load(const std::string& path);
  const Service* service(std::string_view id) const;
  std::vector<BrandProfile> brands() const;
  // Services usable in main-study sampling: not follow-up, all five patterns.
  std::vector<std::string> sampling_services() const;
};

// ---- Participant plans ----------------------------------------------------

enum class Group { kControl, kPassive, kActive, kInspection };

std::string_view to_string(Group g);
std::optional<Group> group_from_string(std::string_view name);

struct PlannedEmail {
  std::string email_id;
  EmailCategory category = EmailCategory::kGroup;
  std::optional<std::string> service;
  std::optional<std::string> url;  // absent for group emails
  Pattern pattern = Pattern::kNone;
  std::optional<TaskKind> kind;    // task served on click; absent for Control
};

struct ParticipantPlan {
  std::string participant_id;
  Group group = Group::kControl;
  std::vector<PlannedEmail> emails;
  uint64_t seed = 0;
};

class InsufficientServices : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr size_t kGroupEmails = 6;
inline constexpr size_t kServiceLegitEmails = 4;
inline constexpr size_t kServicePhishEmails = 2;
inline constexpr size_t kDirectLegitEmails = 1;
inline constexpr size_t kDirectPhishEmails = 1;

// Draws one participant's 14 emails from the preferred services.
ParticipantPlan sample_plan(const Corpus& corpus, const std::vector<std::string>& preferred_services,
                            Group group, uint64_t seed, std::string participant_id = "p0");

// Task kinds a URL may be served with in the given group.
std::vector<TaskKind> available_kinds(Group group, const ParsedUrl& url, Pattern pattern);

// ---- Behavior model -------------------------------------------------------

// Flat probabilities for one (group, legit/phish) cell.
struct OutcomeParams {
  double mailbox_report = 0;  // report without clicking
  double ignore = 0;          // leave unmanaged; clicking takes the rest
  double task_report = 0;     // report from the task page
  double task_back = 0;       // back from the task page; solving takes the rest
  double solve_correct = 1;
  double wrong_confirm = 0;   // on the mistake page; back takes the rest
  double wrong_report = 0;
  double back_report = 0;     // after Back: report from the mailbox, else click again
  double text_complete = 1;   // text-only emails
  double text_report = 0;

  static OutcomeParams parse(const Json& j);
  static OutcomeParams parse(const Json& j, const OutcomeParams& defaults);
  Json to_json() const;
};

struct GroupBehavior {
  OutcomeParams legit;
  OutcomeParams phish;
  std::map<Pattern, OutcomeParams> phish_by_pattern;
  const OutcomeParams& params(EmailCategory category, Pattern pattern) const;
};

struct BehaviorModel {
  std::map<Group, GroupBehavior> groups;
  int max_attempts = 2;
  std::map<TaskKind, double> median_solve_ms = {
      {TaskKind::kClick, 6000},         {TaskKind::kHighlight, 6500}, {TaskKind::kType, 10000},
      {TaskKind::kPassiveConfirm, 3000}, {TaskKind::kActiveReorder, 6000}};
  double solve_time_sigma = 0.5;  // log-normal spread, 0 = constant

  static BehaviorModel parse(const Json& j);
  static BehaviorModel load(const std::string& path);
};

struct ExpectedRates {
  double visit = 0;
  double report_task = 0;
  double report_mailbox = 0;
  double unmanaged = 0;
  double report() const { return report_task + report_mailbox; }
};

// Closed-form outcome probabilities of one link email under the model.
ExpectedRates expected_rates(const OutcomeParams& p, Group group, int max_attempts);

// ---- Mailbox log ----------------------------------------------------------

inline constexpr std::string_view kMailboxSchema = "linkgate.mailbox";

// Final mailbox-level outcome of one email for one participant.
struct MailboxRecord {
  std::string participant;
  Group group = Group::kControl;
  std::string email;
  EmailCategory category = EmailCategory::kGroup;
  Pattern pattern = Pattern::kNone;
  std::optional<TaskKind> kind;
  std::string action;  // completed | reported | visited | none
  std::optional<std::string> session;
  int attempts = 0;
};

Json to_json(const MailboxRecord& r);
MailboxRecord mailbox_record_from_json(const Json& j);

struct MailboxLogContents {
  std::vector<MailboxRecord> records;
  size_t corrupt_lines = 0;
};
MailboxLogContents read_mailbox_log(const std::string& path);

// ---- Simulated agents -----------------------------------------------------

class GatewayUnreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulationOptions {
  std::map<Group, std::string> endpoints;  // base URL per gateway-backed group
  size_t threads = 8;
  uint64_t seed = 1;
};

struct SimulationStats {
  size_t agents = 0;
  size_t emails = 0;
  size_t link_clicks = 0;
  size_t http_requests = 0;
};

// Drives every plan's emails through the gateways named in options and
// appends one mailbox record per email to `mailbox_log`.
SimulationStats run_simulated_agents(const std::vector<ParticipantPlan>& plans, const Corpus& corpus,
                                     const BehaviorModel& model, const SimulationOptions& options,
                                     FileEventLog& mailbox_log);

// ---- Aggregation ----------------------------------------------------------

struct RateCell {
  size_t emails = 0;
  size_t visit = 0;
  size_t completed = 0;
  size_t report_task = 0;
  size_t report_mailbox = 0;
  size_t unmanaged = 0;

  size_t report() const { return report_task + report_mailbox; }
  double rate(size_t count) const { return emails ? static_cast<double>(count) / emails : 0.0; }
  bool conserved() const {
    return visit + completed + report_task + report_mailbox + unmanaged == emails;
  }
  Json to_json() const;
};

// Per-phase interactions of served tasks.
struct PhaseCell {
  size_t tasks = 0;
  size_t solved = 0;
  size_t wrong = 0;
  size_t report = 0;
  size_t back = 0;
  size_t open = 0;  // no decision recorded
  size_t mistake_pages = 0;
  size_t confirm = 0;
  size_t mistake_report = 0;
  size_t mistake_back = 0;
  size_t mistake_open = 0;
  Json to_json() const;
};

struct Quantiles {
  size_t count = 0;
  double p25 = 0, median = 0, p75 = 0;
};

Quantiles quantiles(std::vector<double> values);

struct GroupTable {
  RateCell text_only;
  RateCell legit_link;
  RateCell phish;
};

struct MetricsReport {
  std::map<std::string, GroupTable> by_group;
  // Keyed by group name, or by task kind for inspection participants.
  std::map<std::string, std::map<Pattern, RateCell>> by_pattern;
  std::map<std::string, std::map<std::string, PhaseCell>> phases;  // legit|phish -> task kind
  std::map<std::string, std::map<Mistake, size_t>> mistakes;      // legit|phish -> counts
  std::map<std::string, Quantiles> solving_ms;                     // task kind -> quantiles
  size_t sessions = 0;
  size_t excluded_sessions = 0;
  size_t corrupt_lines = 0;
  size_t time_bound_violations = 0;  // client time above server receive time

  Json to_json() const;
  std::string summary() const;
};

// Pure fold over the logs. Without mailbox records every gateway session
// counts as one clicked link email of the group named in its tags.
MetricsReport aggregate(const std::vector<SessionEvent>& events,
                        const std::vector<MailboxRecord>& mailbox = {}, size_t corrupt_lines = 0);

// ---- End-to-end run ------------------------------------------------------

struct StudyOptions {
  size_t participants_per_group = 100;
  uint64_t seed = 1;
  std::string out_dir = ".";
  size_t threads = 8;
  std::vector<Group> groups;  // empty: every group in the model
};

struct StudyResult {
  MetricsReport report;
  std::map<Group, std::pair<ExpectedRates, ExpectedRates>> expected;  // legit, phish
  SimulationStats stats;
  std::vector<std::string> event_logs;
  std::string mailbox_log;
  Json to_json() const;
};

// Random preference list: at least four sampling services.
std::vector<std::string> draw_preferences(const Corpus& corpus, std::mt19937_64& rng);

// Starts one in-process gateway per task group, runs the agents, then
// aggregates the logs written under out_dir.
StudyResult run_study(const Corpus& corpus, const BehaviorModel& model, const StudyOptions& options);

}  // namespace linkgate
