#include "linkgate/study_harness.h"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <thread>

#include "linkgate/gateway.h"
#include "linkgate/http_server.h"

namespace linkgate {

namespace {

constexpr std::pair<EmailCategory, std::string_view> kCategoryNames[] = {
    {EmailCategory::kGroup, "group"},
    {EmailCategory::kServiceLegit, "service_legit"},
    {EmailCategory::kServicePhish, "service_phish"},
    {EmailCategory::kDirectLegit, "direct_legit"},
    {EmailCategory::kDirectPhish, "direct_phish"},
};

constexpr std::pair<Group, std::string_view> kGroupNames[] = {
    {Group::kControl, "control"},
    {Group::kPassive, "passive"},
    {Group::kActive, "active"},
    {Group::kInspection, "inspection"},
};

template <class T>
T pick(const std::vector<T>& items, std::mt19937_64& rng) {
  std::uniform_int_distribution<size_t> dist(0, items.size() - 1);
  return items[dist(rng)];
}

double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

std::string_view to_string(EmailCategory c) {
  for (auto& [k, name] : kCategoryNames)
    if (k == c) return name;
  return "group";
}

std::optional<EmailCategory> email_category_from_string(std::string_view name) {
  for (auto& [k, n] : kCategoryNames)
    if (n == name) return k;
  return std::nullopt;
}

std::string_view to_string(Group g) {
  for (auto& [k, name] : kGroupNames)
    if (k == g) return name;
  return "control";
}

std::optional<Group> group_from_string(std::string_view name) {
  for (auto& [k, n] : kGroupNames)
    if (n == name) return k;
  return std::nullopt;
}

// ---- Corpus ---------------------------------------------------------------

Corpus Corpus::parse(const Json& j) {
  Corpus corpus;
  for (const auto& s : j.at("services")) {
    Service svc;
    svc.id = s.at("id").get<std::string>();
    svc.name = s.value("name", svc.id);
    const auto& b = s.at("brand");
    svc.brand = make_brand(b.at("token").get<std::string>(), b.at("domain").get<std::string>(),
                           b.value("prefixes", std::vector<std::string>{}));
    svc.legit_url = s.at("legit").get<std::string>();
    parse_url(svc.legit_url);
    if (s.contains("phish")) {
      for (auto& [key, value] : s.at("phish").items()) {
        auto pattern = pattern_from_string(key);
        if (!pattern || *pattern == Pattern::kNone)
          throw std::invalid_argument("service " + svc.id + ": unknown pattern " + key);
        if (value.is_null()) continue;
        parse_url(value.get<std::string>());
        svc.phishing_urls[*pattern] = value.get<std::string>();
      }
    }
    svc.followup = s.value("followup", false);
    svc.verbatim = s.value("verbatim", false);
    corpus.services.push_back(std::move(svc));
  }
  for (const auto& e : j.at("emails")) {
    EmailSpec email;
    email.id = e.at("id").get<std::string>();
    auto category = email_category_from_string(e.at("category").get<std::string>());
    if (!category) throw std::invalid_argument("email " + email.id + ": unknown category");
    email.category = *category;
    email.subject = e.value("subject", "");
    email.body = e.value("body", "");
    if (e.contains("service") && !e.at("service").is_null())
      email.service = e.at("service").get<std::string>();
    if (email.category != EmailCategory::kGroup) {
      if (!email.service || !corpus.service(*email.service))
        throw std::invalid_argument("email " + email.id + ": unknown service");
      if (email.body.find("{link}") == std::string::npos)
        throw std::invalid_argument("email " + email.id + ": body has no {link}");
    }
    corpus.emails.push_back(std::move(email));
  }
  corpus.unknown_url = j.value("unknown_url", "");
  return corpus;
}

Corpus Corpus::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  return parse(Json::parse(in));
}

const Service* Corpus::service(std::string_view id) const {
  for (const auto& s : services)
    if (s.id == id) return &s;
  return nullptr;
}

std::vector<BrandProfile> Corpus::brands() const {
  std::vector<BrandProfile> out;
  for (const auto& s : services) {
    bool seen = std::any_of(out.begin(), out.end(),
                            [&](const BrandProfile& b) { return b.legit_domain == s.brand.legit_domain; });
    if (!seen) out.push_back(s.brand);
  }
  return out;
}

std::vector<std::string> Corpus::sampling_services() const {
  std::vector<std::string> ids;
  for (const auto& s : services)
    if (!s.followup && s.has_all_patterns()) ids.push_back(s.id);
  return ids;
}

// ---- Plans ----------------------------------------------------------------

std::vector<TaskKind> available_kinds(Group group, const ParsedUrl& url, Pattern pattern) {
  switch (group) {
    case Group::kControl:
      return {};
    case Group::kPassive:
      return {TaskKind::kPassiveConfirm};
    case Group::kActive:
      return {TaskKind::kActiveReorder};
    case Group::kInspection:
      break;
  }
  std::vector<TaskKind> kinds;
  if (pattern != Pattern::kSquat && click_candidates(url).size() >= 2) kinds.push_back(TaskKind::kClick);
  kinds.push_back(TaskKind::kHighlight);
  kinds.push_back(TaskKind::kType);
  return kinds;
}

ParticipantPlan sample_plan(const Corpus& corpus, const std::vector<std::string>& preferred_services,
                            Group group, uint64_t seed, std::string participant_id) {
  auto usable = corpus.sampling_services();
  std::vector<std::string> prefs;
  for (const auto& id : preferred_services)
    if (std::find(usable.begin(), usable.end(), id) != usable.end() &&
        std::find(prefs.begin(), prefs.end(), id) == prefs.end())
      prefs.push_back(id);
  if (prefs.size() < kServiceLegitEmails)
    throw InsufficientServices("participant " + participant_id + " uses " + std::to_string(prefs.size()) +
                               " known services, need " + std::to_string(kServiceLegitEmails));

  std::vector<const EmailSpec*> group_mails, direct_legit, direct_phish;
  for (const auto& e : corpus.emails) {
    if (e.category == EmailCategory::kGroup) group_mails.push_back(&e);
    if (e.category == EmailCategory::kDirectLegit) direct_legit.push_back(&e);
    if (e.category == EmailCategory::kDirectPhish) direct_phish.push_back(&e);
  }
  if (group_mails.size() < kGroupEmails || direct_legit.empty() || direct_phish.empty())
    throw std::invalid_argument("corpus lacks group or direct emails");

  auto service_email = [&](const std::string& service, EmailCategory category) -> const EmailSpec& {
    for (const auto& e : corpus.emails)
      if (e.category == category && e.service == service) return e;
    throw std::invalid_argument("corpus has no " + std::string(to_string(category)) + " email for " + service);
  };

  std::mt19937_64 rng(seed);
  ParticipantPlan plan;
  plan.participant_id = std::move(participant_id);
  plan.group = group;
  plan.seed = seed;

  auto add = [&](const EmailSpec& e, bool phishing) {
    PlannedEmail p;
    p.email_id = e.id;
    p.category = e.category;
    p.service = e.service;
    if (e.category != EmailCategory::kGroup) {
      const Service& svc = *corpus.service(*e.service);
      if (phishing) {
        std::vector<Pattern> patterns;
        for (auto& [pattern, url] : svc.phishing_urls) patterns.push_back(pattern);
        p.pattern = pick(patterns, rng);
        p.url = svc.phishing_urls.at(p.pattern);
      } else {
        p.url = svc.legit_url;
      }
      auto kinds = available_kinds(group, parse_url(*p.url), p.pattern);
      if (!kinds.empty()) p.kind = pick(kinds, rng);
    }
    plan.emails.push_back(std::move(p));
  };

  std::shuffle(group_mails.begin(), group_mails.end(), rng);
  for (size_t i = 0; i < kGroupEmails; ++i) add(*group_mails[i], false);

  std::shuffle(prefs.begin(), prefs.end(), rng);
  for (size_t i = 0; i < kServiceLegitEmails; ++i) add(service_email(prefs[i], EmailCategory::kServiceLegit), false);
  std::shuffle(prefs.begin(), prefs.end(), rng);
  for (size_t i = 0; i < kServicePhishEmails; ++i) add(service_email(prefs[i], EmailCategory::kServicePhish), true);

  add(*pick(direct_legit, rng), false);
  add(*pick(direct_phish, rng), true);

  std::shuffle(plan.emails.begin(), plan.emails.end(), rng);
  return plan;
}

// ---- Behavior model -------------------------------------------------------

OutcomeParams OutcomeParams::parse(const Json& j) { return parse(j, OutcomeParams{}); }

OutcomeParams OutcomeParams::parse(const Json& j, const OutcomeParams& defaults) {
  OutcomeParams p = defaults;
  std::map<std::string, double*> fields = {
      {"mailbox_report", &p.mailbox_report}, {"ignore", &p.ignore},
      {"task_report", &p.task_report},       {"task_back", &p.task_back},
      {"solve_correct", &p.solve_correct},   {"wrong_confirm", &p.wrong_confirm},
      {"wrong_report", &p.wrong_report},     {"back_report", &p.back_report},
      {"text_complete", &p.text_complete},   {"text_report", &p.text_report},
  };
  for (auto& [key, value] : j.items()) {
    auto it = fields.find(key);
    if (it == fields.end()) throw std::invalid_argument("unknown behavior parameter: " + key);
    double v = value.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(key + " is not a probability");
    *it->second = v;
  }
  auto check = [](double a, double b, const char* what) {
    if (a + b > 1.0 + 1e-9) throw std::invalid_argument(std::string(what) + " exceed 1");
  };
  check(p.mailbox_report, p.ignore, "mailbox_report + ignore");
  check(p.task_report, p.task_back, "task_report + task_back");
  check(p.wrong_confirm, p.wrong_report, "wrong_confirm + wrong_report");
  check(p.text_complete, p.text_report, "text_complete + text_report");
  return p;
}

Json OutcomeParams::to_json() const {
  return {{"mailbox_report", mailbox_report}, {"ignore", ignore},
          {"task_report", task_report},       {"task_back", task_back},
          {"solve_correct", solve_correct},   {"wrong_confirm", wrong_confirm},
          {"wrong_report", wrong_report},     {"back_report", back_report},
          {"text_complete", text_complete},   {"text_report", text_report}};
}

const OutcomeParams& GroupBehavior::params(EmailCategory category, Pattern pattern) const {
  if (!is_phishing(category)) return legit;
  auto it = phish_by_pattern.find(pattern);
  return it == phish_by_pattern.end() ? phish : it->second;
}

BehaviorModel BehaviorModel::parse(const Json& j) {
  BehaviorModel model;
  model.max_attempts = j.value("max_attempts", 2);
  if (model.max_attempts < 1) throw std::invalid_argument("max_attempts must be positive");
  if (j.contains("solve_time")) {
    const auto& t = j.at("solve_time");
    model.solve_time_sigma = t.value("sigma", model.solve_time_sigma);
    if (t.contains("median_ms")) {
      for (auto& [key, value] : t.at("median_ms").items()) {
        auto kind = task_kind_from_string(key);
        if (!kind) throw std::invalid_argument("unknown task kind in solve_time: " + key);
        model.median_solve_ms[*kind] = value.get<double>();
      }
    }
  }
  for (auto& [name, g] : j.at("groups").items()) {
    auto group = group_from_string(name);
    if (!group) throw std::invalid_argument("unknown group: " + name);
    GroupBehavior behavior;
    if (g.contains("legit")) behavior.legit = OutcomeParams::parse(g.at("legit"));
    if (g.contains("phish")) behavior.phish = OutcomeParams::parse(g.at("phish"));
    if (g.contains("phish_by_pattern")) {
      for (auto& [key, value] : g.at("phish_by_pattern").items()) {
        auto pattern = pattern_from_string(key);
        if (!pattern || *pattern == Pattern::kNone) throw std::invalid_argument("unknown pattern: " + key);
        behavior.phish_by_pattern[*pattern] = OutcomeParams::parse(value, behavior.phish);
      }
    }
    model.groups[*group] = std::move(behavior);
  }
  return model;
}

BehaviorModel BehaviorModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open behavior model " + path);
  return parse(Json::parse(in));
}

ExpectedRates expected_rates(const OutcomeParams& p, Group group, int max_attempts) {
  ExpectedRates r;
  const double click = 1.0 - p.mailbox_report - p.ignore;
  r.report_mailbox = p.mailbox_report;
  r.unmanaged = p.ignore;
  if (group == Group::kControl) {
    r.visit = click;
    return r;
  }
  // Baseline tasks accept every answer.
  const double correct = group == Group::kInspection ? p.solve_correct : 1.0;
  const double solve = 1.0 - p.task_report - p.task_back;
  const double wrong_back = 1.0 - p.wrong_confirm - p.wrong_report;
  double reach = click;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    r.visit += reach * solve * (correct + (1 - correct) * p.wrong_confirm);
    r.report_task += reach * (p.task_report + solve * (1 - correct) * p.wrong_report);
    double back = reach * (p.task_back + solve * (1 - correct) * wrong_back);
    r.report_mailbox += back * p.back_report;
    reach = back * (1 - p.back_report);
  }
  r.unmanaged += reach;
  return r;
}

// ---- Mailbox log ----------------------------------------------------------

Json to_json(const MailboxRecord& r) {
  return {{"participant", r.participant},
          {"group", to_string(r.group)},
          {"email", r.email},
          {"category", to_string(r.category)},
          {"pattern", to_string(r.pattern)},
          {"kind", r.kind ? Json(to_string(*r.kind)) : Json(nullptr)},
          {"action", r.action},
          {"session", r.session ? Json(*r.session) : Json(nullptr)},
          {"attempts", r.attempts}};
}

MailboxRecord mailbox_record_from_json(const Json& j) {
  MailboxRecord r;
  r.participant = j.at("participant").get<std::string>();
  auto group = group_from_string(j.at("group").get<std::string>());
  auto category = email_category_from_string(j.at("category").get<std::string>());
  auto pattern = pattern_from_string(j.at("pattern").get<std::string>());
  if (!group || !category || !pattern) throw std::invalid_argument("bad mailbox record");
  r.group = *group;
  r.category = *category;
  r.pattern = *pattern;
  r.email = j.at("email").get<std::string>();
  if (!j.at("kind").is_null()) {
    r.kind = task_kind_from_string(j.at("kind").get<std::string>());
    if (!r.kind) throw std::invalid_argument("bad task kind in mailbox record");
  }
  r.action = j.at("action").get<std::string>();
  static const std::vector<std::string> kActions = {"completed", "reported", "visited", "none"};
  if (std::find(kActions.begin(), kActions.end(), r.action) == kActions.end())
    throw std::invalid_argument("bad mailbox action " + r.action);
  if (!j.at("session").is_null()) r.session = j.at("session").get<std::string>();
  r.attempts = j.value("attempts", 0);
  return r;
}

MailboxLogContents read_mailbox_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mailbox log " + path);
  MailboxLogContents out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto j = Json::parse(line, nullptr, false);
    if (first) {
      first = false;
      if (j.is_object() && j.contains("schema")) {
        if (j.at("schema") != kMailboxSchema) throw std::runtime_error(path + " is not a mailbox log");
        continue;
      }
    }
    try {
      if (j.is_discarded()) throw std::invalid_argument("not json");
      out.records.push_back(mailbox_record_from_json(j));
    } catch (const std::exception&) {
      ++out.corrupt_lines;
    }
  }
  return out;
}

// ---- Simulated agents -----------------------------------------------------

namespace {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::unique_ptr<httplib::Client> client;
};

struct AgentContext {
  const Corpus& corpus;
  const BehaviorModel& model;
  const std::vector<BrandProfile>& brands;
  std::map<Group, Endpoint> endpoints;
  std::atomic<size_t>& requests;
  std::atomic<size_t>& clicks;
};

std::string relative_path(std::string_view link, std::string_view base) {
  if (link.starts_with(base)) link.remove_prefix(base.size());
  return std::string(link);
}

// First href of an HTML fragment.
std::string first_href(const std::string& html) {
  auto pos = html.find("href=\"");
  if (pos == std::string::npos) throw std::logic_error("no link in email body");
  pos += 6;
  return html.substr(pos, html.find('"', pos) - pos);
}

class Agent {
 public:
  Agent(AgentContext& ctx, const ParticipantPlan& plan)
      : ctx_(ctx), plan_(plan), rng_(plan.seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL) {}

  MailboxRecord handle(const PlannedEmail& email) {
    MailboxRecord rec;
    rec.participant = plan_.participant_id;
    rec.group = plan_.group;
    rec.email = email.email_id;
    rec.category = email.category;
    rec.pattern = email.pattern;
    rec.kind = email.kind;

    const GroupBehavior& behavior = behavior_for(plan_.group);
    const OutcomeParams& p = behavior.params(email.category, email.pattern);

    if (!email.url) {
      double u = uniform(rng_);
      rec.action = u < p.text_complete ? "completed" : u < p.text_complete + p.text_report ? "reported" : "none";
      return rec;
    }

    double u = uniform(rng_);
    if (u < p.mailbox_report) {
      rec.action = "reported";
      return rec;
    }
    if (u < p.mailbox_report + p.ignore) {
      rec.action = "none";
      return rec;
    }
    if (plan_.group == Group::kControl) {
      rec.action = "visited";
      ++ctx_.clicks;
      return rec;
    }

    Endpoint& ep = ctx_.endpoints.at(plan_.group);
    const EmailSpec* spec = find_email(email.email_id);
    std::string body = spec ? spec->body : "{link}";
    auto slot = body.find("{link}");
    std::string anchor = "<a href=\"https://" + *email.url + "\">" + *email.url + "</a>";
    std::string html = slot == std::string::npos ? anchor : body.replace(slot, 6, anchor);
    std::string link = relative_path(first_href(rewrite_links(html, ep.base).html), ep.base);
    link += "&participant=" + url_encode(plan_.participant_id) + "&email=" + url_encode(email.email_id) +
            "&group=" + url_encode(to_string(plan_.group));
    if (email.kind) link += "&kind=" + std::string(to_string(*email.kind));

    ParsedUrl target = parse_url(*email.url);
    auto verdict = classify(target, ctx_.brands);
    std::optional<std::string> cookie;
    rec.action = "none";

    for (int attempt = 1; attempt <= ctx_.model.max_attempts; ++attempt) {
      rec.attempts = attempt;
      ++ctx_.clicks;
      httplib::Headers headers;
      if (cookie) headers.emplace("Cookie", std::string(kSessionCookieName) + "=" + *cookie);
      auto res = call(ep, [&] { return ep.client->Get(link, headers); });
      if (res->status == 302) {  // allowlisted
        rec.action = "visited";
        return rec;
      }
      auto page = expect_json(*res, 200, "inspect");
      std::string session = page.at("session_id").get<std::string>();
      cookie = session;
      rec.session = session;
      TaskKind kind = *task_kind_from_string(page.at("task").at("kind").get<std::string>());

      double t = uniform(rng_);
      bool back;
      if (t < p.task_report) {
        post(ep, session, "report");
        return rec;
      } else if (t < p.task_report + p.task_back) {
        back = true;
      } else {
        bool correct = is_baseline(kind) || uniform(rng_) < p.solve_correct;
        std::string answer = correct ? target.registrable_domain : wrong_answer(target, verdict, page);
        auto elapsed = static_cast<int64_t>(solve_time(kind));
        httplib::Params form = {{"answer", answer}, {"elapsed_ms", std::to_string(elapsed)}};
        auto ares = call(ep, [&] { return ep.client->Post("/session/" + session + "/answer", form); });
        auto result = expect_json(*ares, 200, "answer");
        if (result.at("outcome") == "correct") {
          proceed(ep, result.at("proceed_url").get<std::string>());
          return rec;
        }
        double m = uniform(rng_);
        if (m < p.wrong_confirm) {
          auto confirm = expect_json(*post(ep, session, "confirm"), 200, "confirm");
          proceed(ep, confirm.at("proceed_url").get<std::string>());
          return rec;
        }
        if (m < p.wrong_confirm + p.wrong_report) {
          post(ep, session, "report");
          return rec;
        }
        back = true;
      }
      if (back) {
        post(ep, session, "back");
        if (uniform(rng_) < p.back_report) {
          rec.action = "reported";
          return rec;
        }
      }
    }
    return rec;
  }

 private:
  static constexpr std::string_view kSessionCookieName = "lg_session";

  const GroupBehavior& behavior_for(Group g) const {
    auto it = ctx_.model.groups.find(g);
    if (it == ctx_.model.groups.end())
      throw std::invalid_argument("behavior model has no group " + std::string(to_string(g)));
    return it->second;
  }

  const EmailSpec* find_email(const std::string& id) const {
    for (const auto& e : ctx_.corpus.emails)
      if (e.id == id) return &e;
    return nullptr;
  }

  double solve_time(TaskKind kind) {
    double median = ctx_.model.median_solve_ms.at(kind);
    if (ctx_.model.solve_time_sigma <= 0) return median;
    std::normal_distribution<double> n(0.0, ctx_.model.solve_time_sigma);
    return median * std::exp(n(rng_));
  }

  // An answer the validator rejects, shaped like the usual mistakes.
  std::string wrong_answer(const ParsedUrl& target, const ImpersonationVerdict& verdict, const Json& page) {
    const auto& task = page.at("task");
    std::vector<std::string> options;
    if (verdict.matched_domain && *verdict.matched_domain != target.registrable_domain)
      options.push_back(*verdict.matched_domain);
    if (target.host() != target.registrable_domain) options.push_back(target.host());
    options.push_back(target.domain_label());
    if (task.at("kind") == "click") {
      std::vector<std::string> others;
      for (const auto& c : task.at("candidates"))
        if (c != target.registrable_domain) others.push_back(c.get<std::string>());
      for (const auto& o : options)
        if (std::find(others.begin(), others.end(), o) != others.end()) return o;
      return others.empty() ? target.domain_label() : others.front();
    }
    return options.front();
  }

  template <class F>
  httplib::Result call(Endpoint& ep, F&& f) {
    ++ctx_.requests;
    auto res = f();
    if (!res) throw GatewayUnreachable(ep.base + ": " + httplib::to_string(res.error()));
    return res;
  }

  httplib::Result post(Endpoint& ep, const std::string& session, const std::string& action) {
    auto res = call(ep, [&] { return ep.client->Post("/session/" + session + "/" + action); });
    if (res->status != 200) expect_json(*res, 200, action);
    return res;
  }

  void proceed(Endpoint& ep, const std::string& path) {
    auto res = call(ep, [&] { return ep.client->Get(path); });
    if (res->status != 302) throw std::runtime_error("proceed returned " + std::to_string(res->status));
  }

  static Json expect_json(const httplib::Response& res, int status, std::string_view what) {
    if (res.status != status)
      throw std::runtime_error(std::string(what) + " returned " + std::to_string(res.status) + ": " + res.body);
    return Json::parse(res.body);
  }

  AgentContext& ctx_;
  const ParticipantPlan& plan_;
  std::mt19937_64 rng_;
};

std::unique_ptr<httplib::Client> make_client(const std::string& base) {
  auto client = std::make_unique<httplib::Client>(base);
  client->set_keep_alive(true);
  client->set_tcp_nodelay(true);
  client->set_connection_timeout(5);
  client->set_read_timeout(30);
  return client;
}

}  // namespace

SimulationStats run_simulated_agents(const std::vector<ParticipantPlan>& plans, const Corpus& corpus,
                                     const BehaviorModel& model, const SimulationOptions& options,
                                     FileEventLog& mailbox_log) {
  for (const auto& [group, base] : options.endpoints) {
    auto client = make_client(base);
    auto res = client->Get("/healthz");
    if (!res || res->status != 200) throw GatewayUnreachable("gateway for " + std::string(to_string(group)) +
                                                             " not reachable at " + base);
  }
  for (const auto& plan : plans) {
    if (plan.group != Group::kControl && !options.endpoints.count(plan.group))
      throw std::invalid_argument("no gateway endpoint for group " + std::string(to_string(plan.group)));
    if (!model.groups.count(plan.group))
      throw std::invalid_argument("behavior model has no group " + std::string(to_string(plan.group)));
  }

  const auto brands = corpus.brands();
  std::atomic<size_t> next{0}, requests{0}, clicks{0}, emails{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    AgentContext ctx{corpus, model, brands, {}, requests, clicks};
    for (const auto& [group, base] : options.endpoints) ctx.endpoints[group] = {base, make_client(base)};
    try {
      for (size_t i = next++; i < plans.size(); i = next++) {
        Agent agent(ctx, plans[i]);
        for (const auto& email : plans[i].emails) {
          mailbox_log.append_line(to_json(agent.handle(email)).dump());
          ++emails;
        }
      }
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      next = plans.size();
    }
  };

  size_t threads = std::max<size_t>(1, std::min(options.threads, plans.size()));
  std::vector<std::thread> pool;
  for (size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  SimulationStats stats;
  stats.agents = plans.size();
  stats.emails = emails;
  stats.link_clicks = clicks;
  stats.http_requests = requests;
  return stats;
}

// ---- Aggregation ----------------------------------------------------------

Json RateCell::to_json() const {
  return {{"emails", emails},
          {"visit", visit},
          {"completed", completed},
          {"report", report()},
          {"report_task", report_task},
          {"report_mailbox", report_mailbox},
          {"unmanaged", unmanaged},
          {"visit_rate", rate(visit)},
          {"report_rate", rate(report())}};
}

Json PhaseCell::to_json() const {
  return {{"tasks", tasks},
          {"solved", solved},
          {"wrong", wrong},
          {"report", report},
          {"back", back},
          {"open", open},
          {"mistake_pages", mistake_pages},
          {"confirm", confirm},
          {"mistake_report", mistake_report},
          {"mistake_back", mistake_back},
          {"mistake_open", mistake_open}};
}

Quantiles quantiles(std::vector<double> values) {
  Quantiles q;
  q.count = values.size();
  if (values.empty()) return q;
  std::sort(values.begin(), values.end());
  auto at = [&](double prob) {
    double h = prob * static_cast<double>(values.size() - 1);
    auto lo = static_cast<size_t>(std::floor(h));
    size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  q.p25 = at(0.25);
  q.median = at(0.5);
  q.p75 = at(0.75);
  return q;
}

namespace {

enum class EmailResult { kVisit, kCompleted, kReportTask, kReportMailbox, kUnmanaged };

void count(RateCell& cell, EmailResult r) {
  ++cell.emails;
  switch (r) {
    case EmailResult::kVisit: ++cell.visit; break;
    case EmailResult::kCompleted: ++cell.completed; break;
    case EmailResult::kReportTask: ++cell.report_task; break;
    case EmailResult::kReportMailbox: ++cell.report_mailbox; break;
    case EmailResult::kUnmanaged: ++cell.unmanaged; break;
  }
}

struct SessionSummary {
  std::map<std::string, std::string> tags;
  Pattern pattern = Pattern::kNone;
  std::optional<TaskKind> first_kind;
  std::optional<SessionState> state;
};

Pattern verdict_pattern(const Json& payload) {
  if (!payload.contains("verdict")) return Pattern::kNone;
  auto p = pattern_from_string(payload.at("verdict").value("pattern", "none"));
  return p ? *p : Pattern::kNone;
}

std::string category_key(Pattern p) { return p == Pattern::kNone ? "legit" : "phish"; }

std::string pattern_key(const std::string& group, std::optional<TaskKind> kind) {
  if (group == "inspection" && kind) return std::string(to_string(*kind));
  return group;
}

}  // namespace

MetricsReport aggregate(const std::vector<SessionEvent>& events, const std::vector<MailboxRecord>& mailbox,
                        size_t corrupt_lines) {
  MetricsReport report;
  report.corrupt_lines = corrupt_lines;
  auto replayed = replay_sessions(events);

  std::map<std::string, SessionSummary> sessions;
  std::map<std::string, std::vector<double>> times;
  for (const auto& [id, rs] : replayed) {
    if (!rs.valid) {
      ++report.excluded_sessions;
      continue;
    }
    SessionSummary summary;
    summary.state = rs.state;

    // Walk attempts: each TaskServed opens a task phase, MistakeShown a mistake phase.
    PhaseCell* phase = nullptr;
    enum class Stage { kNone, kTask, kMistake } stage = Stage::kNone;
    auto close_open = [&] {
      if (!phase) return;
      if (stage == Stage::kTask) ++phase->open;
      if (stage == Stage::kMistake) ++phase->mistake_open;
      stage = Stage::kNone;
    };
    std::string category = "legit";
    for (const auto& e : rs.events) {
      switch (e.kind) {
        case EventKind::kLinkClicked:
          if (summary.tags.empty() && e.payload.contains("tags") && e.payload.at("tags").is_object())
            for (auto& [k, v] : e.payload.at("tags").items())
              if (v.is_string()) summary.tags[k] = v.get<std::string>();
          break;
        case EventKind::kTaskServed: {
          close_open();
          summary.pattern = verdict_pattern(e.payload);
          category = category_key(summary.pattern);
          auto kind = task_kind_from_string(e.payload.at("task").value("kind", ""));
          if (!summary.first_kind) summary.first_kind = kind;
          phase = &report.phases[category][kind ? std::string(to_string(*kind)) : "unknown"];
          ++phase->tasks;
          stage = Stage::kTask;
          break;
        }
        case EventKind::kAnswerSubmitted: {
          const auto& result = e.payload.at("result");
          bool correct = result.value("outcome", "") == "correct";
          if (phase && stage == Stage::kTask) {
            ++(correct ? phase->solved : phase->wrong);
            stage = correct ? Stage::kNone : Stage::kTask;
          }
          if (!correct && result.contains("mistake") && result.at("mistake").is_string())
            if (auto m = mistake_from_string(result.at("mistake").get<std::string>()))
              ++report.mistakes[category][*m];
          const auto& elapsed = e.payload.value("elapsed_ms", Json(nullptr));
          const auto& server = e.payload.value("server_elapsed_ms", Json(nullptr));
          double ms = elapsed.is_number() ? elapsed.get<double>() : server.is_number() ? server.get<double>() : -1;
          if (elapsed.is_number() && server.is_number() && elapsed.get<double>() > server.get<double>())
            ++report.time_bound_violations;
          if (ms >= 0) times[e.payload.value("kind", "unknown")].push_back(ms);
          if (!correct) stage = Stage::kNone;
          break;
        }
        case EventKind::kMistakeShown:
          if (phase) ++phase->mistake_pages;
          stage = Stage::kMistake;
          break;
        case EventKind::kProceedConfirmed:
          if (phase && stage == Stage::kMistake) ++phase->confirm;
          stage = Stage::kNone;
          break;
        case EventKind::kReported:
          if (phase && stage == Stage::kTask) ++phase->report;
          if (phase && stage == Stage::kMistake) ++phase->mistake_report;
          stage = Stage::kNone;
          break;
        case EventKind::kReturnedToMailbox:
          if (phase && stage == Stage::kTask) ++phase->back;
          if (phase && stage == Stage::kMistake) ++phase->mistake_back;
          stage = Stage::kNone;
          break;
      }
    }
    close_open();
    sessions[id] = std::move(summary);
  }
  report.sessions = sessions.size();
  for (auto& [kind, values] : times) report.solving_ms[kind] = quantiles(std::move(values));

  auto session_result = [](const SessionSummary& s) {
    if (s.state == SessionState::kProceeded) return EmailResult::kVisit;
    if (s.state == SessionState::kReported) return EmailResult::kReportTask;
    return EmailResult::kUnmanaged;
  };

  auto record = [&](const std::string& group, bool text_only, bool phish, Pattern pattern,
                    std::optional<TaskKind> kind, EmailResult result) {
    auto& row = report.by_group[group];
    count(text_only ? row.text_only : phish ? row.phish : row.legit_link, result);
    if (phish) count(report.by_pattern[pattern_key(group, kind)][pattern], result);
  };

  if (mailbox.empty()) {
    for (const auto& [id, s] : sessions) {
      auto it = s.tags.find("group");
      std::string group = it == s.tags.end() ? "inspection" : it->second;
      bool phish = s.pattern != Pattern::kNone;
      record(group, false, phish, s.pattern, s.first_kind, session_result(s));
    }
    return report;
  }

  for (const auto& r : mailbox) {
    EmailResult result;
    if (r.session) {
      auto it = sessions.find(*r.session);
      if (it == sessions.end()) {
        if (!replayed.count(*r.session)) ++report.excluded_sessions;
        continue;
      }
      result = session_result(it->second);
      if (result == EmailResult::kUnmanaged && r.action == "reported") result = EmailResult::kReportMailbox;
    } else if (r.action == "visited") {
      result = EmailResult::kVisit;
    } else if (r.action == "completed") {
      result = EmailResult::kCompleted;
    } else if (r.action == "reported") {
      result = EmailResult::kReportMailbox;
    } else {
      result = EmailResult::kUnmanaged;
    }
    record(std::string(to_string(r.group)), r.category == EmailCategory::kGroup, is_phishing(r.category),
           r.pattern, r.kind, result);
  }
  return report;
}

Json MetricsReport::to_json() const {
  Json j;
  j["sessions"] = sessions;
  j["excluded_sessions"] = excluded_sessions;
  j["corrupt_lines"] = corrupt_lines;
  j["time_bound_violations"] = time_bound_violations;
  Json groups = Json::object();
  for (const auto& [g, row] : by_group)
    groups[g] = {{"text_only", row.text_only.to_json()},
                 {"legit_link", row.legit_link.to_json()},
                 {"phish", row.phish.to_json()}};
  j["by_group"] = groups;
  Json patterns = Json::object();
  for (const auto& [key, cells] : by_pattern)
    for (const auto& [p, cell] : cells) patterns[key][std::string(linkgate::to_string(p))] = cell.to_json();
  j["by_pattern"] = patterns;
  Json phase_json = Json::object();
  for (const auto& [cat, kinds] : phases)
    for (const auto& [kind, cell] : kinds) phase_json[cat][kind] = cell.to_json();
  j["phases"] = phase_json;
  Json mistake_json = Json::object();
  for (const auto& [cat, counts] : mistakes)
    for (const auto& [m, n] : counts) mistake_json[cat][std::string(linkgate::to_string(m))] = n;
  j["mistakes"] = mistake_json;
  Json time_json = Json::object();
  for (const auto& [kind, q] : solving_ms)
    time_json[kind] = {{"count", q.count}, {"p25", q.p25}, {"median", q.median}, {"p75", q.p75}};
  j["solving_ms"] = time_json;
  return j;
}

std::string MetricsReport::summary() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  auto pct = [](const RateCell& c, size_t n) { return 100.0 * c.rate(n); };
  out << "group        cell        emails  visit%  report%\n";
  for (const auto& [g, row] : by_group) {
    for (auto [name, cell] : {std::pair{"text", &row.text_only}, std::pair{"legit", &row.legit_link},
                              std::pair{"phish", &row.phish}}) {
      if (!cell->emails) continue;
      out << std::left << std::setw(13) << g << std::setw(12) << name << std::right << std::setw(6)
          << cell->emails << std::setw(8) << pct(*cell, cell->visit + cell->completed) << std::setw(9)
          << pct(*cell, cell->report()) << "\n";
    }
  }
  if (!solving_ms.empty()) {
    out << "solving time (ms)  n  p25  median  p75\n";
    for (const auto& [kind, q] : solving_ms)
      out << "  " << kind << "  " << q.count << "  " << q.p25 << "  " << q.median << "  " << q.p75 << "\n";
  }
  out << "sessions " << sessions << ", excluded " << excluded_sessions << ", corrupt lines " << corrupt_lines
      << "\n";
  return out.str();
}

}  // namespace linkgate

namespace linkgate {

std::vector<std::string> draw_preferences(const Corpus& corpus, std::mt19937_64& rng) {
  auto ids = corpus.sampling_services();
  std::shuffle(ids.begin(), ids.end(), rng);
  if (ids.size() <= kServiceLegitEmails) return ids;
  size_t n = std::uniform_int_distribution<size_t>(kServiceLegitEmails, ids.size())(rng);
  ids.resize(n);
  return ids;
}

Json StudyResult::to_json() const {
  Json j = report.to_json();
  Json exp = Json::object();
  for (const auto& [g, rates] : expected) {
    auto cell = [](const ExpectedRates& r) {
      return Json{{"visit", r.visit}, {"report", r.report()}, {"report_task", r.report_task},
                  {"report_mailbox", r.report_mailbox}, {"unmanaged", r.unmanaged}};
    };
    exp[std::string(linkgate::to_string(g))] = {{"legit_link", cell(rates.first)}, {"phish", cell(rates.second)}};
  }
  j["expected"] = exp;
  j["simulation"] = {{"agents", stats.agents}, {"emails", stats.emails},
                     {"link_clicks", stats.link_clicks}, {"http_requests", stats.http_requests}};
  return j;
}

StudyResult run_study(const Corpus& corpus, const BehaviorModel& model, const StudyOptions& options) {
  namespace fs = std::filesystem;
  std::vector<Group> groups = options.groups;
  if (groups.empty())
    for (const auto& [g, behavior] : model.groups) groups.push_back(g);
  fs::create_directories(options.out_dir);

  StudyResult out;
  std::vector<std::unique_ptr<Gateway>> gateways;
  std::vector<std::unique_ptr<HttpGateway>> servers;
  SimulationOptions sim;
  sim.threads = options.threads;
  sim.seed = options.seed;
  for (Group g : groups) {
    if (!model.groups.count(g))
      throw std::invalid_argument("behavior model has no group " + std::string(to_string(g)));
    if (g == Group::kControl) continue;
    GatewayConfig config;
    config.port = 0;
    config.allow_kind_override = true;
    config.fsync = false;
    config.seed = options.seed * 31 + static_cast<uint64_t>(g) + 1;
    config.event_log_path = (fs::path(options.out_dir) / ("events-" + std::string(to_string(g)) + ".jsonl")).string();
    fs::remove(config.event_log_path);
    auto log = std::make_shared<FileEventLog>(config.event_log_path, false);
    gateways.push_back(std::make_unique<Gateway>(config, corpus.brands(), Allowlist{}, log));
    servers.push_back(std::make_unique<HttpGateway>(*gateways.back()));
    int port = servers.back()->bind(config.listen_host, 0);
    if (port < 0) throw GatewayUnreachable("cannot bind a port for the " + std::string(to_string(g)) + " gateway");
    servers.back()->start();
    sim.endpoints[g] = "http://" + config.listen_host + ":" + std::to_string(port);
    out.event_logs.push_back(config.event_log_path);
  }

  std::mt19937_64 rng(options.seed);
  std::vector<ParticipantPlan> plans;
  for (Group g : groups) {
    for (size_t i = 0; i < options.participants_per_group; ++i) {
      auto prefs = draw_preferences(corpus, rng);
      plans.push_back(sample_plan(corpus, prefs, g, rng(), std::string(to_string(g)) + "-" + std::to_string(i)));
    }
  }

  out.mailbox_log = (fs::path(options.out_dir) / "mailbox.jsonl").string();
  fs::remove(out.mailbox_log);
  {
    FileEventLog mailbox(out.mailbox_log, false, kMailboxSchema);
    out.stats = run_simulated_agents(plans, corpus, model, sim, mailbox);
  }
  for (auto& s : servers) s->stop();

  std::vector<SessionEvent> events;
  size_t corrupt = 0;
  for (const auto& path : out.event_logs) {
    auto contents = read_event_log(path);
    corrupt += contents.corrupt_lines;
    events.insert(events.end(), contents.events.begin(), contents.events.end());
  }
  auto mailbox = read_mailbox_log(out.mailbox_log);
  out.report = aggregate(events, mailbox.records, corrupt + mailbox.corrupt_lines);

  for (Group g : groups) {
    const auto& behavior = model.groups.at(g);
    ExpectedRates phish;
    for (Pattern p : kPhishingPatterns) {
      auto r = expected_rates(behavior.params(EmailCategory::kServicePhish, p), g, model.max_attempts);
      phish.visit += r.visit / 5;
      phish.report_task += r.report_task / 5;
      phish.report_mailbox += r.report_mailbox / 5;
      phish.unmanaged += r.unmanaged / 5;
    }
    out.expected[g] = {expected_rates(behavior.legit, g, model.max_attempts), phish};
  }
  return out;
}

}  // namespace linkgate
