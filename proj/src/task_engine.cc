#include "linkgate/task_engine.h"

#include <algorithm>
#include <array>
#include <random>

#include "linkgate/serialization.h"

namespace linkgate {

namespace {

constexpr std::array<std::string_view, 12> kLureKeywords = {
    "login", "secure", "signin", "account", "verify", "update",
    "auth",  "support", "service", "online", "my", "web",
};

// Minimum plausible typing time per character.
constexpr int64_t kMinMsPerChar = 30;

bool is_lure_keyword(std::string_view word) {
  return std::find(kLureKeywords.begin(), kLureKeywords.end(), word) != kLureKeywords.end();
}

// Contiguous runs of subdomain labels, joined with dots.
std::vector<std::string> subdomain_runs(const ParsedUrl& url) {
  std::vector<std::string> out;
  const auto& subs = url.subdomains;
  for (size_t i = 0; i < subs.size(); ++i)
    for (size_t j = i + 1; j <= subs.size(); ++j)
      out.push_back(join({subs.begin() + static_cast<long>(i), subs.begin() + static_cast<long>(j)},
                         "."));
  return out;
}

bool is_subdomain_chain_of(const std::string& answer, const ParsedUrl& url) {
  const std::string tail = "." + url.registrable_domain;
  if (answer.size() <= tail.size() || !answer.ends_with(tail)) return false;
  const std::string chain = answer.substr(0, answer.size() - tail.size());
  const std::string full = url.subdomain_chain();
  return chain == full || (full.size() > chain.size() && full.ends_with("." + chain));
}

// True when the answer names a domain embedded in the URL other than the
// target: a subdomain label or a path word.
bool names_embedded_domain(const std::string& answer, const ParsedUrl& url) {
  ParsedUrl parsed;
  try {
    parsed = parse_url(answer);
  } catch (const UrlError&) {
    return false;
  }
  if (!parsed.path.empty() || parsed.registrable_domain == url.registrable_domain) return false;
  const auto label = parsed.domain_label();
  if (std::find(url.subdomains.begin(), url.subdomains.end(), label) != url.subdomains.end())
    return true;
  return (url.path + url.query_fragment).find(parsed.host()) != std::string::npos;
}

Mistake classify_mistake(const TaskInstance& task, const std::string& answer,
                         const ImpersonationVerdict& verdict) {
  const ParsedUrl& url = task.target;
  const std::string& target = url.registrable_domain;

  if (answer.find_first_of("/?#") != std::string::npos || answer == url.host() ||
      is_subdomain_chain_of(answer, url))
    return Mistake::kFullUrlOrParts;

  if (verdict.matched_domain && answer == *verdict.matched_domain && answer != target)
    return verdict.pattern == Pattern::kSquat ? Mistake::kTyposquatUnnoticed
                                              : Mistake::kImpersonatedBrandDomain;

  if (verdict.pattern != Pattern::kSquat && diff_feedback(answer, target).size() <= 1)
    return Mistake::kMinorError;

  auto runs = subdomain_runs(url);
  if (std::find(runs.begin(), runs.end(), answer) != runs.end()) return Mistake::kSubdomainOnly;

  if (!verdict.matched_domain && names_embedded_domain(answer, url))
    return Mistake::kImpersonatedBrandDomain;
  return Mistake::kOther;
}

std::vector<std::string> reorder_pieces(const UrlRenderModel& model) {
  std::vector<std::string> pieces;
  for (const auto& seg : model.segments) {
    std::string cur;
    for (char c : seg.text) {
      cur += c;
      if (c == '.') {
        pieces.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) pieces.push_back(std::move(cur));
  }
  return pieces;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kClick: return "click";
    case TaskKind::kHighlight: return "highlight";
    case TaskKind::kType: return "type";
    case TaskKind::kPassiveConfirm: return "passive";
    case TaskKind::kActiveReorder: return "active";
  }
  return "highlight";
}

std::optional<TaskKind> task_kind_from_string(std::string_view name) {
  for (auto k : {TaskKind::kClick, TaskKind::kHighlight, TaskKind::kType,
                 TaskKind::kPassiveConfirm, TaskKind::kActiveReorder})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::string_view to_string(Outcome outcome) {
  return outcome == Outcome::kCorrect ? "correct" : "mismatch";
}

std::string_view to_string(Mistake mistake) {
  switch (mistake) {
    case Mistake::kFullUrlOrParts: return "full_url_or_parts";
    case Mistake::kImpersonatedBrandDomain: return "impersonated_brand_domain";
    case Mistake::kMinorError: return "minor_error";
    case Mistake::kTyposquatUnnoticed: return "typosquat_unnoticed";
    case Mistake::kSubdomainOnly: return "subdomain_only";
    case Mistake::kOther: return "other";
  }
  return "other";
}

std::optional<Mistake> mistake_from_string(std::string_view name) {
  for (auto m : {Mistake::kFullUrlOrParts, Mistake::kImpersonatedBrandDomain, Mistake::kMinorError,
                 Mistake::kTyposquatUnnoticed, Mistake::kSubdomainOnly, Mistake::kOther})
    if (to_string(m) == name) return m;
  return std::nullopt;
}

std::string_view to_string(DiffOp op) {
  switch (op) {
    case DiffOp::kInsert: return "insert";
    case DiffOp::kDelete: return "delete";
    case DiffOp::kSubstitute: return "substitute";
    case DiffOp::kTranspose: return "transpose";
  }
  return "substitute";
}

std::string_view to_string(MistakeAction action) {
  switch (action) {
    case MistakeAction::kConfirmProceed: return "confirm";
    case MistakeAction::kReport: return "report";
    case MistakeAction::kBack: return "back";
  }
  return "back";
}

std::vector<std::string> click_candidates(const ParsedUrl& url) {
  std::vector<std::string> out{url.registrable_domain};
  auto add = [&out](std::string candidate) {
    if (std::find(out.begin(), out.end(), candidate) == out.end()) out.push_back(std::move(candidate));
  };

  auto pieces = split(url.domain_label(), '-');
  // "paypal.com-login.com" reads as paypal.com followed by noise.
  const bool suffix_lead = pieces.size() >= 2 && is_known_suffix(pieces.front());
  if (!url.subdomains.empty()) {
    if (suffix_lead)
      add(url.subdomain_chain() + "." + pieces.front());
    else
      add(url.host());
  }

  if (pieces.size() >= 2 && !suffix_lead) {
    std::vector<std::string> kept;
    for (auto& p : pieces)
      if (!is_lure_keyword(p)) kept.push_back(p);
    if (!kept.empty() && kept.size() < pieces.size())
      add(join(kept, "-") + "." + url.public_suffix);
  }

  if (url.path.size() > 1) {
    auto end = url.path.find('/', 1);
    auto first = url.path.substr(1, end == std::string::npos ? std::string::npos : end - 1);
    try {
      auto embedded = parse_url(first);
      if (is_known_suffix(embedded.public_suffix) && embedded.path.empty() &&
          embedded.query_fragment.empty())
        add(embedded.host());
    } catch (const UrlError&) {
    }
  }
  return out;
}

TaskInstance build_task(const ParsedUrl& url, TaskKind kind, uint64_t seed) {
  TaskInstance task;
  task.kind = kind;
  task.target = url;
  task.render = render_segments(url);
  task.rng_seed = seed;
  std::mt19937_64 rng(seed);
  if (kind == TaskKind::kClick) {
    task.click_candidates = click_candidates(url);
    if (task.click_candidates.size() < 2)
      throw ClickUnavailable("no alternative domains to offer for " + url.host());
    std::shuffle(task.click_candidates.begin(), task.click_candidates.end(), rng);
  } else if (kind == TaskKind::kActiveReorder) {
    task.reorder_pieces = reorder_pieces(task.render);
    std::shuffle(task.reorder_pieces.begin(), task.reorder_pieces.end(), rng);
  }
  return task;
}

ValidationResult validate(const TaskInstance& task, std::string_view answer,
                          const ValidationPolicy& policy, const ImpersonationVerdict& verdict,
                          std::optional<int64_t> elapsed_ms) {
  ValidationResult result;
  if (is_baseline(task.kind)) return result;

  std::string_view raw = trim(answer);
  if (task.kind == TaskKind::kHighlight) {
    while (!raw.empty() && raw.front() == '.') raw.remove_prefix(1);
    while (!raw.empty() && raw.back() == '.') raw.remove_suffix(1);
  }
  result.answer = normalize_domain_answer(raw);
  const std::string& target = task.target.registrable_domain;

  bool correct = result.answer == target;
  if (!correct && task.kind != TaskKind::kClick &&
      policy.subdomain_tolerance == SubdomainTolerance::kAllowSubdomainChains)
    correct = is_subdomain_chain_of(result.answer, task.target);

  if (task.kind == TaskKind::kType && elapsed_ms &&
      *elapsed_ms < static_cast<int64_t>(result.answer.size()) * kMinMsPerChar)
    result.implausibly_fast = true;

  if (correct) return result;

  result.outcome = Outcome::kMismatch;
  if (result.answer.empty()) {
    result.empty_answer = true;
    result.mistake = Mistake::kOther;
  } else {
    result.mistake = classify_mistake(task, result.answer, verdict);
  }
  if (task.kind == TaskKind::kType) result.diff = diff_feedback(result.answer, target);
  return result;
}

std::vector<DiffSpan> diff_feedback(std::string_view a, std::string_view b) {
  const size_t n = a.size(), m = b.size();
  std::vector<std::vector<size_t>> d(n + 1, std::vector<size_t>(m + 1));
  for (size_t i = 0; i <= n; ++i) d[i][0] = i;
  for (size_t j = 0; j <= m; ++j) d[0][j] = j;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
      if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1])
        d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
    }
  }

  std::vector<DiffSpan> spans;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && a[i - 1] == b[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      --i, --j;
    } else if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] &&
               a[i - 1] != a[i - 2] && d[i][j] == d[i - 2][j - 2] + 1) {
      spans.push_back({DiffOp::kTranspose, i - 2, 2, j - 2, 2});
      i -= 2, j -= 2;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      spans.push_back({DiffOp::kSubstitute, i - 1, 1, j - 1, 1});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      spans.push_back({DiffOp::kDelete, i - 1, 1, j, 0});
      --i;
    } else {
      spans.push_back({DiffOp::kInsert, i, 0, j - 1, 1});
      --j;
    }
  }
  std::reverse(spans.begin(), spans.end());
  return spans;
}

std::string apply_diff(std::string_view answer, std::string_view domain,
                       const std::vector<DiffSpan>& spans) {
  std::string out;
  size_t pos = 0;
  for (const auto& s : spans) {
    out.append(answer.substr(pos, s.answer_pos - pos));
    out.append(domain.substr(s.domain_pos, s.domain_len));
    pos = s.answer_pos + s.answer_len;
  }
  out.append(answer.substr(pos));
  return out;
}

MistakePage mistake_page_model(const ValidationResult& result, const TaskInstance& task,
                               const StringTable& strings) {
  if (result.outcome != Outcome::kMismatch)
    throw std::logic_error("mistake page requested for a correct answer");
  MistakePage page;
  page.original_domain = task.target.registrable_domain;
  page.answer = result.answer;
  page.diff = result.diff;
  page.actions = {MistakeAction::kConfirmProceed, MistakeAction::kReport, MistakeAction::kBack};
  page.title = strings.get("mistake.title");
  page.message = strings.format("mistake.body",
                                {{"answer", page.answer}, {"domain", page.original_domain}});
  if (page.diff && !page.diff->empty()) page.message += " " + strings.get("mistake.diff");
  return page;
}

std::string serialize_task(const TaskInstance& task) { return to_json(task).dump(); }

std::string serialize_result(const ValidationResult& result) { return to_json(result).dump(); }

}  // namespace linkgate
