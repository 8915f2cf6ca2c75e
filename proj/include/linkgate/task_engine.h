#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linkgate/impersonation.h"
#include "linkgate/strings.h"
#include "linkgate/url_model.h"

namespace linkgate {

// Click/Highlight/Type are inspection tasks; the other two are baselines
// that cannot be solved incorrectly.
enum class TaskKind { kClick, kHighlight, kType, kPassiveConfirm, kActiveReorder };

std::string_view to_string(TaskKind kind);
std::optional<TaskKind> task_kind_from_string(std::string_view name);
inline bool is_baseline(TaskKind kind) {
  return kind == TaskKind::kPassiveConfirm || kind == TaskKind::kActiveReorder;
}

class ClickUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TaskInstance {
  TaskKind kind = TaskKind::kHighlight;
  ParsedUrl target;
  std::vector<std::string> click_candidates;  // Click only, seeded order
  std::vector<std::string> reorder_pieces;    // ActiveReorder only, seeded order
  UrlRenderModel render;
  uint64_t rng_seed = 0;
};

enum class SubdomainTolerance { kDomainOnly, kAllowSubdomainChains };

struct ValidationPolicy {
  SubdomainTolerance subdomain_tolerance = SubdomainTolerance::kDomainOnly;
  bool case_insensitive = true;
};

enum class Outcome { kCorrect, kMismatch };

enum class Mistake {
  kFullUrlOrParts,
  kImpersonatedBrandDomain,
  kMinorError,
  kTyposquatUnnoticed,
  kSubdomainOnly,
  kOther,
};

std::string_view to_string(Outcome outcome);
std::string_view to_string(Mistake mistake);
std::optional<Mistake> mistake_from_string(std::string_view name);

enum class DiffOp { kInsert, kDelete, kSubstitute, kTranspose };

std::string_view to_string(DiffOp op);

// One edit turning answer[answer_pos, +answer_len) into
// domain[domain_pos, +domain_len).
struct DiffSpan {
  DiffOp op = DiffOp::kSubstitute;
  size_t answer_pos = 0;
  size_t answer_len = 0;
  size_t domain_pos = 0;
  size_t domain_len = 0;
  bool operator==(const DiffSpan&) const = default;
};

struct ValidationResult {
  Outcome outcome = Outcome::kCorrect;
  std::optional<Mistake> mistake;
  std::optional<std::vector<DiffSpan>> diff;
  std::string answer;            // normalized
  bool empty_answer = false;     // UI should re-prompt
  bool implausibly_fast = false; // typing faster than keystrokes allow
};

// Candidate domains offered by the clicking task, before shuffling. The
// registrable domain is always first.
std::vector<std::string> click_candidates(const ParsedUrl& url);

// Deterministic in (url, kind, seed). Throws ClickUnavailable when a
// clicking task would offer a single choice.
TaskInstance build_task(const ParsedUrl& url, TaskKind kind, uint64_t seed);

ValidationResult validate(const TaskInstance& task, std::string_view answer,
                          const ValidationPolicy& policy, const ImpersonationVerdict& verdict,
                          std::optional<int64_t> elapsed_ms = std::nullopt);

// Minimal edit script (restricted Damerau-Levenshtein) from answer to domain.
std::vector<DiffSpan> diff_feedback(std::string_view answer, std::string_view domain);
std::string apply_diff(std::string_view answer, std::string_view domain,
                       const std::vector<DiffSpan>& spans);

enum class MistakeAction { kConfirmProceed, kReport, kBack };

std::string_view to_string(MistakeAction action);

struct MistakePage {
  std::string original_domain;
  std::string answer;
  std::optional<std::vector<DiffSpan>> diff;
  std::vector<MistakeAction> actions;
  std::string title;
  std::string message;
};

// Throws std::logic_error for a Correct result.
MistakePage mistake_page_model(const ValidationResult& result, const TaskInstance& task,
                               const StringTable& strings = StringTable::english());

// Line-delimited records with the fixed field names kind, target,
// candidates, seed (tasks) and outcome, mistake, diff (results).
std::string serialize_task(const TaskInstance& task);
std::string serialize_result(const ValidationResult& result);

}  // namespace linkgate
