#include "linkgate/serialization.h"

#include <stdexcept>

namespace linkgate {

Json to_json(const UrlRenderModel& model) {
  Json out = Json::array();
  for (const auto& s : model.segments) out.push_back({{"text", s.text}, {"role", to_string(s.role)}});
  return out;
}

Json to_json(const DiffSpan& s) {
  return {{"op", to_string(s.op)},
          {"answer_pos", s.answer_pos},
          {"answer_len", s.answer_len},
          {"domain_pos", s.domain_pos},
          {"domain_len", s.domain_len}};
}

namespace {

Json diff_json(const std::optional<std::vector<DiffSpan>>& diff) {
  if (!diff) return nullptr;
  Json out = Json::array();
  for (const auto& s : *diff) out.push_back(to_json(s));
  return out;
}

}  // namespace

Json to_json(const TaskInstance& task) {
  return {{"kind", to_string(task.kind)},
          {"target", task.target.to_string()},
          {"candidates", task.click_candidates},
          {"pieces", task.reorder_pieces},
          {"segments", to_json(task.render)},
          {"seed", task.rng_seed}};
}

Json to_json(const ValidationResult& r) {
  return {{"outcome", to_string(r.outcome)},
          {"mistake", r.mistake ? Json(to_string(*r.mistake)) : Json(nullptr)},
          {"diff", diff_json(r.diff)},
          {"answer", r.answer},
          {"empty_answer", r.empty_answer},
          {"implausibly_fast", r.implausibly_fast}};
}

Json to_json(const MistakePage& page) {
  Json actions = Json::array();
  for (auto a : page.actions) actions.push_back(to_string(a));
  return {{"domain", page.original_domain}, {"answer", page.answer}, {"diff", diff_json(page.diff)},
          {"actions", actions},             {"title", page.title},   {"message", page.message}};
}

Json to_json(const ImpersonationVerdict& v) {
  Json out = {{"pattern", to_string(v.pattern)},
              {"brand", v.matched_brand ? Json(*v.matched_brand) : Json(nullptr)},
              {"brand_domain", v.matched_domain ? Json(*v.matched_domain) : Json(nullptr)},
              {"squat_edit", nullptr}};
  if (v.squat_edit)
    out["squat_edit"] = {{"kind", to_string(v.squat_edit->kind)},
                         {"position", v.squat_edit->position},
                         {"length", v.squat_edit->length}};
  return out;
}

std::vector<DiffSpan> diff_from_json(const Json& j) {
  std::vector<DiffSpan> out;
  for (const auto& s : j) {
    DiffSpan span;
    auto op = s.at("op").get<std::string>();
    for (auto candidate : {DiffOp::kInsert, DiffOp::kDelete, DiffOp::kSubstitute, DiffOp::kTranspose})
      if (to_string(candidate) == op) span.op = candidate;
    span.answer_pos = s.at("answer_pos").get<size_t>();
    span.answer_len = s.at("answer_len").get<size_t>();
    span.domain_pos = s.at("domain_pos").get<size_t>();
    span.domain_len = s.at("domain_len").get<size_t>();
    out.push_back(span);
  }
  return out;
}

ValidationResult result_from_json(const Json& j) {
  ValidationResult r;
  r.outcome = j.at("outcome").get<std::string>() == "correct" ? Outcome::kCorrect : Outcome::kMismatch;
  if (!j.at("mistake").is_null()) {
    r.mistake = mistake_from_string(j.at("mistake").get<std::string>());
    if (!r.mistake) throw std::invalid_argument("unknown mistake " + j.at("mistake").dump());
  }
  if (j.contains("diff") && !j.at("diff").is_null()) r.diff = diff_from_json(j.at("diff"));
  r.answer = j.value("answer", "");
  r.empty_answer = j.value("empty_answer", false);
  r.implausibly_fast = j.value("implausibly_fast", false);
  return r;
}

TaskInstance task_from_json(const Json& j) {
  auto kind = task_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown task kind " + j.at("kind").dump());
  TaskInstance task;
  task.kind = *kind;
  task.target = parse_url(j.at("target").get<std::string>());
  task.click_candidates = j.at("candidates").get<std::vector<std::string>>();
  task.reorder_pieces = j.value("pieces", std::vector<std::string>{});
  task.render = render_segments(task.target);
  task.rng_seed = j.at("seed").get<uint64_t>();
  return task;
}

}  // namespace linkgate
