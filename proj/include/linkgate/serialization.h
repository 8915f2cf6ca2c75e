#pragma once

#include <json.hpp>

#include "linkgate/impersonation.h"
#include "linkgate/task_engine.h"
#include "linkgate/url_model.h"

namespace linkgate {

using Json = nlohmann::json;

Json to_json(const UrlRenderModel& model);
Json to_json(const DiffSpan& span);
Json to_json(const TaskInstance& task);
Json to_json(const ValidationResult& result);
Json to_json(const MistakePage& page);
Json to_json(const ImpersonationVerdict& verdict);

std::vector<DiffSpan> diff_from_json(const Json& j);
ValidationResult result_from_json(const Json& j);
TaskInstance task_from_json(const Json& j);

}  // namespace linkgate
