#include "linkgate/event_log.h"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

namespace linkgate {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kLinkClicked: return "LinkClicked";
    case EventKind::kTaskServed: return "TaskServed";
    case EventKind::kAnswerSubmitted: return "AnswerSubmitted";
    case EventKind::kMistakeShown: return "MistakeShown";
    case EventKind::kProceedConfirmed: return "ProceedConfirmed";
    case EventKind::kReported: return "Reported";
    case EventKind::kReturnedToMailbox: return "ReturnedToMailbox";
  }
  return "LinkClicked";
}

std::optional<EventKind> event_kind_from_string(std::string_view name) {
  for (auto k : {EventKind::kLinkClicked, EventKind::kTaskServed, EventKind::kAnswerSubmitted,
                 EventKind::kMistakeShown, EventKind::kProceedConfirmed, EventKind::kReported,
                 EventKind::kReturnedToMailbox})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

std::string serialize_event(const SessionEvent& e) {
  Json j = {{"session", e.session_id},
            {"ts", e.timestamp_us},
            {"event", to_string(e.kind)},
            {"payload", e.payload}};
  return j.dump();
}

SessionEvent parse_event(std::string_view line) {
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& err) {
    throw std::invalid_argument(std::string("unparseable event: ") + err.what());
  }
  if (!j.is_object() || !j.contains("session") || !j.contains("ts") || !j.contains("event"))
    throw std::invalid_argument("event record is missing fields");
  auto kind = event_kind_from_string(j.at("event").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown event kind");
  SessionEvent e;
  e.session_id = j.at("session").get<std::string>();
  e.timestamp_us = j.at("ts").get<int64_t>();
  e.kind = *kind;
  e.payload = j.value("payload", Json::object());
  return e;
}

FileEventLog::FileEventLog(const std::string& path, bool sync, std::string_view schema)
    : path_(path), sync_(sync) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0)
    throw StorageFailure("cannot open event log " + path + ": " + std::strerror(errno));
  if (::lseek(fd_, 0, SEEK_END) == 0) {
    Json header = {{"schema", schema}, {"version", kEventSchemaVersion}};
    append_line(header.dump());
  }
}

FileEventLog::~FileEventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void FileEventLog::append_line(const std::string& line) {
  std::string record = line + "\n";
  std::lock_guard lock(mu_);
  ssize_t written = ::write(fd_, record.data(), record.size());
  if (written != static_cast<ssize_t>(record.size()))
    throw StorageFailure("short write to event log " + path_);
  if (sync_ && ::fdatasync(fd_) != 0)
    throw StorageFailure("fdatasync failed on " + path_ + ": " + std::strerror(errno));
}

void FileEventLog::append(const SessionEvent& e) { append_line(serialize_event(e)); }

void MemoryEventLog::append(const SessionEvent& e) {
  std::lock_guard lock(mu_);
  events_.push_back(e);
}

std::vector<SessionEvent> MemoryEventLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<SessionEvent> MemoryEventLog::events_for(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  std::vector<SessionEvent> out;
  for (const auto& e : events_)
    if (e.session_id == session_id) out.push_back(e);
  return out;
}

EventLogContents read_event_log(std::istream& in) {
  EventLogContents contents;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      try {
        auto header = Json::parse(line);
        if (header.is_object() && header.contains("schema")) {
          contents.schema_version = header.value("version", 0);
          continue;
        }
      } catch (const Json::parse_error&) {
      }
    }
    try {
      contents.events.push_back(parse_event(line));
    } catch (const std::exception&) {
      ++contents.corrupt_lines;
    }
  }
  return contents;
}

EventLogContents read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StorageFailure("cannot read event log " + path);
  return read_event_log(in);
}

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::kServed: return "served";
    case SessionState::kSolvedCorrect: return "solved_correct";
    case SessionState::kSolvedWrong: return "solved_wrong";
    case SessionState::kMistakeShown: return "mistake_shown";
    case SessionState::kProceeded: return "proceeded";
    case SessionState::kReported: return "reported";
    case SessionState::kReturned: return "returned";
  }
  return "served";
}

bool is_legal_transition(SessionState from, SessionState to) {
  using S = SessionState;
  switch (from) {
    case S::kServed:
      return to == S::kSolvedCorrect || to == S::kSolvedWrong || to == S::kReported ||
             to == S::kReturned;
    case S::kSolvedCorrect: return to == S::kProceeded;
    case S::kSolvedWrong: return to == S::kMistakeShown;
    case S::kMistakeShown:
      return to == S::kProceeded || to == S::kReported || to == S::kReturned;
    case S::kReturned: return to == S::kServed;
    case S::kProceeded:
    case S::kReported: return false;
  }
  return false;
}

namespace {

std::optional<SessionState> target_state(const SessionEvent& e) {
  switch (e.kind) {
    case EventKind::kLinkClicked: return std::nullopt;
    case EventKind::kTaskServed: return SessionState::kServed;
    case EventKind::kAnswerSubmitted: {
      const auto& result = e.payload.value("result", Json::object());
      return result.value("outcome", "") == "correct" ? SessionState::kSolvedCorrect
                                                      : SessionState::kSolvedWrong;
    }
    case EventKind::kMistakeShown: return SessionState::kMistakeShown;
    case EventKind::kProceedConfirmed: return SessionState::kProceeded;
    case EventKind::kReported: return SessionState::kReported;
    case EventKind::kReturnedToMailbox: return SessionState::kReturned;
  }
  return std::nullopt;
}

void fail(ReplayedSession& s, std::string why) {
  if (s.valid) s.error = std::move(why);
  s.valid = false;
}

}  // namespace

std::map<std::string, ReplayedSession> replay_sessions(const std::vector<SessionEvent>& events) {
  std::map<std::string, ReplayedSession> sessions;
  for (const auto& e : events) {
    auto& s = sessions[e.session_id];
    if (s.session_id.empty()) {
      s.session_id = e.session_id;
      if (e.kind != EventKind::kLinkClicked) fail(s, "first event is not LinkClicked");
    } else if (e.timestamp_us <= s.events.back().timestamp_us) {
      fail(s, "events out of order");
    }
    s.events.push_back(e);
    if (!s.valid) continue;

    auto next = target_state(e);
    if (!next) {
      // A re-click is only possible while the task is open or after Back.
      if (s.state && *s.state != SessionState::kServed && *s.state != SessionState::kReturned)
        fail(s, "link clicked in state " + std::string(to_string(*s.state)));
      continue;
    }
    bool ok = s.state ? is_legal_transition(*s.state, *next)
                      : (*next == SessionState::kServed && s.events.size() >= 2);
    if (!ok) {
      fail(s, std::string(to_string(e.kind)) + " not allowed in state " +
                  (s.state ? std::string(to_string(*s.state)) : "none"));
      continue;
    }
    if (*next == SessionState::kServed) ++s.attempt_count;
    s.state = next;
  }
  return sessions;
}

}  // namespace linkgate
