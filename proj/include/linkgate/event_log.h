#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "linkgate/serialization.h"

namespace linkgate {

enum class EventKind {
  kLinkClicked,
  kTaskServed,
  kAnswerSubmitted,
  kMistakeShown,
  kProceedConfirmed,
  kReported,
  kReturnedToMailbox,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

struct SessionEvent {
  std::string session_id;
  int64_t timestamp_us = 0;
  EventKind kind = EventKind::kLinkClicked;
  Json payload = Json::object();
};

inline constexpr std::string_view kEventSchema = "linkgate.events";
inline constexpr int kEventSchemaVersion = 1;

std::string serialize_event(const SessionEvent& e);
// Throws std::invalid_argument on a malformed record.
SessionEvent parse_event(std::string_view line);

class StorageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EventSink {
 public:
  virtual ~EventSink() = default;
  // Durable once this returns; throws StorageFailure otherwise.
  virtual void append(const SessionEvent& e) = 0;
};

// Append-only line-delimited log. The first line is a schema header; each
// record is written with a single write(2) on an O_APPEND descriptor.
class FileEventLog : public EventSink {
 public:
  explicit FileEventLog(const std::string& path, bool sync = true,
                        std::string_view schema = kEventSchema);
  ~FileEventLog() override;
  FileEventLog(const FileEventLog&) = delete;
  FileEventLog& operator=(const FileEventLog&) = delete;

  void append(const SessionEvent& e) override;
  void append_line(const std::string& line);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  int fd_ = -1;
  bool sync_;
  std::mutex mu_;
};

class MemoryEventLog : public EventSink {
 public:
  void append(const SessionEvent& e) override;
  std::vector<SessionEvent> events() const;
  std::vector<SessionEvent> events_for(const std::string& session_id) const;

 private:
  mutable std::mutex mu_;
  std::vector<SessionEvent> events_;
};

struct EventLogContents {
  std::vector<SessionEvent> events;
  size_t corrupt_lines = 0;
  std::optional<int> schema_version;
};

EventLogContents read_event_log(std::istream& in);
EventLogContents read_event_log(const std::string& path);

// Inspection session states and their legal transitions.
enum class SessionState {
  kServed,
  kSolvedCorrect,
  kSolvedWrong,
  kMistakeShown,
  kProceeded,
  kReported,
  kReturned,
};

std::string_view to_string(SessionState state);
bool is_legal_transition(SessionState from, SessionState to);

struct ReplayedSession {
  std::string session_id;
  std::optional<SessionState> state;
  int attempt_count = 0;
  std::vector<SessionEvent> events;
  bool valid = true;
  std::string error;
};

// Rebuilds per-session state from a log, checking every transition.
std::map<std::string, ReplayedSession> replay_sessions(const std::vector<SessionEvent>& events);

}  // namespace linkgate
