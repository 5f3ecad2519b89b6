#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace travlearn {

inline constexpr int kSessionLogVersion = 1;
inline constexpr const char* kSessionLogFormat = "travlearn-session";

/// One log line. `t` is the session clock when the event was recorded; the
/// writer keeps it strictly increasing. `body` is type-specific.
struct SessionEvent {
  double t = 0.0;
  std::string type;
  nlohmann::json body = nlohmann::json::object();

  bool operator==(const SessionEvent& o) const { return t == o.t && type == o.type && body == o.body; }
};

class SessionLogError : public std::runtime_error {
 public:
  SessionLogError(const std::string& what, std::uint64_t offset, std::vector<SessionEvent> intact = {})
      : std::runtime_error(what), offset_(offset), intact_(std::move(intact)) {}
  /// Byte offset of the offending record.
  std::uint64_t offset() const { return offset_; }
  /// Events successfully read before the error.
  const std::vector<SessionEvent>& intact_events() const { return intact_; }

 private:
  std::uint64_t offset_;
  std::vector<SessionEvent> intact_;
};

/// Newline-delimited JSON: a header line {"format", "version", "meta"} followed
/// by one event per line.
class SessionLogWriter {
 public:
  SessionLogWriter(const std::filesystem::path& path, const nlohmann::json& meta);
  /// Returns the timestamp actually written (bumped by one ulp if it would not
  /// be strictly greater than the previous one).
  double write(double t, const std::string& type, nlohmann::json body);
  void flush();
  std::uint64_t events() const { return count_; }

 private:
  std::ofstream out_;
  std::optional<double> last_t_;
  std::uint64_t count_ = 0;
};

struct SessionLogContents {
  nlohmann::json meta;
  std::vector<SessionEvent> events;
};

/// Reads a whole log. Throws SessionLogError on version mismatch, malformed or
/// truncated records and non-increasing timestamps.
SessionLogContents read_session_log(const std::filesystem::path& path);
SessionLogContents parse_session_log(const std::string& text);

std::string format_session_event(const SessionEvent& e);

}  // namespace travlearn
