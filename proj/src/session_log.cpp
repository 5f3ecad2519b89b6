#include "travlearn/session_log.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace travlearn {

using nlohmann::json;

std::string format_session_event(const SessionEvent& e) {
  return json{{"t", e.t}, {"type", e.type}, {"body", e.body}}.dump();
}

SessionLogWriter::SessionLogWriter(const std::filesystem::path& path, const json& meta)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot write session log " + path.string());
  out_ << json{{"format", kSessionLogFormat}, {"version", kSessionLogVersion}, {"meta", meta}}.dump() << '\n';
}

double SessionLogWriter::write(double t, const std::string& type, json body) {
  if (!std::isfinite(t)) throw std::invalid_argument("session event time must be finite");
  if (last_t_ && t <= *last_t_) t = std::nextafter(*last_t_, std::numeric_limits<double>::infinity());
  last_t_ = t;
  out_ << format_session_event({t, type, std::move(body)}) << '\n';
  if (!out_) throw std::runtime_error("session log write failed");
  ++count_;
  return t;
}

void SessionLogWriter::flush() { out_.flush(); }

SessionLogContents parse_session_log(const std::string& text) {
  SessionLogContents out;
  if (text.empty()) throw SessionLogError("session log is empty (no header)", 0);
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::uint64_t offset = pos;
    if (nl == std::string::npos)
      throw SessionLogError("truncated record at byte offset " + std::to_string(offset), offset, out.events);
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SessionLogError("malformed record at byte offset " + std::to_string(offset) + ": " + e.what(), offset,
                            out.events);
    }
    if (header) {
      if (!j.is_object() || j.value("format", "") != kSessionLogFormat)
        throw SessionLogError("not a session log (bad header)", 0);
      if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kSessionLogVersion)
        throw SessionLogError("unsupported session log version " + (j.contains("version") ? j["version"].dump() : "?") +
                                  " (expected " + std::to_string(kSessionLogVersion) + ")",
                              0);
      out.meta = j.value("meta", json::object());
      header = false;
      continue;
    }
    if (!j.is_object() || !j.contains("t") || !j["t"].is_number() || !j.contains("type") || !j["type"].is_string() ||
        !j.contains("body"))
      throw SessionLogError("malformed record at byte offset " + std::to_string(offset), offset, out.events);
    SessionEvent e{j["t"].get<double>(), j["type"].get<std::string>(), j["body"]};
    if (!out.events.empty() && !(e.t > out.events.back().t))
      throw SessionLogError("non-increasing timestamp at byte offset " + std::to_string(offset), offset, out.events);
    out.events.push_back(std::move(e));
  }
  if (header) throw SessionLogError("session log is empty (no header)", 0);
  return out;
}

SessionLogContents read_session_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SessionLogError("cannot open session log " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_session_log(ss.str());
}

}  // namespace travlearn
