#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "travlearn/wire.hpp"

namespace travlearn {

/// WebSocket endpoint at /ws plus static files for everything else. Runs its
/// own I/O thread; inbound messages are schema-checked before reaching the
/// handler, and malformed ones get an error reply on the same connection.
class ConsoleServer {
 public:
  using InboundHandler = std::function<void(InboundMessage)>;

  /// Port 0 picks a free port; see port().
  ConsoleServer(const std::string& address, unsigned short port, std::filesystem::path static_dir,
                InboundHandler handler);
  ~ConsoleServer();
  ConsoleServer(const ConsoleServer&) = delete;
  ConsoleServer& operator=(const ConsoleServer&) = delete;

  unsigned short port() const;
  /// Sends the same bytes to every connected client. Throws on schema errors.
  void broadcast(const nlohmann::json& msg);
  std::size_t clients() const;
  void stop();

  struct Impl;

 private:
  std::shared_ptr<Impl> impl_;
};

}  // namespace travlearn
