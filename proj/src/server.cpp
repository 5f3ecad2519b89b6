#include "travlearn/server.hpp"

#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>

namespace travlearn {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kMaxPendingWrites = 64;

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

}  // namespace

namespace console_detail {
class WsSession;
}
using console_detail::WsSession;

struct ConsoleServer::Impl : std::enable_shared_from_this<ConsoleServer::Impl> {
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::filesystem::path static_dir;
  InboundHandler handler;
  std::thread thread;
  mutable std::mutex mu;
  std::set<std::shared_ptr<WsSession>> sessions;

  void accept();
  void join(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mu);
    sessions.insert(s);
  }
  void leave(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(mu);
    sessions.erase(s);
  }
  /// Returns an error reply for malformed input, empty otherwise.
  std::string handle(const std::string& text) {
    try {
      const auto msg = parse_wire_message(text);
      handler(decode_inbound(msg));
      return {};
    } catch (const std::exception& e) {
      return wire_error(e.what()).dump();
    }
  }
};

namespace console_detail {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, std::shared_ptr<ConsoleServer::Impl> server)
      : ws_(std::move(socket)), server_(std::move(server)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->server_->join(self);
      self->read();
    });
  }

  void send(std::shared_ptr<const std::string> text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)] {
      if (self->queue_.size() >= kMaxPendingWrites) return;  // slow client: skip, never block the session
      self->queue_.push_back(text);
      if (self->queue_.size() == 1) self->write();
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->server_->leave(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      const std::string reply = self->server_->handle(text);
      if (!reply.empty()) {
        self->queue_.push_back(std::make_shared<const std::string>(reply));
        if (self->queue_.size() == 1) self->write();
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->server_->leave(self);
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  std::shared_ptr<ConsoleServer::Impl> server_;
};

}  // namespace console_detail

namespace {

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, std::shared_ptr<ConsoleServer::Impl> server)
      : stream_(std::move(socket)), server_(std::move(server)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
      }
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(serve());
    res->keep_alive(false);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  http::response<http::string_body> serve() {
    auto reply = [&](http::status st, std::string body, const std::string& type) {
      http::response<http::string_body> res{st, req_.version()};
      res.set(http::field::content_type, type);
      res.body() = std::move(body);
      return res;
    };
    if (req_.method() != http::verb::get && req_.method() != http::verb::head)
      return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
      return reply(http::status::bad_request, "bad path\n", "text/plain");
    if (target.back() == '/') target += "index.html";
    const auto path = server_->static_dir / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in) return reply(http::status::not_found, "not found\n", "text/plain");
    std::ostringstream ss;
    ss << in.rdbuf();
    auto res = reply(http::status::ok, ss.str(), mime_type(path));
    if (req_.method() == http::verb::head) res.body().clear();
    return res;
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<ConsoleServer::Impl> server_;
};

}  // namespace

void ConsoleServer::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<HttpSession>(std::move(socket), self)->run();
    self->accept();
  });
}

ConsoleServer::ConsoleServer(const std::string& address, unsigned short port, std::filesystem::path static_dir,
                             InboundHandler handler)
    : impl_(std::make_shared<Impl>()) {
  impl_->static_dir = std::move(static_dir);
  impl_->handler = std::move(handler);
  const tcp::endpoint ep{net::ip::make_address(address), port};
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(net::socket_base::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen(net::socket_base::max_listen_connections);
  impl_->accept();
  impl_->thread = std::thread([impl = impl_] { impl->ioc.run(); });
}

ConsoleServer::~ConsoleServer() { stop(); }

unsigned short ConsoleServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void ConsoleServer::broadcast(const nlohmann::json& msg) {
  if (auto err = validate_wire_message(msg)) throw std::invalid_argument("outbound message: " + *err);
  auto text = std::make_shared<const std::string>(msg.dump());
  std::lock_guard lock(impl_->mu);
  for (const auto& s : impl_->sessions) s->send(text);
}

std::size_t ConsoleServer::clients() const {
  std::lock_guard lock(impl_->mu);
  return impl_->sessions.size();
}

void ConsoleServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  net::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    impl->acceptor.close(ec);
  });
  impl_->ioc.stop();
  impl_->thread.join();
  std::lock_guard lock(impl_->mu);
  impl_->sessions.clear();
}

}  // namespace travlearn
