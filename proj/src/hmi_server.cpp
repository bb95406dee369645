#include "separator/hmi_server.hpp"

#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace separator {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

struct Target {
  std::string path;
  std::string token;  // from ?token=
};

Target split_target(beast::string_view raw) {
  const std::string_view target(raw.data(), raw.size());
  Target t;
  const auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  std::string_view query = target.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const std::string_view pair = query.substr(0, amp);
    if (pair.substr(0, 6) == "token=") t.token = std::string(pair.substr(6));
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  return t;
}

}  // namespace

class WsSession;

struct HmiServer::Impl {
  LiveSimulation& sim;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread thread;
  std::size_t subscription = 0;
  bool started = false;

  mutable std::mutex sessions_mutex;
  std::set<std::shared_ptr<WsSession>> sessions;

  Impl(LiveSimulation& s, ServerOptions o) : sim(s), options(std::move(o)) {}

  bool authorized(const http::request<http::string_body>& req) const;
  void do_accept();
  void broadcast(const std::shared_ptr<const StateSnapshot>& snap);
  void add(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(sessions_mutex);
    sessions.insert(s);
  }
  void remove(const std::shared_ptr<WsSession>& s) {
    std::lock_guard lock(sessions_mutex);
    sessions.erase(s);
  }
  std::size_t count() const {
    std::lock_guard lock(sessions_mutex);
    return sessions.size();
  }
};

// One operator connection. Acks are queued in order and never dropped;
// snapshots keep only the newest pending one.
class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, HmiServer::Impl& server)
      : ws_(std::move(socket)), server_(server) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void offer_snapshot(std::shared_ptr<const std::string> text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)] {
      self->pending_snapshot_ = text;
      self->maybe_write();
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      beast::error_code ec;
      beast::get_lowest_layer(self->ws_).socket().close(ec);
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    server_.add(shared_from_this());
    auto latest = server_.sim.latest();
    offer_snapshot(std::make_shared<const std::string>(snapshot_message(*latest).dump()));
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      server_.remove(shared_from_this());
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error&) {
      queue_message(error_message("", "message is not valid JSON").dump());
      do_read();
      return;
    }
    if (!msg.is_object() || msg.value("type", "") != "command") {
      queue_message(error_message("", "expected a message of type \"command\"").dump());
    } else if (!msg.contains("command_id") || !msg.at("command_id").is_string() ||
               msg.at("command_id").get<std::string>().empty()) {
      queue_message(error_message("", "command_id must be a non-empty string").dump());
    } else {
      std::weak_ptr<WsSession> weak = shared_from_this();
      server_.sim.handle_command(msg, [weak](const Ack& ack) {
        if (auto self = weak.lock()) self->queue_message(ack_to_json(ack).dump());
      });
    }
    do_read();
  }

  void queue_message(std::string text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      self->acks_.push_back(std::make_shared<const std::string>(std::move(text)));
      self->maybe_write();
    });
  }

  void maybe_write() {
    if (writing_) return;
    std::shared_ptr<const std::string> next;
    if (!acks_.empty()) {
      next = acks_.front();
      acks_.pop_front();
    } else if (pending_snapshot_) {
      next = std::move(pending_snapshot_);
      pending_snapshot_.reset();
    } else {
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*next),
                    [self = shared_from_this(), next](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->server_.remove(self);
                        return;
                      }
                      self->maybe_write();
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  HmiServer::Impl& server_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> acks_;
  std::shared_ptr<const std::string> pending_snapshot_;
  bool writing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, HmiServer::Impl& server)
      : stream_(std::move(socket)), server_(server) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    const Target target = split_target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target.path != "/ws") return respond(http::status::not_found, {{"error", "not found"}});
      if (!server_.authorized(req_))
        return respond(http::status::unauthorized, {{"error", "missing or invalid bearer token"}});
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(req_));
      return;
    }
    if (req_.method() != http::verb::get)
      return respond(http::status::method_not_allowed, {{"error", "method not allowed"}});
    if (target.path == "/health") {
      const auto snap = server_.sim.latest();
      return respond(http::status::ok, {{"status", "ok"},
                                        {"running", server_.sim.running()},
                                        {"sim_time", snap->time},
                                        {"sessions", server_.count()}});
    }
    if (target.path == "/state") return respond(http::status::ok, snapshot_to_json(*server_.sim.latest()));
    respond(http::status::not_found, {{"error", "not found"}});
  }

  void respond(http::status status, const json& body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::content_type, "application/json");
    res->set(http::field::access_control_allow_origin, "*");
    res->keep_alive(req_.keep_alive());
    res->body() = body.dump();
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->do_read();
                      });
  }

  beast::tcp_stream stream_;
  HmiServer::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

bool HmiServer::Impl::authorized(const http::request<http::string_body>& req) const {
  if (options.token.empty()) return true;
  const auto header = req[http::field::authorization];
  if (header == "Bearer " + options.token) return true;
  return split_target(req.target()).token == options.token;
}

void HmiServer::Impl::do_accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpSession>(std::move(socket), *this)->run();
    do_accept();
  });
}

void HmiServer::Impl::broadcast(const std::shared_ptr<const StateSnapshot>& snap) {
  net::post(ioc, [this, snap] {
    auto text = std::make_shared<const std::string>(snapshot_message(*snap).dump());
    std::lock_guard lock(sessions_mutex);
    for (const auto& s : sessions) s->offer_snapshot(text);
  });
}

HmiServer::HmiServer(LiveSimulation& sim, ServerOptions options)
    : impl_(std::make_unique<Impl>(sim, std::move(options))) {}

HmiServer::~HmiServer() { stop(); }

std::uint16_t HmiServer::start() {
  Impl& s = *impl_;
  const tcp::endpoint endpoint(net::ip::make_address(s.options.address), s.options.port);
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen(net::socket_base::max_listen_connections);
  s.subscription = s.sim.subscribe([&s](std::shared_ptr<const StateSnapshot> snap) { s.broadcast(snap); });
  s.do_accept();
  s.started = true;
  s.thread = std::thread([&s] { s.ioc.run(); });
  return s.acceptor.local_endpoint().port();
}

void HmiServer::stop() {
  Impl& s = *impl_;
  if (!s.started) return;
  s.started = false;
  s.sim.unsubscribe(s.subscription);
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    std::lock_guard lock(s.sessions_mutex);
    for (const auto& session : s.sessions) session->close();
  });
  s.ioc.stop();
  if (s.thread.joinable()) s.thread.join();
  std::lock_guard lock(s.sessions_mutex);
  s.sessions.clear();
}

void HmiServer::wait() {
  net::io_context signals_ctx;
  net::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  signals.async_wait([](beast::error_code, int) {});
  signals_ctx.run();
}

std::size_t HmiServer::session_count() const { return impl_->count(); }

}  // namespace separator
