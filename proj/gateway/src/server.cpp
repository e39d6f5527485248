#include "crowdshape/gateway/server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <thread>

#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "crowdshape/gateway/schema.hpp"

namespace crowdshape::gateway {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::vector<std::string> split_path(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : target) {
    if (ch == '/') {
      if (!cur.empty()) parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) parts.push_back(cur);
  return parts;
}

json internal_error(const std::string& message) { return {{"error", {{"code", "internal"}, {"message", message}}}}; }

/// Stream subscriber over one WebSocket connection.
class StreamConnection : public std::enable_shared_from_this<StreamConnection> {
 public:
  StreamConnection(tcp::socket&& socket, std::shared_ptr<Session> session)
      : ws_(std::move(socket)), session_(std::move(session)) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&StreamConnection::on_accept, shared_from_this()));
  }

  void send(std::string message) {
    net::post(ws_.get_executor(), [self = shared_from_this(), m = std::move(message)]() mutable {
      self->queue_.push_back(std::move(m));
      if (self->queue_.size() == 1) self->write_next();
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<StreamConnection> weak = shared_from_this();
    handle_ = session_->subscribe([weak](const std::string& m) {
      if (auto self = weak.lock()) self->send(m);
    });
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&StreamConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    json reply;
    try {
      const json m = json::parse(text);
      if (!m.is_object() || m.value("kind", std::string()) != "feedback") {
        throw GatewayError(ErrorCode::Validation, "clients may only send feedback messages");
      }
      const auto errors = SchemaChecker::builtin().check_stream(m);
      if (!errors.empty()) throw GatewayError(ErrorCode::Validation, errors.front());
      reply = {{"kind", "ack"}, {"ack", session_->submit_feedback(m)}};
    } catch (const GatewayError& e) {
      reply = e.to_json();
      reply["kind"] = "error";
    } catch (const json::exception& e) {
      reply = GatewayError(ErrorCode::Validation, e.what()).to_json();
      reply["kind"] = "error";
    } catch (const std::exception& e) {
      reply = internal_error(e.what());
      reply["kind"] = "error";
    }
    send(reply.dump());
    read_next();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    beast::bind_front_handler(&StreamConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  void close() {
    if (handle_) session_->unsubscribe(handle_);
    handle_ = 0;
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::uint64_t handle_ = 0;
};

}  // namespace

struct Server::Impl {
  Impl(SessionManager& s, ServerOptions o) : sessions(s), options(std::move(o)), acceptor(net::make_strand(ioc)) {}

  SessionManager& sessions;
  ServerOptions options;
  net::io_context ioc;
  tcp::acceptor acceptor;
  std::vector<std::thread> threads;
  std::uint16_t bound_port = 0;

  std::mutex timers_mu;
  std::map<std::string, std::shared_ptr<net::steady_timer>> timers;

  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stop_requested = false;
  bool stopped = false;

  void accept_next();
  void schedule_tick(const std::shared_ptr<Session>& session);
  http::response<http::string_body> handle(const http::request<http::string_body>& req);
  json route(http::verb method, const std::vector<std::string>& parts, const std::string& body, http::status& status);
};

namespace {

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read_next, shared_from_this()));
  }

 private:
  void read_next() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t);

  void on_write(bool keep_alive, beast::error_code ec, std::size_t) {
    if (ec) return;
    if (!keep_alive) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    read_next();
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
  Server::Impl& server_;
};

}  // namespace

void Server::Impl::accept_next() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == net::error::operation_aborted) return;
    } else {
      std::make_shared<HttpConnection>(std::move(socket), *this)->run();
    }
    accept_next();
  });
}

void Server::Impl::schedule_tick(const std::shared_ptr<Session>& session) {
  std::shared_ptr<net::steady_timer> timer;
  {
    std::lock_guard lock(timers_mu);
    auto& slot = timers[session->id()];
    if (!slot) slot = std::make_shared<net::steady_timer>(ioc);
    timer = slot;
  }
  const auto period = std::chrono::duration<double>(1.0 / session->pace());
  timer->expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(period));
  timer->async_wait([this, session](beast::error_code ec) {
    if (ec) return;
    session->tick();
    if (session->state() == SessionState::Finished) {
      std::lock_guard lock(timers_mu);
      timers.erase(session->id());
      return;
    }
    schedule_tick(session);
  });
}

json Server::Impl::route(http::verb method, const std::vector<std::string>& parts, const std::string& body,
                         http::status& status) {
  auto parse_body = [&]() -> json {
    if (body.empty()) return json::object();
    return json::parse(body);
  };
  status = http::status::ok;
  if (parts.size() == 2 && parts[0] == "v1" && parts[1] == "schema" && method == http::verb::get) {
    return json::parse(schema_text());
  }
  if (parts.size() < 2 || parts[0] != "v1" || parts[1] != "sessions") {
    throw GatewayError(ErrorCode::NotFound, "no such endpoint");
  }
  if (parts.size() == 2) {
    if (method != http::verb::post) throw GatewayError(ErrorCode::NotFound, "no such endpoint");
    auto session = sessions.create(parse_body());
    if (session->pace() > 0.0) schedule_tick(session);
    status = http::status::created;
    return session->descriptor();
  }
  auto session = sessions.get(parts[2]);
  if (parts.size() == 3) {
    if (method != http::verb::get) throw GatewayError(ErrorCode::NotFound, "no such endpoint");
    return session->descriptor();
  }
  if (parts.size() != 4) throw GatewayError(ErrorCode::NotFound, "no such endpoint");
  const std::string& op = parts[3];
  if (method == http::verb::get && op == "stats") return session->stats();
  if (method != http::verb::post) throw GatewayError(ErrorCode::NotFound, "no such endpoint");
  if (op == "start") return session->start();
  if (op == "pause") return session->pause();
  if (op == "stop") return session->stop();
  if (op == "step") return session->step();
  if (op == "feedback") return session->submit_feedback(parse_body());
  if (op == "trainers") {
    status = http::status::created;
    return session->register_trainer(parse_body());
  }
  throw GatewayError(ErrorCode::NotFound, "no such endpoint");
}

http::response<http::string_body> Server::Impl::handle(const http::request<http::string_body>& req) {
  http::response<http::string_body> res;
  res.version(req.version());
  res.keep_alive(req.keep_alive());
  res.set(http::field::server, "crowdshape-gateway");
  res.set(http::field::access_control_allow_origin, "*");
  if (req.method() == http::verb::options) {
    res.result(http::status::no_content);
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    return res;
  }
  json body;
  http::status status = http::status::ok;
  try {
    body = route(req.method(), split_path(std::string(req.target())), req.body(), status);
  } catch (const GatewayError& e) {
    status = static_cast<http::status>(http_status(e.code()));
    body = e.to_json();
  } catch (const json::exception& e) {
    status = http::status::bad_request;
    body = GatewayError(ErrorCode::Validation, e.what()).to_json();
  } catch (const std::exception& e) {
    status = http::status::internal_server_error;
    body = internal_error(e.what());
  }
  res.result(status);
  res.set(http::field::content_type, "application/json");
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

void HttpConnection::on_read(beast::error_code ec, std::size_t) {
  if (ec) return;
  if (websocket::is_upgrade(req_)) {
    const auto parts = split_path(std::string(req_.target()));
    std::shared_ptr<Session> session;
    if (parts.size() == 4 && parts[0] == "v1" && parts[1] == "sessions" && parts[3] == "stream") {
      try {
        session = server_.sessions.get(parts[2]);
      } catch (const GatewayError&) {
      }
    }
    if (session) {
      std::make_shared<StreamConnection>(stream_.release_socket(), std::move(session))->run(std::move(req_));
      return;
    }
  }
  res_ = std::make_shared<http::response<http::string_body>>(server_.handle(req_));
  const bool keep_alive = res_->keep_alive();
  http::async_write(stream_, *res_,
                    beast::bind_front_handler(&HttpConnection::on_write, shared_from_this(), keep_alive));
}

Server::Server(SessionManager& sessions, ServerOptions options)
    : impl_(std::make_unique<Impl>(sessions, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  auto& s = *impl_;
  const tcp::endpoint endpoint(net::ip::make_address(s.options.address), s.options.port);
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen(net::socket_base::max_listen_connections);
  s.bound_port = s.acceptor.local_endpoint().port();
  s.accept_next();
  const int n = std::max(1, s.options.threads);
  for (int i = 0; i < n; ++i) s.threads.emplace_back([&s] { s.ioc.run(); });
}

void Server::wait() {
  auto& s = *impl_;
  net::signal_set signals(s.ioc, SIGINT, SIGTERM);
  signals.async_wait([&s](beast::error_code ec, int) {
    if (ec) return;
    std::lock_guard lock(s.stop_mu);
    s.stop_requested = true;
    s.stop_cv.notify_all();
  });
  {
    std::unique_lock lock(s.stop_mu);
    s.stop_cv.wait(lock, [&s] { return s.stop_requested || s.stopped; });
  }
  signals.cancel();
  stop();
}

void Server::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lock(s.stop_mu);
    if (s.stopped) return;
    s.stopped = true;
    s.stop_cv.notify_all();
  }
  s.ioc.stop();
  for (auto& t : s.threads) {
    if (t.joinable()) t.join();
  }
}

std::uint16_t Server::port() const { return impl_->bound_port; }

}  // namespace crowdshape::gateway
