#include "avr/teleop_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <csignal>
#include <deque>
#include <iostream>
#include <map>

#include "avr/errors.hpp"

namespace avr {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxMessageBytes = 1 << 20;

class Connection;

}  // namespace

struct TeleopServer::Impl : std::enable_shared_from_this<TeleopServer::Impl> {
  Impl(std::shared_ptr<const WorldScene> scene, ServerOptions o)
      : opts(std::move(o)),
        session(std::move(scene), opts.session),
        acceptor(ioc),
        timer(ioc),
        signals(ioc),
        start(std::chrono::steady_clock::now()) {}

  void bind();
  void do_accept();
  void schedule_tick();
  void dispatch(Session::ClientId from, std::vector<Outbound> out);
  void shutdown();

  ServerOptions opts;
  asio::io_context ioc{1};
  Session session;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
  asio::signal_set signals;
  std::chrono::steady_clock::time_point start;
  std::map<Session::ClientId, std::shared_ptr<Connection>> connections;
  Session::ClientId next_id = 1;
  bool stopping = false;
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<TeleopServer::Impl> server, Session::ClientId id)
      : ws_(std::move(socket)), server_(std::move(server)), id_(id) {}

  Session::ClientId id() const { return id_; }

  void start() {
    ws_.read_message_max(kMaxMessageBytes);
    http::async_read(ws_.next_layer(), buffer_, request_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->on_request(ec);
                     });
  }

  void send(std::string text, bool is_frame) {
    if (closed_) return;
    if (is_frame) {
      std::size_t frames = 0;
      for (const auto& q : queue_) frames += q.is_frame ? 1 : 0;
      if (frames >= server_->opts.max_queued_frames) {
        // Keep the in-flight message; drop the oldest queued frame.
        for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
          if (it->is_frame) {
            queue_.erase(it);
            break;
          }
        }
      }
    }
    queue_.push_back({std::move(text), is_frame});
    if (!writing_) write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    if (ws_.is_open()) {
      ws_.async_close(websocket::close_code::going_away,
                      [self = shared_from_this()](beast::error_code) {});
    } else {
      ws_.next_layer().socket().close(ec);
    }
  }

 private:
  struct Pending {
    std::string text;
    bool is_frame;
  };

  void on_request(beast::error_code ec) {
    if (ec) return drop();
    if (request_.target() != "/session" || !websocket::is_upgrade(request_)) {
      auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found,
                                                                     request_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = "websocket endpoint is /session\n";
      res->prepare_payload();
      http::async_write(ws_.next_layer(), *res,
                        [self = shared_from_this(), res](beast::error_code, std::size_t) {
                          beast::error_code ignored;
                          self->ws_.next_layer().socket().shutdown(tcp::socket::shutdown_both,
                                                                   ignored);
                          self->drop();
                        });
      return;
    }
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(request_, [self = shared_from_this()](beast::error_code ec2) {
      if (ec2) return self->drop();
      self->ws_.text(true);
      self->do_read();
    });
  }

  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) return drop();
    std::vector<Outbound> out;
    if (!ws_.got_text()) {
      out.push_back({error_message("bad_message", "binary messages are not accepted"), false});
    } else {
      out = server_->session.handle_text(id_, beast::buffers_to_string(buffer_.data()));
    }
    buffer_.consume(buffer_.size());
    server_->dispatch(id_, std::move(out));
    do_read();
  }

  void write_next() {
    if (queue_.empty() || closed_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    ws_.async_write(asio::buffer(queue_.front().text),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) return self->drop();
                      self->queue_.pop_front();
                      self->write_next();
                    });
  }

  void drop() {
    closed_ = true;
    if (!dropped_) {
      dropped_ = true;
      server_->session.disconnect(id_);
      server_->connections.erase(id_);
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<TeleopServer::Impl> server_;
  Session::ClientId id_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::deque<Pending> queue_;
  bool writing_ = false;
  bool closed_ = false;
  bool dropped_ = false;
};

}  // namespace

void TeleopServer::Impl::bind() {
  beast::error_code ec;
  const auto address = asio::ip::make_address(opts.host, ec);
  if (ec) throw DomainError("invalid host '" + opts.host + "'");
  const tcp::endpoint ep(address, opts.port);
  acceptor.open(ep.protocol(), ec);
  if (!ec) acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) acceptor.bind(ep, ec);
  if (!ec) acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw IoError("cannot listen on " + opts.host + ":" + std::to_string(opts.port) + ": " +
                  ec.message());
  }
}

void TeleopServer::Impl::do_accept() {
  acceptor.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (self->stopping) return;
    if (!ec) {
      const auto id = self->next_id++;
      auto conn = std::make_shared<Connection>(std::move(socket), self, id);
      self->connections[id] = conn;
      conn->start();
    }
    self->do_accept();
  });
}

void TeleopServer::Impl::schedule_tick() {
  timer.expires_after(std::chrono::microseconds(
      static_cast<std::int64_t>(opts.tick_interval_ms * 1000.0)));
  timer.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || self->stopping) return;
    const double now_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - self->start)
            .count();
    self->dispatch(0, self->session.tick(now_ms));
    self->schedule_tick();
  });
}

void TeleopServer::Impl::dispatch(Session::ClientId from, std::vector<Outbound> out) {
  for (auto& o : out) {
    const bool is_frame = o.msg.value("type", "") == "frame";
    const std::string text = o.msg.dump();
    if (!o.broadcast) {
      if (const auto it = connections.find(from); it != connections.end()) {
        it->second->send(text, is_frame);
      }
      continue;
    }
    // Copy: a failing send may erase from the map.
    const auto targets = connections;
    for (const auto& [id, conn] : targets) {
      if (session.role(id) != Role::none) conn->send(text, is_frame);
    }
  }
}

void TeleopServer::Impl::shutdown() {
  if (stopping) return;
  stopping = true;
  beast::error_code ec;
  acceptor.close(ec);
  timer.cancel();
  signals.cancel(ec);
  if (auto done = session.stop_recording()) {
    const std::string text = done->msg.dump();
    for (const auto& [id, conn] : connections) conn->send(text, false);
  }
  const auto conns = connections;
  for (const auto& [id, conn] : conns) conn->close();
  // Give pending closes a moment, then stop the loop.
  auto t = std::make_shared<asio::steady_timer>(ioc, std::chrono::milliseconds(200));
  t->async_wait([self = shared_from_this(), t](beast::error_code) { self->ioc.stop(); });
}

TeleopServer::TeleopServer(std::shared_ptr<const WorldScene> scene, ServerOptions opts)
    : impl_(std::make_shared<Impl>(std::move(scene), std::move(opts))) {
  if (!(impl_->opts.tick_interval_ms > 0.0)) throw DomainError("tick interval must be positive");
  impl_->bind();
}

TeleopServer::~TeleopServer() {
  // Break the reference cycles held by pending handlers.
  impl_->connections.clear();
}

unsigned short TeleopServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void TeleopServer::run() {
  auto impl = impl_;
  if (impl->opts.handle_signals) {
    impl->signals.add(SIGINT);
    impl->signals.add(SIGTERM);
    impl->signals.async_wait([impl](beast::error_code ec, int) {
      if (!ec) impl->shutdown();
    });
  }
  impl->start = std::chrono::steady_clock::now();
  impl->do_accept();
  impl->schedule_tick();
  impl->ioc.run();
  impl->session.stop_recording();
  impl->connections.clear();
}

void TeleopServer::stop() {
  auto impl = impl_;
  asio::post(impl->ioc, [impl] { impl->shutdown(); });
}

}  // namespace avr
