#include "navtrace/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <optional>

namespace navtrace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class SessionBase : public Subscriber, public std::enable_shared_from_this<SessionBase> {
 public:
  SessionBase(asio::io_context& ioc, Server::Impl& owner) : ioc_(ioc), owner_(owner) {}

  void deliver(std::shared_ptr<const std::string> payload) override {
    asio::post(ioc_, [self = shared_from_this(), payload = std::move(payload)]() mutable {
      self->enqueue(std::move(payload));
    });
  }

  void reply(std::string payload) override {
    auto p = std::make_shared<const std::string>(std::move(payload));
    asio::post(ioc_, [self = shared_from_this(), p]() {
      if (self->closed_) return;
      self->replies_.push_back(p);
      if (!self->writing_) self->write_next();
    });
  }

  bool closed() const { return closed_.load(); }
  virtual void start() = 0;
  virtual void close() = 0;

 public:
  virtual void async_send(std::shared_ptr<const std::string> payload) = 0;

  void enqueue(std::shared_ptr<const std::string> payload);
  void write_next() {
    std::shared_ptr<const std::string> next;
    if (!replies_.empty()) {
      next = replies_.front();
      replies_.pop_front();
    } else if (pending_) {
      next = std::move(pending_);
      pending_.reset();
    }
    if (!next) {
      writing_ = false;
      return;
    }
    writing_ = true;
    async_send(std::move(next));
  }
  void on_written(const boost::system::error_code& ec) {
    if (ec) {
      fail(ec, "write");
      return;
    }
    write_next();
  }
  void on_line(std::string line);
  void fail(const boost::system::error_code& ec, const char* what) {
    if (!closed_ && ec != asio::error::operation_aborted && ec != asio::error::eof &&
        ec != websocket::error::closed) {
      spdlog::debug("subscriber {} failed: {}", what, ec.message());
    }
    closed_ = true;
    writing_ = false;
    pending_.reset();
    replies_.clear();
    close();
  }

  asio::io_context& ioc_;
  Server::Impl& owner_;
  std::atomic<bool> closed_{false};
  bool writing_ = false;
  std::shared_ptr<const std::string> pending_;
  std::deque<std::shared_ptr<const std::string>> replies_;
};

}  // namespace

struct Server::Impl {
  explicit Impl(ServerConfig cfg) : config(std::move(cfg)), tcp_acceptor(ioc), ws_acceptor(ioc) {}

  void accept_tcp();
  void accept_ws();
  void add(const std::shared_ptr<SessionBase>& s) {
    std::lock_guard lock(sessions_mu);
    sessions.push_back(s);
  }

  ServerConfig config;
  asio::io_context ioc;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  tcp::acceptor tcp_acceptor;
  tcp::acceptor ws_acceptor;
  std::thread thread;
  bool running = false;

  mutable std::mutex sessions_mu;
  std::vector<std::weak_ptr<SessionBase>> sessions;

  std::mutex commands_mu;
  std::vector<Command> commands;

  std::atomic<std::uint64_t> skipped{0};
};

namespace {

void SessionBase::enqueue(std::shared_ptr<const std::string> payload) {
  if (closed_) return;
  if (!writing_) {
    writing_ = true;
    async_send(std::move(payload));
    return;
  }
  if (pending_) owner_.skipped.fetch_add(1, std::memory_order_relaxed);
  pending_ = std::move(payload);
}

void SessionBase::on_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.empty()) return;
  std::lock_guard lock(owner_.commands_mu);
  owner_.commands.push_back({std::move(line), weak_from_this()});
}

class TcpSession final : public SessionBase {
 public:
  TcpSession(asio::io_context& ioc, Server::Impl& owner, tcp::socket socket)
      : SessionBase(ioc, owner), socket_(std::move(socket)) {}

  void start() override { read(); }

  void close() override {
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

 private:
  void read() {
    asio::async_read_until(
        socket_, asio::dynamic_buffer(in_, owner_.config.max_line_bytes), '\n',
        [self = std::static_pointer_cast<TcpSession>(shared_from_this())](
            const boost::system::error_code& ec, std::size_t n) {
          if (ec) {
            self->fail(ec, "read");
            return;
          }
          std::string line = self->in_.substr(0, n - 1);
          self->in_.erase(0, n);
          self->on_line(std::move(line));
          self->read();
        });
  }

  void async_send(std::shared_ptr<const std::string> payload) override {
    const std::array<asio::const_buffer, 2> bufs{asio::buffer(*payload), asio::buffer("\n", 1)};
    asio::async_write(socket_, bufs,
                      [self = shared_from_this(), payload](const boost::system::error_code& ec,
                                                           std::size_t) { self->on_written(ec); });
  }

  tcp::socket socket_;
  std::string in_;
};

class WsSession final : public SessionBase {
 public:
  WsSession(asio::io_context& ioc, Server::Impl& owner, tcp::socket socket)
      : SessionBase(ioc, owner), ws_(std::move(socket)) {}

  void start() override {
    ws_.read_message_max(owner_.config.max_line_bytes);
    ws_.text(true);
    ws_.async_accept([self = std::static_pointer_cast<WsSession>(shared_from_this())](
                         const boost::system::error_code& ec) {
      if (ec) {
        self->fail(ec, "handshake");
        return;
      }
      self->owner_.add(self);
      self->read();
    });
  }

  void close() override {
    boost::system::error_code ignored;
    beast::get_lowest_layer(ws_).close(ignored);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = std::static_pointer_cast<WsSession>(shared_from_this())](
                                const boost::system::error_code& ec, std::size_t) {
      if (ec) {
        self->fail(ec, "read");
        return;
      }
      std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->on_line(std::move(text));
      self->read();
    });
  }

  void async_send(std::shared_ptr<const std::string> payload) override {
    ws_.async_write(asio::buffer(*payload),
                    [self = shared_from_this(), payload](const boost::system::error_code& ec,
                                                         std::size_t) { self->on_written(ec); });
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
};

void open_acceptor(tcp::acceptor& acc, const std::string& address, std::uint16_t port) {
  const tcp::endpoint ep(asio::ip::make_address(address), port);
  acc.open(ep.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(ep);
  acc.listen();
}

}  // namespace

void Server::Impl::accept_tcp() {
  tcp_acceptor.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
    if (ec) {
      if (ec != asio::error::operation_aborted) spdlog::warn("tcp accept: {}", ec.message());
      return;
    }
    socket.set_option(tcp::no_delay(true));
    auto s = std::make_shared<TcpSession>(ioc, *this, std::move(socket));
    add(s);
    s->start();
    spdlog::info("tcp subscriber connected");
    accept_tcp();
  });
}

void Server::Impl::accept_ws() {
  ws_acceptor.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
    if (ec) {
      if (ec != asio::error::operation_aborted) spdlog::warn("ws accept: {}", ec.message());
      return;
    }
    socket.set_option(tcp::no_delay(true));
    std::make_shared<WsSession>(ioc, *this, std::move(socket))->start();
    spdlog::info("websocket subscriber connected");
    accept_ws();
  });
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running) return;
  open_acceptor(impl_->tcp_acceptor, impl_->config.bind_address, impl_->config.tcp_port);
  open_acceptor(impl_->ws_acceptor, impl_->config.bind_address, impl_->config.ws_port);
  impl_->accept_tcp();
  impl_->accept_ws();
  impl_->work.emplace(impl_->ioc.get_executor());
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
  impl_->running = true;
  spdlog::info("serving tcp :{} websocket :{}", tcp_port(), ws_port());
}

void Server::stop() {
  if (!impl_ || !impl_->running) return;
  asio::post(impl_->ioc, [impl = impl_.get()] {
    boost::system::error_code ignored;
    impl->tcp_acceptor.close(ignored);
    impl->ws_acceptor.close(ignored);
    std::lock_guard lock(impl->sessions_mu);
    for (auto& w : impl->sessions) {
      if (auto s = w.lock()) s->close();
    }
    impl->ioc.stop();
  });
  impl_->work.reset();
  impl_->thread.join();
  impl_->running = false;
}

std::uint16_t Server::tcp_port() const { return impl_->tcp_acceptor.local_endpoint().port(); }

std::uint16_t Server::ws_port() const { return impl_->ws_acceptor.local_endpoint().port(); }

void Server::publish(std::string payload) {
  auto p = std::make_shared<const std::string>(std::move(payload));
  std::lock_guard lock(impl_->sessions_mu);
  auto& v = impl_->sessions;
  std::erase_if(v, [](const std::weak_ptr<SessionBase>& w) {
    auto s = w.lock();
    return !s || s->closed();
  });
  for (auto& w : v) {
    if (auto s = w.lock()) s->deliver(p);
  }
}

std::vector<Command> Server::take_commands() {
  std::lock_guard lock(impl_->commands_mu);
  return std::exchange(impl_->commands, {});
}

std::size_t Server::subscriber_count() const {
  std::lock_guard lock(impl_->sessions_mu);
  std::size_t n = 0;
  for (auto& w : impl_->sessions) {
    if (auto s = w.lock(); s && !s->closed()) ++n;
  }
  return n;
}

std::uint64_t Server::skipped() const { return impl_->skipped.load(); }

void init_logging() {
  auto logger = spdlog::get("navtrace");
  if (!logger) logger = spdlog::stderr_color_mt("navtrace");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("NAVTRACE_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

}  // namespace navtrace
