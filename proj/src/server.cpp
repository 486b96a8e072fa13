#include "riverpilot/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <deque>
#include <future>
#include <map>
#include <mutex>
#include <thread>

namespace riverpilot::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using json = nlohmann::json;
using service::ServiceSession;

namespace {

class Connection;

/// A live session and everything attached to it. Touched only on `strand`.
struct Host : std::enable_shared_from_this<Host> {
  Host(asio::io_context& ioc, std::unique_ptr<ServiceSession> s)
      : strand(asio::make_strand(ioc)), timer(strand), session(std::move(s)) {}

  asio::strand<asio::io_context::executor_type> strand;
  asio::steady_timer timer;
  std::unique_ptr<ServiceSession> session;
  std::vector<std::shared_ptr<Connection>> attached;
  std::shared_ptr<Connection> player;
  std::atomic<bool> player_claimed{false};  // guards the role across strands
  std::int64_t pending_steps = 0;
  int ticks = 0;
  bool ticking = false;
  bool closed = false;

  std::string id() const { return session->config().session_id(); }
  int steps_per_tick() const {
    const auto& c = session->config();
    return c.clock == service::ClockMode::Accelerated ? std::max(1, static_cast<int>(std::lround(c.acceleration))) : 1;
  }

  void broadcast(const json& msg);
  void flush_clock();
  void start_clock();
  void on_tick(std::chrono::steady_clock::time_point due);
  void handle(const std::shared_ptr<Connection>& from, const json& msg);
  void attach(const std::shared_ptr<Connection>& c, bool as_player);
  void detach(const std::shared_ptr<Connection>& c);
  void close();
};

}  // namespace

struct Server::Impl : std::enable_shared_from_this<Server::Impl> {
  explicit Impl(ServerOptions o) : options(std::move(o)), acceptor(asio::make_strand(ioc)) {}

  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::shared_ptr<const game::Map> map;
  std::vector<std::thread> threads;
  std::uint16_t bound_port = 0;
  bool running = false;

  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<Host>> hosts;

  void accept();
  /// Finds or creates the session a hello names. Throws Error.
  std::shared_ptr<Host> open(const json& hello, bool& as_player);
};

namespace {

/// One browser or bot socket. Reads are sequential; writes are queued.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<Server::Impl> server)
      : ws_(std::move(socket)), server_(std::move(server)) {}

  void run() {
    ws_.text(true);
    ws_.async_accept(beast::bind_front_handler(&Connection::on_accept, shared_from_this()));
  }

  void send(std::string text) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      if (self->closed_) return;
      self->outbox_.push_back(std::move(text));
      if (self->outbox_.size() == 1) self->write_next();
    });
  }
  void send(const json& msg) { send(msg.dump()); }

  bool spectator() const { return !player_; }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    read_next();
  }

  void read_next() {
    ws_.async_read(buffer_, beast::bind_front_handler(&Connection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      if (host_) asio::post(host_->strand, [h = host_, self = shared_from_this()] { h->detach(self); });
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    dispatch(text);
    read_next();
  }

  void dispatch(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::exception&) {
      send(service::error_message(ErrorCode::SchemaError, "json"));
      return;
    }
    if (host_) {
      asio::post(host_->strand, [h = host_, self = shared_from_this(), msg = std::move(msg)] { h->handle(self, msg); });
      return;
    }
    try {
      if (!msg.is_object() || !msg.contains("type") || msg["type"] != "hello") {
        throw Error(ErrorCode::IllegalInState, "AwaitingHello");
      }
      service::parse_message(msg);  // validates the version
      bool as_player = false;
      host_ = server_->open(msg, as_player);
      player_ = as_player;
      asio::post(host_->strand, [h = host_, self = shared_from_this(), as_player] { h->attach(self, as_player); });
    } catch (const Error& e) {
      send(service::error_message(e.code(), e.detail()));
    }
  }

  void write_next() {
    ws_.async_write(asio::buffer(outbox_.front()), beast::bind_front_handler(&Connection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      outbox_.clear();
      return;
    }
    outbox_.pop_front();
    if (!outbox_.empty()) write_next();
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  std::shared_ptr<Server::Impl> server_;
  std::shared_ptr<Host> host_;
  bool player_ = false;
  bool closed_ = false;
};

void Host::broadcast(const json& msg) {
  const std::string text = msg.dump();
  for (const auto& c : attached) c->send(text);
}

void Host::flush_clock() {
  if (pending_steps == 0) return;
  const std::int64_t steps = pending_steps;
  pending_steps = 0;
  const auto& st = session->game().state();
  if (st.finished) return;
  service::Command cmd;
  if (st.ship.phase == game::Phase::Sailing) {
    cmd = {"Stepped", {{"steps", steps}}};
  } else {
    cmd = {"Waited", {{"seconds", static_cast<double>(steps) * game::kDt}}};
  }
  try {
    for (const auto& e : session->apply(cmd)) broadcast(service::event_message(e));
  } catch (const Error& e) {
    spdlog::warn("{}: clock {} failed: {}", id(), cmd.kind, e.what());
  }
}

void Host::start_clock() {
  if (ticking || closed || session->config().clock == service::ClockMode::Manual) return;
  ticking = true;
  on_tick(std::chrono::steady_clock::now());
}

void Host::on_tick(std::chrono::steady_clock::time_point due) {
  if (!player || closed) {
    flush_clock();
    ticking = false;
    return;
  }
  pending_steps += steps_per_tick();
  if (++ticks % kTicksPerFlush == 0) flush_clock();
  const auto next = due + std::chrono::microseconds(1'000'000 / kTickHz);
  timer.expires_at(next);
  timer.async_wait([self = shared_from_this(), next](beast::error_code ec) {
    if (ec) {
      self->ticking = false;
      return;
    }
    self->on_tick(next);
  });
}

void Host::handle(const std::shared_ptr<Connection>& from, const json& msg) {
  try {
    if (closed) throw Error(ErrorCode::IllegalInState, "Closed");
    const auto type = msg.is_object() && msg.contains("type") && msg["type"].is_string() ? msg["type"].get<std::string>() : "";
    if (type == "hello") throw Error(ErrorCode::IllegalInState, "AlreadyJoined");
    if (type == "get_state") {
      flush_clock();
      from->send(service::snapshot_message(*session));
      return;
    }
    if (from->spectator()) {
      service::parse_message(msg);  // schema errors take precedence
      throw Error(ErrorCode::IllegalInState, "Spectator");
    }
    flush_clock();
    // Logged inside handle_message before anything is sent back.
    const auto events = session->handle_message(msg);
    for (const auto& e : events) broadcast(service::event_message(e));
    broadcast(service::snapshot_message(*session));
  } catch (const Error& e) {
    from->send(service::error_message(e.code(), e.detail()));
  }
}

void Host::attach(const std::shared_ptr<Connection>& c, bool as_player) {
  attached.push_back(c);
  if (as_player) player = c;
  c->send(service::hello_message(*session));
  c->send(service::snapshot_message(*session));
  spdlog::info("{}: {} attached", id(), as_player ? "player" : "spectator");
  if (as_player) start_clock();
}

void Host::detach(const std::shared_ptr<Connection>& c) {
  std::erase(attached, c);
  if (player == c) {
    player.reset();
    player_claimed = false;
    flush_clock();
    spdlog::info("{}: player left", id());
  }
}

void Host::close() {
  if (closed) return;
  flush_clock();
  closed = true;
  timer.cancel();
  session->close();
  attached.clear();
  player.reset();
}

}  // namespace

std::shared_ptr<Host> Server::Impl::open(const json& hello, bool& as_player) {
  const std::string role = hello.value("role", std::string("player"));
  std::lock_guard lock(mu);
  if (role == "spectator") {
    if (!hello.contains("session") || !hello["session"].is_string()) throw Error(ErrorCode::SchemaError, "session");
    const auto it = hosts.find(hello["session"].get<std::string>());
    if (it == hosts.end()) throw Error(ErrorCode::IllegalInState, "NoSuchSession");
    as_player = false;
    return it->second;
  }
  if (role != "player") throw Error(ErrorCode::SchemaError, "role");
  const json cfg_json = hello.value("config", json::object());
  if (!cfg_json.is_object()) throw Error(ErrorCode::SchemaError, "config");
  auto cfg = service::config_from_json(cfg_json, options.defaults);
  cfg.map_path = options.map_path;
  cfg.validate();
  as_player = true;
  const std::string id = cfg.session_id();
  if (const auto it = hosts.find(id); it != hosts.end()) {
    if (it->second->player_claimed.exchange(true)) throw Error(ErrorCode::IllegalInState, "PlayerConnected");
    return it->second;
  }
  std::filesystem::create_directories(options.log_dir);
  const auto path = options.log_dir / service::log_file_name(cfg);
  std::unique_ptr<ServiceSession> session;
  if (std::filesystem::exists(path)) {
    session = service::recover(path);
    spdlog::info("{}: recovered from {}", id, path.string());
  } else {
    session = std::make_unique<ServiceSession>(cfg, map, std::make_unique<service::EventLog>(path));
    spdlog::info("{}: new session", id);
  }
  auto host = std::make_shared<Host>(ioc, std::move(session));
  host->player_claimed = true;
  hosts.emplace(id, host);
  return host;
}

void Server::Impl::accept() {
  acceptor.async_accept(asio::make_strand(ioc), [self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // closed by stop
    std::make_shared<Connection>(std::move(socket), self)->run();
    self->accept();
  });
}

Server::Server(ServerOptions options) : impl_(std::make_shared<Impl>(std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  auto& s = *impl_;
  if (s.running) return;
  if (s.options.threads < 1) throw Error(ErrorCode::ConfigError, "threads");
  try {
    s.map = std::make_shared<const game::Map>(
        game::load_map(s.options.map_path.empty() ? game::default_map_path() : s.options.map_path));
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, "map: " + std::string(e.what()));
  }
  beast::error_code ec;
  const auto addr = asio::ip::make_address(s.options.address, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "address");
  const tcp::endpoint ep(addr, s.options.port);
  s.acceptor.open(ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(ep, ec);
  if (!ec) s.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    s.acceptor.close();
    throw Error(ErrorCode::BindError, s.options.address + ":" + std::to_string(s.options.port) + ": " + ec.message());
  }
  s.bound_port = s.acceptor.local_endpoint().port();
  s.running = true;
  s.accept();
  for (int i = 0; i < s.options.threads; ++i) s.threads.emplace_back([&s] { s.ioc.run(); });
  spdlog::info("listening on {}:{}", s.options.address, s.bound_port);
}

std::uint16_t Server::port() const { return impl_->bound_port; }

void Server::stop() {
  auto& s = *impl_;
  if (!s.running) return;
  s.running = false;
  asio::post(s.acceptor.get_executor(), [&s] { s.acceptor.close(); });
  std::vector<std::shared_ptr<Host>> hosts;
  {
    std::lock_guard lock(s.mu);
    for (const auto& [id, h] : s.hosts) hosts.push_back(h);
  }
  for (const auto& h : hosts) {
    std::promise<void> done;
    asio::post(h->strand, [&] {
      try {
        h->close();
      } catch (const std::exception& e) {
        spdlog::error("{}: close failed: {}", h->id(), e.what());
      }
      done.set_value();
    });
    done.get_future().wait();
  }
  s.ioc.stop();
  for (auto& t : s.threads) t.join();
  s.threads.clear();
  std::lock_guard lock(s.mu);
  s.hosts.clear();
}

void Server::run_until_signal() {
  start();
  asio::io_context sig_ctx;
  asio::signal_set signals(sig_ctx, SIGINT, SIGTERM);
  signals.async_wait([](beast::error_code, int) {});
  sig_ctx.run();
  spdlog::info("shutting down");
  stop();
}

std::vector<std::string> Server::session_ids() const {
  std::lock_guard lock(impl_->mu);
  std::vector<std::string> ids;
  for (const auto& [id, h] : impl_->hosts) ids.push_back(id);
  return ids;
}

}  // namespace riverpilot::server
