#include "tierkv/server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <future>
#include <sstream>
#include <vector>

#include "tierkv/codec.hpp"
#include "tierkv/error.hpp"

namespace tierkv::server {

bool valid_wire_key(std::string_view key) {
  if (key.empty() || key.size() > kMaxKeyBytes) return false;
  return std::all_of(key.begin(), key.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u > 0x20 && u < 0x7F;
  });
}

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (start <= line.size()) {
    const auto sp = line.find(' ', start);
    const auto end = sp == std::string_view::npos ? line.size() : sp;
    parts.push_back(line.substr(start, end - start));
    if (sp == std::string_view::npos) break;
    start = sp + 1;
  }
  return parts;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

}  // namespace

std::variant<Request, std::string> parse_request(std::string_view line) {
  if (line.empty()) return std::string("empty command");
  const auto parts = split(line);
  const std::string cmd = upper(parts[0]);
  Request r;
  auto need = [&](std::size_t n) -> std::optional<std::string> {
    if (parts.size() != n) {
      return cmd + " expects " + std::to_string(n - 1) + " argument" + (n == 2 ? "" : "s");
    }
    return std::nullopt;
  };
  if (cmd == "STATS" || cmd == "QUIT") {
    if (auto e = need(1)) return *e;
    r.kind = cmd == "STATS" ? Request::Kind::kStats : Request::Kind::kQuit;
    return r;
  }
  if (cmd == "GET" || cmd == "DEL") {
    if (auto e = need(2)) return *e;
    r.kind = cmd == "GET" ? Request::Kind::kGet : Request::Kind::kDel;
  } else if (cmd == "SET") {
    if (auto e = need(3)) return *e;
    r.kind = Request::Kind::kSet;
  } else {
    return "unknown command '" + one_line(std::string(parts[0].substr(0, 32))) + "'";
  }
  if (!valid_wire_key(parts[1])) return std::string("key must be 1-512 printable non-space ASCII bytes");
  r.key = std::string(parts[1]);
  if (r.kind == Request::Kind::kSet) {
    if (parts[2].size() > (kMaxValueBytes + 2) / 3 * 4) return std::string("value larger than 16 MiB");
    auto v = codec::base64_decode(parts[2]);
    if (!v) return std::string("value is not valid base64");
    if (v->size() > kMaxValueBytes) return std::string("value larger than 16 MiB");
    r.value = std::move(*v);
  }
  return r;
}

std::string format_result(const Request& req, const sync::OpResult& result) {
  if (!result.ok()) {
    return "-ERR " + std::string(to_string(result.status)) + ": " + one_line(result.message);
  }
  switch (req.kind) {
    case Request::Kind::kSet:
      return "+OK";
    case Request::Kind::kGet:
      return result.value ? "$" + codec::base64_encode(*result.value) : "$-";
    case Request::Kind::kDel:
      return result.existed ? ":1" : ":0";
    default:
      return "+OK";
  }
}

ServerOptions parse_listen(std::string_view listen) {
  ServerOptions o;
  std::string_view port_text = listen;
  const auto colon = listen.rfind(':');
  if (colon != std::string_view::npos) {
    if (colon > 0) o.host = std::string(listen.substr(0, colon));
    port_text = listen.substr(colon + 1);
  }
  unsigned port = 0;
  auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (port_text.empty() || ec != std::errc() || p != port_text.data() + port_text.size() || port > 65535) {
    raise(ErrorCode::kConfigError, "bad listen address '" + std::string(listen) + "'");
  }
  o.port = static_cast<std::uint16_t>(port);
  return o;
}

// ---------------------------------------------------------------------------
// Server

Server::Server(exec::ElasticExecutor& executor, ServerOptions options)
    : executor_(executor), options_(std::move(options)) {}

Server::~Server() { stop(); }

void Server::start() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(options_.port);
  const char* host = options_.host.empty() ? nullptr : options_.host.c_str();
  if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
    raise(ErrorCode::kBindFailure, "cannot resolve " + options_.host + ": " + ::gai_strerror(rc));
  }
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    raise(ErrorCode::kBindFailure, std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(listen_fd_, 128) != 0) {
    const int err = errno;
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    listen_fd_ = -1;
    raise(ErrorCode::kBindFailure, "cannot listen on " + options_.host + ":" + port + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  std::lock_guard once(stop_mu_);
  {
    std::lock_guard lock(wait_mu_);
    if (stopped_) return;
  }
  stopping_ = true;
  if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard lock(conns_mu_);
    for (auto& c : conns_) ::shutdown(c.fd, SHUT_RDWR);
  }
  for (auto& c : conns_) {
    if (c.thread.joinable()) c.thread.join();
    ::close(c.fd);
  }
  {
    std::lock_guard lock(conns_mu_);
    conns_.clear();
  }
  {
    std::lock_guard lock(wait_mu_);
    stopped_ = true;
  }
  wait_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock lock(wait_mu_);
  wait_cv_.wait(lock, [this] { return stopped_; });
}

std::size_t Server::open_connections() const {
  std::lock_guard lock(conns_mu_);
  return static_cast<std::size_t>(std::count_if(conns_.begin(), conns_.end(), [](const Conn& c) { return !c.done; }));
}

void Server::reap_finished() {
  std::lock_guard lock(conns_mu_);
  for (auto it = conns_.begin(); it != conns_.end();) {
    if (it->done) {
      if (it->thread.joinable()) it->thread.join();
      ::close(it->fd);
      it = conns_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      if (stopping_) return;
      if (errno == EMFILE || errno == ENFILE) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      return;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    reap_finished();
    if (open_connections() >= options_.max_connections) {
      send_all(fd, "-ERR too many connections\n");
      ::close(fd);
      continue;
    }
    ++accepted_;
    std::lock_guard lock(conns_mu_);
    Conn& c = conns_.emplace_back();
    c.fd = fd;
    c.id = next_conn_id_++;
    c.thread = std::thread([this, &c] { serve_connection(c); });
  }
}

std::string stats_lines(exec::ElasticExecutor& executor) {
  const auto st = executor.store().stats();
  std::ostringstream out;
  auto line = [&](const char* k, auto v) { out << k << ' ' << v << '\n'; };
  line("gets", st.gets);
  line("sets", st.sets);
  line("dels", st.dels);
  line("errors", st.errors);
  line("cache_hits", st.cache.hits);
  line("cache_misses", st.cache.misses);
  line("evictions", st.cache.evictions);
  line("entries", st.cache.entries);
  line("bytes_used", st.cache.bytes_used);
  line("bytes_capacity", st.cache.bytes_capacity);
  line("dirty_bytes", st.cache.dirty_bytes);
  line("dirty_entries", st.cache.dirty_entries);
  line("storage_reads", st.storage.reads);
  line("storage_read_calls", st.storage.read_calls);
  line("storage_multi_reads", st.storage.multi_reads);
  line("storage_writes", st.storage.writes);
  line("storage_batches", st.storage.batches);
  line("storage_failed_batches", st.storage.failed_batches);
  line("backpressure", st.backpressure);
  line("flushes", st.flushes);
  line("flush_failures", st.flush_failures);
  line("deferred_fetches", st.deferred_fetches);
  line("miss_penalty_ns", st.miss_penalty_ns);
  line("compression_bytes_in", st.compression.bytes_in);
  line("compression_bytes_out", st.compression.bytes_out);
  line("policy", sync::to_string(executor.store().policy()));
  line("exec_mode", exec::to_string(executor.mode()));
  return out.str();
}

std::string Server::stats_text() const {
  return stats_lines(executor_) + "connections " + std::to_string(open_connections()) + "\n";
}

void Server::serve_connection(Conn& c) {
  struct Pending {
    Request req;
    std::future<sync::OpResult> result;
    std::string ready;  // used when there is no future
  };
  std::vector<Pending> pending;
  std::string out;
  bool open = true;

  auto settle = [&] {
    for (auto& p : pending) {
      if (p.result.valid()) {
        out += format_result(p.req, p.result.get());
      } else {
        out += p.ready;
      }
      out += '\n';
    }
    pending.clear();
    if (!out.empty()) {
      if (!send_all(c.fd, out)) open = false;
      out.clear();
    }
  };

  std::string buf;
  bool discarding = false;
  char chunk[64 * 1024];
  while (open && !stopping_) {
    const ssize_t n = ::recv(c.fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));

    std::size_t start = 0;
    for (;;) {
      const auto nl = buf.find('\n', start);
      if (nl == std::string::npos) break;
      std::string_view line(buf.data() + start, nl - start);
      start = nl + 1;
      if (discarding) {
        discarding = false;
        pending.push_back({{}, {}, "-ERR line too long"});
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      auto parsed = parse_request(line);
      if (auto* err = std::get_if<std::string>(&parsed)) {
        pending.push_back({{}, {}, "-ERR " + *err});
        continue;
      }
      Request& req = std::get<Request>(parsed);
      if (req.kind == Request::Kind::kStats) {
        settle();
        pending.push_back({{}, {}, stats_text() + "."});
        continue;
      }
      if (req.kind == Request::Kind::kQuit) {
        pending.push_back({{}, {}, "+OK"});
        open = false;
        break;
      }
      sync::Op op;
      op.connection = c.id;
      op.key = req.key;
      if (req.kind == Request::Kind::kSet) {
        op.kind = sync::OpKind::kSet;
        op.value = std::move(req.value);
        req.value.clear();
      } else {
        op.kind = req.kind == Request::Kind::kGet ? sync::OpKind::kGet : sync::OpKind::kDel;
      }
      auto fut = executor_.submit(std::move(op));
      pending.push_back({std::move(req), std::move(fut), {}});
    }
    buf.erase(0, start);
    if (buf.size() > kMaxLineBytes) {
      discarding = true;
      buf.clear();
    }
    settle();
  }
  // Answers already owed are still collected so no operation is left
  // dangling on the executor.
  for (auto& p : pending) {
    if (p.result.valid()) p.result.wait();
  }
  if (open) settle();
  ::shutdown(c.fd, SHUT_RDWR);
  c.done = true;
}

// ---------------------------------------------------------------------------
// Client

Client::Client(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
    raise(ErrorCode::kStoreUnreachable, "cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0 || ::connect(fd_, res->ai_addr, res->ai_addrlen) != 0) {
    const int err = errno;
    ::freeaddrinfo(res);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    raise(ErrorCode::kStoreUnreachable,
          "cannot connect to " + host + ":" + std::to_string(port) + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_raw(std::string_view bytes) {
  if (!send_all(fd_, bytes)) raise(ErrorCode::kStoreUnreachable, "connection lost while sending");
}

std::string Client::read_line() {
  for (;;) {
    const auto nl = buf_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buf_.substr(0, nl);
      buf_.erase(0, nl + 1);
      return line;
    }
    char chunk[64 * 1024];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) raise(ErrorCode::kStoreUnreachable, "connection closed by server");
    buf_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string Client::command(std::string_view line) {
  std::string msg(line);
  msg += '\n';
  send_raw(msg);
  return read_line();
}

namespace {

[[noreturn]] void raise_from_reply(const std::string& reply) {
  if (reply.rfind("-ERR ", 0) == 0) {
    const std::string body = reply.substr(5);
    const auto colon = body.find(':');
    const ErrorCode code = colon == std::string::npos ? ErrorCode::kInvalidArgument
                                                      : error_code_from_string(body.substr(0, colon));
    raise(code, body);
  }
  raise(ErrorCode::kInternal, "unexpected reply '" + reply.substr(0, 64) + "'");
}

}  // namespace

void Client::set(std::string_view key, std::string_view value) {
  const auto reply = command("SET " + std::string(key) + " " + codec::base64_encode(value));
  if (reply != "+OK") raise_from_reply(reply);
}

std::optional<std::string> Client::get(std::string_view key) {
  const auto reply = command("GET " + std::string(key));
  if (reply == "$-") return std::nullopt;
  if (!reply.empty() && reply[0] == '$') {
    auto v = codec::base64_decode(std::string_view(reply).substr(1));
    if (!v) raise(ErrorCode::kInternal, "server sent invalid base64");
    return v;
  }
  raise_from_reply(reply);
}

bool Client::del(std::string_view key) {
  const auto reply = command("DEL " + std::string(key));
  if (reply == ":1") return true;
  if (reply == ":0") return false;
  raise_from_reply(reply);
}

std::map<std::string, std::string> Client::stats() {
  std::map<std::string, std::string> out;
  std::string line = command("STATS");
  while (line != ".") {
    if (line.rfind("-ERR", 0) == 0) raise_from_reply(line);
    const auto sp = line.find(' ');
    if (sp != std::string::npos) out[line.substr(0, sp)] = line.substr(sp + 1);
    line = read_line();
  }
  return out;
}

void Client::quit() {
  try {
    command("QUIT");
  } catch (const Error&) {
  }
}

}  // namespace tierkv::server
