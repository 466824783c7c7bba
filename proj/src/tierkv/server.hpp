#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

#include "tierkv/elastic_exec.hpp"

// Line-based TCP front end.
//
// Requests (LF-terminated):  SET <key> <base64>, GET <key>, DEL <key>,
//                            STATS, QUIT
// Responses:                 +OK, $<base64>, $-, :<int>, -ERR <msg>;
//                            STATS answers `key value` lines and a lone `.`
namespace tierkv::server {

inline constexpr std::size_t kMaxKeyBytes = 512;
inline constexpr std::size_t kMaxValueBytes = 16u << 20;
// base64 of the largest value plus command and key.
inline constexpr std::size_t kMaxLineBytes = (kMaxValueBytes + 2) / 3 * 4 + kMaxKeyBytes + 16;

bool valid_wire_key(std::string_view key);

struct Request {
  enum class Kind { kSet, kGet, kDel, kStats, kQuit };
  Kind kind = Kind::kGet;
  std::string key;
  std::string value;
};

// Returns the request or an error message for -ERR.
std::variant<Request, std::string> parse_request(std::string_view line);

std::string format_result(const Request& req, const sync::OpResult& result);

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7379;  // 0 picks a free port
  std::size_t max_connections = 1024;
};

// host:port, host defaults to 127.0.0.1 when only ":port" or "port" given.
ServerOptions parse_listen(std::string_view listen);

class Server {
 public:
  Server(exec::ElasticExecutor& executor, ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting. Throws kBindFailure.
  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  std::uint16_t port() const { return port_; }
  std::uint64_t connections_accepted() const { return accepted_.load(); }
  std::size_t open_connections() const;

  // STATS payload without the terminating dot.
  std::string stats_text() const;

 private:
  struct Conn {
    int fd = -1;
    std::uint64_t id = 0;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve_connection(Conn& c);
  void reap_finished();

  exec::ElasticExecutor& executor_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  std::atomic<bool> stopping_{false};
  bool stopped_ = false;

  mutable std::mutex conns_mu_;
  std::list<Conn> conns_;
  std::atomic<std::uint64_t> accepted_{0};
  std::atomic<std::uint64_t> next_conn_id_{1};

  std::mutex stop_mu_;
  std::mutex wait_mu_;
  std::condition_variable wait_cv_;
};

// `key value` lines describing the store behind an executor.
std::string stats_lines(exec::ElasticExecutor& executor);

// Blocking client for the wire protocol.
class Client {
 public:
  // Throws kStoreUnreachable.
  Client(const std::string& host, std::uint16_t port);
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // Sends one request line and returns the first response line. Throws
  // kStoreUnreachable if the connection drops.
  std::string command(std::string_view line);

  void set(std::string_view key, std::string_view value);
  std::optional<std::string> get(std::string_view key);
  bool del(std::string_view key);
  std::map<std::string, std::string> stats();
  void quit();

  // Raw access for pipelining tests.
  void send_raw(std::string_view bytes);
  std::string read_line();

 private:
  int fd_ = -1;
  std::string buf_;
};

}  // namespace tierkv::server
