#ifndef NBGATE_HTTP_SERVER_HPP
#define NBGATE_HTTP_SERVER_HPP

#include <condition_variable>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "nbgate/http/http1.hpp"
#include "nbgate/http/message.hpp"
#include "nbgate/http/stream.hpp"

namespace nbgate::http {

// One in-flight request on one connection. The handler may answer by returning
// a Response, by writing raw bytes itself (mark_raw_response), or by taking the
// connection over entirely (hijack, for WebSocket).
class HttpConn {
 public:
  Request request;
  std::string client_ip;

  Http1Reader& reader() { return *reader_; }
  Stream& stream() { return *stream_; }
  bool is_tls() const { return tls_; }

  // Buffers the request body up to the server's max_body limit.
  IoResult read_body(std::string& out);

  // Ownership of the transport plus any bytes already buffered past the head.
  std::pair<std::unique_ptr<Stream>, std::string> hijack();
  bool hijacked() const { return hijacked_; }

  void mark_raw_response(bool keep_alive_after);

 private:
  friend class HttpServer;
  std::unique_ptr<Stream> stream_;
  Http1Reader* reader_ = nullptr;  // owned by the connection loop
  size_t max_body_ = 0;
  bool tls_ = false;
  bool body_read_ = false;
  bool hijacked_ = false;
  bool raw_response_ = false;
  bool raw_keep_alive_ = false;
  // Shutdown registry hookup for hijacked streams.
  std::mutex* server_mu_ = nullptr;
  Stream** slot_entry_ = nullptr;
};

struct AccessLogEntry {
  std::string timestamp;
  std::string client_ip;
  std::string method;
  std::string path;
  int status = 0;
  double duration_ms = 0.0;
};

// Thread-per-connection HTTP/1.1 server. Binding happens in the constructor
// (fail fast); start() launches the acceptor; stop() drains in-flight work.
class HttpServer {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    uint16_t port = 0;  // 0 picks an ephemeral port
    std::string tls_cert_path;  // TLS enabled when both paths set
    std::string tls_key_path;
    long read_timeout_ms = 65000;
    size_t max_body_bytes = 10ull * 1024 * 1024;
  };

  using Handler = std::function<Response(HttpConn&)>;
  using LogFn = std::function<void(const AccessLogEntry&)>;

  HttpServer(Options options, Handler handler);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  void start();
  // Stops accepting, waits up to drain_ms for in-flight requests, then forces
  // remaining connections shut.
  void stop(long drain_ms = 2000);

  uint16_t port() const;
  bool tls_enabled() const { return tls_ctx_ != nullptr; }
  void set_log(LogFn fn) { log_ = std::move(fn); }

 private:
  struct ConnSlot {
    std::thread thread;
    Stream* stream = nullptr;  // guarded by mu_; null once the thread is done
    bool done = false;
  };

  void accept_loop();
  void handle_connection(int fd, std::string peer_ip, std::list<ConnSlot>::iterator slot);
  void reap_finished();

  Options options_;
  Handler handler_;
  LogFn log_;
  std::unique_ptr<TcpListener> listener_;
  std::unique_ptr<TlsServerContext> tls_ctx_;
  std::thread acceptor_;
  bool started_ = false;

  std::mutex mu_;
  std::condition_variable cv_;
  std::list<ConnSlot> conns_;
  bool stopping_ = false;
};

}  // namespace nbgate::http

#endif
