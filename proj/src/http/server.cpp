#include "nbgate/http/server.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <chrono>

#include "nbgate/util.hpp"

namespace nbgate::http {

namespace {

// Keeps the server's force-shutdown pointer valid for exactly as long as the
// hijacked transport lives.
class TrackedStream : public Stream {
 public:
  TrackedStream(std::unique_ptr<Stream> inner, std::mutex* mu, Stream** entry)
      : inner_(std::move(inner)), mu_(mu), entry_(entry) {}
  ~TrackedStream() override {
    if (mu_ && entry_) {
      std::lock_guard<std::mutex> lock(*mu_);
      *entry_ = nullptr;
    }
  }
  int read_some(char* buf, size_t n) override {
    int r = inner_->read_some(buf, n);
    timed_out_ = inner_->timed_out();
    return r;
  }
  bool write_all(const char* buf, size_t n) override { return inner_->write_all(buf, n); }
  using Stream::write_all;
  void set_read_timeout_ms(long ms) override { inner_->set_read_timeout_ms(ms); }
  void shutdown_both() override { inner_->shutdown_both(); }
  int fd() const override { return inner_->fd(); }

 private:
  std::unique_ptr<Stream> inner_;
  std::mutex* mu_;
  Stream** entry_;
};

}  // namespace

IoResult HttpConn::read_body(std::string& out) {
  if (body_read_) {
    out = request.body;
    return IoResult::Ok;
  }
  IoResult r = reader_->read_body_to_string(request.headers, true, max_body_, out);
  if (r == IoResult::Ok) {
    request.body = out;
    body_read_ = true;
  }
  return r;
}

std::pair<std::unique_ptr<Stream>, std::string> HttpConn::hijack() {
  hijacked_ = true;
  auto tracked = std::make_unique<TrackedStream>(std::move(stream_), server_mu_, slot_entry_);
  return {std::move(tracked), reader_->take_buffered()};
}

void HttpConn::mark_raw_response(bool keep_alive_after) {
  raw_response_ = true;
  raw_keep_alive_ = keep_alive_after;
}

HttpServer::HttpServer(Options options, Handler handler)
    : options_(std::move(options)), handler_(std::move(handler)) {
  ignore_sigpipe();
  if (!options_.tls_cert_path.empty() || !options_.tls_key_path.empty()) {
    tls_ctx_ = std::make_unique<TlsServerContext>(options_.tls_cert_path, options_.tls_key_path);
  }
  listener_ = std::make_unique<TcpListener>(options_.host, options_.port);
}

HttpServer::~HttpServer() { stop(0); }

uint16_t HttpServer::port() const { return listener_ ? listener_->port() : 0; }

void HttpServer::start() {
  if (started_) return;
  started_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void HttpServer::reap_finished() {
  std::list<ConnSlot> dead;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (it->done) {
        dead.splice(dead.end(), conns_, it++);
      } else {
        ++it;
      }
    }
  }
  for (auto& slot : dead) {
    if (slot.thread.joinable()) slot.thread.join();
  }
}

void HttpServer::accept_loop() {
  while (true) {
    std::string peer_ip;
    int fd = listener_->accept_fd(&peer_ip);
    if (fd < 0) break;  // listener closed
    reap_finished();
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
      break;
    }
    conns_.emplace_back();
    auto slot = std::prev(conns_.end());
    slot->thread =
        std::thread([this, fd, peer_ip, slot] { handle_connection(fd, peer_ip, slot); });
  }
}

void HttpServer::handle_connection(int fd, std::string peer_ip,
                                   std::list<ConnSlot>::iterator slot) {
  std::unique_ptr<Stream> stream;
  if (tls_ctx_) {
    try {
      stream = TlsStream::accept(*tls_ctx_, fd);
    } catch (const std::exception&) {
      stream = nullptr;  // plaintext or broken handshake: refused
    }
  } else {
    stream = std::make_unique<TcpStream>(fd);
  }

  if (stream) {
    stream->set_read_timeout_ms(options_.read_timeout_ms);
    {
      std::lock_guard<std::mutex> lock(mu_);
      slot->stream = stream.get();
    }

    Http1Reader reader(*stream);
    bool open = true;
    while (open) {
      {
        std::lock_guard<std::mutex> lock(mu_);
        if (stopping_) break;
      }
      HttpConn conn;
      conn.max_body_ = options_.max_body_bytes;
      conn.tls_ = tls_ctx_ != nullptr;
      conn.client_ip = peer_ip;
      conn.reader_ = &reader;
      conn.server_mu_ = &mu_;
      conn.slot_entry_ = &slot->stream;

      IoResult r = reader.read_request_head(conn.request);
      if (r != IoResult::Ok) {
        if (r == IoResult::Malformed || r == IoResult::TooLarge) {
          send_response(*stream, Response::make(400, "bad request\n"), true);
        }
        break;
      }

      double t0 = steady_seconds();
      conn.stream_ = std::move(stream);
      Response res = handler_(conn);

      if (log_) {
        AccessLogEntry entry;
        entry.timestamp = iso8601_now();
        entry.client_ip = peer_ip;
        entry.method = conn.request.method;
        entry.path = conn.request.path();
        entry.status = conn.hijacked_ ? 101 : res.status;
        entry.duration_ms = (steady_seconds() - t0) * 1000.0;
        log_(entry);
      }

      if (conn.hijacked_) {
        // Handler owns the transport now; this thread is finished with it.
        std::lock_guard<std::mutex> lock(mu_);
        slot->stream = nullptr;
        slot->done = true;
        cv_.notify_all();
        return;
      }

      stream = std::move(conn.stream_);
      if (conn.raw_response_) {
        open = conn.raw_keep_alive_;
        continue;
      }

      bool peer_keep = Http1Reader::keep_alive(conn.request.version, conn.request.headers);
      // A body the handler never consumed would desynchronize the next request.
      bool body_pending = !conn.body_read_ && (conn.request.headers.contains("Content-Length") ||
                                               conn.request.headers.contains("Transfer-Encoding"));
      bool keep = peer_keep && !body_pending;
      bool is_head = conn.request.method == "HEAD";
      if (is_head) res.body.clear();
      if (!send_response(*stream, std::move(res), !keep)) break;
      open = keep;
    }
  }

  std::lock_guard<std::mutex> lock(mu_);
  slot->stream = nullptr;
  slot->done = true;
  cv_.notify_all();
}

void HttpServer::stop(long drain_ms) {
  if (!started_) {
    listener_.reset();
    return;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    stopping_ = true;
  }
  if (listener_) listener_->close();
  if (acceptor_.joinable()) acceptor_.join();

  {
    std::unique_lock<std::mutex> lock(mu_);
    auto all_done = [&] {
      for (const auto& c : conns_) {
        if (!c.done) return false;
      }
      return true;
    };
    if (!cv_.wait_for(lock, std::chrono::milliseconds(drain_ms), all_done)) {
      for (auto& c : conns_) {
        if (!c.done && c.stream) c.stream->shutdown_both();
      }
      cv_.wait(lock, all_done);
    }
  }
  for (auto& c : conns_) {
    if (c.thread.joinable()) c.thread.join();
  }
  conns_.clear();
  listener_.reset();
  started_ = false;
  stopping_ = false;
}

}  // namespace nbgate::http
