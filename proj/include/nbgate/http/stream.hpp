#ifndef NBGATE_HTTP_STREAM_HPP
#define NBGATE_HTTP_STREAM_HPP

#include <memory>
#include <optional>
#include <string>

typedef struct ssl_ctx_st SSL_CTX;
typedef struct ssl_st SSL;

namespace nbgate::http {

// Blocking byte stream over a socket, plain or TLS.
class Stream {
 public:
  virtual ~Stream() = default;

  // >0 bytes read; 0 clean EOF; <0 error (check timed_out()).
  virtual int read_some(char* buf, size_t n) = 0;
  virtual bool write_all(const char* buf, size_t n) = 0;
  bool write_all(std::string_view s) { return write_all(s.data(), s.size()); }

  virtual void set_read_timeout_ms(long ms) = 0;
  virtual void shutdown_both() = 0;
  virtual int fd() const = 0;

  bool timed_out() const { return timed_out_; }

 protected:
  bool timed_out_ = false;
};

class TcpStream : public Stream {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  int read_some(char* buf, size_t n) override;
  bool write_all(const char* buf, size_t n) override;
  using Stream::write_all;
  void set_read_timeout_ms(long ms) override;
  void shutdown_both() override;
  int fd() const override { return fd_; }
  int release();  // caller takes ownership of the fd

 private:
  int fd_;
};

class TlsServerContext {
 public:
  // Throws std::runtime_error on unreadable or mismatched material.
  TlsServerContext(const std::string& cert_path, const std::string& key_path);
  ~TlsServerContext();
  TlsServerContext(const TlsServerContext&) = delete;
  TlsServerContext& operator=(const TlsServerContext&) = delete;
  SSL_CTX* handle() const { return ctx_; }

 private:
  SSL_CTX* ctx_ = nullptr;
};

class TlsClientContext {
 public:
  // With a CA file the peer certificate is verified; without, verification is off
  // (local test topologies).
  explicit TlsClientContext(const std::string& ca_file = "");
  ~TlsClientContext();
  TlsClientContext(const TlsClientContext&) = delete;
  TlsClientContext& operator=(const TlsClientContext&) = delete;
  SSL_CTX* handle() const { return ctx_; }

 private:
  SSL_CTX* ctx_ = nullptr;
};

class TlsStream : public Stream {
 public:
  // Takes ownership of fd. Performs the handshake; throws std::runtime_error on failure.
  static std::unique_ptr<TlsStream> accept(TlsServerContext& ctx, int fd);
  static std::unique_ptr<TlsStream> connect(TlsClientContext& ctx, int fd,
                                            const std::string& sni_host);
  ~TlsStream() override;

  int read_some(char* buf, size_t n) override;
  bool write_all(const char* buf, size_t n) override;
  using Stream::write_all;
  void set_read_timeout_ms(long ms) override;
  void shutdown_both() override;
  int fd() const override { return fd_; }

 private:
  TlsStream(SSL* ssl, int fd) : ssl_(ssl), fd_(fd) {}
  SSL* ssl_;
  int fd_;
};

// Connects within timeout_ms; returns nullptr on failure (error text in *error when given).
std::unique_ptr<TcpStream> tcp_connect(const std::string& host, uint16_t port, long timeout_ms,
                                       std::string* error = nullptr);

class TcpListener {
 public:
  // Binds and listens; port 0 picks an ephemeral port. Throws std::runtime_error.
  TcpListener(const std::string& host, uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  // Returns the accepted fd and fills peer_ip; -1 once closed.
  int accept_fd(std::string* peer_ip);
  uint16_t port() const { return port_; }
  void close();

 private:
  int fd_ = -1;
  uint16_t port_ = 0;
};

void ignore_sigpipe();

}  // namespace nbgate::http

#endif
