#include "nbgate/http/stream.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/err.h>
#include <openssl/ssl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace nbgate::http {

namespace {

void set_timeout(int fd, int which, long ms) {
  timeval tv{};
  tv.tv_sec = ms / 1000;
  tv.tv_usec = (ms % 1000) * 1000;
  setsockopt(fd, SOL_SOCKET, which, &tv, sizeof(tv));
}

std::string ssl_error_text() {
  char buf[256];
  unsigned long err = ERR_get_error();
  if (err == 0) return "unknown TLS error";
  ERR_error_string_n(err, buf, sizeof(buf));
  ERR_clear_error();
  return buf;
}

}  // namespace

void ignore_sigpipe() {
  static std::once_flag once;
  std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

TcpStream::TcpStream(int fd) : fd_(fd) {
  int flag = 1;
  setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &flag, sizeof(flag));
}

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

int TcpStream::read_some(char* buf, size_t n) {
  timed_out_ = false;
  while (true) {
    ssize_t r = ::recv(fd_, buf, n, 0);
    if (r >= 0) return static_cast<int>(r);
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) timed_out_ = true;
    return -1;
  }
}

bool TcpStream::write_all(const char* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    ssize_t w = ::send(fd_, buf + sent, n - sent, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(w);
  }
  return true;
}

void TcpStream::set_read_timeout_ms(long ms) { set_timeout(fd_, SO_RCVTIMEO, ms); }

void TcpStream::shutdown_both() { ::shutdown(fd_, SHUT_RDWR); }

int TcpStream::release() {
  int fd = fd_;
  fd_ = -1;
  return fd;
}

TlsServerContext::TlsServerContext(const std::string& cert_path, const std::string& key_path) {
  ctx_ = SSL_CTX_new(TLS_server_method());
  if (!ctx_) throw std::runtime_error("SSL_CTX_new failed");
  if (SSL_CTX_use_certificate_chain_file(ctx_, cert_path.c_str()) != 1 ||
      SSL_CTX_use_PrivateKey_file(ctx_, key_path.c_str(), SSL_FILETYPE_PEM) != 1 ||
      SSL_CTX_check_private_key(ctx_) != 1) {
    std::string err = ssl_error_text();
    SSL_CTX_free(ctx_);
    throw std::runtime_error("TLS material rejected (" + cert_path + ", " + key_path +
                             "): " + err);
  }
}

TlsServerContext::~TlsServerContext() {
  if (ctx_) SSL_CTX_free(ctx_);
}

TlsClientContext::TlsClientContext(const std::string& ca_file) {
  ctx_ = SSL_CTX_new(TLS_client_method());
  if (!ctx_) throw std::runtime_error("SSL_CTX_new failed");
  if (!ca_file.empty()) {
    if (SSL_CTX_load_verify_locations(ctx_, ca_file.c_str(), nullptr) != 1) {
      std::string err = ssl_error_text();
      SSL_CTX_free(ctx_);
      throw std::runtime_error("cannot load CA file " + ca_file + ": " + err);
    }
    SSL_CTX_set_verify(ctx_, SSL_VERIFY_PEER, nullptr);
  } else {
    SSL_CTX_set_verify(ctx_, SSL_VERIFY_NONE, nullptr);
  }
}

TlsClientContext::~TlsClientContext() {
  if (ctx_) SSL_CTX_free(ctx_);
}

std::unique_ptr<TlsStream> TlsStream::accept(TlsServerContext& ctx, int fd) {
  SSL* ssl = SSL_new(ctx.handle());
  if (!ssl) {
    ::close(fd);
    throw std::runtime_error("SSL_new failed");
  }
  SSL_set_fd(ssl, fd);
  if (SSL_accept(ssl) != 1) {
    std::string err = ssl_error_text();
    SSL_free(ssl);
    ::close(fd);
    throw std::runtime_error("TLS handshake failed: " + err);
  }
  return std::unique_ptr<TlsStream>(new TlsStream(ssl, fd));
}

std::unique_ptr<TlsStream> TlsStream::connect(TlsClientContext& ctx, int fd,
                                              const std::string& sni_host) {
  SSL* ssl = SSL_new(ctx.handle());
  if (!ssl) {
    ::close(fd);
    throw std::runtime_error("SSL_new failed");
  }
  SSL_set_fd(ssl, fd);
  if (!sni_host.empty()) {
    in6_addr probe6;
    in_addr probe4;
    bool ip_literal = inet_pton(AF_INET, sni_host.c_str(), &probe4) == 1 ||
                      inet_pton(AF_INET6, sni_host.c_str(), &probe6) == 1;
    if (ip_literal) {
      X509_VERIFY_PARAM_set1_ip_asc(SSL_get0_param(ssl), sni_host.c_str());
    } else {
      SSL_set_tlsext_host_name(ssl, sni_host.c_str());
      SSL_set1_host(ssl, sni_host.c_str());
    }
  }
  if (SSL_connect(ssl) != 1) {
    std::string err = ssl_error_text();
    SSL_free(ssl);
    ::close(fd);
    throw std::runtime_error("TLS connect failed: " + err);
  }
  return std::unique_ptr<TlsStream>(new TlsStream(ssl, fd));
}

TlsStream::~TlsStream() {
  if (ssl_) {
    SSL_shutdown(ssl_);
    SSL_free(ssl_);
  }
  if (fd_ >= 0) ::close(fd_);
}

int TlsStream::read_some(char* buf, size_t n) {
  timed_out_ = false;
  while (true) {
    ERR_clear_error();
    int r = SSL_read(ssl_, buf, static_cast<int>(n));
    if (r > 0) return r;
    int err = SSL_get_error(ssl_, r);
    if (err == SSL_ERROR_ZERO_RETURN) return 0;
    if (err == SSL_ERROR_SYSCALL) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) timed_out_ = true;
      if (errno == 0) return 0;  // peer closed without close_notify
    }
    return -1;
  }
}

bool TlsStream::write_all(const char* buf, size_t n) {
  size_t sent = 0;
  while (sent < n) {
    ERR_clear_error();
    int w = SSL_write(ssl_, buf + sent, static_cast<int>(n - sent));
    if (w <= 0) {
      if (SSL_get_error(ssl_, w) == SSL_ERROR_SYSCALL && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<size_t>(w);
  }
  return true;
}

void TlsStream::set_read_timeout_ms(long ms) { set_timeout(fd_, SO_RCVTIMEO, ms); }

void TlsStream::shutdown_both() { ::shutdown(fd_, SHUT_RDWR); }

std::unique_ptr<TcpStream> tcp_connect(const std::string& host, uint16_t port, long timeout_ms,
                                       std::string* error) {
  ignore_sigpipe();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  std::string port_str = std::to_string(port);
  int rc = getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res);
  if (rc != 0) {
    if (error) *error = std::string("resolve ") + host + ": " + gai_strerror(rc);
    return nullptr;
  }

  std::unique_ptr<TcpStream> out;
  std::string last_err = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, SOCK_STREAM, 0);
    if (fd < 0) continue;
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int c = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (c != 0 && errno != EINPROGRESS) {
      last_err = std::strerror(errno);
      ::close(fd);
      continue;
    }
    if (c != 0) {
      pollfd pfd{fd, POLLOUT, 0};
      int pr = ::poll(&pfd, 1, static_cast<int>(timeout_ms));
      if (pr <= 0) {
        last_err = pr == 0 ? "connect timeout" : std::strerror(errno);
        ::close(fd);
        continue;
      }
      int so_err = 0;
      socklen_t len = sizeof(so_err);
      getsockopt(fd, SOL_SOCKET, SO_ERROR, &so_err, &len);
      if (so_err != 0) {
        last_err = std::strerror(so_err);
        ::close(fd);
        continue;
      }
    }
    fcntl(fd, F_SETFL, flags);
    out = std::make_unique<TcpStream>(fd);
    break;
  }
  freeaddrinfo(res);
  if (!out && error) *error = last_err;
  return out;
}

TcpListener::TcpListener(const std::string& host, uint16_t port) {
  ignore_sigpipe();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  std::string port_str = std::to_string(port);
  int rc = getaddrinfo(host.empty() ? nullptr : host.c_str(), port_str.c_str(), &hints, &res);
  if (rc != 0) throw std::runtime_error(std::string("resolve ") + host + ": " + gai_strerror(rc));

  std::string last_err = "no addresses";
  for (addrinfo* ai = res; ai; ai = ai->ai_next) {
    int fd = ::socket(ai->ai_family, SOCK_STREAM, 0);
    if (fd < 0) continue;
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) != 0 || ::listen(fd, 512) != 0) {
      last_err = std::strerror(errno);
      ::close(fd);
      continue;
    }
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getsockname(fd, reinterpret_cast<sockaddr*>(&ss), &len);
    port_ = ss.ss_family == AF_INET
                ? ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port)
                : ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    fd_ = fd;
    break;
  }
  freeaddrinfo(res);
  if (fd_ < 0) throw std::runtime_error("cannot listen on " + host + ":" + port_str + ": " + last_err);
}

TcpListener::~TcpListener() { close(); }

int TcpListener::accept_fd(std::string* peer_ip) {
  while (true) {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    int fd = ::accept(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return -1;
    }
    if (peer_ip) {
      char buf[INET6_ADDRSTRLEN] = {0};
      if (ss.ss_family == AF_INET) {
        inet_ntop(AF_INET, &reinterpret_cast<sockaddr_in*>(&ss)->sin_addr, buf, sizeof(buf));
      } else {
        inet_ntop(AF_INET6, &reinterpret_cast<sockaddr_in6*>(&ss)->sin6_addr, buf, sizeof(buf));
      }
      *peer_ip = buf;
      // Normalize v4-mapped addresses so policy CIDRs match the v4 form.
      if (peer_ip->rfind("::ffff:", 0) == 0 && peer_ip->find('.') != std::string::npos) {
        *peer_ip = peer_ip->substr(7);
      }
    }
    return fd;
  }
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace nbgate::http
