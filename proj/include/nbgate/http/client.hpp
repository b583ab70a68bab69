#ifndef NBGATE_HTTP_CLIENT_HPP
#define NBGATE_HTTP_CLIENT_HPP

#include <memory>
#include <optional>
#include <string>

#include "nbgate/http/http1.hpp"
#include "nbgate/http/message.hpp"
#include "nbgate/http/stream.hpp"
#include "nbgate/http/url.hpp"

namespace nbgate::http {

struct ClientOptions {
  long connect_timeout_ms = 5000;
  long read_timeout_ms = 30000;
  std::string ca_file;       // verify https peers against this bundle when set
  bool tls_verify = false;   // off by default: local test topologies use self-signed certs
};

// Opens a plain or TLS stream to the URL's authority.
std::unique_ptr<Stream> connect_stream(const Url& url, const ClientOptions& options,
                                       std::string* error = nullptr);

// Single connection with keep-alive reuse; reconnects transparently when the
// server closed between requests.
class HttpClient {
 public:
  HttpClient(Url base, ClientOptions options = {});

  struct Result {
    IoResult io = IoResult::Error;
    Response response;
    std::string error;
    bool connect_failure = false;
    bool ok() const { return io == IoResult::Ok; }
  };

  // `target` is origin-form. Body buffered up to body_cap.
  Result send(const std::string& method, const std::string& target, std::string body = "",
              HeaderMap headers = {}, size_t body_cap = 64ull * 1024 * 1024);

  const Url& base() const { return base_; }
  void close();

 private:
  Result roundtrip(Request& req, size_t body_cap, bool allow_retry);

  Url base_;
  ClientOptions options_;
  std::unique_ptr<Stream> stream_;
  std::unique_ptr<Http1Reader> reader_;
};

// One-shot convenience for tests and the CLI.
HttpClient::Result fetch(const std::string& url_text, const std::string& method = "GET",
                         std::string body = "", HeaderMap headers = {},
                         ClientOptions options = {});

}  // namespace nbgate::http

#endif
