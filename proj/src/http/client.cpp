#include "nbgate/http/client.hpp"

namespace nbgate::http {

std::unique_ptr<Stream> connect_stream(const Url& url, const ClientOptions& options,
                                       std::string* error) {
  auto tcp = tcp_connect(url.host, url.port, options.connect_timeout_ms, error);
  if (!tcp) return nullptr;
  tcp->set_read_timeout_ms(options.read_timeout_ms);
  if (!url.is_tls()) return tcp;
  try {
    TlsClientContext ctx(options.tls_verify ? options.ca_file : "");
    auto tls = TlsStream::connect(ctx, tcp->release(), url.host);
    tls->set_read_timeout_ms(options.read_timeout_ms);
    return tls;
  } catch (const std::exception& e) {
    if (error) *error = e.what();
    return nullptr;
  }
}

HttpClient::HttpClient(Url base, ClientOptions options)
    : base_(std::move(base)), options_(options) {}

void HttpClient::close() {
  reader_.reset();
  stream_.reset();
}

HttpClient::Result HttpClient::roundtrip(Request& req, size_t body_cap, bool allow_retry) {
  Result result;
  if (!stream_) {
    stream_ = connect_stream(base_, options_, &result.error);
    if (!stream_) {
      result.io = IoResult::Error;
      result.connect_failure = true;
      return result;
    }
    reader_ = std::make_unique<Http1Reader>(*stream_);
    allow_retry = false;  // fresh connection, a failure is real
  }

  bool sent = send_request(*stream_, req);
  IoResult r = IoResult::Error;
  if (sent) {
    r = reader_->read_response_head(result.response);
    if (r == IoResult::Ok) {
      bool head_only = req.method == "HEAD" || result.response.status / 100 == 1 ||
                       result.response.status == 204 || result.response.status == 304;
      if (!head_only) {
        r = reader_->read_body_to_string(result.response.headers, false, body_cap,
                                         result.response.body);
      }
    }
  }

  if (!sent || r == IoResult::Eof) {
    // Stale keep-alive connection; retry once on a fresh one.
    close();
    if (allow_retry) return roundtrip(req, body_cap, false);
    result.io = IoResult::Eof;
    result.error = "connection closed";
    return result;
  }
  if (r != IoResult::Ok) {
    bool timeout = r == IoResult::Timeout || (stream_ && stream_->timed_out());
    close();
    result.io = timeout ? IoResult::Timeout : r;
    result.error = timeout ? "read timeout" : "read error";
    return result;
  }

  if (!Http1Reader::keep_alive("HTTP/1.1", result.response.headers)) close();
  result.io = IoResult::Ok;
  return result;
}

HttpClient::Result HttpClient::send(const std::string& method, const std::string& target,
                                    std::string body, HeaderMap headers, size_t body_cap) {
  Request req;
  req.method = method;
  req.target = target;
  req.body = std::move(body);
  req.headers = std::move(headers);
  if (!req.headers.contains("Host")) req.headers.set("Host", base_.authority());
  return roundtrip(req, body_cap, true);
}

HttpClient::Result fetch(const std::string& url_text, const std::string& method, std::string body,
                         HeaderMap headers, ClientOptions options) {
  auto url = Url::parse(url_text);
  if (!url) {
    HttpClient::Result r;
    r.error = "bad URL: " + url_text;
    return r;
  }
  HttpClient client(*url, options);
  return client.send(method, url->target, std::move(body), std::move(headers));
}

}  // namespace nbgate::http
