#include "nbgate/gateway.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "nbgate/crypto.hpp"
#include "nbgate/http/client.hpp"
#include "nbgate/http/websocket.hpp"
#include "nbgate/util.hpp"

namespace nbgate {

namespace fs = std::filesystem;
using http::HttpConn;
using http::IoResult;
using http::Request;
using http::Response;

namespace {

constexpr char kSessionCookie[] = "nbgate_session";

std::string login_page(std::string_view note) {
  std::string page;
  page += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  page += "<title>Sign in</title>\n</head>\n<body>\n<h1>Sign in</h1>\n";
  if (!note.empty()) page += "<p>" + html_escape(note) + "</p>\n";
  page += "<form method=\"POST\" action=\"/auth\">\n";
  page += "<label for=\"password\">Password</label>\n";
  page += "<input type=\"password\" id=\"password\" name=\"password\" autofocus>\n";
  page += "<button type=\"submit\">Sign in</button>\n";
  page += "</form>\n</body>\n</html>\n";
  return page;
}

std::string content_type_for(const fs::path& p) {
  std::string ext = to_lower(p.extension().string());
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".js") return "application/javascript";
  if (ext == ".json") return "application/json";
  if (ext == ".ipynb") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".txt" || ext == ".md") return "text/plain; charset=utf-8";
  return "application/octet-stream";
}

std::optional<std::string> cookie_value(const Request& req, std::string_view name) {
  const std::string* header = req.headers.find("Cookie");
  if (!header) return std::nullopt;
  for (const auto& part : split(*header, ';')) {
    std::string item = trim(part);
    size_t eq = item.find('=');
    if (eq == std::string::npos) continue;
    if (item.substr(0, eq) == name) return item.substr(eq + 1);
  }
  return std::nullopt;
}

}  // namespace

Gateway::Gateway(GatewayConfig cfg) : cfg_(std::move(cfg)) {
  cookie_key_ = crypto::random_bytes(32);
}

Gateway::~Gateway() { stop(); }

void Gateway::start() {
  if (started_) return;

  std::ifstream in(cfg_.notebook_path, std::ios::binary);
  if (!in.good()) {
    throw std::runtime_error("notebook not readable: " + cfg_.notebook_path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  notebook_ = parse_notebook(buf.str());  // throws NotJson/SchemaViolation: fail fast
  if (cfg_.read_only) notebook_ = apply_read_only(notebook_);
  embed_page_ = render_embed_page(notebook_, cfg_);

  http::HttpServer::Options options;
  options.host = cfg_.listen_address.host;
  options.port = cfg_.listen_address.port.value_or(0);
  options.max_body_bytes = cfg_.max_body_bytes;
  if (cfg_.tls.enabled) {
    options.tls_cert_path = cfg_.tls.certificate_path;
    options.tls_key_path = cfg_.tls.private_key_path;
  }
  server_ = std::make_unique<http::HttpServer>(options,
                                               [this](HttpConn& conn) { return handle(conn); });
  if (log_) server_->set_log(log_);
  server_->start();
  started_ = true;
}

void Gateway::stop() {
  if (server_) {
    long drain_ms = static_cast<long>(cfg_.proxy_timeout * 1000);
    server_->stop(drain_ms);
    server_.reset();
  }
  started_ = false;
}

uint16_t Gateway::port() const { return server_ ? server_->port() : 0; }

std::string Gateway::listen_authority() const {
  return cfg_.listen_address.host + ":" + std::to_string(port());
}

void Gateway::set_access_log(LogFn fn) {
  log_ = std::move(fn);
  if (server_) server_->set_log(log_);
}

void Gateway::apply_security_headers(Response& res) const {
  // Upstream copies of the same names are replaced, never duplicated.
  for (const auto& [name, value] : cfg_.headers.items()) res.headers.set(name, value);
}

void Gateway::rewrite_authorities(std::string& text) const {
  std::string advertised = cfg_.advertised();
  text = spoof_rewrite(text, cfg_.upstream.authority(), advertised);
  std::string internal = listen_authority();
  if (internal != advertised) text = spoof_rewrite(text, internal, advertised);
  // The configured listen text may differ from the bound authority (port 0).
  std::string configured = cfg_.listen_authority_text();
  if (configured != internal && configured != advertised) {
    text = spoof_rewrite(text, configured, advertised);
  }
}

Response Gateway::finalize(Response res) {
  if (const std::string* loc = res.headers.find("Location")) {
    std::string rewritten = *loc;
    rewrite_authorities(rewritten);
    res.headers.set("Location", rewritten);
  }
  if (!res.body.empty() &&
      http::is_text_content_type(res.headers.get("Content-Type", "text/plain"))) {
    rewrite_authorities(res.body);
  }
  apply_security_headers(res);
  return res;
}

std::string Gateway::make_session_cookie() const {
  long long expiry =
      static_cast<long long>(std::time(nullptr)) + cfg_.auth_ttl_seconds;
  std::string payload = std::to_string(expiry);
  std::string mac = crypto::hmac_sha256_hex(cookie_key_, payload);
  return payload + "." + mac;
}

bool Gateway::session_valid(const Request& req) const {
  auto cookie = cookie_value(req, kSessionCookie);
  if (!cookie) return false;
  size_t dot = cookie->find('.');
  if (dot == std::string::npos) return false;
  std::string payload = cookie->substr(0, dot);
  std::string mac = cookie->substr(dot + 1);
  if (!crypto::constant_time_eq(mac, crypto::hmac_sha256_hex(cookie_key_, payload))) {
    return false;
  }
  auto expiry = parse_int(payload);
  return expiry && *expiry > static_cast<long long>(std::time(nullptr));
}

Response Gateway::handle(HttpConn& conn) {
  // (1) IP access control on the socket peer address.
  auto client_ip = IpAddress::parse(conn.client_ip);
  if (!client_ip) return finalize(Response::make(403, "forbidden\n"));
  AccessDecision decision = evaluate_access(cfg_.access, *client_ip);
  if (!decision.allow) {
    return finalize(Response::make(403, "forbidden: " + decision.reason + "\n"));
  }

  const std::string path = conn.request.path();

  // (2) Password auth; the login endpoint itself stays reachable.
  bool authenticated = !cfg_.password.has_value() || session_valid(conn.request);
  if (!authenticated && path != "/auth") {
    Response res = Response::make(
        401,
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\">"
        "<title>Unauthorized</title></head><body>"
        "<h1>401 Unauthorized</h1><p><a href=\"/auth\">Sign in</a></p>"
        "</body></html>\n",
        "text/html; charset=utf-8");
    return finalize(std::move(res));
  }

  // (3) Route dispatch.
  if (http::is_websocket_upgrade(conn.request)) {
    Response error;
    proxy_websocket(conn, error);
    if (conn.hijacked()) return {};
    return finalize(std::move(error));
  }
  if (path == "/") return finalize(handle_embed_page());
  if (path == "/static" || path.rfind("/static/", 0) == 0) {
    return finalize(handle_static(conn.request));
  }
  if (path == "/auth") return finalize(handle_auth(conn));
  return proxy_http(conn);  // finalizes internally (streams or buffers)
}

Response Gateway::handle_embed_page() {
  return Response::make(200, embed_page_, "text/html; charset=utf-8");
}

Response Gateway::handle_static(const Request& req) {
  std::string raw_path = percent_decode(req.path(), false);
  std::string rel = raw_path.size() > 8 ? raw_path.substr(8) : "";  // strip "/static/"
  if (rel.empty()) return Response::make(404, "not found\n");
  for (const auto& segment : split(rel, '/')) {
    if (segment == ".." || segment.empty()) return Response::make(404, "not found\n");
  }

  fs::path root = fs::path(cfg_.notebook_path).parent_path();
  if (root.empty()) root = ".";
  fs::path target = root / rel;

  std::error_code ec;
  if (!fs::is_regular_file(target, ec)) return Response::make(404, "not found\n");

  std::ifstream in(target, std::ios::binary);
  if (!in.good()) return Response::make(404, "not found\n");
  std::stringstream buf;
  buf << in.rdbuf();

  // The hosted notebook is always served canonical, read-only when configured.
  if (fs::weakly_canonical(target, ec) == fs::weakly_canonical(cfg_.notebook_path, ec)) {
    return Response::make(200, serialize_notebook(notebook_), "application/json");
  }
  return Response::make(200, buf.str(), content_type_for(target));
}

Response Gateway::handle_auth(HttpConn& conn) {
  if (!cfg_.password) return Response::make(404, "password auth is not enabled\n");

  if (conn.request.method == "GET") {
    return Response::make(200, login_page(""), "text/html; charset=utf-8");
  }
  if (conn.request.method != "POST") {
    Response res = Response::make(405, "method not allowed\n");
    res.headers.set("Allow", "GET, POST");
    return res;
  }

  std::string body;
  IoResult r = conn.read_body(body);
  if (r == IoResult::TooLarge) return Response::make(413, "body too large\n");
  if (r != IoResult::Ok) return Response::make(400, "unreadable body\n");

  auto supplied = form_value(body, "password");
  if (!supplied || !verify_password(*cfg_.password, *supplied)) {
    return Response::make(401, login_page("Wrong password."), "text/html; charset=utf-8");
  }

  Response res = Response::make(303, "");
  res.headers.set("Location", "/");
  std::string cookie = std::string(kSessionCookie) + "=" + make_session_cookie() +
                       "; Path=/; HttpOnly; SameSite=Lax; Max-Age=" +
                       std::to_string(cfg_.auth_ttl_seconds);
  if (cfg_.tls.enabled) cookie += "; Secure";
  res.headers.set("Set-Cookie", cookie);
  return res;
}

namespace {

// One pooled upstream connection per handler thread. Connections are
// thread-per-client here, so this is a per-client-connection keep-alive leg;
// without it every proxied request would burn an ephemeral port.
struct UpstreamLeg {
  std::string key;
  std::unique_ptr<http::Stream> stream;
  std::unique_ptr<http::Http1Reader> reader;

  void reset() {
    reader.reset();
    stream.reset();
  }
};

thread_local UpstreamLeg tl_upstream;

// Header names listed in the request's own Connection header are hop-by-hop.
std::vector<std::string> connection_tokens(const http::HeaderMap& headers) {
  std::vector<std::string> out;
  for (const auto& [name, value] : headers.items()) {
    if (!iequals(name, "Connection")) continue;
    for (const auto& token : split(value, ',')) {
      std::string t = trim(token);
      if (!t.empty()) out.push_back(to_lower(t));
    }
  }
  return out;
}

bool named_in(const std::vector<std::string>& tokens, std::string_view name) {
  for (const auto& t : tokens) {
    if (iequals(t, name)) return true;
  }
  return false;
}

}  // namespace

Response Gateway::proxy_http(HttpConn& conn) {
  // Buffer the request body under the configured cap.
  std::string body;
  IoResult br = conn.read_body(body);
  if (br == IoResult::TooLarge) return finalize(Response::make(413, "body too large\n"));
  if (br != IoResult::Ok) return finalize(Response::make(400, "unreadable body\n"));

  long timeout_ms = static_cast<long>(cfg_.proxy_timeout * 1000);
  http::ClientOptions options;
  options.connect_timeout_ms = timeout_ms;
  options.read_timeout_ms = timeout_ms;

  Request out;
  out.method = conn.request.method;
  out.target = conn.request.target;
  out.body = std::move(body);
  auto client_hop_tokens = connection_tokens(conn.request.headers);
  for (const auto& [name, value] : conn.request.headers.items()) {
    if (http::is_hop_by_hop(name) || iequals(name, "Host") ||
        named_in(client_hop_tokens, name)) {
      continue;
    }
    out.headers.add(name, value);
  }
  out.headers.set("Host", cfg_.upstream.authority());
  std::string xff = conn.request.headers.get("X-Forwarded-For");
  out.headers.set("X-Forwarded-For", xff.empty() ? conn.client_ip : xff + ", " + conn.client_ip);
  out.headers.set("X-Forwarded-Proto", cfg_.public_scheme());
  out.headers.set("Connection", "keep-alive");

  const std::string upstream_key = cfg_.upstream.scheme + "://" + cfg_.upstream.authority();
  bool reused = tl_upstream.stream != nullptr && tl_upstream.key == upstream_key;
  if (!reused) tl_upstream.reset();

  Response head;
  IoResult r = IoResult::Error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (!tl_upstream.stream) {
      std::string connect_error;
      auto fresh = http::connect_stream(cfg_.upstream, options, &connect_error);
      if (!fresh) {
        return finalize(Response::make(502, "upstream unreachable: " + connect_error + "\n"));
      }
      tl_upstream.key = upstream_key;
      tl_upstream.stream = std::move(fresh);
      tl_upstream.reader = std::make_unique<http::Http1Reader>(*tl_upstream.stream);
      reused = false;
    }
    bool sent = http::send_request(*tl_upstream.stream, out);
    r = sent ? tl_upstream.reader->read_response_head(head) : IoResult::Error;
    if (r == IoResult::Ok) break;
    bool stale = reused && (r == IoResult::Eof || r == IoResult::Error);
    tl_upstream.reset();
    if (!stale) break;  // a fresh connection failing is a real upstream error
  }
  if (r == IoResult::Timeout) {
    tl_upstream.reset();
    return finalize(Response::make(504, "upstream timeout\n"));
  }
  if (r != IoResult::Ok) return finalize(Response::make(502, "bad upstream response\n"));
  http::Http1Reader& reader = *tl_upstream.reader;

  bool head_only = conn.request.method == "HEAD" || head.status / 100 == 1 ||
                   head.status == 204 || head.status == 304;
  std::string upstream_te = to_lower(head.headers.get("Transfer-Encoding"));
  bool upstream_chunked = upstream_te.find("chunked") != std::string::npos;
  const std::string* upstream_length = head.headers.find("Content-Length");
  std::string content_type = head.headers.get("Content-Type");

  Response res;
  res.status = head.status;
  res.reason = head.reason;
  for (const auto& [name, value] : head.headers.items()) {
    if (http::is_hop_by_hop(name)) continue;
    res.headers.add(name, value);
  }

  bool keep_client = http::Http1Reader::keep_alive(conn.request.version, conn.request.headers);
  bool upstream_framed = upstream_chunked || upstream_length != nullptr;
  bool upstream_reusable =
      upstream_framed && http::Http1Reader::keep_alive("HTTP/1.1", head.headers);

  if (head_only) {
    if (!http::Http1Reader::keep_alive("HTTP/1.1", head.headers)) tl_upstream.reset();
    res.headers.remove("Transfer-Encoding");
    res.headers.remove("Content-Length");
    if (upstream_length) res.headers.set("Content-Length", *upstream_length);
    apply_security_headers(res);
    if (const std::string* loc = res.headers.find("Location")) {
      std::string rewritten = *loc;
      rewrite_authorities(rewritten);
      res.headers.set("Location", rewritten);
    }
    res.headers.set("Connection", keep_client ? "keep-alive" : "close");
    http::Stream& client = conn.stream();
    bool ok = client.write_all(http::serialize_response_head(res));
    conn.mark_raw_response(ok && keep_client);
    http::Response logged;
    logged.status = res.status;
    return logged;
  }

  http::Stream& client = conn.stream();

  // Text bodies buffer (within the cap) so authority rewriting can run; once
  // the cap is crossed the transfer degrades to chunked passthrough. Anything
  // non-text streams from the start. One pass over the upstream framing.
  bool textual = http::is_text_content_type(content_type);
  bool passthrough_known_length = !textual && upstream_length != nullptr && !upstream_chunked;

  std::string buffered;
  bool streaming_started = false;
  bool client_write_failed = false;

  auto begin_streaming = [&](bool include_buffered) {
    Response stream_head = res;
    stream_head.body.clear();
    if (const std::string* loc = stream_head.headers.find("Location")) {
      std::string rewritten = *loc;
      rewrite_authorities(rewritten);
      stream_head.headers.set("Location", rewritten);
    }
    apply_security_headers(stream_head);
    stream_head.headers.remove("Content-Length");
    stream_head.headers.remove("Transfer-Encoding");
    if (passthrough_known_length) {
      stream_head.headers.set("Content-Length", *upstream_length);
      stream_head.headers.set("Connection", keep_client ? "keep-alive" : "close");
    } else if (upstream_framed) {
      stream_head.headers.set("Transfer-Encoding", "chunked");
      stream_head.headers.set("Connection", keep_client ? "keep-alive" : "close");
    } else {
      // EOF-delimited upstream body: only closing can delimit ours too.
      stream_head.headers.set("Connection", "close");
      keep_client = false;
    }
    streaming_started = true;
    if (!client.write_all(http::serialize_response_head(stream_head))) return false;
    if (include_buffered && !buffered.empty()) {
      bool ok = passthrough_known_length || !upstream_framed
                    ? client.write_all(buffered.data(), buffered.size())
                    : http::write_chunk(client, buffered.data(), buffered.size());
      buffered.clear();
      return ok;
    }
    return true;
  };

  auto sink = [&](const char* data, size_t n) {
    if (!streaming_started) {
      if (textual && buffered.size() + n <= cfg_.max_body_bytes) {
        buffered.append(data, n);
        return true;
      }
      if (!textual) buffered.assign(data, n);
      if (!begin_streaming(true)) {
        client_write_failed = true;
        return false;
      }
      if (!textual) return true;
    }
    bool ok = passthrough_known_length || !upstream_framed
                  ? client.write_all(data, n)
                  : http::write_chunk(client, data, n);
    if (!ok) client_write_failed = true;
    return ok;
  };

  IoResult body_r = reader.stream_body(head.headers, false, sink);

  if (!streaming_started) {
    // Fully buffered text (or an empty non-text body).
    if (body_r == IoResult::Timeout) {
      tl_upstream.reset();
      return finalize(Response::make(504, "upstream timeout\n"));
    }
    if (body_r != IoResult::Ok) {
      tl_upstream.reset();
      return finalize(Response::make(502, "upstream read failed\n"));
    }
    if (!upstream_reusable) tl_upstream.reset();
    res.body = std::move(buffered);
    res.headers.remove("Content-Length");
    res.headers.remove("Transfer-Encoding");
    return finalize(std::move(res));
  }

  bool ok = body_r == IoResult::Ok && !client_write_failed;
  if (ok && upstream_framed && !passthrough_known_length) {
    ok = http::write_last_chunk(client);
  }
  if (!(body_r == IoResult::Ok && upstream_reusable)) tl_upstream.reset();
  conn.mark_raw_response(ok && keep_client);
  http::Response logged;
  logged.status = res.status;
  return logged;
}

void Gateway::proxy_websocket(HttpConn& conn, Response& error_out) {
  long timeout_ms = static_cast<long>(cfg_.proxy_timeout * 1000);
  http::ClientOptions options;
  options.connect_timeout_ms = timeout_ms;
  options.read_timeout_ms = timeout_ms;
  std::string connect_error;
  auto upstream = http::connect_stream(cfg_.upstream, options, &connect_error);
  if (!upstream) {
    error_out = Response::make(502, "upstream unreachable: " + connect_error + "\n");
    return;
  }

  // The client's key passes through so the 101 handshake validates end-to-end.
  Request out;
  out.method = "GET";
  out.target = conn.request.target;
  out.version = "HTTP/1.1";
  for (const auto& [name, value] : conn.request.headers.items()) {
    if (iequals(name, "Host") || iequals(name, "Connection") || iequals(name, "Upgrade") ||
        iequals(name, "Keep-Alive") || iequals(name, "Proxy-Authorization") ||
        iequals(name, "Te") || iequals(name, "Trailer") || iequals(name, "Transfer-Encoding")) {
      continue;
    }
    out.headers.add(name, value);
  }
  out.headers.set("Host", cfg_.upstream.authority());
  out.headers.set("Upgrade", "websocket");
  out.headers.set("Connection", "Upgrade");
  out.headers.set("X-Forwarded-For", conn.client_ip);
  out.headers.set("X-Forwarded-Proto", cfg_.public_scheme());

  if (!upstream->write_all(http::serialize_request_head(out))) {
    error_out = Response::make(502, "upstream write failed\n");
    return;
  }
  http::Http1Reader upstream_reader(*upstream);
  Response upstream_res;
  IoResult r = upstream_reader.read_response_head(upstream_res);
  if (r == IoResult::Timeout) {
    error_out = Response::make(504, "upstream timeout\n");
    return;
  }
  if (r != IoResult::Ok || upstream_res.status != 101) {
    error_out = Response::make(502, "upstream refused websocket upgrade\n");
    return;
  }

  Response relay_head;
  relay_head.status = 101;
  relay_head.reason = upstream_res.reason.empty() ? "Switching Protocols" : upstream_res.reason;
  for (const auto& [name, value] : upstream_res.headers.items()) {
    if (iequals(name, "Connection") || iequals(name, "Upgrade")) continue;
    relay_head.headers.add(name, value);
  }
  relay_head.headers.set("Upgrade", "websocket");
  relay_head.headers.set("Connection", "Upgrade");
  apply_security_headers(relay_head);

  std::string upstream_leftover = upstream_reader.take_buffered();
  auto [client, client_leftover] = conn.hijack();
  if (!client->write_all(http::serialize_response_head(relay_head))) return;

  // Byte-level relay: masking, fragmentation and close codes pass through
  // untouched. Either side ending tears down both.
  client->set_read_timeout_ms(0);
  upstream->set_read_timeout_ms(0);
  if (!client_leftover.empty()) upstream->write_all(client_leftover);
  if (!upstream_leftover.empty()) client->write_all(upstream_leftover);

  http::Stream* client_raw = client.get();
  http::Stream* upstream_raw = upstream.get();
  auto pump = [](http::Stream& from, http::Stream& to) {
    char buf[16 * 1024];
    while (true) {
      int n = from.read_some(buf, sizeof(buf));
      if (n <= 0) break;
      if (!to.write_all(buf, static_cast<size_t>(n))) break;
    }
    from.shutdown_both();
    to.shutdown_both();
  };
  std::thread downstream([&pump, client_raw, upstream_raw] { pump(*upstream_raw, *client_raw); });
  pump(*client_raw, *upstream_raw);
  downstream.join();
}

}  // namespace nbgate
