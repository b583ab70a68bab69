#ifndef NBGATE_GATEWAY_HPP
#define NBGATE_GATEWAY_HPP

#include <functional>
#include <memory>
#include <string>

#include "nbgate/config.hpp"
#include "nbgate/http/server.hpp"
#include "nbgate/notebook.hpp"

namespace nbgate {

enum class Route { EmbedPage, Static, ProxyHttp, ProxyWs, Auth };

struct RequestContext {
  IpAddress client_ip;  // socket peer, never taken from X-Forwarded-For
  bool authenticated = false;
  Route route = Route::ProxyHttp;
};

// The 3-tier gateway: static hosting, reverse proxy (HTTP + WebSocket) and the
// defense-in-depth pipeline applied to every request, all in-process.
class Gateway {
 public:
  explicit Gateway(GatewayConfig cfg);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds, loads the notebook, starts serving. Fails fast: any startup error
  // throws before the handle is usable.
  void start();
  void stop();

  uint16_t port() const;
  std::string listen_authority() const;  // actual bound authority (host:port)
  const GatewayConfig& config() const { return cfg_; }

  using LogFn = std::function<void(const http::AccessLogEntry&)>;
  void set_access_log(LogFn fn);

 private:
  http::Response handle(http::HttpConn& conn);
  http::Response handle_embed_page();
  http::Response handle_static(const http::Request& req);
  http::Response handle_auth(http::HttpConn& conn);
  http::Response proxy_http(http::HttpConn& conn);
  void proxy_websocket(http::HttpConn& conn, http::Response& error_out);

  // Pipeline tail applied to every buffered response.
  http::Response finalize(http::Response res);
  void apply_security_headers(http::Response& res) const;
  void rewrite_authorities(std::string& text) const;

  std::string make_session_cookie() const;
  bool session_valid(const http::Request& req) const;

  GatewayConfig cfg_;
  NotebookDocument notebook_;
  std::string embed_page_;
  std::string cookie_key_;
  std::unique_ptr<http::HttpServer> server_;
  LogFn log_;
  bool started_ = false;
};

}  // namespace nbgate

#endif
