#include "nbgate/http/url.hpp"

#include "nbgate/util.hpp"

namespace nbgate::http {

std::string Url::authority() const {
  std::string host_part = host.find(':') != std::string::npos ? "[" + host + "]" : host;
  if (!explicit_port) return host_part;
  return host_part + ":" + std::to_string(port);
}

std::optional<Url> Url::parse(std::string_view text) {
  Url url;
  size_t scheme_end = text.find("://");
  if (scheme_end == std::string_view::npos) return std::nullopt;
  url.scheme = to_lower(text.substr(0, scheme_end));
  if (url.scheme != "http" && url.scheme != "https") return std::nullopt;

  std::string_view rest = text.substr(scheme_end + 3);
  size_t path_start = rest.find_first_of("/?");
  std::string_view authority = rest.substr(0, path_start);
  if (path_start != std::string_view::npos) {
    url.target = std::string(rest.substr(path_start));
    if (url.target[0] == '?') url.target = "/" + url.target;
  }

  auto auth = Authority::parse(authority);
  if (!auth || auth->host.empty()) return std::nullopt;
  url.host = auth->host;
  url.explicit_port = auth->port.has_value();
  url.port = auth->port.value_or(url.is_tls() ? 443 : 80);
  return url;
}

std::string Authority::to_string() const {
  std::string host_part = host.find(':') != std::string::npos ? "[" + host + "]" : host;
  if (!port) return host_part;
  return host_part + ":" + std::to_string(*port);
}

std::optional<Authority> Authority::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  Authority out;
  std::string_view host_part = text;
  std::string_view port_part;

  if (text[0] == '[') {  // bracketed IPv6
    size_t close = text.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    out.host = std::string(text.substr(1, close - 1));
    std::string_view tail = text.substr(close + 1);
    if (tail.empty()) return out;
    if (tail[0] != ':') return std::nullopt;
    port_part = tail.substr(1);
  } else {
    size_t colon = text.rfind(':');
    if (colon != std::string_view::npos && text.find(':') == colon) {
      host_part = text.substr(0, colon);
      port_part = text.substr(colon + 1);
    }
    // More than one colon and no brackets: bare IPv6 host, no port.
    out.host = std::string(host_part);
  }

  if (!port_part.empty() || (!text.empty() && text.back() == ':')) {
    auto n = parse_int(port_part);
    if (!n || *n < 0 || *n > 65535) return std::nullopt;
    out.port = static_cast<uint16_t>(*n);
  }
  if (out.host.empty()) return std::nullopt;
  return out;
}

}  // namespace nbgate::http
