#ifndef NBGATE_HTTP_URL_HPP
#define NBGATE_HTTP_URL_HPP

#include <optional>
#include <string>
#include <string_view>

namespace nbgate::http {

struct Url {
  std::string scheme;  // http or https
  std::string host;
  uint16_t port = 0;   // resolved (default per scheme when absent)
  bool explicit_port = false;
  std::string target = "/";  // path + optional query

  // host:port exactly as written (no default-port normalization).
  std::string authority() const;
  bool is_tls() const { return scheme == "https"; }

  static std::optional<Url> parse(std::string_view text);
};

// host[:port] pair, e.g. "example.org:443" or "::1" bracketed as "[::1]:80".
struct Authority {
  std::string host;
  std::optional<uint16_t> port;

  std::string to_string() const;
  static std::optional<Authority> parse(std::string_view text);
};

}  // namespace nbgate::http

#endif
