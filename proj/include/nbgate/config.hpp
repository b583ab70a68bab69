#ifndef NBGATE_CONFIG_HPP
#define NBGATE_CONFIG_HPP

#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nbgate/http/url.hpp"
#include "nbgate/security.hpp"

namespace nbgate {

// Full declarative description of one gateway instance. Immutable after load.
struct GatewayConfig {
  http::Authority listen_address;          // required
  std::string advertised_authority;        // defaults to listen_address text
  TlsSettings tls;
  http::Url upstream;                      // required, absolute http/https URL
  std::string notebook_path;               // required
  AccessPolicy access;
  SecurityHeaderSet headers;               // defaults merged with overrides
  std::optional<PasswordRecord> password;
  bool read_only = false;
  double proxy_timeout = 30.0;             // seconds
  size_t max_body_bytes = 10ull * 1024 * 1024;
  long long auth_ttl_seconds = 8 * 60 * 60;

  std::string listen_authority_text() const { return listen_address.to_string(); }
  std::string advertised() const {
    return advertised_authority.empty() ? listen_authority_text() : advertised_authority;
  }
  std::string public_scheme() const { return tls.enabled ? "https" : "http"; }
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& reason)
      : std::runtime_error(key.empty() ? reason : key + ": " + reason), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ConfigNotFound : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses, defaults and validates. Unknown keys are errors; every failure
// names the offending key path.
GatewayConfig config_from_json(const nlohmann::json& doc);
GatewayConfig load_config(const std::string& path);

}  // namespace nbgate

#endif
