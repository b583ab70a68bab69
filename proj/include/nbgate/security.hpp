#ifndef NBGATE_SECURITY_HPP
#define NBGATE_SECURITY_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nbgate {

// IPv4 or IPv6 address, network byte order.
struct IpAddress {
  int family = 0;  // AF_INET or AF_INET6
  std::array<uint8_t, 16> bytes{};

  size_t byte_length() const;
  bool is_v4() const;
  std::string to_string() const;

  static std::optional<IpAddress> parse(std::string_view text);
  bool operator==(const IpAddress&) const = default;
};

struct Cidr {
  IpAddress network;
  int prefix_len = 0;

  bool contains(const IpAddress& ip) const;
  std::string to_string() const;

  // a.b.c.d/nn or RFC 4291 IPv6 with /nn; a bare address means a full-length prefix.
  static std::optional<Cidr> parse(std::string_view text);
};

struct AccessPolicy {
  std::vector<Cidr> whitelist;
  std::vector<Cidr> blacklist;
};

struct AccessDecision {
  bool allow = true;
  std::string reason;  // set on deny
};

// Blacklist wins over whitelist; non-empty whitelist is a requirement; no rules means allow.
AccessDecision evaluate_access(const AccessPolicy& policy, const IpAddress& client);

class HeaderValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered response-header set with case-insensitively unique names.
// Rejects CR/LF in names and values on insertion.
class SecurityHeaderSet {
 public:
  void set(std::string_view name, std::string_view value);
  const std::string* find(std::string_view name) const;
  void merge_overrides(const SecurityHeaderSet& overrides);
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }
  size_t size() const { return items_.size(); }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

SecurityHeaderSet default_security_headers();

enum class HashAlgorithm { Sha1, Sha256 };

std::string_view algorithm_name(HashAlgorithm a);
std::optional<HashAlgorithm> algorithm_from_name(std::string_view name);

struct PasswordRecord {
  HashAlgorithm algorithm = HashAlgorithm::Sha256;
  std::string salt;    // hex text
  std::string digest;  // lowercase hex

  std::string to_string() const;  // algorithm:salt:digest
  // Enforces salt >= 12 hex chars and digest length matching the algorithm.
  static std::optional<PasswordRecord> parse(std::string_view text);
};

class UnsupportedAlgorithm : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// digest = hex(hash(password_bytes ++ salt_bytes)), Jupyter's stored-password convention.
PasswordRecord hash_password(std::string_view password, std::string_view salt_hex,
                             HashAlgorithm algorithm);
bool verify_password(const PasswordRecord& record, std::string_view supplied);

struct TlsSettings {
  bool enabled = false;
  std::string certificate_path;
  std::string private_key_path;
};

// Rewrites every occurrence of the internal authority to the advertised one.
std::string spoof_rewrite(std::string_view body, std::string_view internal_authority,
                          std::string_view advertised_authority);

}  // namespace nbgate

#endif
