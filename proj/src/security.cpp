#include "nbgate/security.hpp"

#include <arpa/inet.h>

#include <algorithm>

#include "nbgate/crypto.hpp"
#include "nbgate/util.hpp"

namespace nbgate {

size_t IpAddress::byte_length() const { return family == AF_INET ? 4 : 16; }

bool IpAddress::is_v4() const { return family == AF_INET; }

std::string IpAddress::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {0};
  inet_ntop(family, bytes.data(), buf, sizeof(buf));
  return buf;
}

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
  std::string s(text);
  IpAddress ip;
  if (inet_pton(AF_INET, s.c_str(), ip.bytes.data()) == 1) {
    ip.family = AF_INET;
    return ip;
  }
  if (inet_pton(AF_INET6, s.c_str(), ip.bytes.data()) == 1) {
    ip.family = AF_INET6;
    return ip;
  }
  return std::nullopt;
}

bool Cidr::contains(const IpAddress& ip) const {
  if (ip.family != network.family) return false;
  int bits = prefix_len;
  for (size_t i = 0; i < ip.byte_length() && bits > 0; ++i) {
    int take = std::min(bits, 8);
    uint8_t mask = static_cast<uint8_t>(0xff00 >> take);
    if ((ip.bytes[i] & mask) != (network.bytes[i] & mask)) return false;
    bits -= take;
  }
  return true;
}

std::string Cidr::to_string() const {
  return network.to_string() + "/" + std::to_string(prefix_len);
}

std::optional<Cidr> Cidr::parse(std::string_view text) {
  std::string_view addr_part = text;
  std::optional<long long> plen;
  if (size_t slash = text.rfind('/'); slash != std::string_view::npos) {
    addr_part = text.substr(0, slash);
    plen = parse_int(text.substr(slash + 1));
    if (!plen) return std::nullopt;
  }
  auto ip = IpAddress::parse(addr_part);
  if (!ip) return std::nullopt;
  int max_len = ip->is_v4() ? 32 : 128;
  int len = plen ? static_cast<int>(*plen) : max_len;
  if (len < 0 || len > max_len) return std::nullopt;
  return Cidr{*ip, len};
}

AccessDecision evaluate_access(const AccessPolicy& policy, const IpAddress& client) {
  for (const auto& block : policy.blacklist) {
    if (block.contains(client)) {
      return {false, "blacklisted by " + block.to_string()};
    }
  }
  if (!policy.whitelist.empty()) {
    for (const auto& block : policy.whitelist) {
      if (block.contains(client)) return {true, {}};
    }
    return {false, "not in whitelist"};
  }
  return {true, {}};
}

namespace {

void check_header_text(std::string_view name, std::string_view value) {
  if (name.empty()) throw HeaderValueError("empty header name");
  for (char c : name) {
    if (c == '\r' || c == '\n' || c == ':') {
      throw HeaderValueError("invalid character in header name");
    }
  }
  if (value.find('\r') != std::string_view::npos || value.find('\n') != std::string_view::npos) {
    throw HeaderValueError("CR/LF in header value: " + std::string(name));
  }
}

}  // namespace

void SecurityHeaderSet::set(std::string_view name, std::string_view value) {
  check_header_text(name, value);
  for (auto& [n, v] : items_) {
    if (iequals(n, name)) {
      v = std::string(value);
      return;
    }
  }
  items_.emplace_back(std::string(name), std::string(value));
}

const std::string* SecurityHeaderSet::find(std::string_view name) const {
  for (const auto& [n, v] : items_) {
    if (iequals(n, name)) return &v;
  }
  return nullptr;
}

void SecurityHeaderSet::merge_overrides(const SecurityHeaderSet& overrides) {
  for (const auto& [n, v] : overrides.items()) set(n, v);
}

SecurityHeaderSet default_security_headers() {
  SecurityHeaderSet set;
  set.set("Strict-Transport-Security", "max-age=31536000");
  set.set("Content-Security-Policy", "default-src 'self'; frame-ancestors 'self'");
  set.set("X-Content-Type-Options", "nosniff");
  set.set("X-Frame-Options", "SAMEORIGIN");
  set.set("Referrer-Policy", "no-referrer");
  return set;
}

std::string_view algorithm_name(HashAlgorithm a) {
  return a == HashAlgorithm::Sha1 ? "sha1" : "sha256";
}

std::optional<HashAlgorithm> algorithm_from_name(std::string_view name) {
  if (name == "sha1") return HashAlgorithm::Sha1;
  if (name == "sha256") return HashAlgorithm::Sha256;
  return std::nullopt;
}

std::string PasswordRecord::to_string() const {
  return std::string(algorithm_name(algorithm)) + ":" + salt + ":" + digest;
}

std::optional<PasswordRecord> PasswordRecord::parse(std::string_view text) {
  auto parts = split(text, ':');
  if (parts.size() != 3) return std::nullopt;
  auto algo = algorithm_from_name(parts[0]);
  if (!algo) return std::nullopt;
  const std::string& salt = parts[1];
  const std::string& digest = parts[2];
  if (salt.size() < 12 || !is_hex(salt)) return std::nullopt;
  size_t want = *algo == HashAlgorithm::Sha1 ? 40 : 64;
  if (digest.size() != want || !is_hex(digest)) return std::nullopt;
  PasswordRecord rec{*algo, salt, to_lower(digest)};
  return rec;
}

PasswordRecord hash_password(std::string_view password, std::string_view salt_hex,
                             HashAlgorithm algorithm) {
  std::string material = std::string(password) + std::string(salt_hex);
  std::string raw;
  switch (algorithm) {
    case HashAlgorithm::Sha1: raw = crypto::sha1(material); break;
    case HashAlgorithm::Sha256: raw = crypto::sha256(material); break;
    default: throw UnsupportedAlgorithm("unsupported hash algorithm");
  }
  return PasswordRecord{algorithm, std::string(salt_hex), hex_encode(raw)};
}

bool verify_password(const PasswordRecord& record, std::string_view supplied) {
  PasswordRecord recomputed = hash_password(supplied, record.salt, record.algorithm);
  return crypto::constant_time_eq(recomputed.digest, to_lower(record.digest));
}

std::string spoof_rewrite(std::string_view body, std::string_view internal_authority,
                          std::string_view advertised_authority) {
  if (internal_authority.empty() || internal_authority == advertised_authority) {
    return std::string(body);
  }
  return replace_all(body, internal_authority, advertised_authority);
}

}  // namespace nbgate
