#ifndef NBGATE_CRYPTO_HPP
#define NBGATE_CRYPTO_HPP

#include <string>
#include <string_view>

namespace nbgate::crypto {

std::string sha1(std::string_view data);    // raw 20-byte digest
std::string sha256(std::string_view data);  // raw 32-byte digest
std::string hmac_sha256_hex(std::string_view key, std::string_view data);

// Compares in time independent of the first differing position.
bool constant_time_eq(std::string_view a, std::string_view b);

std::string random_bytes(size_t n);
std::string random_hex(size_t n_bytes);

}  // namespace nbgate::crypto

#endif
