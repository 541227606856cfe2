#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rba {

using Bytes = std::vector<std::uint8_t>;

std::array<std::uint8_t, 20> hmac_sha1(std::span<const std::uint8_t> key, std::span<const std::uint8_t> message);

/// Bytes from the OpenSSL CSPRNG. Throws std::runtime_error on failure.
Bytes random_bytes(std::size_t n);

/// Compares in time independent of where the inputs first differ.
bool constant_time_equal(std::string_view a, std::string_view b);

std::string to_hex(std::span<const std::uint8_t> bytes);
/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// scrypt password hashing. Encoded form: `scrypt$<log2 N>$<r>$<p>$<salt hex>$<hash hex>`.
struct PasswordHasher {
  unsigned log2_n = 15;
  unsigned r = 8;
  unsigned p = 1;

  std::string hash(std::string_view password) const;
  static bool verify(std::string_view password, std::string_view encoded);
};

}  // namespace rba
