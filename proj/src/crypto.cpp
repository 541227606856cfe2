#include "rba/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <charconv>
#include <stdexcept>

#include "rba/config.hpp"

namespace rba {

namespace {

constexpr std::size_t kSaltBytes = 16;
constexpr std::size_t kHashBytes = 32;

Bytes scrypt(std::string_view password, std::span<const std::uint8_t> salt, unsigned log2_n, unsigned r, unsigned p) {
  if (log2_n < 1 || log2_n > 24 || r == 0 || p == 0) throw std::invalid_argument("bad scrypt parameters");
  Bytes out(kHashBytes);
  const std::uint64_t n = std::uint64_t{1} << log2_n;
  const std::uint64_t max_mem = 128 * static_cast<std::uint64_t>(r) * (n + p + 2) + (1u << 20);
  if (EVP_PBE_scrypt(password.data(), password.size(), salt.data(), salt.size(), n, r, p, max_mem, out.data(),
                     out.size()) != 1) {
    throw std::runtime_error("scrypt failed");
  }
  return out;
}

unsigned parse_unsigned(std::string_view s) {
  unsigned out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) throw std::invalid_argument("bad number");
  return out;
}

}  // namespace

std::array<std::uint8_t, 20> hmac_sha1(std::span<const std::uint8_t> key, std::span<const std::uint8_t> message) {
  std::array<std::uint8_t, 20> out{};
  unsigned len = 0;
  if (!HMAC(EVP_sha1(), key.data(), static_cast<int>(key.size()), message.data(), message.size(), out.data(), &len) ||
      len != out.size()) {
    throw std::runtime_error("HMAC-SHA1 failed");
  }
  return out;
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n && RAND_bytes(out.data(), static_cast<int>(n)) != 1) throw std::runtime_error("RAND_bytes failed");
  return out;
}

bool constant_time_equal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2) throw std::invalid_argument("odd-length hex string");
  auto nibble = [](char c) -> std::uint8_t {
    if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
    throw std::invalid_argument("non-hex character");
  };
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

std::string PasswordHasher::hash(std::string_view password) const {
  const auto salt = random_bytes(kSaltBytes);
  const auto digest = scrypt(password, salt, log2_n, r, p);
  return "scrypt$" + std::to_string(log2_n) + "$" + std::to_string(r) + "$" + std::to_string(p) + "$" +
         to_hex(salt) + "$" + to_hex(digest);
}

bool PasswordHasher::verify(std::string_view password, std::string_view encoded) {
  const auto parts = split(encoded, '$');
  if (parts.size() != 6 || parts[0] != "scrypt") return false;
  try {
    const auto salt = from_hex(parts[4]);
    const auto digest = scrypt(password, salt, parse_unsigned(parts[1]), parse_unsigned(parts[2]),
                               parse_unsigned(parts[3]));
    return constant_time_equal(to_hex(digest), parts[5]);
  } catch (const std::invalid_argument&) {
    return false;
  }
}

}  // namespace rba
