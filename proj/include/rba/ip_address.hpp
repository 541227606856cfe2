#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rba {

enum class IpFamily : std::uint8_t { v4, v6 };

/// An IPv4 or IPv6 address stored in network byte order.
/// IPv4 addresses occupy the first four bytes of `bytes`; the rest are zero.
class IpAddress {
public:
  IpAddress() = default;

  static std::optional<IpAddress> parse(std::string_view text);
  static IpAddress from_v4(std::uint32_t host_order);
  static IpAddress from_bytes(IpFamily family, const std::array<std::uint8_t, 16>& bytes);

  IpFamily family() const { return family_; }
  unsigned bit_width() const { return family_ == IpFamily::v4 ? 32u : 128u; }
  const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }

  /// Bit `index` counted from the most significant bit.
  bool bit(unsigned index) const {
    return (bytes_[index / 8] >> (7 - index % 8)) & 1u;
  }

  std::string to_string() const;

  auto operator<=>(const IpAddress&) const = default;

private:
  IpFamily family_ = IpFamily::v4;
  std::array<std::uint8_t, 16> bytes_{};
};

/// A CIDR prefix. Host bits below `length` are cleared on construction.
class IpPrefix {
public:
  IpPrefix() = default;
  IpPrefix(IpAddress network, unsigned length);

  /// Accepts "a.b.c.d/n", "x::y/n" or a bare address (full-length prefix).
  static std::optional<IpPrefix> parse(std::string_view text);

  const IpAddress& network() const { return network_; }
  unsigned length() const { return length_; }
  bool contains(const IpAddress& ip) const;
  std::string to_string() const;

  auto operator<=>(const IpPrefix&) const = default;

private:
  IpAddress network_;
  unsigned length_ = 0;
};

}  // namespace rba
