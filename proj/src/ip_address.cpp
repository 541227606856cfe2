#include "rba/ip_address.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <charconv>
#include <cstring>

namespace rba {

std::optional<IpAddress> IpAddress::parse(std::string_view text) {
  if (text.empty() || text.size() > INET6_ADDRSTRLEN) return std::nullopt;
  std::string buf(text);
  IpAddress out;
  if (buf.find(':') == std::string::npos) {
    in_addr v4{};
    if (inet_pton(AF_INET, buf.c_str(), &v4) != 1) return std::nullopt;
    out.family_ = IpFamily::v4;
    std::memcpy(out.bytes_.data(), &v4, 4);
    return out;
  }
  in6_addr v6{};
  if (inet_pton(AF_INET6, buf.c_str(), &v6) != 1) return std::nullopt;
  out.family_ = IpFamily::v6;
  std::memcpy(out.bytes_.data(), &v6, 16);
  return out;
}

IpAddress IpAddress::from_v4(std::uint32_t host_order) {
  IpAddress out;
  out.family_ = IpFamily::v4;
  out.bytes_[0] = static_cast<std::uint8_t>(host_order >> 24);
  out.bytes_[1] = static_cast<std::uint8_t>(host_order >> 16);
  out.bytes_[2] = static_cast<std::uint8_t>(host_order >> 8);
  out.bytes_[3] = static_cast<std::uint8_t>(host_order);
  return out;
}

IpAddress IpAddress::from_bytes(IpFamily family, const std::array<std::uint8_t, 16>& bytes) {
  IpAddress out;
  out.family_ = family;
  out.bytes_ = bytes;
  if (family == IpFamily::v4) std::fill(out.bytes_.begin() + 4, out.bytes_.end(), 0);
  return out;
}

std::string IpAddress::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  if (family_ == IpFamily::v4) {
    inet_ntop(AF_INET, bytes_.data(), buf, sizeof buf);
  } else {
    inet_ntop(AF_INET6, bytes_.data(), buf, sizeof buf);
  }
  return buf;
}

IpPrefix::IpPrefix(IpAddress network, unsigned length) : length_(length) {
  if (length_ > network.bit_width()) length_ = network.bit_width();
  auto bytes = network.bytes();
  for (unsigned i = 0; i < 16; ++i) {
    const unsigned lo = i * 8;
    if (lo >= length_) {
      bytes[i] = 0;
    } else if (lo + 8 > length_) {
      bytes[i] &= static_cast<std::uint8_t>(0xFFu << (8 - (length_ - lo)));
    }
  }
  network_ = IpAddress::from_bytes(network.family(), bytes);
}

std::optional<IpPrefix> IpPrefix::parse(std::string_view text) {
  const auto slash = text.find('/');
  const auto addr = IpAddress::parse(text.substr(0, slash));
  if (!addr) return std::nullopt;
  if (slash == std::string_view::npos) return IpPrefix(*addr, addr->bit_width());

  const auto len_text = text.substr(slash + 1);
  unsigned length = 0;
  const auto [ptr, ec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), length);
  if (len_text.empty() || ec != std::errc{} || ptr != len_text.data() + len_text.size()) {
    return std::nullopt;
  }
  if (length > addr->bit_width()) return std::nullopt;
  return IpPrefix(*addr, length);
}

bool IpPrefix::contains(const IpAddress& ip) const {
  if (ip.family() != network_.family()) return false;
  const auto& a = ip.bytes();
  const auto& n = network_.bytes();
  const unsigned full = length_ / 8;
  if (std::memcmp(a.data(), n.data(), full) != 0) return false;
  const unsigned rest = length_ % 8;
  if (rest == 0) return true;
  const auto mask = static_cast<std::uint8_t>(0xFFu << (8 - rest));
  return (a[full] & mask) == n[full];
}

std::string IpPrefix::to_string() const {
  return network_.to_string() + "/" + std::to_string(length_);
}

}  // namespace rba
