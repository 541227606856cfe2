#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "rba/ip_address.hpp"

namespace rba {

/// Binary (one bit per level) prefix trie with one root per address family.
/// Lookups walk at most 32 or 128 levels. Inserting an existing prefix
/// overwrites its value.
template <class V>
class PrefixTrie {
public:
  void insert(const IpPrefix& prefix, V value) {
    auto& nodes = nodes_for(prefix.network().family());
    std::uint32_t at = 0;
    for (unsigned depth = 0; depth < prefix.length(); ++depth) {
      const unsigned b = prefix.network().bit(depth);
      if (nodes[at].child[b] == 0) {
        nodes[at].child[b] = static_cast<std::uint32_t>(nodes.size());
        nodes.emplace_back();
      }
      at = nodes[at].child[b];
    }
    if (!nodes[at].value) ++size_;
    nodes[at].value = std::move(value);
  }

  /// Value of the longest stored prefix containing `ip`.
  const V* longest_match(const IpAddress& ip) const {
    const auto& nodes = nodes_for(ip.family());
    const V* best = nodes[0].value ? &*nodes[0].value : nullptr;
    std::uint32_t at = 0;
    for (unsigned depth = 0; depth < ip.bit_width(); ++depth) {
      at = nodes[at].child[ip.bit(depth)];
      if (at == 0) break;
      if (nodes[at].value) best = &*nodes[at].value;
    }
    return best;
  }

  /// True if any stored prefix contains `ip`; stops at the first hit.
  bool covers(const IpAddress& ip) const {
    const auto& nodes = nodes_for(ip.family());
    std::uint32_t at = 0;
    if (nodes[0].value) return true;
    for (unsigned depth = 0; depth < ip.bit_width(); ++depth) {
      at = nodes[at].child[ip.bit(depth)];
      if (at == 0) return false;
      if (nodes[at].value) return true;
    }
    return false;
  }

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

private:
  // Index 0 is the root, so a zero child index means "absent".
  struct Node {
    std::uint32_t child[2] = {0, 0};
    std::optional<V> value;
  };

  std::vector<Node>& nodes_for(IpFamily f) { return f == IpFamily::v4 ? v4_ : v6_; }
  const std::vector<Node>& nodes_for(IpFamily f) const { return f == IpFamily::v4 ? v4_ : v6_; }

  std::vector<Node> v4_ = std::vector<Node>(1);
  std::vector<Node> v6_ = std::vector<Node>(1);
  std::size_t size_ = 0;
};

}  // namespace rba
