#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "txscam/txgraph.hpp"

namespace fx {

// Address whose last byte is `n` (and the rest zero), handy for readable fixtures.
inline txscam::Address addr(unsigned n) {
  std::array<std::uint8_t, 20> b{};
  b[18] = static_cast<std::uint8_t>(n >> 8);
  b[19] = static_cast<std::uint8_t>(n);
  return txscam::Address(b);
}

inline txscam::Transaction tx(unsigned from, unsigned to, std::int64_t t, txscam::Wei value = 1,
                              std::string hash = {}) {
  static unsigned counter = 0;
  txscam::Transaction x;
  x.from = addr(from);
  x.to = addr(to);
  x.timestamp = t;
  x.value = value;
  x.block = t;
  x.hash = hash.empty() ? "h" + std::to_string(++counter) : std::move(hash);
  return x;
}

inline constexpr txscam::Wei kEther = static_cast<txscam::Wei>(1'000'000'000'000'000'000ULL);
inline constexpr std::int64_t kT0 = 1'600'000'000;
inline constexpr std::int64_t kDay = 86400;

// Center 1 over three weekly intervals; the middle one carries a parallel edge.
inline txscam::TemporalMultiDiGraph toy_graph() {
  return txscam::build_graph({tx(1, 2, kT0, kEther), tx(3, 1, kT0 + kDay, kEther / 2), tx(2, 3, kT0 + 2 * kDay),
                              tx(1, 4, kT0 + 8 * kDay, 3 * kEther), tx(1, 4, kT0 + 9 * kDay, kEther / 10),
                              tx(5, 1, kT0 + 10 * kDay, 7 * kEther), tx(6, 1, kT0 + 15 * kDay, kEther)});
}

}  // namespace fx
