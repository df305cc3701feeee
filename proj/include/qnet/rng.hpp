#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qnet {

// Every stochastic operation owns a generator derived from (master seed, label),
// so results do not depend on evaluation order or thread scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept;

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::string_view label) {
  return Engine(derive_seed(master, label));
}

}  // namespace qnet
