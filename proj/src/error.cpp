#include "qnet/error.hpp"
#include "qnet/rng.hpp"

namespace qnet {

std::string_view error_category(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NotFound: return "not-found";
    case ErrorCode::Unclassified: return "unclassified";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::Synthesis: return "synthesis";
    case ErrorCode::NotRouted: return "not-routed";
    case ErrorCode::Framing: return "framing";
    case ErrorCode::Integrity: return "integrity";
    case ErrorCode::Semantic: return "semantic";
    case ErrorCode::Indeterminate: return "indeterminate";
    case ErrorCode::Io: return "io";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) noexcept {
  // FNV-1a over the label, then mixed with the master seed.
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return splitmix64(splitmix64(master) ^ h);
}

}  // namespace qnet
