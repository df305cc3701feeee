#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace qnet {

enum class Band { ShortWave, OBand, SBand, CBand, LBand };

// Half-open [min_nm, max_nm) except the last band, which is closed.
struct BandRange {
  double min_nm;
  double max_nm;
};

BandRange band_range(Band band) noexcept;
std::string_view band_name(Band band) noexcept;
Band parse_band(std::string_view name);

/// Returns the band containing `wavelength_nm`; throws Unclassified for gaps.
Band band_of(double wavelength_nm);

// Source channel identifier such as "S1.C" or "EPR.O".
struct ChannelId {
  std::string value;

  auto operator<=>(const ChannelId&) const = default;
  bool operator==(const ChannelId&) const = default;
};

struct Channel {
  ChannelId id;
  double center_nm = 0.0;
  double fwhm_nm = 0.0;
  Band band = Band::CBand;
  // Physical source output fiber carrying this channel ("PP1.out1", ...).
  std::string output;
};

struct ProductPair {};
struct Entangled {
  double v_source = 1.0;
};
using Correlation = std::variant<ProductPair, Entangled>;

struct PairStream {
  std::string id;  // "S1", "S2", "EPR"
  Channel signal;
  Channel idler;
  double pump_nm = 0.0;
  double brightness_pps = 0.0;
  Correlation correlation = ProductPair{};

  bool entangled() const noexcept { return std::holds_alternative<Entangled>(correlation); }
};

struct SourceSpec {
  std::string name;
  std::vector<PairStream> streams;
};

/// |λp_implied − λp| / λp with 1/λp_implied = 1/λs + 1/λi.
double pump_consistency(double pump_nm, double signal_nm, double idler_nm);

SourceSpec preset_source(std::string_view name);

// Validates the type invariants of a stream (band membership, fwhm, brightness,
// visibility range, energy conservation within `tolerance`).
void validate_stream(const PairStream& stream, double tolerance = 0.01);

inline constexpr double kEnergyConservationTolerance = 0.01;

}  // namespace qnet
