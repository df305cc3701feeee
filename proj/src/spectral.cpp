#include "qnet/spectral.hpp"

#include <array>
#include <cmath>

#include "qnet/error.hpp"

namespace qnet {

namespace {

struct BandEntry {
  Band band;
  std::string_view name;
  BandRange range;
};

// The C band starts at 1500 nm so that the PP1 line near 1510 nm, which the
// source design treats as its C-band output, classifies as C.
constexpr std::array<BandEntry, 5> kBands{{
    {Band::ShortWave, "ShortWave", {800.0, 1000.0}},
    {Band::OBand, "OBand", {1260.0, 1360.0}},
    {Band::SBand, "SBand", {1460.0, 1500.0}},
    {Band::CBand, "CBand", {1500.0, 1565.0}},
    {Band::LBand, "LBand", {1565.0, 1625.0}},
}};

Channel make_channel(std::string id, double center, double fwhm, std::string output) {
  return Channel{ChannelId{std::move(id)}, center, fwhm, band_of(center), std::move(output)};
}

}  // namespace

BandRange band_range(Band band) noexcept {
  for (const auto& e : kBands) {
    if (e.band == band) return e.range;
  }
  return {0.0, 0.0};
}

std::string_view band_name(Band band) noexcept {
  for (const auto& e : kBands) {
    if (e.band == band) return e.name;
  }
  return "?";
}

Band parse_band(std::string_view name) {
  for (const auto& e : kBands) {
    if (e.name == name) return e.band;
  }
  throw Error(ErrorCode::Configuration, "unknown band '" + std::string(name) + "'");
}

Band band_of(double wavelength_nm) {
  if (!(wavelength_nm > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "wavelength must be positive");
  }
  for (std::size_t i = 0; i < kBands.size(); ++i) {
    const auto& r = kBands[i].range;
    const bool last = i + 1 == kBands.size();
    if (wavelength_nm >= r.min_nm && (wavelength_nm < r.max_nm || (last && wavelength_nm == r.max_nm))) {
      return kBands[i].band;
    }
  }
  throw Error(ErrorCode::Unclassified,
              "wavelength " + std::to_string(wavelength_nm) + " nm lies outside every band");
}

double pump_consistency(double pump_nm, double signal_nm, double idler_nm) {
  if (!(pump_nm > 0.0) || !(signal_nm > 0.0) || !(idler_nm > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "wavelengths must be positive");
  }
  const double implied = 1.0 / (1.0 / signal_nm + 1.0 / idler_nm);
  return std::abs(implied - pump_nm) / pump_nm;
}

SourceSpec preset_source(std::string_view name) {
  if (name == "PP1") {
    // Each PBS output carries one C and one L line from different waveguides.
    SourceSpec s{"PP1", {}};
    s.streams.push_back(PairStream{"S1", make_channel("S1.C", 1540.0, 6.0, "PP1.out1"),
                                   make_channel("S1.L", 1590.0, 6.0, "PP1.out2"), 780.0, 0.0,
                                   ProductPair{}});
    s.streams.push_back(PairStream{"S2", make_channel("S2.C", 1510.0, 6.0, "PP1.out2"),
                                   make_channel("S2.L", 1610.0, 6.0, "PP1.out1"), 780.0, 0.0,
                                   ProductPair{}});
    return s;
  }
  if (name == "EPR2") {
    SourceSpec s{"EPR2", {}};
    s.streams.push_back(PairStream{"EPR", make_channel("EPR.S", 904.0, 1.0, "EPR2.local"),
                                   make_channel("EPR.O", 1294.0, 1.0, "EPR2.idler"), 532.0, 0.0,
                                   Entangled{0.955}});
    return s;
  }
  throw Error(ErrorCode::NotFound, "unknown source preset '" + std::string(name) + "'");
}

void validate_stream(const PairStream& stream, double tolerance) {
  for (const Channel* c : {&stream.signal, &stream.idler}) {
    if (!(c->fwhm_nm > 0.0)) {
      throw Error(ErrorCode::Configuration, "channel " + c->id.value + " has non-positive fwhm");
    }
    if (band_of(c->center_nm) != c->band) {
      throw Error(ErrorCode::Configuration,
                  "channel " + c->id.value + " center lies outside its declared band");
    }
  }
  if (stream.brightness_pps < 0.0 || !std::isfinite(stream.brightness_pps)) {
    throw Error(ErrorCode::Configuration, "stream " + stream.id + " has negative brightness");
  }
  if (const auto* e = std::get_if<Entangled>(&stream.correlation)) {
    if (e->v_source < 0.0 || e->v_source > 1.0) {
      throw Error(ErrorCode::Configuration, "stream " + stream.id + " visibility outside [0,1]");
    }
  }
  if (pump_consistency(stream.pump_nm, stream.signal.center_nm, stream.idler.center_nm) >= tolerance) {
    throw Error(ErrorCode::Configuration, "stream " + stream.id + " violates energy conservation");
  }
}

}  // namespace qnet
