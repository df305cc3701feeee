#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qnet/link_budget.hpp"
#include "qnet/node.hpp"
#include "qnet/photon.hpp"
#include "qnet/spectral.hpp"

namespace qnet {

/// CRC-8, polynomial 0x07, init 0x00, no reflection, no final xor.
std::uint8_t crc8(const std::uint8_t* data, std::size_t size) noexcept;

inline constexpr std::uint8_t kAmcPreamble = 0xA5;
inline constexpr int kAmcFrameBits = 64;
inline constexpr double kAmcLineRateBps = 40'000.0;

struct AmcFrame {
  std::uint8_t preamble = kAmcPreamble;
  std::uint8_t node_id = 0;
  std::array<std::uint8_t, 4> payload{};  // input 1 in the high nibble of byte 0
  std::uint8_t sequence = 0;
  std::uint8_t crc = 0;

  std::array<std::uint8_t, 8> bytes() const noexcept;
  std::vector<bool> bits() const;  // MSB first
  std::string hex() const;
  double duration_ms(double line_rate_bps = kAmcLineRateBps) const noexcept;
};

AmcFrame encode_frame(const NodeConfiguration& config, std::uint8_t node_id, std::uint8_t sequence);

// Validates length, preamble (framing), CRC (integrity) and permutation (semantic).
AmcFrame parse_frame(const std::vector<bool>& bits);
NodeConfiguration decode_frame(const std::vector<bool>& bits);
NodeConfiguration decode_frame_hex(const std::string& hex);

enum class AmcMode { Electrical, Optical1490 };
std::string_view amc_mode_name(AmcMode mode) noexcept;
AmcMode parse_amc_mode(std::string_view name);

struct Dwell {
  DistributionMap map;
  double dwell_s = 5.0;
};

struct DynamicScenario {
  std::vector<Dwell> sequence;
  double bin_ms = 50.0;
  AmcMode amc_mode = AmcMode::Electrical;
  double transition_ms = 10.0;
  std::uint8_t node_id = 1;
  // Extra noise counted on user detectors while an optical AMC frame is on
  // the fiber. Zero reproduces temporally gated operation.
  double optical_amc_penalty_cps = 0.0;
};

void validate_dynamic(const DynamicScenario& scenario);

// One lit delivery path of a source channel under a node configuration.
// Channels whose source output has no feeder are detected at EmmaLocal.
struct DeliveryRoute {
  std::size_t stream = 0;  // index into flatten_streams()
  ChannelId channel;
  double wavelength_nm = 0.0;
  Endpoint endpoint = Endpoint::EmmaLocal;
  double loss_db = 0.0;
  double transmittance = 1.0;
  long long delay_ps = 0;
};

std::vector<const PairStream*> flatten_streams(const std::vector<SourceSpec>& sources);

std::vector<DeliveryRoute> delivery_routes(const std::vector<const PairStream*>& streams, const Topology& topology,
                                           const NodeConfiguration& config);

struct DynamicSetup {
  std::vector<SourceSpec> sources;
  Topology topology;
  ComponentLossModel losses;
  std::map<Endpoint, DetectorSpec> detectors;
};

struct Segment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;
  std::set<Endpoint> served;
};

struct RateSeries {
  double bin_ms = 50.0;
  std::map<Endpoint, std::vector<std::uint64_t>> counts;  // detector events per bin
  std::vector<Segment> segments;

  double bin_start_s(std::size_t i) const noexcept { return static_cast<double>(i) * bin_ms * 1e-3; }
  std::size_t bins() const noexcept;
};

struct Interval {
  double start_s = 0.0;
  double end_s = 0.0;
};

struct EventRecord {
  double t_s = 0.0;
  std::string kind;
  std::string detail;
};

struct DynamicResult {
  RateSeries series;
  std::vector<EventRecord> log;
  std::vector<Interval> optical_amc;  // AMC frames carried on the feeder fiber
  std::map<Endpoint, std::vector<Interval>> delivery;
  std::uint64_t pairs_generated = 0;
  std::uint64_t photon_detections = 0;
};

DynamicResult run_dynamic(const DynamicScenario& scenario, const DynamicSetup& setup, std::uint64_t seed);

// True when no optical AMC interval overlaps any quantum delivery interval.
bool amc_delivery_disjoint(const DynamicResult& result);

struct RateFactor {
  double factor = 1.0;
  double db = 0.0;
};

// Per-dwell mean rates (c/s) of dwells serving `endpoint`, skipping the first
// bin of each dwell.
std::vector<double> dwell_means_cps(const RateSeries& series, Endpoint endpoint, bool served_only = true);

RateFactor rate_adjustment_factor(const RateSeries& series, Endpoint endpoint, double dark_cps);

struct ServedInterval {
  Endpoint endpoint;
  double start_s = 0.0;
  double end_s = 0.0;
  double dark_cps = 0.0;
};

std::vector<ServedInterval> served_intervals(const RateSeries& series, const std::map<Endpoint, double>& dark_cps);

bool hitless_check(const RateSeries& series, const std::vector<ServedInterval>& intervals);

void write_rate_series_csv(std::ostream& os, const RateSeries& series);
void write_event_log(std::ostream& os, const std::vector<EventRecord>& log);

}  // namespace qnet
