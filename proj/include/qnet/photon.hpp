#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "qnet/link_budget.hpp"
#include "qnet/rng.hpp"
#include "qnet/spectral.hpp"

namespace qnet {

inline constexpr long long kPsPerSecond = 1'000'000'000'000LL;

struct PairEvent {
  long long t_ps = 0;
  std::uint32_t stream = 0;
  double polarization_draw = 0.0;
};

struct Photon {
  long long t_ps = 0;
  double wavelength_nm = 0.0;
};

// Homogeneous Poisson pair emission. Successive slices continue the same
// process, so generating [0,1) then [1,2) equals generating [0,2).
class PairGenerator {
 public:
  PairGenerator(double rate_pps, std::uint32_t stream, std::uint64_t seed);

  void generate(long long until_ps, std::vector<PairEvent>& out);

 private:
  double rate_per_ps_;
  std::uint32_t stream_;
  Engine rng_;
  double next_ps_ = 0.0;
  long long last_ps_ = -1;
};

// Pair emission already thinned by the survival of each photon up to and
// including detector acceptance. Only pairs with a surviving photon are drawn
// (Poisson marking), which keeps long low-efficiency runs cheap.
struct SurvivingPair {
  long long t_ps = 0;
  std::uint8_t mask = 0;  // bit 0: photon a survives, bit 1: photon b survives
};

class SurvivingPairGenerator {
 public:
  // Probabilities of {only a, only b, both} per emitted pair.
  SurvivingPairGenerator(double rate_pps, double p_a_only, double p_b_only, double p_both, std::uint64_t seed);
  // Independent survival of the two photons.
  static SurvivingPairGenerator independent(double rate_pps, double q_a, double q_b, std::uint64_t seed);

  void generate(long long until_ps, std::vector<SurvivingPair>& out);

 private:
  PairGenerator gen_;
  double c_a_;
  double c_b_;
  std::vector<PairEvent> buf_;
};

std::vector<PairEvent> generate_pairs(const PairStream& stream, double duration_s, std::uint64_t seed);

// Independent retention with probability `p`, via geometric skips.
template <class Event>
std::vector<Event> thin(const std::vector<Event>& events, double p, Engine& rng) {
  std::vector<Event> out;
  if (p <= 0.0 || events.empty()) return out;
  if (p >= 1.0) return events;
  out.reserve(static_cast<std::size_t>(static_cast<double>(events.size()) * p * 1.1) + 16);
  // Inverse-CDF geometric draw; stays finite for vanishing p.
  const double n = static_cast<double>(events.size());
  const double log_q = std::log1p(-p);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto skip = [&] { return std::floor(std::log1p(-u(rng)) / log_q); };
  for (double i = skip(); i < n; i += 1.0 + skip()) out.push_back(events[static_cast<std::size_t>(i)]);
  return out;
}

template <class Event>
std::vector<Event> propagate(const std::vector<Event>& events, double loss_db, Engine& rng) {
  return thin(events, transmittance(loss_db), rng);
}

template <class Event>
std::vector<Event> propagate(const std::vector<Event>& events, double loss_db, std::uint64_t seed) {
  Engine rng(seed);
  return propagate(events, loss_db, rng);
}

enum class DetectorKind { InGaAsFree, InGaAsGated, SiSPAD };
std::string_view detector_kind_name(DetectorKind kind) noexcept;
DetectorKind parse_detector_kind(std::string_view name);

struct Gate {
  double freq_hz = 0.0;
  double window_ns = 0.0;
};

struct DetectorSpec {
  std::uint8_t id = 0;
  DetectorKind kind = DetectorKind::InGaAsFree;
  std::map<double, double> efficiency;  // wavelength nm -> fraction
  double dark_cps = 0.0;
  double dead_time_us = 0.0;
  std::optional<Gate> gate;
  double jitter_ps_sigma = 0.0;
};

void validate_detector(const DetectorSpec& d);

// Nearest efficiency entry within 10 nm; NotFound otherwise.
double efficiency_at(const DetectorSpec& d, double wavelength_nm);

double apparent_efficiency(const DetectorSpec& d, double wavelength_nm);

// Presets of the laboratory detectors: "InGaAsFree", "InGaAsGated", "SiSPAD".
DetectorSpec detector_preset(std::string_view name, std::uint8_t id = 0);

enum class TagKind : std::uint8_t { Photon = 0, Dark = 1 };

struct TimeTag {
  long long t_ps = 0;
  std::uint8_t detector_id = 0;
  TagKind kind = TagKind::Photon;

  bool operator==(const TimeTag&) const = default;
};

// Stateful detector that consumes consecutive time slices. Dead time and the
// last emitted tag carry over between slices.
class Detector {
 public:
  Detector(DetectorSpec spec, std::uint64_t seed);

  // `photons` must be sorted; dark counts are drawn over [t0_ps, t1_ps).
  // With `acceptance_applied` the photons already passed efficiency and gate
  // thinning (see SurvivingPairGenerator).
  void process(const std::vector<Photon>& photons, long long t0_ps, long long t1_ps,
               std::vector<TimeTag>& out, bool acceptance_applied = false);

  const DetectorSpec& spec() const noexcept { return spec_; }

 private:
  DetectorSpec spec_;
  Engine rng_;
  long long dead_ps_;
  double duty_;
  long long last_ps_ = 0;
  bool any_ = false;
  std::vector<std::pair<double, double>> eff_cache_;
};

std::vector<TimeTag> detect(const std::vector<Photon>& photons, const DetectorSpec& d, double duration_s,
                            std::uint64_t seed);

struct CoincidenceStats {
  std::uint64_t count = 0;
  double rate_ccps = 0.0;
  double mean = 0.0;  // per 1 s bin
  double std = 0.0;
  std::vector<std::uint64_t> per_second;
};

// Pairs with |t_a - t_b + offset_ps| <= window_ps/2; each tag used at most once.
CoincidenceStats coincidences(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b,
                              long long window_ps, double duration_s, long long offset_ps = 0);

struct Histogram {
  long long start_ps = 0;  // lower edge of the first bin
  long long bin_ps = 0;
  std::vector<std::uint64_t> counts;

  long long center_of(std::size_t i) const noexcept {
    return start_ps + static_cast<long long>(i) * bin_ps + bin_ps / 2;
  }
  std::size_t peak_bin() const noexcept;
};

// All pairwise delays t_b - t_a - offset_ps within +-span_ps/2.
Histogram coincidence_histogram(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b, long long span_ps,
                                long long bin_ps, long long offset_ps = 0);

double accidental_rate(double r_a, double r_b, double window_ps);

double joint_detection_probability(double v_source, double angle_a_deg, double angle_b_deg);

inline constexpr std::array<const char*, 8> kVisibilitySettings{"HH", "HV", "VH", "VV",
                                                                "AD", "AA", "DA", "DD"};
double polarizer_angle_deg(char setting);

struct VisibilityResult {
  std::map<std::string, double> counts;  // cc/s per setting
  double v_rectilinear = 0.0;
  double v_diagonal = 0.0;
  double v = 0.0;
};

VisibilityResult visibility_from_counts(const std::map<std::string, double>& counts);

struct VisibilityOptions {
  long long window_ps = 2000;
  // Retention of polarization contrast along the network path.
  double path_visibility = 1.0;
  long long delay_a_ps = 0;
  long long delay_b_ps = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

// Side a detects the signal photon, side b the idler.
VisibilityResult measure_visibility(const PairStream& stream, double path_loss_a_db, double path_loss_b_db,
                                    const DetectorSpec& det_a, const DetectorSpec& det_b, double duration_s,
                                    std::uint64_t seed, const VisibilityOptions& options = {});

struct ClassicalLimit {
  bool exceeds = false;
  double margin = 0.0;
};

inline constexpr double kClassicalLimit = 0.70711;
ClassicalLimit classical_limit_check(double v);

void write_tags_binary(std::ostream& os, const std::vector<TimeTag>& tags);
std::vector<TimeTag> read_tags_binary(std::istream& is);
void write_tags_csv(std::ostream& os, const std::vector<TimeTag>& tags);

}  // namespace qnet
