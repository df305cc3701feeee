#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "qnet/spectral.hpp"

namespace qnet {

enum class Endpoint { Alice, Bob, Charlie, Diana, EmmaLocal };

inline constexpr Endpoint kUsers[] = {Endpoint::Alice, Endpoint::Bob, Endpoint::Charlie,
                                      Endpoint::Diana};
inline constexpr Endpoint kAllEndpoints[] = {Endpoint::Alice, Endpoint::Bob, Endpoint::Charlie,
                                             Endpoint::Diana, Endpoint::EmmaLocal};

std::string_view endpoint_name(Endpoint e) noexcept;
// Accepts full names ("Alice") and single letters ("A", "E").
Endpoint parse_endpoint(std::string_view name);

struct FiberSpan {
  double length_km = 0.0;
  std::map<Band, double> atten_db_per_km;
};

struct Topology {
  FiberSpan feeder_1;
  FiberSpan feeder_2;
  std::map<Endpoint, FiberSpan> drops;
  // Source output fiber ("PP1.out1", "EPR2.idler", "AMC") -> feeder 1 or 2.
  std::map<std::string, int> source_to_feeder;
  double group_delay_us_per_km = 4.9;

  const FiberSpan& feeder(int id) const;
  int feeder_of(const Channel& channel) const;
};

/// Standard attenuation table: C/L 0.21, O 0.39, S 0.25 dB/km.
std::map<Band, double> default_attenuation();
Topology default_topology();
void validate_topology(const Topology& topology);

double fiber_loss(const FiberSpan& span, Band band);

/// 10^(−loss_db/10); negative loss is a contract violation.
double transmittance(double loss_db);

struct PathBudget {
  double feeder_db = 0.0;
  double node_db = 0.0;
  double drop_db = 0.0;

  double total_db() const noexcept { return feeder_db + node_db + drop_db; }
};

PathBudget path_budget(const Topology& topology, double node_loss_db, const Channel& channel,
                       Endpoint endpoint);

double end_to_end_loss(const Topology& topology, double node_loss_db, const Channel& channel,
                       Endpoint endpoint);

// One-way propagation delay source -> endpoint in picoseconds.
long long path_delay_ps(const Topology& topology, const Channel& channel, Endpoint endpoint);

double splitter_loss(int fanout, double excess_db);

}  // namespace qnet
