#include "qnet/link_budget.hpp"

#include <cmath>

#include "qnet/error.hpp"

namespace qnet {

std::string_view endpoint_name(Endpoint e) noexcept {
  switch (e) {
    case Endpoint::Alice: return "Alice";
    case Endpoint::Bob: return "Bob";
    case Endpoint::Charlie: return "Charlie";
    case Endpoint::Diana: return "Diana";
    case Endpoint::EmmaLocal: return "EmmaLocal";
  }
  return "?";
}

Endpoint parse_endpoint(std::string_view name) {
  for (Endpoint e : kAllEndpoints) {
    const auto full = endpoint_name(e);
    if (name == full || (name.size() == 1 && name[0] == full[0])) return e;
  }
  if (name == "Emma") return Endpoint::EmmaLocal;
  throw Error(ErrorCode::NotFound, "unknown endpoint '" + std::string(name) + "'");
}

const FiberSpan& Topology::feeder(int id) const {
  if (id == 1) return feeder_1;
  if (id == 2) return feeder_2;
  throw Error(ErrorCode::Configuration, "feeder id must be 1 or 2");
}

int Topology::feeder_of(const Channel& channel) const {
  const auto it = source_to_feeder.find(channel.output);
  if (it == source_to_feeder.end()) {
    throw Error(ErrorCode::Configuration,
                "source output '" + channel.output + "' is not attached to a feeder");
  }
  return it->second;
}

std::map<Band, double> default_attenuation() {
  return {{Band::OBand, 0.39}, {Band::SBand, 0.25}, {Band::CBand, 0.21}, {Band::LBand, 0.21}};
}

Topology default_topology() {
  Topology t;
  t.feeder_1 = FiberSpan{12.8, default_attenuation()};
  t.feeder_2 = FiberSpan{12.8, default_attenuation()};
  for (Endpoint e : kUsers) t.drops[e] = FiberSpan{4.3, default_attenuation()};
  t.source_to_feeder = {{"PP1.out1", 1}, {"AMC", 1}, {"PP1.out2", 2}, {"EPR2.idler", 2}};
  return t;
}

void validate_topology(const Topology& topology) {
  auto check = [](const FiberSpan& s, const std::string& what) {
    if (s.length_km < 0.0) throw Error(ErrorCode::Configuration, what + " has negative length");
    for (const auto& [band, a] : s.atten_db_per_km) {
      if (a < 0.0) throw Error(ErrorCode::Configuration, what + " has negative attenuation");
    }
  };
  check(topology.feeder_1, "feeder_1");
  check(topology.feeder_2, "feeder_2");
  for (Endpoint e : kUsers) {
    const auto it = topology.drops.find(e);
    if (it == topology.drops.end()) {
      throw Error(ErrorCode::Configuration,
                  "endpoint " + std::string(endpoint_name(e)) + " has no drop fiber");
    }
    check(it->second, "drop " + std::string(endpoint_name(e)));
  }
  if (topology.drops.count(Endpoint::EmmaLocal) != 0) {
    throw Error(ErrorCode::Configuration, "EmmaLocal detects at the central office; no drop allowed");
  }
  for (const auto& [out, f] : topology.source_to_feeder) {
    if (f != 1 && f != 2) throw Error(ErrorCode::Configuration, "output " + out + " maps to bad feeder");
  }
}

double fiber_loss(const FiberSpan& span, Band band) {
  const auto it = span.atten_db_per_km.find(band);
  if (it == span.atten_db_per_km.end()) {
    throw Error(ErrorCode::Configuration,
                "no attenuation entry for band " + std::string(band_name(band)));
  }
  return span.length_km * it->second;
}

double transmittance(double loss_db) {
  if (!(loss_db >= 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "loss must be non-negative");
  }
  return std::pow(10.0, -loss_db / 10.0);
}

PathBudget path_budget(const Topology& topology, double node_loss_db, const Channel& channel,
                       Endpoint endpoint) {
  if (endpoint == Endpoint::EmmaLocal) {
    throw Error(ErrorCode::Domain, "EmmaLocal has no fiber path");
  }
  const auto drop = topology.drops.find(endpoint);
  if (drop == topology.drops.end()) {
    throw Error(ErrorCode::Configuration, "missing drop span");
  }
  PathBudget b;
  b.feeder_db = fiber_loss(topology.feeder(topology.feeder_of(channel)), channel.band);
  b.node_db = node_loss_db;
  b.drop_db = fiber_loss(drop->second, channel.band);
  return b;
}

double end_to_end_loss(const Topology& topology, double node_loss_db, const Channel& channel,
                       Endpoint endpoint) {
  return path_budget(topology, node_loss_db, channel, endpoint).total_db();
}

long long path_delay_ps(const Topology& topology, const Channel& channel, Endpoint endpoint) {
  if (endpoint == Endpoint::EmmaLocal) return 0;
  const double km = topology.feeder(topology.feeder_of(channel)).length_km +
                    topology.drops.at(endpoint).length_km;
  return std::llround(km * topology.group_delay_us_per_km * 1e6);
}

double splitter_loss(int fanout, double excess_db) {
  if (fanout < 2) throw Error(ErrorCode::InvalidArgument, "splitter fanout must be >= 2");
  if (excess_db < 0.0) throw Error(ErrorCode::InvalidArgument, "excess loss must be >= 0");
  return 10.0 * std::log10(static_cast<double>(fanout)) + excess_db;
}

}  // namespace qnet
