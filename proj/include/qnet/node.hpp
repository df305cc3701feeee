#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qnet/link_budget.hpp"
#include "qnet/spectral.hpp"

namespace qnet {

struct Assignment {
  ChannelId channel;
  Endpoint endpoint;
};

// Unassigned channels are dark. Kept as a list (not a map) so that a request
// sending one channel to two endpoints can be represented and rejected.
struct DistributionMap {
  std::vector<Assignment> assignments;
  std::optional<std::string> name;

  std::optional<Endpoint> endpoint_of(const ChannelId& channel) const;
};

const std::vector<std::string>& preset_map_labels();
DistributionMap preset_map(std::string_view label);

enum class ModuleKind { CLSplitter, CLCombiner, OBandPass };
std::string_view module_name(ModuleKind kind) noexcept;

struct LoopbackModule {
  ModuleKind kind;
  std::vector<int> send_ports;    // switch outputs feeding the module
  std::vector<int> return_ports;  // switch inputs fed by the module

  bool operator==(const LoopbackModule&) const = default;
};

struct ComponentLossModel {
  double switch_traverse_db = 2.2;
  // Per waveband stage: the C+L input diplexer, a C/L splitter or a combiner.
  double wbs_stage_db = 0.7;
  double port_uniformity_pp_db = 0.23;
  double s_band_rejection_db = 40.0;
  std::uint64_t port_offset_seed = 0x0A0D;
  double transition_ms = 10.0;
};

void validate_losses(const ComponentLossModel& losses);

// Switch port layout of the 8x8 loopback node.
namespace ports {
inline constexpr int kFeeder1CL = 1;
inline constexpr int kFeeder2CL = 2;
inline constexpr int kFeeder1O = 3;
inline constexpr int kFeeder2O = 4;
inline constexpr int kFirstFoldback = 5;
inline constexpr int kLastFoldback = 8;
inline constexpr int kCount = 8;
int user_port(Endpoint user);
std::optional<Endpoint> user_at(int output_port);
}  // namespace ports

// Which feeder delivers each network channel to the node.
struct FeederPlan {
  struct Entry {
    ChannelId channel;
    Band band;
    int feeder;
  };
  std::vector<Entry> channels;

  const Entry* find(const ChannelId& id) const;
};

FeederPlan feeder_plan(const std::vector<SourceSpec>& sources, const Topology& topology);
FeederPlan default_feeder_plan();

using PathKey = std::pair<ChannelId, Endpoint>;

struct NodeConfiguration {
  std::map<int, int> crosspoints;  // input port -> output port
  std::vector<LoopbackModule> loopback_modules;
  std::map<PathKey, double> loss_table;  // includes the endpoint port offset
  std::map<int, double> port_offsets_db;
  double s_band_rejection_db = 40.0;
  double transition_ms = 10.0;
  std::optional<std::string> map_name;
  // Crosspoints on the delivery chain of each lit user port.
  std::map<Endpoint, std::vector<std::pair<int, int>>> routes;

  bool is_partial_permutation() const;
  std::vector<PathKey> routed() const;
  std::string canonical_text() const;
};

/// Deterministic per-port offsets with exact peak-to-peak spread.
std::map<int, double> port_offsets(const ComponentLossModel& losses);

NodeConfiguration synthesize(const DistributionMap& map, const ComponentLossModel& losses,
                             const FeederPlan& plan = default_feeder_plan());

double insertion_loss(const NodeConfiguration& config, const ChannelId& channel, Endpoint endpoint);

double s_band_rejection(const NodeConfiguration& config, Endpoint endpoint);

struct CrosspointChange {
  int input_port;
  int old_output;  // 0 = unconnected
  int new_output;

  bool operator==(const CrosspointChange&) const = default;
};

struct ReconfigurationDiff {
  std::vector<CrosspointChange> changes;
  double transition_ms = 0.0;
};

ReconfigurationDiff reconfigure_diff(const NodeConfiguration& from, const NodeConfiguration& to);

// Users whose delivery chain differs between two configurations.
std::vector<Endpoint> affected_endpoints(const NodeConfiguration& from, const NodeConfiguration& to);

}  // namespace qnet
