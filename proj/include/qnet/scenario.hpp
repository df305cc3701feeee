#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qnet/control.hpp"
#include "qnet/link_budget.hpp"
#include "qnet/node.hpp"
#include "qnet/photon.hpp"
#include "qnet/spectral.hpp"

namespace qnet {

inline constexpr const char* kScenarioSchema = "qnet-scenario/1";

struct CalibrationSpec {
  std::string map = "I";
  std::map<std::string, double> targets_ccps;  // stream id -> pair coincidence rate
  std::optional<double> back_to_back_ccps;     // entangled stream, no fiber
};

struct HistogramSpec {
  long long span_ps = 20'000;
  long long bin_ps = 100;
};

struct DynamicSpec {
  DynamicScenario scenario;
  std::map<Endpoint, DetectorSpec> detectors;
};

struct Scenario {
  std::string schema = kScenarioSchema;
  std::string name;
  std::uint64_t seed = 0;
  double duration_s = 60.0;
  std::vector<SourceSpec> sources;
  Topology topology;
  ComponentLossModel losses;
  // Empty means "derive from the map" (see default_detectors).
  std::map<Endpoint, DetectorSpec> detectors;
  std::optional<DistributionMap> map;
  std::optional<CalibrationSpec> calibration;
  std::optional<DynamicSpec> dynamic;
  double path_visibility = 0.88;
  long long coincidence_window_ps = 2000;
  HistogramSpec histogram;
  bool visibility_back_to_back = false;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::filesystem::path& path);
// Built-in scenario equivalent to the bundled mapping files.
Scenario default_scenario(const std::string& map_label, std::uint64_t seed);

struct PairRow {
  std::string stream;
  Endpoint a;
  Endpoint b;
  ChannelId channel_a;
  ChannelId channel_b;
  bool entangled = false;
};

// Measurement rows implied by a map: one per stream whose two photons reach
// two distinct endpoints. EmmaLocal, when present, is endpoint a.
std::vector<PairRow> measurement_rows(const std::vector<SourceSpec>& sources, const Topology& topology,
                                      const DistributionMap& map);

// Laboratory detector placement for a map: the first endpoint of each pair row
// gets the free-running InGaAs, the second the gated one; the remote end of an
// entangled row gets the free-running InGaAs and EmmaLocal the Si SPAD.
std::map<Endpoint, DetectorSpec> default_detectors(const std::vector<SourceSpec>& sources,
                                                   const Topology& topology, const DistributionMap& map);

// Detectors of the dynamic experiment: free-running InGaAs at A-D with the
// given dark rates, Si SPAD at EmmaLocal.
std::map<Endpoint, DetectorSpec> dynamic_detectors(const std::array<double, 4>& dark_cps = {520, 1300, 1525, 1845});

/// B = R / (T_signal * T_idler * eta_a * eta_b).
double brightness_for_rate(double rate_ccps, double t_signal, double t_idler, double eta_a, double eta_b);

// Per-stream brightness reproducing the targets under `map`.
std::map<std::string, double> calibrate_brightness(const std::map<std::string, double>& targets_ccps,
                                                   const DistributionMap& map, const Scenario& scenario);

// Entangled stream brightness from a back-to-back coincidence rate.
double calibrate_back_to_back(double back_to_back_ccps, const PairStream& stream, const DetectorSpec& local,
                              const DetectorSpec& remote);

double expected_remote_entangled_rate(double back_to_back_ccps, double idler_path_loss_db);

// Copy of the scenario with calibrated brightness applied to its sources.
Scenario resolved(const Scenario& scenario);

struct BudgetRow {
  ChannelId channel;
  Endpoint endpoint;
  PathBudget budget;
};

std::vector<BudgetRow> budget_table(const Scenario& scenario, const NodeConfiguration& config);

struct StaticRow {
  PairRow pair;
  CoincidenceStats stats;
  double expected_ccps = 0.0;
  long long offset_ps = 0;
  std::optional<VisibilityResult> visibility;
  std::optional<ClassicalLimit> limit;
  Histogram histogram;
};

// One detector of a user: the endpoint and the channel it is filtered to.
using DetectionKey = std::pair<Endpoint, ChannelId>;

struct StaticReport {
  std::string map_name;
  std::vector<StaticRow> rows;
  std::vector<BudgetRow> budget;
  std::map<Endpoint, double> singles_cps;  // summed over the endpoint's detectors
  std::map<DetectionKey, std::vector<TimeTag>> tags;
};

struct StaticOptions {
  bool visibility = true;
  bool keep_tags = false;
  unsigned threads = 0;
};

// The scenario must already carry brightness (see resolved()).
StaticReport run_static(const Scenario& scenario, const StaticOptions& options = {});

// Back-to-back or in-network visibility of the entangled stream.
VisibilityResult run_visibility(const Scenario& scenario, unsigned threads = 0);

DynamicResult run_dynamic_scenario(const Scenario& scenario);

void write_static_reports(const StaticReport& report, const std::filesystem::path& dir, bool plots_data,
                          bool emit_tags);
void write_budget_csv(std::ostream& os, const std::vector<BudgetRow>& rows);
void write_visibility_csv(std::ostream& os, const std::string& link, const VisibilityResult& v);
void write_dynamic_reports(const DynamicResult& result, const Scenario& scenario, const std::filesystem::path& dir,
                           bool plots_data);

std::string format_double(double v, int digits = 6);

}  // namespace qnet
