#include "qnet/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qnet/error.hpp"
#include "qnet/parallel.hpp"

namespace qnet {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::Configuration, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end()) {
      throw Error(ErrorCode::Configuration, "unknown key '" + k + "' in " + where);
    }
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::Configuration, std::string("key '") + key + "' has the wrong type");
  }
}

Channel parse_channel(const json& j, const std::string& where) {
  require_keys(j, where, {"id", "center_nm", "fwhm_nm", "output"});
  Channel c;
  c.id = ChannelId{get_or<std::string>(j, "id", "")};
  c.center_nm = get_or<double>(j, "center_nm", 0.0);
  c.fwhm_nm = get_or<double>(j, "fwhm_nm", 0.0);
  c.output = get_or<std::string>(j, "output", "");
  if (c.id.value.empty() || c.output.empty()) {
    throw Error(ErrorCode::Configuration, where + " needs id and output");
  }
  c.band = band_of(c.center_nm);
  return c;
}

SourceSpec parse_source(const json& j) {
  if (j.is_string()) return preset_source(j.get<std::string>());
  if (j.contains("preset")) {
    require_keys(j, "source", {"preset", "brightness_pps", "v_source"});
    SourceSpec s = preset_source(j["preset"].get<std::string>());
    if (j.contains("brightness_pps")) {
      for (const auto& [id, b] : j["brightness_pps"].items()) {
        auto it = std::find_if(s.streams.begin(), s.streams.end(), [&](const PairStream& p) { return p.id == id; });
        if (it == s.streams.end()) throw Error(ErrorCode::NotFound, "source " + s.name + " has no stream " + id);
        it->brightness_pps = b.get<double>();
      }
    }
    if (j.contains("v_source")) {
      for (auto& p : s.streams) {
        if (p.entangled()) p.correlation = Entangled{j["v_source"].get<double>()};
      }
    }
    return s;
  }
  require_keys(j, "source", {"name", "streams"});
  SourceSpec s;
  s.name = get_or<std::string>(j, "name", "");
  for (const auto& js : j.at("streams")) {
    require_keys(js, "stream", {"id", "signal", "idler", "pump_nm", "brightness_pps", "v_source"});
    PairStream p;
    p.id = get_or<std::string>(js, "id", "");
    p.signal = parse_channel(js.at("signal"), "stream " + p.id + " signal");
    p.idler = parse_channel(js.at("idler"), "stream " + p.id + " idler");
    p.pump_nm = get_or<double>(js, "pump_nm", 0.0);
    p.brightness_pps = get_or<double>(js, "brightness_pps", 0.0);
    if (js.contains("v_source")) {
      p.correlation = Entangled{js["v_source"].get<double>()};
    }
    s.streams.push_back(std::move(p));
  }
  return s;
}

FiberSpan parse_span(const json& j, FiberSpan base, const std::string& where) {
  require_keys(j, where, {"length_km", "atten_db_per_km"});
  base.length_km = get_or<double>(j, "length_km", base.length_km);
  if (j.contains("atten_db_per_km")) {
    for (const auto& [band, a] : j["atten_db_per_km"].items()) base.atten_db_per_km[parse_band(band)] = a.get<double>();
  }
  return base;
}

Topology parse_topology(const json& j) {
  require_keys(j, "topology", {"feeder_1", "feeder_2", "drops", "source_to_feeder", "group_delay_us_per_km"});
  Topology t = default_topology();
  if (j.contains("feeder_1")) t.feeder_1 = parse_span(j["feeder_1"], t.feeder_1, "feeder_1");
  if (j.contains("feeder_2")) t.feeder_2 = parse_span(j["feeder_2"], t.feeder_2, "feeder_2");
  if (j.contains("drops")) {
    for (const auto& [name, span] : j["drops"].items()) {
      const Endpoint e = parse_endpoint(name);
      FiberSpan base = t.drops.count(e) ? t.drops[e] : FiberSpan{0.0, default_attenuation()};
      t.drops[e] = parse_span(span, base, "drop " + name);
    }
  }
  if (j.contains("source_to_feeder")) {
    t.source_to_feeder.clear();
    for (const auto& [out, f] : j["source_to_feeder"].items()) t.source_to_feeder[out] = f.get<int>();
  }
  t.group_delay_us_per_km = get_or<double>(j, "group_delay_us_per_km", t.group_delay_us_per_km);
  validate_topology(t);
  return t;
}

ComponentLossModel parse_losses(const json& j) {
  require_keys(j, "component_losses",
               {"switch_traverse_db", "wbs_stage_db", "port_uniformity_pp_db", "s_band_rejection_db",
                "port_offset_seed", "transition_ms"});
  ComponentLossModel m;
  m.switch_traverse_db = get_or<double>(j, "switch_traverse_db", m.switch_traverse_db);
  m.wbs_stage_db = get_or<double>(j, "wbs_stage_db", m.wbs_stage_db);
  m.port_uniformity_pp_db = get_or<double>(j, "port_uniformity_pp_db", m.port_uniformity_pp_db);
  m.s_band_rejection_db = get_or<double>(j, "s_band_rejection_db", m.s_band_rejection_db);
  m.port_offset_seed = get_or<std::uint64_t>(j, "port_offset_seed", m.port_offset_seed);
  m.transition_ms = get_or<double>(j, "transition_ms", m.transition_ms);
  validate_losses(m);
  return m;
}

std::uint8_t detector_id_for(Endpoint e) { return static_cast<std::uint8_t>(static_cast<int>(e) + 1); }

std::map<Endpoint, DetectorSpec> parse_detectors(const json& j) {
  std::map<Endpoint, DetectorSpec> out;
  if (j.is_string()) {
    if (j.get<std::string>() != "auto") throw Error(ErrorCode::Configuration, "detectors must be 'auto' or a list");
    return out;
  }
  for (const auto& jd : j) {
    require_keys(jd, "detector",
                 {"endpoint", "preset", "id", "efficiency", "dark_cps", "dead_time_us", "gate", "jitter_ps_sigma"});
    const Endpoint e = parse_endpoint(jd.at("endpoint").get<std::string>());
    DetectorSpec d = detector_preset(jd.at("preset").get<std::string>(), detector_id_for(e));
    d.id = get_or<std::uint8_t>(jd, "id", d.id);
    if (jd.contains("efficiency")) {
      d.efficiency.clear();
      for (const auto& [wl, eta] : jd["efficiency"].items()) d.efficiency[std::stod(wl)] = eta.get<double>();
    }
    d.dark_cps = get_or<double>(jd, "dark_cps", d.dark_cps);
    d.dead_time_us = get_or<double>(jd, "dead_time_us", d.dead_time_us);
    d.jitter_ps_sigma = get_or<double>(jd, "jitter_ps_sigma", d.jitter_ps_sigma);
    if (jd.contains("gate")) {
      if (jd["gate"].is_null()) {
        d.gate.reset();
      } else {
        require_keys(jd["gate"], "gate", {"freq_hz", "window_ns"});
        d.gate = Gate{jd["gate"].at("freq_hz").get<double>(), jd["gate"].at("window_ns").get<double>()};
      }
    }
    validate_detector(d);
    if (!out.emplace(e, d).second) {
      throw Error(ErrorCode::Configuration, "two detectors assigned to " + std::string(endpoint_name(e)));
    }
  }
  return out;
}

DistributionMap parse_map(const json& j) {
  if (j.is_string()) return preset_map(j.get<std::string>());
  require_keys(j, "map", {"name", "assignments"});
  DistributionMap m;
  if (j.contains("name")) m.name = j["name"].get<std::string>();
  const auto& a = j.at("assignments");
  if (a.is_object()) {
    for (const auto& [ch, e] : a.items()) m.assignments.push_back({ChannelId{ch}, parse_endpoint(e.get<std::string>())});
  } else {
    for (const auto& item : a) {
      require_keys(item, "assignment", {"channel", "endpoint"});
      m.assignments.push_back({ChannelId{item.at("channel").get<std::string>()},
                               parse_endpoint(item.at("endpoint").get<std::string>())});
    }
  }
  return m;
}

const PairStream* find_stream(const std::vector<SourceSpec>& sources, const std::string& id) {
  for (const auto& s : sources) {
    for (const auto& p : s.streams) {
      if (p.id == id) return &p;
    }
  }
  return nullptr;
}

const Channel* find_channel(const std::vector<SourceSpec>& sources, const ChannelId& id) {
  for (const auto& s : sources) {
    for (const auto& p : s.streams) {
      if (p.signal.id == id) return &p.signal;
      if (p.idler.id == id) return &p.idler;
    }
  }
  return nullptr;
}

}  // namespace

Scenario parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Configuration, std::string("scenario is not valid JSON: ") + e.what());
  }
  try {
    require_keys(j, "scenario",
                 {"schema", "name", "seed", "duration_s", "sources", "topology", "component_losses", "detectors",
                  "map", "calibration", "dynamic", "path_visibility", "coincidence_window_ps", "histogram",
                  "visibility"});
    Scenario s;
    s.schema = get_or<std::string>(j, "schema", "");
    if (s.schema != kScenarioSchema) {
      throw Error(ErrorCode::Configuration, "unsupported scenario schema '" + s.schema + "'");
    }
    if (!j.contains("seed")) throw Error(ErrorCode::Configuration, "scenario must carry an explicit seed");
    s.seed = j["seed"].get<std::uint64_t>();
    s.name = get_or<std::string>(j, "name", "");
    s.duration_s = get_or<double>(j, "duration_s", s.duration_s);
    if (!(s.duration_s > 0.0)) throw Error(ErrorCode::Configuration, "duration_s must be positive");
    if (j.contains("sources")) {
      for (const auto& js : j["sources"]) s.sources.push_back(parse_source(js));
    } else {
      s.sources = {preset_source("PP1"), preset_source("EPR2")};
    }
    for (const auto& src : s.sources) {
      for (const auto& p : src.streams) validate_stream(p);
    }
    s.topology = j.contains("topology") ? parse_topology(j["topology"]) : default_topology();
    if (j.contains("component_losses")) s.losses = parse_losses(j["component_losses"]);
    if (j.contains("detectors")) s.detectors = parse_detectors(j["detectors"]);
    if (j.contains("map")) s.map = parse_map(j["map"]);
    if (j.contains("calibration")) {
      const auto& jc = j["calibration"];
      require_keys(jc, "calibration", {"map", "targets_ccps", "back_to_back_ccps"});
      CalibrationSpec c;
      c.map = get_or<std::string>(jc, "map", c.map);
      if (jc.contains("targets_ccps")) c.targets_ccps = jc["targets_ccps"].get<std::map<std::string, double>>();
      if (jc.contains("back_to_back_ccps")) c.back_to_back_ccps = jc["back_to_back_ccps"].get<double>();
      s.calibration = c;
    }
    if (j.contains("dynamic")) {
      const auto& jd = j["dynamic"];
      require_keys(jd, "dynamic",
                   {"sequence", "bin_ms", "amc_mode", "transition_ms", "node_id", "optical_amc_penalty_cps",
                    "detectors", "dark_cps"});
      DynamicSpec d;
      for (const auto& step : jd.at("sequence")) {
        require_keys(step, "sequence entry", {"map", "dwell_s"});
        d.scenario.sequence.push_back({parse_map(step.at("map")), get_or<double>(step, "dwell_s", 5.0)});
      }
      d.scenario.bin_ms = get_or<double>(jd, "bin_ms", d.scenario.bin_ms);
      d.scenario.amc_mode = parse_amc_mode(get_or<std::string>(jd, "amc_mode", "Electrical"));
      d.scenario.transition_ms = get_or<double>(jd, "transition_ms", s.losses.transition_ms);
      d.scenario.node_id = get_or<std::uint8_t>(jd, "node_id", d.scenario.node_id);
      d.scenario.optical_amc_penalty_cps = get_or<double>(jd, "optical_amc_penalty_cps", 0.0);
      if (jd.contains("detectors")) d.detectors = parse_detectors(jd["detectors"]);
      if (d.detectors.empty()) {
        const auto dark = get_or<std::vector<double>>(jd, "dark_cps", {520, 1300, 1525, 1845});
        if (dark.size() != 4) throw Error(ErrorCode::Configuration, "dynamic dark_cps needs four entries (A-D)");
        d.detectors = dynamic_detectors({dark[0], dark[1], dark[2], dark[3]});
      }
      validate_dynamic(d.scenario);
      s.dynamic = d;
    }
    s.path_visibility = get_or<double>(j, "path_visibility", s.path_visibility);
    if (s.path_visibility < 0.0 || s.path_visibility > 1.0) {
      throw Error(ErrorCode::Configuration, "path_visibility must lie in [0,1]");
    }
    s.coincidence_window_ps = get_or<long long>(j, "coincidence_window_ps", s.coincidence_window_ps);
    if (s.coincidence_window_ps <= 0) throw Error(ErrorCode::Configuration, "coincidence window must be positive");
    if (j.contains("histogram")) {
      require_keys(j["histogram"], "histogram", {"span_ps", "bin_ps"});
      s.histogram.span_ps = get_or<long long>(j["histogram"], "span_ps", s.histogram.span_ps);
      s.histogram.bin_ps = get_or<long long>(j["histogram"], "bin_ps", s.histogram.bin_ps);
      if (s.histogram.bin_ps <= 0 || s.histogram.span_ps < s.histogram.bin_ps) {
        throw Error(ErrorCode::Configuration, "histogram needs bin_ps > 0 and span_ps >= bin_ps");
      }
    }
    if (j.contains("visibility")) {
      require_keys(j["visibility"], "visibility", {"back_to_back"});
      s.visibility_back_to_back = get_or<bool>(j["visibility"], "back_to_back", false);
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Configuration, std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

Scenario default_scenario(const std::string& map_label, std::uint64_t seed) {
  Scenario s;
  s.name = "static_" + map_label;
  s.seed = seed;
  s.sources = {preset_source("PP1"), preset_source("EPR2")};
  s.topology = default_topology();
  s.map = preset_map(map_label);
  s.calibration = CalibrationSpec{"I", {{"S1", 5.9}, {"S2", 1.2}}, 190.7};
  return s;
}

std::vector<PairRow> measurement_rows(const std::vector<SourceSpec>& sources, const Topology& topology,
                                      const DistributionMap& map) {
  std::vector<PairRow> rows;
  for (const auto* p : flatten_streams(sources)) {
    auto where = [&](const Channel& c) -> std::optional<Endpoint> {
      if (topology.source_to_feeder.count(c.output) == 0) return Endpoint::EmmaLocal;
      return map.endpoint_of(c.id);
    };
    const auto es = where(p->signal);
    const auto ei = where(p->idler);
    if (!es || !ei || *es == *ei) continue;
    PairRow r;
    r.stream = p->id;
    r.entangled = p->entangled();
    const bool signal_first = *es == Endpoint::EmmaLocal || (*ei != Endpoint::EmmaLocal && *es < *ei);
    r.a = signal_first ? *es : *ei;
    r.b = signal_first ? *ei : *es;
    r.channel_a = signal_first ? p->signal.id : p->idler.id;
    r.channel_b = signal_first ? p->idler.id : p->signal.id;
    rows.push_back(r);
  }
  return rows;
}

std::map<Endpoint, DetectorSpec> default_detectors(const std::vector<SourceSpec>& sources,
                                                   const Topology& topology, const DistributionMap& map) {
  std::map<Endpoint, DetectorSpec> out;
  auto put = [&](Endpoint e, const char* preset) {
    if (out.count(e) == 0) out.emplace(e, detector_preset(preset, detector_id_for(e)));
  };
  const auto rows = measurement_rows(sources, topology, map);
  for (const auto& r : rows) {
    if (r.a == Endpoint::EmmaLocal) continue;
    put(r.a, "InGaAsFree");
    put(r.b, "InGaAsGated");
  }
  for (const auto& r : rows) {
    if (r.a != Endpoint::EmmaLocal) continue;
    put(r.a, "SiSPAD");
    put(r.b, "InGaAsFree");
  }
  for (const auto& a : map.assignments) put(a.endpoint, "InGaAsFree");
  for (const auto* p : flatten_streams(sources)) {
    for (const Channel* c : {&p->signal, &p->idler}) {
      if (topology.source_to_feeder.count(c->output) == 0) put(Endpoint::EmmaLocal, "SiSPAD");
    }
  }
  return out;
}

std::map<Endpoint, DetectorSpec> dynamic_detectors(const std::array<double, 4>& dark_cps) {
  std::map<Endpoint, DetectorSpec> out;
  for (std::size_t i = 0; i < 4; ++i) {
    DetectorSpec d = detector_preset("InGaAsFree", detector_id_for(kUsers[i]));
    d.dark_cps = dark_cps[i];
    out.emplace(kUsers[i], d);
  }
  out.emplace(Endpoint::EmmaLocal, detector_preset("SiSPAD", detector_id_for(Endpoint::EmmaLocal)));
  return out;
}

double brightness_for_rate(double rate_ccps, double t_signal, double t_idler, double eta_a, double eta_b) {
  if (rate_ccps < 0.0) throw Error(ErrorCode::InvalidArgument, "target rate must be >= 0");
  const double den = t_signal * t_idler * eta_a * eta_b;
  if (!(den > 0.0)) throw Error(ErrorCode::Indeterminate, "zero transmittance or efficiency; brightness undefined");
  return rate_ccps / den;
}

namespace {

struct PathInfo {
  double loss_db = 0.0;
  long long delay_ps = 0;
};

PathInfo path_info(const Scenario& s, const NodeConfiguration& cfg, const ChannelId& ch, Endpoint e) {
  if (e == Endpoint::EmmaLocal) return {};
  const Channel* c = find_channel(s.sources, ch);
  if (c == nullptr) throw Error(ErrorCode::NotFound, "unknown channel " + ch.value);
  return {end_to_end_loss(s.topology, insertion_loss(cfg, ch, e), *c, e), path_delay_ps(s.topology, *c, e)};
}

double wavelength_of(const Scenario& s, const ChannelId& ch) {
  const Channel* c = find_channel(s.sources, ch);
  if (c == nullptr) throw Error(ErrorCode::NotFound, "unknown channel " + ch.value);
  return c->center_nm;
}

bool same_assignments(const DistributionMap& a, const DistributionMap& b) {
  auto key = [](const DistributionMap& m) {
    std::vector<std::pair<std::string, int>> k;
    for (const auto& x : m.assignments) k.emplace_back(x.channel.value, static_cast<int>(x.endpoint));
    std::sort(k.begin(), k.end());
    return k;
  };
  return key(a) == key(b);
}

// Explicit detectors belong to the scenario's own map; other maps get the
// laboratory placement.
std::map<Endpoint, DetectorSpec> detectors_for(const Scenario& s, const DistributionMap& map) {
  if (!s.detectors.empty() && s.map && same_assignments(*s.map, map)) return s.detectors;
  return default_detectors(s.sources, s.topology, map);
}

}  // namespace

std::map<std::string, double> calibrate_brightness(const std::map<std::string, double>& targets_ccps,
                                                   const DistributionMap& map, const Scenario& scenario) {
  const auto cfg = synthesize(map, scenario.losses, feeder_plan(scenario.sources, scenario.topology));
  const auto dets = detectors_for(scenario, map);
  const auto rows = measurement_rows(scenario.sources, scenario.topology, map);
  std::map<std::string, double> out;
  for (const auto& [stream, target] : targets_ccps) {
    const auto row = std::find_if(rows.begin(), rows.end(), [&](const PairRow& r) { return r.stream == stream; });
    if (row == rows.end()) {
      throw Error(ErrorCode::NotRouted, "calibration map does not measure stream " + stream);
    }
    const auto pa = path_info(scenario, cfg, row->channel_a, row->a);
    const auto pb = path_info(scenario, cfg, row->channel_b, row->b);
    const double eta_a = apparent_efficiency(dets.at(row->a), wavelength_of(scenario, row->channel_a));
    const double eta_b = apparent_efficiency(dets.at(row->b), wavelength_of(scenario, row->channel_b));
    out[stream] = brightness_for_rate(target, transmittance(pa.loss_db), transmittance(pb.loss_db), eta_a, eta_b);
  }
  return out;
}

double calibrate_back_to_back(double back_to_back_ccps, const PairStream& stream, const DetectorSpec& local,
                              const DetectorSpec& remote) {
  return brightness_for_rate(back_to_back_ccps, 1.0, 1.0, apparent_efficiency(local, stream.signal.center_nm),
                             apparent_efficiency(remote, stream.idler.center_nm));
}

double expected_remote_entangled_rate(double back_to_back_ccps, double idler_path_loss_db) {
  if (back_to_back_ccps < 0.0) throw Error(ErrorCode::InvalidArgument, "rate must be >= 0");
  return back_to_back_ccps * transmittance(idler_path_loss_db);
}

namespace {

DetectorSpec local_detector(const Scenario& s) {
  const auto it = s.detectors.find(Endpoint::EmmaLocal);
  return it != s.detectors.end() ? it->second : detector_preset("SiSPAD", detector_id_for(Endpoint::EmmaLocal));
}

}  // namespace

Scenario resolved(const Scenario& scenario) {
  Scenario s = scenario;
  if (!s.calibration) return s;
  const auto& cal = *s.calibration;
  if (!cal.targets_ccps.empty()) {
    const auto b = calibrate_brightness(cal.targets_ccps, preset_map(cal.map), s);
    for (auto& src : s.sources) {
      for (auto& p : src.streams) {
        const auto it = b.find(p.id);
        if (it != b.end()) p.brightness_pps = it->second;
      }
    }
  }
  if (cal.back_to_back_ccps) {
    const DetectorSpec remote = detector_preset("InGaAsFree");
    for (auto& src : s.sources) {
      for (auto& p : src.streams) {
        if (p.entangled()) p.brightness_pps = calibrate_back_to_back(*cal.back_to_back_ccps, p, local_detector(s), remote);
      }
    }
  }
  return s;
}

std::vector<BudgetRow> budget_table(const Scenario& scenario, const NodeConfiguration& config) {
  std::vector<BudgetRow> rows;
  for (const auto& [key, node_db] : config.loss_table) {
    const Channel* c = find_channel(scenario.sources, key.first);
    if (c == nullptr) throw Error(ErrorCode::NotFound, "unknown channel " + key.first.value);
    rows.push_back({key.first, key.second, path_budget(scenario.topology, node_db, *c, key.second)});
  }
  return rows;
}

StaticReport run_static(const Scenario& scenario, const StaticOptions& options) {
  if (!scenario.map) throw Error(ErrorCode::Configuration, "static run needs a distribution map");
  const auto& map = *scenario.map;
  const auto cfg = synthesize(map, scenario.losses, feeder_plan(scenario.sources, scenario.topology));
  const auto dets = detectors_for(scenario, map);
  const auto streams = flatten_streams(scenario.sources);
  const auto routes = delivery_routes(streams, scenario.topology, cfg);
  for (const auto& r : routes) {
    if (dets.count(r.endpoint) == 0) {
      throw Error(ErrorCode::Configuration,
                  "no detector assigned to " + std::string(endpoint_name(r.endpoint)) + " receiving " + r.channel.value);
    }
  }

  StaticReport rep;
  rep.map_name = map.name.value_or("custom");
  rep.budget = budget_table(scenario, cfg);

  const std::uint64_t seed = scenario.seed;
  // Each stream has at most two lit routes (its signal and idler photon).
  struct StreamPlan {
    std::vector<const DeliveryRoute*> routes;
    std::optional<SurvivingPairGenerator> gen;
  };
  std::vector<StreamPlan> plans(streams.size());
  for (const auto& r : routes) plans[r.stream].routes.push_back(&r);
  for (std::size_t si = 0; si < streams.size(); ++si) {
    auto& sp = plans[si];
    double q[2] = {0.0, 0.0};
    for (std::size_t k = 0; k < sp.routes.size(); ++k) {
      const auto* r = sp.routes[k];
      q[k] = r->transmittance * apparent_efficiency(dets.at(r->endpoint), r->wavelength_nm);
    }
    sp.gen = SurvivingPairGenerator::independent(streams[si]->brightness_pps, q[0], q[1],
                                                 derive_seed(seed, "static/pairs/" + streams[si]->id));
  }
  // A user receiving several channels separates them by band in front of its
  // detectors, so every delivered channel has its own detector instance.
  std::map<DetectionKey, Detector> detectors;
  for (const auto& r : routes) {
    const std::string label =
        "static/detector/" + std::string(endpoint_name(r.endpoint)) + "/" + r.channel.value;
    detectors.emplace(DetectionKey{r.endpoint, r.channel}, Detector(dets.at(r.endpoint), derive_seed(seed, label)));
  }
  std::map<DetectionKey, std::vector<TimeTag>> tags;
  std::map<DetectionKey, std::vector<Photon>> photons;
  std::vector<SurvivingPair> pairs;
  const long long end_ps = std::llround(scenario.duration_s * static_cast<double>(kPsPerSecond));
  for (long long t0 = 0; t0 < end_ps; t0 += kPsPerSecond) {
    const long long t1 = std::min(end_ps, t0 + kPsPerSecond);
    for (auto& [k, v] : photons) v.clear();
    for (auto& sp : plans) {
      if (sp.routes.empty()) continue;
      pairs.clear();
      sp.gen->generate(t1, pairs);
      for (std::size_t k = 0; k < sp.routes.size(); ++k) {
        const auto* r = sp.routes[k];
        auto& out = photons[{r->endpoint, r->channel}];
        for (const auto& p : pairs) {
          if (p.mask & (1u << k)) out.push_back({p.t_ps + r->delay_ps, r->wavelength_nm});
        }
      }
    }
    for (auto& [k, det] : detectors) {
      auto& ph = photons[k];
      std::sort(ph.begin(), ph.end(), [](const Photon& a, const Photon& b) { return a.t_ps < b.t_ps; });
      det.process(ph, t0, t1, tags[k], true);
    }
  }
  for (const auto& [k, t] : tags) rep.singles_cps[k.first] += static_cast<double>(t.size()) / scenario.duration_s;

  const auto rows = measurement_rows(scenario.sources, scenario.topology, map);
  rep.rows.resize(rows.size());
  parallel_for(
      rows.size(),
      [&](std::size_t i) {
        const auto& pr = rows[i];
        StaticRow& row = rep.rows[i];
        row.pair = pr;
        const auto pa = path_info(scenario, cfg, pr.channel_a, pr.a);
        const auto pb = path_info(scenario, cfg, pr.channel_b, pr.b);
        row.offset_ps = pb.delay_ps - pa.delay_ps;
        const auto& ta = tags.at({pr.a, pr.channel_a});
        const auto& tb = tags.at({pr.b, pr.channel_b});
        row.stats = coincidences(ta, tb, scenario.coincidence_window_ps, scenario.duration_s, row.offset_ps);
        row.histogram = coincidence_histogram(ta, tb, scenario.histogram.span_ps, scenario.histogram.bin_ps, row.offset_ps);
        const PairStream* stream = find_stream(scenario.sources, pr.stream);
        row.expected_ccps = stream->brightness_pps * transmittance(pa.loss_db) * transmittance(pb.loss_db) *
                            apparent_efficiency(dets.at(pr.a), wavelength_of(scenario, pr.channel_a)) *
                            apparent_efficiency(dets.at(pr.b), wavelength_of(scenario, pr.channel_b));
        if (pr.entangled && options.visibility) {
          VisibilityOptions vo;
          vo.window_ps = scenario.coincidence_window_ps;
          vo.path_visibility = scenario.path_visibility;
          vo.delay_a_ps = pa.delay_ps;
          vo.delay_b_ps = pb.delay_ps;
          vo.threads = 1;
          const bool signal_at_a = stream->signal.id == pr.channel_a;
          row.visibility = signal_at_a
                               ? measure_visibility(*stream, pa.loss_db, pb.loss_db, dets.at(pr.a), dets.at(pr.b),
                                                    scenario.duration_s, derive_seed(seed, "static/visibility/" + pr.stream), vo)
                               : measure_visibility(*stream, pb.loss_db, pa.loss_db, dets.at(pr.b), dets.at(pr.a),
                                                    scenario.duration_s, derive_seed(seed, "static/visibility/" + pr.stream), vo);
          row.limit = classical_limit_check(row.visibility->v);
        }
      },
      options.threads);
  if (options.keep_tags) rep.tags = std::move(tags);
  return rep;
}

VisibilityResult run_visibility(const Scenario& scenario, unsigned threads) {
  const Scenario s = resolved(scenario);
  const PairStream* stream = nullptr;
  for (const auto* p : flatten_streams(s.sources)) {
    if (p->entangled()) {
      stream = p;
      break;
    }
  }
  if (stream == nullptr) throw Error(ErrorCode::Domain, "scenario has no entangled stream");
  VisibilityOptions vo;
  vo.window_ps = s.coincidence_window_ps;
  vo.threads = threads;
  if (s.visibility_back_to_back || !s.map) {
    vo.path_visibility = 1.0;
    return measure_visibility(*stream, 0.0, 0.0, local_detector(s), detector_preset("InGaAsFree"), s.duration_s,
                              derive_seed(s.seed, "visibility/back_to_back"), vo);
  }
  const auto rows = measurement_rows(s.sources, s.topology, *s.map);
  const auto row = std::find_if(rows.begin(), rows.end(), [&](const PairRow& r) { return r.stream == stream->id; });
  if (row == rows.end()) {
    throw Error(ErrorCode::NotRouted, "entangled stream " + stream->id + " is not routed in this map");
  }
  const auto cfg = synthesize(*s.map, s.losses, feeder_plan(s.sources, s.topology));
  const auto dets = detectors_for(s, *s.map);
  const auto pa = path_info(s, cfg, row->channel_a, row->a);
  const auto pb = path_info(s, cfg, row->channel_b, row->b);
  vo.path_visibility = s.path_visibility;
  vo.delay_a_ps = pa.delay_ps;
  vo.delay_b_ps = pb.delay_ps;
  return measure_visibility(*stream, pa.loss_db, pb.loss_db, dets.at(row->a), dets.at(row->b), s.duration_s,
                            derive_seed(s.seed, "visibility/network"), vo);
}

DynamicResult run_dynamic_scenario(const Scenario& scenario) {
  if (!scenario.dynamic) throw Error(ErrorCode::Configuration, "scenario has no dynamic section");
  const Scenario s = resolved(scenario);
  DynamicSetup setup{s.sources, s.topology, s.losses, s.dynamic->detectors};
  return run_dynamic(s.dynamic->scenario, setup, s.seed);
}

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(ErrorCode::Io, "cannot write " + p.string());
  return os;
}

std::string row_label(const PairRow& r) {
  return r.stream + "_" + std::string(endpoint_name(r.a)) + "_" + std::string(endpoint_name(r.b));
}

}  // namespace

void write_budget_csv(std::ostream& os, const std::vector<BudgetRow>& rows) {
  os << "channel,endpoint,feeder_db,node_db,drop_db,total_db\n";
  for (const auto& r : rows) {
    os << r.channel.value << ',' << endpoint_name(r.endpoint) << ',' << format_double(r.budget.feeder_db, 4) << ','
       << format_double(r.budget.node_db, 4) << ',' << format_double(r.budget.drop_db, 4) << ','
       << format_double(r.budget.total_db(), 4) << '\n';
  }
}

void write_visibility_csv(std::ostream& os, const std::string& link, const VisibilityResult& v) {
  os << "link";
  for (const char* k : kVisibilitySettings) os << ',' << k << "_ccps";
  os << ",v_rectilinear_ratio,v_diagonal_ratio,v_ratio,classical_margin_ratio,exceeds_classical\n";
  os << link;
  for (const char* k : kVisibilitySettings) os << ',' << format_double(v.counts.at(k), 4);
  const auto lim = classical_limit_check(v.v);
  os << ',' << format_double(v.v_rectilinear, 4) << ',' << format_double(v.v_diagonal, 4) << ','
     << format_double(v.v, 4) << ',' << format_double(lim.margin, 4) << ',' << (lim.exceeds ? "true" : "false")
     << '\n';
}

void write_static_reports(const StaticReport& report, const std::filesystem::path& dir, bool plots_data,
                          bool emit_tags) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "coincidences.csv");
    os << "map,stream,endpoint_a,endpoint_b,channel_a,channel_b,offset_ps,count,rate_ccps,mean_ccps,std_ccps,"
          "expected_ccps\n";
    for (const auto& r : report.rows) {
      os << report.map_name << ',' << r.pair.stream << ',' << endpoint_name(r.pair.a) << ','
         << endpoint_name(r.pair.b) << ',' << r.pair.channel_a.value << ',' << r.pair.channel_b.value << ','
         << r.offset_ps << ',' << r.stats.count << ',' << format_double(r.stats.rate_ccps, 4) << ','
         << format_double(r.stats.mean, 4) << ',' << format_double(r.stats.std, 4) << ','
         << format_double(r.expected_ccps, 4) << '\n';
    }
  }
  {
    auto os = open_out(dir / "singles.csv");
    os << "endpoint,singles_cps\n";
    for (const auto& [e, r] : report.singles_cps) os << endpoint_name(e) << ',' << format_double(r, 3) << '\n';
  }
  {
    auto os = open_out(dir / "budget.csv");
    write_budget_csv(os, report.budget);
  }
  bool any_vis = false;
  std::ostringstream vis;
  for (const auto& r : report.rows) {
    if (!r.visibility) continue;
    std::ostringstream one;
    write_visibility_csv(one, row_label(r.pair), *r.visibility);
    const std::string text = one.str();
    vis << (any_vis ? text.substr(text.find('\n') + 1) : text);
    any_vis = true;
  }
  if (any_vis) {
    auto os = open_out(dir / "visibility.csv");
    os << vis.str();
  }
  if (plots_data) {
    for (const auto& r : report.rows) {
      auto os = open_out(dir / ("histogram_" + row_label(r.pair) + ".csv"));
      os << "delta_t_ps,counts\n";
      for (std::size_t i = 0; i < r.histogram.counts.size(); ++i) {
        os << r.histogram.center_of(i) << ',' << r.histogram.counts[i] << '\n';
      }
    }
  }
  if (emit_tags) {
    for (const auto& [k, t] : report.tags) {
      const std::string stem = "tags_" + std::string(endpoint_name(k.first)) + "_" + k.second.value;
      auto bin = open_out(dir / (stem + ".bin"));
      write_tags_binary(bin, t);
      auto csv = open_out(dir / (stem + ".csv"));
      write_tags_csv(csv, t);
    }
  }
}

void write_dynamic_reports(const DynamicResult& result, const Scenario& scenario, const std::filesystem::path& dir,
                           bool plots_data) {
  std::filesystem::create_directories(dir);
  {
    auto os = open_out(dir / "rate_series.csv");
    write_rate_series_csv(os, result.series);
  }
  {
    auto os = open_out(dir / "events.log");
    write_event_log(os, result.log);
  }
  const auto& dets = scenario.dynamic->detectors;
  {
    auto os = open_out(dir / "dwell_summary.csv");
    os << "dwell,map,start_s,end_s,endpoint,served,mean_cps\n";
    const double b = result.series.bin_ms * 1e-3;
    for (std::size_t k = 0; k < result.series.segments.size(); ++k) {
      const auto& seg = result.series.segments[k];
      for (const auto& [e, counts] : result.series.counts) {
        const auto first = static_cast<std::size_t>(std::floor(seg.start_s / b + 1e-9)) + 1;
        const auto last = std::min(counts.size(), static_cast<std::size_t>(std::floor(seg.end_s / b + 1e-9)));
        double sum = 0.0;
        for (std::size_t i = first; i < last; ++i) sum += static_cast<double>(counts[i]);
        const double mean = last > first ? sum / static_cast<double>(last - first) / b : 0.0;
        os << k << ',' << seg.label << ',' << format_double(seg.start_s, 3) << ',' << format_double(seg.end_s, 3)
           << ',' << endpoint_name(e) << ',' << (seg.served.count(e) ? "true" : "false") << ','
           << format_double(mean, 3) << '\n';
      }
    }
  }
  {
    auto os = open_out(dir / "rate_factors.csv");
    os << "endpoint,dark_cps,factor_ratio,factor_db\n";
    for (const auto& [e, d] : dets) {
      try {
        const auto f = rate_adjustment_factor(result.series, e, d.dark_cps);
        os << endpoint_name(e) << ',' << format_double(d.dark_cps, 1) << ',' << format_double(f.factor, 4) << ','
           << format_double(f.db, 4) << '\n';
      } catch (const Error&) {
        os << endpoint_name(e) << ',' << format_double(d.dark_cps, 1) << ",,\n";
      }
    }
  }
  if (plots_data) {
    auto os = open_out(dir / "rate_series_wide.csv");
    os << "time_s";
    for (const auto& [e, c] : result.series.counts) os << ',' << endpoint_name(e) << "_counts_per_bin";
    os << '\n';
    for (std::size_t i = 0; i < result.series.bins(); ++i) {
      os << format_double(result.series.bin_start_s(i), 3);
      for (const auto& [e, c] : result.series.counts) os << ',' << (i < c.size() ? c[i] : 0);
      os << '\n';
    }
  }
}

}  // namespace qnet
