#include "qnet/qnet.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "qnet/control.hpp"
#include "qnet/error.hpp"
#include "qnet/node.hpp"
#include "qnet/photon.hpp"
#include "qnet/scenario.hpp"

struct qnet_scenario {
  qnet::Scenario value;
};

struct qnet_node_config {
  qnet::NodeConfiguration value;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
qnet_status guarded(F&& fn) {
  try {
    g_last_error.clear();
    fn();
    return QNET_OK;
  } catch (const qnet::Error& e) {
    g_last_error = e.what();
    return static_cast<qnet_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return QNET_E_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return QNET_E_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return QNET_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw qnet::Error(qnet::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

void set_summary(char** summary, const std::string& text) {
  if (summary == nullptr) return;
  char* s = static_cast<char*>(std::malloc(text.size() + 1));
  if (s == nullptr) throw std::bad_alloc();
  std::memcpy(s, text.c_str(), text.size() + 1);
  *summary = s;
}

std::filesystem::path out_path(const char* out_dir) {
  require(out_dir, "out_dir");
  std::filesystem::path p(out_dir);
  std::filesystem::create_directories(p);
  return p;
}

std::ofstream open_file(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw qnet::Error(qnet::ErrorCode::Io, "cannot write " + p.string());
  return os;
}

const qnet::DistributionMap& scenario_map(const qnet::Scenario& s) {
  if (!s.map) throw qnet::Error(qnet::ErrorCode::Configuration, "scenario has no map");
  return *s.map;
}

qnet::NodeConfiguration synthesize_for(const qnet::Scenario& s) {
  return qnet::synthesize(scenario_map(s), s.losses, qnet::feeder_plan(s.sources, s.topology));
}

std::string map_label(const qnet::Scenario& s) {
  return s.map && s.map->name ? *s.map->name : std::string("custom");
}

}  // namespace

extern "C" {

const char* qnet_version(void) { return "0.1.0"; }

const char* qnet_status_category(qnet_status status) {
  if (status == QNET_OK) return "ok";
  if (status < QNET_E_INVALID_ARGUMENT || status > QNET_E_INTERNAL) return "unknown";
  return qnet::error_category(static_cast<qnet::ErrorCode>(status)).data();
}

const char* qnet_last_error(void) { return g_last_error.c_str(); }

void qnet_string_free(char* s) { std::free(s); }

qnet_status qnet_scenario_load(const char* path, qnet_scenario** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new qnet_scenario{qnet::load_scenario(path)};
  });
}

qnet_status qnet_scenario_parse(const char* json_text, qnet_scenario** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new qnet_scenario{qnet::parse_scenario(json_text)};
  });
}

qnet_status qnet_scenario_preset(const char* map_label, uint64_t seed, qnet_scenario** out) {
  return guarded([&] {
    require(map_label, "map_label");
    require(out, "out");
    *out = new qnet_scenario{qnet::default_scenario(map_label, seed)};
  });
}

void qnet_scenario_free(qnet_scenario* scenario) { delete scenario; }

qnet_status qnet_scenario_set_seed(qnet_scenario* scenario, uint64_t seed) {
  return guarded([&] {
    require(scenario, "scenario");
    scenario->value.seed = seed;
  });
}

qnet_status qnet_scenario_set_map(qnet_scenario* scenario, const char* map_label) {
  return guarded([&] {
    require(scenario, "scenario");
    require(map_label, "map_label");
    scenario->value.map = qnet::preset_map(map_label);
  });
}

qnet_status qnet_run_synthesize(const qnet_scenario* scenario, const char* out_dir, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    const auto& s = scenario->value;
    const auto cfg = synthesize_for(s);
    const auto dir = out_path(out_dir);
    const auto text = cfg.canonical_text();
    open_file(dir / "node_config.txt") << text;
    const auto frame = qnet::encode_frame(cfg, s.dynamic ? s.dynamic->scenario.node_id : 1, 0);
    open_file(dir / "amc_frame.txt") << frame.hex() << '\n';
    std::ostringstream os;
    os << "map " << map_label(s) << ": " << cfg.crosspoints.size() << " crosspoints, "
       << cfg.loopback_modules.size() << " loopback modules, amc " << frame.hex() << '\n';
    set_summary(summary, os.str());
  });
}

qnet_status qnet_run_budget(const qnet_scenario* scenario, const char* out_dir, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    const auto& s = scenario->value;
    const auto rows = qnet::budget_table(s, synthesize_for(s));
    const auto dir = out_path(out_dir);
    auto f = open_file(dir / "budget.csv");
    qnet::write_budget_csv(f, rows);
    std::ostringstream os;
    qnet::write_budget_csv(os, rows);
    set_summary(summary, os.str());
  });
}

qnet_status qnet_run_static(const qnet_scenario* scenario, const char* out_dir, unsigned flags, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    const auto s = qnet::resolved(scenario->value);
    scenario_map(s);
    qnet::StaticOptions opt;
    opt.keep_tags = (flags & QNET_EMIT_TAGS) != 0;
    const auto report = qnet::run_static(s, opt);
    qnet::write_static_reports(report, out_path(out_dir), (flags & QNET_EMIT_PLOTS_DATA) != 0,
                               (flags & QNET_EMIT_TAGS) != 0);
    std::ostringstream os;
    os << "map " << report.map_name << '\n';
    for (const auto& r : report.rows) {
      os << r.pair.stream << ' ' << qnet::endpoint_name(r.pair.a) << '-' << qnet::endpoint_name(r.pair.b) << ": "
         << qnet::format_double(r.stats.mean, 3) << " +/- " << qnet::format_double(r.stats.std, 3)
         << " cc/s";
      if (r.visibility) os << ", V=" << qnet::format_double(r.visibility->v, 3);
      os << '\n';
    }
    set_summary(summary, os.str());
  });
}

qnet_status qnet_run_dynamic(const qnet_scenario* scenario, const char* out_dir, unsigned flags, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    const auto& s = scenario->value;
    const auto result = qnet::run_dynamic_scenario(s);
    qnet::write_dynamic_reports(result, s, out_path(out_dir), (flags & QNET_EMIT_PLOTS_DATA) != 0);
    std::ostringstream os;
    os << result.series.segments.size() << " segments, " << result.series.bins() << " bins, "
       << result.pairs_generated << " pairs, " << result.photon_detections << " photon detections, amc disjoint "
       << (qnet::amc_delivery_disjoint(result) ? "yes" : "no") << '\n';
    set_summary(summary, os.str());
  });
}

qnet_status qnet_run_calibrate(const qnet_scenario* scenario, const char* out_dir, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    if (!scenario->value.calibration) {
      throw qnet::Error(qnet::ErrorCode::Configuration, "scenario has no calibration section");
    }
    const auto s = qnet::resolved(scenario->value);
    const auto& cal = *s.calibration;
    const auto dir = out_path(out_dir);
    std::ostringstream os;
    os << "stream,correlation,brightness_pps,target,target_ccps,calibration_map\n";
    for (const auto* p : qnet::flatten_streams(s.sources)) {
      std::string target = "none";
      double rate = 0.0;
      if (const auto it = cal.targets_ccps.find(p->id); it != cal.targets_ccps.end()) {
        target = "map";
        rate = it->second;
      }
      if (p->entangled() && cal.back_to_back_ccps) {
        target = "back_to_back";
        rate = *cal.back_to_back_ccps;
      }
      os << p->id << ',' << (p->entangled() ? "entangled" : "product") << ','
         << qnet::format_double(p->brightness_pps, 3) << ',' << target << ',' << qnet::format_double(rate, 4) << ','
         << cal.map << '\n';
    }
    open_file(dir / "calibration.csv") << os.str();
    set_summary(summary, os.str());
  });
}

qnet_status qnet_run_visibility(const qnet_scenario* scenario, const char* out_dir, char** summary) {
  return guarded([&] {
    require(scenario, "scenario");
    const auto& s = scenario->value;
    const auto v = qnet::run_visibility(s);
    const std::string link = (s.visibility_back_to_back || !s.map) ? "back_to_back" : map_label(s);
    const auto dir = out_path(out_dir);
    auto f = open_file(dir / "visibility.csv");
    qnet::write_visibility_csv(f, link, v);
    const auto lim = qnet::classical_limit_check(v.v);
    std::ostringstream os;
    os << link << ": V=" << qnet::format_double(v.v, 4) << " (rect " << qnet::format_double(v.v_rectilinear, 4)
       << ", diag " << qnet::format_double(v.v_diagonal, 4) << "), classical limit "
       << (lim.exceeds ? "exceeded" : "not exceeded") << '\n';
    set_summary(summary, os.str());
  });
}

qnet_status qnet_node_synthesize_preset(const char* map_label, qnet_node_config** out) {
  return guarded([&] {
    require(map_label, "map_label");
    require(out, "out");
    *out = new qnet_node_config{qnet::synthesize(qnet::preset_map(map_label), qnet::ComponentLossModel{})};
  });
}

void qnet_node_free(qnet_node_config* config) { delete config; }

qnet_status qnet_node_insertion_loss(const qnet_node_config* config, const char* channel, const char* endpoint,
                                     double* out_db) {
  return guarded([&] {
    require(config, "config");
    require(channel, "channel");
    require(endpoint, "endpoint");
    require(out_db, "out_db");
    *out_db = qnet::insertion_loss(config->value, qnet::ChannelId{channel}, qnet::parse_endpoint(endpoint));
  });
}

qnet_status qnet_node_crosspoint(const qnet_node_config* config, int input_port, int* out_port) {
  return guarded([&] {
    require(config, "config");
    require(out_port, "out_port");
    if (input_port < 1 || input_port > qnet::ports::kCount) {
      throw qnet::Error(qnet::ErrorCode::InvalidArgument, "input port out of range");
    }
    const auto it = config->value.crosspoints.find(input_port);
    *out_port = it == config->value.crosspoints.end() ? 0 : it->second;
  });
}

qnet_status qnet_node_encode_amc(const qnet_node_config* config, uint8_t node_id, uint8_t sequence,
                                 uint8_t out_frame[8]) {
  return guarded([&] {
    require(config, "config");
    require(out_frame, "out_frame");
    const auto bytes = qnet::encode_frame(config->value, node_id, sequence).bytes();
    std::memcpy(out_frame, bytes.data(), bytes.size());
  });
}

qnet_status qnet_node_decode_amc(const uint8_t frame[8], qnet_node_config** out) {
  return guarded([&] {
    require(frame, "frame");
    require(out, "out");
    std::vector<bool> bits;
    for (int i = 0; i < 8; ++i) {
      for (int b = 7; b >= 0; --b) bits.push_back(((frame[i] >> b) & 1) != 0);
    }
    *out = new qnet_node_config{qnet::decode_frame(bits)};
  });
}

uint8_t qnet_crc8(const uint8_t* data, size_t size) { return data == nullptr ? 0 : qnet::crc8(data, size); }

qnet_status qnet_band_of(double wavelength_nm, char* buf, size_t buf_size) {
  return guarded([&] {
    require(buf, "buf");
    const auto name = qnet::band_name(qnet::band_of(wavelength_nm));
    if (buf_size < name.size() + 1) throw qnet::Error(qnet::ErrorCode::InvalidArgument, "buffer too small");
    std::memcpy(buf, name.data(), name.size());
    buf[name.size()] = '\0';
  });
}

qnet_status qnet_transmittance(double loss_db, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = qnet::transmittance(loss_db);
  });
}

qnet_status qnet_splitter_loss(int fanout, double excess_db, double* out_db) {
  return guarded([&] {
    require(out_db, "out_db");
    *out_db = qnet::splitter_loss(fanout, excess_db);
  });
}

qnet_status qnet_apparent_efficiency(const char* detector_preset, double wavelength_nm, double* out) {
  return guarded([&] {
    require(detector_preset, "detector_preset");
    require(out, "out");
    *out = qnet::apparent_efficiency(qnet::detector_preset(detector_preset), wavelength_nm);
  });
}

qnet_status qnet_expected_remote_entangled_rate(double back_to_back_ccps, double idler_path_loss_db,
                                                double* out_ccps) {
  return guarded([&] {
    require(out_ccps, "out_ccps");
    *out_ccps = qnet::expected_remote_entangled_rate(back_to_back_ccps, idler_path_loss_db);
  });
}

}  // extern "C"
