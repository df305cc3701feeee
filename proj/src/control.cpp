#include "qnet/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "qnet/error.hpp"
#include "qnet/rng.hpp"

namespace qnet {

std::uint8_t crc8(const std::uint8_t* data, std::size_t size) noexcept {
  std::uint8_t crc = 0x00;
  for (std::size_t i = 0; i < size; ++i) {
    crc ^= data[i];
    for (int b = 0; b < 8; ++b) {
      crc = (crc & 0x80) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07) : static_cast<std::uint8_t>(crc << 1);
    }
  }
  return crc;
}

std::array<std::uint8_t, 8> AmcFrame::bytes() const noexcept {
  return {preamble, node_id, payload[0], payload[1], payload[2], payload[3], sequence, crc};
}

std::vector<bool> AmcFrame::bits() const {
  std::vector<bool> out;
  out.reserve(kAmcFrameBits);
  for (auto byte : bytes()) {
    for (int b = 7; b >= 0; --b) out.push_back(((byte >> b) & 1) != 0);
  }
  return out;
}

std::string AmcFrame::hex() const {
  std::string s;
  char buf[3];
  for (auto byte : bytes()) {
    std::snprintf(buf, sizeof buf, "%02X", byte);
    s += buf;
  }
  return s;
}

double AmcFrame::duration_ms(double line_rate_bps) const noexcept {
  return static_cast<double>(kAmcFrameBits) * 1e3 / line_rate_bps;
}

AmcFrame encode_frame(const NodeConfiguration& config, std::uint8_t node_id, std::uint8_t sequence) {
  if (!config.is_partial_permutation()) {
    throw Error(ErrorCode::Semantic, "configuration is not a partial permutation");
  }
  AmcFrame f;
  f.node_id = node_id;
  f.sequence = sequence;
  for (int in = 1; in <= ports::kCount; ++in) {
    const auto it = config.crosspoints.find(in);
    const std::uint8_t nib = it == config.crosspoints.end() ? 0xF : static_cast<std::uint8_t>(it->second);
    auto& byte = f.payload[static_cast<std::size_t>((in - 1) / 2)];
    byte |= (in % 2 == 1) ? static_cast<std::uint8_t>(nib << 4) : nib;
  }
  const auto b = f.bytes();
  f.crc = crc8(b.data(), 7);
  return f;
}

AmcFrame parse_frame(const std::vector<bool>& bits) {
  if (bits.size() != kAmcFrameBits) {
    throw Error(ErrorCode::Framing, "AMC frame must be 64 bits, got " + std::to_string(bits.size()));
  }
  std::array<std::uint8_t, 8> b{};
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i]) b[i / 8] |= static_cast<std::uint8_t>(1u << (7 - i % 8));
  }
  if (b[0] != kAmcPreamble) throw Error(ErrorCode::Framing, "bad AMC preamble");
  if (crc8(b.data(), 7) != b[7]) throw Error(ErrorCode::Integrity, "AMC frame CRC mismatch");
  AmcFrame f;
  f.node_id = b[1];
  f.payload = {b[2], b[3], b[4], b[5]};
  f.sequence = b[6];
  f.crc = b[7];
  return f;
}

NodeConfiguration decode_frame(const std::vector<bool>& bits) {
  const AmcFrame f = parse_frame(bits);
  NodeConfiguration cfg;
  std::set<int> outs;
  for (int in = 1; in <= ports::kCount; ++in) {
    const std::uint8_t byte = f.payload[static_cast<std::size_t>((in - 1) / 2)];
    const int nib = (in % 2 == 1) ? byte >> 4 : byte & 0xF;
    if (nib == 0xF) continue;
    if (nib < 1 || nib > ports::kCount) {
      throw Error(ErrorCode::Semantic, "input " + std::to_string(in) + " mapped to invalid port " + std::to_string(nib));
    }
    if (!outs.insert(nib).second) {
      throw Error(ErrorCode::Semantic, "output port " + std::to_string(nib) + " driven by two inputs");
    }
    cfg.crosspoints[in] = nib;
  }
  return cfg;
}

NodeConfiguration decode_frame_hex(const std::string& hex) {
  if (hex.size() != 16) throw Error(ErrorCode::Framing, "AMC hex frame must have 16 digits");
  std::vector<bool> bits;
  for (char c : hex) {
    int v = 0;
    if (c >= '0' && c <= '9') {
      v = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      v = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      v = c - 'A' + 10;
    } else {
      throw Error(ErrorCode::Framing, "invalid hex digit in AMC frame");
    }
    for (int b = 3; b >= 0; --b) bits.push_back(((v >> b) & 1) != 0);
  }
  return decode_frame(bits);
}

std::string_view amc_mode_name(AmcMode mode) noexcept {
  return mode == AmcMode::Electrical ? "Electrical" : "Optical1490";
}

AmcMode parse_amc_mode(std::string_view name) {
  if (name == "Electrical") return AmcMode::Electrical;
  if (name == "Optical1490") return AmcMode::Optical1490;
  throw Error(ErrorCode::Configuration, "unknown AMC mode '" + std::string(name) + "'");
}

void validate_dynamic(const DynamicScenario& s) {
  if (!(s.bin_ms > 0.0)) throw Error(ErrorCode::Configuration, "bin_ms must be positive");
  if (s.transition_ms < 0.0) throw Error(ErrorCode::Configuration, "transition_ms must be >= 0");
  if (s.optical_amc_penalty_cps < 0.0) throw Error(ErrorCode::Configuration, "AMC penalty must be >= 0");
  if (s.sequence.empty()) throw Error(ErrorCode::Configuration, "dynamic sequence is empty");
  for (const auto& d : s.sequence) {
    if (!(d.dwell_s * 1e3 > s.transition_ms)) {
      throw Error(ErrorCode::Configuration, "dwell must exceed the transition duration");
    }
  }
}

std::size_t RateSeries::bins() const noexcept {
  std::size_t n = 0;
  for (const auto& [e, c] : counts) n = std::max(n, c.size());
  return n;
}

namespace {

long long to_ps(double s) { return std::llround(s * static_cast<double>(kPsPerSecond)); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::vector<const PairStream*> flatten_streams(const std::vector<SourceSpec>& sources) {
  std::vector<const PairStream*> out;
  for (const auto& src : sources) {
    for (const auto& s : src.streams) out.push_back(&s);
  }
  return out;
}

std::vector<DeliveryRoute> delivery_routes(const std::vector<const PairStream*>& streams, const Topology& topology,
                                           const NodeConfiguration& config) {
  std::vector<DeliveryRoute> out;
  for (std::size_t si = 0; si < streams.size(); ++si) {
    for (const Channel* c : {&streams[si]->signal, &streams[si]->idler}) {
      if (topology.source_to_feeder.count(c->output) == 0) {
        out.push_back({si, c->id, c->center_nm, Endpoint::EmmaLocal, 0.0, 1.0, 0});
        continue;
      }
      for (Endpoint e : kUsers) {
        const auto it = config.loss_table.find({c->id, e});
        if (it == config.loss_table.end()) continue;
        const double loss = end_to_end_loss(topology, it->second, *c, e);
        out.push_back({si, c->id, c->center_nm, e, loss, transmittance(loss), path_delay_ps(topology, *c, e)});
      }
    }
  }
  return out;
}

DynamicResult run_dynamic(const DynamicScenario& scenario, const DynamicSetup& setup, std::uint64_t seed) {
  validate_dynamic(scenario);
  validate_topology(setup.topology);
  validate_losses(setup.losses);

  const auto streams = flatten_streams(setup.sources);
  const FeederPlan plan = feeder_plan(setup.sources, setup.topology);

  std::vector<NodeConfiguration> configs;
  for (const auto& d : scenario.sequence) configs.push_back(synthesize(d.map, setup.losses, plan));

  std::vector<std::vector<DeliveryRoute>> routes(configs.size());
  for (std::size_t k = 0; k < configs.size(); ++k) {
    routes[k] = delivery_routes(streams, setup.topology, configs[k]);
    for (const auto& r : routes[k]) {
      if (setup.detectors.count(r.endpoint) == 0) {
        throw Error(ErrorCode::Configuration, "scenario routes " + r.channel.value + " to " +
                                                  std::string(endpoint_name(r.endpoint)) +
                                                  " but no detector is assigned there");
      }
    }
  }

  DynamicResult res;
  res.series.bin_ms = scenario.bin_ms;
  const long long bin_ps = std::llround(scenario.bin_ms * 1e9);
  double total_s = 0.0;
  for (const auto& d : scenario.sequence) total_s += d.dwell_s;
  const long long total_ps = to_ps(total_s);
  const auto nbins = static_cast<std::size_t>((total_ps + bin_ps - 1) / bin_ps);

  std::map<Endpoint, Detector> detectors;
  for (const auto& [e, spec] : setup.detectors) {
    detectors.emplace(e, Detector(spec, derive_seed(seed, "dynamic/detector/" + std::string(endpoint_name(e)))));
    res.series.counts[e].assign(nbins, 0);
  }
  std::vector<PairGenerator> gens;
  for (std::size_t si = 0; si < streams.size(); ++si) {
    gens.emplace_back(streams[si]->brightness_pps, static_cast<std::uint32_t>(si),
                      derive_seed(seed, "dynamic/pairs/" + streams[si]->id));
  }
  std::map<std::string, Engine> path_rng;
  auto rng_for = [&](const std::string& channel) -> Engine& {
    auto it = path_rng.find(channel);
    if (it == path_rng.end()) it = path_rng.emplace(channel, make_engine(seed, "dynamic/path/" + channel)).first;
    return it->second;
  };
  Engine penalty_rng = make_engine(seed, "dynamic/amc_penalty");

  const bool optical = scenario.amc_mode == AmcMode::Optical1490;
  NodeConfiguration previous;
  double t_start = 0.0;
  std::vector<PairEvent> pairs;
  std::vector<PairEvent> kept;
  std::map<Endpoint, std::vector<Photon>> photons;

  for (std::size_t k = 0; k < configs.size(); ++k) {
    const double t_end = t_start + scenario.sequence[k].dwell_s;
    const auto& cfg = configs[k];
    const std::string label = scenario.sequence[k].map.name.value_or("dwell" + std::to_string(k));
    const auto diff = reconfigure_diff(previous, cfg);
    const auto affected_list = affected_endpoints(previous, cfg);
    const std::set<Endpoint> affected(affected_list.begin(), affected_list.end());
    const bool reconfigures = k == 0 || !diff.changes.empty();

    res.log.push_back({t_start, "dwell_start", "map=" + label + " dwell_s=" + fmt("%.3f", scenario.sequence[k].dwell_s)});
    double amc_end = t_start;
    double switch_end = t_start;
    if (reconfigures) {
      const AmcFrame frame = encode_frame(cfg, scenario.node_id, static_cast<std::uint8_t>(k & 0xFF));
      amc_end = t_start + frame.duration_ms() * 1e-3;
      switch_end = amc_end + scenario.transition_ms * 1e-3;
      res.log.push_back({t_start, "amc_tx_start",
                         "mode=" + std::string(amc_mode_name(scenario.amc_mode)) + " seq=" + std::to_string(k) +
                             " frame=" + frame.hex()});
      res.log.push_back({amc_end, "amc_tx_end", "seq=" + std::to_string(k)});
      res.log.push_back({amc_end, "switch_start", "changes=" + std::to_string(diff.changes.size())});
      res.log.push_back({switch_end, "switch_end", "map=" + label});
      if (optical) res.optical_amc.push_back({t_start, amc_end});
    }

    Segment seg{t_start, t_end, label, {}};
    std::map<Endpoint, long long> block_until;
    for (const auto& r : routes[k]) seg.served.insert(r.endpoint);
    for (Endpoint e : seg.served) {
      double from = t_start;
      if (e != Endpoint::EmmaLocal && reconfigures) {
        if (affected.count(e)) {
          from = switch_end;
        } else if (optical) {
          from = amc_end;
        }
      }
      block_until[e] = to_ps(from);
      res.delivery[e].push_back({from, t_end});
      res.log.push_back({from, "delivery_start", "endpoint=" + std::string(endpoint_name(e))});
      res.log.push_back({t_end, "delivery_end", "endpoint=" + std::string(endpoint_name(e))});
    }
    res.series.segments.push_back(seg);

    const long long seg0 = to_ps(t_start);
    const long long seg1 = to_ps(t_end);
    for (long long t0 = seg0; t0 < seg1; t0 += kPsPerSecond) {
      const long long t1 = std::min(seg1, t0 + kPsPerSecond);
      for (auto& [e, v] : photons) v.clear();
      for (std::size_t si = 0; si < streams.size(); ++si) {
        pairs.clear();
        gens[si].generate(t1, pairs);
        res.pairs_generated += pairs.size();
        for (const auto& r : routes[k]) {
          if (r.stream != si) continue;
          kept = thin(pairs, r.transmittance, rng_for(r.channel.value));
          const long long blocked = block_until[r.endpoint];
          auto& out = photons[r.endpoint];
          for (const auto& p : kept) {
            if (p.t_ps < blocked) continue;
            out.push_back({p.t_ps + r.delay_ps, r.wavelength_nm});
          }
        }
      }
      for (auto& [e, det] : detectors) {
        auto& ph = photons[e];
        std::sort(ph.begin(), ph.end(), [](const Photon& a, const Photon& b) { return a.t_ps < b.t_ps; });
        std::vector<TimeTag> tags;
        det.process(ph, t0, t1, tags);
        auto& bins = res.series.counts[e];
        for (const auto& tag : tags) {
          const auto b = static_cast<std::size_t>(tag.t_ps / bin_ps);
          if (b < bins.size()) bins[b]++;
          if (tag.kind == TagKind::Photon) ++res.photon_detections;
        }
      }
    }

    if (optical && reconfigures && scenario.optical_amc_penalty_cps > 0.0) {
      for (auto& [e, bins] : res.series.counts) {
        if (e == Endpoint::EmmaLocal) continue;
        std::exponential_distribution<double> gap(scenario.optical_amc_penalty_cps);
        for (double t = t_start + gap(penalty_rng); t < amc_end; t += gap(penalty_rng)) {
          const auto b = static_cast<std::size_t>(to_ps(t) / bin_ps);
          if (b < bins.size()) bins[b]++;
        }
      }
    }

    previous = cfg;
    t_start = t_end;
  }

  std::stable_sort(res.log.begin(), res.log.end(),
                   [](const EventRecord& a, const EventRecord& b) { return a.t_s < b.t_s; });
  return res;
}

bool amc_delivery_disjoint(const DynamicResult& result) {
  for (const auto& amc : result.optical_amc) {
    for (const auto& [e, intervals] : result.delivery) {
      if (e == Endpoint::EmmaLocal) continue;
      for (const auto& d : intervals) {
        if (d.start_s < amc.end_s - 1e-12 && amc.start_s < d.end_s - 1e-12) return false;
      }
    }
  }
  return true;
}

namespace {

std::vector<std::uint64_t> interior_bins(const RateSeries& series, const std::vector<std::uint64_t>& counts,
                                         double start_s, double end_s) {
  const double b = series.bin_ms * 1e-3;
  const auto first = static_cast<std::size_t>(std::floor(start_s / b + 1e-9));
  const auto last = std::min(counts.size(), static_cast<std::size_t>(std::floor(end_s / b + 1e-9)));
  std::vector<std::uint64_t> out;
  // The first bin holds the reconfiguration transient.
  for (std::size_t i = first + 1; i < last; ++i) out.push_back(counts[i]);
  return out;
}

}  // namespace

std::vector<double> dwell_means_cps(const RateSeries& series, Endpoint endpoint, bool served_only) {
  std::vector<double> out;
  const auto it = series.counts.find(endpoint);
  if (it == series.counts.end()) return out;
  const double b = series.bin_ms * 1e-3;
  for (const auto& seg : series.segments) {
    if (served_only && seg.served.count(endpoint) == 0) continue;
    const auto bins = interior_bins(series, it->second, seg.start_s, seg.end_s);
    if (bins.empty()) continue;
    double sum = 0.0;
    for (auto c : bins) sum += static_cast<double>(c);
    out.push_back(sum / static_cast<double>(bins.size()) / b);
  }
  return out;
}

RateFactor rate_adjustment_factor(const RateSeries& series, Endpoint endpoint, double dark_cps) {
  const auto means = dwell_means_cps(series, endpoint, true);
  if (means.empty()) {
    throw Error(ErrorCode::Domain, std::string(endpoint_name(endpoint)) + " is never served in this series");
  }
  const auto [lo, hi] = std::minmax_element(means.begin(), means.end());
  const double den = *lo - dark_cps;
  if (den <= 0.0) throw Error(ErrorCode::Indeterminate, "dark-subtracted minimum rate is not positive");
  RateFactor r;
  r.factor = (*hi - dark_cps) / den;
  r.db = 10.0 * std::log10(r.factor);
  return r;
}

std::vector<ServedInterval> served_intervals(const RateSeries& series, const std::map<Endpoint, double>& dark_cps) {
  std::vector<ServedInterval> out;
  for (const auto& seg : series.segments) {
    for (Endpoint e : seg.served) {
      const auto d = dark_cps.find(e);
      out.push_back({e, seg.start_s, seg.end_s, d == dark_cps.end() ? 0.0 : d->second});
    }
  }
  return out;
}

bool hitless_check(const RateSeries& series, const std::vector<ServedInterval>& intervals) {
  const double b = series.bin_ms * 1e-3;
  for (const auto& iv : intervals) {
    const auto it = series.counts.find(iv.endpoint);
    if (it == series.counts.end()) continue;
    auto bins = interior_bins(series, it->second, iv.start_s, iv.end_s);
    if (bins.empty()) continue;
    const double mu_dark = iv.dark_cps * b;
    const double threshold = mu_dark + 3.0 * std::sqrt(mu_dark);
    auto sorted = bins;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = static_cast<double>(sorted[sorted.size() / 2]);
    // Signal too weak to tell a gap from a fluctuation.
    if (median - 5.0 * std::sqrt(median) <= threshold) continue;
    for (auto c : bins) {
      if (static_cast<double>(c) < threshold) return false;
    }
  }
  return true;
}

void write_rate_series_csv(std::ostream& os, const RateSeries& series) {
  os << "time_s,endpoint,counts_per_bin\n";
  char buf[32];
  for (std::size_t i = 0; i < series.bins(); ++i) {
    std::snprintf(buf, sizeof buf, "%.3f", series.bin_start_s(i));
    for (const auto& [e, c] : series.counts) {
      if (i < c.size()) os << buf << ',' << endpoint_name(e) << ',' << c[i] << '\n';
    }
  }
}

void write_event_log(std::ostream& os, const std::vector<EventRecord>& log) {
  char buf[32];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%.6f", r.t_s);
    os << "t_s=" << buf << " kind=" << r.kind << " detail=\"" << r.detail << "\"\n";
  }
}

}  // namespace qnet
