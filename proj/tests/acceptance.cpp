// Acceptance checks, one per criterion: `qnet_acceptance <n>` prints a single
// PASS/FAIL line and exits nonzero on failure. Without an argument all run.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "qnet/control.hpp"
#include "qnet/error.hpp"
#include "qnet/link_budget.hpp"
#include "qnet/node.hpp"
#include "qnet/photon.hpp"
#include "qnet/scenario.hpp"
#include "qnet/spectral.hpp"

using namespace qnet;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const std::string kScenarioDir = QNET_SCENARIO_DIR;

bool is_oband(const ChannelId& c) { return c.value.size() >= 2 && c.value.substr(c.value.size() - 2) == ".O"; }

Outcome apparent_efficiency_check() {
  Outcome o;
  const double eta = apparent_efficiency(detector_preset("InGaAsGated"), 1550);
  o.require(eta == 0.01, "InGaAsGated 10% x 1 MHz x 100 ns = " + num(eta, 17));
  return o;
}

Outcome energy_conservation_check() {
  Outcome o;
  for (const char* name : {"EPR2", "PP1"}) {
    const double limit = std::string(name) == "EPR2" ? 0.001 : 0.005;
    for (const auto& p : preset_source(name).streams) {
      const double dev = pump_consistency(p.pump_nm, p.signal.center_nm, p.idler.center_nm);
      o.require(dev <= limit, p.id + " deviation " + num(100 * dev, 3) + "% <= " + num(100 * limit, 1) + "%");
    }
  }
  return o;
}

Outcome node_loss_check() {
  Outcome o;
  double o_lo = 1e9, o_hi = -1e9, cl_lo = 1e9, cl_hi = -1e9;
  for (const auto& label : preset_map_labels()) {
    const auto cfg = synthesize(preset_map(label), ComponentLossModel{});
    for (const auto& [key, loss] : cfg.loss_table) {
      if (is_oband(key.first)) {
        o_lo = std::min(o_lo, loss);
        o_hi = std::max(o_hi, loss);
      } else {
        cl_lo = std::min(cl_lo, loss);
        cl_hi = std::max(cl_hi, loss);
      }
    }
  }
  o.require(o_lo >= 2.1 && o_hi <= 2.3, "O-band [" + num(o_lo, 3) + ", " + num(o_hi, 3) + "] dB in [2.1, 2.3]");
  o.require(cl_lo >= 2.8 && cl_hi <= 3.8, "C/L [" + num(cl_lo, 3) + ", " + num(cl_hi, 3) + "] dB in [2.8, 3.8]");
  return o;
}

Outcome remote_rate_check() {
  Outcome o;
  const auto topo = default_topology();
  const auto epr = preset_source("EPR2").streams[0];
  const double budget = end_to_end_loss(topo, ComponentLossModel{}.switch_traverse_db, epr.idler, Endpoint::Bob);
  const double rate = expected_remote_entangled_rate(190.7, budget);
  const double db = 10.0 * std::log10(29.3 / rate);
  o.require(std::abs(budget - 8.87) < 0.005, "O-band budget " + num(budget, 3) + " dB");
  o.require(std::abs(db) <= 1.5, "expected " + num(rate, 2) + " cc/s vs 29.3, " + num(db, 2) + " dB <= 1.5 dB");
  return o;
}

Outcome table_one_check() {
  Outcome o;
  const int seeds = 20;
  int iv_ok = 0;
  double high_lo = 1e9, high_hi = -1e9, low_lo = 1e9, low_hi = -1e9;
  int out_of_band = 0;
  std::vector<double> iv_sums;
  StaticOptions opt;
  opt.visibility = false;
  for (const char* label : {"II", "III", "IV", "V", "VI"}) {
    for (int k = 0; k < seeds; ++k) {
      const auto s = resolved(default_scenario(label, 1000 + static_cast<std::uint64_t>(k)));
      const auto rep = run_static(s, opt);
      double ac = 0.0;
      for (const auto& row : rep.rows) {
        if (row.pair.entangled) continue;
        const double r = row.stats.rate_ccps;
        if (row.pair.stream == "S1") {
          high_lo = std::min(high_lo, r);
          high_hi = std::max(high_hi, r);
          if (r < 4.0 || r > 8.0) ++out_of_band;
        } else {
          low_lo = std::min(low_lo, r);
          low_hi = std::max(low_hi, r);
          if (r < 0.7 || r > 3.3) ++out_of_band;
        }
        if (row.pair.a == Endpoint::Alice && row.pair.b == Endpoint::Charlie) ac += r;
      }
      if (std::string(label) == "IV") {
        iv_sums.push_back(ac);
        if (ac > 16.0) ++iv_ok;
      }
    }
  }
  const double iv_mean = std::accumulate(iv_sums.begin(), iv_sums.end(), 0.0) / static_cast<double>(iv_sums.size());
  o.require(high_lo >= 4.0 && high_hi <= 8.0, "high stream [" + num(high_lo, 2) + ", " + num(high_hi, 2) + "] in [4, 8]");
  o.require(low_lo >= 0.7 && low_hi <= 3.3, "low stream [" + num(low_lo, 2) + ", " + num(low_hi, 2) + "] in [0.7, 3.3]");
  o.detail += "; " + std::to_string(out_of_band) + " rows out of band";
  o.require(iv_ok >= 16, "IV A-C sum > 16 cc/s in " + std::to_string(iv_ok) + "/20 seeds (mean " + num(iv_mean, 2) + ")");
  return o;
}

Outcome visibility_check() {
  Outcome o;
  const int seeds = 30;
  std::vector<double> b2b;
  int iv_ok = 0;
  double iv_min = 1.0;
  const auto b2b_scenario = load_scenario(kScenarioDir + "/b2b_epr2.json");
  for (int k = 0; k < seeds; ++k) {
    auto s = b2b_scenario;
    s.seed = 2000 + static_cast<std::uint64_t>(k);
    b2b.push_back(run_visibility(s).v);
    auto iv = resolved(default_scenario("IV", 3000 + static_cast<std::uint64_t>(k)));
    iv.path_visibility = 0.88;
    const double v = run_visibility(iv).v;
    iv_min = std::min(iv_min, v);
    if (classical_limit_check(v).exceeds) ++iv_ok;
  }
  const double mean = std::accumulate(b2b.begin(), b2b.end(), 0.0) / seeds;
  double ss = 0.0;
  for (double v : b2b) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (seeds - 1));
  o.require(std::abs(mean - 0.955) <= 0.01, "back-to-back mean " + num(mean) + " within 0.955 +- 0.01");
  o.require(sd <= 0.04, "per-run sigma " + num(sd) + " <= 0.04");
  o.require(iv_ok == seeds, "IV exceeds 1/sqrt(2) in " + std::to_string(iv_ok) + "/30 seeds (min " + num(iv_min) + ")");
  return o;
}

struct DwellRate {
  double mean_cps = 0.0;
  double sigma_cps = 0.0;
};

// Mean rate over the interior bins of each dwell, with its Poisson standard error.
std::vector<DwellRate> dwell_rates(const RateSeries& series, const std::vector<Endpoint>& endpoints,
                                   bool served_only) {
  const double b = series.bin_ms * 1e-3;
  std::vector<DwellRate> out;
  for (const auto& seg : series.segments) {
    const auto first = static_cast<std::size_t>(std::floor(seg.start_s / b + 1e-9)) + 1;
    double sum = 0.0;
    std::size_t n = 0;
    bool served = !served_only;
    for (Endpoint e : endpoints) {
      if (seg.served.count(e)) served = true;
      const auto& c = series.counts.at(e);
      const auto last = std::min(c.size(), static_cast<std::size_t>(std::floor(seg.end_s / b + 1e-9)));
      for (std::size_t i = first; i < last; ++i) sum += static_cast<double>(c[i]);
      n = last > first ? last - first : 0;
    }
    if (!served || n == 0) continue;
    const double t = static_cast<double>(n) * b;
    out.push_back({sum / t, std::sqrt(sum) / t});
  }
  return out;
}

Outcome dynamic_check() {
  Outcome o;
  const auto electrical = load_scenario(kScenarioDir + "/dynamic_cycle.json");
  auto optical = load_scenario(kScenarioDir + "/dynamic_optical.json");
  optical.seed = electrical.seed + 1;
  const auto re = run_dynamic_scenario(electrical);
  const auto ro = run_dynamic_scenario(optical);
  const auto& series = re.series;

  const double alice_dark = electrical.dynamic->detectors.at(Endpoint::Alice).dark_cps;
  const auto factor = rate_adjustment_factor(series, Endpoint::Alice, alice_dark);
  o.require(factor.factor >= 2.5 && factor.factor <= 4.0,
            "Alice max/min " + num(factor.factor, 2) + " (" + num(factor.db, 2) + " dB) in [2.5, 4.0]");

  const auto emma = dwell_rates(series, {Endpoint::EmmaLocal}, true);
  double grand = 0.0;
  for (const auto& d : emma) grand += d.mean_cps;
  grand /= static_cast<double>(emma.size());
  double worst = 0.0;
  for (const auto& d : emma) worst = std::max(worst, std::abs(d.mean_cps - grand) / d.sigma_cps);
  o.require(worst <= 2.0, "EmmaLocal dwell means within " + num(worst, 2) + " sigma of " + num(grand, 1) + " c/s");

  std::map<Endpoint, double> dark;
  for (const auto& [e, d] : electrical.dynamic->detectors) dark[e] = d.dark_cps;
  o.require(hitless_check(series, served_intervals(series, dark)), "hitless with 10 ms transitions");
  o.require(amc_delivery_disjoint(ro), "optical AMC disjoint from delivery");

  std::vector<Endpoint> all;
  for (const auto& [e, counts] : series.counts) all.push_back(e);
  const auto me = dwell_rates(series, all, false);
  const auto mo = dwell_rates(ro.series, all, false);
  double worst_mode = 0.0;
  for (std::size_t k = 0; k < me.size() && k < mo.size(); ++k) {
    const double z = std::abs(me[k].mean_cps - mo[k].mean_cps) /
                     std::sqrt(me[k].sigma_cps * me[k].sigma_cps + mo[k].sigma_cps * mo[k].sigma_cps);
    worst_mode = std::max(worst_mode, z);
  }
  o.require(me.size() == mo.size() && worst_mode < 2.0,
            "Electrical vs Optical1490 worst dwell difference " + num(worst_mode, 2) + " sigma");
  return o;
}

Outcome oracle_check() {
  Outcome o;
  {
    auto d = detector_preset("InGaAsFree");
    d.dark_cps = 1e4;
    d.dead_time_us = 0;
    d.jitter_ps_sigma = 0;
    d.id = 1;
    auto d2 = d;
    d2.id = 2;
    const double dur = 600.0;
    const auto a = detect({}, d, dur, derive_seed(8, "acc/a"));
    const auto b = detect({}, d2, dur, derive_seed(8, "acc/b"));
    const long long window = 20'000;
    const auto c = coincidences(a, b, window, dur);
    const double ra = static_cast<double>(a.size()) / dur;
    const double rb = static_cast<double>(b.size()) / dur;
    const double expect = accidental_rate(ra, rb, static_cast<double>(window));
    const double rel = c.rate_ccps / expect - 1.0;
    o.require(std::abs(rel) <= 0.10,
              "accidentals " + num(c.rate_ccps, 3) + " vs " + num(expect, 3) + " cc/s (" + num(100 * rel, 1) + "%)");
  }
  {
    std::vector<Photon> ph;
    Engine rng = make_engine(8, "dead/photons");
    std::exponential_distribution<double> gap(1e6 / static_cast<double>(kPsPerSecond));
    for (double t = gap(rng); t < static_cast<double>(kPsPerSecond); t += gap(rng)) {
      ph.push_back({static_cast<long long>(t), 1550});
    }
    DetectorSpec d;
    d.efficiency[1550] = 1.0;
    d.dead_time_us = 30;
    const auto tags = detect(ph, d, 1.0, derive_seed(8, "dead/detector"));
    const double truth = static_cast<double>(ph.size());
    const double expect = truth / (1.0 + truth * 30e-6);
    const double rel = static_cast<double>(tags.size()) / expect - 1.0;
    o.require(std::abs(rel) <= 0.02, "dead-time rate " + std::to_string(tags.size()) + " vs " + num(expect, 0) + " (" +
                                         num(100 * rel, 2) + "%)");
  }
  {
    auto p = preset_source("PP1").streams[0];
    p.brightness_pps = 2e6;
    const auto ev = generate_pairs(p, 1.0, derive_seed(8, "thin/pairs"));
    const double n = static_cast<double>(ev.size());
    const double l1 = 3.0, l2 = 4.5;
    const auto twice = propagate(propagate(ev, l1, derive_seed(8, "thin/1")), l2, derive_seed(8, "thin/2"));
    const auto once = propagate(ev, l1 + l2, derive_seed(8, "thin/3"));
    const double p12 = transmittance(l1 + l2);
    const double sigma = std::sqrt(n * p12 * (1 - p12));
    const double z1 = (static_cast<double>(twice.size()) - n * p12) / sigma;
    const double z2 = (static_cast<double>(twice.size()) - static_cast<double>(once.size())) / (sigma * std::sqrt(2.0));
    o.require(std::abs(z1) <= 3.0 && std::abs(z2) <= 3.0,
              "thinning composition z=" + num(z1, 2) + " (vs oracle), " + num(z2, 2) + " (vs single span)");
  }
  return o;
}

Outcome amc_check() {
  Outcome o;
  std::mt19937_64 rng(derive_seed(9, "amc/configs"));
  int round_trip = 0;
  long long undetected = 0, flips = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<int> outs{1, 2, 3, 4, 5, 6, 7, 8};
    std::shuffle(outs.begin(), outs.end(), rng);
    NodeConfiguration c;
    for (int in = 1; in <= 8; ++in) {
      if (rng() % 4 != 0) c.crosspoints[in] = outs[static_cast<std::size_t>(in - 1)];
    }
    const auto f = encode_frame(c, static_cast<std::uint8_t>(rng()), static_cast<std::uint8_t>(rng()));
    const auto bits = f.bits();
    if (decode_frame(bits).crosspoints == c.crosspoints) ++round_trip;
    for (std::size_t b = 0; b < bits.size(); ++b) {
      auto bad = bits;
      bad[b] = !bad[b];
      ++flips;
      try {
        decode_frame(bad);
        ++undetected;
      } catch (const Error&) {
      }
    }
  }
  const double ms = encode_frame(NodeConfiguration{}, 1, 0).duration_ms();
  o.require(round_trip == 1000, "round trip " + std::to_string(round_trip) + "/1000");
  o.require(undetected == 0, std::to_string(flips - undetected) + "/" + std::to_string(flips) + " bit flips detected");
  o.require(ms == 1.6, "frame duration " + num(ms, 6) + " ms");
  return o;
}

Outcome splitter_check() {
  Outcome o;
  const double s = splitter_loss(4, 0.38);
  double worst = 0.0;
  for (const auto& label : preset_map_labels()) {
    for (const auto& [key, loss] : synthesize(preset_map(label), ComponentLossModel{}).loss_table) {
      if (!is_oband(key.first)) worst = std::max(worst, loss);
    }
  }
  o.require(std::round(s * 100.0) == 640.0, "splitter_loss(4, 0.38) = " + num(s, 4) + " dB");
  o.require(s > worst, "exceeds max node C/L loss " + num(worst, 3) + " dB");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "apparent efficiency", 1e-3, apparent_efficiency_check},
      {2, "energy conservation", 1e-3, energy_conservation_check},
      {3, "node loss windows", 1.0, node_loss_check},
      {4, "remote entangled-rate budget", 1e-3, remote_rate_check},
      {5, "coincidence table consistency", 60.0, table_one_check},
      {6, "visibility estimator", 60.0, visibility_check},
      {7, "dynamic cycle", 60.0, dynamic_check},
      {8, "oracle equivalence", 30.0, oracle_check},
      {9, "AMC framing", 1.0, amc_check},
      {10, "splitter comparison", 1e-3, splitter_check},
  };
  return all;
}

bool run_one(const Criterion& c) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o.require(false, std::string("error: ") + e.what());
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(dt <= c.budget_s, "runtime " + num(dt, 4) + " s <= " + num(c.budget_s, 3) + " s");
  std::printf("criterion %d %s: %s (%s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    const int id = std::atoi(argv[1]);
    for (const auto& c : criteria()) {
      if (c.id == id) return run_one(c) ? 0 : 1;
    }
    std::fprintf(stderr, "unknown criterion %s\n", argv[1]);
    return 2;
  }
  bool ok = true;
  for (const auto& c : criteria()) ok = run_one(c) && ok;
  return ok ? 0 : 1;
}
