#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "qnet/scenario.hpp"
#include "support.hpp"

using namespace qnet;
using qnet::test::code_of;

namespace {

const std::filesystem::path kScenarios = QNET_SCENARIO_DIR;

std::string minimal(const std::string& extra = "") {
  return R"({"schema": "qnet-scenario/1", "seed": 5)" + extra + "}";
}

}  // namespace

TEST_CASE("scenario schema and seed are mandatory") {
  CHECK_NOTHROW(parse_scenario(minimal()));
  CHECK(code_of([] { parse_scenario(R"({"seed": 1})"); }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario(R"({"schema": "qnet-scenario/1"})"); }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario(R"({"schema": "qnet-scenario/2", "seed": 1})"); }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario("{not json"); }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario(minimal(R"(, "colour": "red")")); }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario(minimal(R"(, "duration_s": 0)")); }) == ErrorCode::Configuration);
  CHECK(code_of([] { load_scenario("/nonexistent/scenario.json"); }) == ErrorCode::Io);
}

TEST_CASE("scenario defaults") {
  const auto s = parse_scenario(minimal());
  CHECK(s.seed == 5);
  CHECK(s.duration_s == 60.0);
  CHECK(s.sources.size() == 2);
  CHECK_FALSE(s.map.has_value());
  CHECK(s.topology.feeder_1.length_km == 12.8);
}

TEST_CASE("scenario sections") {
  const auto s = parse_scenario(minimal(R"(,
    "sources": [{"preset": "PP1", "brightness_pps": {"S1": 1000}}],
    "map": {"name": "custom", "assignments": {"S1.C": "A", "S1.L": "B"}},
    "topology": {"feeder_1": {"length_km": 1.5}, "drops": {"Bob": {"length_km": 2}}},
    "component_losses": {"wbs_stage_db": 0.5},
    "detectors": [{"endpoint": "Alice", "preset": "InGaAsFree", "dark_cps": 100},
                  {"endpoint": "Bob", "preset": "InGaAsGated"}])"));
  CHECK(s.sources[0].streams[0].brightness_pps == 1000);
  REQUIRE(s.map.has_value());
  CHECK(s.map->endpoint_of({"S1.L"}) == Endpoint::Bob);
  CHECK(s.topology.feeder_1.length_km == 1.5);
  CHECK(s.topology.drops.at(Endpoint::Bob).length_km == 2);
  CHECK(s.topology.drops.at(Endpoint::Alice).length_km == 4.3);
  CHECK(s.losses.wbs_stage_db == 0.5);
  CHECK(s.detectors.at(Endpoint::Alice).dark_cps == 100);
  CHECK(s.detectors.at(Endpoint::Bob).id == 2);
  CHECK(code_of([] {
          parse_scenario(minimal(R"(, "detectors": [{"endpoint": "A", "preset": "SiSPAD"},
                                                     {"endpoint": "A", "preset": "SiSPAD"}])"));
        }) == ErrorCode::Configuration);
  CHECK(code_of([] { parse_scenario(minimal(R"(, "sources": [{"preset": "PP1", "brightness_pps": {"S7": 1}}])")); }) ==
        ErrorCode::NotFound);
}

TEST_CASE("bundled scenarios load") {
  for (const char* f : {"static_I.json", "static_II.json", "static_III.json", "static_IV.json", "static_V.json",
                        "static_VI.json", "b2b_epr2.json", "dynamic_cycle.json", "dynamic_optical.json"}) {
    CAPTURE(f);
    const auto s = load_scenario(kScenarios / f);
    CHECK(s.schema == kScenarioSchema);
  }
  const auto cycle = load_scenario(kScenarios / "dynamic_cycle.json");
  REQUIRE(cycle.dynamic.has_value());
  CHECK(cycle.dynamic->scenario.sequence.size() == 6);
  CHECK(cycle.dynamic->scenario.bin_ms == 50);
  const auto bundled = resolved(load_scenario(kScenarios / "static_III.json"));
  const auto builtin = resolved(default_scenario("III", 42));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < bundled.sources[i].streams.size(); ++k) {
      CHECK(bundled.sources[i].streams[k].brightness_pps ==
            doctest::Approx(builtin.sources[i].streams[k].brightness_pps));
    }
  }
}

TEST_CASE("brightness inversion") {
  const double t = std::pow(10.0, -0.69);
  // 1.42e5 to three significant figures
  CHECK(std::round(brightness_for_rate(5.9, t, t, 0.10, 0.01) / 1e3) == 142.0);
  CHECK(brightness_for_rate(5.9, t, t, 0.10, 0.01) == doctest::Approx(5.9 / (t * t * 0.10 * 0.01)));
  CHECK(brightness_for_rate(0, t, t, 0.10, 0.01) == 0.0);
  CHECK(code_of([&] { brightness_for_rate(5.9, t, t, 0.10, 0.0); }) == ErrorCode::Indeterminate);
  CHECK(code_of([&] { brightness_for_rate(-1, t, t, 0.10, 0.01); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("calibrated brightness reproduces the targets in closed form") {
  const auto s = default_scenario("I", 1);
  const auto b = calibrate_brightness({{"S1", 5.9}, {"S2", 1.2}}, preset_map("I"), s);
  const auto cfg = synthesize(preset_map("I"), s.losses, feeder_plan(s.sources, s.topology));
  const auto rows = measurement_rows(s.sources, s.topology, preset_map("I"));
  const auto rb = budget_table(s, cfg);
  auto total = [&](const ChannelId& c, Endpoint e) {
    for (const auto& r : rb) {
      if (r.channel == c && r.endpoint == e) return r.budget.total_db();
    }
    FAIL("missing budget row");
    return 0.0;
  };
  for (const auto& r : rows) {
    // free-running detector at a (10%), gated detector at b (1% apparent)
    const double expect = b.at(r.stream) * transmittance(total(r.channel_a, r.a)) *
                          transmittance(total(r.channel_b, r.b)) * 0.10 * 0.01;
    CHECK(expect == doctest::Approx(r.stream == "S1" ? 5.9 : 1.2));
  }
  CHECK(code_of([&] { calibrate_brightness({{"EPR", 1.0}}, preset_map("I"), s); }) == ErrorCode::NotRouted);
}

TEST_CASE("remote entangled rate") {
  CHECK(expected_remote_entangled_rate(190.7, 8.869) == doctest::Approx(24.7).epsilon(2e-3));
  CHECK(std::abs(10.0 * std::log10(29.3 / expected_remote_entangled_rate(190.7, 8.869))) < 1.0);
  CHECK(expected_remote_entangled_rate(190.7, 0) == doctest::Approx(190.7));
  CHECK(expected_remote_entangled_rate(0, 4) == 0.0);
}

TEST_CASE("measurement rows and detector placement") {
  const auto s = default_scenario("I", 1);
  const auto rows = measurement_rows(s.sources, s.topology, preset_map("I"));
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].a == Endpoint::Alice);
  CHECK(rows[0].b == Endpoint::Diana);
  CHECK(rows[1].a == Endpoint::Bob);
  CHECK(rows[1].b == Endpoint::Charlie);
  const auto dets = default_detectors(s.sources, s.topology, preset_map("I"));
  CHECK(dets.at(Endpoint::Alice).kind == DetectorKind::InGaAsFree);
  CHECK(dets.at(Endpoint::Diana).kind == DetectorKind::InGaAsGated);
  CHECK(dets.at(Endpoint::EmmaLocal).kind == DetectorKind::SiSPAD);
  const auto iii = measurement_rows(s.sources, s.topology, preset_map("III"));
  const auto epr = std::find_if(iii.begin(), iii.end(), [](const PairRow& r) { return r.entangled; });
  REQUIRE(epr != iii.end());
  CHECK(epr->a == Endpoint::EmmaLocal);
  CHECK(epr->b == Endpoint::Bob);
  CHECK(default_detectors(s.sources, s.topology, preset_map("III")).at(Endpoint::Bob).kind == DetectorKind::InGaAsFree);
}

TEST_CASE("static report rows match the coincidence engine on the same tags") {
  auto s = resolved(default_scenario("IV", 3));
  s.duration_s = 10;
  StaticOptions opt;
  opt.keep_tags = true;
  opt.visibility = false;
  const auto rep = run_static(s, opt);
  const auto routed = preset_map("IV").assignments.size();
  CHECK(rep.budget.size() == routed);
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) {
    const auto& ta = rep.tags.at({row.pair.a, row.pair.channel_a});
    const auto& tb = rep.tags.at({row.pair.b, row.pair.channel_b});
    const auto again = coincidences(ta, tb, s.coincidence_window_ps, s.duration_s, row.offset_ps);
    CHECK(again.count == row.stats.count);
    CHECK(again.mean == row.stats.mean);
    CHECK(again.std == row.stats.std);
  }
}

TEST_CASE("mapping IV yields two band-resolved A-C histograms") {
  auto s = resolved(default_scenario("IV", 8));
  s.duration_s = 20;
  StaticOptions opt;
  opt.visibility = false;
  const auto rep = run_static(s, opt);
  int ac = 0;
  for (const auto& row : rep.rows) {
    if (row.pair.a != Endpoint::Alice || row.pair.b != Endpoint::Charlie) continue;
    ++ac;
    const auto& h = row.histogram;
    const auto peak = h.peak_bin();
    CHECK(std::abs(h.center_of(peak)) <= 500);
    // dominant: the peak stands well above every bin outside +-2 ns
    std::uint64_t off = 0;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      if (std::abs(h.center_of(i)) > 2000) off = std::max(off, h.counts[i]);
    }
    CHECK(h.counts[peak] > 3 * (off + 1));
  }
  CHECK(ac == 2);
}

TEST_CASE("calibrated static mappings") {
  const auto i = run_static(resolved(default_scenario("I", 42)));
  REQUIRE(i.rows.size() == 2);
  CHECK(std::abs(i.rows[0].stats.mean - 5.9) <= 1.2);
  CHECK(std::abs(i.rows[1].stats.mean - 1.2) <= 0.5);
  const auto iii = run_static(resolved(default_scenario("III", 42)));
  const auto epr = std::find_if(iii.rows.begin(), iii.rows.end(), [](const StaticRow& r) { return r.pair.entangled; });
  REQUIRE(epr != iii.rows.end());
  REQUIRE(epr->visibility.has_value());
  CHECK(epr->visibility->v == doctest::Approx(0.84).epsilon(0.05));
  CHECK(epr->limit->exceeds);
  CHECK(code_of([] {
          auto s = default_scenario("I", 1);
          s.map.reset();
          run_static(s);
        }) == ErrorCode::Configuration);
}

TEST_CASE("static reports are written deterministically") {
  auto s = resolved(default_scenario("III", 9));
  s.duration_s = 5;
  const auto dir = std::filesystem::temp_directory_path() / "qnet_test_static";
  std::filesystem::remove_all(dir);
  write_static_reports(run_static(s), dir / "a", true, false);
  write_static_reports(run_static(s), dir / "b", true, false);
  for (const auto& e : std::filesystem::directory_iterator(dir / "a")) {
    std::ifstream fa(e.path(), std::ios::binary), fb(dir / "b" / e.path().filename(), std::ios::binary);
    std::stringstream a, b;
    a << fa.rdbuf();
    b << fb.rdbuf();
    CAPTURE(e.path().filename().string());
    CHECK(a.str() == b.str());
  }
  std::ifstream coin(dir / "a" / "coincidences.csv");
  std::string header;
  std::getline(coin, header);
  CHECK(header.find("rate_ccps") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("budget table units and sums") {
  const auto s = default_scenario("III", 1);
  const auto rows = budget_table(s, synthesize(*s.map, s.losses, feeder_plan(s.sources, s.topology)));
  std::ostringstream os;
  write_budget_csv(os, rows);
  CHECK(os.str().rfind("channel,endpoint,feeder_db,node_db,drop_db,total_db\n", 0) == 0);
  for (const auto& r : rows) {
    CHECK(r.budget.total_db() == doctest::Approx(r.budget.feeder_db + r.budget.node_db + r.budget.drop_db));
  }
}
