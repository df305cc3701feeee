#include <algorithm>
#include <set>

#include "doctest.h"
#include "qnet/link_budget.hpp"
#include "qnet/node.hpp"
#include "support.hpp"

using namespace qnet;
using qnet::test::code_of;

namespace {

NodeConfiguration preset(const char* label) { return synthesize(preset_map(label), ComponentLossModel{}); }

Band band_of_channel(const ChannelId& c) {
  const auto suffix = c.value.substr(c.value.find('.') + 1);
  if (suffix == "C") return Band::CBand;
  if (suffix == "L") return Band::LBand;
  return Band::OBand;
}

}  // namespace

TEST_CASE("preset maps") {
  CHECK(preset_map_labels().size() == 6);
  const auto i = preset_map("I");
  CHECK(i.endpoint_of({"S1.C"}) == Endpoint::Alice);
  CHECK(i.endpoint_of({"S1.L"}) == Endpoint::Diana);
  CHECK(i.endpoint_of({"S2.C"}) == Endpoint::Bob);
  CHECK(i.endpoint_of({"S2.L"}) == Endpoint::Charlie);
  CHECK_FALSE(i.endpoint_of({"EPR.O"}).has_value());
  CHECK(preset_map("III").endpoint_of({"EPR.O"}) == Endpoint::Bob);
  const auto iv = preset_map("IV");
  CHECK(iv.endpoint_of({"EPR.O"}) == Endpoint::Diana);
  for (Endpoint user : {Endpoint::Alice, Endpoint::Charlie}) {
    std::set<Band> bands;
    for (const auto& a : iv.assignments) {
      if (a.endpoint == user) bands.insert(band_of_channel(a.channel));
    }
    CHECK(bands == std::set<Band>{Band::CBand, Band::LBand});
  }
  CHECK(code_of([] { preset_map("VII"); }) == ErrorCode::NotFound);
}

TEST_CASE("port offsets span the configured uniformity") {
  const ComponentLossModel m;
  const auto offs = port_offsets(m);
  double lo = 1e9, hi = -1e9;
  for (const auto& [port, v] : offs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo == doctest::Approx(m.port_uniformity_pp_db));
  CHECK(port_offsets(m) == offs);
}

TEST_CASE("synthesized presets are partial permutations within the loss windows") {
  for (const auto& label : preset_map_labels()) {
    CAPTURE(label);
    const auto cfg = preset(label.c_str());
    CHECK(cfg.is_partial_permutation());
    CHECK_FALSE(cfg.loss_table.empty());
    for (const auto& [key, loss] : cfg.loss_table) {
      CAPTURE(key.first.value);
      if (band_of_channel(key.first) == Band::OBand) {
        CHECK(loss >= 2.1);
        CHECK(loss <= 2.3);
      } else {
        CHECK(loss >= 2.8);
        CHECK(loss <= 3.8);
      }
    }
    const auto map = preset_map(label);
    CHECK(cfg.routed().size() == map.assignments.size());
  }
}

TEST_CASE("O-band paths are a direct switch traverse") {
  const ComponentLossModel m;
  const auto cfg = preset("III");
  const double loss = insertion_loss(cfg, {"EPR.O"}, Endpoint::Bob);
  const double offset = cfg.port_offsets_db.at(ports::user_port(Endpoint::Bob));
  CHECK(loss == doctest::Approx(m.switch_traverse_db + offset));
  CHECK(std::abs(loss - 2.2) <= m.port_uniformity_pp_db);
}

TEST_CASE("mapping IV traverses the node once") {
  const auto iv = preset("IV");
  const double a = insertion_loss(iv, {"S1.C"}, Endpoint::Alice);
  CHECK(a < 3.0);
  CHECK(iv.loopback_modules.empty());
  double max_other = 0;
  for (const char* label : {"I", "II", "III", "V", "VI"}) {
    for (const auto& [k, v] : preset(label).loss_table) {
      if (band_of_channel(k.first) != Band::OBand) max_other = std::max(max_other, v);
    }
  }
  CHECK(a < max_other);
}

TEST_CASE("insertion loss of unrouted paths") {
  const auto i = preset("I");
  CHECK(code_of([&] { insertion_loss(i, {"EPR.O"}, Endpoint::Bob); }) == ErrorCode::NotRouted);
  CHECK(code_of([&] { insertion_loss(i, {"S1.C"}, Endpoint::Bob); }) == ErrorCode::NotRouted);
}

TEST_CASE("empty map leaves every user port dark") {
  const auto cfg = synthesize(DistributionMap{}, ComponentLossModel{});
  CHECK(cfg.loss_table.empty());
  for (Endpoint u : kUsers) {
    bool lit = false;
    for (const auto& [in, out] : cfg.crosspoints) lit = lit || out == ports::user_port(u);
    CHECK_FALSE(lit);
  }
}

TEST_CASE("infeasible maps are rejected") {
  DistributionMap twice;
  twice.assignments = {{{"S1.C"}, Endpoint::Alice}, {{"S1.C"}, Endpoint::Bob}};
  CHECK(code_of([&] { synthesize(twice, ComponentLossModel{}); }) == ErrorCode::Synthesis);
  DistributionMap local;
  local.assignments = {{{"EPR.S"}, Endpoint::Alice}};
  CHECK(code_of([&] { synthesize(local, ComponentLossModel{}); }) == ErrorCode::Synthesis);
  DistributionMap emma;
  emma.assignments = {{{"S1.C"}, Endpoint::EmmaLocal}};
  CHECK(code_of([&] { synthesize(emma, ComponentLossModel{}); }) == ErrorCode::Synthesis);
}

TEST_CASE("S-band rejection towards users") {
  for (const char* label : {"I", "VI"}) {
    const auto cfg = preset(label);
    for (Endpoint u : kUsers) CHECK(s_band_rejection(cfg, u) >= 40.0);
  }
  const auto empty = synthesize(DistributionMap{}, ComponentLossModel{});
  CHECK(s_band_rejection(empty, Endpoint::Bob) >= 40.0);
  CHECK(code_of([&] { s_band_rejection(empty, Endpoint::EmmaLocal); }) == ErrorCode::Domain);
}

TEST_CASE("reconfiguration diff") {
  const auto i = preset("I");
  const auto ii = preset("II");
  const auto id = reconfigure_diff(i, i);
  CHECK(id.changes.empty());
  CHECK(id.transition_ms == 0.0);
  const auto d = reconfigure_diff(i, ii);
  CHECK_FALSE(d.changes.empty());
  CHECK(d.transition_ms == doctest::Approx(10.0));
  // independent oracle: symmetric difference of the crosspoint maps
  std::set<int> inputs;
  for (const auto& [in, out] : i.crosspoints) {
    const auto it = ii.crosspoints.find(in);
    if (it == ii.crosspoints.end() || it->second != out) inputs.insert(in);
  }
  for (const auto& [in, out] : ii.crosspoints) {
    if (!i.crosspoints.count(in)) inputs.insert(in);
  }
  std::set<int> got;
  for (const auto& c : d.changes) got.insert(c.input_port);
  CHECK(got == inputs);
  const auto empty = synthesize(DistributionMap{}, ComponentLossModel{});
  const auto from_dark = reconfigure_diff(empty, i);
  CHECK(from_dark.changes.size() == i.crosspoints.size());
  for (const auto& c : from_dark.changes) CHECK(c.old_output == 0);
  CHECK(from_dark.transition_ms == doctest::Approx(10.0));
}

TEST_CASE("affected endpoints") {
  const auto i = preset("I");
  CHECK(affected_endpoints(i, i).empty());
  const auto iii = preset("III");
  const auto aff = affected_endpoints(i, iii);
  CHECK(std::find(aff.begin(), aff.end(), Endpoint::Bob) != aff.end());
  CHECK(std::find(aff.begin(), aff.end(), Endpoint::EmmaLocal) == aff.end());
}

TEST_CASE("synthesis is deterministic") {
  for (const auto& label : preset_map_labels()) {
    CHECK(preset(label.c_str()).canonical_text() == preset(label.c_str()).canonical_text());
  }
  CHECK(preset("I").canonical_text() != preset("II").canonical_text());
}

TEST_CASE("component loss validation") {
  ComponentLossModel m;
  m.wbs_stage_db = -0.1;
  CHECK(code_of([&] { validate_losses(m); }) == ErrorCode::Configuration);
  CHECK(code_of([] { ports::user_port(Endpoint::EmmaLocal); }) == ErrorCode::Domain);
}
