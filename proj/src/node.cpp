#include "qnet/node.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "qnet/error.hpp"

namespace qnet {

std::optional<Endpoint> DistributionMap::endpoint_of(const ChannelId& channel) const {
  for (const auto& a : assignments) {
    if (a.channel == channel) return a.endpoint;
  }
  return std::nullopt;
}

const std::vector<std::string>& preset_map_labels() {
  static const std::vector<std::string> labels{"I", "II", "III", "IV", "V", "VI"};
  return labels;
}

DistributionMap preset_map(std::string_view label) {
  using E = Endpoint;
  auto make = [&](std::vector<std::pair<const char*, E>> items) {
    DistributionMap m;
    m.name = std::string(label);
    for (auto& [c, e] : items) m.assignments.push_back({ChannelId{c}, e});
    return m;
  };
  // Stream S1 is the bright pair, S2 the dim one; PP1 output 1 carries
  // {S1.C, S2.L} and output 2 carries {S1.L, S2.C}.
  if (label == "I") {
    return make({{"S1.C", E::Alice}, {"S1.L", E::Diana}, {"S2.C", E::Bob}, {"S2.L", E::Charlie}});
  }
  if (label == "II") {
    return make({{"S2.L", E::Alice}, {"S2.C", E::Diana}, {"S1.L", E::Bob}, {"S1.C", E::Charlie}});
  }
  if (label == "III") {
    return make({{"S1.L", E::Alice},
                 {"S2.C", E::Alice},
                 {"S1.C", E::Diana},
                 {"S2.L", E::Charlie},
                 {"EPR.O", E::Bob}});
  }
  if (label == "IV") {
    return make({{"S1.C", E::Alice},
                 {"S2.L", E::Alice},
                 {"S1.L", E::Charlie},
                 {"S2.C", E::Charlie},
                 {"EPR.O", E::Diana}});
  }
  if (label == "V") {
    return make({{"S1.C", E::Alice}, {"S1.L", E::Bob}, {"S2.L", E::Charlie}, {"S2.C", E::Diana}});
  }
  if (label == "VI") {
    return make({{"S1.C", E::Diana},
                 {"S2.L", E::Diana},
                 {"S1.L", E::Charlie},
                 {"S2.C", E::Bob},
                 {"EPR.O", E::Alice}});
  }
  throw Error(ErrorCode::NotFound, "unknown distribution map '" + std::string(label) + "'");
}

std::string_view module_name(ModuleKind kind) noexcept {
  switch (kind) {
    case ModuleKind::CLSplitter: return "CLSplitter";
    case ModuleKind::CLCombiner: return "CLCombiner";
    case ModuleKind::OBandPass: return "OBandPass";
  }
  return "?";
}

void validate_losses(const ComponentLossModel& l) {
  if (l.switch_traverse_db < 0 || l.wbs_stage_db < 0 || l.port_uniformity_pp_db < 0 ||
      l.s_band_rejection_db < 0 || l.transition_ms < 0) {
    throw Error(ErrorCode::Configuration, "component losses must be non-negative");
  }
}

namespace ports {

int user_port(Endpoint user) {
  switch (user) {
    case Endpoint::Alice: return 1;
    case Endpoint::Bob: return 2;
    case Endpoint::Charlie: return 3;
    case Endpoint::Diana: return 4;
    case Endpoint::EmmaLocal: break;
  }
  throw Error(ErrorCode::Domain, "EmmaLocal has no node port");
}

std::optional<Endpoint> user_at(int output_port) {
  if (output_port >= 1 && output_port <= 4) return kUsers[output_port - 1];
  return std::nullopt;
}

}  // namespace ports

const FeederPlan::Entry* FeederPlan::find(const ChannelId& id) const {
  for (const auto& e : channels) {
    if (e.channel == id) return &e;
  }
  return nullptr;
}

FeederPlan feeder_plan(const std::vector<SourceSpec>& sources, const Topology& topology) {
  FeederPlan plan;
  for (const auto& src : sources) {
    for (const auto& s : src.streams) {
      for (const Channel* c : {&s.signal, &s.idler}) {
        if (topology.source_to_feeder.count(c->output) == 0) continue;  // local detection
        if (c->band != Band::CBand && c->band != Band::LBand && c->band != Band::OBand) {
          throw Error(ErrorCode::Configuration,
                      "channel " + c->id.value + " is not in a band the node can route");
        }
        plan.channels.push_back({c->id, c->band, topology.feeder_of(*c)});
      }
    }
  }
  return plan;
}

FeederPlan default_feeder_plan() {
  return feeder_plan({preset_source("PP1"), preset_source("EPR2")}, default_topology());
}

std::map<int, double> port_offsets(const ComponentLossModel& losses) {
  std::mt19937_64 rng(losses.port_offset_seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double half = losses.port_uniformity_pp_db / 2.0;
  std::map<int, double> out;
  // User ports stay inside 85% of the half-spread; two foldback ports carry the
  // extremes so the node-wide peak-to-peak equals the configured value.
  for (int p = 1; p <= 4; ++p) out[p] = 0.85 * half * u(rng);
  std::vector<int> fold{5, 6, 7, 8};
  std::shuffle(fold.begin(), fold.end(), rng);
  out[fold[0]] = -half;
  out[fold[1]] = half;
  out[fold[2]] = half * u(rng);
  out[fold[3]] = half * u(rng);
  return out;
}

namespace {

struct Signal {
  int port = 0;
  std::map<ChannelId, int> stages;
  std::set<Band> bands;
  std::vector<std::pair<int, int>> chain;
};

class PortPool {
 public:
  PortPool() {
    for (int p = ports::kFirstFoldback; p <= ports::kLastFoldback; ++p) {
      sends_.insert(p);
      returns_.insert(p);
    }
  }

  std::vector<int> take_sends(int n, const std::string& why) { return take(sends_, n, "send", why); }
  std::vector<int> take_returns(int n, const std::string& why) { return take(returns_, n, "return", why); }

 private:
  static std::vector<int> take(std::set<int>& pool, int n, const char* kind, const std::string& why) {
    if (static_cast<int>(pool.size()) < n) {
      throw Error(ErrorCode::Synthesis, std::string("infeasible map: ") + why + " needs " +
                                            std::to_string(n) + " foldback " + kind +
                                            " port(s) but only " + std::to_string(pool.size()) +
                                            " of 4 remain");
    }
    std::vector<int> out;
    for (int i = 0; i < n; ++i) {
      out.push_back(*pool.begin());
      pool.erase(pool.begin());
    }
    return out;
  }

  std::set<int> sends_;
  std::set<int> returns_;
};

bool is_cl(Band b) { return b == Band::CBand || b == Band::LBand; }

}  // namespace

NodeConfiguration synthesize(const DistributionMap& map, const ComponentLossModel& losses,
                             const FeederPlan& plan) {
  validate_losses(losses);

  std::map<ChannelId, Endpoint> dest;
  for (const auto& a : map.assignments) {
    if (plan.find(a.channel) == nullptr) {
      throw Error(ErrorCode::Synthesis, "channel " + a.channel.value + " is not delivered to the node");
    }
    if (a.endpoint == Endpoint::EmmaLocal) {
      throw Error(ErrorCode::Synthesis,
                  "channel " + a.channel.value + " cannot be routed to EmmaLocal (no network path)");
    }
    auto [it, inserted] = dest.emplace(a.channel, a.endpoint);
    if (!inserted && it->second != a.endpoint) {
      throw Error(ErrorCode::Synthesis, "infeasible map: channel " + a.channel.value +
                                            " requested at two endpoints; the node has no power splitter");
    }
  }

  NodeConfiguration cfg;
  cfg.port_offsets_db = port_offsets(losses);
  cfg.s_band_rejection_db = losses.s_band_rejection_db;
  cfg.transition_ms = losses.transition_ms;
  cfg.map_name = map.name;

  PortPool pool;
  std::map<Endpoint, std::vector<Signal>> arriving;

  auto deliver_group = [&](int port, const std::vector<const FeederPlan::Entry*>& group, int stages,
                           std::vector<std::pair<int, int>> chain, const std::string& what) {
    std::set<Endpoint> targets;
    bool any_dark = false;
    for (const auto* e : group) {
      const auto it = dest.find(e->channel);
      if (it == dest.end()) {
        any_dark = true;
      } else {
        targets.insert(it->second);
      }
    }
    if (targets.empty()) return;
    if (targets.size() > 1 || any_dark) {
      throw Error(ErrorCode::Synthesis, "infeasible map: " + what +
                                            " carries channels in one waveband that must be separated");
    }
    Signal s;
    s.port = port;
    s.chain = std::move(chain);
    for (const auto* e : group) {
      s.stages[e->channel] = stages;
      s.bands.insert(e->band);
    }
    arriving[*targets.begin()].push_back(std::move(s));
  };

  for (int feeder : {1, 2}) {
    const int cl_port = feeder == 1 ? ports::kFeeder1CL : ports::kFeeder2CL;
    const int o_port = feeder == 1 ? ports::kFeeder1O : ports::kFeeder2O;
    std::vector<const FeederPlan::Entry*> cl, c_only, l_only, o;
    for (const auto& e : plan.channels) {
      if (e.feeder != feeder) continue;
      if (e.band == Band::OBand) {
        o.push_back(&e);
      } else if (is_cl(e.band)) {
        cl.push_back(&e);
        (e.band == Band::CBand ? c_only : l_only).push_back(&e);
      }
    }

    deliver_group(o_port, o, 0, {}, "feeder " + std::to_string(feeder) + " O-band");

    std::set<Endpoint> targets;
    bool any_dark = false;
    for (const auto* e : cl) {
      const auto it = dest.find(e->channel);
      if (it == dest.end()) {
        any_dark = true;
      } else {
        targets.insert(it->second);
      }
    }
    if (targets.empty()) continue;
    if (targets.size() == 1 && !any_dark) {
      // Whole C+L composite to one user: input diplexer stage only.
      deliver_group(cl_port, cl, 1, {}, "feeder composite");
      continue;
    }
    const std::string why = "C/L split of feeder " + std::to_string(feeder);
    const int send = pool.take_sends(1, why)[0];
    const auto rets = pool.take_returns(2, why);
    cfg.crosspoints[cl_port] = send;
    cfg.loopback_modules.push_back({ModuleKind::CLSplitter, {send}, {rets[0], rets[1]}});
    deliver_group(rets[0], c_only, 2, {{cl_port, send}}, "C branch of feeder " + std::to_string(feeder));
    deliver_group(rets[1], l_only, 2, {{cl_port, send}}, "L branch of feeder " + std::to_string(feeder));
  }

  for (Endpoint user : kUsers) {
    auto it = arriving.find(user);
    if (it == arriving.end()) continue;
    auto& sigs = it->second;
    std::sort(sigs.begin(), sigs.end(), [](const Signal& a, const Signal& b) { return a.port < b.port; });
    while (sigs.size() > 1) {
      Signal a = std::move(sigs[0]);
      Signal b = std::move(sigs[1]);
      sigs.erase(sigs.begin(), sigs.begin() + 2);
      std::vector<Band> overlap;
      std::set_intersection(a.bands.begin(), a.bands.end(), b.bands.begin(), b.bands.end(),
                            std::back_inserter(overlap));
      const std::string who = std::string(endpoint_name(user));
      if (!overlap.empty()) {
        throw Error(ErrorCode::Synthesis, "infeasible map: " + who +
                                              " would receive two signals in " +
                                              std::string(band_name(overlap.front())) +
                                              "; waveband combiners cannot merge them");
      }
      const bool a_o = a.bands.count(Band::OBand) != 0;
      const bool b_o = b.bands.count(Band::OBand) != 0;
      ModuleKind kind = ModuleKind::CLCombiner;
      if (a_o || b_o) {
        const bool a_pure_o = a.bands.size() == 1 && a_o;
        const bool b_pure_o = b.bands.size() == 1 && b_o;
        if (!a_pure_o && !b_pure_o) {
          throw Error(ErrorCode::Synthesis, "infeasible map: cannot band-combine signals for " + who);
        }
        kind = ModuleKind::OBandPass;
      }
      const std::string why = std::string(module_name(kind)) + " for " + who;
      const auto sends = pool.take_sends(2, why);
      const int ret = pool.take_returns(1, why)[0];
      cfg.crosspoints[a.port] = sends[0];
      cfg.crosspoints[b.port] = sends[1];
      cfg.loopback_modules.push_back({kind, {sends[0], sends[1]}, {ret}});
      Signal c;
      c.port = ret;
      c.chain = a.chain;
      c.chain.insert(c.chain.end(), b.chain.begin(), b.chain.end());
      c.chain.push_back({a.port, sends[0]});
      c.chain.push_back({b.port, sends[1]});
      for (auto& [ch, st] : a.stages) c.stages[ch] = st + 1;
      for (auto& [ch, st] : b.stages) c.stages[ch] = st + 1;
      c.bands = a.bands;
      c.bands.insert(b.bands.begin(), b.bands.end());
      sigs.insert(sigs.begin(), std::move(c));
    }
    Signal& s = sigs.front();
    const int out = ports::user_port(user);
    cfg.crosspoints[s.port] = out;
    s.chain.push_back({s.port, out});
    std::sort(s.chain.begin(), s.chain.end());
    cfg.routes[user] = s.chain;
    for (const auto& [ch, st] : s.stages) {
      cfg.loss_table[{ch, user}] =
          losses.switch_traverse_db + st * losses.wbs_stage_db + cfg.port_offsets_db.at(out);
    }
  }

  if (!cfg.is_partial_permutation()) {
    throw Error(ErrorCode::Internal, "synthesis produced an invalid crosspoint map");
  }
  return cfg;
}

bool NodeConfiguration::is_partial_permutation() const {
  std::set<int> outs;
  for (const auto& [in, out] : crosspoints) {
    if (in < 1 || in > ports::kCount || out < 1 || out > ports::kCount) return false;
    if (!outs.insert(out).second) return false;
  }
  return true;
}

std::vector<PathKey> NodeConfiguration::routed() const {
  std::vector<PathKey> out;
  for (const auto& [k, v] : loss_table) out.push_back(k);
  return out;
}

std::string NodeConfiguration::canonical_text() const {
  std::ostringstream os;
  char buf[64];
  os << "node map=" << map_name.value_or("-") << "\n";
  for (const auto& [in, out] : crosspoints) os << "xp " << in << " " << out << "\n";
  for (const auto& m : loopback_modules) {
    os << "module " << module_name(m.kind) << " send=";
    for (std::size_t i = 0; i < m.send_ports.size(); ++i) os << (i ? "," : "") << m.send_ports[i];
    os << " return=";
    for (std::size_t i = 0; i < m.return_ports.size(); ++i) os << (i ? "," : "") << m.return_ports[i];
    os << "\n";
  }
  for (const auto& [key, db] : loss_table) {
    std::snprintf(buf, sizeof buf, "%.4f", db);
    os << "loss " << key.first.value << " " << endpoint_name(key.second) << " " << buf << "\n";
  }
  return os.str();
}

double insertion_loss(const NodeConfiguration& config, const ChannelId& channel, Endpoint endpoint) {
  const auto it = config.loss_table.find({channel, endpoint});
  if (it == config.loss_table.end()) {
    throw Error(ErrorCode::NotRouted, "channel " + channel.value + " is not routed to " +
                                          std::string(endpoint_name(endpoint)));
  }
  return it->second;
}

double s_band_rejection(const NodeConfiguration& config, Endpoint endpoint) {
  ports::user_port(endpoint);  // rejects EmmaLocal
  // The AMC wavelength is dropped by the input diplexers before the switch, so
  // every user port sees the full filter rejection whatever the crosspoints.
  return config.s_band_rejection_db;
}

ReconfigurationDiff reconfigure_diff(const NodeConfiguration& from, const NodeConfiguration& to) {
  ReconfigurationDiff d;
  for (int in = 1; in <= ports::kCount; ++in) {
    const auto a = from.crosspoints.find(in);
    const auto b = to.crosspoints.find(in);
    const int oa = a == from.crosspoints.end() ? 0 : a->second;
    const int ob = b == to.crosspoints.end() ? 0 : b->second;
    if (oa != ob) d.changes.push_back({in, oa, ob});
  }
  d.transition_ms = d.changes.empty() ? 0.0 : to.transition_ms;
  return d;
}

std::vector<Endpoint> affected_endpoints(const NodeConfiguration& from, const NodeConfiguration& to) {
  auto delivered = [](const NodeConfiguration& c, Endpoint e) {
    std::vector<std::string> ch;
    for (const auto& [key, db] : c.loss_table) {
      if (key.second == e) ch.push_back(key.first.value);
    }
    return ch;
  };
  std::vector<Endpoint> out;
  for (Endpoint e : kUsers) {
    const auto ra = from.routes.find(e);
    const auto rb = to.routes.find(e);
    const bool same_route = (ra == from.routes.end() && rb == to.routes.end()) ||
                            (ra != from.routes.end() && rb != to.routes.end() && ra->second == rb->second);
    if (!same_route || delivered(from, e) != delivered(to, e)) out.push_back(e);
  }
  return out;
}

}  // namespace qnet
