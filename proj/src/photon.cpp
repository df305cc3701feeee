#include "qnet/photon.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>

#include "qnet/error.hpp"
#include "qnet/parallel.hpp"

namespace qnet {

PairGenerator::PairGenerator(double rate_pps, std::uint32_t stream, std::uint64_t seed)
    : rate_per_ps_(rate_pps / static_cast<double>(kPsPerSecond)), stream_(stream), rng_(seed) {
  if (rate_pps < 0.0) throw Error(ErrorCode::InvalidArgument, "pair rate must be >= 0");
  if (rate_per_ps_ > 0.0) next_ps_ = std::exponential_distribution<double>(rate_per_ps_)(rng_);
}

void PairGenerator::generate(long long until_ps, std::vector<PairEvent>& out) {
  if (rate_per_ps_ <= 0.0) return;
  std::exponential_distribution<double> gap(rate_per_ps_);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  while (next_ps_ < static_cast<double>(until_ps)) {
    long long t = std::llround(next_ps_);
    if (t <= last_ps_) t = last_ps_ + 1;
    last_ps_ = t;
    out.push_back({t, stream_, u(rng_)});
    next_ps_ += gap(rng_);
  }
}

namespace {

double marked_rate(double rate_pps, double pa, double pb, double pab) {
  if (pa < -1e-15 || pb < -1e-15 || pab < -1e-15 || pa + pb + pab > 1.0 + 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "survival probabilities must form a distribution");
  }
  return rate_pps * std::max(0.0, pa + pb + pab);
}

}  // namespace

SurvivingPairGenerator::SurvivingPairGenerator(double rate_pps, double p_a_only, double p_b_only, double p_both,
                                               std::uint64_t seed)
    : gen_(marked_rate(rate_pps, p_a_only, p_b_only, p_both), 0, seed) {
  const double total = std::max(0.0, p_a_only) + std::max(0.0, p_b_only) + std::max(0.0, p_both);
  c_a_ = total > 0.0 ? std::max(0.0, p_a_only) / total : 0.0;
  c_b_ = total > 0.0 ? c_a_ + std::max(0.0, p_b_only) / total : 0.0;
}

SurvivingPairGenerator SurvivingPairGenerator::independent(double rate_pps, double q_a, double q_b,
                                                           std::uint64_t seed) {
  return SurvivingPairGenerator(rate_pps, q_a * (1.0 - q_b), q_b * (1.0 - q_a), q_a * q_b, seed);
}

void SurvivingPairGenerator::generate(long long until_ps, std::vector<SurvivingPair>& out) {
  buf_.clear();
  gen_.generate(until_ps, buf_);
  for (const auto& p : buf_) {
    const double u = p.polarization_draw;
    out.push_back({p.t_ps, static_cast<std::uint8_t>(u < c_a_ ? 1 : (u < c_b_ ? 2 : 3))});
  }
}

std::vector<PairEvent> generate_pairs(const PairStream& stream, double duration_s, std::uint64_t seed) {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  std::vector<PairEvent> out;
  out.reserve(static_cast<std::size_t>(stream.brightness_pps * duration_s * 1.01) + 16);
  PairGenerator gen(stream.brightness_pps, 0, seed);
  gen.generate(std::llround(duration_s * static_cast<double>(kPsPerSecond)), out);
  return out;
}

std::string_view detector_kind_name(DetectorKind kind) noexcept {
  switch (kind) {
    case DetectorKind::InGaAsFree: return "InGaAsFree";
    case DetectorKind::InGaAsGated: return "InGaAsGated";
    case DetectorKind::SiSPAD: return "SiSPAD";
  }
  return "?";
}

DetectorKind parse_detector_kind(std::string_view name) {
  for (auto k : {DetectorKind::InGaAsFree, DetectorKind::InGaAsGated, DetectorKind::SiSPAD}) {
    if (detector_kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::Configuration, "unknown detector kind '" + std::string(name) + "'");
}

void validate_detector(const DetectorSpec& d) {
  for (const auto& [wl, e] : d.efficiency) {
    if (!(wl > 0.0) || e < 0.0 || e > 1.0) {
      throw Error(ErrorCode::Configuration, "detector efficiency must lie in [0,1]");
    }
  }
  if (d.dark_cps < 0.0 || d.dead_time_us < 0.0 || d.jitter_ps_sigma < 0.0) {
    throw Error(ErrorCode::Configuration, "detector dark rate, dead time and jitter must be >= 0");
  }
  if (d.kind == DetectorKind::InGaAsGated && !d.gate) {
    throw Error(ErrorCode::Configuration, "gated detector requires a gate");
  }
  if (d.gate && (d.gate->freq_hz < 0.0 || d.gate->window_ns < 0.0 ||
                 d.gate->freq_hz * d.gate->window_ns * 1e-9 > 1.0)) {
    throw Error(ErrorCode::Configuration, "gate duty cycle must lie in [0,1]");
  }
}

double efficiency_at(const DetectorSpec& d, double wavelength_nm) {
  const double* best = nullptr;
  double best_dist = 10.0;
  for (const auto& [wl, e] : d.efficiency) {
    const double dist = std::abs(wl - wavelength_nm);
    if (dist <= best_dist) {
      if (best == nullptr || dist < best_dist) {
        best = &e;
        best_dist = dist;
      }
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::NotFound, "detector " + std::to_string(d.id) + " has no efficiency entry near " +
                                         std::to_string(wavelength_nm) + " nm");
  }
  return *best;
}

double apparent_efficiency(const DetectorSpec& d, double wavelength_nm) {
  const double eta = efficiency_at(d, wavelength_nm);
  if (d.kind == DetectorKind::InGaAsGated || d.gate) {
    if (!d.gate) throw Error(ErrorCode::Configuration, "gated detector requires a gate");
    return eta * d.gate->freq_hz * d.gate->window_ns * 1e-9;
  }
  return eta;
}

DetectorSpec detector_preset(std::string_view name, std::uint8_t id) {
  DetectorSpec d;
  d.id = id;
  const std::map<double, double> ingaas{{1290.0, 0.12}, {1310.0, 0.12}, {1510.0, 0.10},
                                        {1540.0, 0.10}, {1550.0, 0.10}, {1590.0, 0.10},
                                        {1610.0, 0.10}};
  if (name == "InGaAsFree") {
    d.kind = DetectorKind::InGaAsFree;
    d.efficiency = ingaas;
    d.dark_cps = 520.0;
    d.dead_time_us = 30.0;
    d.jitter_ps_sigma = 300.0;
  } else if (name == "InGaAsGated") {
    d.kind = DetectorKind::InGaAsGated;
    d.efficiency = ingaas;
    d.dark_cps = 670.0;
    d.dead_time_us = 10.0;
    d.gate = Gate{1e6, 100.0};
    d.jitter_ps_sigma = 300.0;
  } else if (name == "SiSPAD") {
    d.kind = DetectorKind::SiSPAD;
    d.efficiency = {{900.0, 0.05}, {904.0, 0.05}};
    d.dark_cps = 110.0;
    d.dead_time_us = 0.05;
    d.jitter_ps_sigma = 150.0;
  } else {
    throw Error(ErrorCode::NotFound, "unknown detector preset '" + std::string(name) + "'");
  }
  return d;
}

Detector::Detector(DetectorSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)),
      rng_(seed),
      dead_ps_(std::llround(spec_.dead_time_us * 1e6)),
      duty_(spec_.gate ? spec_.gate->freq_hz * spec_.gate->window_ns * 1e-9 : 1.0) {
  validate_detector(spec_);
}

void Detector::process(const std::vector<Photon>& photons, long long t0_ps, long long t1_ps,
                       std::vector<TimeTag>& out, bool acceptance_applied) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, spec_.jitter_ps_sigma);
  std::vector<TimeTag> cand;
  cand.reserve(photons.size() / 8 + 64);

  for (const auto& ph : photons) {
    if (acceptance_applied) {
      long long t = ph.t_ps;
      if (spec_.jitter_ps_sigma > 0.0) t += std::llround(jitter(rng_));
      cand.push_back({std::max(0LL, t), spec_.id, TagKind::Photon});
      continue;
    }
    double eta = -1.0;
    for (const auto& [wl, e] : eff_cache_) {
      if (wl == ph.wavelength_nm) {
        eta = e;
        break;
      }
    }
    if (eta < 0.0) {
      eta = efficiency_at(spec_, ph.wavelength_nm);
      eff_cache_.emplace_back(ph.wavelength_nm, eta);
    }
    if (u(rng_) >= eta) continue;
    if (duty_ < 1.0 && u(rng_) >= duty_) continue;
    long long t = ph.t_ps;
    if (spec_.jitter_ps_sigma > 0.0) t += std::llround(jitter(rng_));
    cand.push_back({std::max(0LL, t), spec_.id, TagKind::Photon});
  }

  if (spec_.dark_cps > 0.0 && t1_ps > t0_ps) {
    std::exponential_distribution<double> gap(spec_.dark_cps / static_cast<double>(kPsPerSecond));
    for (double t = static_cast<double>(t0_ps) + gap(rng_); t < static_cast<double>(t1_ps); t += gap(rng_)) {
      cand.push_back({static_cast<long long>(t), spec_.id, TagKind::Dark});
    }
  }

  std::sort(cand.begin(), cand.end(), [](const TimeTag& a, const TimeTag& b) {
    return a.t_ps != b.t_ps ? a.t_ps < b.t_ps : a.kind < b.kind;
  });

  for (auto tag : cand) {
    if (any_) {
      if (tag.t_ps < last_ps_) {
        if (dead_ps_ > 0) continue;
        tag.t_ps = last_ps_;
      } else if (tag.t_ps - last_ps_ < dead_ps_) {
        continue;
      }
    }
    any_ = true;
    last_ps_ = tag.t_ps;
    out.push_back(tag);
  }
}

std::vector<TimeTag> detect(const std::vector<Photon>& photons, const DetectorSpec& d, double duration_s,
                            std::uint64_t seed) {
  if (!std::is_sorted(photons.begin(), photons.end(),
                      [](const Photon& a, const Photon& b) { return a.t_ps < b.t_ps; })) {
    throw Error(ErrorCode::InvalidArgument, "photon events must be sorted");
  }
  Detector det(d, seed);
  std::vector<TimeTag> out;
  det.process(photons, 0, std::llround(duration_s * static_cast<double>(kPsPerSecond)), out);
  return out;
}

CoincidenceStats coincidences(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b,
                              long long window_ps, double duration_s, long long offset_ps) {
  if (window_ps <= 0) throw Error(ErrorCode::InvalidArgument, "coincidence window must be positive");
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  CoincidenceStats s;
  const auto bins = static_cast<std::size_t>(std::ceil(duration_s - 1e-9));
  s.per_second.assign(std::max<std::size_t>(bins, 1), 0);
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.size() && j < b.size()) {
    const long long d = a[i].t_ps + offset_ps - b[j].t_ps;
    if (2 * std::llabs(d) <= window_ps) {
      auto bin = static_cast<std::size_t>(std::max(0LL, a[i].t_ps) / kPsPerSecond);
      s.per_second[std::min(bin, s.per_second.size() - 1)]++;
      ++s.count;
      ++i;
      ++j;
    } else if (d > 0) {
      ++j;
    } else {
      ++i;
    }
  }
  s.rate_ccps = static_cast<double>(s.count) / duration_s;
  const double n = static_cast<double>(s.per_second.size());
  double sum = 0.0;
  for (auto c : s.per_second) sum += static_cast<double>(c);
  s.mean = sum / n;
  if (s.per_second.size() > 1) {
    double ss = 0.0;
    for (auto c : s.per_second) ss += (static_cast<double>(c) - s.mean) * (static_cast<double>(c) - s.mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

std::size_t Histogram::peak_bin() const noexcept {
  return static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

Histogram coincidence_histogram(const std::vector<TimeTag>& a, const std::vector<TimeTag>& b, long long span_ps,
                                long long bin_ps, long long offset_ps) {
  if (bin_ps <= 0 || span_ps < bin_ps) {
    throw Error(ErrorCode::InvalidArgument, "histogram needs bin > 0 and span >= bin");
  }
  Histogram h;
  const long long nbins = span_ps / bin_ps;
  h.bin_ps = bin_ps;
  h.start_ps = -(nbins * bin_ps) / 2;
  h.counts.assign(static_cast<std::size_t>(nbins), 0);
  const long long end = h.start_ps + nbins * bin_ps;
  std::size_t j = 0;
  for (const auto& ta : a) {
    while (j < b.size() && b[j].t_ps - ta.t_ps - offset_ps < h.start_ps) ++j;
    for (std::size_t k = j; k < b.size(); ++k) {
      const long long d = b[k].t_ps - ta.t_ps - offset_ps;
      if (d >= end) break;
      h.counts[static_cast<std::size_t>((d - h.start_ps) / bin_ps)]++;
    }
  }
  return h;
}

double accidental_rate(double r_a, double r_b, double window_ps) {
  if (r_a < 0.0 || r_b < 0.0 || window_ps < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "rates and window must be >= 0");
  }
  return r_a * r_b * window_ps * 1e-12;
}

double joint_detection_probability(double v_source, double angle_a_deg, double angle_b_deg) {
  if (v_source < 0.0 || v_source > 1.0) throw Error(ErrorCode::InvalidArgument, "visibility must lie in [0,1]");
  const double d = 2.0 * (angle_a_deg - angle_b_deg) * std::numbers::pi / 180.0;
  return 0.25 * (1.0 + v_source * std::cos(d));
}

double polarizer_angle_deg(char setting) {
  switch (setting) {
    case 'H': return 0.0;
    case 'V': return 90.0;
    case 'D': return 45.0;
    case 'A': return -45.0;
    default: break;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("unknown polarizer setting '") + setting + "'");
}

VisibilityResult visibility_from_counts(const std::map<std::string, double>& counts) {
  auto get = [&](const char* k) {
    const auto it = counts.find(k);
    if (it == counts.end()) throw Error(ErrorCode::InvalidArgument, std::string("missing setting ") + k);
    return it->second;
  };
  auto contrast = [](double p1, double p2, double m1, double m2) {
    const double s = p1 + p2 + m1 + m2;
    if (s <= 0.0) throw Error(ErrorCode::Indeterminate, "no coincidences in a visibility basis");
    return (p1 + p2 - m1 - m2) / s;
  };
  VisibilityResult r;
  for (const char* k : kVisibilitySettings) r.counts[k] = get(k);
  r.v_rectilinear = contrast(get("HH"), get("VV"), get("HV"), get("VH"));
  r.v_diagonal = contrast(get("DD"), get("AA"), get("DA"), get("AD"));
  r.v = 0.5 * (r.v_rectilinear + r.v_diagonal);
  return r;
}

VisibilityResult measure_visibility(const PairStream& stream, double path_loss_a_db, double path_loss_b_db,
                                    const DetectorSpec& det_a, const DetectorSpec& det_b, double duration_s,
                                    std::uint64_t seed, const VisibilityOptions& options) {
  if (!stream.entangled()) {
    throw Error(ErrorCode::Domain, "visibility requires an entangled stream (" + stream.id + " is a product pair)");
  }
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidArgument, "duration must be positive");
  if (options.path_visibility < 0.0 || options.path_visibility > 1.0) {
    throw Error(ErrorCode::InvalidArgument, "path visibility must lie in [0,1]");
  }
  const double v_eff = std::get<Entangled>(stream.correlation).v_source * options.path_visibility;
  const double t_a = transmittance(path_loss_a_db);
  const double t_b = transmittance(path_loss_b_db);
  const auto seconds = static_cast<long long>(std::ceil(duration_s - 1e-9));
  const long long end_ps = std::llround(duration_s * static_cast<double>(kPsPerSecond));

  std::vector<double> rates(kVisibilitySettings.size());
  parallel_for(
      kVisibilitySettings.size(),
      [&](std::size_t idx) {
        const std::string setting = kVisibilitySettings[idx];
        const std::string label = "visibility/" + setting;
        const double a = polarizer_angle_deg(setting[0]);
        const double b = polarizer_angle_deg(setting[1]);
        const double p_pp = joint_detection_probability(v_eff, a, b);
        const double p_pb = joint_detection_probability(v_eff, a, b + 90.0);
        const double p_bp = joint_detection_probability(v_eff, a + 90.0, b);

        const double q_a = t_a * apparent_efficiency(det_a, stream.signal.center_nm);
        const double q_b = t_b * apparent_efficiency(det_b, stream.idler.center_nm);
        const double both = p_pp * q_a * q_b;
        SurvivingPairGenerator gen(stream.brightness_pps, (p_pp + p_pb) * q_a - both, (p_pp + p_bp) * q_b - both,
                                   both, derive_seed(seed, label + "/pairs"));
        Detector da(det_a, derive_seed(seed, label + "/det_a"));
        Detector db(det_b, derive_seed(seed, label + "/det_b"));
        std::vector<TimeTag> tags_a;
        std::vector<TimeTag> tags_b;
        std::vector<SurvivingPair> pairs;
        std::vector<Photon> ph_a;
        std::vector<Photon> ph_b;
        for (long long s = 0; s < seconds; ++s) {
          const long long t0 = s * kPsPerSecond;
          const long long t1 = std::min(end_ps, t0 + kPsPerSecond);
          pairs.clear();
          ph_a.clear();
          ph_b.clear();
          gen.generate(t1, pairs);
          for (const auto& p : pairs) {
            if (p.mask & 1) ph_a.push_back({p.t_ps + options.delay_a_ps, stream.signal.center_nm});
            if (p.mask & 2) ph_b.push_back({p.t_ps + options.delay_b_ps, stream.idler.center_nm});
          }
          da.process(ph_a, t0, t1, tags_a, true);
          db.process(ph_b, t0, t1, tags_b, true);
        }
        rates[idx] = coincidences(tags_a, tags_b, options.window_ps, duration_s,
                                  options.delay_b_ps - options.delay_a_ps)
                         .rate_ccps;
      },
      options.threads);

  std::map<std::string, double> counts;
  for (std::size_t i = 0; i < rates.size(); ++i) counts[kVisibilitySettings[i]] = rates[i];
  return visibility_from_counts(counts);
}

ClassicalLimit classical_limit_check(double v) {
  if (v < -1.0 || v > 1.0) throw Error(ErrorCode::InvalidArgument, "visibility must lie in [-1,1]");
  return {v > kClassicalLimit, v - kClassicalLimit};
}

void write_tags_binary(std::ostream& os, const std::vector<TimeTag>& tags) {
  char rec[10];
  for (const auto& t : tags) {
    rec[0] = static_cast<char>(t.detector_id);
    rec[1] = static_cast<char>(t.kind);
    const auto v = static_cast<std::uint64_t>(t.t_ps);
    for (int i = 0; i < 8; ++i) rec[2 + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(rec, sizeof rec);
  }
}

std::vector<TimeTag> read_tags_binary(std::istream& is) {
  std::vector<TimeTag> out;
  unsigned char rec[10];
  while (is.read(reinterpret_cast<char*>(rec), sizeof rec)) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(rec[2 + i]) << (8 * i);
    if (rec[1] > 1) throw Error(ErrorCode::Framing, "invalid tag kind in binary record");
    out.push_back({static_cast<long long>(v), rec[0], static_cast<TagKind>(rec[1])});
  }
  if (is.gcount() != 0) throw Error(ErrorCode::Framing, "truncated binary tag record");
  return out;
}

void write_tags_csv(std::ostream& os, const std::vector<TimeTag>& tags) {
  os << "detector_id,kind,t_ps\n";
  for (const auto& t : tags) {
    os << static_cast<int>(t.detector_id) << ',' << (t.kind == TagKind::Photon ? "photon" : "dark") << ','
       << t.t_ps << '\n';
  }
}

}  // namespace qnet
