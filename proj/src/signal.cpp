#include "fesense/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include "fesense/errors.hpp"
#include "fesense/rng.hpp"

namespace fesense {

namespace {

void check_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw validation_error(std::string(name) + " must be finite");
}

void validate_tone(ToneSpec& t) {
  check_finite(t.frequency_hz, "tone frequency_hz");
  check_finite(t.amplitude_t, "tone amplitude_t");
  check_finite(t.phase_rad, "tone phase_rad");
  if (t.frequency_hz <= 0) throw validation_error("tone frequency_hz must be > 0");
  if (t.amplitude_t < 0) throw validation_error("tone amplitude_t must be >= 0");
  t.phase_rad = wrap_angle(t.phase_rad);
}

void validate_pm(PhaseModSpec& p) {
  check_finite(p.carrier_hz, "phase_mod carrier_hz");
  check_finite(p.mod_frequency_hz, "phase_mod mod_frequency_hz");
  check_finite(p.mod_depth_rad, "phase_mod mod_depth_rad");
  check_finite(p.amplitude_t, "phase_mod amplitude_t");
  if (p.carrier_hz <= 0) throw validation_error("phase_mod carrier_hz must be > 0");
  if (p.mod_frequency_hz <= 0) throw validation_error("phase_mod mod_frequency_hz must be > 0");
  if (p.mod_depth_rad < 0) throw validation_error("phase_mod mod_depth_rad must be >= 0");
  if (p.amplitude_t < 0) throw validation_error("phase_mod amplitude_t must be >= 0");
}

void validate_telegraph(const TelegraphSpec& g) {
  check_finite(g.mean_dwell_s, "telegraph mean_dwell_s");
  check_finite(g.amplitude_t, "telegraph amplitude_t");
  check_finite(g.trace_duration_s, "telegraph trace_duration_s");
  if (g.mean_dwell_s <= 0) throw validation_error("telegraph mean_dwell_s must be > 0");
  if (g.amplitude_t < 0) throw validation_error("telegraph amplitude_t must be >= 0");
  if (g.trace_duration_s <= 0) throw validation_error("telegraph trace_duration_s must be > 0");
  if (g.n_traces < 1) throw validation_error("telegraph n_traces must be >= 1");
  if (g.trace_duration_s < 10.0 * g.mean_dwell_s) {
    std::ostringstream msg;
    msg << "telegraph trace_duration_s (" << g.trace_duration_s
        << ") is below 10x mean_dwell_s; dwell statistics will be poorly sampled";
    warn(msg.str());
  }
}

}  // namespace

double TelegraphRealization::value_at(double t) const {
  const double dur = spec.trace_duration_s;
  const double total = total_duration_s();
  if (t < 0 || t > total) throw validation_error("telegraph evaluated outside realized timeline");
  auto idx = static_cast<std::size_t>(t / dur);
  if (idx >= traces.size()) idx = traces.size() - 1;  // t == total lands in the last trace
  const double local = t - static_cast<double>(idx) * dur;
  const auto& tr = traces[idx];
  auto flips = std::upper_bound(tr.switch_times_s.begin(), tr.switch_times_s.end(), local) -
               tr.switch_times_s.begin();
  return (flips % 2 == 0) ? tr.initial_level_t : -tr.initial_level_t;
}

TelegraphRealization generate_telegraph(const TelegraphSpec& spec) {
  validate_telegraph(spec);
  Rng rng(spec.seed);
  TelegraphRealization real;
  real.spec = spec;
  real.traces.resize(static_cast<std::size_t>(spec.n_traces));
  const double half = 0.5 * spec.amplitude_t;
  for (auto& tr : real.traces) {
    tr.initial_level_t = rng.bernoulli(0.5) ? half : -half;
    double t = rng.exponential(spec.mean_dwell_s);
    while (t < spec.trace_duration_s) {
      tr.switch_times_s.push_back(t);
      t += rng.exponential(spec.mean_dwell_s);
    }
  }
  return real;
}

SignalSpec validate_signal_spec(SignalSpec spec) {
  check_finite(spec.projection_angle_rad, "projection_angle_rad");
  for (auto& comp : spec.components) {
    std::visit(
        [](auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, ToneSpec>) validate_tone(c);
          if constexpr (std::is_same_v<T, PhaseModSpec>) validate_pm(c);
          if constexpr (std::is_same_v<T, TelegraphSpec>) validate_telegraph(c);
        },
        comp);
  }
  return spec;
}

Signal::Signal(SignalSpec spec) : spec_(validate_signal_spec(std::move(spec))) {
  projection_ = std::cos(spec_.projection_angle_rad);
  max_time_ = std::numeric_limits<double>::infinity();
  for (const auto& comp : spec_.components) {
    if (const auto* g = std::get_if<TelegraphSpec>(&comp)) {
      telegraphs_.push_back(generate_telegraph(*g));
      max_time_ = std::min(max_time_, telegraphs_.back().total_duration_s());
    }
  }
}

double Signal::evaluate(double t) const {
  if (t < 0) throw validation_error("signal evaluated at negative time");
  if (t > max_time_) throw validation_error("signal evaluated beyond realized telegraph timeline");
  double sum = 0.0;
  std::size_t tele = 0;
  for (const auto& comp : spec_.components) {
    if (const auto* tone = std::get_if<ToneSpec>(&comp)) {
      sum += tone->amplitude_t * std::cos(kTwoPi * tone->frequency_hz * t + tone->phase_rad);
    } else if (const auto* pm = std::get_if<PhaseModSpec>(&comp)) {
      sum += pm->amplitude_t *
             std::cos(kTwoPi * pm->carrier_hz * t +
                      pm->mod_depth_rad * std::sin(kTwoPi * pm->mod_frequency_hz * t));
    } else {
      sum += telegraphs_[tele++].value_at(t);
    }
  }
  return projection_ * sum;
}

double Signal::bandwidth_hint_hz() const {
  double hint = 0.0;
  for (const auto& comp : spec_.components) {
    if (const auto* tone = std::get_if<ToneSpec>(&comp)) {
      hint = std::max(hint, tone->frequency_hz);
    } else if (const auto* pm = std::get_if<PhaseModSpec>(&comp)) {
      // Carson-style sideband extent.
      hint = std::max(hint, pm->carrier_hz + (pm->mod_depth_rad + 6.0) * pm->mod_frequency_hz);
    } else if (const auto* g = std::get_if<TelegraphSpec>(&comp)) {
      hint = std::max(hint, 16.0 / (kPi * g->mean_dwell_s));
    }
  }
  return hint;
}

void write_telegraph_csv(const TelegraphRealization& real, std::ostream& out) {
  out << "trace_id,switch_time_s,level_t\n";
  const int prec = 17;
  for (std::size_t i = 0; i < real.traces.size(); ++i) {
    const auto& tr = real.traces[i];
    double level = tr.initial_level_t;
    out.precision(prec);
    out << i << ",0," << level << "\n";
    for (double ts : tr.switch_times_s) {
      level = -level;
      out << i << "," << ts << "," << level << "\n";
    }
  }
}

nlohmann::json to_json(const SignalSpec& spec) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& comp : spec.components) {
    nlohmann::json c;
    if (const auto* t = std::get_if<ToneSpec>(&comp)) {
      c = {{"type", "tone"},
           {"frequency_hz", t->frequency_hz},
           {"amplitude_t", t->amplitude_t},
           {"phase_rad", t->phase_rad}};
    } else if (const auto* p = std::get_if<PhaseModSpec>(&comp)) {
      c = {{"type", "phase_mod"},
           {"carrier_hz", p->carrier_hz},
           {"mod_frequency_hz", p->mod_frequency_hz},
           {"mod_depth_rad", p->mod_depth_rad},
           {"amplitude_t", p->amplitude_t}};
    } else if (const auto* g = std::get_if<TelegraphSpec>(&comp)) {
      c = {{"type", "telegraph"},
           {"mean_dwell_s", g->mean_dwell_s},
           {"amplitude_t", g->amplitude_t},
           {"trace_duration_s", g->trace_duration_s},
           {"n_traces", g->n_traces},
           {"seed", g->seed}};
    }
    comps.push_back(std::move(c));
  }
  return {{"projection_angle_rad", spec.projection_angle_rad}, {"components", std::move(comps)}};
}

SignalSpec signal_spec_from_json(const nlohmann::json& j) {
  SignalSpec spec;
  if (j.contains("projection_angle_rad") && j.contains("projection_angle_deg"))
    throw validation_error("give projection angle in radians or degrees, not both");
  if (j.contains("projection_angle_rad"))
    spec.projection_angle_rad = j.at("projection_angle_rad").get<double>();
  else if (j.contains("projection_angle_deg"))
    spec.projection_angle_rad = j.at("projection_angle_deg").get<double>() * kPi / 180.0;
  if (!j.contains("components") || !j.at("components").is_array())
    throw validation_error("signal spec needs a components array");
  for (const auto& c : j.at("components")) {
    const std::string type = c.at("type").get<std::string>();
    if (type == "tone") {
      ToneSpec t;
      t.frequency_hz = c.at("frequency_hz").get<double>();
      t.amplitude_t = c.at("amplitude_t").get<double>();
      t.phase_rad = c.value("phase_rad", 0.0);
      spec.components.emplace_back(t);
    } else if (type == "phase_mod") {
      PhaseModSpec p;
      p.carrier_hz = c.at("carrier_hz").get<double>();
      p.mod_frequency_hz = c.at("mod_frequency_hz").get<double>();
      p.mod_depth_rad = c.at("mod_depth_rad").get<double>();
      p.amplitude_t = c.at("amplitude_t").get<double>();
      spec.components.emplace_back(p);
    } else if (type == "telegraph") {
      TelegraphSpec g;
      g.mean_dwell_s = c.at("mean_dwell_s").get<double>();
      g.amplitude_t = c.at("amplitude_t").get<double>();
      g.trace_duration_s = c.at("trace_duration_s").get<double>();
      g.n_traces = c.value("n_traces", 1);
      g.seed = c.value("seed", std::uint64_t{0});
      spec.components.emplace_back(g);
    } else {
      throw validation_error("unknown signal component type: " + type);
    }
  }
  return validate_signal_spec(std::move(spec));
}

}  // namespace fesense
