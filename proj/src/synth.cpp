#include "ecgreid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/rng.hpp"

namespace ecgreid {

using nlohmann::json;

Morphology default_morphology() {
  return {{
      {0.15, -0.190, 0.025},   // P
      {-0.15, -0.035, 0.010},  // Q
      {1.10, 0.000, 0.011},    // R
      {-0.30, 0.035, 0.010},   // S
      {0.35, 0.280, 0.045},    // T
  }};
}

void validate(const SyntheticPopulationConfig& c) {
  if (c.n_participants <= 0) throw ConfigError("empty population: n_participants must be > 0");
  if (!(c.sampling_rate_hz > 0.0)) throw ConfigError("sampling_rate_hz must be positive");
  if (!(c.duration_s > 0.0)) throw ConfigError("duration_s must be positive");
  if (!(c.bpm_min > 0.0) || c.bpm_max < c.bpm_min)
    throw ConfigError("beat rate range must satisfy 0 < bpm_min <= bpm_max");
  if (c.bpm_max > 150.0) throw ConfigError("bpm_max above 150 leaves no room for the T wave");
  if (c.amplitude_jitter < 0.0 || c.amplitude_jitter >= 1.0)
    throw ConfigError("amplitude_jitter must be in [0, 1)");
  if (c.timing_jitter < 0.0 || c.timing_jitter >= 0.5)
    throw ConfigError("timing_jitter must be in [0, 0.5)");
  if (c.rr_jitter_s < 0.0) throw ConfigError("rr_jitter_s must be non-negative");
  if (!std::isfinite(c.noise_snr_db)) throw ConfigError("noise_snr_db must be finite");
}

SyntheticPopulationConfig parse_synthetic_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("synthetic config", 1, e.what());
  }
  SyntheticPopulationConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  get("n_participants", c.n_participants);
  get("seed", c.seed);
  if (j.contains("beat_rate_bpm_range")) {
    const auto& r = j["beat_rate_bpm_range"];
    if (!r.is_array() || r.size() != 2) throw ConfigError("beat_rate_bpm_range must be [lo, hi]");
    c.bpm_min = r[0].get<double>();
    c.bpm_max = r[1].get<double>();
  }
  get("amplitude_jitter", c.amplitude_jitter);
  get("timing_jitter", c.timing_jitter);
  get("rr_jitter_s", c.rr_jitter_s);
  get("noise_snr_db", c.noise_snr_db);
  get("baseline_wander_mv", c.baseline_wander_mv);
  get("duration_s", c.duration_s);
  get("sampling_rate_hz", c.sampling_rate_hz);
  get("source_label", c.source_label);
  validate(c);
  return c;
}

std::string format_synthetic_config(const SyntheticPopulationConfig& c) {
  json j = {{"n_participants", c.n_participants},
            {"seed", c.seed},
            {"beat_rate_bpm_range", {c.bpm_min, c.bpm_max}},
            {"amplitude_jitter", c.amplitude_jitter},
            {"timing_jitter", c.timing_jitter},
            {"rr_jitter_s", c.rr_jitter_s},
            {"noise_snr_db", c.noise_snr_db},
            {"baseline_wander_mv", c.baseline_wander_mv},
            {"duration_s", c.duration_s},
            {"sampling_rate_hz", c.sampling_rate_hz},
            {"source_label", c.source_label}};
  return j.dump(2) + "\n";
}

std::vector<std::size_t> GroundTruth::r_indices() const {
  std::vector<std::size_t> out;
  out.reserve(beats.size());
  for (const auto& b : beats) out.push_back(b.r_index);
  return out;
}

std::vector<double> render_beats(const Morphology& morphology, const std::vector<double>& r_times_s,
                                 double fs, std::size_t n_samples) {
  std::vector<double> out(n_samples, 0.0);
  for (const double r_t : r_times_s) {
    for (const auto& w : morphology) {
      const double centre = r_t + w.offset_s;
      const double reach = 6.0 * w.width_s;
      const auto lo = static_cast<long long>(std::ceil((centre - reach) * fs));
      const auto hi = static_cast<long long>(std::floor((centre + reach) * fs));
      for (long long i = std::max(0LL, lo); i <= hi && i < static_cast<long long>(n_samples); ++i) {
        const double z = (static_cast<double>(i) / fs - centre) / w.width_s;
        out[static_cast<std::size_t>(i)] += w.amplitude_mv * std::exp(-0.5 * z * z);
      }
    }
  }
  return out;
}

namespace {

Morphology draw_morphology(Rng& rng, double amp_jitter, double time_jitter) {
  Morphology m = default_morphology();
  for (std::size_t k = 0; k < m.size(); ++k) {
    m[k].amplitude_mv *= 1.0 + amp_jitter * rng.uniform(-1.0, 1.0);
    if (k != 2) m[k].offset_s *= 1.0 + time_jitter * rng.uniform(-1.0, 1.0);
    m[k].width_s *= 1.0 + 0.1 * rng.uniform(-1.0, 1.0);
  }
  return m;
}

// Distance in units of the configured jitter, so "distinct" is scale free.
double morphology_distance(const Morphology& a, const Morphology& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    d = std::max(d, std::abs(a[k].amplitude_mv - b[k].amplitude_mv) /
                        std::abs(default_morphology()[k].amplitude_mv));
    if (k != 2)
      d = std::max(d, std::abs(a[k].offset_s - b[k].offset_s) /
                          std::abs(default_morphology()[k].offset_s));
  }
  return d;
}

}  // namespace

SyntheticPopulation generate_population(const SyntheticPopulationConfig& c) {
  validate(c);
  const double fs = c.sampling_rate_hz;
  const auto n_samples = static_cast<std::size_t>(std::llround(c.duration_s * fs));
  const auto n = static_cast<std::size_t>(c.n_participants);

  Rng cohort_rng(child_seed(c.seed, "cohort"));
  std::vector<Gender> genders(n);
  for (std::size_t i = 0; i < n; ++i) genders[i] = i % 2 == 0 ? Gender::M : Gender::F;
  cohort_rng.shuffle(genders);

  SyntheticPopulation pop;
  std::vector<Morphology> morphologies;
  const double min_distance = 0.02 * std::max(c.amplitude_jitter, c.timing_jitter);

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(child_seed(c.seed, static_cast<std::uint64_t>(i)));

    Morphology m = draw_morphology(rng, c.amplitude_jitter, c.timing_jitter);
    for (int attempt = 0; attempt < 64; ++attempt) {
      bool distinct = true;
      for (const auto& other : morphologies)
        if (morphology_distance(m, other) <= min_distance) distinct = false;
      if (distinct) break;
      m = draw_morphology(rng, c.amplitude_jitter, c.timing_jitter);
    }
    if (!morphologies.empty() && c.amplitude_jitter == 0.0 && c.timing_jitter == 0.0) {
      // Zero jitter would make everyone identical; scale R by index instead.
      m[2].amplitude_mv *= 1.0 + 0.01 * static_cast<double>(i);
    }
    morphologies.push_back(m);

    const double bpm = rng.uniform(c.bpm_min, c.bpm_max);
    const double rr_mean = 60.0 / bpm;
    std::vector<double> r_times;
    double t = 0.3 + rng.uniform(0.0, rr_mean);
    while (t < c.duration_s) {
      r_times.push_back(t);
      const double rr = std::max(0.7 * rr_mean, rr_mean + c.rr_jitter_s * rng.normal());
      t += rr;
    }

    std::vector<double> ecg = render_beats(m, r_times, fs, n_samples);

    double power = 0.0;
    for (const double v : ecg) power += v * v;
    power /= static_cast<double>(std::max<std::size_t>(n_samples, 1));
    const double noise_sd = std::sqrt(power / std::pow(10.0, c.noise_snr_db / 10.0));

    const double wander_amp = c.baseline_wander_mv * rng.uniform(0.5, 1.5);
    const double wander_hz = rng.uniform(0.15, 0.35);
    const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double dc = rng.uniform(-0.2, 0.2);

    EcgRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "syn_%03zu", i);
    rec.participant_id = id;
    rec.age = kMinAge + static_cast<int>(cohort_rng.below(kMaxAge - kMinAge + 1));
    rec.gender = genders[i];
    rec.sampling_rate_hz = fs;
    rec.source_label = c.source_label;
    rec.samples.resize(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double ts = static_cast<double>(s) / fs;
      rec.samples[s] = ecg[s] + dc +
                       wander_amp * std::sin(2.0 * std::numbers::pi * wander_hz * ts + wander_phase) +
                       noise_sd * rng.normal();
    }

    GroundTruth gt;
    gt.participant_id = rec.participant_id;
    gt.morphology = m;
    for (const double r_t : r_times) {
      const auto idx = static_cast<std::size_t>(std::llround(r_t * fs));
      if (idx >= n_samples) continue;
      BeatTruth b;
      b.r_index = idx;
      for (std::size_t k = 0; k < 5; ++k) b.time_s[k] = r_t + m[k].offset_s;
      gt.beats.push_back(b);
    }

    pop.records.push_back(std::move(rec));
    pop.truth.push_back(std::move(gt));
  }
  return pop;
}

}  // namespace ecgreid
