#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ecgreid/record.hpp"

namespace ecgreid {

/// One Gaussian deflection of a beat, positioned relative to the R peak.
struct WaveShape {
  double amplitude_mv = 0.0;
  double offset_s = 0.0;
  double width_s = 0.0;

  bool operator==(const WaveShape&) const = default;
};

/// P, Q, R, S, T waves in that order.
using Morphology = std::array<WaveShape, 5>;

Morphology default_morphology();

struct SyntheticPopulationConfig {
  int n_participants = 20;
  std::uint64_t seed = 42;
  double bpm_min = 55.0;
  double bpm_max = 85.0;
  /// Relative spread of per-participant wave amplitudes and of P/Q/S/T offsets.
  double amplitude_jitter = 0.25;
  double timing_jitter = 0.10;
  /// Standard deviation of beat-to-beat RR variation.
  double rr_jitter_s = 0.02;
  double noise_snr_db = 20.0;
  double baseline_wander_mv = 0.1;
  double duration_s = 60.0;
  double sampling_rate_hz = 250.0;
  std::string source_label = "synthetic";

  bool operator==(const SyntheticPopulationConfig&) const = default;
};

/// Throws ConfigError; an empty population is reported as such.
void validate(const SyntheticPopulationConfig& config);

SyntheticPopulationConfig parse_synthetic_config(std::string_view json_text);
std::string format_synthetic_config(const SyntheticPopulationConfig& config);

/// Generator truth for one beat. Fiducial times are the Gaussian centres.
struct BeatTruth {
  std::size_t r_index = 0;
  std::array<double, 5> time_s{};  // P, Q, R, S, T
};

struct GroundTruth {
  std::string participant_id;
  Morphology morphology{};
  std::vector<BeatTruth> beats;

  std::vector<std::size_t> r_indices() const;
};

struct SyntheticPopulation {
  std::vector<EcgRecord> records;
  std::vector<GroundTruth> truth;
};

/// Pure function of the config (including its seed).
SyntheticPopulation generate_population(const SyntheticPopulationConfig& config);

/// Noise-free beat train for one morphology; used by tests and the generator.
std::vector<double> render_beats(const Morphology& morphology, const std::vector<double>& r_times_s,
                                 double fs, std::size_t n_samples);

}  // namespace ecgreid
