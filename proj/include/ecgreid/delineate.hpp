#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ecgreid {

enum class Wave { P = 0, Q = 1, R = 2, S = 3, T = 4 };

inline constexpr std::array<Wave, 5> kWaves = {Wave::P, Wave::Q, Wave::R, Wave::S, Wave::T};

char wave_letter(Wave w);
Wave parse_wave(char c);

/// Fiducial points of one beat. R is always present; the others may be absent.
/// Amplitudes are read from the cleaned signal at the stored index.
struct BeatAnnotation {
  std::array<std::optional<std::size_t>, 5> index{};
  std::array<double, 5> amplitude_mv{};
  double fs = 0.0;

  bool has(Wave w) const { return index[static_cast<int>(w)].has_value(); }
  std::size_t at(Wave w) const { return *index[static_cast<int>(w)]; }
  double amplitude(Wave w) const { return amplitude_mv[static_cast<int>(w)]; }
  double time_s(Wave w) const { return static_cast<double>(at(w)) / fs; }
  /// All five fiducials present.
  bool complete() const;

  bool operator==(const BeatAnnotation&) const = default;
};

struct DetectorConfig {
  double bandpass_low_hz = 5.0;
  double bandpass_high_hz = 15.0;
  double integration_window_s = 0.150;
  double refractory_s = 0.200;
  /// Half-width of the search for the signal maximum around a detected QRS.
  double r_search_s = 0.075;
  /// Candidates closer than this to the previous beat are tested for T-wave slope.
  double t_wave_check_s = 0.360;
  double search_back_factor = 1.66;
};

/// Pan-Tompkins-style QRS detection on a cleaned signal: 5-15 Hz bandpass,
/// derivative, squaring, moving-window integration, adaptive dual thresholds
/// with search-back. Returns strictly increasing R-peak indices separated by at
/// least the refractory period. Throws ConfigError if fs < 100 Hz and InputError
/// for signals shorter than 2 s.
std::vector<std::size_t> detect_r_peaks(std::span<const double> samples, double fs,
                                        const DetectorConfig& config = {});

/// Window widths, in seconds, of the local-extremum delineation.
struct DelineationConfig {
  double q_window_s = 0.080;        // Q = min in (R - q_window, R)
  double s_window_s = 0.080;        // S = min in (R, R + s_window)
  double p_window_begin_s = 0.200;  // P = max in (Q - begin, Q - end)
  double p_window_end_s = 0.020;
  double t_window_begin_s = 0.080;  // T = max in (S + begin, S + end)
  double t_window_end_s = 0.400;
  /// Centred moving-average widths used only to locate extrema; 0 disables.
  double qs_smoothing_s = 0.020;
  double pt_smoothing_s = 0.060;
};

/// One annotation per R peak, in R order. Windows are clipped at the
/// neighbouring R peaks; a window that leaves the record or is empty after
/// clipping marks that fiducial absent.
std::vector<BeatAnnotation> delineate_beats(std::span<const double> samples, double fs,
                                            std::span<const std::size_t> r_peaks,
                                            const DelineationConfig& config = {});

/// CSV `beat,r_index,p_index,q_index,s_index,t_index`; absent fields are empty.
std::string format_annotations_csv(std::span<const BeatAnnotation> beats);

/// Parses annotation CSV and re-reads amplitudes from `samples`.
std::vector<BeatAnnotation> parse_annotations_csv(std::string_view csv,
                                                  std::span<const double> samples, double fs,
                                                  const std::string& source = "annotations");

}  // namespace ecgreid
