#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecgreid/delineate.hpp"
#include "ecgreid/record.hpp"

namespace ecgreid {

enum class AgeGroup { A21_30, A31_40, A41_50, A51_60, A61_70, A71_89 };

inline constexpr int kAgeGroupCount = 6;

/// Inclusive bins 21-30, 31-40, 41-50, 51-60, 61-70, 71-89.
AgeGroup assign_age_group(int age);
std::string_view to_string(AgeGroup g);
AgeGroup parse_age_group(std::string_view s);

/// (1/N) sum (A_X - A_R) over beats where both X and R exist.
/// nullopt when no beat has a valid pair.
std::optional<double> mean_amplitude_difference(std::span<const BeatAnnotation> beats, Wave x);

/// (1/N) sum (t_Y - t_X) over beats where both exist. `x` must not come after `y`.
std::optional<double> mean_interval(std::span<const BeatAnnotation> beats, Wave x, Wave y);

/// One column of the feature table.
struct FeatureDef {
  enum class Kind { Amplitude, Interval } kind;
  Wave x;
  Wave y;  // R for amplitude differences

  std::string name() const;
  std::optional<double> compute(std::span<const BeatAnnotation> beats) const;
};

/// amp_PR, amp_QR, amp_SR, amp_TR, then the adjacent intervals int_PQ, int_QR,
/// int_RS, int_ST; with `all_pairs` every ordered pair of distinct waves.
std::vector<FeatureDef> feature_defs(bool all_pairs = false);
std::vector<std::string> feature_names(bool all_pairs = false);

/// One analysis window of one participant.
struct FeatureRow {
  std::string participant_id;
  int window_index = 0;
  Gender gender = Gender::M;
  AgeGroup age_group = AgeGroup::A21_30;
  std::vector<double> values;

  bool operator==(const FeatureRow&) const = default;
};

struct FeatureTable {
  std::vector<std::string> names;
  std::vector<FeatureRow> rows;

  bool operator==(const FeatureTable&) const = default;
};

std::string format_feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(std::string_view csv, const std::string& source = "features");

struct ParticipantLabels {
  std::string participant_id;
  Gender gender = Gender::M;
  int age = kMinAge;
};

struct DropCounts {
  int too_few_beats = 0;
  int undefined_feature = 0;

  DropCounts& operator+=(const DropCounts& o) {
    too_few_beats += o.too_few_beats;
    undefined_feature += o.undefined_feature;
    return *this;
  }
};

struct WindowedFeatures {
  std::vector<FeatureRow> rows;
  DropCounts drops;
};

inline constexpr int kMinCompleteBeats = 3;

/// Non-overlapping windows of `window_s` tiling the first floor(duration / window_s)
/// windows of the record. Windows with fewer than 3 complete beats, or with an
/// undefined feature, are dropped and counted.
WindowedFeatures windowed_features(std::span<const BeatAnnotation> beats, double fs,
                                   std::size_t n_samples, double window_s,
                                   const ParticipantLabels& labels, bool all_pairs = false);

/// Incremental form of windowed_features: beats are pushed in R order and each
/// window is closed as soon as a later beat (or finish) passes its end.
class StreamingFeatureExtractor {
 public:
  StreamingFeatureExtractor(double fs, double window_s, ParticipantLabels labels,
                            bool all_pairs = false);

  void push(const BeatAnnotation& beat);
  WindowedFeatures finish(std::size_t n_samples);

 private:
  void close_window(int k);
  std::size_t window_start(int k) const;

  double fs_;
  double window_s_;
  ParticipantLabels labels_;
  std::vector<FeatureDef> defs_;
  int current_ = 0;
  std::vector<double> sums_;
  std::vector<int> counts_;
  int complete_ = 0;
  std::vector<FeatureRow> rows_;
  std::vector<std::pair<int, bool>> dropped_;  // (window, undefined feature)
};

}  // namespace ecgreid
