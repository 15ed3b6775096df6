#include "ecgreid/features.hpp"

#include <algorithm>
#include <cmath>

#include "ecgreid/error.hpp"
#include "ecgreid/text.hpp"

namespace ecgreid {

namespace {

constexpr std::string_view kAgeLabels[kAgeGroupCount] = {"21-30", "31-40", "41-50",
                                                         "51-60", "61-70", "71-89"};

constexpr std::string_view kFeatureCsvPrefix = "participant_id,window_index,gender,age_group";

bool pair_valid(const BeatAnnotation& b, Wave x, Wave y) { return b.has(x) && b.has(y); }

double amplitude_term(const BeatAnnotation& b, Wave x) {
  return b.amplitude(x) - b.amplitude(Wave::R);
}

double interval_term(const BeatAnnotation& b, Wave x, Wave y) { return b.time_s(y) - b.time_s(x); }

double term(const FeatureDef& d, const BeatAnnotation& b) {
  return d.kind == FeatureDef::Kind::Amplitude ? amplitude_term(b, d.x) : interval_term(b, d.x, d.y);
}

int n_windows(std::size_t n_samples, double fs, double window_s) {
  return static_cast<int>(std::floor(static_cast<double>(n_samples) / (window_s * fs) + 1e-9));
}

std::size_t window_start(int k, double fs, double window_s) {
  return static_cast<std::size_t>(std::llround(k * window_s * fs));
}

}  // namespace

AgeGroup assign_age_group(int age) {
  if (age < kMinAge || age > kMaxAge)
    throw ValidationError("age " + std::to_string(age) + " outside 21-89");
  if (age <= 30) return AgeGroup::A21_30;
  if (age <= 40) return AgeGroup::A31_40;
  if (age <= 50) return AgeGroup::A41_50;
  if (age <= 60) return AgeGroup::A51_60;
  if (age <= 70) return AgeGroup::A61_70;
  return AgeGroup::A71_89;
}

std::string_view to_string(AgeGroup g) { return kAgeLabels[static_cast<int>(g)]; }

AgeGroup parse_age_group(std::string_view s) {
  for (int i = 0; i < kAgeGroupCount; ++i)
    if (kAgeLabels[i] == s) return static_cast<AgeGroup>(i);
  throw ValidationError("unknown age group \"" + std::string(s) + "\"");
}

std::optional<double> mean_amplitude_difference(std::span<const BeatAnnotation> beats, Wave x) {
  double sum = 0.0;
  int n = 0;
  for (const auto& b : beats) {
    if (!pair_valid(b, x, Wave::R)) continue;
    sum += amplitude_term(b, x);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::optional<double> mean_interval(std::span<const BeatAnnotation> beats, Wave x, Wave y) {
  if (static_cast<int>(x) > static_cast<int>(y))
    throw ConfigError(std::string("interval ") + wave_letter(x) + "-" + wave_letter(y) +
                      " is not in PQRST order");
  double sum = 0.0;
  int n = 0;
  for (const auto& b : beats) {
    if (!pair_valid(b, x, y)) continue;
    sum += interval_term(b, x, y);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

std::string FeatureDef::name() const {
  std::string s = kind == Kind::Amplitude ? "amp_" : "int_";
  s += wave_letter(x);
  s += wave_letter(y);
  return s;
}

std::optional<double> FeatureDef::compute(std::span<const BeatAnnotation> beats) const {
  return kind == Kind::Amplitude ? mean_amplitude_difference(beats, x) : mean_interval(beats, x, y);
}

std::vector<FeatureDef> feature_defs(bool all_pairs) {
  using K = FeatureDef::Kind;
  std::vector<FeatureDef> defs;
  for (const Wave x : {Wave::P, Wave::Q, Wave::S, Wave::T}) defs.push_back({K::Amplitude, x, Wave::R});
  if (all_pairs) {
    for (int i = 0; i < 5; ++i)
      for (int j = i + 1; j < 5; ++j)
        defs.push_back({K::Interval, static_cast<Wave>(i), static_cast<Wave>(j)});
  } else {
    defs.push_back({K::Interval, Wave::P, Wave::Q});
    defs.push_back({K::Interval, Wave::Q, Wave::R});
    defs.push_back({K::Interval, Wave::R, Wave::S});
    defs.push_back({K::Interval, Wave::S, Wave::T});
  }
  return defs;
}

std::vector<std::string> feature_names(bool all_pairs) {
  std::vector<std::string> names;
  for (const auto& d : feature_defs(all_pairs)) names.push_back(d.name());
  return names;
}

std::string format_feature_csv(const FeatureTable& t) {
  std::string out(kFeatureCsvPrefix);
  for (const auto& n : t.names) out += "," + n;
  out += '\n';
  for (const auto& r : t.rows) {
    out += r.participant_id;
    out += ',' + std::to_string(r.window_index);
    out += ',';
    out += to_string(r.gender);
    out += ',';
    out += to_string(r.age_group);
    for (const double v : r.values) out += ',' + text::format_double(v);
    out += '\n';
  }
  return out;
}

FeatureTable parse_feature_csv(std::string_view csv, const std::string& source) {
  auto lines = text::split(csv, '\n');
  while (!lines.empty() && text::trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source, 1, "empty feature table");

  const auto header = text::split(text::trim(lines[0]), ',');
  const auto prefix = text::split(kFeatureCsvPrefix, ',');
  if (header.size() <= prefix.size() ||
      !std::equal(prefix.begin(), prefix.end(), header.begin()))
    throw SchemaError(source + ": feature header must start with " + std::string(kFeatureCsvPrefix));

  FeatureTable t;
  for (std::size_t c = prefix.size(); c < header.size(); ++c) t.names.emplace_back(header[c]);

  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto f = text::split(text::trim(lines[li]), ',');
    if (f.size() != header.size())
      throw ParseError(source, li + 1, "expected " + std::to_string(header.size()) + " fields");
    FeatureRow r;
    r.participant_id = std::string(f[0]);
    long long w;
    if (!text::parse_int(f[1], w)) throw ParseError(source, li + 1, "bad window_index");
    r.window_index = static_cast<int>(w);
    try {
      r.gender = parse_gender(f[2]);
      r.age_group = parse_age_group(f[3]);
    } catch (const ValidationError& e) {
      throw ParseError(source, li + 1, e.what());
    }
    for (std::size_t c = prefix.size(); c < f.size(); ++c) {
      double v;
      if (!text::parse_double(f[c], v) || !std::isfinite(v))
        throw ParseError(source, li + 1, "bad feature value \"" + std::string(f[c]) + "\"");
      r.values.push_back(v);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

WindowedFeatures windowed_features(std::span<const BeatAnnotation> beats, double fs,
                                   std::size_t n_samples, double window_s,
                                   const ParticipantLabels& labels, bool all_pairs) {
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  const auto defs = feature_defs(all_pairs);
  const AgeGroup group = assign_age_group(labels.age);
  WindowedFeatures out;

  std::size_t cursor = 0;
  for (int k = 0; k < n_windows(n_samples, fs, window_s); ++k) {
    const std::size_t lo = window_start(k, fs, window_s);
    const std::size_t hi = window_start(k + 1, fs, window_s);
    while (cursor < beats.size() && beats[cursor].at(Wave::R) < lo) ++cursor;
    std::size_t end = cursor;
    while (end < beats.size() && beats[end].at(Wave::R) < hi) ++end;
    const auto in_window = beats.subspan(cursor, end - cursor);
    cursor = end;

    const auto complete = std::count_if(in_window.begin(), in_window.end(),
                                        [](const BeatAnnotation& b) { return b.complete(); });
    if (complete < kMinCompleteBeats) {
      ++out.drops.too_few_beats;
      continue;
    }
    FeatureRow row{labels.participant_id, k, labels.gender, group, {}};
    bool defined = true;
    for (const auto& d : defs) {
      const auto v = d.compute(in_window);
      if (!v) {
        defined = false;
        break;
      }
      row.values.push_back(*v);
    }
    if (!defined) {
      ++out.drops.undefined_feature;
      continue;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

StreamingFeatureExtractor::StreamingFeatureExtractor(double fs, double window_s,
                                                     ParticipantLabels labels, bool all_pairs)
    : fs_(fs), window_s_(window_s), labels_(std::move(labels)), defs_(feature_defs(all_pairs)) {
  if (!(window_s > 0.0)) throw ConfigError("window length must be positive");
  assign_age_group(labels_.age);
  sums_.assign(defs_.size(), 0.0);
  counts_.assign(defs_.size(), 0);
}

std::size_t StreamingFeatureExtractor::window_start(int k) const {
  return ecgreid::window_start(k, fs_, window_s_);
}

void StreamingFeatureExtractor::close_window(int k) {
  if (complete_ < kMinCompleteBeats) {
    dropped_.push_back({k, false});
  } else if (std::find(counts_.begin(), counts_.end(), 0) != counts_.end()) {
    dropped_.push_back({k, true});
  } else {
    FeatureRow row{labels_.participant_id, k, labels_.gender, assign_age_group(labels_.age), {}};
    for (std::size_t f = 0; f < defs_.size(); ++f) row.values.push_back(sums_[f] / counts_[f]);
    rows_.push_back(std::move(row));
  }
  std::fill(sums_.begin(), sums_.end(), 0.0);
  std::fill(counts_.begin(), counts_.end(), 0);
  complete_ = 0;
}

void StreamingFeatureExtractor::push(const BeatAnnotation& beat) {
  while (beat.at(Wave::R) >= window_start(current_ + 1)) close_window(current_++);
  if (beat.at(Wave::R) < window_start(current_)) throw InputError("beats must be pushed in R order");
  if (beat.complete()) ++complete_;
  for (std::size_t f = 0; f < defs_.size(); ++f) {
    if (!pair_valid(beat, defs_[f].x, defs_[f].y)) continue;
    sums_[f] += term(defs_[f], beat);
    ++counts_[f];
  }
}

WindowedFeatures StreamingFeatureExtractor::finish(std::size_t n_samples) {
  // Windows from `total` on are partial (or beyond the record) and are discarded.
  const int total = n_windows(n_samples, fs_, window_s_);
  while (current_ < total) close_window(current_++);
  WindowedFeatures out;
  for (auto& row : rows_)
    if (row.window_index < total) out.rows.push_back(std::move(row));
  for (const auto& [k, undefined] : dropped_) {
    if (k >= total) continue;
    ++(undefined ? out.drops.undefined_feature : out.drops.too_few_beats);
  }
  rows_.clear();
  dropped_.clear();
  return out;
}

}  // namespace ecgreid
